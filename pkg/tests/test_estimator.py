import numpy as np
import pytest
from scipy.linalg import qr

from cointlasso import (
    Dataset,
    PenaltyConfig,
    SingularSystemError,
    adaptive_lasso_fit,
    build_penalty_matrix,
    builtin_model,
    lqa_step,
    objective,
    ridge_fit,
    sandwich_cov,
    simulate,
)
from cointlasso.estimator import adaptive_weights, estimate_error_variances, response_scale, sandwich_block
from cointlasso.montecarlo import oracle_ols

from conftest import grid_minimizer, make_dataset


def _augmented_solve(w, y, diag):
    """Least squares on [W; sqrt(D)] against [y; 0], solved through a QR factorization."""
    a = np.vstack([w, np.diag(np.sqrt(diag))])
    b = np.concatenate([y, np.zeros(len(diag))])
    q, r = qr(a, mode="economic")
    return np.linalg.solve(r, q.T @ b)


def test_ridge_zero_is_ols(small_data):
    ols, *_ = np.linalg.lstsq(small_data.w, small_data.y, rcond=None)
    np.testing.assert_allclose(ridge_fit(small_data, 0.0), ols, rtol=1e-9, atol=1e-10)


def test_ridge_against_augmented_system():
    rng = np.random.default_rng(3)
    w = rng.standard_normal((5, 3))
    y = rng.standard_normal(5)
    d = Dataset(y, w[:, :1], w[:, 1:])
    np.testing.assert_allclose(ridge_fit(d, 1.0), _augmented_solve(w, y, np.ones(3)), atol=1e-10)


def test_ridge_singular_reports_condition():
    x = np.ones((6, 1))
    d = Dataset(np.arange(6.0), x, x)
    with pytest.raises(SingularSystemError) as exc:
        ridge_fit(d, 0.0)
    assert "condition" in str(exc.value)
    with pytest.raises(ValueError):
        ridge_fit(d, -1.0)


def test_penalty_matrix_values():
    np.testing.assert_allclose(build_penalty_matrix(np.zeros(4), np.ones(4), 2.0, 2.0, 1e-3), np.diag([2e3] * 4))
    e = build_penalty_matrix(np.array([2.0, 0.5]), np.array([1.0, 4.0]), 1.0, 1.0, 0.01)
    np.testing.assert_allclose(e, np.diag([1 / 2.01, 4 / 0.51]))
    assert np.abs(build_penalty_matrix(np.ones(2), np.ones(2), 1.0, 1.0, 1e12)).max() < 1e-11
    # block levels follow n1
    e = build_penalty_matrix(np.zeros(3), np.ones(3), 1.0, 5.0, 1.0, n1=1)
    np.testing.assert_allclose(np.diag(e), [1.0, 5.0, 5.0])
    with pytest.raises(ValueError):
        build_penalty_matrix(np.zeros(2), np.array([1.0, 0.0]), 1.0, 1.0, 1.0)


def test_lqa_step_oracles(small_data):
    ols, *_ = np.linalg.lstsq(small_data.w, small_data.y, rcond=None)
    np.testing.assert_allclose(lqa_step(small_data, np.zeros((4, 4))), ols, rtol=1e-9)
    np.testing.assert_allclose(lqa_step(small_data, 3.0 * np.eye(4)), ridge_fit(small_data, 3.0), rtol=1e-12)
    rng = np.random.default_rng(4)
    w = rng.standard_normal((6, 2))
    y = rng.standard_normal(6)
    d = Dataset(y, w[:, :1], w[:, 1:])
    np.testing.assert_allclose(lqa_step(d, np.diag([1.0, 10.0])), _augmented_solve(w, y, np.array([1.0, 10.0])),
                               atol=1e-10)


def test_adaptive_weights_floor_and_cap():
    w = adaptive_weights(np.array([0.0, 1e-12, 1.0, 4.0]), 0.9, 1e-6, 1e8)
    np.testing.assert_allclose(w, [1e-6 ** -0.9, 1e-6 ** -0.9, 1.0, 4.0 ** -0.9])
    assert adaptive_weights(np.zeros(1), 1.0, 1e-10, 1e8)[0] == 1e8


def test_objective_formula(small_data):
    theta = np.array([0.5, -1.0, 0.0, 2.0])
    wts = np.array([1.0, 2.0, 3.0, 4.0])
    r = small_data.y - small_data.w @ theta
    expect = r @ r + 3.0 * (0.5 + 2.0) + 7.0 * (0.0 + 8.0)
    assert objective(small_data, theta, 3.0, 7.0, wts) == pytest.approx(expect, rel=1e-14)


def test_sandwich_triple_product():
    rng = np.random.default_rng(5)
    design = rng.standard_normal((10, 2))
    g = design.T @ design
    a = np.linalg.inv(g + np.diag([1.0, 2.0]))
    np.testing.assert_allclose(sandwich_block(design, np.array([1.0, 2.0]), 1.0), a @ g @ a, atol=1e-10)
    # no penalty: classical OLS covariance
    np.testing.assert_allclose(sandwich_block(design, np.zeros(2), 2.5), 2.5 * np.linalg.inv(g), rtol=1e-10)
    assert sandwich_block(design[:, :0], np.zeros(0), 1.0).shape == (0, 0)


def test_sandwich_cov_blocks():
    d = simulate(builtin_model(1), 100, 0, seed=2)
    fit = adaptive_lasso_fit(d, PenaltyConfig(lambda1=10, lambda2=10), 1.0, sigma=(2.0, 3.0))
    cb, cg = sandwich_cov(d, fit, 2.0, 3.0)
    x1 = d.x[:, fit.active_beta]
    inner = np.linalg.inv(x1.T @ x1 + np.diag(0.5 * fit.penalty_diag[fit.active_beta]))
    np.testing.assert_allclose(cb, 3.0 * inner @ x1.T @ x1 @ inner, rtol=1e-8)
    z1 = d.z[:, fit.active_gamma]
    inner = np.linalg.inv(z1.T @ z1 + np.diag(0.5 * fit.penalty_diag[15 + fit.active_gamma]))
    np.testing.assert_allclose(cg, 2.0 * inner @ z1.T @ z1 @ inner, rtol=1e-8)
    se_b, se_g = fit.standard_errors()
    assert np.all(se_b[fit.beta_hat == 0] == 0) and np.all(se_g[fit.gamma_hat == 0] == 0)
    assert fit.sigma_used == (2.0, 3.0)


def test_zero_lambda_is_ols():
    d = make_dataset(T=100, n1=2, n2=2, seed=1)
    fit = adaptive_lasso_fit(d, PenaltyConfig(), 0.5)
    ols, *_ = np.linalg.lstsq(d.w, d.y, rcond=None)
    np.testing.assert_allclose(fit.theta_hat, ols, atol=1e-6)
    assert fit.converged


def test_huge_lambda_kills_everything():
    d = make_dataset(T=60, seed=2)
    fit = adaptive_lasso_fit(d, PenaltyConfig(lambda1=1e9, lambda2=1e9), 1.0)
    assert np.all(fit.theta_hat == 0)
    assert fit.active.size == 0
    assert fit.cov_beta.shape == (0, 0) and fit.cov_gamma.shape == (0, 0)


def test_zero_response_gives_zero_fit():
    d = make_dataset(T=50, seed=3)
    zero = Dataset(np.zeros(50), d.x, d.z)
    fit = adaptive_lasso_fit(zero, PenaltyConfig(lambda1=1.0, lambda2=1.0), 1.0)
    assert np.all(fit.theta_hat == 0)


def test_model1_fit_recovers_large_effects():
    d = simulate(builtin_model(1), 200, 0, seed=1)
    fit = adaptive_lasso_fit(d, PenaltyConfig(lambda1=0.1 * 200, lambda2=np.sqrt(200)), 1.0)
    assert fit.converged
    oracle, _ = oracle_ols(d, range(6), range(6))
    # integrated coefficients sit close to oracle OLS; stationary ones are looser
    np.testing.assert_allclose(fit.beta_hat[:6], oracle[:6], atol=0.05)
    np.testing.assert_allclose(fit.gamma_hat[:4], oracle[15:19], atol=0.2)
    assert np.all(fit.beta_hat[:4] != 0)


def _stationary_instance(seed):
    rng = np.random.default_rng(seed)
    T = 30
    z = rng.standard_normal((T, 2))
    z[:, 1] += 0.4 * z[:, 0]
    y = z @ np.array([1.5, 0.3 * (seed % 3)]) + rng.standard_normal(T)
    return Dataset(y, np.zeros((T, 0)), z)


def test_grid_search_oracle_small():
    d = _stationary_instance(0)
    weights = np.array([1.0, 2.0])
    cfg = PenaltyConfig(lambda2=8.0, iterate_weights=False, max_iter=5000, tol=1e-12)
    fit = adaptive_lasso_fit(d, cfg, 1.0, initial_weights=weights)
    # coarse search, then a fine one around it
    coarse = grid_minimizer(d, 8.0, weights, step=1e-2)
    fine = grid_minimizer(d, 8.0, weights, step=1e-3, lo=-0.05 + coarse.min(), hi=0.05 + coarse.max())
    assert fit.converged
    np.testing.assert_allclose(fit.theta_hat, fine, atol=2e-3)


def test_trace_descent():
    d = simulate(builtin_model(1), 100, 0, seed=4)
    fit = adaptive_lasso_fit(d, PenaltyConfig(lambda1=10, lambda2=10), 1.0, record_trace=True)
    for t in fit.trace:
        assert t["perturbed_after"] <= t["perturbed_before"] * (1 + 1e-8)


def test_nonconvergence_flagged():
    d = simulate(builtin_model(1), 100, 0, seed=4)
    fit = adaptive_lasso_fit(d, PenaltyConfig(lambda1=10, lambda2=10, max_iter=2), 1.0)
    assert not fit.converged and fit.iterations == 2
    assert np.all(np.isfinite(fit.theta_hat))


def test_config_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(lambda1=-1)
    with pytest.raises(ValueError):
        PenaltyConfig(rho=0.0)
    with pytest.raises(ValueError):
        PenaltyConfig(rho=1.5)
    PenaltyConfig(rho=1.0)
    with pytest.raises(ValueError):
        PenaltyConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        PenaltyConfig(weight_cap=np.inf)


def test_resolve_defaults():
    d = make_dataset(T=64, seed=1)
    cfg = PenaltyConfig().resolve(d)
    s = np.sqrt(np.mean(d.y**2))
    assert cfg.epsilon == pytest.approx(1e-6 * s)
    assert cfg.zero_threshold == pytest.approx(1e-4 * s / 8)
    assert response_scale(np.zeros(3)) == 1.0


def test_fit_json_roundtrip():
    import json

    d = simulate(builtin_model(1), 80, 0, seed=3)
    fit = adaptive_lasso_fit(d, PenaltyConfig(lambda1=8, lambda2=9), 1.0)
    out = json.loads(fit.to_json())
    assert out["lambda1"] == 8 and out["lambda2"] == 9 and out["rho"] == 0.9
    assert out["beta"] == fit.beta_hat.tolist()
    assert set(out) >= {"se_beta", "se_gamma", "iterations", "converged", "epsilon"}


def test_error_variance_plugin():
    rng = np.random.default_rng(0)
    e = rng.standard_normal(20000)
    u = np.zeros_like(e)
    for t in range(1, len(e)):
        u[t] = 0.5 * u[t - 1] + e[t]
    s, l = estimate_error_variances(u, 1)
    assert s == pytest.approx(1 / 0.75, rel=0.05)
    assert l == pytest.approx(4.0, rel=0.05)
    s0, l0 = estimate_error_variances(u, 0)
    assert s0 == l0
