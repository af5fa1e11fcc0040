import numpy as np
import pytest

from cointlasso import Dataset, DgpSpec, ErrorKind, ErrorSpec, builtin_model, long_run_variance, read_csv, simulate, toeplitz_cov, write_csv
from cointlasso.dgp import AR_BURN_IN, MODEL_COEFS


def test_toeplitz_values():
    np.testing.assert_allclose(toeplitz_cov(3, 0.5), [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
    np.testing.assert_array_equal(toeplitz_cov(4, 0.0), np.eye(4))
    np.testing.assert_allclose(toeplitz_cov(2, 0.9), [[1, 0.9], [0.9, 1]])


@pytest.mark.parametrize("r", [-0.1, 1.0, 1.5])
def test_toeplitz_rejects_bad_r(r):
    with pytest.raises(ValueError):
        toeplitz_cov(3, r)


def test_toeplitz_positive_definite():
    for r in (0.0, 0.5, 0.9, 0.99):
        assert np.linalg.eigvalsh(toeplitz_cov(20, r)).min() > 0


def test_builtin_models():
    coefs = np.array(MODEL_COEFS)
    for m in range(1, 7):
        spec = builtin_model(m)
        n = 50 if m in (4, 5) else 15
        assert (spec.n1, spec.n2) == (n, n)
        np.testing.assert_array_equal(spec.beta0[:6], coefs)
        assert not any(spec.beta0[6:]) and not any(spec.gamma0[6:])
        assert spec.sigma_u == 1.5
    assert builtin_model(2).toeplitz_r == 0.9
    assert builtin_model(1).error.kind is ErrorKind.IID_GAUSSIAN
    assert builtin_model(3).error.phi == 0.6
    assert builtin_model(6).error.kind is ErrorKind.AR1_STUDENT_T
    assert builtin_model(6).error.student_df == 4
    with pytest.raises(ValueError):
        builtin_model(7)


def test_model5_correlation_blocks():
    cov = builtin_model(5).innovation_cov()
    # v_1 and v_2 share the Toeplitz group, as do v_15 and z_1
    assert cov[0, 1] == 0.5
    assert cov[14, 50] == 0.5
    # beyond the first 15 of each block everything is independent
    assert cov[15, 16] == 0.0
    assert cov[0, 15] == 0.0
    assert cov[65, 66] == 0.0
    assert np.linalg.eigvalsh(cov).min() > 0


def test_model4_full_toeplitz():
    cov = builtin_model(4).innovation_cov()
    np.testing.assert_allclose(cov, toeplitz_cov(100, 0.5))


def test_spec_validation():
    with pytest.raises(ValueError):
        DgpSpec(n1=2, n2=2, beta0=(1,), gamma0=(1, 1))
    with pytest.raises(ValueError):
        DgpSpec(n1=0, n2=2, beta0=(), gamma0=(1, 1))
    with pytest.raises(ValueError):
        DgpSpec(n1=1, n2=1, beta0=(1,), gamma0=(1,), toeplitz_r=1.0)
    with pytest.raises(ValueError):
        ErrorSpec(ErrorKind.AR1_GAUSSIAN, 1.0)
    with pytest.raises(ValueError):
        ErrorSpec(ErrorKind.AR1_STUDENT_T, 0.5, student_df=2)


def test_spec_roundtrip():
    for m in range(1, 7):
        spec = builtin_model(m)
        assert DgpSpec.from_dict(spec.to_dict()) == spec


def test_simulate_shapes_and_reproducibility():
    spec = builtin_model(1)
    a = simulate(spec, 100, 50, seed=7)
    b = simulate(spec, 100, 50, seed=7)
    c = simulate(spec, 100, 50, seed=8)
    assert a.y.shape == (100,) and a.x.shape == (100, 15) and a.z.shape == (100, 15)
    assert a.holdout.T == 50
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.holdout.x, b.holdout.x)
    assert not np.array_equal(a.y, c.y)


def test_simulate_structure():
    spec = builtin_model(1)
    d = simulate(spec, 80, 20, seed=3)
    # x is the cumulative sum of v from x0 = 0
    np.testing.assert_allclose(d.x, np.cumsum(d.v, axis=0))
    # the holdout continues the same random walk
    np.testing.assert_allclose(d.holdout.x[0], d.x[-1] + d.holdout.v[0])
    np.testing.assert_allclose(d.y, d.x @ np.array(spec.beta0) + d.z @ np.array(spec.gamma0) + d.u)


def test_zero_holdout_and_small_T():
    spec = builtin_model(1)
    assert simulate(spec, 30, 0, seed=1).holdout is None
    with pytest.raises(ValueError):
        simulate(spec, 16, 0, seed=1)
    simulate(spec, 17, 0, seed=1)


def test_null_model():
    spec = DgpSpec(n1=3, n2=3, beta0=(0, 0, 0), gamma0=(0, 0, 0), sigma_u=0.0)
    d = simulate(spec, 50, 10, seed=0)
    np.testing.assert_array_equal(d.y, 0.0)


def _ar_loop(e, phi):
    u, prev = np.empty_like(e), 0.0
    for t, et in enumerate(e):
        prev = phi * prev + et
        u[t] = prev
    return u


def test_ar_errors_match_recursion():
    spec = builtin_model(3)
    d = simulate(spec, 60, 0, seed=11)
    rng = np.random.default_rng(11)
    rng.standard_normal((60, 30))
    e = 1.5 * rng.standard_normal(60 + AR_BURN_IN)
    np.testing.assert_allclose(d.u, _ar_loop(e, 0.6)[AR_BURN_IN:], rtol=1e-12, atol=1e-12)


def test_ar1_autocorrelation():
    u = simulate(builtin_model(3), 10000, 0, seed=5).u
    r1 = np.corrcoef(u[1:], u[:-1])[0, 1]
    assert abs(r1 - 0.6) < 0.05
    short, _ = long_run_variance(builtin_model(3).error, 1.5)
    assert abs(u.var() / short - 1) < 0.1


def test_student_t_scaling():
    u = simulate(builtin_model(6), 20000, 0, seed=2).u
    short, _ = long_run_variance(builtin_model(6).error, 1.5)
    assert abs(u.var() / short - 1) < 0.1


def test_long_run_variance():
    assert long_run_variance(ErrorSpec(), 1.5) == pytest.approx((2.25, 2.25))
    s, l = long_run_variance(ErrorSpec(ErrorKind.AR1_GAUSSIAN, 0.6), 1.5)
    assert s == pytest.approx(2.25 / 0.64)
    assert l == pytest.approx(2.25 / 0.16)


def test_covariate_correlation():
    d = simulate(builtin_model(1), 20000, 0, seed=4)
    c = np.corrcoef(d.v[:, 0], d.v[:, 1])[0, 1]
    assert abs(c - 0.5) < 0.03
    c = np.corrcoef(d.z[:, 0], d.z[:, 2])[0, 1]
    assert abs(c - 0.25) < 0.03
    c = np.corrcoef(d.v[:, 14], d.z[:, 0])[0, 1]
    assert abs(c - 0.5) < 0.03


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.ones(5), np.ones((4, 1)), np.ones((5, 1)))
    with pytest.raises(ValueError):
        Dataset(np.array([1.0, np.nan, 1.0]), np.ones((3, 1)), np.ones((3, 1)))


def test_centered_partials_out_intercept():
    rng = np.random.default_rng(0)
    d = simulate(builtin_model(1), 60, 10, seed=1)
    shifted = Dataset(d.y + 3.0, d.x + rng.normal(size=15), d.z + 1.0,
                      holdout=Dataset(d.holdout.y + 3.0, d.holdout.x, d.holdout.z + 1.0))
    c = shifted.centered()
    np.testing.assert_allclose(c.y.mean(), 0, atol=1e-12)
    np.testing.assert_allclose(c.x.mean(axis=0), 0, atol=1e-10)
    np.testing.assert_allclose(c.holdout.y, d.holdout.y + 3.0 - shifted.y.mean())


def test_csv_roundtrip(tmp_path):
    d = simulate(builtin_model(1), 30, 5, seed=9)
    path = tmp_path / "d.csv"
    write_csv(d, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + 35
    assert lines[0].split(",")[:3] == ["y", "x1", "x2"]
    back = read_csv(path, holdout_rows=5)
    np.testing.assert_array_equal(back.y, d.y)
    np.testing.assert_array_equal(back.z, d.z)
    np.testing.assert_array_equal(back.holdout.x, d.holdout.x)
    whole = read_csv(path)
    assert whole.T == 35 and whole.holdout is None


def test_csv_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("y,x1,z1\n1,2,3\n2,nan,1\n3,4,5\n")
    with pytest.raises(ValueError, match=r"row 3, column 'x1'"):
        read_csv(p)
    p.write_text("y,x1,z1\n1,2,3\n2,abc,1\n3,4,5\n")
    with pytest.raises(ValueError, match=r"non-numeric.*row 3"):
        read_csv(p)
    p.write_text("y,a,b\n1,2,3\n2,3,1\n3,4,5\n")
    with pytest.raises(ValueError, match="declare the partition"):
        read_csv(p)
    d = read_csv(p, x_cols=["a"], z_cols=["b"])
    assert (d.n1, d.n2) == (1, 1)
    p.write_text("y,x1,z1\n1,2,3\n2,3,1\n")
    with pytest.raises(ValueError, match="more than 2"):
        read_csv(p)


def test_csv_segment_column(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("y,x1,z1,segment\n1,2,3,train\n2,3,1,train\n3,4,5,train\n4,5,6,holdout\n")
    d = read_csv(p)
    assert d.T == 3 and d.holdout.T == 1
