"""Adaptive Lasso for cointegrating regressions, fitted by perturbed LQA.

The objective is

    ||Y - X beta - Z gamma||^2 + lambda1 * sum_j w1_j |beta_j| + lambda2 * sum_j w2_j |gamma_j|

with adaptive weights ``w = |theta|^-rho`` recomputed from the previous
iterate. Each step replaces ``|theta_j|`` by the quadratic
``theta_j^2 / (2 (|theta_j^(k)| + eps))`` and solves a ridge-type system.
With ``E_k = diag(lambda_block * w_j / (|theta_j^(k)| + eps))`` the exact
minimizer of that surrogate is ``(W'W + E_k / 2)^-1 W'Y``; the factor 1/2
comes from the unscaled squared-error loss above.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lapack

from .dgp import Dataset, long_run_variance

RCOND_MIN = 1e-14


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, message: str, rcond: float = 0.0):
        super().__init__(f"{message} (reciprocal condition estimate {rcond:.3e})")
        self.rcond = rcond


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty levels and LQA controls.

    ``epsilon`` and ``zero_threshold`` default to data-scaled values (see
    :meth:`resolve`). ``iterate_weights=False`` keeps the initial weights
    fixed, which turns the fit into a plain weighted Lasso.
    """

    lambda1: float = 0.0
    lambda2: float = 0.0
    rho: float = 0.9
    epsilon: float | None = None
    max_iter: int = 500
    tol: float = 1e-8
    zero_threshold: float | None = None
    weight_cap: float = 1e8
    iterate_weights: bool = True

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("penalty levels must be non-negative")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.zero_threshold is not None and self.zero_threshold <= 0:
            raise ValueError("zero_threshold must be positive")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")
        if not 0 < self.weight_cap < np.inf:
            raise ValueError("weight_cap must be positive and finite")

    def resolve(self, dataset: Dataset) -> "PenaltyConfig":
        """Fill data-scaled defaults: eps = 1e-6 s, threshold = 1e-4 s / sqrt(T), s = rms(Y)."""
        scale = response_scale(dataset.y)
        eps = self.epsilon if self.epsilon is not None else 1e-6 * scale
        thr = self.zero_threshold if self.zero_threshold is not None else 1e-4 * scale / np.sqrt(dataset.T)
        return replace(self, epsilon=float(eps), zero_threshold=float(thr))


@dataclass
class FitResult:
    beta_hat: np.ndarray
    gamma_hat: np.ndarray
    active_beta: np.ndarray
    active_gamma: np.ndarray
    iterations: int
    converged: bool
    weights_final: np.ndarray
    penalty_diag: np.ndarray
    config: PenaltyConfig
    lambda_ridge: float
    theta_raw: np.ndarray
    cov_beta: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    cov_gamma: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    sigma_used: tuple[float, float] = (np.nan, np.nan)
    trace: list[dict] = field(default_factory=list)

    @property
    def theta_hat(self) -> np.ndarray:
        return np.concatenate([self.beta_hat, self.gamma_hat])

    @property
    def n1(self) -> int:
        return self.beta_hat.shape[0]

    @property
    def active(self) -> np.ndarray:
        return np.concatenate([self.active_beta, self.n1 + self.active_gamma])

    def standard_errors(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coefficient standard errors; zero for coefficients set to zero."""
        se_b = np.zeros_like(self.beta_hat)
        se_g = np.zeros_like(self.gamma_hat)
        se_b[self.active_beta] = np.sqrt(np.clip(np.diag(self.cov_beta), 0, None))
        se_g[self.active_gamma] = np.sqrt(np.clip(np.diag(self.cov_gamma), 0, None))
        return se_b, se_g

    def to_dict(self) -> dict:
        se_b, se_g = self.standard_errors()
        return {
            "beta": self.beta_hat.tolist(),
            "gamma": self.gamma_hat.tolist(),
            "se_beta": se_b.tolist(),
            "se_gamma": se_g.tolist(),
            "active_beta": self.active_beta.tolist(),
            "active_gamma": self.active_gamma.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "lambda1": self.config.lambda1,
            "lambda2": self.config.lambda2,
            "lambda_ridge": self.lambda_ridge,
            "rho": self.config.rho,
            "epsilon": self.config.epsilon,
            "zero_threshold": self.config.zero_threshold,
            "sigma_uu": self.sigma_used[0],
            "sigma_uu_star": self.sigma_used[1],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def response_scale(y: np.ndarray) -> float:
    s = float(np.sqrt(np.mean(np.square(y)))) if len(y) else 0.0
    return s if s > 0 else 1.0


def _solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive definite ``a`` with Jacobi scaling.

    The scaling keeps huge penalty entries on dead coordinates from wrecking
    the factorization.
    """
    d = np.sqrt(np.diag(a))
    if a.size == 0:
        return np.zeros_like(b)
    if not np.all(d > 0) or not np.all(np.isfinite(d)):
        raise SingularSystemError("system matrix has a non-positive diagonal", 0.0)
    s = a / d[:, None] / d[None, :]
    c, info = lapack.dpotrf(s, lower=0, clean=1, overwrite_a=0)
    if info != 0:
        raise SingularSystemError("system matrix is not positive definite", 0.0)
    rcond, _ = lapack.dpocon(c, np.abs(s).sum(axis=0).max())
    if rcond < RCOND_MIN:
        raise SingularSystemError("system matrix is numerically singular", rcond)
    rhs = b / (d if b.ndim == 1 else d[:, None])
    x, info = lapack.dpotrs(c, rhs, lower=0)
    return x / (d if b.ndim == 1 else d[:, None])


def ridge_fit(dataset: Dataset, lambda_ridge: float) -> np.ndarray:
    """Ridge initializer ``(W'W + lambda I)^-1 W'Y``."""
    if lambda_ridge < 0:
        raise ValueError("lambda_ridge must be non-negative")
    w = dataset.w
    gram = w.T @ w
    return _solve_spd(gram + lambda_ridge * np.eye(dataset.n), w.T @ dataset.y)


def block_levels(n1: int, n2: int, lambda1: float, lambda2: float) -> np.ndarray:
    return np.concatenate([np.full(n1, float(lambda1)), np.full(n2, float(lambda2))])


def adaptive_weights(theta: np.ndarray, rho: float, epsilon: float, weight_cap: float) -> np.ndarray:
    """``|theta|^-rho`` with magnitudes floored at ``epsilon`` and the result capped."""
    return np.minimum(np.maximum(np.abs(theta), epsilon) ** (-rho), weight_cap)


def build_penalty_matrix(
    theta_k: np.ndarray,
    weights: np.ndarray,
    lambda1: float,
    lambda2: float,
    epsilon: float,
    n1: int | None = None,
) -> np.ndarray:
    """Diagonal of ``E_k``: ``lambda_block * w_j / (|theta_j| + eps)``.

    The first ``n1`` entries use ``lambda1``; ``n1`` defaults to half the
    length, so pass it explicitly for unbalanced blocks.
    """
    theta_k = np.asarray(theta_k, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be strictly positive and finite")
    n = theta_k.shape[0]
    if n1 is None:
        n1 = n // 2
    levels = block_levels(n1, n - n1, lambda1, lambda2)
    return np.diag(levels * weights / (np.abs(theta_k) + epsilon))


def lqa_step(dataset: Dataset, e_k: np.ndarray) -> np.ndarray:
    """Solve ``(W'W + E_k)^-1 W'Y`` for a diagonal ``E_k`` (matrix or its diagonal)."""
    e_k = np.asarray(e_k, dtype=float)
    diag = np.diag(e_k) if e_k.ndim == 2 else e_k
    w = dataset.w
    return _solve_spd(w.T @ w + np.diag(diag), w.T @ dataset.y)


def objective(
    dataset: Dataset,
    theta: np.ndarray,
    lambda1: float,
    lambda2: float,
    weights: np.ndarray,
    epsilon: float = 0.0,
) -> float:
    """Penalized least squares objective.

    With ``epsilon > 0`` each ``|t|`` is replaced by ``|t| - eps log(1 + |t|/eps)``,
    the perturbed penalty whose quadratic majorizer is the LQA surrogate.
    """
    resid = dataset.y - dataset.w @ theta
    a = np.abs(theta)
    if epsilon > 0:
        a = a - epsilon * np.log1p(a / epsilon)
    levels = block_levels(dataset.n1, dataset.n2, lambda1, lambda2)
    return float(resid @ resid + np.sum(levels * weights * a))


def sandwich_block(design: np.ndarray, penalty: np.ndarray, sigma: float) -> np.ndarray:
    """``sigma (D'D + P)^-1 D'D (D'D + P)^-1`` for a diagonal ``P`` given by its diagonal."""
    if design.shape[1] == 0:
        return np.zeros((0, 0))
    gram = design.T @ design
    inv = np.linalg.inv(gram + np.diag(penalty))
    cov = sigma * inv @ gram @ inv
    return 0.5 * (cov + cov.T)


def sandwich_cov(
    dataset: Dataset, fit: FitResult, sigma_uu: float, sigma_uu_star: float
) -> tuple[np.ndarray, np.ndarray]:
    """Sandwich covariances of the active integrated and stationary coefficients.

    The integrated block is scaled by the long-run variance ``sigma_uu_star``
    and the stationary block by the short-run variance ``sigma_uu``.
    """
    half_e = 0.5 * fit.penalty_diag
    n1 = dataset.n1
    cov_b = sandwich_block(dataset.x[:, fit.active_beta], half_e[fit.active_beta], sigma_uu_star)
    cov_g = sandwich_block(dataset.z[:, fit.active_gamma], half_e[n1 + fit.active_gamma], sigma_uu)
    return cov_b, cov_g


def estimate_error_variances(resid: np.ndarray, ar_order: int = 1) -> tuple[float, float]:
    """Plug-in ``(sigma_uu, sigma_uu_star)`` from residuals via an AR(p) fit."""
    resid = np.asarray(resid, dtype=float)
    sigma_uu = float(np.mean(resid**2))
    if ar_order <= 0 or len(resid) <= 2 * ar_order + 2:
        return sigma_uu, sigma_uu
    p = ar_order
    lags = np.column_stack([resid[p - k - 1 : len(resid) - k - 1] for k in range(p)])
    target = resid[p:]
    phi, *_ = np.linalg.lstsq(lags, target, rcond=None)
    innov = target - lags @ phi
    s2 = float(innov @ innov / (len(target) - p))
    denom = 1.0 - float(np.sum(phi))
    if abs(denom) < 1e-3:
        denom = np.sign(denom or 1.0) * 1e-3
    return sigma_uu, s2 / denom**2


def default_sigma(dataset: Dataset, lambda_ridge: float, ar_order: int = 1) -> tuple[float, float]:
    """Known-DGP variances when available, otherwise a residual plug-in from the full model."""
    if dataset.truth is not None:
        return long_run_variance(dataset.truth.error, dataset.truth.sigma_u)
    if dataset.T > dataset.n + 5:
        theta, *_ = np.linalg.lstsq(dataset.w, dataset.y, rcond=None)
    else:
        theta = ridge_fit(dataset, max(lambda_ridge, 1e-8))
    return estimate_error_variances(dataset.y - dataset.w @ theta, ar_order)


def adaptive_lasso_fit(
    dataset: Dataset,
    config: PenaltyConfig,
    lambda_ridge: float,
    sigma: tuple[float, float] | None = None,
    initial_weights: np.ndarray | None = None,
    record_trace: bool = False,
) -> FitResult:
    """Iterated adaptive Lasso from a ridge start.

    ``sigma`` is ``(sigma_uu, sigma_uu_star)`` for the sandwich; by default it
    comes from :func:`default_sigma`. ``initial_weights`` replaces the
    ridge-based weights of the first step. Non-convergence is reported via
    ``converged=False``, not raised.
    """
    cfg = config.resolve(dataset)
    eps = cfg.epsilon
    w_mat = dataset.w
    gram = w_mat.T @ w_mat
    wty = w_mat.T @ dataset.y
    levels = block_levels(dataset.n1, dataset.n2, cfg.lambda1, cfg.lambda2)

    theta = _solve_spd(gram + lambda_ridge * np.eye(dataset.n), wty) if dataset.n else np.zeros(0)
    if initial_weights is not None:
        weights = np.asarray(initial_weights, dtype=float)
        if weights.shape != theta.shape or np.any(weights <= 0):
            raise ValueError("initial_weights must be positive with one entry per coefficient")
    else:
        weights = adaptive_weights(theta, cfg.rho, eps, cfg.weight_cap)

    trace = []
    converged = False
    iterations = 0
    prev = theta
    for iterations in range(1, cfg.max_iter + 1):
        if cfg.iterate_weights and iterations > 1:
            weights = adaptive_weights(prev, cfg.rho, eps, cfg.weight_cap)
        e_diag = levels * weights / (np.abs(theta) + eps)
        new = _solve_spd(gram + np.diag(0.5 * e_diag), wty)
        if record_trace:
            trace.append({
                "iteration": iterations,
                "objective_before": objective(dataset, theta, cfg.lambda1, cfg.lambda2, weights),
                "objective_after": objective(dataset, new, cfg.lambda1, cfg.lambda2, weights),
                "perturbed_before": objective(dataset, theta, cfg.lambda1, cfg.lambda2, weights, eps),
                "perturbed_after": objective(dataset, new, cfg.lambda1, cfg.lambda2, weights, eps),
            })
        change = float(np.max(np.abs(new - theta))) if new.size else 0.0
        prev, theta = theta, new
        if change < cfg.tol:
            converged = True
            break

    theta_raw = theta.copy()
    final = np.where(np.abs(theta) < cfg.zero_threshold, 0.0, theta)
    act = np.flatnonzero(final)
    if act.size and act.size < final.size:
        # dropping the dead coordinates moves the residual; re-solve the
        # surrogate on the surviving columns with the final weights
        g_act, b_act = gram[np.ix_(act, act)], wty[act]
        for _ in range(cfg.max_iter):
            e_act = levels[act] * weights[act] / (np.abs(final[act]) + eps)
            upd = _solve_spd(g_act + np.diag(0.5 * e_act), b_act)
            step = float(np.max(np.abs(upd - final[act])))
            final[act] = upd
            if step < cfg.tol:
                break
    e_final = levels * weights / (np.abs(np.where(final != 0, final, theta_raw)) + eps)
    n1 = dataset.n1
    fit = FitResult(
        beta_hat=final[:n1],
        gamma_hat=final[n1:],
        active_beta=np.flatnonzero(final[:n1]),
        active_gamma=np.flatnonzero(final[n1:]),
        iterations=iterations,
        converged=converged,
        weights_final=weights,
        penalty_diag=e_final,
        config=cfg,
        lambda_ridge=float(lambda_ridge),
        theta_raw=theta_raw,
        trace=trace,
    )
    if sigma is None:
        sigma = default_sigma(dataset, lambda_ridge)
    fit.sigma_used = (float(sigma[0]), float(sigma[1]))
    fit.cov_beta, fit.cov_gamma = sandwich_cov(dataset, fit, *fit.sigma_used)
    return fit
