"""Theoretical quantities behind selection consistency, computed on a sample.

Integrated and stationary coordinates are normalized differently: the
scaling ``Gamma^{1/2}`` is ``T`` on integrated columns and ``sqrt(T)`` on
stationary ones, so ``Omega = Gamma^{-1/2} W'W Gamma^{-1/2}`` is O(1) in
both blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dgp import Dataset
from .estimator import FitResult, PenaltyConfig, block_levels


@dataclass
class TheoryContext:
    active_beta: np.ndarray
    active_gamma: np.ndarray
    inactive_beta: np.ndarray
    inactive_gamma: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    gamma1_half: np.ndarray
    gamma2_half: np.ndarray
    omega11: np.ndarray
    omega12: np.ndarray
    omega21: np.ndarray
    omega22: np.ndarray

    @property
    def q1(self) -> int:
        return len(self.active_beta)

    @property
    def q2(self) -> int:
        return len(self.active_gamma)

    @property
    def gamma_half(self) -> np.ndarray:
        """Diagonal of ``Gamma^{1/2}`` in (active, inactive) order."""
        return np.concatenate([self.gamma1_half, self.gamma2_half])

    @cached_property
    def m1(self) -> np.ndarray:
        """Annihilator ``I - W(1) (W(1)'W(1))^-1 W(1)'`` (T x T)."""
        T = self.w1.shape[0]
        if self.w1.shape[1] == 0:
            return np.eye(T)
        q, _ = np.linalg.qr(self.w1)
        return np.eye(T) - q @ q.T

    def annihilate(self, v: np.ndarray) -> np.ndarray:
        """``M(1) v`` without forming the T x T matrix."""
        if self.w1.shape[1] == 0:
            return v
        coef, *_ = np.linalg.lstsq(self.w1, v, rcond=None)
        return v - self.w1 @ coef

    def omega(self) -> np.ndarray:
        return np.block([[self.omega11, self.omega12], [self.omega21, self.omega22]])


def _normalizers(n_int: int, n_stat: int, T: int) -> np.ndarray:
    return np.concatenate([np.full(n_int, float(T)), np.full(n_stat, np.sqrt(T))])


def build_context(dataset: Dataset, active_beta, active_gamma) -> TheoryContext:
    """Partition W into active/inactive columns and form the normalized Gram blocks."""
    ab = np.asarray(active_beta, dtype=int).reshape(-1)
    ag = np.asarray(active_gamma, dtype=int).reshape(-1)
    if len(ab) + len(ag) == 0:
        raise ValueError("active set is empty")
    ib = np.setdiff1d(np.arange(dataset.n1), ab)
    ig = np.setdiff1d(np.arange(dataset.n2), ag)
    T = dataset.T
    w1 = np.hstack([dataset.x[:, ab], dataset.z[:, ag]])
    w2 = np.hstack([dataset.x[:, ib], dataset.z[:, ig]])
    g1 = _normalizers(len(ab), len(ag), T)
    g2 = _normalizers(len(ib), len(ig), T)
    gram11 = w1.T @ w1
    if np.linalg.matrix_rank(gram11) < w1.shape[1]:
        raise np.linalg.LinAlgError("W(1)'W(1) is singular")
    omega11 = gram11 / np.outer(g1, g1)
    omega21 = (w2.T @ w1) / np.outer(g2, g1)
    omega22 = (w2.T @ w2) / np.outer(g2, g2)
    return TheoryContext(ab, ag, ib, ig, w1, w2, g1, g2, omega11, omega21.T, omega21, omega22)


def sign_match(theta_hat, theta0) -> bool:
    """True iff every sign agrees, zeros included."""
    a, b = np.asarray(theta_hat), np.asarray(theta0)
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    return bool(np.array_equal(np.sign(a), np.sign(b)))


def irrepresentable_stat(context: TheoryContext, sign_vector) -> tuple[np.ndarray, float]:
    """``|Omega21 Omega11^-1 sgn|`` and the margin ``1 - max`` (positive when the condition holds)."""
    s = np.asarray(sign_vector, dtype=float)
    values = np.abs(context.omega21 @ np.linalg.solve(context.omega11, s))
    margin = 1.0 - float(values.max()) if values.size else 1.0
    return values, margin


@dataclass
class KktReport:
    gradient: np.ndarray
    bound: np.ndarray
    residual: np.ndarray
    allowance: np.ndarray
    active: np.ndarray
    ok: np.ndarray
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.ok.all())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "active": self.active.tolist(),
            "residual": self.residual.tolist(),
            "allowance": self.allowance.tolist(),
            "failing": np.flatnonzero(~self.ok).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def check_kkt(dataset: Dataset, fit: FitResult, config: PenaltyConfig | None = None,
              tol: float | None = None) -> KktReport:
    """Verify the optimality conditions of the weighted Lasso at the fitted point.

    With ``g_j = 2 W_j'(Y - W theta)``: active coordinates need
    ``g_j = sgn(theta_j) lambda w_j``, zero coordinates ``|g_j| <= lambda w_j``.
    The allowance is ``tol * 2 ||W_j|| ||Y||`` plus, on active coordinates,
    the gap ``lambda w_j eps / (|theta_j| + eps)`` left by the eps-perturbation.
    Violations are reported, never raised.
    """
    cfg = (config or fit.config).resolve(dataset)
    if tol is None:
        tol = 100.0 * cfg.tol
    theta = fit.theta_hat
    w = dataset.w
    grad = 2.0 * w.T @ (dataset.y - w @ theta)
    bound = block_levels(dataset.n1, dataset.n2, cfg.lambda1, cfg.lambda2) * fit.weights_final
    active = theta != 0
    scale = 2.0 * np.linalg.norm(w, axis=0) * np.linalg.norm(dataset.y)
    residual = np.where(active, np.abs(grad - np.sign(theta) * bound),
                        np.maximum(np.abs(grad) - bound, 0.0))
    allowance = tol * scale + np.where(active, bound * cfg.epsilon / (np.abs(theta) + cfg.epsilon), 0.0)
    return KktReport(grad, bound, residual, allowance, np.flatnonzero(active),
                     residual <= allowance, float(tol))


def event_indicators(
    dataset: Dataset,
    context: TheoryContext,
    config: PenaltyConfig,
    fit_weights: np.ndarray,
    u: np.ndarray | None = None,
    theta0: np.ndarray | None = None,
) -> tuple[bool, bool]:
    """Whether the two sufficient events for sign recovery hold on this sample.

    Event A bounds the noise in the active-block estimate below the true
    magnitudes net of the shrinkage bias; event B bounds the correlation of
    inactive columns with the projected noise below their penalty net of the
    leakage through the active block. ``u`` (the true errors) and
    ``theta0`` default to the simulation truth carried by ``dataset``.
    """
    if u is None:
        u = dataset.u
    if u is None:
        raise ValueError("true errors are unavailable; event indicators need simulated data")
    if theta0 is None:
        if dataset.truth is None:
            raise ValueError("true coefficients are unavailable")
        theta0 = dataset.truth.theta0
    n1 = dataset.n1
    theta0 = np.asarray(theta0, dtype=float)
    weights = np.asarray(fit_weights, dtype=float)
    idx1 = np.concatenate([context.active_beta, n1 + context.active_gamma])
    idx2 = np.concatenate([context.inactive_beta, n1 + context.inactive_gamma])
    lam = block_levels(n1, dataset.n2, config.lambda1, config.lambda2)

    th1 = theta0[idx1]
    sgn1 = np.sign(th1)
    g1, g2 = context.gamma1_half, context.gamma2_half
    bias = lam[idx1] * weights[idx1] * sgn1 / g1

    noise = np.abs(np.linalg.solve(context.omega11, context.w1.T @ u / g1))
    shrink = np.abs(np.linalg.solve(context.omega11, bias))
    a_holds = bool(np.all(noise < g1 * np.abs(th1) - 0.5 * shrink))

    if idx2.size == 0:
        return a_holds, True
    proj = 2.0 * np.abs(context.w2.T @ context.annihilate(u)) / g2
    leak = np.abs(context.omega21 @ np.linalg.solve(context.omega11, bias))
    b_holds = bool(np.all(proj < lam[idx2] * weights[idx2] / g2 - leak))
    return a_holds, b_holds
