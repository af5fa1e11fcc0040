"""Generalized cross-validation for the ridge start and the adaptive Lasso levels."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dgp import Dataset
from .estimator import (
    SingularSystemError,
    _solve_spd,
    adaptive_weights,
    block_levels,
    response_scale,
    ridge_fit,
)

TIE_RTOL = 1e-12


class OverParameterizedError(ValueError):
    """Effective number of parameters reached the sample size."""


@dataclass(frozen=True)
class GcvGrid:
    ridge_grid: tuple[float, ...]
    lambda1_grid: tuple[float, ...]
    lambda2_grid: tuple[float, ...]
    rho: float = 0.9
    weight_cap: float = 1e8

    def __post_init__(self):
        for name in ("ridge_grid", "lambda1_grid", "lambda2_grid"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise ValueError(f"{name} is empty")
            if any(v < 0 for v in vals) or (name == "ridge_grid" and any(v <= 0 for v in vals)):
                raise ValueError(f"{name} has invalid entries")
            if list(vals) != sorted(vals):
                raise ValueError(f"{name} must be ascending")

    @classmethod
    def default(cls, T: int, w_scale: float | None = None, rho: float = 0.9,
                n_ridge: int = 30, n_lambda: int = 11) -> "GcvGrid":
        """Log-spaced grids; the lambda1 grid scales with T, the lambda2 grid with sqrt(T).

        ``w_scale`` is the mean squared column norm of W (``T`` if unknown).
        """
        scale = float(w_scale if w_scale is not None else T)
        c = np.logspace(-3, 2, n_lambda)
        return cls(
            ridge_grid=tuple(np.logspace(-4, 4, n_ridge) * scale),
            lambda1_grid=tuple(c * T),
            lambda2_grid=tuple(c * np.sqrt(T)),
            rho=rho,
        )

    @classmethod
    def for_dataset(cls, dataset: Dataset, **kwargs) -> "GcvGrid":
        w = dataset.w
        return cls.default(dataset.T, float(np.mean(np.sum(w * w, axis=0))), **kwargs)


def _gcv(resid: np.ndarray, eff: float, T: int) -> float:
    if eff >= T:
        raise OverParameterizedError(f"effective parameters {eff:.3f} >= T = {T}")
    return float(resid @ resid) / T / (1.0 - eff / T) ** 2


def effective_params_ridge(dataset: Dataset, lambda_star: float) -> float:
    """Trace of the ridge hat matrix ``W (W'W + lambda I)^-1 W'``."""
    w = dataset.w
    gram = w.T @ w
    return float(np.trace(_solve_spd(gram + lambda_star * np.eye(dataset.n), gram)))


def gcv_ridge(dataset: Dataset, lambda_star: float) -> float:
    theta = ridge_fit(dataset, lambda_star)
    resid = dataset.y - dataset.w @ theta
    return _gcv(resid, effective_params_ridge(dataset, lambda_star), dataset.T)


def _argmin_prefer_large(values: np.ndarray, sizes: np.ndarray) -> int:
    """Index of the minimum finite value; near-ties go to the largest ``sizes``."""
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    if not finite.any():
        raise ValueError("no feasible grid point: every candidate is over-parameterized or singular")
    best = values[finite].min()
    tied = np.flatnonzero(finite & (values <= best + TIE_RTOL * abs(best)))
    return int(tied[np.argmax(np.asarray(sizes)[tied])])


def ridge_gcv_curve(dataset: Dataset, ridge_grid) -> np.ndarray:
    out = np.full(len(ridge_grid), np.nan)
    for i, lam in enumerate(ridge_grid):
        try:
            out[i] = gcv_ridge(dataset, lam)
        except (OverParameterizedError, SingularSystemError):
            pass
    return out


def select_ridge(dataset: Dataset, grid: GcvGrid) -> float:
    """GCV-minimizing ridge level; ties go to the larger level."""
    curve = ridge_gcv_curve(dataset, grid.ridge_grid)
    return grid.ridge_grid[_argmin_prefer_large(curve, np.array(grid.ridge_grid))]


class _PenalizedSystem:
    """Cached pieces for evaluating the one-shot penalized fit on a grid."""

    def __init__(self, dataset: Dataset, theta0: np.ndarray, rho: float, epsilon: float,
                 weight_cap: float = 1e8):
        self.dataset = dataset
        self.w = dataset.w
        self.gram = self.w.T @ self.w
        self.wty = self.w.T @ dataset.y
        weights = adaptive_weights(theta0, rho, epsilon, weight_cap)
        # per-unit-lambda diagonal of E
        self.base = weights / (np.abs(theta0) + epsilon)
        self.n1, self.n2 = dataset.n1, dataset.n2

    def evaluate(self, lambda1: float, lambda2: float) -> tuple[float, float]:
        e_diag = block_levels(self.n1, self.n2, lambda1, lambda2) * self.base
        a = self.gram + np.diag(0.5 * e_diag)
        theta = _solve_spd(a, self.wty)
        eff = float(np.trace(_solve_spd(a, self.gram)))
        resid = self.dataset.y - self.w @ theta
        return _gcv(resid, eff, self.dataset.T), eff


def gcv_adalasso(
    dataset: Dataset,
    theta0: np.ndarray,
    lambda1: float,
    lambda2: float,
    rho: float,
    epsilon: float,
    weight_cap: float = 1e8,
) -> float:
    """One-shot GCV at ``(lambda1, lambda2)`` with weights from the ridge start ``theta0``."""
    return _PenalizedSystem(dataset, theta0, rho, epsilon, weight_cap).evaluate(lambda1, lambda2)[0]


@dataclass
class GcvSurface:
    lambda1_grid: np.ndarray
    lambda2_grid: np.ndarray
    gcv: np.ndarray
    effective_params: np.ndarray
    best: tuple[int, int]
    T: int
    lambda_ridge: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def lambda1(self) -> float:
        return float(self.lambda1_grid[self.best[0]])

    @property
    def lambda2(self) -> float:
        return float(self.lambda2_grid[self.best[1]])

    def rate_diagnostics(self) -> dict:
        """Chosen levels relative to the rates lambda1 ~ T and lambda2 ~ sqrt(T)."""
        return {"lambda1_over_T": self.lambda1 / self.T,
                "lambda2_over_sqrtT": self.lambda2 / np.sqrt(self.T)}

    def rows(self) -> list[tuple[float, float, float, float]]:
        out = []
        for i, l1 in enumerate(self.lambda1_grid):
            for j, l2 in enumerate(self.lambda2_grid):
                out.append((float(l1), float(l2), float(self.gcv[i, j]), float(self.effective_params[i, j])))
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lambda1", "lambda2", "gcv", "effective_params"])
            for row in self.rows():
                writer.writerow([repr(v) for v in row])


def gcv_surface(dataset: Dataset, theta0: np.ndarray, grid: GcvGrid, epsilon: float) -> GcvSurface:
    system = _PenalizedSystem(dataset, theta0, grid.rho, epsilon, grid.weight_cap)
    l1 = np.array(grid.lambda1_grid)
    l2 = np.array(grid.lambda2_grid)
    gcv = np.full((len(l1), len(l2)), np.nan)
    eff = np.full_like(gcv, np.nan)
    for i, a in enumerate(l1):
        for j, b in enumerate(l2):
            try:
                gcv[i, j], eff[i, j] = system.evaluate(a, b)
            except (OverParameterizedError, SingularSystemError):
                pass
    flat = _argmin_prefer_large(gcv.ravel(), (l1[:, None] + l2[None, :]).ravel())
    return GcvSurface(l1, l2, gcv, eff, tuple(int(k) for k in np.unravel_index(flat, gcv.shape)),
                      dataset.T)


def select_lambdas(
    dataset: Dataset, grid: GcvGrid, theta0: np.ndarray, epsilon: float
) -> tuple[float, float, GcvSurface]:
    """Exhaustive 2-D GCV search; ties go to the larger ``lambda1 + lambda2``."""
    surface = gcv_surface(dataset, theta0, grid, epsilon)
    return surface.lambda1, surface.lambda2, surface


def tune(dataset: Dataset, grid: GcvGrid, epsilon: float | None = None) -> GcvSurface:
    """Ridge level first, then the penalty levels given the ridge start."""
    if epsilon is None:
        epsilon = 1e-6 * response_scale(dataset.y)
    lam_ridge = select_ridge(dataset, grid)
    theta0 = ridge_fit(dataset, lam_ridge)
    surface = gcv_surface(dataset, theta0, grid, epsilon)
    surface.lambda_ridge = lam_ridge
    return surface
