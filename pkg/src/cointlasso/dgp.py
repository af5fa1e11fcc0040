"""Synthetic data for regressions on mixed integrated and stationary covariates.

The response follows ``y_t = alpha + beta' x_t + gamma' z_t + u_t`` where
``x_t = x_{t-1} + v_t`` is a vector random walk and ``z_t`` is stationary.
The innovations ``(v_t, z_t)`` are jointly Gaussian with a Toeplitz
correlation block; ``u_t`` is independent of both.

The six built-in designs reproduce the Monte Carlo models used to study
selection, estimation and forecasting accuracy of the adaptive Lasso.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

AR_BURN_IN = 200
HOLDOUT_LEN = 50
MODEL_COEFS = (2.5, 2.5, 1.5, 1.5, 0.5, 0.5)


class ErrorKind(str, Enum):
    IID_GAUSSIAN = "iid_gaussian"
    AR1_GAUSSIAN = "ar1_gaussian"
    AR1_STUDENT_T = "ar1_student_t"


@dataclass(frozen=True)
class ErrorSpec:
    """Law of the regression error ``u_t``.

    ``ar_coefficient`` is ignored for iid errors. Student-t innovations are
    rescaled so that their standard deviation equals the DGP's ``sigma_u``.
    """

    kind: ErrorKind = ErrorKind.IID_GAUSSIAN
    ar_coefficient: float = 0.0
    student_df: int = 4

    def __post_init__(self):
        object.__setattr__(self, "kind", ErrorKind(self.kind))
        if self.kind is not ErrorKind.IID_GAUSSIAN and not -1.0 < self.ar_coefficient < 1.0:
            raise ValueError(f"AR coefficient must lie in (-1, 1), got {self.ar_coefficient}")
        if self.kind is ErrorKind.AR1_STUDENT_T and self.student_df <= 2:
            raise ValueError(f"student_df must exceed 2 for a finite variance, got {self.student_df}")

    @property
    def phi(self) -> float:
        return 0.0 if self.kind is ErrorKind.IID_GAUSSIAN else float(self.ar_coefficient)


@dataclass(frozen=True)
class DgpSpec:
    """Full description of a data-generating process.

    ``corr_block_size`` is the number of leading coordinates of *each* of
    ``v_t`` and ``z_t`` that share the Toeplitz structure; the group is
    stacked as ``(v_1..v_k, z_1..z_k)`` and everything else is independent
    with unit variance.
    """

    n1: int
    n2: int
    beta0: tuple[float, ...]
    gamma0: tuple[float, ...]
    toeplitz_r: float = 0.5
    corr_block_size: int | None = None
    error: ErrorSpec = field(default_factory=ErrorSpec)
    sigma_u: float = 1.5
    alpha0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta0", tuple(float(b) for b in self.beta0))
        object.__setattr__(self, "gamma0", tuple(float(g) for g in self.gamma0))
        if isinstance(self.error, dict):
            object.__setattr__(self, "error", ErrorSpec(**self.error))
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("n1 and n2 must both be at least 1")
        if len(self.beta0) != self.n1 or len(self.gamma0) != self.n2:
            raise ValueError(
                f"coefficient lengths ({len(self.beta0)}, {len(self.gamma0)}) "
                f"do not match (n1, n2) = ({self.n1}, {self.n2})"
            )
        if not 0.0 <= self.toeplitz_r < 1.0:
            raise ValueError(f"toeplitz_r must lie in [0, 1), got {self.toeplitz_r}")
        if self.corr_block_size is None:
            object.__setattr__(self, "corr_block_size", max(self.n1, self.n2))
        if self.corr_block_size < 0:
            raise ValueError("corr_block_size must be non-negative")
        if self.sigma_u < 0:
            raise ValueError("sigma_u must be non-negative")

    @property
    def theta0(self) -> np.ndarray:
        return np.array(self.beta0 + self.gamma0)

    @property
    def active_beta(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.beta0))

    @property
    def active_gamma(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.gamma0))

    def innovation_cov(self) -> np.ndarray:
        """Covariance of ``(v_t', z_t')'``, ordered as ``(v_1..v_n1, z_1..z_n2)``."""
        k1 = min(self.corr_block_size, self.n1)
        k2 = min(self.corr_block_size, self.n2)
        group = np.r_[np.arange(k1), self.n1 + np.arange(k2)]
        cov = np.eye(self.n1 + self.n2)
        cov[np.ix_(group, group)] = toeplitz_cov(len(group), self.toeplitz_r)
        return cov

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta0"] = list(self.beta0)
        d["gamma0"] = list(self.gamma0)
        d["error"]["kind"] = self.error.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        d = dict(d)
        d["error"] = ErrorSpec(**d.get("error", {}))
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class Dataset:
    """Response ``y`` with integrated block ``x`` (T x n1) and stationary block ``z`` (T x n2).

    Simulated data additionally carry the true errors ``u`` and the random-walk
    increments ``v``; real data leave them as ``None``.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    holdout: "Dataset | None" = None
    truth: DgpSpec | None = None
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        T = self.y.shape[0]
        self.x = np.asarray(self.x, dtype=float).reshape(T, -1)
        self.z = np.asarray(self.z, dtype=float).reshape(T, -1)
        for name in ("y", "x", "z"):
            arr = getattr(self, name)
            if arr.shape[0] != T:
                raise ValueError(f"{name} has {arr.shape[0]} rows, expected {T}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def n1(self) -> int:
        return self.x.shape[1]

    @property
    def n2(self) -> int:
        return self.z.shape[1]

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def w(self) -> np.ndarray:
        return np.hstack([self.x, self.z])

    def centered(self) -> "Dataset":
        """Copy with ``y`` and every covariate demeaned, which partials out an intercept.

        The holdout is shifted by the training means so predictions stay comparable.
        """
        my, mx, mz = self.y.mean(), self.x.mean(axis=0), self.z.mean(axis=0)
        hold = self.holdout
        if hold is not None:
            hold = Dataset(hold.y - my, hold.x - mx, hold.z - mz, truth=hold.truth, u=hold.u, v=hold.v)
        return Dataset(self.y - my, self.x - mx, self.z - mz, holdout=hold, truth=self.truth,
                       u=self.u, v=self.v)


def toeplitz_cov(n: int, r: float) -> np.ndarray:
    """Correlation matrix with entries ``r**|i-j|``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 <= r < 1.0:
        raise ValueError(f"r must lie in [0, 1), got {r}")
    idx = np.arange(n)
    return float(r) ** np.abs(idx[:, None] - idx[None, :])


def builtin_model(model_id: int) -> DgpSpec:
    """One of the six Monte Carlo designs."""
    if model_id not in range(1, 7):
        raise ValueError(f"model id must be in 1..6, got {model_id}")
    n = 50 if model_id in (4, 5) else 15
    coefs = MODEL_COEFS + (0.0,) * (n - len(MODEL_COEFS))
    r = 0.9 if model_id == 2 else 0.5
    error = {
        1: ErrorSpec(),
        2: ErrorSpec(),
        3: ErrorSpec(ErrorKind.AR1_GAUSSIAN, 0.6),
        4: ErrorSpec(ErrorKind.AR1_GAUSSIAN, 0.6),
        5: ErrorSpec(),
        6: ErrorSpec(ErrorKind.AR1_STUDENT_T, 0.6, student_df=4),
    }[model_id]
    # Model 4 keeps the full Toeplitz structure across all 100 innovations
    block = 15 if model_id == 5 else n
    return DgpSpec(n1=n, n2=n, beta0=coefs, gamma0=coefs, toeplitz_r=r,
                   corr_block_size=block, error=error, sigma_u=1.5)


def long_run_variance(error: ErrorSpec, sigma_u: float) -> tuple[float, float]:
    """Short-run and long-run (zero-frequency) variance of ``u_t``.

    ``sigma_u`` is the innovation standard deviation, so for an AR(1) with
    coefficient phi the pair is ``(s2 / (1 - phi**2), s2 / (1 - phi)**2)``.
    """
    phi = error.phi
    if not -1.0 < phi < 1.0:
        raise ValueError(f"AR coefficient must lie in (-1, 1), got {phi}")
    if error.kind is ErrorKind.AR1_STUDENT_T and error.student_df <= 2:
        raise ValueError("student_df must exceed 2")
    s2 = float(sigma_u) ** 2
    return s2 / (1.0 - phi**2), s2 / (1.0 - phi) ** 2


def _draw_errors(spec: DgpSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    err = spec.error
    if err.kind is ErrorKind.IID_GAUSSIAN:
        return spec.sigma_u * rng.standard_normal(n)
    m = n + AR_BURN_IN
    if err.kind is ErrorKind.AR1_STUDENT_T:
        df = err.student_df
        e = spec.sigma_u * np.sqrt((df - 2) / df) * rng.standard_t(df, size=m)
    else:
        e = spec.sigma_u * rng.standard_normal(m)
    # u_t = phi u_{t-1} + e_t from u_{-1} = 0
    return lfilter([1.0], [1.0, -err.phi], e)[AR_BURN_IN:]


def simulate(spec: DgpSpec, T: int, holdout_len: int = HOLDOUT_LEN, seed: int = 0) -> Dataset:
    """Draw ``T`` training rows plus ``holdout_len`` rows continuing the same paths."""
    if T < 1:
        raise ValueError("T must be positive")
    if holdout_len < 0:
        raise ValueError("holdout_len must be non-negative")
    q = len(spec.active_beta) + len(spec.active_gamma)
    if T < q + 5:
        raise ValueError(f"T={T} is too small for {q} active covariates (need at least {q + 5})")
    cov = spec.innovation_cov()
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is not positive definite") from exc

    rng = np.random.default_rng(seed)
    total = T + holdout_len
    innov = rng.standard_normal((total, spec.n1 + spec.n2)) @ chol.T
    v, z = innov[:, : spec.n1], innov[:, spec.n1 :]
    x = np.cumsum(v, axis=0)
    u = _draw_errors(spec, total, rng)
    y = spec.alpha0 + x @ np.array(spec.beta0) + z @ np.array(spec.gamma0) + u

    holdout = None
    if holdout_len > 0:
        holdout = Dataset(y[T:], x[T:], z[T:], truth=spec, u=u[T:], v=v[T:])
    return Dataset(y[:T], x[:T], z[:T], holdout=holdout, truth=spec, u=u[:T], v=v[:T])


def _header(n1: int, n2: int) -> list[str]:
    return ["y"] + [f"x{j + 1}" for j in range(n1)] + [f"z{j + 1}" for j in range(n2)]


def write_csv(dataset: Dataset, path: str | Path) -> None:
    """Write ``y,x1..,z1..`` rows: the training sample, then the holdout rows if any.

    The split point is not stored in the file; pass ``holdout_rows`` to
    :func:`read_csv` to recover it.
    """
    parts = [dataset] if dataset.holdout is None else [dataset, dataset.holdout]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header(dataset.n1, dataset.n2))
        for part in parts:
            for row in np.column_stack([part.y, part.x, part.z]):
                writer.writerow([repr(float(c)) for c in row])


def read_csv(
    path: str | Path,
    x_cols: list[str] | None = None,
    z_cols: list[str] | None = None,
    y_col: str = "y",
    holdout_rows: int = 0,
) -> Dataset:
    """Load a dataset, partitioning columns by explicit lists or the ``x*``/``z*`` convention.

    The last ``holdout_rows`` rows become the holdout segment. An optional
    ``segment`` column with ``train``/``holdout`` labels is honoured too.
    Raises ``ValueError`` naming the row and column of the first bad cell.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if y_col not in header:
        raise ValueError(f"{path}: no '{y_col}' column")
    has_segment = "segment" in header
    data_cols = [h for h in header if h not in (y_col, "segment")]
    if x_cols is None and z_cols is None:
        x_cols = [h for h in data_cols if h.startswith("x")]
        z_cols = [h for h in data_cols if h.startswith("z")]
        if len(x_cols) + len(z_cols) != len(data_cols):
            unknown = [h for h in data_cols if h not in x_cols and h not in z_cols]
            raise ValueError(
                f"{path}: columns {unknown} are neither x* nor z*; declare the partition explicitly"
            )
    else:
        x_cols = list(x_cols or [])
        z_cols = list(z_cols or [])
        missing = [c for c in x_cols + z_cols if c not in header]
        if missing:
            raise ValueError(f"{path}: columns {missing} not found")
    if not x_cols and not z_cols:
        raise ValueError(f"{path}: no covariate columns declared")

    wanted = [y_col] + x_cols + z_cols
    pos = [header.index(c) for c in wanted]
    seg_pos = header.index("segment") if has_segment else None
    values = np.empty((len(body), len(wanted)))
    segments = []
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i} has {len(row)} cells, expected {len(header)}")
        for k, (col, p) in enumerate(zip(wanted, pos)):
            try:
                val = float(row[p])
            except ValueError:
                raise ValueError(f"{path}: non-numeric value {row[p]!r} at row {i}, column '{col}'") from None
            if not np.isfinite(val):
                raise ValueError(f"{path}: non-finite value {row[p]!r} at row {i}, column '{col}'")
            values[i - 2, k] = val
        segments.append(row[seg_pos].strip() if seg_pos is not None else "train")

    segments = np.array(segments, dtype=object)
    bad = set(segments) - {"train", "holdout"}
    if bad:
        raise ValueError(f"{path}: unknown segment labels {sorted(bad)}")
    n1 = len(x_cols)

    def part(mask):
        block = values[mask]
        return block[:, 0], block[:, 1 : 1 + n1], block[:, 1 + n1 :]

    if holdout_rows < 0 or holdout_rows > len(body):
        raise ValueError(f"{path}: holdout_rows={holdout_rows} outside [0, {len(body)}]")
    if holdout_rows:
        if has_segment:
            raise ValueError(f"{path}: give either a segment column or holdout_rows, not both")
        segments[len(body) - holdout_rows:] = "holdout"
    train = segments == "train"
    if train.sum() <= 2:
        raise ValueError(f"{path}: need more than 2 training rows, got {int(train.sum())}")
    holdout = None
    if (~train).any():
        holdout = Dataset(*part(~train))
    return Dataset(*part(train), holdout=holdout)
