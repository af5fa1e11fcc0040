"""Replication harness: simulate, tune, fit and score against oracle OLS.

Each replication is a pure function of ``(spec, T, seed)`` and the tuning
settings, so replications can run in any order or in parallel; summaries
sort records by replication index before aggregating.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .diagnostics import build_context, check_kkt, event_indicators, irrepresentable_stat, sign_match
from .dgp import HOLDOUT_LEN, Dataset, DgpSpec, builtin_model, long_run_variance, simulate
from .estimator import PenaltyConfig, adaptive_lasso_fit, ridge_fit
from .tuning import GcvGrid, gcv_surface, select_ridge

log = logging.getLogger(__name__)

SEED_STRIDE = 1_000_003
N_BOOT = 1000


@dataclass
class McConfig:
    model: int | DgpSpec = 1
    sample_sizes: tuple[int, ...] = (50, 100, 200)
    replications: int = 500
    holdout_len: int = HOLDOUT_LEN
    base_seed: int = 0
    tuning: GcvGrid | None = None
    penalty_defaults: PenaltyConfig = field(default_factory=PenaltyConfig)
    n_boot: int = N_BOOT

    def __post_init__(self):
        if self.replications < 2:
            raise ValueError("replications must be at least 2")
        spec = self.spec
        q = len(spec.active_beta) + len(spec.active_gamma)
        if min(self.sample_sizes) < q + 5:
            raise ValueError(f"sample sizes must be at least {q + 5}")

    @property
    def spec(self) -> DgpSpec:
        return builtin_model(self.model) if isinstance(self.model, int) else self.model

    @property
    def label(self) -> str:
        return str(self.model) if isinstance(self.model, int) else "custom"


def replication_seed(base_seed: int, index: int) -> int:
    return base_seed + index * SEED_STRIDE


def reported_indices(spec: DgpSpec) -> list[tuple[str, int]]:
    """(name, position in theta) for every other active coefficient, up to three per block.

    For the built-in designs this is beta1, beta3, beta5, gamma1, gamma3, gamma5.
    """
    out = [(f"beta{j + 1}", int(j)) for j in spec.active_beta[::2][:3]]
    out += [(f"gamma{j + 1}", spec.n1 + int(j)) for j in spec.active_gamma[::2][:3]]
    return out


@dataclass
class ReplicationRecord:
    model: str
    T: int
    index: int
    seed: int
    lambda_ridge: float = float("nan")
    lambda1: float = float("nan")
    lambda2: float = float("nan")
    theta_hat: list[float] = field(default_factory=list)
    se_hat: list[float] = field(default_factory=list)
    oracle_theta: list[float] = field(default_factory=list)
    sign_match: bool = False
    correct_nonzero: int = 0
    correct_zero: int = 0
    positions: dict[str, int] = field(default_factory=dict)
    sq_error: dict[str, float] = field(default_factory=dict)
    oracle_sq_error: dict[str, float] = field(default_factory=dict)
    pmse: float = float("nan")
    oracle_pmse: float = float("nan")
    kkt_pass: bool = False
    converged: bool = False
    iterations: int = 0
    event_a: bool = False
    event_b: bool = False
    ic_margin: float = float("nan")
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def pmse_ratio(self) -> float:
        return self.pmse / self.oracle_pmse

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def oracle_ols(dataset: Dataset, true_active_beta, true_active_gamma) -> tuple[np.ndarray, np.ndarray | None]:
    """OLS on the true support; returns the full-length coefficient vector and holdout predictions."""
    ab = np.asarray(true_active_beta, dtype=int)
    ag = np.asarray(true_active_gamma, dtype=int)
    cols = np.concatenate([ab, dataset.n1 + ag])
    theta = np.zeros(dataset.n)
    if cols.size:
        w1 = dataset.w[:, cols]
        if np.linalg.matrix_rank(w1) < cols.size:
            raise np.linalg.LinAlgError("restricted design is rank deficient")
        theta[cols], *_ = np.linalg.lstsq(w1, dataset.y, rcond=None)
    pred = None
    if dataset.holdout is not None:
        pred = dataset.holdout.w @ theta
    return theta, pred


def _pmse(holdout: Dataset, theta: np.ndarray) -> float:
    return float(np.mean((holdout.y - holdout.w @ theta) ** 2))


def run_replication(
    spec: DgpSpec,
    T: int,
    seed: int,
    tuning: GcvGrid | None = None,
    penalty_defaults: PenaltyConfig = PenaltyConfig(),
    holdout_len: int = HOLDOUT_LEN,
    index: int = 0,
    model_label: str = "custom",
) -> ReplicationRecord:
    """Simulate one dataset, tune by GCV, fit, and score it."""
    rec = ReplicationRecord(model=model_label, T=T, index=index, seed=seed)
    data = simulate(spec, T, holdout_len, seed)
    theta0 = spec.theta0
    grid = tuning or GcvGrid.default(T, rho=penalty_defaults.rho)
    base = replace(penalty_defaults, rho=grid.rho).resolve(data)
    try:
        rec.lambda_ridge = select_ridge(data, grid)
        surface = gcv_surface(data, ridge_fit(data, rec.lambda_ridge), grid, base.epsilon)
        rec.lambda1, rec.lambda2 = surface.lambda1, surface.lambda2
        cfg = replace(base, lambda1=rec.lambda1, lambda2=rec.lambda2)
        sigma = long_run_variance(spec.error, spec.sigma_u)
        fit = adaptive_lasso_fit(data, cfg, rec.lambda_ridge, sigma=sigma)
    except (np.linalg.LinAlgError, ValueError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        log.warning("replication %d (T=%d) failed: %s", index, T, rec.error)
        return rec

    theta = fit.theta_hat
    se_b, se_g = fit.standard_errors()
    rec.theta_hat = theta.tolist()
    rec.se_hat = np.concatenate([se_b, se_g]).tolist()
    rec.converged, rec.iterations = fit.converged, fit.iterations
    rec.sign_match = sign_match(theta, theta0)
    rec.correct_nonzero = int(np.sum((theta != 0) & (theta0 != 0)))
    rec.correct_zero = int(np.sum((theta == 0) & (theta0 == 0)))
    rec.kkt_pass = check_kkt(data, fit).passed

    oracle, _ = oracle_ols(data, spec.active_beta, spec.active_gamma)
    rec.oracle_theta = oracle.tolist()
    for name, j in reported_indices(spec):
        rec.positions[name] = j
        rec.sq_error[name] = float((theta[j] - theta0[j]) ** 2)
        rec.oracle_sq_error[name] = float((oracle[j] - theta0[j]) ** 2)
    if data.holdout is not None:
        rec.pmse = _pmse(data.holdout, theta)
        rec.oracle_pmse = _pmse(data.holdout, oracle)

    ctx = build_context(data, spec.active_beta, spec.active_gamma)
    rec.event_a, rec.event_b = event_indicators(data, ctx, cfg, fit.weights_final)
    _, rec.ic_margin = irrepresentable_stat(ctx, np.sign(theta0[np.concatenate(
        [spec.active_beta, spec.n1 + spec.active_gamma])]))
    return rec


def _run_task(args) -> ReplicationRecord:
    return run_replication(*args)


def run_study(config: McConfig, jobs: int = 1) -> list[ReplicationRecord]:
    """All replications for every sample size, sorted by (T, index)."""
    spec = config.spec
    tasks = []
    for T in config.sample_sizes:
        grid = config.tuning or GcvGrid.default(T, rho=config.penalty_defaults.rho)
        for i in range(config.replications):
            tasks.append((spec, T, replication_seed(config.base_seed, i), grid,
                          config.penalty_defaults, config.holdout_len, i, config.label))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        records = [_run_task(t) for t in tasks]
    records.sort(key=lambda r: (r.T, r.index))
    return records


def _bootstrap_indices(n: int, n_boot: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, n, size=(n_boot, n))


def _groups(records):
    out: dict[tuple[str, int], list[ReplicationRecord]] = {}
    for r in sorted(records, key=lambda r: (r.model, r.T, r.index)):
        if r.ok:
            out.setdefault((r.model, r.T), []).append(r)
    return out


def selection_summary(records, n_boot: int = N_BOOT, seed: int = 0) -> list[dict]:
    """Bootstrap mean and sd of the correctly selected nonzero and zero counts.

    For each resample the mean and standard deviation of the counts are
    computed; the reported figures are their averages over resamples.
    """
    rows = []
    for (model, T), recs in _groups(records).items():
        counts = np.array([[r.correct_nonzero, r.correct_zero] for r in recs], dtype=float)
        n = len(recs)
        if n_boot > 0:
            boot = counts[_bootstrap_indices(n, n_boot, seed)]
            mean = boot.mean(axis=1).mean(axis=0)
            sd = boot.std(axis=1).mean(axis=0)
            se = boot.mean(axis=1).std(axis=0)
        else:
            mean, sd, se = counts.mean(axis=0), counts.std(axis=0), np.zeros(2)
        for k, label in enumerate(("nonzero", "zero")):
            rows.append({"model": model, "T": T, "metric": f"correct_{label}",
                         "mean": float(mean[k]), "sd": float(sd[k]), "mean_se": float(se[k]), "n": n})
        rows.append({"model": model, "T": T, "metric": "sign_match",
                     "mean": float(np.mean([r.sign_match for r in recs])), "sd": float("nan"),
                     "mean_se": float("nan"), "n": n})
    return rows


def estimation_summary(records) -> list[dict]:
    """MSE against oracle OLS, and sandwich SD against the across-replication SD."""
    rows = []
    for (model, T), recs in _groups(records).items():
        for name in recs[0].sq_error:
            j = recs[0].positions[name]
            mse = float(np.mean([r.sq_error[name] for r in recs]))
            mse_oracle = float(np.mean([r.oracle_sq_error[name] for r in recs]))
            est = np.array([r.theta_hat[j] for r in recs])
            se = np.array([r.se_hat[j] for r in recs])
            nonzero = est != 0
            rows.append({
                "model": model, "T": T, "coef": name,
                "mse": mse, "mse_oracle": mse_oracle,
                "mse_ratio": mse / mse_oracle if mse_oracle > 0 else float("nan"),
                "sd_sandwich": float(se[nonzero].mean()) if nonzero.any() else 0.0,
                "sd_empirical": float(est.std(ddof=1)) if len(est) > 1 else 0.0,
                "n": len(recs),
            })
    return rows


def prediction_summary(records, n_boot: int = N_BOOT, seed: int = 0) -> list[dict]:
    """Bootstrap distribution of the median PMSE ratio (adaptive Lasso over oracle OLS).

    ``mean_median`` averages the bootstrap medians; with ``n_boot=0`` it is the
    plain sample median.
    """
    rows = []
    for (model, T), recs in _groups(records).items():
        ratios = np.array([r.pmse_ratio for r in recs])
        ratios = ratios[np.isfinite(ratios)]
        if ratios.size == 0:
            continue
        if n_boot > 0:
            medians = np.median(ratios[_bootstrap_indices(len(ratios), n_boot, seed)], axis=1)
            mean_median, sd = float(medians.mean()), float(medians.std())
        else:
            mean_median, sd = float(np.median(ratios)), 0.0
        rows.append({"model": model, "T": T, "mean_median": mean_median, "sd": sd,
                     "sample_median": float(np.median(ratios)), "n": int(ratios.size)})
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if np.isnan(v) else f"{v:.6g}"
    return str(v)


@dataclass
class McReport:
    selection: list[dict]
    estimation: list[dict]
    prediction: list[dict]
    n_records: int = 0
    n_failed: int = 0
    kkt_failures: int = 0
    nonconverged: int = 0

    @classmethod
    def from_records(cls, records, n_boot: int = N_BOOT, seed: int = 0) -> "McReport":
        ok = [r for r in records if r.ok]
        return cls(
            selection=selection_summary(records, n_boot, seed),
            estimation=estimation_summary(records),
            prediction=prediction_summary(records, n_boot, seed),
            n_records=len(records),
            n_failed=len(records) - len(ok),
            kkt_failures=sum(1 for r in ok if r.converged and not r.kkt_pass),
            nonconverged=sum(1 for r in ok if not r.converged),
        )

    @property
    def all_kkt_passed(self) -> bool:
        return self.kkt_failures == 0 and self.n_failed == 0

    def long_rows(self) -> list[tuple[str, str, str, str, str, str]]:
        """(model, T, table, metric, statistic, value) rows."""
        rows = []
        for r in self.selection:
            for stat in ("mean", "sd", "mean_se"):
                rows.append((r["model"], r["T"], "selection", r["metric"], stat, r[stat]))
        for r in self.estimation:
            for stat in ("mse", "mse_oracle", "mse_ratio", "sd_sandwich", "sd_empirical"):
                rows.append((r["model"], r["T"], "estimation", r["coef"], stat, r[stat]))
        for r in self.prediction:
            for stat in ("mean_median", "sd", "sample_median"):
                rows.append((r["model"], r["T"], "prediction", "pmse_ratio", stat, r[stat]))
        return [tuple(_fmt(c) for c in row) for row in rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "T", "table", "metric", "statistic", "value"])
        writer.writerows(self.long_rows())
        return buf.getvalue()

    def to_markdown(self) -> str:
        out = ["## Model selection: correctly selected coefficients, mean (sd)", "",
               "| Model | T | non-zero | zero | sign match |", "|---|---|---|---|---|"]
        sel: dict[tuple, dict] = {}
        for r in self.selection:
            sel.setdefault((r["model"], r["T"]), {})[r["metric"]] = r
        for (model, T), m in sel.items():
            nz, z, s = m["correct_nonzero"], m["correct_zero"], m["sign_match"]
            out.append(f"| {model} | {T} | {nz['mean']:.2f} ({nz['sd']:.2f}) | "
                       f"{z['mean']:.2f} ({z['sd']:.2f}) | {s['mean']:.3f} |")

        out += ["", "## Prediction: median PMSE ratio to oracle OLS, mean (sd) over resamples", "",
                "| Model | T | PMSE ratio |", "|---|---|---|"]
        for r in self.prediction:
            out.append(f"| {r['model']} | {r['T']} | {r['mean_median']:.3f} ({r['sd']:.3f}) |")

        coefs = list(dict.fromkeys(r["coef"] for r in self.estimation))
        est: dict[tuple, dict] = {}
        for r in self.estimation:
            est.setdefault((r["model"], r["T"]), {})[r["coef"]] = r
        head = "| Model | T | " + " | ".join(coefs) + " |"
        rule = "|---|---|" + "---|" * len(coefs)
        out += ["", "## Estimation: MSE, adaptive Lasso / oracle OLS", "", head, rule]
        for (model, T), m in est.items():
            cells = [f"{m[c]['mse']:.4g} / {m[c]['mse_oracle']:.4g}" for c in coefs]
            out.append(f"| {model} | {T} | " + " | ".join(cells) + " |")
        out += ["", "## Standard deviation: sandwich / across replications", "", head, rule]
        for (model, T), m in est.items():
            cells = [f"{m[c]['sd_sandwich']:.4g} / {m[c]['sd_empirical']:.4g}" for c in coefs]
            out.append(f"| {model} | {T} | " + " | ".join(cells) + " |")
        out += ["", f"Replications: {self.n_records}; failed: {self.n_failed}; "
                    f"non-converged: {self.nonconverged}; KKT failures: {self.kkt_failures}", ""]
        return "\n".join(out)

    def write(self, out_dir: str | Path, records=None, stem: str = "mc") -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / f"{stem}_report.csv", out_dir / f"{stem}_report.md"]
        paths[0].write_text(self.to_csv(), encoding="utf-8")
        paths[1].write_text(self.to_markdown(), encoding="utf-8")
        if records is not None:
            p = out_dir / f"{stem}_records.jsonl"
            p.write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")
            paths.append(p)
        return paths
