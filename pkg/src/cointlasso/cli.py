"""Command-line front end: ``simulate``, ``fit``, ``tune`` and ``mc``.

Every subcommand accepts ``--config FILE`` (JSON with ``schema_version``);
flags given on the command line override values from the file. All outputs
go under ``--out`` and are deterministic given the configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .diagnostics import check_kkt
from .dgp import HOLDOUT_LEN, Dataset, DgpSpec, builtin_model, read_csv, simulate, write_csv
from .estimator import PenaltyConfig, adaptive_lasso_fit, default_sigma
from .montecarlo import N_BOOT, McConfig, McReport, run_study
from .tuning import GcvGrid, gcv_surface, ridge_fit, select_ridge

log = logging.getLogger("cointlasso")

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_KKT = 1
EXIT_INPUT = 2


class _Base(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    out: str = "."


class _DataInput(_Base):
    data: str
    x_cols: list[str] | None = None
    z_cols: list[str] | None = None
    y_col: str = "y"
    center: bool = False
    holdout: int = Field(0, ge=0)
    rho: float = Field(0.9, gt=0, le=1)


class _GridInput(BaseModel):
    ridge_grid: list[float] | None = None
    lambda1_grid: list[float] | None = None
    lambda2_grid: list[float] | None = None


class SimulateConfig(_Base):
    model: int | None = Field(1, ge=1, le=6)
    spec: dict | None = None
    T: int = Field(100, ge=1)
    holdout: int = Field(HOLDOUT_LEN, ge=0)
    seed: int = 0


class FitConfig(_DataInput, _GridInput):
    lambda1: float | None = Field(None, ge=0)
    lambda2: float | None = Field(None, ge=0)
    lambda_ridge: float | None = Field(None, gt=0)
    ar_order: int = Field(1, ge=0)
    max_iter: int = Field(500, ge=1)
    tol: float = Field(1e-8, gt=0)


class TuneConfig(_DataInput, _GridInput):
    pass


class McRunConfig(_Base, _GridInput):
    model: int | None = Field(1, ge=1, le=6)
    spec: dict | None = None
    T: list[int] = [50, 100, 200]
    reps: int = Field(500, ge=2)
    seed: int = 0
    jobs: int | None = Field(None, ge=1)
    rho: float = Field(0.9, gt=0, le=1)
    holdout: int = Field(HOLDOUT_LEN, ge=0)
    n_boot: int = Field(N_BOOT, ge=0)

    @field_validator("T", mode="before")
    @classmethod
    def _as_list(cls, v):
        return [v] if isinstance(v, int) else v


CONFIGS = {"simulate": SimulateConfig, "fit": FitConfig, "tune": TuneConfig, "mc": McRunConfig}


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _float_list(text: str) -> list[float]:
    return [float(s) for s in _csv_list(text)]


def _int_list(text: str) -> list[int]:
    return [int(s) for s in _csv_list(text)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cointlasso", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        # defaults stay None so that only flags actually given override the config file
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out", help="output directory")

    def data_args(p):
        p.add_argument("data", nargs="?", help="input CSV")
        p.add_argument("--x-cols", dest="x_cols", type=_csv_list, help="comma-separated integrated columns")
        p.add_argument("--z-cols", dest="z_cols", type=_csv_list, help="comma-separated stationary columns")
        p.add_argument("--y-col", dest="y_col")
        p.add_argument("--center", action="store_const", const=True, help="demean y and all covariates (intercept)")
        p.add_argument("--holdout", type=int, help="trailing rows kept out of the fit")
        p.add_argument("--rho", type=float)

    def grid_args(p):
        p.add_argument("--ridge-grid", dest="ridge_grid", type=_float_list)
        p.add_argument("--lambda1-grid", dest="lambda1_grid", type=_float_list)
        p.add_argument("--lambda2-grid", dest="lambda2_grid", type=_float_list)

    p = sub.add_parser("simulate", help="simulate a dataset to CSV")
    common(p)
    p.add_argument("--model", type=int)
    p.add_argument("--T", dest="T", type=int)
    p.add_argument("--holdout", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("fit", help="tune and fit the adaptive Lasso on a CSV")
    common(p)
    data_args(p)
    grid_args(p)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda-ridge", dest="lambda_ridge", type=float)
    p.add_argument("--ar-order", dest="ar_order", type=int)

    p = sub.add_parser("tune", help="write the GCV surface for a CSV")
    common(p)
    data_args(p)
    grid_args(p)

    p = sub.add_parser("mc", help="run the Monte Carlo study")
    common(p)
    grid_args(p)
    p.add_argument("--model", type=int)
    p.add_argument("--T", dest="T", type=_int_list, help="comma-separated sample sizes")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    p.add_argument("--rho", type=float)
    p.add_argument("--holdout", type=int)
    p.add_argument("--n-boot", dest="n_boot", type=int)
    return parser


def load_config(command: str, args: argparse.Namespace):
    """Merge the JSON file (if any) with explicitly given flags and validate."""
    values: dict = {}
    if getattr(args, "config", None) is not None:
        with open(args.config, encoding="utf-8") as fh:
            values = json.load(fh)
        if not isinstance(values, dict):
            raise ValueError(f"{args.config}: top level must be a JSON object")
        file_cmd = values.pop("command", command)
        if file_cmd != command:
            raise ValueError(f"{args.config}: written for '{file_cmd}', not '{command}'")
    skip = {"config", "command", "verbose"}
    for key, val in vars(args).items():
        if key not in skip and val is not None:
            values[key] = val
    return CONFIGS[command].model_validate(values)


def _dgp_spec(cfg) -> DgpSpec:
    return DgpSpec.from_dict(cfg.spec) if cfg.spec is not None else builtin_model(cfg.model)


def _grid(cfg, dataset: Dataset | None, T: int) -> GcvGrid:
    if dataset is not None:
        base = GcvGrid.for_dataset(dataset, rho=cfg.rho)
    else:
        base = GcvGrid.default(T, rho=cfg.rho)
    return replace(
        base,
        ridge_grid=tuple(cfg.ridge_grid) if cfg.ridge_grid else base.ridge_grid,
        lambda1_grid=tuple(cfg.lambda1_grid) if cfg.lambda1_grid else base.lambda1_grid,
        lambda2_grid=tuple(cfg.lambda2_grid) if cfg.lambda2_grid else base.lambda2_grid,
    )


def _load_data(cfg) -> Dataset:
    data = read_csv(cfg.data, cfg.x_cols, cfg.z_cols, cfg.y_col, cfg.holdout)
    return data.centered() if cfg.center else data


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_simulate(cfg: SimulateConfig) -> int:
    spec = _dgp_spec(cfg)
    data = simulate(spec, cfg.T, cfg.holdout, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{'custom' if cfg.spec is not None else f'model{cfg.model}'}_T{cfg.T}_seed{cfg.seed}"
    write_csv(data, out / f"{stem}.csv")
    _write_json(out / f"{stem}.spec.json", {"T": cfg.T, "holdout": cfg.holdout, "seed": cfg.seed,
                                             "spec": spec.to_dict()})
    print(out / f"{stem}.csv")
    return EXIT_OK


def _names(cfg, data: Dataset) -> list[str]:
    xs = cfg.x_cols or [f"x{j + 1}" for j in range(data.n1)]
    zs = cfg.z_cols or [f"z{j + 1}" for j in range(data.n2)]
    return list(xs) + list(zs)


def cmd_fit(cfg: FitConfig) -> int:
    data = _load_data(cfg)
    if (cfg.lambda1 is None) != (cfg.lambda2 is None):
        raise ValueError("give both --lambda1 and --lambda2, or neither")
    grid = _grid(cfg, data, data.T)
    lam_ridge = cfg.lambda_ridge if cfg.lambda_ridge is not None else select_ridge(data, grid)
    penalty = PenaltyConfig(rho=cfg.rho, max_iter=cfg.max_iter, tol=cfg.tol).resolve(data)
    tuned = cfg.lambda1 is None
    if tuned:
        surface = gcv_surface(data, ridge_fit(data, lam_ridge), grid, penalty.epsilon)
        l1, l2 = surface.lambda1, surface.lambda2
    else:
        l1, l2 = cfg.lambda1, cfg.lambda2
    penalty = replace(penalty, lambda1=l1, lambda2=l2)
    # simulated provenance is not carried through CSV, so sigma is always the residual plug-in
    sigma = default_sigma(data, lam_ridge, cfg.ar_order)
    fit = adaptive_lasso_fit(data, penalty, lam_ridge, sigma=sigma)
    kkt = check_kkt(data, fit)

    names = _names(cfg, data)
    theta = fit.theta_hat
    se = np.concatenate(fit.standard_errors())
    print(f"T={data.T} n1={data.n1} n2={data.n2} lambda_ridge={lam_ridge:.6g} "
          f"lambda1={l1:.6g} lambda2={l2:.6g} ({'GCV' if tuned else 'given'})")
    print(f"iterations={fit.iterations} converged={fit.converged} KKT={'pass' if kkt.passed else 'FAIL'}")
    print(f"{'variable':>10} {'coef':>12} {'se':>12}")
    for j in fit.active:
        print(f"{names[j]:>10} {theta[j]:12.6f} {se[j]:12.6f}")
    if fit.active.size == 0:
        print("(no active variables)")
    pmse = None
    if data.holdout is not None:
        pmse = float(np.mean((data.holdout.y - data.holdout.w @ theta) ** 2))
        print(f"holdout PMSE over {data.holdout.T} rows: {pmse:.6g}")

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    result = fit.to_dict()
    result.update(variables=names, active_names=[names[j] for j in fit.active],
                  tuned=tuned, kkt=kkt.to_dict(), data=str(cfg.data),
                  holdout_pmse=pmse)
    _write_json(out / "fit.json", result)
    return EXIT_OK


def cmd_tune(cfg: TuneConfig) -> int:
    data = _load_data(cfg)
    grid = _grid(cfg, data, data.T)
    lam_ridge = select_ridge(data, grid)
    eps = PenaltyConfig(rho=cfg.rho).resolve(data).epsilon
    surface = gcv_surface(data, ridge_fit(data, lam_ridge), grid, eps)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    surface.to_csv(out / "gcv_surface.csv")
    i, j = surface.best
    best = {"lambda_ridge": lam_ridge, "lambda1": surface.lambda1, "lambda2": surface.lambda2,
            "gcv": float(surface.gcv[i, j]), "effective_params": float(surface.effective_params[i, j]),
            **surface.rate_diagnostics()}
    _write_json(out / "tune.json", best)
    print(json.dumps(best, sort_keys=True))
    return EXIT_OK


def cmd_mc(cfg: McRunConfig) -> int:
    spec = _dgp_spec(cfg)
    jobs = cfg.jobs or os.cpu_count() or 1
    custom_grid = cfg.ridge_grid or cfg.lambda1_grid or cfg.lambda2_grid
    if custom_grid and len(cfg.T) > 1 and not (cfg.ridge_grid and cfg.lambda1_grid and cfg.lambda2_grid):
        raise ValueError("partial grid overrides need a single sample size")
    tuning = _grid(cfg, None, cfg.T[0]) if custom_grid else None
    mc = McConfig(model=cfg.model if cfg.spec is None else spec, sample_sizes=tuple(cfg.T),
                  replications=cfg.reps, holdout_len=cfg.holdout, base_seed=cfg.seed,
                  tuning=tuning, penalty_defaults=PenaltyConfig(rho=cfg.rho), n_boot=cfg.n_boot)
    records = run_study(mc, jobs=jobs)
    report = McReport.from_records(records, n_boot=cfg.n_boot, seed=cfg.seed)
    out = Path(cfg.out)
    paths = report.write(out, records)
    # jobs only affects speed, so it stays out of the provenance file
    _write_json(out / "mc_config.json", cfg.model_dump(exclude={"jobs", "out"}))
    print(report.to_markdown())
    for p in paths:
        print(p)
    if not report.all_kkt_passed:
        print(f"KKT failures: {report.kkt_failures}; failed replications: {report.n_failed}",
              file=sys.stderr)
        return EXIT_KKT
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "tune": cmd_tune, "mc": cmd_mc}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.command, args)
        if args.command in ("fit", "tune") and not cfg.data:
            raise ValueError("no input CSV given")
        return COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"invalid configuration:\n{exc}", file=sys.stderr)
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
