"""Command-line entry point: ``circmix {fit,bandwidth,bands,diagnose,simulate}``.

Exit status is 0 on success, 1 on a computational failure and 2 on a usage or
configuration error. Failures print a JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import re
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from circmix import bands as bands_mod
from circmix import diagnostics as diag
from circmix import sim
from circmix.bandwidth import SearchSpec, robust_rot_univariate, select_bootstrap, select_cv, select_rot
from circmix.circ_core import wrap_pi
from circmix.dataio import (
    EmptyDatasetError,
    SchemaError,
    TrialSchema,
    load_trials,
    write_csv_artifact,
    write_json_artifact,
)
from circmix.estimator import fit_design, predict_grid
from circmix.kernels import Bandwidths

log = logging.getLogger("circmix")

SELECTOR_CHOICES = ("cv", "boot", "rot")
METHOD_CHOICES = ("NW", "LL")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Resolved settings of one CLI run; embedded in every artifact."""

    command: str = ""
    input: str | None = None
    schema: str | None = None
    predictors: list = field(default_factory=lambda: ["target_distance"])
    method: str = "NW"
    selector: str = "boot"
    h: list | None = None
    lam: list | None = None
    grid_size: int = 20
    B: int = 200
    B_select: int = 100
    alpha: float = 0.05
    delta: float = 0.005
    max_iter: int = 30
    seed: int = 0
    threads: int = 1
    out: str = "out"
    preset: str | None = None
    regression: str | None = None
    kappa: list | None = None
    n: list | None = None
    N1: int | None = None
    N2: int | None = None
    schema_resolved: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


_LIST_KEYS = {"predictors": str, "h": float, "lam": float, "kappa": float, "n": int}


def _read_config_file(path) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise UsageError(f"cannot read config file {path}")
    if "run" not in cp:
        raise UsageError(f"{path} has no [run] section")
    known = {f.name: f for f in fields(RunConfig)}
    out = {}
    for key, raw in cp["run"].items():
        if key not in known:
            raise UsageError(f"unknown config key {key!r} in {path}")
        default = getattr(RunConfig(), key)
        if key in _LIST_KEYS:
            out[key] = [_LIST_KEYS[key](v.strip()) for v in raw.split(",") if v.strip()]
        elif isinstance(default, bool):
            out[key] = cp["run"].getboolean(key)
        elif isinstance(default, int):
            out[key] = int(raw)
        elif isinstance(default, float):
            out[key] = float(raw)
        else:
            out[key] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    common.add_argument("--config", help="INI file with a [run] section of defaults")
    common.add_argument("--out", help="output directory (default ./out)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="trial CSV")
    data.add_argument("--schema", help="INI column mapping with a [schema] section")
    data.add_argument("--predictors", nargs="+", choices=("target_distance", "distance_error"))
    data.add_argument("--method", choices=METHOD_CHOICES)
    data.add_argument("--selector", choices=SELECTOR_CHOICES)
    data.add_argument("--h", type=float, nargs="+", help="fixed continuous bandwidths (skips selection)")
    data.add_argument("--lam", type=float, nargs="+", help="fixed categorical bandwidth")
    data.add_argument("--B-select", dest="B_select", type=int, help="bootstrap replicates for selection")

    p = argparse.ArgumentParser(prog="circmix", description="Circular regression on mixed covariates.",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    fit = sub.add_parser("fit", parents=[common, data], help="fit on a grid per level")
    fit.add_argument("--grid-size", dest="grid_size", type=int)
    sub.add_parser("bandwidth", parents=[common, data], help="select bandwidths")
    bnd = sub.add_parser("bands", parents=[common, data], help="simultaneous bootstrap bands per level")
    bnd.add_argument("--grid-size", dest="grid_size", type=int)
    bnd.add_argument("--B", type=int, help="bootstrap replicates for the band (default 200)")
    bnd.add_argument("--alpha", type=float)
    bnd.add_argument("--delta", type=float, help="calibration tolerance")
    bnd.add_argument("--max-iter", dest="max_iter", type=int)
    sub.add_parser("diagnose", parents=[common, data], help="goodness-of-fit report")
    simp = sub.add_parser("simulate", parents=[common], help="two-phase selector benchmark")
    simp.add_argument("--preset", choices=sorted(sim.PRESETS))
    simp.add_argument("--regression", choices=sim.REGRESSIONS)
    simp.add_argument("--kappa", type=float, nargs="+")
    simp.add_argument("--n", type=int, nargs="+")
    simp.add_argument("--N1", type=int)
    simp.add_argument("--N2", type=int)
    simp.add_argument("--B-select", dest="B_select", type=int)
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = _read_config_file(args.config) if getattr(args, "config", None) else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    values["command"] = args.command
    cfg = RunConfig(**values)
    if cfg.grid_size < 2:
        raise UsageError("grid size must be at least 2")
    if not cfg.predictors:
        raise UsageError("at least one predictor is required")
    if cfg.selector not in SELECTOR_CHOICES:
        raise UsageError(f"invalid selector {cfg.selector!r}")
    if cfg.method not in METHOD_CHOICES:
        raise UsageError(f"invalid method {cfg.method!r}")
    return cfg


def _load(cfg: RunConfig):
    if not cfg.input or not cfg.schema:
        raise UsageError("--input and --schema are required for this command")
    schema = TrialSchema.from_file(cfg.schema)
    cfg.schema_resolved = schema.to_dict()
    return load_trials(cfg.input, schema, cfg.predictors)


def _select(sample, cfg: RunConfig) -> tuple[Bandwidths, str]:
    if cfg.h is not None:
        return Bandwidths(cfg.h, cfg.lam if cfg.lam is not None else ()), "fixed"
    if cfg.selector == "rot":
        return select_rot(sample), "rot"
    search = SearchSpec.default_for(sample, seed=cfg.seed)
    if cfg.selector == "cv":
        return select_cv(sample, search, method=cfg.method), "cv"
    return select_bootstrap(sample, cfg.B_select, search, method=cfg.method), "boot"


def _grid(sample, size: int) -> np.ndarray:
    lo, hi = sample.X[:, 0].min(), sample.X[:, 0].max()
    return np.linspace(lo, hi, size)


def _safe_name(level: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", str(level)).strip("_") or "level"


def cmd_fit(cfg: RunConfig, out: Path) -> dict:
    sample, report = _load(cfg)
    H, how = _select(sample, cfg)
    names = list(sample.level_names[0])
    if sample.k == 1:
        res = predict_grid(sample, H, _grid(sample, cfg.grid_size), range(len(names)), method=cfg.method,
                           fallback=True)
        xcols = {"x": res.x[:, 0]}
    else:
        res = fit_design(sample, H, method=cfg.method, fallback=True)
        xcols = {f"x_{p}": res.x[:, j] for j, p in enumerate(cfg.predictors)}
    frame = pd.DataFrame({**xcols, "z": [names[i] for i in res.z[:, 0]], "m_hat": res.m_hat,
                          "m1": res.m1_hat, "m2": res.m2_hat})
    write_csv_artifact(out / "fit.csv", frame, cfg.to_dict())
    return {"bandwidths": H.to_dict(), "selector": how, "load": report.to_dict(), "files": ["fit.csv"]}


def cmd_bandwidth(cfg: RunConfig, out: Path) -> dict:
    sample, report = _load(cfg)
    H, how = _select(sample, cfg)
    extra = {}
    if sample.k == 1:
        extra["robust_rot_h"] = robust_rot_univariate(sample.X[:, 0])
    frame = pd.DataFrame({"coordinate": [f"h_{p}" for p in cfg.predictors] + ["lambda_condition"],
                          "value": list(H.h) + list(H.lam)})
    write_csv_artifact(out / "bandwidth.csv", frame, cfg.to_dict())
    return {"bandwidths": H.to_dict(), "selector": how, **extra, "load": report.to_dict(),
            "files": ["bandwidth.csv"]}


def cmd_bands(cfg: RunConfig, out: Path) -> dict:
    sample, report = _load(cfg)
    if sample.k != 1:
        raise UsageError("bands are defined for a single continuous predictor")
    H, how = _select(sample, cfg)
    grid = _grid(sample, cfg.grid_size)
    files, summary = [], {}
    for code, name in enumerate(sample.level_names[0]):
        band = bands_mod.simultaneous_band(sample, H, code, grid, cfg.B, cfg.alpha, cfg.delta, cfg.max_iter,
                                           seed=[cfg.seed, code], method=cfg.method)
        frame = pd.DataFrame({"x": band.grid, "center": band.center, "lower": band.lower, "upper": band.upper,
                              "lower_offset": band.lower_offset, "upper_offset": band.upper_offset,
                              "alpha_final": band.alpha_final})
        fname = f"bands_{_safe_name(name)}.csv"
        write_csv_artifact(out / fname, frame, cfg.to_dict())
        files.append(fname)
        summary[name] = {"alpha_final": band.alpha_final, "p_in_achieved": band.p_in_achieved,
                         "status": band.calibration_status.value, "iterations": band.iterations,
                         "dropped": band.n_dropped}
    return {"bandwidths": H.to_dict(), "selector": how, "bands": summary, "load": report.to_dict(),
            "files": files}


def cmd_diagnose(cfg: RunConfig, out: Path) -> dict:
    sample, report = _load(cfg)
    H, how = _select(sample, cfg)
    fitted = fit_design(sample, H, method=cfg.method, fallback=True).m_hat
    names = np.array(sample.level_names[0], dtype=object)[sample.Z[:, 0]]
    gof = diag.gof_report(sample.theta, fitted, names)
    resid = wrap_pi(sample.theta - fitted)
    tests = diag.uniformity_tests(resid) if sample.n >= 2 else None
    by_level = {k: asdict(v) for k, v in diag.circ_summary_by_level(resid, names).items()}
    payload = {"bandwidths": H.to_dict(), "selector": how, "gof": gof.to_dict(),
               "uniformity": tests.to_dict() if tests else None, "residual_summary": by_level,
               "load": report.to_dict()}
    write_json_artifact(out / "gof.json", payload, cfg.to_dict())
    return {**payload, "files": ["gof.json"]}


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    if cfg.preset:
        preset = sim.PRESETS[cfg.preset]
        regression = cfg.regression or preset.regression
        kappas = cfg.kappa or list(preset.kappas)
        ns = cfg.n or list(preset.ns)
        N1, N2 = cfg.N1 or preset.N1, cfg.N2 or preset.N2
        table_name = preset.table_file
    else:
        if not (cfg.regression and cfg.kappa and cfg.n):
            raise UsageError("simulate needs --preset or all of --regression, --kappa and --n")
        regression, kappas, ns = cfg.regression, cfg.kappa, cfg.n
        N1, N2 = cfg.N1 or 50, cfg.N2 or 200
        table_name = "table1.csv" if regression == "R1" else "table2.csv"
    rows, ratios, oracles = [], [], {}
    for kappa in kappas:
        for n in ns:
            spec = sim.DgpSpec(regression, kappa, n)
            t0 = time.perf_counter()
            surface, scores = sim.run_scenario(spec, N1, N2, cfg.seed, B=cfg.B_select, workers=cfg.threads)
            log.info("%s kappa=%g n=%d done in %.1fs", regression, kappa, n, time.perf_counter() - t0)
            for name, sc in scores.items():
                rows.append({"kappa": kappa, "n": n, "method": name, "mean": sc.mean_risk, "variance": sc.var_risk})
                ratios += [{"kappa": kappa, "n": n, "replicate": j, "method": name, "ratio": r}
                           for j, r in enumerate(sc.norm_ratios)]
            rows.append({"kappa": kappa, "n": n, "method": "Oracle", "mean": surface.oracle_value, "variance": 0.0})
            oracles[f"kappa={kappa:g},n={n}"] = surface.oracle.to_dict()
    write_csv_artifact(out / table_name, pd.DataFrame(rows), cfg.to_dict())
    write_csv_artifact(out / "ratios.csv", pd.DataFrame(ratios), cfg.to_dict())
    return {"regression": regression, "N1": N1, "N2": N2, "oracles": oracles, "table": rows,
            "files": [table_name, "ratios.csv"]}


COMMANDS = {"fit": cmd_fit, "bandwidth": cmd_bandwidth, "bands": cmd_bands, "diagnose": cmd_diagnose,
            "simulate": cmd_simulate}


def _error(kind: str, exc: BaseException, status: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (UsageError, TypeError, ValueError) as exc:
        return _error("usage", exc, 2)
    out = Path(cfg.out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result = COMMANDS[cfg.command](cfg, out)
        except (UsageError, SchemaError, FileNotFoundError) as exc:
            return _error("usage", exc, 2)
        except (EmptyDatasetError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            return _error("computation", exc, 1)
    msgs = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    for m in msgs:
        log.warning(m)
    write_json_artifact(out / f"run_{cfg.command}.json", {"result": result, "warnings": msgs}, cfg.to_dict())
    print(json.dumps({"status": "ok", "command": cfg.command, "out": str(out), "files": result.get("files", [])}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
