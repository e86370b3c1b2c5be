"""Command-line runner: simulate | experiment | verify | cps | gsvz.

Every command reads one strict JSON config and writes its results under
--out-dir. Report bodies (the .json/.csv files, and paths.csv with its
sidecar) are byte-determined by (config, seed); anything volatile
(timestamps, versions, invocation details) goes only to <command>.meta.json.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .cps import ScenarioTree, find_cps, min_eps_cps
from .experiments import (
    DISCLAIMER,
    SmallBallQuery,
    empirical_cud,
    empirical_small_ball,
    empirical_stickiness,
    run_experiment,
)
from .simulate import export_csv, simulate, to_prices
from .spectral import CrossSpectralDensity, gsvz_check

BUILTIN_PREFIX = "builtin:"


def _package_version() -> str:
    try:
        return metadata.version("leadlag-lab")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# Deterministic report writing
# ---------------------------------------------------------------------------


def _jsonable(obj):
    """Plain JSON types only; non-finite numbers become null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__} in a report")


def _flatten(obj, prefix: str = "") -> list[tuple[str, str]]:
    if isinstance(obj, dict):
        rows = []
        for k in sorted(obj):
            rows += _flatten(obj[k], f"{prefix}{k}.")
        return rows
    if isinstance(obj, list):
        rows = []
        for i, v in enumerate(obj):
            rows += _flatten(v, f"{prefix}{i}.")
        return rows
    key = prefix[:-1]
    if obj is None:
        return [(key, "")]
    if isinstance(obj, bool):
        return [(key, "true" if obj else "false")]
    if isinstance(obj, float):
        return [(key, repr(obj))]
    return [(key, str(obj))]


def write_report(out_dir: Path, name: str, body: dict, fmt: str) -> Path:
    body = _jsonable(body)
    if fmt == "json":
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(body, sort_keys=True, indent=1) + "\n")
        return path
    path = out_dir / f"{name}.csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for key, value in _flatten(body):
        w.writerow([key, value])
    path.write_text(buf.getvalue())
    return path


def write_meta(out_dir: Path, name: str, args: argparse.Namespace) -> None:
    meta = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "package_version": _package_version(),
        "config_path": str(args.config),
        "out_dir": str(args.out_dir),
        "workers": args.workers,
        "format": args.format,
    }
    (out_dir / f"{name}.meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=1) + "\n"
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig, args, out_dir: Path) -> str:
    cfg.need("model", "grid", "n_paths", "seed")
    batch = simulate(cfg.model, cfg.grid, cfg.n_paths, cfg.seed,
                     workers=args.workers)
    columns = ["path_id", "t", "X1", "X2"]
    if "prices" in cfg.outputs:
        batch = to_prices(batch)
        columns += ["S1", "S2"]
    paths_csv = out_dir / "paths.csv"
    export_csv(batch, str(paths_csv))
    body = {
        "command": "simulate",
        "config_sha": cfg.sha,
        "seed": cfg.seed,
        "n_paths": cfg.n_paths,
        "grid": cfg.grid.to_dict(),
        "model_hash": batch.model_hash,
        "outputs": list(cfg.outputs),
        "schema": {
            "paths_csv": {
                "file": "paths.csv",
                "columns": columns,
                "rows": "one row per (path, grid time), paths in order",
                "sidecar": "paths.csv.meta.json",
            }
        },
    }
    write_report(out_dir, "simulate", body, args.format)
    return f"simulated {cfg.n_paths} paths -> {paths_csv}"


def cmd_experiment(cfg: ExperimentConfig, args, out_dir: Path) -> str:
    cfg.need("model", "grid", "n_paths", "seed", "strategy", "friction")
    stats = run_experiment(cfg.model, cfg.strategy.strategy, cfg.friction,
                           cfg.grid, cfg.n_paths, cfg.seed,
                           label=cfg.strategy.name, workers=args.workers)
    body = stats.to_dict()
    body["command"] = "experiment"
    body["config_sha"] = cfg.sha
    body["strategy_params"] = cfg.strategy.params
    write_report(out_dir, "experiment", body, args.format)
    return (f"{cfg.strategy.name}: mean={stats.mean:.6g} "
            f"t={stats.t_stat:.3g} loss={stats.loss_fraction:.4g}")


def cmd_verify(cfg: ExperimentConfig, args, out_dir: Path) -> str:
    cfg.need("model", "grid", "n_paths", "seed")
    if not cfg.verifiers:
        raise ConfigError("this command requires a 'verifiers' section")
    results = []
    for entry in cfg.verifiers:
        kind = entry["kind"]
        if kind == "small_ball":
            query = SmallBallQuery(
                t0=float(entry["t0"]), eps=float(entry["eps"]),
                components=tuple(entry.get("components", [0, 1])),
            )
            est, se = empirical_small_ball(cfg.model, query, cfg.grid,
                                           cfg.n_paths, cfg.seed,
                                           workers=args.workers)
            results.append({**entry, "estimate": est, "stderr": se})
        elif kind == "stickiness":
            est, se = empirical_stickiness(cfg.model, float(entry["t"]),
                                           float(entry["delta"]), cfg.grid,
                                           cfg.n_paths, cfg.seed,
                                           workers=args.workers)
            results.append({**entry, "estimate": est, "stderr": se})
        else:
            table = empirical_cud(cfg.model, float(entry["t1"]),
                                  float(entry["t2"]), None, cfg.grid,
                                  cfg.n_paths, cfg.seed, workers=args.workers)
            results.append({**entry, **table.to_dict()})
    body = {
        "command": "verify",
        "config_sha": cfg.sha,
        "seed": cfg.seed,
        "n_paths": cfg.n_paths,
        "model_hash": cfg.model.model_hash(),
        "grid": cfg.grid.to_dict(),
        "results": results,
        "note": DISCLAIMER,
    }
    write_report(out_dir, "verify", body, args.format)
    return f"ran {len(results)} verifiers"


def _load_tree(section: dict) -> ScenarioTree:
    if "tree" in section:
        return ScenarioTree.from_dict(section["tree"])
    ref = section["tree_file"]
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        res = resources.files("leadlag_lab.data") / f"{name}.json"
        if not res.is_file():
            raise ConfigError(f"no builtin tree named {name!r}")
        return ScenarioTree.from_dict(json.loads(res.read_text()))
    path = Path(ref)
    if not path.is_file():
        raise ConfigError(f"tree file not found: {ref}")
    return ScenarioTree.from_dict(json.loads(path.read_text()))


def cmd_cps(cfg: ExperimentConfig, args, out_dir: Path) -> str:
    cfg.need("cps")
    section = cfg.cps
    try:
        tree = _load_tree(section)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad scenario tree: {exc!r}") from exc
    body = {
        "command": "cps",
        "config_sha": cfg.sha,
        "mode": section["mode"],
        "n_nodes": len(tree.nodes),
        "n_levels": tree.n_levels,
    }
    if section["mode"] == "min_eps":
        result = min_eps_cps(tree, eps_hi=section.get("eps_hi"),
                             tol=float(section.get("tol", 1e-6)))
        body["bounded"] = result.bounded
        body["epsilon_star"] = result.epsilon
        body["solution"] = (result.solution.to_dict()
                            if result.solution is not None else None)
        line = (f"min cost epsilon* = {result.epsilon:.8g}"
                if result.bounded else "infeasible below eps_hi")
    else:
        sol = find_cps(tree, float(section["epsilon"]))
        body["solution"] = sol.to_dict()
        line = f"eps={section['epsilon']}: {sol.status}"
    write_report(out_dir, "cps", body, args.format)
    return line


def cmd_gsvz(cfg: ExperimentConfig, args, out_dir: Path) -> str:
    cfg.need("gsvz")
    section = cfg.gsvz
    try:
        f = CrossSpectralDensity.from_dict(section["f"])
        lambda0 = float(section["lambda0"])
        if not (math.isfinite(lambda0) and lambda0 > 0):
            raise ValueError("lambda0 must be finite and > 0")
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad gsvz section: {exc}") from exc
    report = gsvz_check(f, lambda0,
                        max_doublings=int(section.get("max_doublings", 60)))
    body = {
        "command": "gsvz",
        "config_sha": cfg.sha,
        "lambda0": report.lambda0,
        "diverged": report.diverged,
        "value": None if report.diverged else report.value,
        "quadrature_error_estimate": report.quadrature_error_estimate,
        "partials": list(report.partials),
    }
    write_report(out_dir, "gsvz", body, args.format)
    if report.diverged:
        return "tail integral diverged"
    return f"tail integral = {report.value:.9g}"


COMMANDS = {
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "verify": cmd_verify,
    "cps": cmd_cps,
    "gsvz": cmd_gsvz,
}


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leadlag-lab",
        description="Lead-lag market laboratory: simulation, trading "
                    "experiments, path-property verification, consistent "
                    "price systems, and spectral tail checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate paths and write them as CSV",
        "experiment": "run a strategy under frictions and report statistics",
        "verify": "estimate small-ball, stickiness, and sign-pattern "
                  "frequencies",
        "cps": "solve for consistent price systems on a scenario tree",
        "gsvz": "check spectral tail integrability",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True,
                       help="path to the JSON config")
        p.add_argument("--out-dir", default=".",
                       help="directory for reports (created if absent)")
        p.add_argument("--workers", type=_positive_int, default=1,
                       help="worker threads for path chunks")
        p.add_argument("--format", choices=("csv", "json"), default="json",
                       help="report body format")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(load_config(args.config))
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        line = COMMANDS[args.command](cfg, args, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    write_meta(out_dir, args.command, args)
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
