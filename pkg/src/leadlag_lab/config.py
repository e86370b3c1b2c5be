"""Strict JSON experiment configuration.

Every run is driven by a config file plus a seed, and together they
determine every output byte outside the metadata block. Parsing is
deliberately unforgiving: unknown keys are errors, and physical
parameters (lag, correlation, volatilities, cost rate, waiting time)
must be written out explicitly; their absence is an error rather than
a silent default.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .simulate import Grid, LagModelSpec
from .strategies import FrictionSpec, SimpleStrategy, hold_rule
from .experiments import make_lag_exploit_rule, make_random_rebalance_rule

GRID_REL_TOL = 1e-9

TOP_KEYS = {"model", "grid", "n_paths", "seed", "strategy", "friction",
            "outputs", "verifiers", "cps", "gsvz"}
OUTPUT_TOKENS = {"paths", "prices"}
VERIFIER_KINDS = {"small_ball", "stickiness", "cud"}

# Physical parameters that must be spelled out per model form.
REQUIRED_MODEL_KEYS = {
    "hry": {"form", "theta", "rho", "sigma1", "sigma2"},
    "spectral": {"form", "f", "sigma1", "sigma2"},
}


class ConfigError(ValueError):
    """The configuration is malformed; the run must not start."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    extra = set(d) - allowed
    _require(not extra, f"unknown {where} keys: {sorted(extra)}")


def _as_int(value: Any, name: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool),
             f"{name} must be an integer")
    return value


@dataclass(frozen=True)
class NamedStrategy:
    name: str
    params: dict
    strategy: SimpleStrategy


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed configuration; sections a command does not need stay None."""

    model: LagModelSpec | None
    grid: Grid | None
    n_paths: int | None
    seed: int | None
    strategy: NamedStrategy | None
    friction: FrictionSpec | None
    outputs: tuple[str, ...]
    verifiers: tuple[dict, ...]
    cps: dict | None
    gsvz: dict | None
    sha: str
    raw: dict = field(repr=False)

    def need(self, *names: str) -> None:
        """Raise unless every named section was present in the config."""
        for name in names:
            _require(getattr(self, name) is not None,
                     f"this command requires a '{name}' section")


def config_sha(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    _require(isinstance(raw, dict), "config root must be a JSON object")
    return raw


def _parse_model(d: Any) -> LagModelSpec:
    _require(isinstance(d, dict), "model must be an object")
    form = d.get("form")
    _require(form in REQUIRED_MODEL_KEYS,
             f"model form must be one of {sorted(REQUIRED_MODEL_KEYS)}, "
             f"got {form!r}")
    missing = REQUIRED_MODEL_KEYS[form] - set(d)
    _require(not missing,
             f"model is missing required physical parameters: "
             f"{sorted(missing)} (no defaults are applied)")
    try:
        return LagModelSpec.from_dict(d)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad model section: {exc}") from exc


def _parse_grid(d: Any) -> Grid:
    _require(isinstance(d, dict), "grid must be an object")
    _reject_unknown(d, {"t_end", "dt"}, "grid")
    _require("t_end" in d and "dt" in d, "grid needs t_end and dt")
    t_end, dt = d["t_end"], d["dt"]
    _require(isinstance(t_end, (int, float)) and isinstance(dt, (int, float)),
             "grid t_end and dt must be numbers")
    t_end, dt = float(t_end), float(dt)
    _require(math.isfinite(t_end) and t_end > 0, "t_end must be > 0")
    _require(math.isfinite(dt) and dt > 0, "dt must be > 0")
    ratio = t_end / dt
    n = round(ratio)
    _require(n >= 1 and abs(ratio - n) <= GRID_REL_TOL * max(1.0, ratio),
             f"t_end / dt = {ratio} is not an integer; the horizon must be "
             f"a whole number of steps")
    try:
        return Grid(dt=dt, n_steps=int(n))
    except ValueError as exc:
        raise ConfigError(f"bad grid: {exc}") from exc


STRATEGY_RULES = {
    "lag_exploit": {
        "required": {"lookback", "entry_threshold", "trade_interval",
                     "position_size"},
        "optional": {"max_rebalances"},
    },
    "random_rebalance": {
        "required": {"trade_interval", "position_size"},
        "optional": {"max_rebalances"},
    },
    "hold": {"required": set(), "optional": set()},
}


def _parse_strategy(d: Any) -> NamedStrategy:
    _require(isinstance(d, dict), "strategy must be an object")
    _reject_unknown(d, {"rule", "params"}, "strategy")
    name = d.get("rule")
    _require(name in STRATEGY_RULES,
             f"strategy rule must be one of {sorted(STRATEGY_RULES)}, "
             f"got {name!r}")
    params = d.get("params", {})
    _require(isinstance(params, dict), "strategy params must be an object")
    rules = STRATEGY_RULES[name]
    _reject_unknown(params, rules["required"] | rules["optional"],
                    f"strategy '{name}' param")
    missing = rules["required"] - set(params)
    _require(not missing, f"strategy '{name}' is missing params: "
                          f"{sorted(missing)}")
    try:
        if name == "lag_exploit":
            strat = make_lag_exploit_rule(
                lookback=float(params["lookback"]),
                entry_threshold=float(params["entry_threshold"]),
                trade_interval=float(params["trade_interval"]),
                position_size=float(params["position_size"]),
                max_rebalances=int(params.get("max_rebalances", 10 ** 9)),
            )
        elif name == "random_rebalance":
            strat = make_random_rebalance_rule(
                trade_interval=float(params["trade_interval"]),
                position_size=float(params["position_size"]),
                max_rebalances=int(params.get("max_rebalances", 10 ** 9)),
            )
        else:
            strat = SimpleStrategy(decision_rule=hold_rule)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad strategy params: {exc}") from exc
    return NamedStrategy(name=name, params=dict(params), strategy=strat)


def _parse_friction(d: Any) -> FrictionSpec:
    _require(isinstance(d, dict), "friction must be an object")
    _reject_unknown(d, {"h", "epsilon", "admissibility", "bound"}, "friction")
    _require("h" in d and "epsilon" in d,
             "friction needs explicit h and epsilon (no defaults)")
    try:
        return FrictionSpec(
            h=float(d["h"]), epsilon=float(d["epsilon"]),
            admissibility=d.get("admissibility", "none"),
            bound=float(d.get("bound", 0.0)),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad friction section: {exc}") from exc


VERIFIER_KEYS = {
    "small_ball": ({"kind", "t0", "eps"}, {"components"}),
    "stickiness": ({"kind", "t", "delta"}, set()),
    "cud": ({"kind", "t1", "t2"}, set()),
}


def _parse_verifiers(v: Any) -> tuple[dict, ...]:
    _require(isinstance(v, list) and v, "verifiers must be a nonempty list")
    out = []
    for i, d in enumerate(v):
        _require(isinstance(d, dict), f"verifier {i} must be an object")
        kind = d.get("kind")
        _require(kind in VERIFIER_KINDS,
                 f"verifier {i} kind must be one of {sorted(VERIFIER_KINDS)}")
        required, optional = VERIFIER_KEYS[kind]
        _reject_unknown(d, required | optional, f"verifier {i} ({kind})")
        missing = required - set(d)
        _require(not missing, f"verifier {i} ({kind}) missing: "
                              f"{sorted(missing)}")
        if kind == "small_ball":
            comps = d.get("components", [0, 1])
            _require(isinstance(comps, list) and comps
                     and all(c in (0, 1) for c in comps),
                     f"verifier {i} components must be a sublist of [0, 1]")
        out.append(dict(d))
    return tuple(out)


def _parse_cps(d: Any) -> dict:
    _require(isinstance(d, dict), "cps must be an object")
    _reject_unknown(d, {"tree_file", "tree", "mode", "epsilon", "eps_hi",
                        "tol"}, "cps")
    has_file = "tree_file" in d
    has_inline = "tree" in d
    _require(has_file != has_inline,
             "cps needs exactly one of tree_file or tree")
    mode = d.get("mode")
    _require(mode in ("min_eps", "find"),
             f"cps mode must be 'min_eps' or 'find', got {mode!r}")
    if mode == "find":
        _require("epsilon" in d, "cps mode 'find' needs an explicit epsilon")
        _require("eps_hi" not in d and "tol" not in d,
                 "eps_hi and tol apply only to mode 'min_eps'")
    else:
        _require("epsilon" not in d, "epsilon applies only to mode 'find'")
    return dict(d)


def _parse_gsvz(d: Any) -> dict:
    _require(isinstance(d, dict), "gsvz must be an object")
    _reject_unknown(d, {"f", "lambda0", "max_doublings"}, "gsvz")
    _require("f" in d and "lambda0" in d,
             "gsvz needs an explicit density f and lambda0")
    return dict(d)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate whatever sections are present; reject anything unknown."""
    _reject_unknown(raw, TOP_KEYS, "config")

    model = _parse_model(raw["model"]) if "model" in raw else None
    grid = _parse_grid(raw["grid"]) if "grid" in raw else None

    n_paths = None
    if "n_paths" in raw:
        n_paths = _as_int(raw["n_paths"], "n_paths")
        _require(n_paths >= 1, "n_paths must be >= 1")

    seed = None
    if "seed" in raw:
        seed = _as_int(raw["seed"], "seed")
        _require(seed >= 0, "seed must be >= 0")

    strategy = _parse_strategy(raw["strategy"]) if "strategy" in raw else None
    friction = _parse_friction(raw["friction"]) if "friction" in raw else None

    outputs: tuple[str, ...] = ("paths",)
    if "outputs" in raw:
        v = raw["outputs"]
        _require(isinstance(v, list) and v, "outputs must be a nonempty list")
        bad = set(v) - OUTPUT_TOKENS
        _require(not bad, f"unknown outputs: {sorted(bad)}")
        outputs = tuple(v)

    verifiers: tuple[dict, ...] = ()
    if "verifiers" in raw:
        verifiers = _parse_verifiers(raw["verifiers"])

    cps = _parse_cps(raw["cps"]) if "cps" in raw else None
    gsvz = _parse_gsvz(raw["gsvz"]) if "gsvz" in raw else None

    return ExperimentConfig(
        model=model, grid=grid, n_paths=n_paths, seed=seed, strategy=strategy,
        friction=friction, outputs=outputs, verifiers=verifiers, cps=cps,
        gsvz=gsvz, sha=config_sha(raw), raw=raw,
    )
