"""Deterministic correlation kernels rho: [0, inf) -> [-1, 1].

A kernel is stored as samples on a breakpoint grid plus an evaluation rule
(piecewise-constant or piecewise-linear). Evaluation is deterministic and
integrals are exact for both rules, which the simulators rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIECEWISE_CONSTANT = "piecewise_constant"
PIECEWISE_LINEAR = "piecewise_linear"


@dataclass(frozen=True)
class CorrelationKernel:
    """Samples (ts, vals) with an interpolation rule.

    piecewise_constant: rho(u) = vals[i] on [ts[i], ts[i+1]), extended by
    vals[-1] beyond the last breakpoint.
    piecewise_linear: linear interpolation between samples, clamped to the
    end values outside [ts[0], ts[-1]].
    """

    ts: np.ndarray
    vals: np.ndarray
    rule: str = PIECEWISE_CONSTANT

    def __post_init__(self) -> None:
        ts = np.asarray(self.ts, dtype=float)
        vals = np.asarray(self.vals, dtype=float)
        if ts.ndim != 1 or vals.ndim != 1 or ts.size != vals.size or ts.size == 0:
            raise ValueError("ts and vals must be 1-d arrays of equal nonzero length")
        if ts[0] != 0.0:
            raise ValueError("kernel breakpoints must start at 0")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("kernel breakpoints must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("kernel samples must be finite")
        if np.max(np.abs(vals)) > 1.0:
            raise ValueError("kernel samples must lie in [-1, 1]")
        if self.rule not in (PIECEWISE_CONSTANT, PIECEWISE_LINEAR):
            raise ValueError(f"unknown kernel rule {self.rule!r}")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "vals", vals)
        self.ts.flags.writeable = False
        self.vals.flags.writeable = False

    @staticmethod
    def constant(value: float) -> "CorrelationKernel":
        return CorrelationKernel(np.array([0.0]), np.array([float(value)]))

    @staticmethod
    def piecewise_constant(ts, vals) -> "CorrelationKernel":
        return CorrelationKernel(np.asarray(ts, float), np.asarray(vals, float))

    @staticmethod
    def piecewise_linear(ts, vals) -> "CorrelationKernel":
        return CorrelationKernel(
            np.asarray(ts, float), np.asarray(vals, float), rule=PIECEWISE_LINEAR
        )

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("kernel evaluated at negative time")
        if self.rule == PIECEWISE_LINEAR:
            out = np.interp(u, self.ts, self.vals)
        else:
            idx = np.searchsorted(self.ts, u, side="right") - 1
            out = self.vals[np.clip(idx, 0, self.vals.size - 1)]
        return out if out.ndim else float(out)

    def integral(self, s: float, t: float) -> float:
        """Exact integral of rho over [s, t]; requires 0 <= s < t."""
        if not 0 <= s < t:
            raise ValueError(f"need 0 <= s < t, got s={s}, t={t}")
        # Integrate between consecutive knots so both rules are exact.
        interior = self.ts[(self.ts > s) & (self.ts < t)]
        nodes = np.concatenate(([s], interior, [t]))
        if self.rule == PIECEWISE_LINEAR:
            fvals = np.interp(nodes, self.ts, self.vals)
            return float(np.sum(0.5 * (fvals[:-1] + fvals[1:]) * np.diff(nodes)))
        left = self(nodes[:-1])
        return float(np.sum(np.asarray(left) * np.diff(nodes)))

    def to_dict(self) -> dict:
        return {"ts": self.ts.tolist(), "vals": self.vals.tolist(), "rule": self.rule}

    @staticmethod
    def from_dict(d: dict) -> "CorrelationKernel":
        extra = set(d) - {"ts", "vals", "rule"}
        if extra:
            raise ValueError(f"unknown kernel keys {sorted(extra)}")
        return CorrelationKernel(
            np.asarray(d["ts"], float),
            np.asarray(d["vals"], float),
            rule=d.get("rule", PIECEWISE_CONSTANT),
        )


def eval_rho_integral(rho: CorrelationKernel, s: float, t: float) -> float:
    """Integral of a correlation kernel over [s, t] (exact for both rules)."""
    return rho.integral(s, t)


@dataclass(frozen=True)
class StepFunction:
    """Positive piecewise-constant function of time (volatility profiles)."""

    ts: np.ndarray
    vals: np.ndarray

    def __post_init__(self) -> None:
        ts = np.asarray(self.ts, dtype=float)
        vals = np.asarray(self.vals, dtype=float)
        if ts.ndim != 1 or vals.ndim != 1 or ts.size != vals.size or ts.size == 0:
            raise ValueError("ts and vals must be 1-d arrays of equal nonzero length")
        if ts[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(vals)) and np.all(vals > 0)):
            raise ValueError("values must be finite and positive")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "vals", vals)
        self.ts.flags.writeable = False
        self.vals.flags.writeable = False

    @staticmethod
    def constant(value: float) -> "StepFunction":
        return StepFunction(np.array([0.0]), np.array([float(value)]))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self.ts, u, side="right") - 1
        out = self.vals[np.clip(idx, 0, self.vals.size - 1)]
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"ts": self.ts.tolist(), "vals": self.vals.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "StepFunction":
        extra = set(d) - {"ts", "vals"}
        if extra:
            raise ValueError(f"unknown step-function keys {sorted(extra)}")
        return StepFunction(np.asarray(d["ts"], float), np.asarray(d["vals"], float))
