"""Simple trading strategies, timing constraints, and value processes.

A strategy holds piecewise-constant positions that change only at grid
times. Execution walks each path forward, asking a decision rule for a
target position and applying it only when the minimal waiting time since
the last rebalance has passed (proposals arriving too early are discarded,
not queued). The recorded execution is a step function of post-trade
positions, from which the frictionless value, the running total variation
of the position, and the transaction-cost value follow as exact sums.

Cost conventions: every position change (including the initial entry at
t=0) is charged at the instant it happens, and the liquidation term at an
evaluation time applies to the post-trade position. Trading to flat
therefore pays the variation charge once and no liquidation penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .simulate import Grid, PathBatch

ADMISSIBILITY_MODES = ("none", "uniform", "numeraire_free")

# Grid-time comparisons absorb accumulated float error at this scale.
TIME_TOL = 1e-9


class StrategyRuleError(ValueError):
    """A decision rule returned something unusable."""


@dataclass(frozen=True)
class FrictionSpec:
    """Trading frictions: waiting time h, cost rate epsilon, admissibility.

    admissibility "uniform" requires the cost value to stay above -bound;
    "numeraire_free" requires it to stay above -bound * (1 + S1 + S2).
    """

    h: float = 0.0
    epsilon: float = 0.0
    admissibility: str = "none"
    bound: float = 0.0

    def __post_init__(self) -> None:
        for name in ("h", "epsilon", "bound"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")
            object.__setattr__(self, name, v)
        if self.admissibility not in ADMISSIBILITY_MODES:
            raise ValueError(f"unknown admissibility mode {self.admissibility!r}")
        if self.admissibility != "none" and self.bound <= 0:
            raise ValueError("admissibility bound must be > 0")


@dataclass(frozen=True)
class SimpleStrategy:
    """A decision rule plus a bound on the number of rebalances.

    Exactly one of decision_rule / batch_rule must be set.

    decision_rule(times, x_hist, s_hist, position, last_time) is called
    per path at every grid time with the history up to and including that
    time (log prices and prices), the current position (2-vector), and
    the last rebalance time. It returns "hold" or a target 2-vector.

    batch_rule(i, times, x_hist, s_hist, positions, last_times) is the
    vectorized form: histories carry all paths, positions is (n_paths, 2),
    and it returns target positions (n_paths, 2); returning the current
    position for a path means hold. Use this for large batches.

    max_rebalances bounds the number of position changes strictly after
    t=0; setting the initial position at t=0 is not counted. Proposals
    beyond the budget are discarded.
    """

    decision_rule: Callable | None = None
    batch_rule: Callable | None = None
    max_rebalances: int = 10**9

    def __post_init__(self) -> None:
        if (self.decision_rule is None) == (self.batch_rule is None):
            raise ValueError("set exactly one of decision_rule, batch_rule")
        if not (isinstance(self.max_rebalances, (int, np.integer))
                and self.max_rebalances >= 0):
            raise ValueError("max_rebalances must be an integer >= 0")


@dataclass(frozen=True, eq=False)
class StrategyExecution:
    """Realized rebalance times and positions on a batch of paths.

    times[p] and positions[p] list the events of path p, starting with
    the initial entry (0, phi_0) (phi_0 may be the zero vector).
    pos_grid[p, i] is the post-trade position at grid node i, held over
    (t_i, t_{i+1}]. forced_liquidation flags paths whose terminal
    position is nonzero, so valuing them at the horizon involves the
    mandatory liquidation charge.
    """

    grid: Grid
    n_paths: int
    times: tuple
    positions: tuple
    pos_grid: np.ndarray
    forced_liquidation: np.ndarray
    n_rebalances: np.ndarray

    def __post_init__(self) -> None:
        if len(self.times) != self.n_paths or len(self.positions) != self.n_paths:
            raise ValueError("need one event list per path")
        expected = (self.n_paths, self.grid.n_steps + 1, 2)
        if self.pos_grid.shape != expected:
            raise ValueError(f"pos_grid shape {self.pos_grid.shape} != {expected}")
        if not np.all(np.isfinite(self.pos_grid)):
            raise ValueError("positions must be finite")
        t_end = self.grid.t_end + TIME_TOL * max(1.0, self.grid.t_end)
        for p in range(self.n_paths):
            ts = self.times[p]
            if ts.size != self.positions[p].shape[0]:
                raise ValueError(f"path {p}: times/positions length mismatch")
            if ts.size == 0 or ts[0] != self.grid.t_start:
                raise ValueError(f"path {p}: first event must sit at the grid start")
            if np.any(np.diff(ts) < 0) or ts[-1] > t_end:
                raise ValueError(f"path {p}: event times must be nondecreasing and <= T")


def _min_gap_steps(h: float, dt: float) -> int:
    """Smallest integer g with g*dt >= h, up to tolerance."""
    if h <= 0:
        return 0
    return max(0, math.ceil((h - TIME_TOL * max(1.0, h)) / dt))


def _wrap_per_path_rule(rule: Callable) -> Callable:
    def batch_rule(i, times, x_hist, s_hist, positions, last_times):
        n_paths = positions.shape[0]
        out = positions.copy()
        for p in range(n_paths):
            res = rule(times, x_hist[p], s_hist[p], positions[p].copy(),
                       float(last_times[p]))
            if isinstance(res, str):
                if res != "hold":
                    raise StrategyRuleError(
                        f"path {p}, t={times[-1]}: unknown directive {res!r}"
                    )
                continue
            arr = np.asarray(res, dtype=float)
            if arr.shape != (2,):
                raise StrategyRuleError(
                    f"path {p}, t={times[-1]}: position shape {arr.shape}, "
                    "expected (2,)"
                )
            out[p] = arr
        return out

    return batch_rule


def execute(strategy: SimpleStrategy, batch: PathBatch,
            friction: FrictionSpec) -> StrategyExecution:
    """Run the decision rule over a batch under the waiting-time filter.

    A proposal at time t is applied only when t minus the last rebalance
    time is at least h; blocked proposals are discarded. Proposals equal
    to the current position are holds and consume nothing.
    """
    if batch.prices is None:
        raise ValueError("execute needs prices; apply to_prices to the batch first")
    rule = strategy.batch_rule or _wrap_per_path_rule(strategy.decision_rule)
    grid = batch.grid
    n_paths, n_nodes = batch.n_paths, grid.n_steps + 1
    times = grid.times
    gap = _min_gap_steps(friction.h, grid.dt)

    pos = np.zeros((n_paths, 2))
    last_idx = np.zeros(n_paths, dtype=int)
    n_events = np.zeros(n_paths, dtype=int)
    pos_grid = np.empty((n_paths, n_nodes, 2))
    event_log: list[tuple[int, np.ndarray, np.ndarray]] = []

    for i in range(n_nodes):
        x_hist = batch.values[:, : i + 1, :]
        s_hist = batch.prices[:, : i + 1, :]
        props = rule(i, times[: i + 1], x_hist, s_hist, pos.copy(),
                     times[last_idx])
        props = np.asarray(props, dtype=float)
        if props.shape != (n_paths, 2):
            raise StrategyRuleError(
                f"t={times[i]}: rule returned shape {props.shape}, "
                f"expected {(n_paths, 2)}"
            )
        finite = np.isfinite(props).all(axis=1)
        if not finite.all():
            p = int(np.argmin(finite))
            raise StrategyRuleError(
                f"path {p}, t={times[i]}: rule returned non-finite position "
                f"{props[p]}"
            )
        changed = np.any(props != pos, axis=1)
        if i == 0:
            allowed = changed
        else:
            allowed = changed & (i - last_idx >= gap) \
                & (n_events < strategy.max_rebalances)
            if np.any(allowed):
                n_events[allowed] += 1
                last_idx[allowed] = i
                event_log.append((i, np.where(allowed)[0], props[allowed].copy()))
        pos[allowed] = props[allowed]
        pos_grid[:, i, :] = pos

    ev_times: list[list[float]] = [[times[0]] for _ in range(n_paths)]
    ev_pos: list[list[np.ndarray]] = [[pos_grid[p, 0, :]] for p in range(n_paths)]
    for i, idxs, phis in event_log:
        t = float(times[i])
        for k, p in enumerate(idxs):
            ev_times[p].append(t)
            ev_pos[p].append(phis[k])
    return StrategyExecution(
        grid=grid,
        n_paths=n_paths,
        times=tuple(np.asarray(t, dtype=float) for t in ev_times),
        positions=tuple(np.asarray(phi, dtype=float) for phi in ev_pos),
        pos_grid=pos_grid,
        forced_liquidation=np.any(pos_grid[:, -1, :] != 0.0, axis=1),
        n_rebalances=n_events,
    )


@dataclass(frozen=True)
class CheriditoReport:
    """Whether every inter-rebalance gap satisfies the waiting time."""

    passed: bool
    min_gap: float
    n_paths_violating: int
    first_violation: tuple[int, int] | None

    def __bool__(self) -> bool:
        return self.passed


def validate_cheridito(execution: StrategyExecution, h: float) -> CheriditoReport:
    """Check every consecutive rebalance gap against the waiting time h."""
    if not (math.isfinite(h) and h >= 0):
        raise ValueError("h must be finite and >= 0")
    tol = TIME_TOL * max(1.0, h)
    min_gap = math.inf
    violating = 0
    first = None
    for p in range(execution.n_paths):
        gaps = np.diff(execution.times[p])
        if gaps.size == 0:
            continue
        g = float(gaps.min())
        min_gap = min(min_gap, g)
        bad = np.where(gaps < h - tol)[0]
        if bad.size:
            violating += 1
            if first is None:
                first = (p, int(bad[0]) + 1)
    return CheriditoReport(
        passed=first is None,
        min_gap=min_gap,
        n_paths_violating=violating,
        first_violation=first,
    )


def _check_prices(execution: StrategyExecution, prices: np.ndarray) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    expected = (execution.n_paths, execution.grid.n_steps + 1, 2)
    if prices.shape != expected:
        raise ValueError(f"prices shape {prices.shape} != {expected}")
    return prices


def value_frictionless(execution: StrategyExecution, prices: np.ndarray,
                       v: float = 0.0) -> np.ndarray:
    """Wealth path from initial capital v: the exact telescoping sum.

    Returns an (n_paths, n_nodes) array with V[:, 0] = v; the increment
    over (t_i, t_{i+1}] is the post-trade position at t_i applied to the
    price increment.
    """
    prices = _check_prices(execution, prices)
    gains = np.einsum("pic,pic->pi", execution.pos_grid[:, :-1, :],
                      np.diff(prices, axis=1))
    out = np.empty((execution.n_paths, execution.grid.n_steps + 1))
    out[:, 0] = v
    np.cumsum(gains, axis=1, out=out[:, 1:])
    out[:, 1:] += v
    return out


def _position_jumps(execution: StrategyExecution) -> np.ndarray:
    """|Position change| charged at each grid node, per component."""
    start = np.abs(execution.pos_grid[:, :1, :])
    later = np.abs(np.diff(execution.pos_grid, axis=1))
    return np.concatenate([start, later], axis=1)


def total_variation(execution: StrategyExecution) -> np.ndarray:
    """Running total variation of the position, per component.

    Includes the initial jump from flat to phi_0 at t=0; each change is
    counted at the instant it happens. Shape (n_paths, n_nodes, 2).
    """
    return np.cumsum(_position_jumps(execution), axis=1)


def value_with_costs(execution: StrategyExecution, prices: np.ndarray,
                     epsilon: float) -> np.ndarray:
    """Value net of proportional costs and the liquidation charge.

    V^eps_t = (telescoping gains) - eps * sum_i int_0^t S^i d TV(phi^i)
    - eps * sum_i |phi^i_t| S^i_t, evaluated at every grid node with the
    post-trade position at t. With epsilon = 0 this equals
    value_frictionless(v=0) exactly.
    """
    if not (math.isfinite(epsilon) and epsilon >= 0):
        raise ValueError("epsilon must be finite and >= 0")
    prices = _check_prices(execution, prices)
    if np.any(prices <= 0):
        raise ValueError("prices must be strictly positive")
    gains = value_frictionless(execution, prices, 0.0)
    if epsilon == 0.0:
        return gains
    trade_costs = np.cumsum(
        np.sum(prices * _position_jumps(execution), axis=2), axis=1)
    liquidation = np.sum(np.abs(execution.pos_grid) * prices, axis=2)
    return gains - epsilon * trade_costs - epsilon * liquidation


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of an admissibility check, with the first violation if any."""

    passed: bool
    mode: str
    first_violation: tuple[int, float, float, float] | None

    def __bool__(self) -> bool:
        return self.passed


def check_admissible(values: np.ndarray, prices: np.ndarray,
                     friction: FrictionSpec, grid: Grid) -> AdmissibilityReport:
    """Check a value path array against the admissibility floor.

    uniform mode requires values >= -bound everywhere; numeraire_free
    mode requires values >= -bound * (1 + S1_t + S2_t). The first
    violation is reported as (path, t, value, floor).
    """
    if friction.admissibility == "none":
        raise ValueError("admissibility mode 'none' has nothing to check")
    values = np.asarray(values, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if values.ndim != 2 or prices.shape != values.shape + (2,):
        raise ValueError("values must be (n_paths, n_nodes) with matching prices")
    if friction.admissibility == "uniform":
        floor = np.full_like(values, -friction.bound)
    else:
        floor = -friction.bound * (1.0 + prices[:, :, 0] + prices[:, :, 1])
    bad = values < floor
    if not np.any(bad):
        return AdmissibilityReport(True, friction.admissibility, None)
    p, i = np.argwhere(bad)[0]
    return AdmissibilityReport(
        False,
        friction.admissibility,
        (int(p), float(grid.times[i]), float(values[p, i]), float(floor[p, i])),
    )


def export_execution_csv(execution: StrategyExecution, csv_path: str,
                         path_offset: int = 0) -> None:
    """One row per rebalance event: path_id, j, tau_j, phi1_j, phi2_j."""
    with open(csv_path, "w", newline="") as fh:
        fh.write("path_id,j,tau_j,phi1_j,phi2_j\n")
        for p in range(execution.n_paths):
            ts, phis = execution.times[p], execution.positions[p]
            for j in range(ts.size):
                fh.write(f"{path_offset + p},{j},{float(ts[j])!r},"
                         f"{float(phis[j, 0])!r},{float(phis[j, 1])!r}\n")


def export_values_csv(grid: Grid, values: np.ndarray, csv_path: str,
                      path_offset: int = 0) -> None:
    """One row per (path, node): path_id, t, V."""
    values = np.asarray(values, dtype=float)
    times = grid.times
    with open(csv_path, "w", newline="") as fh:
        fh.write("path_id,t,V\n")
        for p in range(values.shape[0]):
            for i in range(values.shape[1]):
                fh.write(f"{path_offset + p},{float(times[i])!r},"
                         f"{float(values[p, i])!r}\n")


def hold_rule(*_args, **_kwargs) -> str:
    """Decision rule that never trades."""
    return "hold"


def buy_and_hold_rule(position: Sequence[float]) -> Callable:
    """Rule that enters the given position at t=0 and never trades again."""
    target = np.asarray(position, dtype=float)
    if target.shape != (2,):
        raise ValueError("position must be a 2-vector")

    def rule(times, x_hist, s_hist, pos, last_time):
        if times[-1] == times[0]:
            return target
        return "hold"

    return rule
