"""Monte Carlo arbitrage experiments and path-property verification.

Two kinds of study share one streaming engine (simulate a chunk of paths,
reduce it, move on, so huge path counts never materialize in memory):

* trading experiments: run a strategy under frictions across paths and
  aggregate terminal-value statistics, including the empirical loss
  fraction with a Clopper-Pearson interval;
* property verification: small-ball tracking probabilities, stickiness,
  and the sign-pattern (all four quadrants reachable) frequencies of
  increments, each with binomial error bars.

A Monte Carlo suite can refute a no-arbitrage claim but never prove one;
every report carries that caveat and the full provenance needed to replay
it (seed, model hash, grid, friction).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import beta

from .simulate import (
    Grid,
    GridMismatchError,
    LagModelSpec,
    PathBatch,
    _default_chunk,
    _make_context,
    to_prices,
)
from .strategies import (
    FrictionSpec,
    SimpleStrategy,
    execute,
    value_with_costs,
)

# Tolerance for matching rule time parameters to the grid step.
GRID_TOL = 1e-9
# |X_t2 - X_t1| below this counts as a sign tie, tabulated separately.
SIGN_TIE_TOL = 1e-14

SIGN_PATTERNS = ("++", "+-", "-+", "--")

DISCLAIMER = (
    "Empirical suite: it can refute a no-arbitrage claim but never prove "
    "one; statistics cover only the strategies and settings tried."
)


class DegenerateEventError(ValueError):
    """A conditioning event selected no paths."""


# ---------------------------------------------------------------------------
# Statistics helpers
# ---------------------------------------------------------------------------


def clopper_pearson_bounds(k: int, n: int, level: float = 0.99) -> tuple[float, float]:
    """One-sided lower and upper binomial bounds, each at the given level."""
    if not 0 <= k <= n or n <= 0:
        raise ValueError("need 0 <= k <= n with n > 0")
    if not 0.5 < level < 1.0:
        raise ValueError("level must lie in (0.5, 1)")
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(beta.ppf(alpha, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(level, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class ArbStats:
    """Terminal-value statistics of one strategy/friction experiment."""

    n_paths: int
    mean: float
    stderr: float
    t_stat: float
    loss_fraction: float
    loss_ci: tuple[float, float]
    win_fraction: float
    min_value: float
    max_value: float
    seed: int
    model_hash: str
    grid: Grid
    friction: FrictionSpec
    strategy_label: str = ""
    note: str = DISCLAIMER

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "mean": self.mean,
            "stderr": self.stderr,
            "t_stat": self.t_stat,
            "loss_fraction": self.loss_fraction,
            "loss_ci_lower": self.loss_ci[0],
            "loss_ci_upper": self.loss_ci[1],
            "win_fraction": self.win_fraction,
            "min_value": self.min_value,
            "max_value": self.max_value,
            "seed": self.seed,
            "model_hash": self.model_hash,
            "grid": self.grid.to_dict(),
            "friction": {
                "h": self.friction.h,
                "epsilon": self.friction.epsilon,
                "admissibility": self.friction.admissibility,
                "bound": self.friction.bound,
            },
            "strategy": self.strategy_label,
            "note": self.note,
        }


def _arb_stats_from_terminals(terminal: np.ndarray, seed: int, model_hash: str,
                              grid: Grid, friction: FrictionSpec,
                              label: str) -> ArbStats:
    n = terminal.size
    mean = float(terminal.mean())
    stderr = float(terminal.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if stderr > 0:
        t_stat = mean / stderr
    else:
        t_stat = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
    k_loss = int((terminal < 0).sum())
    return ArbStats(
        n_paths=n,
        mean=mean,
        stderr=stderr,
        t_stat=t_stat,
        loss_fraction=k_loss / n,
        loss_ci=clopper_pearson_bounds(k_loss, n, 0.99),
        win_fraction=float((terminal > 0).mean()),
        min_value=float(terminal.min()),
        max_value=float(terminal.max()),
        seed=seed,
        model_hash=model_hash,
        grid=grid,
        friction=friction,
        strategy_label=label,
    )


# ---------------------------------------------------------------------------
# Strategy factories
# ---------------------------------------------------------------------------


def _steps_on_grid(value: float, dt: float, name: str) -> int:
    k = int(round(value / dt))
    if k < 1 or abs(k * dt - value) > GRID_TOL * max(1.0, value):
        raise GridMismatchError(
            f"{name} {value} is not a positive integer multiple of the "
            f"grid step {dt}"
        )
    return k


def make_lag_exploit_rule(lookback: float, entry_threshold: float,
                          trade_interval: float, position_size: float,
                          max_rebalances: int = 10**9) -> SimpleStrategy:
    """Trade the follower on the leader's recent move.

    Every trade_interval, read the leader's log-price increment over
    [t - lookback, t]; if its magnitude exceeds entry_threshold, set the
    follower position to sign(increment) * position_size, otherwise go
    flat. The leader itself is never held. Decisions use only the passed
    history, so the rule is adapted by construction.
    """
    if not (lookback > 0 and trade_interval > 0):
        raise ValueError("lookback and trade_interval must be > 0")
    if not (math.isfinite(position_size) and position_size > 0):
        raise ValueError("position_size must be finite and > 0")
    if math.isnan(entry_threshold) or entry_threshold < 0:
        raise ValueError("entry_threshold must be >= 0")
    steps: dict[str, int] = {}

    def rule(i, times, x_hist, s_hist, positions, last_times):
        if i == 0:
            return positions
        if not steps:
            dt = times[1] - times[0]
            steps["look"] = _steps_on_grid(lookback, dt, "lookback")
            steps["interval"] = _steps_on_grid(trade_interval, dt, "trade_interval")
        if i % steps["interval"] != 0 or i < steps["look"]:
            return positions
        incr = x_hist[:, i, 0] - x_hist[:, i - steps["look"], 0]
        target = np.where(np.abs(incr) > entry_threshold,
                          np.sign(incr) * position_size, 0.0)
        out = positions.copy()
        out[:, 0] = 0.0
        out[:, 1] = target
        return out

    return SimpleStrategy(batch_rule=rule, max_rebalances=max_rebalances)


def make_random_rebalance_rule(trade_interval: float, position_size: float,
                               max_rebalances: int = 10**9) -> SimpleStrategy:
    """Rebalance the follower on its own last increment's sign.

    The follower's increments are serially independent under these models,
    so the rule has exactly zero predictive edge; it serves as the noise
    trader of the strategy suite. Driving the flips from the path itself
    keeps runs reproducible without consuming extra RNG streams.
    """
    if not trade_interval > 0:
        raise ValueError("trade_interval must be > 0")
    if not (math.isfinite(position_size) and position_size > 0):
        raise ValueError("position_size must be finite and > 0")
    steps: dict[str, int] = {}

    def rule(i, times, x_hist, s_hist, positions, last_times):
        if i == 0:
            return positions
        if not steps:
            dt = times[1] - times[0]
            steps["interval"] = _steps_on_grid(trade_interval, dt, "trade_interval")
        k = steps["interval"]
        if i % k != 0 or i < k:
            return positions
        incr = x_hist[:, i, 1] - x_hist[:, i - k, 1]
        out = positions.copy()
        out[:, 0] = 0.0
        out[:, 1] = np.sign(incr) * position_size
        return out

    return SimpleStrategy(batch_rule=rule, max_rebalances=max_rebalances)


def strategy_zoo(trade_interval: float = 0.01,
                 lookback: float = 0.095) -> list[tuple[str, SimpleStrategy]]:
    """The named strategies the no-arbitrage suite runs against.

    The suite can refute but never prove no-arbitrage; these are the
    strategies tried.
    """
    return [
        ("exploit_base",
         make_lag_exploit_rule(lookback, 0.0, trade_interval, 1.0)),
        ("exploit_short_window",
         make_lag_exploit_rule(0.05, 0.15, trade_interval, 2.0)),
        ("random_rebalance",
         make_random_rebalance_rule(trade_interval, 1.0)),
    ]


# ---------------------------------------------------------------------------
# Streaming engine
# ---------------------------------------------------------------------------


def _map_chunks(model: LagModelSpec, grid: Grid, n_paths: int, seed: int,
                path_offset: int, chunk_size: int | None, workers: int,
                fn: Callable) -> list:
    """Apply fn(lo, hi, values) to every path chunk, in chunk order."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    ctx = _make_context(model, grid)
    cs = chunk_size if chunk_size is not None else _default_chunk(model, grid, n_paths)
    if cs < 1:
        raise ValueError("chunk_size must be >= 1")
    end = path_offset + n_paths
    spans = [(lo, min(lo + cs, end)) for lo in range(path_offset, end, cs)]

    def job(span):
        lo, hi = span
        return fn(lo, hi, ctx.fill(seed, lo, hi))

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, spans))
    return [job(span) for span in spans]


def evaluate_strategy(batch: PathBatch, strategy: SimpleStrategy,
                      friction: FrictionSpec, label: str = "") -> ArbStats:
    """Run one strategy on an existing batch and aggregate terminal stats."""
    if batch.prices is None:
        batch = to_prices(batch)
    ex = execute(strategy, batch, friction)
    values = value_with_costs(ex, batch.prices, friction.epsilon)
    return _arb_stats_from_terminals(values[:, -1], batch.seed, batch.model_hash,
                                     batch.grid, friction, label)


def run_experiment(model: LagModelSpec, strategy: SimpleStrategy,
                   friction: FrictionSpec, grid: Grid, n_paths: int, seed: int,
                   *, label: str = "", path_offset: int = 0,
                   chunk_size: int | None = None, workers: int = 1) -> ArbStats:
    """Simulate, execute, and value a strategy; aggregate ArbStats.

    Paths are processed in chunks keyed to absolute path indices, so the
    result is independent of chunking and worker count.
    """
    model_hash = model.model_hash()
    terminal = np.empty(n_paths)

    def fn(lo, hi, values):
        chunk = PathBatch(grid=grid, n_paths=hi - lo, values=values, seed=seed,
                          model_hash=model_hash, path_offset=lo)
        chunk = to_prices(chunk)
        ex = execute(strategy, chunk, friction)
        vals = value_with_costs(ex, chunk.prices, friction.epsilon)
        terminal[lo - path_offset:hi - path_offset] = vals[:, -1]
        return None

    _map_chunks(model, grid, n_paths, seed, path_offset, chunk_size, workers, fn)
    return _arb_stats_from_terminals(terminal, seed, model_hash, grid, friction,
                                     label)


# ---------------------------------------------------------------------------
# Small ball and stickiness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmallBallQuery:
    """Track a target function from t0 within radius eps.

    target is a callable mapping absolute times (array of shape (m,)) to
    offsets, broadcastable to (m, len(components)); None means the zero
    target. It must vanish at t0. components selects which coordinates
    enter the max-norm.
    """

    t0: float
    eps: float
    target: Callable | None = None
    components: tuple[int, ...] = (0, 1)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t0) and self.t0 >= 0):
            raise ValueError("t0 must be finite and >= 0")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        comps = tuple(self.components)
        if not comps or len(set(comps)) != len(comps) \
                or any(c not in (0, 1) for c in comps):
            raise ValueError("components must be a nonempty subset of (0, 1)")
        object.__setattr__(self, "components", comps)

    def offsets(self, times: np.ndarray) -> np.ndarray:
        """Target values on the given absolute times, shape (m, n_comp)."""
        m = times.size
        if self.target is None:
            return np.zeros((m, len(self.components)))
        arr = np.asarray(self.target(times), dtype=float)
        out = np.broadcast_to(
            arr.reshape(m, -1) if arr.ndim == 1 else arr,
            (m, len(self.components)),
        ).astype(float)
        if not np.all(np.isfinite(out)):
            raise ValueError("target values must be finite")
        if np.max(np.abs(out[0])) > 1e-12:
            raise ValueError("target must vanish at t0")
        return out


def empirical_small_ball_many(
    model: LagModelSpec, queries: Sequence[SmallBallQuery], grid: Grid,
    n_paths: int, seed: int, *, path_offset: int = 0,
    chunk_size: int | None = None, workers: int = 1,
) -> list[tuple[float, float]]:
    """Estimate several small-ball probabilities from one set of paths.

    For each query, the estimate is the frequency of paths whose maximum
    deviation max-norm over grid times in [t0, T] stays strictly below
    eps. Returns one (estimate, stderr) pair per query, in order.
    """
    if not queries:
        return []
    prepared = []
    for q in queries:
        i0 = grid.index_of(q.t0)
        offs = q.offsets(grid.times[i0:])
        prepared.append((i0, np.asarray(q.components, dtype=int), offs, q.eps))

    def fn(lo, hi, values):
        counts = []
        for i0, comps, offs, eps in prepared:
            dev = values[:, i0:, comps] - values[:, i0:i0 + 1, comps] - offs
            sup = np.max(np.abs(dev), axis=(1, 2))
            counts.append(int((sup < eps).sum()))
        return counts

    per_chunk = _map_chunks(model, grid, n_paths, seed, path_offset, chunk_size,
                            workers, fn)
    totals = np.sum(np.asarray(per_chunk, dtype=np.int64), axis=0)
    out = []
    for k in totals:
        p = k / n_paths
        out.append((float(p), math.sqrt(p * (1.0 - p) / n_paths)))
    return out


def empirical_small_ball(model: LagModelSpec, query: SmallBallQuery, grid: Grid,
                         n_paths: int, seed: int, **kwargs) -> tuple[float, float]:
    """Frequency of tracking the query target within eps; see the many-form."""
    return empirical_small_ball_many(model, [query], grid, n_paths, seed,
                                     **kwargs)[0]


def empirical_stickiness(model: LagModelSpec, t: float, delta: float, grid: Grid,
                         n_paths: int, seed: int, **kwargs) -> tuple[float, float]:
    """Joint frequency that both components stay within delta of X_t until T."""
    query = SmallBallQuery(t0=t, eps=delta, target=None, components=(0, 1))
    return empirical_small_ball(model, query, grid, n_paths, seed, **kwargs)


# ---------------------------------------------------------------------------
# Sign-pattern (quadrant) frequencies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CudTable:
    """Joint sign-pattern frequencies of increments over [t1, t2].

    counts follows SIGN_PATTERNS order: (+,+), (+,-), (-,+), (-,-).
    Paths with either component's increment within the tie tolerance are
    tabulated in tie_count and belong to no pattern. Frequencies are
    relative to the n_event paths in the conditioning event.
    """

    t1: float
    t2: float
    n_paths: int
    n_event: int
    counts: tuple[int, int, int, int]
    tie_count: int

    def frequency(self, pattern: str) -> float:
        return self.counts[SIGN_PATTERNS.index(pattern)] / self.n_event

    def frequencies(self) -> dict[str, float]:
        return {pat: self.frequency(pat) for pat in SIGN_PATTERNS}

    def stderr(self, pattern: str) -> float:
        p = self.frequency(pattern)
        return math.sqrt(p * (1.0 - p) / self.n_event)

    def lower_bound(self, pattern: str, level: float = 0.99) -> float:
        k = self.counts[SIGN_PATTERNS.index(pattern)]
        return clopper_pearson_bounds(k, self.n_event, level)[0]

    def to_dict(self) -> dict:
        return {
            "t1": self.t1,
            "t2": self.t2,
            "n_paths": self.n_paths,
            "n_event": self.n_event,
            "tie_count": self.tie_count,
            "patterns": {
                pat: {
                    "count": self.counts[i],
                    "frequency": self.counts[i] / self.n_event,
                    "ci99_lower": self.lower_bound(pat),
                }
                for i, pat in enumerate(SIGN_PATTERNS)
            },
            "note": DISCLAIMER,
        }


def empirical_cud(model: LagModelSpec, t1: float, t2: float,
                  conditioning: Callable | None, grid: Grid, n_paths: int,
                  seed: int, *, path_offset: int = 0,
                  chunk_size: int | None = None, workers: int = 1) -> CudTable:
    """Tabulate the four joint sign patterns of (X1, X2) increments.

    conditioning, if given, is called per chunk as
    conditioning(times_up_to_t1, values_up_to_t1) and must return a
    boolean mask over the chunk's paths; it sees history only up to t1.
    Raises DegenerateEventError when the event selects no paths.
    """
    i1 = grid.index_of(t1)
    i2 = grid.index_of(t2)
    if i1 >= i2:
        raise ValueError("need t1 < t2 on the grid")
    times_hist = grid.times[: i1 + 1]

    def fn(lo, hi, values):
        if conditioning is None:
            mask = np.ones(hi - lo, dtype=bool)
        else:
            mask = np.asarray(conditioning(times_hist, values[:, : i1 + 1, :]))
            if mask.shape != (hi - lo,) or mask.dtype != bool:
                raise ValueError("conditioning must return a boolean path mask")
        d = values[:, i2, :] - values[:, i1, :]
        d = d[mask]
        tie = np.any(np.abs(d) < SIGN_TIE_TOL, axis=1)
        pos1, pos2 = d[:, 0] > 0, d[:, 1] > 0
        clean = ~tie
        counts = (
            int((clean & pos1 & pos2).sum()),
            int((clean & pos1 & ~pos2).sum()),
            int((clean & ~pos1 & pos2).sum()),
            int((clean & ~pos1 & ~pos2).sum()),
        )
        return (int(mask.sum()), counts, int(tie.sum()))

    per_chunk = _map_chunks(model, grid, n_paths, seed, path_offset, chunk_size,
                            workers, fn)
    n_event = sum(r[0] for r in per_chunk)
    if n_event == 0:
        raise DegenerateEventError(
            f"conditioning event selected none of the {n_paths} paths"
        )
    counts = tuple(sum(r[1][i] for r in per_chunk) for i in range(4))
    ties = sum(r[2] for r in per_chunk)
    return CudTable(t1=t1, t2=t2, n_paths=n_paths, n_event=n_event,
                    counts=counts, tie_count=ties)
