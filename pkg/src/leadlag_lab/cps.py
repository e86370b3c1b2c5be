"""Scenario trees and epsilon-consistent price systems via linear programming.

A consistent price system within proportional cost epsilon is a pair
(M, Q): a positive martingale M under a measure Q, with each component of
M pinned inside the band [S/(1+eps), (1+eps)S] around the tree's prices.
Existence on a scenario tree is a pure feasibility question, linear after
the substitution m = q * M where q is the node mass of Q, so one LP solve
answers it with a residual certificate either way.

For a chain (one node per level) the answer is closed-form: a band within
cost eps exists iff (1+eps)^2 >= max(S)/min(S) in each component, which
pins the bisection in min_eps_cps and anchors the exactness tests.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

# Scale for the node-mass floor: q_min = Q_MIN_SCALE / (nodes at the level).
Q_MIN_SCALE = 1e-9
# Relative residual a feasible solution must certify.
RESIDUAL_TOL = 1e-8

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"

_HIGHS_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
}


class TreeStructureError(ValueError):
    """The node set does not form a valid rooted scenario tree."""


@dataclass(frozen=True)
class TreeNode:
    """One tree node: position, parent link, price pair, reference weight."""

    id: int
    level: int
    parent: int | None
    S1: float
    S2: float
    ref_weight: float

    def __post_init__(self) -> None:
        if self.id < 0 or self.level < 0:
            raise ValueError("id and level must be nonnegative")
        for name in ("S1", "S2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0")
        if not (math.isfinite(self.ref_weight) and self.ref_weight > 0):
            raise ValueError("ref_weight must be finite and > 0")

    @property
    def prices(self) -> tuple[float, float]:
        return (self.S1, self.S2)


@dataclass(frozen=True)
class ScenarioTree:
    """Rooted tree of price scenarios over strictly increasing level times.

    Exactly one root at level 0; every other node points to a parent one
    level up; every non-leaf node has at least one child; per level the
    reference weights are positive and sum to one.
    """

    levels: tuple[float, ...]
    nodes: tuple[TreeNode, ...]

    def __post_init__(self) -> None:
        levels = tuple(float(t) for t in self.levels)
        nodes = tuple(self.nodes)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "nodes", nodes)
        if not levels or any(not math.isfinite(t) for t in levels):
            raise TreeStructureError("levels must be finite and nonempty")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise TreeStructureError("level times must be strictly increasing")
        if not nodes:
            raise TreeStructureError("tree has no nodes")
        ids = [n.id for n in nodes]
        if ids != list(range(len(nodes))):
            raise TreeStructureError("node ids must be 0..K-1 in order")
        n_levels = len(levels)
        roots = [n for n in nodes if n.level == 0]
        if len(roots) != 1 or roots[0].parent is not None:
            raise TreeStructureError("need exactly one parentless root at level 0")
        has_child = set()
        for n in nodes:
            if n.level >= n_levels:
                raise TreeStructureError(f"node {n.id} level beyond the last")
            if n.level > 0:
                if n.parent is None or not 0 <= n.parent < len(nodes):
                    raise TreeStructureError(f"node {n.id} has no valid parent")
                if nodes[n.parent].level != n.level - 1:
                    raise TreeStructureError(
                        f"node {n.id} parent is not one level up"
                    )
                has_child.add(n.parent)
        for n in nodes:
            if n.level < n_levels - 1 and n.id not in has_child:
                raise TreeStructureError(f"internal node {n.id} has no children")
        for lev in range(n_levels):
            w = sum(n.ref_weight for n in nodes if n.level == lev)
            if abs(w - 1.0) > 1e-9:
                raise TreeStructureError(
                    f"level {lev} reference weights sum to {w}, not 1"
                )

    # -- structure ----------------------------------------------------------

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def root(self) -> TreeNode:
        return next(n for n in self.nodes if n.level == 0)

    def nodes_at(self, level: int) -> list[TreeNode]:
        return [n for n in self.nodes if n.level == level]

    def children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            if n.parent is not None:
                out[n.parent].append(n.id)
        return out

    # -- constructors -------------------------------------------------------

    @staticmethod
    def chain(prices: Sequence[tuple[float, float]],
              times: Sequence[float] | None = None) -> "ScenarioTree":
        """One node per level, in order; times default to 0, 1, 2, ..."""
        if times is None:
            times = tuple(float(k) for k in range(len(prices)))
        nodes = tuple(
            TreeNode(id=k, level=k, parent=None if k == 0 else k - 1,
                     S1=float(p[0]), S2=float(p[1]), ref_weight=1.0)
            for k, p in enumerate(prices)
        )
        return ScenarioTree(levels=tuple(times), nodes=nodes)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "nodes": [
                {"id": n.id, "level": n.level, "parent": n.parent,
                 "S1": n.S1, "S2": n.S2, "ref_weight": n.ref_weight}
                for n in self.nodes
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "ScenarioTree":
        unknown = set(d) - {"levels", "nodes"}
        if unknown:
            raise ValueError(f"unknown tree keys: {sorted(unknown)}")
        node_keys = {"id", "level", "parent", "S1", "S2", "ref_weight"}
        nodes = []
        for nd in d["nodes"]:
            bad = set(nd) - node_keys
            if bad:
                raise ValueError(f"unknown node keys: {sorted(bad)}")
            parent = nd["parent"]
            nodes.append(TreeNode(
                id=int(nd["id"]), level=int(nd["level"]),
                parent=None if parent is None else int(parent),
                S1=float(nd["S1"]), S2=float(nd["S2"]),
                ref_weight=float(nd["ref_weight"]),
            ))
        return ScenarioTree(levels=tuple(float(t) for t in d["levels"]),
                            nodes=tuple(nodes))


TREE_CSV_HEADER = ["level", "id", "parent", "S1", "S2", "ref_weight"]


def tree_to_csv(tree: ScenarioTree, path: str) -> None:
    """Write nodes as CSV; level times ride in a comment-free first column
    convention (times are recoverable only if integral; use JSON for
    general times)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TREE_CSV_HEADER)
        for n in tree.nodes:
            w.writerow([n.level, n.id, "" if n.parent is None else n.parent,
                        repr(float(n.S1)), repr(float(n.S2)),
                        repr(float(n.ref_weight))])


def tree_from_csv(path: str, times: Sequence[float] | None = None) -> ScenarioTree:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TREE_CSV_HEADER:
        raise ValueError(f"expected header {TREE_CSV_HEADER}")
    nodes = []
    for lev, nid, parent, s1, s2, w in rows[1:]:
        nodes.append(TreeNode(
            id=int(nid), level=int(lev),
            parent=None if parent == "" else int(parent),
            S1=float(s1), S2=float(s2), ref_weight=float(w),
        ))
    nodes.sort(key=lambda n: n.id)
    if times is None:
        times = tuple(float(k) for k in range(max(n.level for n in nodes) + 1))
    return ScenarioTree(levels=tuple(times), nodes=tuple(nodes))


# ---------------------------------------------------------------------------
# Tree construction from simulated paths
# ---------------------------------------------------------------------------


def _quantile_bins(x: np.ndarray, k: int) -> np.ndarray:
    """Assign k quantile bins (possibly fewer when edges collapse)."""
    if k <= 1:
        return np.zeros(x.size, dtype=int)
    edges = np.quantile(x, np.linspace(0, 1, k + 1)[1:-1])
    return np.searchsorted(edges, x, side="right")


def build_tree(batch, levels: Sequence[float], branching) -> ScenarioTree:
    """Cluster simulated prices into a scenario tree.

    At each level time the paths' price pairs are grouped by per-component
    quantile bins (about sqrt(b) x b/sqrt(b) cells for a branching of b);
    each nonempty cell becomes a node with centroid prices and a frequency
    weight. Parents follow the majority of member paths' previous-level
    cells, ties to the lower node id. Levels whose binning produces empty
    cells are rebinned with fewer cells. Internal nodes left childless by
    the majority vote are pruned and the weights renormalized.
    """
    if batch.prices is None:
        raise ValueError("batch has no prices; run to_prices first")
    times = [float(t) for t in levels]
    if len(times) < 2:
        raise ValueError("need at least two level times")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("level times must be strictly increasing")
    idx = [batch.grid.index_of(t) for t in times]
    n_paths = batch.n_paths
    if n_paths < 1:
        raise ValueError("batch has no paths")
    n_levels = len(times)
    if isinstance(branching, int):
        branch = [branching] * (n_levels - 1)
    else:
        branch = [int(b) for b in branching]
    if len(branch) != n_levels - 1 or any(b < 1 for b in branch):
        raise ValueError("branching must give one count >= 1 per level past "
                         "the root")

    # Per-level cluster labels; level 0 is the single root cluster.
    labels = [np.zeros(n_paths, dtype=int)]
    counts = [np.array([n_paths])]
    for lev in range(1, n_levels):
        s = batch.prices[:, idx[lev], :]
        for b in range(branch[lev - 1], 0, -1):
            b1 = max(1, int(math.isqrt(b)))
            b2 = max(1, b // b1)
            cell = _quantile_bins(s[:, 0], b1) * b2 + _quantile_bins(s[:, 1], b2)
            uniq, lab, cnt = np.unique(cell, return_inverse=True,
                                       return_counts=True)
            if uniq.size == b1 * b2 or b == 1:
                break
        labels.append(lab)
        counts.append(cnt)

    # Nodes per level: centroid prices, frequency weights, majority parents.
    level_nodes = []
    for lev in range(n_levels):
        k = counts[lev].size
        s = batch.prices[:, idx[lev], :]
        cent = np.zeros((k, 2))
        np.add.at(cent, labels[lev], s)
        cent /= counts[lev][:, None]
        parents = np.full(k, -1)
        if lev > 0:
            prev_k = counts[lev - 1].size
            for c in range(k):
                votes = np.bincount(labels[lev - 1][labels[lev] == c],
                                    minlength=prev_k)
                parents[c] = int(votes.argmax())
        level_nodes.append({"cent": cent, "count": counts[lev],
                            "parent": parents})

    # Prune internal clusters the majority vote left childless.
    alive = [np.ones(counts[lev].size, dtype=bool) for lev in range(n_levels)]
    changed = True
    while changed:
        changed = False
        for lev in range(n_levels - 2, -1, -1):
            child_pars = level_nodes[lev + 1]["parent"][alive[lev + 1]]
            for c in np.nonzero(alive[lev])[0]:
                if c not in child_pars:
                    alive[lev][c] = False
                    changed = True
    if not alive[0][0]:
        raise TreeStructureError("pruning removed the root; no usable tree")

    nodes = []
    id_map = [np.full(counts[lev].size, -1) for lev in range(n_levels)]
    next_id = 0
    for lev in range(n_levels):
        live = np.nonzero(alive[lev])[0]
        total = level_nodes[lev]["count"][live].sum()
        for c in live:
            id_map[lev][c] = next_id
            parent = None
            if lev > 0:
                parent = int(id_map[lev - 1][level_nodes[lev]["parent"][c]])
                if parent < 0:
                    raise TreeStructureError(
                        f"level {lev} cluster voted for a pruned parent"
                    )
            cent = level_nodes[lev]["cent"][c]
            nodes.append(TreeNode(
                id=next_id, level=lev, parent=parent,
                S1=float(cent[0]), S2=float(cent[1]),
                ref_weight=float(level_nodes[lev]["count"][c] / total),
            ))
            next_id += 1
    return ScenarioTree(levels=tuple(times), nodes=tuple(nodes))


# ---------------------------------------------------------------------------
# The consistent-price-system LP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CpsSolution:
    """LP outcome: node masses q, martingale prices M, residual certificate."""

    status: str
    epsilon: float
    node_ids: tuple[int, ...]
    q: np.ndarray
    M: np.ndarray
    certificate: float

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def __bool__(self) -> bool:
        return self.feasible

    def to_dict(self) -> dict:
        out = {"status": self.status, "epsilon": self.epsilon,
               "certificate": self.certificate, "nodes": []}
        if self.q.size:
            for j, nid in enumerate(self.node_ids):
                out["nodes"].append({"id": nid, "M1": float(self.M[j, 0]),
                                     "M2": float(self.M[j, 1]),
                                     "q": float(self.q[j])})
        return out


def _solution_residual(tree: ScenarioTree, eps: float, q: np.ndarray,
                       m: np.ndarray) -> float:
    """Max relative violation of mass, martingale, and band constraints."""
    children = tree.children()
    root = tree.root.id
    worst = abs(q[root] - 1.0)
    for n in tree.nodes:
        kids = children[n.id]
        if kids:
            mass_gap = abs(q[n.id] - sum(q[k] for k in kids))
            worst = max(worst, mass_gap / max(1.0, q[n.id]))
            for c in range(2):
                lhs = sum(m[k, c] for k in kids)
                worst = max(worst, abs(m[n.id, c] - lhs)
                            / max(1.0, abs(m[n.id, c])))
        for c, s in enumerate(n.prices):
            mm = m[n.id, c]
            worst = max(worst, (mm - (1.0 + eps) * s * q[n.id]) / (s * q[n.id]))
            worst = max(worst, (s / (1.0 + eps) * q[n.id] - mm) / (s * q[n.id]))
    return float(max(worst, 0.0))


def find_cps(tree: ScenarioTree, eps: float,
             q_min_scale: float = Q_MIN_SCALE) -> CpsSolution:
    """Solve for a consistent price system within proportional cost eps.

    Linear in (q, m = q*M): unit root mass, mass and martingale
    conservation down the tree, and the price band
    S q/(1+eps) <= m <= (1+eps) S q at every node, with q floored at
    q_min_scale / (level size) to keep the measure equivalent.
    """
    if not (math.isfinite(eps) and eps >= 0.0):
        raise ValueError("eps must be finite and >= 0")
    K = len(tree.nodes)
    children = tree.children()
    level_size = {lev: len(tree.nodes_at(lev)) for lev in range(tree.n_levels)}

    rows, cols, vals, b_eq = [], [], [], []
    r = 0
    rows.append(r); cols.append(tree.root.id); vals.append(1.0)
    b_eq.append(1.0)
    r += 1
    for n in tree.nodes:
        kids = children[n.id]
        if not kids:
            continue
        rows.append(r); cols.append(n.id); vals.append(-1.0)
        for k in kids:
            rows.append(r); cols.append(k); vals.append(1.0)
        b_eq.append(0.0)
        r += 1
        for c in range(2):
            off = (1 + c) * K
            rows.append(r); cols.append(off + n.id); vals.append(-1.0)
            for k in kids:
                rows.append(r); cols.append(off + k); vals.append(1.0)
            b_eq.append(0.0)
            r += 1
    a_eq = sparse.coo_matrix((vals, (rows, cols)), shape=(r, 3 * K)).tocsr()

    rows, cols, vals = [], [], []
    r = 0
    for n in tree.nodes:
        for c, s in enumerate(n.prices):
            off = (1 + c) * K
            rows += [r, r]; cols += [off + n.id, n.id]
            vals += [1.0, -(1.0 + eps) * s]
            r += 1
            rows += [r, r]; cols += [off + n.id, n.id]
            vals += [-1.0, s / (1.0 + eps)]
            r += 1
    a_ub = sparse.coo_matrix((vals, (rows, cols)), shape=(r, 3 * K)).tocsr()

    bounds = []
    for n in tree.nodes:
        bounds.append((q_min_scale / level_size[n.level], None))
    bounds += [(None, None)] * (2 * K)

    res = linprog(c=np.zeros(3 * K), A_ub=a_ub, b_ub=np.zeros(a_ub.shape[0]),
                  A_eq=a_eq, b_eq=np.asarray(b_eq), bounds=bounds,
                  method="highs", options=dict(_HIGHS_OPTIONS))
    ids = tuple(n.id for n in tree.nodes)
    if res.status == 2:
        return CpsSolution(status=INFEASIBLE, epsilon=eps, node_ids=ids,
                           q=np.empty(0), M=np.empty((0, 2)),
                           certificate=math.inf)
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    x = res.x
    q = x[:K].copy()
    m = np.stack([x[K:2 * K], x[2 * K:3 * K]], axis=1)
    M = m / q[:, None]
    cert = _solution_residual(tree, eps, q, m)
    return CpsSolution(status=FEASIBLE, epsilon=eps, node_ids=ids, q=q, M=M,
                       certificate=cert)


@dataclass(frozen=True)
class MinEpsResult:
    """Bisection outcome: smallest certified-feasible cost within tol."""

    epsilon: float
    solution: CpsSolution | None

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.epsilon)


def _sure_feasible_eps(tree: ScenarioTree) -> float:
    """A cost at which a constant-M system certainly fits every band."""
    worst = 1.0
    for c in range(2):
        s = [n.prices[c] for n in tree.nodes]
        worst = max(worst, max(s) / min(s))
    return math.sqrt(worst) - 1.0 + 1e-9


def min_eps_cps(tree: ScenarioTree, eps_hi: float | None = None,
                tol: float = 1e-6) -> MinEpsResult:
    """Bisect for the smallest eps admitting a consistent price system.

    The returned epsilon is always on the feasible side, within tol of
    the boundary. With an explicit eps_hi that is itself infeasible the
    result is unbounded (epsilon = inf, no solution).
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    sol0 = find_cps(tree, 0.0)
    if sol0.feasible:
        return MinEpsResult(epsilon=0.0, solution=sol0)
    hi = _sure_feasible_eps(tree) if eps_hi is None else float(eps_hi)
    sol_hi = find_cps(tree, hi)
    if not sol_hi.feasible:
        return MinEpsResult(epsilon=math.inf, solution=None)
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        sol_mid = find_cps(tree, mid)
        if sol_mid.feasible:
            hi, sol_hi = mid, sol_mid
        else:
            lo = mid
    return MinEpsResult(epsilon=hi, solution=sol_hi)
