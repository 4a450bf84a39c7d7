"""Rounding schemes for k-stage covering integer programs.

``independent_round`` scales the fractional vector by lambda and rounds every
coordinate independently; ``DependentRounder`` is the online procedure that
turns a stream of values in [0, 1] into 0/1 outputs with at most one 1, the
marginal bound E[Z_i] <= z_i, and a guaranteed 1 once the prefix sum reaches 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instances import ScenarioTreeCip
from .lp import CipSolution

FORCE_TOL = 1e-12
MAX_EXACT_K = 20


def psi_default(n: int) -> float:
    return math.log(math.log(n + 16))


@dataclass
class LambdaConfig:
    kind: str = "set-cover"          # set-cover | general
    n: int = 1
    big_b: float = 1.0
    eps_row: float | None = None     # default 1/(2n)
    psi: callable = psi_default

    def __post_init__(self):
        if self.kind not in ("set-cover", "general"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "general" and self.big_b < 1:
            raise ValueError("B must be >= 1")
        if self.eps_row is None:
            self.eps_row = 1.0 / (2 * self.n)
        if not 0 < self.eps_row < 1:
            raise ValueError("eps_row must lie in (0, 1)")


def chernoff_tail(lam: float, big_b: float) -> float:
    """Lower-tail bound exp(-mu delta^2 / 2) with mu = lam B, delta = 1 - 1/lam."""
    return math.exp(-lam * big_b * (1 - 1 / lam) ** 2 / 2)


def choose_lambda(config: LambdaConfig) -> float:
    if config.kind == "set-cover":
        return math.log(config.n) + config.psi(config.n)
    target = config.eps_row
    if chernoff_tail(1.0, config.big_b) <= target:
        return 1.0
    lo, hi = 1.0, 2.0
    while chernoff_tail(hi, config.big_b) > target:
        hi *= 2
    while hi - lo > 1e-12:
        mid = (lo + hi) / 2
        if chernoff_tail(mid, config.big_b) > target:
            lo = mid
        else:
            hi = mid
    return hi


def independent_round(values, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Round lam * x up with probability equal to its fractional part.

    ``values`` may be one array or a sequence of per-stage blocks; blocks are
    processed in order and each uses only its own values.
    """
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    if isinstance(values, np.ndarray):
        xp = lam * values
        fl = np.floor(xp)
        return fl + (rng.random(xp.shape) < xp - fl)
    return [independent_round(np.asarray(b, dtype=float), lam, rng) for b in values]


@dataclass
class DependentRounder:
    """Online rounding of a [0, 1] stream; one instance per stream."""

    rng: np.random.Generator
    s: float = 0.0
    comp: float = 0.0  # Neumaier compensation term
    fired: bool = False
    outputs: list[int] = field(default_factory=list)

    def feed(self, z: float, u: float | None = None) -> int:
        """Consume one uniform (drawn here unless ``u`` is given) and return Z_i."""
        if not 0.0 <= z <= 1.0:
            raise ValueError(f"value {z!r} outside [0, 1]")
        if u is None:
            u = self.rng.random()
        if self.fired:
            out = 0
        elif self.prefix + z >= 1 - FORCE_TOL:
            out = 1
        else:
            out = int(u < z / (1 - self.prefix))
        self._add(z)
        self.fired = self.fired or bool(out)
        self.outputs.append(out)
        return out

    @property
    def prefix(self) -> float:
        return self.s + self.comp

    def _add(self, z: float):
        t = self.s + z
        if abs(self.s) >= abs(z):
            self.comp += (self.s - t) + z
        else:
            self.comp += (z - t) + self.s
        self.s = t

    def fork(self, rng: np.random.Generator) -> DependentRounder:
        return DependentRounder(rng, self.s, self.comp, self.fired, list(self.outputs))


def dependent_feed(rounder: DependentRounder, z: float) -> int:
    return rounder.feed(z)


def exact_distribution(z) -> dict[tuple[int, ...], float]:
    """Outcome distribution of the online procedure, by walking its decision tree."""
    z = [float(v) for v in z]
    k = len(z)
    if k > MAX_EXACT_K:
        raise ValueError(f"k = {k} exceeds {MAX_EXACT_K}")
    if any(not 0 <= v <= 1 for v in z):
        raise ValueError("values must lie in [0, 1]")
    out: dict[tuple[int, ...], float] = {}
    alive = 1.0  # probability that no output fired so far
    prefix = 0.0
    for i, zi in enumerate(z):
        if alive == 0.0:
            break
        if prefix + zi >= 1 - FORCE_TOL:
            p_fire = 1.0
        else:
            p_fire = zi / (1 - prefix)
        if p_fire > 0:
            key = tuple(1 if t == i else 0 for t in range(k))
            out[key] = alive * p_fire
        alive *= 1 - p_fire
        prefix = math.fsum(z[: i + 1])
    if alive > 0:
        out[(0,) * k] = alive
    return out


def round_bounded_cover(x: np.ndarray, degree: float, rng: np.random.Generator,
                        cover_rows: np.ndarray | None = None) -> np.ndarray:
    """Apply the online procedure to min(degree * x[v, l], 1) for every v independently.

    ``x`` has shape (n_vars, k).  If ``cover_rows`` (rows x n_vars, 0/1) is
    given the fractional input is checked to cover every row first.
    """
    x = np.asarray(x, dtype=float)
    if cover_rows is not None:
        tot = cover_rows @ x.sum(axis=1)
        if np.any(tot < 1 - 1e-7):
            raise ValueError("fractional input does not cover every row")
    out = np.zeros_like(x, dtype=int)
    z = np.minimum(degree * x, 1.0)
    for v in range(x.shape[0]):
        r = DependentRounder(rng)
        for l in range(x.shape[1]):
            out[v, l] = r.feed(float(z[v, l]))
    return out


# ---------------------------------------------------------------- tree drivers

@dataclass
class TreeRounding:
    """One rounding of a whole scenario tree: integer values per node."""

    values: list[np.ndarray]

    def leaf_outcome(self, tree: ScenarioTreeCip, leaf_pos: int) -> tuple[float, bool]:
        leaf = tree.leaves[leaf_pos]
        path = tree.path(leaf)
        cost = sum(float(tree.nodes[v].costs @ self.values[v]) for v in path)
        cover = sum(tree.nodes[v].columns @ self.values[v] for v in path)
        ok = bool(np.all(cover >= tree.b_by_leaf[leaf_pos] - 1e-9))
        return cost, ok


def round_tree_independent(sol: CipSolution, lam: float, rng: np.random.Generator) -> TreeRounding:
    # node decisions depend only on that node's own fractional values
    return TreeRounding([independent_round(x, lam, rng) for x in sol.x])


def round_tree_dependent(sol: CipSolution, degree: float, rng: np.random.Generator) -> TreeRounding:
    """Run one online rounder per variable index down every root-leaf path.

    Each child continues its parent's rounder state, so decisions at a node use
    only the values seen on the path to it.
    """
    tree = sol.tree
    nv = {node.costs.size for node in tree.nodes}
    if len(nv) != 1:
        raise ValueError("dependent rounding needs the same variable set at every node")
    n = nv.pop()
    vals: list[np.ndarray] = [np.zeros(n, dtype=int) for _ in tree.nodes]
    states: dict[int, list[DependentRounder]] = {}
    kids = tree.children
    stack = [0]
    while stack:
        v = stack.pop()
        parent = tree.nodes[v].parent
        base = [DependentRounder(rng) for _ in range(n)] if parent < 0 else [r.fork(rng) for r in states[parent]]
        z = np.minimum(degree * sol.x[v], 1.0)
        vals[v] = np.array([base[j].feed(float(z[j])) for j in range(n)], dtype=int)
        states[v] = base
        stack.extend(reversed(kids[v]))
    return TreeRounding(vals)


def tree_degree(tree: ScenarioTreeCip) -> float:
    """Largest number of distinct variables that can cover one active row along a root-leaf path."""
    best = 0
    for li, leaf in enumerate(tree.leaves):
        path = tree.path(leaf)
        support = np.zeros(tree.nodes[leaf].columns.shape, dtype=bool)
        for v in path:
            support |= tree.nodes[v].columns > 0
        active = tree.b_by_leaf[li] > 0
        if active.any():
            best = max(best, int(support[active].sum(axis=1).max()))
    return float(best)


# ---------------------------------------------------------------- batched trials

@dataclass
class BatchRounder:
    """The online procedure run on ``n`` independent streams at once."""

    s: np.ndarray
    comp: np.ndarray
    fired: np.ndarray

    @classmethod
    def fresh(cls, shape) -> BatchRounder:
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape, dtype=bool))

    def copy(self) -> BatchRounder:
        return BatchRounder(self.s.copy(), self.comp.copy(), self.fired.copy())

    def feed(self, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        z = np.broadcast_to(np.asarray(z, dtype=float), self.s.shape)
        if np.any((z < 0) | (z > 1)):
            raise ValueError("values must lie in [0, 1]")
        prefix = self.s + self.comp
        force = prefix + z >= 1 - FORCE_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            coin = u < z / (1 - prefix)
        out = ~self.fired & (force | coin)
        t = self.s + z
        big = np.abs(self.s) >= np.abs(z)
        self.comp += np.where(big, (self.s - t) + z, (z - t) + self.s)
        self.s = t
        self.fired |= out
        return out.astype(int)


def batch_round_tree(sol: CipSolution, method: str, param: float, rng: np.random.Generator,
                     n: int) -> list[np.ndarray]:
    """``n`` roundings at once; returns per-node (n, n_vars) integer arrays.

    ``method`` is "independent" (param = lambda) or "dependent" (param = degree).
    """
    tree = sol.tree
    if method == "independent":
        if param < 1:
            raise ValueError("lambda must be >= 1")
        out = []
        for x in sol.x:
            xp = param * x
            fl = np.floor(xp)
            out.append((fl + (rng.random((n, x.size)) < xp - fl)).astype(int))
        return out
    if method != "dependent":
        raise ValueError(f"unknown method {method!r}")
    kids = tree.children
    vals: list[np.ndarray] = [None] * len(tree.nodes)
    states: dict[int, BatchRounder] = {}
    stack = [0]
    while stack:
        v = stack.pop()
        parent = tree.nodes[v].parent
        nv = sol.x[v].size
        st = BatchRounder.fresh((n, nv)) if parent < 0 else states[parent].copy()
        vals[v] = st.feed(np.minimum(param * sol.x[v], 1.0), rng.random((n, nv)))
        states[v] = st
        stack.extend(reversed(kids[v]))
    return vals


@dataclass
class TreeTrials:
    cost: np.ndarray       # (T,) expected cost over leaves
    leaf_cost: np.ndarray  # (T, leaves) path cost
    uncovered: np.ndarray  # (T, leaves) number of uncovered rows

    @property
    def covered(self) -> np.ndarray:
        return self.uncovered == 0

    @staticmethod
    def concat(parts: list[TreeTrials]) -> TreeTrials:
        return TreeTrials(np.concatenate([p.cost for p in parts]), np.vstack([p.leaf_cost for p in parts]),
                          np.vstack([p.uncovered for p in parts]))


def tree_trials(tree: ScenarioTreeCip, values: list[np.ndarray]) -> TreeTrials:
    n = values[0].shape[0]
    node_cost = [values[v] @ tree.nodes[v].costs for v in range(len(tree.nodes))]
    cost = sum(tree.path_prob(v) * node_cost[v] for v in range(len(tree.nodes)))
    leaves = tree.leaves
    leaf_cost = np.zeros((n, len(leaves)))
    unc = np.zeros((n, len(leaves)), dtype=int)
    for li, leaf in enumerate(leaves):
        path = tree.path(leaf)
        leaf_cost[:, li] = sum(node_cost[v] for v in path)
        cover = sum(values[v] @ tree.nodes[v].columns.T for v in path)
        unc[:, li] = (cover < tree.b_by_leaf[li] - 1e-9).sum(axis=1)
    return TreeTrials(np.asarray(cost, dtype=float), leaf_cost, unc)
