"""Primal/dual LPs for stochastic facility location and scenario-tree CIPs.

Also holds the solution containers and the utilities shared by every
facility-location rounding scheme: stage decomposition of the assignment
variables, stage-copy normal form and facility splitting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .instances import ScenarioTreeCip, SuflInstance
from .simplex import LinearProgram, LPResult, residuals, solve

ZERO = 1e-12
CUT_TOL = 1e-12

# ---------------------------------------------------------------- builders


def build_sufl_primal(instance: SuflInstance, cost_scale: tuple[float, float] = (1.0, 1.0)) -> LinearProgram:
    """Standard LP relaxation; facility costs times ``cost_scale[0]``, connection costs times ``cost_scale[1]``."""
    fs, cs = cost_scale
    if fs <= 0 or cs <= 0:
        raise ValueError("cost scale factors must be positive")
    inst = instance
    lp = LinearProgram()
    y = [lp.add_var(f"y[{i}]", fs * inst.f1[i]) for i in range(inst.n_facilities)]
    for a, p in enumerate(inst.probs):
        for i in range(inst.n_facilities):
            lp.add_var(f"yA[{a},{i}]", fs * p * inst.f2[a, i])
    for a, (p, clients) in enumerate(zip(inst.probs, inst.scenarios)):
        for j in clients:
            for i in range(inst.n_facilities):
                lp.add_var(f"x[{a},{i},{j}]", cs * p * inst.demands[j] * inst.distances[i, j])
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            lp.add_row({lp.index[f"x[{a},{i},{j}]"]: 1.0 for i in range(inst.n_facilities)}, ">=", 1.0,
                       f"assign[{a},{j}]")
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            for i in range(inst.n_facilities):
                lp.add_row({y[i]: 1.0, lp.index[f"yA[{a},{i}]"]: 1.0, lp.index[f"x[{a},{i},{j}]"]: -1.0},
                           ">=", 0.0, f"link[{a},{i},{j}]")
    return lp


def build_sufl_dual(instance: SuflInstance) -> LinearProgram:
    """Dual program: max sum_A p_A sum_j v_{j,A} over v, w >= 0."""
    inst = instance
    lp = LinearProgram(maximize=True)
    for a, (p, clients) in enumerate(zip(inst.probs, inst.scenarios)):
        for j in clients:
            lp.add_var(f"v[{a},{j}]", p)
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            for i in range(inst.n_facilities):
                lp.add_var(f"w[{a},{i},{j}]", 0.0)
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            for i in range(inst.n_facilities):
                lp.add_row({lp.index[f"v[{a},{j}]"]: 1.0, lp.index[f"w[{a},{i},{j}]"]: -1.0}, "<=",
                           inst.demands[j] * inst.distances[i, j], f"conn[{a},{i},{j}]")
    for i in range(inst.n_facilities):
        lp.add_row({lp.index[f"w[{a},{i},{j}]"]: p for a, (p, cl) in enumerate(zip(inst.probs, inst.scenarios))
                    for j in cl}, "<=", inst.f1[i], f"stage1[{i}]")
    for a, clients in enumerate(inst.scenarios):
        for i in range(inst.n_facilities):
            lp.add_row({lp.index[f"w[{a},{i},{j}]"]: 1.0 for j in clients}, "<=", inst.f2[a, i], f"stage2[{a},{i}]")
    return lp


def build_cip_lp(tree: ScenarioTreeCip) -> LinearProgram:
    """One variable per (node, j); objective weighted by path probability; one cover row per (leaf, row)."""
    lp = LinearProgram()
    for v, node in enumerate(tree.nodes):
        pi = tree.path_prob(v)
        for j in range(node.costs.size):
            lp.add_var(f"x[{v},{j}]", pi * node.costs[j])
    off = tree.var_offsets()
    for li, leaf in enumerate(tree.leaves):
        path = tree.path(leaf)
        for r in range(tree.rows):
            coefs = {}
            for v in path:
                col = tree.nodes[v].columns[r]
                for j in np.flatnonzero(col):
                    coefs[off[v] + int(j)] = float(col[j])
            b = float(tree.b_by_leaf[li, r])
            if b > 0:
                if not coefs:
                    coefs = {0: 0.0}
                lp.add_row(coefs, ">=", b, f"cover[{leaf},{r}]")
    return lp


# ---------------------------------------------------------------- solutions

@dataclass
class FractionalSolution:
    """LP solution for a SUFL instance with its per-scenario cost breakdown.

    ``x[a, i, j]`` is zero for clients outside scenario ``a``.  ``origin`` maps
    (possibly split) facility indices back to the facilities of the source
    instance.
    """

    instance: SuflInstance
    y: np.ndarray
    ya: np.ndarray
    x: np.ndarray
    lp_objective: float = float("nan")
    origin: np.ndarray | None = None

    def __post_init__(self):
        if self.origin is None:
            self.origin = np.arange(self.instance.n_facilities)

    @property
    def pair_cost(self) -> np.ndarray:
        """C_(j,A): fractional (unweighted) connection distance per scenario and client."""
        return np.einsum("aij,ij->aj", self.x, self.instance.distances)

    @property
    def conn_by_scenario(self) -> np.ndarray:
        return self.pair_cost @ self.instance.demands

    @property
    def fac_by_scenario(self) -> np.ndarray:
        inst = self.instance
        return float(inst.f1 @ self.y) + (inst.f2 * self.ya).sum(axis=1)

    @property
    def val_by_scenario(self) -> np.ndarray:
        return self.fac_by_scenario + self.conn_by_scenario

    @property
    def fac_cost(self) -> float:
        """F*: expected fractional opening cost."""
        inst = self.instance
        return float(inst.f1 @ self.y + inst.probs @ (inst.f2 * self.ya).sum(axis=1))

    @property
    def conn_cost(self) -> float:
        """C*: expected fractional connection cost."""
        return float(self.instance.probs @ self.conn_by_scenario)

    @property
    def value(self) -> float:
        return self.fac_cost + self.conn_cost

    def check(self, tol: float = 1e-7) -> None:
        """Assert the covering and linking constraints within ``tol``."""
        act = self.instance.active()
        tot = self.x.sum(axis=1)
        if np.any(tot[act] < 1 - tol):
            raise ValueError("assignment constraint violated")
        if np.any(self.x > self.y[None, :, None] + self.ya[:, :, None] + tol):
            raise ValueError("x exceeds y + yA")
        if np.any(self.x[~np.broadcast_to(act[:, None, :], self.x.shape)] > tol):
            raise ValueError("assignment for inactive client")


@dataclass
class DualSolution:
    v: np.ndarray  # (m, |D|), zero outside scenarios
    w: np.ndarray  # (m, |F|, |D|)
    objective: float = float("nan")

    @property
    def budget(self) -> np.ndarray:
        """V_A = sum over the scenario's clients of v_{j,A}."""
        return self.v.sum(axis=1)


def _tighten(sol: FractionalSolution) -> FractionalSolution:
    """Make every assignment row sum exactly to 1, cap openings at 1, zero out dust."""
    x = np.where(sol.x < ZERO, 0.0, sol.x)
    tot = x.sum(axis=1, keepdims=True)
    x = np.where(tot > 0, x / np.where(tot > 0, tot, 1.0), x)
    y = np.clip(np.where(sol.y < ZERO, 0.0, sol.y), 0.0, 1.0)
    ya = np.clip(np.where(sol.ya < ZERO, 0.0, sol.ya), 0.0, 1.0)
    return FractionalSolution(sol.instance, y, ya, x, sol.lp_objective, sol.origin)


def unpack_primal(instance: SuflInstance, lp: LinearProgram, res: LPResult) -> tuple[FractionalSolution, DualSolution]:
    inst = instance
    nf, nd, m = inst.n_facilities, inst.n_clients, inst.n_scenarios
    y = res.x[:nf].copy()
    ya = res.x[nf:nf + m * nf].reshape(m, nf).copy()
    x = np.zeros((m, nf, nd))
    v = np.zeros((m, nd))
    w = np.zeros((m, nf, nd))
    k = nf + m * nf
    r = 0
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            x[a, :, j] = res.x[k:k + nf]
            k += nf
            v[a, j] = res.duals[r] / inst.probs[a]
            r += 1
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            w[a, :, j] = res.duals[r:r + nf] / inst.probs[a]
            r += nf
    sol = _tighten(FractionalSolution(inst, y, ya, x, res.objective))
    dual = DualSolution(np.maximum(v, 0.0), np.maximum(w, 0.0), res.objective)
    return sol, dual


def solve_sufl(instance: SuflInstance, cost_scale: tuple[float, float] = (1.0, 1.0)
               ) -> tuple[FractionalSolution, DualSolution]:
    """Solve the (possibly cost-scaled) primal; duals are those of the scaled program."""
    inst = instance.drop_null_scenarios()
    if inst is not instance:
        warnings.warn("dropping zero-probability scenarios", stacklevel=2)
    lp = build_sufl_primal(inst, cost_scale)
    res = solve(lp)
    return unpack_primal(inst, lp, res)


def solve_sufl_dual(instance: SuflInstance) -> DualSolution:
    inst = instance
    lp = build_sufl_dual(inst)
    res = solve(lp)
    v = np.zeros((inst.n_scenarios, inst.n_clients))
    w = np.zeros((inst.n_scenarios, inst.n_facilities, inst.n_clients))
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            v[a, j] = res.x[lp.index[f"v[{a},{j}]"]]
            for i in range(inst.n_facilities):
                w[a, i, j] = res.x[lp.index[f"w[{a},{i},{j}]"]]
    return DualSolution(v, w, res.objective)


def dual_budget_range(instance: SuflInstance, scenario: int, tol: float = 1e-7) -> tuple[float, float]:
    """Smallest and largest V_A over all optimal dual solutions."""
    base = build_sufl_dual(instance)
    opt = solve(base).objective
    out = []
    for maximize in (False, True):
        lp = build_sufl_dual(instance)
        lp.maximize = maximize
        lp.add_row({k: c for k, c in enumerate(base.cost) if c}, ">=", opt - tol, "optimal")
        lp.cost = [0.0] * lp.n_vars
        for j in instance.scenarios[scenario]:
            lp.cost[lp.index[f"v[{scenario},{j}]"]] = 1.0
        out.append(solve(lp).objective)
    return out[0], out[1]


def sufl_residuals(instance: SuflInstance, cost_scale=(1.0, 1.0)) -> dict[str, float]:
    lp = build_sufl_primal(instance, cost_scale)
    return residuals(lp, solve(lp))


def check_complementary_slackness(primal: FractionalSolution, dual: DualSolution,
                                  x_tol: float = 1e-7, tol: float = 1e-6) -> list[tuple[int, int, int]]:
    """Triples (i, j, a) where x_{A,ij} > 0 but d_j c_ij exceeds v_{j,A}."""
    inst = primal.instance
    cost = inst.distances[None, :, :] * inst.demands[None, None, :]
    bad = np.argwhere((primal.x > x_tol) & (cost > dual.v[:, None, :] + tol))
    return [(int(i), int(j), int(a)) for a, i, j in bad]


# ---------------------------------------------------------------- decomposition

@dataclass
class DecomposedSolution:
    solution: FractionalSolution
    x1: np.ndarray
    x2: np.ndarray

    @property
    def r1(self) -> np.ndarray:
        return self.x1.sum(axis=1)

    @property
    def r2(self) -> np.ndarray:
        return self.x2.sum(axis=1)


def decompose(solution: FractionalSolution) -> DecomposedSolution:
    """Split each x_{A,ij} into stage-I and stage-II parts proportionally to y_i and y_{A,i}."""
    y = solution.y[None, :, None]
    ya = solution.ya[:, :, None]
    x = solution.x
    tot = y + ya
    if np.any((x > ZERO) & (tot <= 0)):
        raise ValueError("infeasible solution: x_{A,ij} > 0 while y_i + y_{A,i} = 0")
    safe = np.where(tot > 0, tot, 1.0)
    x1 = np.where(x > 0, x * y / safe, 0.0)
    x2 = np.where(x > 0, x * ya / safe, 0.0)
    return DecomposedSolution(solution, x1, x2)


def split_stage_copies(instance: SuflInstance, solution: FractionalSolution
                       ) -> tuple[SuflInstance, FractionalSolution]:
    """Give every facility open in both stages a stage-I copy and a stage-II copy."""
    shared = [i for i in range(instance.n_facilities)
              if solution.y[i] > 0 and np.any(solution.ya[:, i] > 0)]
    if not shared:
        return instance, solution
    dec = decompose(solution)
    cols = list(range(instance.n_facilities)) + shared
    cols_arr = np.array(cols)
    n_new = len(cols)
    y = solution.y[cols_arr].copy()
    ya = solution.ya[:, cols_arr].copy()
    x = solution.x[:, cols_arr, :].copy()
    for k, i in enumerate(shared):
        c = instance.n_facilities + k
        y[c] = 0.0
        ya[:, i] = 0.0
        x[:, i, :] = dec.x1[:, i, :]
        x[:, c, :] = dec.x2[:, i, :]
    inst2 = SuflInstance(instance.f1[cols_arr], instance.f2[:, cols_arr], instance.distances[cols_arr],
                         instance.scenarios, instance.probs, instance.demands,
                         tuple(instance.facility_ids[i] + ("'" if k >= instance.n_facilities else "")
                               for k, i in enumerate(cols)),
                         instance.client_ids)
    origin = solution.origin[cols_arr]
    assert n_new == y.size
    return inst2, FractionalSolution(inst2, y, ya, x, solution.lp_objective, origin)


# ---------------------------------------------------------------- splitting

@dataclass
class Prefix:
    pieces: np.ndarray  # piece ids whose openings sum to 1
    radius: float       # largest distance from the client to a piece in the prefix


@dataclass
class SplitSolution:
    """Scaled openings cut into pieces ("facility copies") of size <= 1.

    Stage index ``-1`` denotes stage I; ``a >= 0`` denotes stage II of scenario
    ``a``.  For every pair (a, j) and stage s in {0: stage I, 1: stage II},
    ``serve[s][a, j]`` lists pieces that carry the pair's full scaled
    assignment, and ``prefix[s][a, j]`` the cheapest unit-mass subset (or None
    when that stage carries less than unit mass).
    """

    decomposed: DecomposedSolution
    scale: float
    piece_facility: np.ndarray
    piece_stage: np.ndarray
    piece_lo: np.ndarray
    piece_hi: np.ndarray
    serve: tuple[dict, dict]
    prefix: tuple[dict, dict]
    mass: np.ndarray  # (2, m, |D|) scaled stage masses

    @property
    def opening(self) -> np.ndarray:
        return self.piece_hi - self.piece_lo

    @property
    def piece_origin(self) -> np.ndarray:
        return self.decomposed.solution.origin[self.piece_facility]

    @property
    def n_pieces(self) -> int:
        return self.piece_facility.size

    def group_openings(self, facility: int, stage: int) -> np.ndarray:
        sel = (self.piece_facility == facility) & (self.piece_stage == stage)
        return self.opening[sel]


def _merge_cuts(cuts: list[float]) -> list[float]:
    cuts = sorted(cuts)
    out = [cuts[0]]
    for c in cuts[1:]:
        if c - out[-1] > CUT_TOL:
            out.append(c)
    return out


def split_to_saturation(decomposed: DecomposedSolution, scale: float) -> SplitSolution:
    """Scale all openings and assignments by ``scale`` and cut facilities into pieces.

    Each (stage, facility) opening becomes the interval [0, extent]; a pair with
    scaled assignment ``t`` to it uses the sub-interval [0, t].  Cutting at every
    assignment level, at every integer and at every point where a client's
    distance-sorted prefix reaches unit mass yields pieces of size <= 1 such
    that every pair is served by whole pieces only and every prefix sums to 1.
    """
    if scale < 1:
        raise ValueError("scale must be >= 1")
    sol = decomposed.solution
    inst = sol.instance
    nf, m = inst.n_facilities, inst.n_scenarios
    dist = inst.distances
    xs = (decomposed.x1 * scale, decomposed.x2 * scale)
    ys = (sol.y * scale, sol.ya * scale)

    def group_stage(s: int, a: int) -> int:
        return -1 if s == 0 else a

    cuts: dict[tuple[int, int], list[float]] = {}

    def extent(s: int, a: int, i: int) -> float:
        base = ys[0][i] if s == 0 else ys[1][a, i]
        xmax = xs[0][:, i, :].max() if s == 0 else xs[1][a, i, :].max()
        return max(base, xmax)

    for i in range(nf):
        keys = [(0, 0)] + [(1, a) for a in range(m)]
        for s, a in keys:
            ext = extent(s, a, i)
            if ext <= CUT_TOL:
                continue
            vals = xs[0][:, i, :].ravel() if s == 0 else xs[1][a, i, :]
            c = [0.0, ext] + [float(t) for t in vals if t > CUT_TOL] + [float(k) for k in range(1, int(np.ceil(ext)))]
            cuts[(group_stage(s, a), i)] = c

    # prefix crossing cuts
    crossing: dict[tuple[int, int, int], tuple[list[int], int, float]] = {}
    mass = np.zeros((2, m, inst.n_clients))
    for s in (0, 1):
        for a, clients in enumerate(inst.scenarios):
            for j in clients:
                t = xs[s][a, :, j]
                mass[s, a, j] = t.sum()
                if t.sum() < 1 - CUT_TOL:
                    continue
                order = sorted((i for i in range(nf) if t[i] > CUT_TOL), key=lambda i: (dist[i, j], i))
                cum = 0.0
                for k, i in enumerate(order):
                    if cum + t[i] >= 1 - CUT_TOL:
                        need = 1.0 - cum
                        cuts[(group_stage(s, a), i)].append(need)
                        crossing[(s, a, j)] = (order[:k], i, need)
                        break
                    cum += t[i]

    fac, stg, lo, hi = [], [], [], []
    index: dict[tuple[int, int], list[int]] = {}
    for (g, i), c in sorted(cuts.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        pts = _merge_cuts(c)
        ids = []
        for l, h in zip(pts[:-1], pts[1:]):
            ids.append(len(fac))
            fac.append(i)
            stg.append(g)
            lo.append(l)
            hi.append(h)
        index[(g, i)] = ids
    lo_a, hi_a = np.array(lo), np.array(hi)

    def pieces_below(g: int, i: int, level: float) -> list[int]:
        return [p for p in index.get((g, i), []) if hi_a[p] <= level + CUT_TOL]

    serve: tuple[dict, dict] = ({}, {})
    prefix: tuple[dict, dict] = ({}, {})
    for s in (0, 1):
        for a, clients in enumerate(inst.scenarios):
            g = group_stage(s, a)
            for j in clients:
                t = xs[s][a, :, j]
                ids = []
                for i in range(nf):
                    if t[i] > CUT_TOL:
                        ids += pieces_below(g, i, t[i])
                serve[s][a, j] = np.array(ids, dtype=int)
                if (s, a, j) in crossing:
                    before, i_cross, need = crossing[(s, a, j)]
                    pid = [p for i in before for p in pieces_below(g, i, t[i])] + pieces_below(g, i_cross, need)
                    prefix[s][a, j] = Prefix(np.array(pid, dtype=int), float(dist[i_cross, j]))
                else:
                    prefix[s][a, j] = None
    return SplitSolution(decomposed, scale, np.array(fac, dtype=int), np.array(stg, dtype=int), lo_a, hi_a,
                         serve, prefix, mass)


# ---------------------------------------------------------------- solution files

def solution_to_dict(sol: FractionalSolution, dual: DualSolution | None = None) -> dict:
    doc = {
        "objective": sol.value,
        "y": [float(v) for v in sol.y],
        "yA": [[float(v) for v in row] for row in sol.ya],
        "x": [[[float(v) for v in row] for row in xa] for xa in sol.x],
    }
    if dual is not None:
        doc["duals"] = {"v": dual.v.tolist(), "w": dual.w.tolist()}
    return doc


def solution_from_dict(instance: SuflInstance, doc: dict) -> tuple[FractionalSolution, DualSolution | None]:
    """Import an externally solved solution; checks shapes and feasibility."""
    m, nf, nd = instance.n_scenarios, instance.n_facilities, instance.n_clients
    y = np.array(doc["y"], dtype=float).reshape(nf)
    ya = np.array(doc["yA"], dtype=float).reshape(m, nf)
    x = np.array(doc["x"], dtype=float).reshape(m, nf, nd)
    sol = FractionalSolution(instance, y, ya, x, float(doc.get("objective", np.nan)))
    sol.check()
    sol = _tighten(sol)
    dual = None
    if "duals" in doc:
        dual = DualSolution(np.array(doc["duals"]["v"], dtype=float).reshape(m, nd),
                            np.array(doc["duals"]["w"], dtype=float).reshape(m, nf, nd))
    return sol, dual


@dataclass
class CipSolution:
    tree: ScenarioTreeCip
    x: list[np.ndarray] = field(default_factory=list)  # per node
    objective: float = float("nan")

    def path_cost(self, leaf: int) -> float:
        return float(sum(self.tree.nodes[v].costs @ self.x[v] for v in self.tree.path(leaf)))


def solve_cip(tree: ScenarioTreeCip) -> CipSolution:
    lp = build_cip_lp(tree)
    res = solve(lp)
    off = tree.var_offsets()
    xs = [np.maximum(res.x[off[v]:off[v + 1]], 0.0) for v in range(len(tree.nodes))]
    return CipSolution(tree, xs, res.objective)
