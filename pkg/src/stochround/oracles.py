"""Exact optima for small instances, used to sandwich LP values and rounded costs."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from .instances import ScenarioTreeCip, SuflInstance
from .lp import build_cip_lp
from .simplex import InfeasibleError, solve

MAX_SUFL_FACILITIES = 12
MAX_SUFL_SCENARIOS = 8
MAX_CIP_VARS = 20
INT_TOL = 1e-7


class OracleCapError(ValueError):
    pass


@dataclass
class OracleResult:
    optimum: float
    enumerated: int
    stage1: frozenset | None = None
    stage2: tuple | None = None
    x: list[np.ndarray] | None = None  # CIP: integer values per node
    facility: float | None = None      # SUFL: expected opening cost of the optimum
    connection: float | None = None

    def to_dict(self) -> dict:
        out = {"optimum": self.optimum, "enumerated": self.enumerated}
        if self.facility is not None:
            out["facility"] = self.facility
            out["connection"] = self.connection
        if self.stage1 is not None:
            out["stage1"] = sorted(self.stage1)
            out["stage2"] = [sorted(s) for s in self.stage2]
        if self.x is not None:
            out["x"] = [v.astype(int).tolist() for v in self.x]
        return out


def _subset_tables(values: np.ndarray, dist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For every subset U (bitmask) of facilities: sum of ``values`` and per-client min distance."""
    nf = values.size
    n = 1 << nf
    total = np.zeros(n)
    mind = np.full((n, dist.shape[1]), np.inf)
    for i in range(nf):
        lo, hi = 1 << i, 1 << (i + 1)
        total[lo:hi] = total[:lo] + values[i]
        mind[lo:hi] = np.minimum(mind[:lo], dist[i])
    return total, mind


def _members(mask: int) -> frozenset[int]:
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


def oracle_sufl(instance: SuflInstance, chunk: int = 256) -> OracleResult:
    """Exact optimum by enumerating stage-I sets and, per scenario, the best stage-II set."""
    nf, m = instance.n_facilities, instance.n_scenarios
    if nf > MAX_SUFL_FACILITIES or m > MAX_SUFL_SCENARIOS:
        raise OracleCapError(f"oracle limited to {MAX_SUFL_FACILITIES} facilities and {MAX_SUFL_SCENARIOS} scenarios")
    n = 1 << nf
    f1sum, mind = _subset_tables(instance.f1, instance.distances)
    subsets = np.arange(n)
    best_g = np.zeros((m, n))
    best_t = np.zeros((m, n), dtype=np.int64)
    for a, clients in enumerate(instance.scenarios):
        cl = list(clients)
        conn = mind[:, cl] @ instance.demands[cl]
        f2sum, _ = _subset_tables(instance.f2[a], instance.distances[:, :0])
        for lo in range(0, n, chunk):
            s = subsets[lo:lo + chunk]
            vals = f2sum[None, :] + conn[s[:, None] | subsets[None, :]]
            k = vals.argmin(axis=1)  # first minimizer, i.e. the smallest bitmask
            best_t[a, lo:lo + chunk] = k
            best_g[a, lo:lo + chunk] = vals[np.arange(s.size), k]
    total = f1sum + instance.probs @ best_g
    s_best = int(np.argmin(total))
    stage1 = _members(s_best)
    stage2 = tuple(_members(int(best_t[a, s_best])) - stage1 for a in range(m))
    fac = float(instance.f1[list(stage1)].sum() + sum(instance.probs[a] * instance.f2[a, list(t)].sum()
                                                       for a, t in enumerate(stage2)))
    return OracleResult(float(total[s_best]), n * n * m, stage1, stage2, facility=fac,
                        connection=float(total[s_best]) - fac)


def cip_caps(tree: ScenarioTreeCip) -> np.ndarray:
    """Largest useful value per variable: enough to cover any row alone."""
    bmax = float(tree.b_by_leaf.max(initial=0.0))
    caps = []
    for node in tree.nodes:
        for j in range(node.costs.size):
            col = node.columns[:, j]
            pos = col[col > 0]
            caps.append(0.0 if pos.size == 0 or bmax <= 0 else math.ceil(bmax / pos.min() - 1e-12))
    return np.array(caps)


def oracle_cip(tree: ScenarioTreeCip) -> OracleResult:
    """Exact integer optimum by depth-first branch and bound on the LP relaxation."""
    lp = build_cip_lp(tree)
    if lp.n_vars > MAX_CIP_VARS:
        raise OracleCapError(f"oracle limited to {MAX_CIP_VARS} variables")
    caps = cip_caps(tree)
    lp.ub = [float(c) for c in caps]
    cost = np.array(lp.cost)
    root = solve(lp)
    inc = np.minimum(np.ceil(root.x - INT_TOL), caps)  # rounding a cover up keeps it a cover
    best = [float(cost @ inc), inc]
    nodes = 0
    stack = [(list(lp.lb), list(lp.ub))]
    while stack:
        lb, ub = stack.pop()
        nodes += 1
        sub = copy.copy(lp)
        sub.lb, sub.ub = lb, ub
        try:
            res = solve(sub)
        except InfeasibleError:
            continue
        if res.objective >= best[0] - 1e-9:
            continue
        frac = np.abs(res.x - np.round(res.x))
        j = int(np.argmax(frac > INT_TOL)) if np.any(frac > INT_TOL) else -1
        if j < 0:
            best = [float(cost @ np.round(res.x)), np.round(res.x)]
            continue
        down_ub = list(ub)
        down_ub[j] = math.floor(res.x[j])
        up_lb = list(lb)
        up_lb[j] = math.ceil(res.x[j])
        stack.append((up_lb, ub))
        stack.append((lb, down_ub))
    off = tree.var_offsets()
    xs = [best[1][off[v]:off[v + 1]].copy() for v in range(len(tree.nodes))]
    return OracleResult(best[0], nodes, x=xs)
