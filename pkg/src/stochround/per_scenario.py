"""Filtered rounding with per-scenario guarantees.

The solution is scaled by gamma > 2.  For each pair, the closest unit-mass
prefix of its stage-I part and of its stage-II part are computed; the smaller
radius decides the stage in which the pair may form a cluster (ties go to
stage I).  Clustering and opening then proceed as in the plain LP rounding, with
centers taken in order of that radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .lp import DecomposedSolution, FractionalSolution, SplitSolution, decompose, split_to_saturation
from .lp_rounding import DIST_TOL, ClusterPlan, ClusterTrials, build_clusters, open_and_connect, simulate
from .rounded import RoundedSolution

GAMMA_DEFAULT = 2.4957
GAMMA_STRICT = 5.0


def connection_factor(gamma: float) -> float:
    if gamma <= 2:
        raise ValueError("gamma must exceed 2")
    return 1 + (2 * gamma + 2) / (gamma - 2) * math.exp(-gamma)


def stretch_bound(gamma: float) -> float:
    if gamma <= 2:
        raise ValueError("gamma must exceed 2")
    return 3 * gamma / (gamma - 2)


def filter_bound(gamma: float) -> float:
    """Radius bound of a cluster candidate relative to the fractional connection cost."""
    return gamma / (gamma - 2)


def equalization_root() -> float:
    """The gamma > 2 at which connection_factor(gamma) = gamma."""
    return brentq(lambda g: connection_factor(g) - g, 2 + 1e-9, 10.0, xtol=1e-14)


def tradeoff(gamma: float) -> dict:
    return {"gamma": gamma, "connection_factor": connection_factor(gamma), "stretch_bound": stretch_bound(gamma)}


class StrictModeViolation(AssertionError):
    pass


@dataclass
class FilteredNeighborhoods:
    split: SplitSolution
    gamma: float
    d_one: np.ndarray        # (m, |D|) radius of the stage-I prefix, inf if none
    d_two: np.ndarray
    first_stage: np.ndarray  # (m, |D|) bool
    candidates: dict         # (a, j) -> piece ids

    @property
    def d(self) -> np.ndarray:
        return np.minimum(self.d_one, self.d_two)

    def radius_violations(self, tol: float = 1e-9) -> list[tuple[int, int]]:
        """Pairs whose radius exceeds gamma/(gamma-2) times their fractional connection cost."""
        sol = self.split.decomposed.solution
        c = sol.pair_cost
        k = filter_bound(self.gamma)
        bad = []
        for a, clients in enumerate(sol.instance.scenarios):
            for j in clients:
                if self.d[a, j] > k * c[a, j] + tol * max(1.0, c[a, j]):
                    bad.append((a, j))
        return bad


def build_filtered(decomposed: DecomposedSolution, gamma: float) -> FilteredNeighborhoods:
    if gamma <= 2:
        raise ValueError("gamma must exceed 2")
    split = split_to_saturation(decomposed, gamma)
    inst = decomposed.solution.instance
    shape = (inst.n_scenarios, inst.n_clients)
    d1, d2 = np.full(shape, np.nan), np.full(shape, np.nan)
    first = np.zeros(shape, dtype=bool)
    cands = {}
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            p1, p2 = split.prefix[0][a, j], split.prefix[1][a, j]
            if p1 is None and p2 is None:
                raise RuntimeError(f"pair {(a, j)}: neither stage carries unit scaled mass")
            d1[a, j] = p1.radius if p1 is not None else np.inf
            d2[a, j] = p2.radius if p2 is not None else np.inf
            first[a, j] = d1[a, j] <= d2[a, j]
            cands[a, j] = (p1 if first[a, j] else p2).pieces
    return FilteredNeighborhoods(split, gamma, d1, d2, first, cands)


@dataclass
class PerScenarioPlan:
    filtered: FilteredNeighborhoods
    clusters: ClusterPlan
    strict: bool = False

    @classmethod
    def build(cls, solution: FractionalSolution, gamma: float = GAMMA_DEFAULT, strict: bool = False
              ) -> PerScenarioPlan:
        if strict:
            gamma = GAMMA_STRICT
        filt = build_filtered(decompose(solution), gamma)
        bad = filt.radius_violations()
        if bad:
            raise RuntimeError(f"radius bound fails for pairs {bad[:5]}")
        plan = build_clusters(filt.split, filt.first_stage, filt.candidates, filt.d)
        return cls(filt, plan, strict)

    @property
    def gamma(self) -> float:
        return self.filtered.gamma

    def simulate(self, n: int, seed: int, workers: int = 1) -> ClusterTrials:
        trials = simulate(self.clusters, n, seed, stretch_bound(self.gamma), workers)
        if self.strict and trials.stretch_violations:
            raise StrictModeViolation(f"{trials.stretch_violations} connections exceed {stretch_bound(self.gamma)}"
                                      " times the fractional connection cost")
        return trials

    def run(self, rng: np.random.Generator) -> RoundedSolution:
        sol = open_and_connect(self.clusters, rng)
        if self.strict:
            check_stretch(sol, self.clusters.solution, stretch_bound(self.gamma))
        return sol

    def report(self) -> dict:
        return {**tradeoff(self.gamma), "equalization_root": equalization_root(),
                "gamma_default": GAMMA_DEFAULT, "radius_violations": len(self.filtered.radius_violations()),
                "clusters": sum(len(v) for v in self.clusters.clusters.values())}


def check_stretch(rounded: RoundedSolution, solution: FractionalSolution, bound: float) -> None:
    inst = rounded.instance
    c = solution.pair_cost
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            dist = inst.distances[rounded.assign[a, j], j]
            if dist > bound * c[a, j] + DIST_TOL:
                raise StrictModeViolation(f"client {j} in scenario {a}: {dist} > {bound} * {c[a, j]}")


def round_per_scenario(solution: FractionalSolution, gamma: float, rng: np.random.Generator,
                       strict: bool = False) -> tuple[RoundedSolution, dict]:
    plan = PerScenarioPlan.build(solution, gamma, strict)
    return plan.run(rng), plan.report()
