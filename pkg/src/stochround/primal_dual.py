"""Randomized-threshold primal-dual algorithm for 2-stage stochastic UFL.

A single threshold Z decides which client-scenario pairs are served from
stage-I facilities (those whose stage-I fractional share reaches Z).  Stage I
and every scenario's stage II are then solved as ordinary UFL instances with
the JMS greedy.

Because the outcome depends on Z only through the selected set, runs are
cached per selection pattern; this also gives the exact expectation over Z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instances import SuflInstance
from .jms import UflSubinstance, jms_solve
from .lp import DecomposedSolution, FractionalSolution, decompose
from .rounded import RoundedSolution, TrialCosts

ALPHA_DEFAULT = 0.2485
ALPHA_ALG2 = 0.37
JMS_FACILITY = 1.11
JMS_CONNECTION = 1.78


@dataclass(frozen=True)
class ThresholdDistribution:
    """Point mass alpha/(1-alpha) at 1/2, the rest uniform on [alpha, 1-alpha]."""

    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= 0.5:
            raise ValueError("alpha must lie in (0, 1/2]")

    @property
    def atom(self) -> float:
        return self.alpha / (1 - self.alpha)

    def sample(self, rng: np.random.Generator, size=None):
        a = self.alpha
        u = rng.random(size)
        v = rng.uniform(a, 1 - a, size)
        return np.where(u < self.atom, 0.5, v) if size is not None else (0.5 if u < self.atom else float(v))

    def cdf(self, z):
        """P(Z <= z)."""
        a = self.alpha
        z = np.asarray(z, dtype=float)
        cont = (1 - self.atom) * np.clip((z - a) / (1 - 2 * a), 0, 1) if a < 0.5 else 0.0 * z
        return cont + self.atom * (z >= 0.5)

    def mean_inverse(self) -> float:
        """E[1/Z] (equal to E[1/(1-Z)] by symmetry), closed form."""
        a = self.alpha
        return (2 * a + math.log((1 - a) / a)) / (1 - a)


def draw_threshold(alpha: float, rng: np.random.Generator) -> float:
    if not 0 < alpha <= 0.5:
        raise ValueError("alpha must lie in (0, 1/2]")
    return float(ThresholdDistribution(alpha).sample(rng))


def evaluate_ratio(alpha: float) -> tuple[float, float, float]:
    """(facility factor, connection factor, max) of the analysis for a given alpha."""
    fac = JMS_FACILITY * ThresholdDistribution(alpha).mean_inverse()
    conn = JMS_CONNECTION / (1 - alpha)
    return fac, conn, max(fac, conn)


def select_pairs(decomposed: DecomposedSolution, z: float) -> np.ndarray:
    """Boolean (m, |D|) matrix: pair selected iff z <= r1 (and the client is active)."""
    act = decomposed.solution.instance.active()
    return act & (z <= decomposed.r1)


@dataclass
class PrimalDualOutcome:
    rounded: RoundedSolution
    closest: RoundedSolution
    selected: np.ndarray


@dataclass
class PrimalDualPlan:
    """Everything fixed before Z is drawn, plus a cache of outcomes per selection pattern."""

    instance: SuflInstance
    solution: FractionalSolution
    alpha: float
    decomposed: DecomposedSolution = field(init=False)
    cache: dict[bytes, PrimalDualOutcome] = field(default_factory=dict, init=False)
    _tables: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.decomposed = decompose(self.solution)
        self.dist = ThresholdDistribution(self.alpha)

    def outcome(self, z: float) -> PrimalDualOutcome:
        sel = select_pairs(self.decomposed, z)
        key = np.packbits(sel).tobytes()
        if key not in self.cache:
            self.cache[key] = self._solve(sel)
        return self.cache[key]

    def _solve(self, sel: np.ndarray) -> PrimalDualOutcome:
        inst = self.instance
        m, nd = inst.n_scenarios, inst.n_clients
        assign = np.full((m, nd), -1)
        # stage I: selected pairs, co-located pairs merged into one client of summed demand
        dem1 = (sel * inst.probs[:, None]).sum(axis=0) * inst.demands
        cl1 = np.flatnonzero(dem1 > 0)
        stage1: frozenset[int] = frozenset()
        if cl1.size:
            sub = UflSubinstance(inst.f1, inst.distances[:, cl1], dem1[cl1])
            open1, phi1, _ = jms_solve(sub)
            stage1 = frozenset(open1)
            where = dict(zip(cl1.tolist(), phi1.tolist()))
            for a in range(m):
                for j in np.flatnonzero(sel[a]):
                    assign[a, j] = where[int(j)]
        stage2 = []
        act = inst.active()
        for a in range(m):
            cl2 = np.flatnonzero(act[a] & ~sel[a])
            if cl2.size == 0:
                stage2.append(frozenset())
                continue
            sub = UflSubinstance(inst.f2[a], inst.distances[:, cl2], inst.demands[cl2])
            open2, phi2, _ = jms_solve(sub)
            stage2.append(frozenset(open2))
            assign[a, cl2] = phi2
        rounded = RoundedSolution(inst, stage1, tuple(stage2), assign)
        return PrimalDualOutcome(rounded, rounded.closest_reassigned(), sel)

    def run(self, rng: np.random.Generator) -> RoundedSolution:
        return self.outcome(float(self.dist.sample(rng))).rounded

    def _interval_costs(self, closest: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Breakpoints and the (open, conn) cost rows of every selection pattern between them."""
        key = ("costs", closest)
        if key not in self._tables:
            bps = np.unique(self.decomposed.r1[self.instance.active()])
            reps = list(bps) + [2.0]  # z = bps[k] selects exactly the pairs with r1 >= bps[k]
            opens, conns = [], []
            for z in reps:
                out = self.outcome(float(z))
                r = out.closest if closest else out.rounded
                opens.append(r.open_cost)
                conns.append(r.conn_cost)
            self._tables[key] = (bps, np.array(opens), np.array(conns))
        return self._tables[key]

    def trials(self, rng: np.random.Generator, n: int, closest: bool = False) -> TrialCosts:
        zs = self.dist.sample(rng, n)
        bps, opens, conns = self._interval_costs(closest)
        k = np.searchsorted(bps, zs, side="left")
        return TrialCosts(opens[k], conns[k])

    def exact_expectation(self, closest: bool = False) -> np.ndarray:
        """Per-scenario expected COST(A), integrating the threshold distribution exactly."""
        a = self.alpha
        pts = sorted({a, 1 - a} | {float(r) for r in self.decomposed.r1[self.instance.active()] if a < r < 1 - a})
        total = np.zeros(self.instance.n_scenarios)
        for lo, hi in zip(pts[:-1], pts[1:]):
            if hi - lo <= 0:
                continue
            # selection is constant on (lo, hi]
            w = (hi - lo) / (1 - a)
            out = self.outcome(hi)
            total += w * (out.closest if closest else out.rounded).scenario_cost
        out = self.outcome(0.5)
        total += self.dist.atom * (out.closest if closest else out.rounded).scenario_cost
        return total


def run_primal_dual(instance: SuflInstance, solution: FractionalSolution, alpha: float,
                    rng: np.random.Generator) -> RoundedSolution:
    return PrimalDualPlan(instance, solution, alpha).run(rng)
