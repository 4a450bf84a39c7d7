"""Clustered LP rounding for 2-stage stochastic UFL, plus ALG1 and ALG3.

The fractional solution is scaled, cut into pieces of size <= 1 and every
client-scenario pair gets one stage whose unit-mass candidate set may become a
cluster.  A cluster opens exactly one of its pieces; every other piece opens
on its own with probability equal to its size.  Stage-I draws are made once per
trial and shared by all scenarios.  Clients connect to the closest open
facility of either stage.

The cluster machinery here is reused by the filtered per-scenario variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instances import SuflInstance
from .lp import DecomposedSolution, DualSolution, FractionalSolution, SplitSolution, decompose, solve_sufl, \
    split_to_saturation
from .primal_dual import ALPHA_ALG2, PrimalDualPlan
from .rounded import BoundLine, RoundedSolution, TrialCosts, bound_line, run_blocks

ALG1_FACILITY = 2.4061
ALG1_CONNECTION = 1.2707
ALG2_FACILITY = 2.24152
ALG2_CONNECTION = 2.8254
ALG3_BOUND = 2.2975
COIN_P = 0.3396
CLUSTER_TOL = 1e-9
DIST_TOL = 1e-9


@dataclass
class Cluster:
    stage: int               # -1 for stage I, a >= 0 for stage II of scenario a
    center: tuple[int, int]  # (scenario, client)
    pieces: np.ndarray
    radius: float


@dataclass
class ClusterPlan:
    """Everything the rounding needs before any coin is flipped."""

    split: SplitSolution
    first_stage: np.ndarray   # (m, |D|) bool; pair clustered in stage I
    radius: np.ndarray        # (m, |D|) radius of the pair's candidate set, nan outside scenarios
    candidates: dict          # (a, j) -> piece ids
    clusters: dict            # group -> list[Cluster]
    skipped: list             # (group, (a, j)) whose candidate met an earlier cluster
    unclustered: dict         # group -> piece ids

    @property
    def solution(self) -> FractionalSolution:
        return self.split.decomposed.solution

    @property
    def instance(self) -> SuflInstance:
        return self.solution.instance

    @property
    def groups(self) -> list[int]:
        return [-1] + list(range(self.instance.n_scenarios))

    def audit(self) -> list[str]:
        """Structural problems with the clusters; empty when everything holds."""
        size = self.split.opening
        problems = []
        for g in self.groups:
            seen = np.zeros(self.split.n_pieces, dtype=bool)
            for cl in self.clusters[g]:
                if abs(size[cl.pieces].sum() - 1) > CLUSTER_TOL:
                    problems.append(f"cluster {cl.center} in group {g} has mass {size[cl.pieces].sum()!r}")
                if seen[cl.pieces].any():
                    problems.append(f"cluster {cl.center} in group {g} overlaps an earlier cluster")
                seen[cl.pieces] = True
                if np.any(self.split.piece_stage[cl.pieces] != g):
                    problems.append(f"cluster {cl.center} mixes stages")
        for g, (a, j) in self.skipped:
            mine = set(self.candidates[a, j].tolist())
            r = self.radius[a, j]
            if not any(mine & set(cl.pieces.tolist()) and cl.radius <= r + DIST_TOL for cl in self.clusters[g]):
                problems.append(f"skipped center {(a, j)} meets no earlier cluster of smaller radius")
        return problems


def threshold_select_half(decomposed: DecomposedSolution) -> np.ndarray:
    """Pairs whose stage-I share reaches one half (these are clustered in stage I)."""
    act = decomposed.solution.instance.active()
    return act & (decomposed.r1 >= 0.5)


def build_clusters(split: SplitSolution, first_stage: np.ndarray, candidates: dict,
                   radius: np.ndarray) -> ClusterPlan:
    """Greedy disjoint clusters per stage, centers taken by (radius, scenario, client)."""
    inst = split.decomposed.solution.instance
    act = inst.active()
    clusters: dict[int, list[Cluster]] = {}
    skipped = []
    unclustered = {}
    for g in [-1] + list(range(inst.n_scenarios)):
        if g < 0:
            pairs = [(a, j) for a, cl in enumerate(inst.scenarios) for j in cl if first_stage[a, j]]
        else:
            pairs = [(g, j) for j in inst.scenarios[g] if not first_stage[g, j]]
        pairs.sort(key=lambda p: (radius[p], p[0], p[1]))
        used = np.zeros(split.n_pieces, dtype=bool)
        out = []
        for p in pairs:
            pcs = candidates[p]
            if used[pcs].any():
                skipped.append((g, p))
                continue
            used[pcs] = True
            out.append(Cluster(g, p, pcs, float(radius[p])))
        clusters[g] = out
        unclustered[g] = np.flatnonzero((split.piece_stage == g) & ~used)
    assert act.shape == first_stage.shape
    return ClusterPlan(split, first_stage, radius, candidates, clusters, skipped, unclustered)


def plan_lp_rounding(solution: FractionalSolution) -> ClusterPlan:
    """Scale by 2, split, threshold at 1/2 and build the clusters."""
    dec = decompose(solution)
    split = split_to_saturation(dec, 2.0)
    first = threshold_select_half(dec)
    inst = solution.instance
    candidates = {}
    radius = np.full((inst.n_scenarios, inst.n_clients), np.nan)
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            pre = split.prefix[0 if first[a, j] else 1][a, j]
            if pre is None:
                raise RuntimeError(f"pair {(a, j)} has no unit-mass candidate set in its stage")
            candidates[a, j] = pre.pieces
            radius[a, j] = pre.radius
    return build_clusters(split, first, candidates, radius)


# ---------------------------------------------------------------- sampling

def draw_openings(plan: ClusterPlan, rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, pieces) bool matrix of opened pieces; stage I is drawn before every stage II."""
    size = plan.split.opening
    out = np.zeros((n, plan.split.n_pieces), dtype=bool)
    rows = np.arange(n)
    for g in plan.groups:
        for cl in plan.clusters[g]:
            cum = np.cumsum(size[cl.pieces])
            k = np.searchsorted(cum / cum[-1], rng.random(n), side="right")
            out[rows, cl.pieces[np.minimum(k, cl.pieces.size - 1)]] = True
        un = plan.unclustered[g]
        if un.size:
            out[:, un] = rng.random((n, un.size)) < size[un]
    return out


@dataclass
class ClusterTrials:
    """Costs and diagnostics of a batch of roundings."""

    once: TrialCosts        # each facility paid at most once per stage, stage II skipped if open in stage I
    per_copy: TrialCosts    # every opened piece paid separately
    hop_violations: int     # client farther than 3 * radius from every open facility
    stretch_max: float      # largest connection / fractional connection over all clients and trials
    stretch_violations: int
    piece_hits: np.ndarray  # how often each piece opened
    cond_n: np.ndarray      # (m, |D|) trials with some serving piece open
    cond_sum: np.ndarray    # sum of distance to the closest open serving piece
    cond_sq: np.ndarray

    @property
    def n(self) -> int:
        return self.once.open.shape[0]

    @staticmethod
    def concat(parts: list[ClusterTrials]) -> ClusterTrials:
        return ClusterTrials(
            TrialCosts.concat([p.once for p in parts]),
            TrialCosts.concat([p.per_copy for p in parts]),
            sum(p.hop_violations for p in parts),
            max(p.stretch_max for p in parts),
            sum(p.stretch_violations for p in parts),
            sum(p.piece_hits for p in parts),
            sum(p.cond_n for p in parts),
            sum(p.cond_sum for p in parts),
            sum(p.cond_sq for p in parts),
        )


def evaluate_openings(plan: ClusterPlan, opens: np.ndarray, stretch_bound: float | None = None) -> ClusterTrials:
    split = plan.split
    inst = plan.instance
    sol = plan.solution
    n = opens.shape[0]
    m, nf, nd = inst.n_scenarios, inst.n_facilities, inst.n_clients
    fac, stage = split.piece_facility, split.piece_stage
    inc = np.zeros((split.n_pieces, nf))
    inc[np.arange(split.n_pieces), fac] = 1.0
    of = opens.astype(float)

    g1 = stage == -1
    o1 = of[:, g1] @ inc[g1] > 0
    copy1 = of[:, g1] @ inst.f1[fac[g1]]
    once1 = o1 @ inst.f1
    pair_c = sol.pair_cost
    shape = (n, m)
    once_open, copy_open, conn = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    hops = 0
    s_max = 0.0
    s_bad = 0
    for a, clients in enumerate(inst.scenarios):
        ga = stage == a
        o2 = of[:, ga] @ inc[ga] > 0
        copy_open[:, a] = copy1 + of[:, ga] @ inst.f2[a, fac[ga]]
        once_open[:, a] = once1 + (o2 & ~o1) @ inst.f2[a]
        cl = np.array(clients)
        avail = o1 | o2
        dd = np.where(avail[:, :, None], inst.distances[None, :, cl], np.inf).min(axis=1)
        conn[:, a] = dd @ inst.demands[cl]
        hops += int((dd > 3 * plan.radius[a, cl] + DIST_TOL).sum())
        c = pair_c[a, cl]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dd <= DIST_TOL, 0.0, dd / c)
        s_max = max(s_max, float(ratio.max()))
        if stretch_bound is not None:
            s_bad += int((dd > stretch_bound * c + DIST_TOL).sum())

    cond_n, cond_sum, cond_sq = np.zeros((m, nd)), np.zeros((m, nd)), np.zeros((m, nd))
    for a, clients in enumerate(inst.scenarios):
        for j in clients:
            pcs = np.concatenate([split.serve[0][a, j], split.serve[1][a, j]])
            if pcs.size == 0:
                continue
            hit = opens[:, pcs]
            some = hit.any(axis=1)
            md = np.where(hit, inst.distances[fac[pcs], j][None, :], np.inf).min(axis=1)[some]
            cond_n[a, j] = some.sum()
            cond_sum[a, j] = md.sum()
            cond_sq[a, j] = (md ** 2).sum()
    return ClusterTrials(TrialCosts(once_open, conn), TrialCosts(copy_open, conn), hops, s_max, s_bad,
                         opens.sum(axis=0), cond_n, cond_sum, cond_sq)


def simulate(plan: ClusterPlan, n: int, seed: int, stretch_bound: float | None = None,
             workers: int = 1) -> ClusterTrials:
    parts = run_blocks(lambda rng, k: evaluate_openings(plan, draw_openings(plan, rng, k), stretch_bound),
                       n, seed, workers)
    return ClusterTrials.concat(parts)


def to_rounded(plan: ClusterPlan, opened: np.ndarray) -> RoundedSolution:
    """Interpret one row of opened pieces as a two-stage policy with closest assignment."""
    split, inst = plan.split, plan.instance
    fac = split.piece_facility
    stage1 = frozenset(int(i) for i in fac[opened & (split.piece_stage == -1)])
    stage2 = tuple(frozenset(int(i) for i in fac[opened & (split.piece_stage == a)]) - stage1
                   for a in range(inst.n_scenarios))
    sol = RoundedSolution(inst, stage1, stage2, np.full((inst.n_scenarios, inst.n_clients), -1))
    return sol.closest_reassigned()


def open_and_connect(plan: ClusterPlan, rng: np.random.Generator) -> RoundedSolution:
    return to_rounded(plan, draw_openings(plan, rng, 1)[0])


# ---------------------------------------------------------------- checks

def per_scenario_bound_check(costs: TrialCosts, solution: FractionalSolution, dual: DualSolution) -> list[BoundLine]:
    """Per scenario: mean COST(A) against 3 e^-2 V_A + (1 - e^-2) C_A + 2 F_A."""
    e2 = math.exp(-2)
    bound = 3 * e2 * dual.budget + (1 - e2) * solution.conn_by_scenario + 2 * solution.fac_by_scenario
    return [bound_line(f"scenario {a}: 3e^-2 V + (1-e^-2) C + 2 F", costs.scenario[:, a], bound[a])
            for a in range(bound.size)]


def bifactor_bound(solution: FractionalSolution) -> float:
    return ALG1_FACILITY * solution.fac_cost + ALG1_CONNECTION * solution.conn_cost


def marginal_deviation(trials: ClusterTrials, plan: ClusterPlan) -> float:
    """Largest |frequency - size| of any piece, in standard deviations."""
    p = plan.split.opening
    freq = trials.piece_hits / trials.n
    sd = np.sqrt(np.maximum(p * (1 - p), 1e-300) / trials.n)
    dev = np.where(p * (1 - p) > 1e-12, np.abs(freq - p) / sd, np.where(np.abs(freq - p) > 0, np.inf, 0.0))
    return float(dev.max(initial=0.0))


def conditional_distance_lines(trials: ClusterTrials, solution: FractionalSolution) -> list[BoundLine]:
    """Per pair: mean distance to the closest open serving piece, given one opened, against C_(j,A)."""
    out = []
    c = solution.pair_cost
    for a, clients in enumerate(solution.instance.scenarios):
        for j in clients:
            k = trials.cond_n[a, j]
            if k < 2:
                continue
            mean = trials.cond_sum[a, j] / k
            var = max(trials.cond_sq[a, j] / k - mean ** 2, 0.0) * k / (k - 1)
            out.append(BoundLine(f"pair {(a, j)}: conditional distance", float(c[a, j]), float(mean),
                                 math.sqrt(var / k)))
    return out


# ---------------------------------------------------------------- ALG1 / ALG3

@dataclass
class LpRoundingRun:
    solution: FractionalSolution
    dual: DualSolution
    plan: ClusterPlan


def prepare_lp(instance: SuflInstance) -> LpRoundingRun:
    sol, dual = solve_sufl(instance)
    return LpRoundingRun(sol, dual, plan_lp_rounding(sol))


def prepare_alg1(instance: SuflInstance) -> LpRoundingRun:
    """Solve the LP with opening costs scaled by 2.4061 and distances by 1.2707, then plan the rounding."""
    sol, dual = solve_sufl(instance, cost_scale=(ALG1_FACILITY, ALG1_CONNECTION))
    return LpRoundingRun(sol, dual, plan_lp_rounding(sol))


def alg1(instance: SuflInstance, rng: np.random.Generator) -> tuple[RoundedSolution, dict]:
    run = prepare_alg1(instance)
    rounded = open_and_connect(run.plan, rng)
    report = {"scaled_lp_objective": run.solution.lp_objective,
              "guarantee": ALG1_FACILITY * run.solution.fac_cost + ALG1_CONNECTION * run.solution.conn_cost}
    return rounded, report


def mixture_factors(p: float = COIN_P) -> tuple[float, float]:
    """(facility, connection) factors of running ALG1 with probability p and ALG2 otherwise."""
    return (p * ALG1_FACILITY + (1 - p) * ALG2_FACILITY, p * ALG1_CONNECTION + (1 - p) * ALG2_CONNECTION)


@dataclass
class Alg3Plan:
    instance: SuflInstance
    alg1: LpRoundingRun
    alg2: PrimalDualPlan

    @classmethod
    def build(cls, instance: SuflInstance, lp_solution: FractionalSolution | None = None) -> Alg3Plan:
        if lp_solution is None:
            lp_solution, _ = solve_sufl(instance)
        return cls(lp_solution.instance, prepare_alg1(instance), PrimalDualPlan(lp_solution.instance, lp_solution,
                                                                                 ALPHA_ALG2))

    def trials(self, rng: np.random.Generator, n: int, coin: bool = False) -> tuple[TrialCosts, np.ndarray]:
        """Per-trial costs of the better (or, with ``coin``, a randomly chosen) solution and the ALG1 mask."""
        t1 = evaluate_openings(self.alg1.plan, draw_openings(self.alg1.plan, rng, n)).once
        t2 = self.alg2.trials(rng, n)
        probs = self.instance.probs
        if coin:
            pick1 = rng.random(n) < COIN_P
        else:
            pick1 = t1.expected(probs) <= t2.expected(probs)
        sel = pick1[:, None]
        return TrialCosts(np.where(sel, t1.open, t2.open), np.where(sel, t1.conn, t2.conn)), pick1

    def run(self, rng: np.random.Generator, coin: bool = False) -> RoundedSolution:
        r1 = open_and_connect(self.alg1.plan, rng)
        r2 = self.alg2.run(rng)
        if coin:
            return r1 if rng.random() < COIN_P else r2
        return r1 if r1.expected_cost <= r2.expected_cost else r2


def alg3(instance: SuflInstance, rng: np.random.Generator, coin: bool = False) -> RoundedSolution:
    return Alg3Plan.build(instance).run(rng, coin)
