"""Integral two-stage solutions and per-trial cost tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import SuflInstance


@dataclass
class RoundedSolution:
    """A two-stage policy: stage-I facilities plus per-scenario stage-II facilities.

    ``assign[a, j]`` is the facility serving client ``j`` in scenario ``a``
    (-1 for clients outside the scenario).
    """

    instance: SuflInstance
    stage1: frozenset[int]
    stage2: tuple[frozenset[int], ...]
    assign: np.ndarray

    def check(self) -> None:
        act = self.instance.active()
        for a in range(self.instance.n_scenarios):
            avail = self.stage1 | self.stage2[a]
            for j in np.flatnonzero(act[a]):
                if int(self.assign[a, j]) not in avail:
                    raise ValueError(f"client {j} in scenario {a} is not served by an open facility")

    @property
    def open_cost(self) -> np.ndarray:
        inst = self.instance
        s1 = float(inst.f1[list(self.stage1)].sum())
        return np.array([s1 + inst.f2[a, list(s)].sum() for a, s in enumerate(self.stage2)])

    @property
    def conn_cost(self) -> np.ndarray:
        inst = self.instance
        out = np.zeros(inst.n_scenarios)
        for a, clients in enumerate(inst.scenarios):
            for j in clients:
                out[a] += inst.demands[j] * inst.distances[self.assign[a, j], j]
        return out

    @property
    def scenario_cost(self) -> np.ndarray:
        """COST(A): everything paid when scenario A materialises."""
        return self.open_cost + self.conn_cost

    @property
    def expected_cost(self) -> float:
        return float(self.instance.probs @ self.scenario_cost)

    def closest_reassigned(self) -> RoundedSolution:
        """Same openings, every client moved to its closest open facility."""
        inst = self.instance
        assign = self.assign.copy()
        for a, clients in enumerate(inst.scenarios):
            avail = sorted(self.stage1 | self.stage2[a])
            for j in clients:
                assign[a, j] = avail[int(np.argmin(inst.distances[avail, j]))]
        return RoundedSolution(inst, self.stage1, self.stage2, assign)


@dataclass
class TrialCosts:
    """Per-trial, per-scenario costs of a batch of independent runs."""

    open: np.ndarray  # (T, m)
    conn: np.ndarray  # (T, m)

    @property
    def scenario(self) -> np.ndarray:
        return self.open + self.conn

    def expected(self, probs: np.ndarray) -> np.ndarray:
        """Per-trial expectation over scenarios, shape (T,)."""
        return self.scenario @ probs

    @staticmethod
    def concat(parts: list[TrialCosts]) -> TrialCosts:
        return TrialCosts(np.vstack([p.open for p in parts]), np.vstack([p.conn for p in parts]))


# ---------------------------------------------------------------- trial plumbing

BLOCK = 1000  # trials per RNG block
ABS_TOL = 1e-9


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Generator for one block of trials, keyed by (seed, block index) only."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def run_blocks(fn, n: int, seed: int, workers: int = 1, block: int = BLOCK) -> list:
    """Call ``fn(rng, size)`` on consecutive blocks; results come back in block order."""
    sizes = [min(block, n - s) for s in range(0, n, block)]
    jobs = [(block_rng(seed, b), k) for b, k in enumerate(sizes)]
    if workers <= 1 or len(jobs) < 2:
        return [fn(r, k) for r, k in jobs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


@dataclass
class BoundLine:
    """A guarantee compared against a Monte Carlo mean with a one-sided margin."""

    name: str
    bound: float
    mean: float
    se: float
    margin: float = 3.0

    @property
    def satisfied(self) -> bool:
        # small absolute slack so deterministic (zero-variance) runs are not failed by rounding noise
        return bool(self.mean <= self.bound + self.margin * self.se + ABS_TOL * max(1.0, abs(self.bound)))

    def to_dict(self) -> dict:
        return {"name": self.name, "bound": self.bound, "mean": self.mean, "se": self.se,
                "margin_sigmas": self.margin, "satisfied": self.satisfied}


def mean_se(samples: np.ndarray) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n == 0:
        return float("nan"), float("nan")
    sd = float(samples.std(ddof=1)) if n > 1 else 0.0
    return float(samples.mean()), sd / np.sqrt(n)


def bound_line(name: str, samples: np.ndarray, bound: float, margin: float = 3.0) -> BoundLine:
    m, se = mean_se(samples)
    return BoundLine(name, float(bound), m, se, margin)
