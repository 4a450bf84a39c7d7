"""JMS greedy algorithm for (weighted-demand) uncapacitated facility location.

Clients raise their budgets at unit speed.  An unconnected client offers
``d_j * (t - c_ij)^+`` to every closed facility; a connected client offers
``d_j * (c_phi(j)j - c_ij)^+``, i.e. what it would save by switching.  A
facility opens once its offers cover its cost, and every client with a
positive offer then connects (or reconnects) to it.  Unconnected clients also
connect to an already-open facility as soon as their budget reaches it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

EVENT_TOL = 1e-12


@dataclass(frozen=True)
class UflSubinstance:
    costs: np.ndarray      # (|F|,)
    distances: np.ndarray  # (|F|, n_clients)
    demands: np.ndarray    # (n_clients,), positive

    def __post_init__(self):
        if self.costs.size < 1:
            raise ValueError("at least one facility required")
        if self.distances.shape != (self.costs.size, self.demands.size):
            raise ValueError("distance matrix shape mismatch")
        if np.any(self.demands <= 0):
            raise ValueError("demands must be positive")

    def cost_of(self, open_set, assignment) -> float:
        return float(self.costs[list(open_set)].sum()
                     + (self.demands * self.distances[assignment, np.arange(self.demands.size)]).sum())


@dataclass
class GreedyState:
    sub: UflSubinstance
    t: float = 0.0
    phi: np.ndarray = field(default=None)     # -1 while unconnected
    is_open: np.ndarray = field(default=None)
    history: list[tuple[float, str, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.phi is None:
            self.phi = np.full(self.sub.demands.size, -1)
        if self.is_open is None:
            self.is_open = np.zeros(self.sub.costs.size, dtype=bool)

    @property
    def done(self) -> bool:
        return bool(np.all(self.phi >= 0))

    def frozen_offer(self, i: int) -> float:
        """Offer to facility ``i`` from already-connected clients (time independent)."""
        conn = np.flatnonzero(self.phi >= 0)
        if conn.size == 0:
            return 0.0
        c = self.sub.distances
        cur = c[self.phi[conn], conn]
        return float((self.sub.demands[conn] * np.maximum(cur - c[i, conn], 0.0)).sum())

    def open_time(self, i: int) -> float:
        """Earliest time >= t at which facility ``i`` is fully paid for."""
        need = self.sub.costs[i] - self.frozen_offer(i)
        if need <= EVENT_TOL:
            return self.t
        un = np.flatnonzero(self.phi < 0)
        if un.size == 0:
            return np.inf
        dist = self.sub.distances[i, un]
        dem = self.sub.demands[un]
        order = np.argsort(dist, kind="stable")
        dist, dem = dist[order], dem[order]
        # offers are piecewise linear in time; walk the breakpoints
        slope = 0.0
        offset = 0.0  # offer(tau) = slope * tau - offset on the current piece
        for k in range(dist.size):
            slope += dem[k]
            offset += dem[k] * dist[k]
            tau = (need + offset) / slope
            nxt = dist[k + 1] if k + 1 < dist.size else np.inf
            if tau <= nxt + EVENT_TOL:
                return max(tau, self.t)
        return np.inf


def next_event(state: GreedyState) -> tuple[float, str, int]:
    """Next (time, kind, index): kind 'open' (facility) or 'reach' (client hits an open facility)."""
    best = (np.inf, "", -1)
    c = state.sub.distances
    un = np.flatnonzero(state.phi < 0)
    opened = np.flatnonzero(state.is_open)
    if opened.size and un.size:
        reach = c[np.ix_(opened, un)].min(axis=0)
        k = int(np.argmin(reach))  # lowest client index among ties
        best = (max(float(reach[k]), state.t), "reach", int(un[k]))
    for i in range(state.sub.costs.size):
        if state.is_open[i]:
            continue
        tau = state.open_time(i)
        if tau < best[0] - EVENT_TOL:
            best = (tau, "open", i)
    return best


def _apply(state: GreedyState, event: tuple[float, str, int]) -> None:
    t, kind, idx = event
    state.t = max(state.t, t)
    c = state.sub.distances
    if kind == "reach":
        opened = np.flatnonzero(state.is_open)
        state.phi[idx] = int(opened[np.argmin(c[opened, idx])])
        state.history.append((state.t, "reach", idx))
        return
    i = idx
    state.is_open[i] = True
    state.history.append((state.t, "open", i))
    for j in range(state.phi.size):
        if state.phi[j] < 0:
            if c[i, j] <= state.t + EVENT_TOL:
                state.phi[j] = i
        elif c[i, j] < c[state.phi[j], j]:
            state.phi[j] = i


def jms_solve(sub: UflSubinstance, max_events: int | None = None) -> tuple[list[int], np.ndarray, float]:
    """Run the greedy to completion; returns (open facilities, assignment, cost)."""
    state = GreedyState(sub)
    limit = max_events or 10 * (sub.costs.size + sub.demands.size) + 10
    for _ in range(limit):
        if state.done:
            break
        ev = next_event(state)
        if not np.isfinite(ev[0]):
            raise RuntimeError("no further event; instance has no reachable facility")
        _apply(state, ev)
    else:
        raise RuntimeError("event limit exceeded")
    open_set = [int(i) for i in np.flatnonzero(state.is_open)]
    return open_set, state.phi.copy(), sub.cost_of(open_set, state.phi)


def jms_run(sub: UflSubinstance) -> GreedyState:
    """Like :func:`jms_solve` but returns the full final state (event history included)."""
    state = GreedyState(sub)
    while not state.done:
        _apply(state, next_event(state))
    return state


def brute_force_ufl(sub: UflSubinstance) -> tuple[list[int], float]:
    """Exact optimum by enumerating all nonempty open sets."""
    nf = sub.costs.size
    best = (None, np.inf)
    for r in range(1, nf + 1):
        for s in itertools.combinations(range(nf), r):
            idx = list(s)
            cost = sub.costs[idx].sum() + (sub.demands * sub.distances[idx].min(axis=0)).sum()
            if cost < best[1] - 1e-12:
                best = (idx, float(cost))
    return best


def ufl_lp_breakdown(sub: UflSubinstance) -> tuple[float, float]:
    """(facility cost, connection cost) of an optimal LP solution of the plain UFL relaxation."""
    from .simplex import LinearProgram, solve

    nf, nd = sub.distances.shape
    lp = LinearProgram()
    for i in range(nf):
        lp.add_var(f"y[{i}]", sub.costs[i])
    for j in range(nd):
        for i in range(nf):
            lp.add_var(f"x[{i},{j}]", sub.demands[j] * sub.distances[i, j])
    for j in range(nd):
        lp.add_row({lp.index[f"x[{i},{j}]"]: 1.0 for i in range(nf)}, ">=", 1.0)
        for i in range(nf):
            lp.add_row({lp.index[f"y[{i}]"]: 1.0, lp.index[f"x[{i},{j}]"]: -1.0}, ">=", 0.0)
    res = solve(lp)
    fac = float(sub.costs @ res.x[:nf])
    return fac, res.objective - fac
