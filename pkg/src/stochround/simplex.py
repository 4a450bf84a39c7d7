"""Dense two-phase revised simplex with Bland's anti-cycling rule.

Small and deterministic by design: the LPs built in this package have at most
a few thousand columns, and identical input must give bit-identical output so
that solution fixtures stay stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64


class LPError(RuntimeError):
    pass


class InfeasibleError(LPError):
    pass


class UnboundedError(LPError):
    pass


@dataclass
class LinearProgram:
    """min (or max) c.x subject to sparse rows with senses '>=', '<=', '='.

    Variables default to bounds [0, inf).  Names are optional but unique.
    """

    maximize: bool = False
    cost: list[float] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    var_names: list[str] = field(default_factory=list)
    row_idx: list[np.ndarray] = field(default_factory=list)
    row_val: list[np.ndarray] = field(default_factory=list)
    senses: list[str] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.cost)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    def add_var(self, name: str, cost: float = 0.0, lb: float = 0.0, ub: float = np.inf) -> int:
        if name in self.index:
            raise ValueError(f"duplicate variable {name!r}")
        if not np.isfinite(cost) or not np.isfinite(lb) or np.isnan(ub):
            raise ValueError(f"bad coefficient for {name!r}")
        self.index[name] = len(self.cost)
        self.cost.append(float(cost))
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.var_names.append(name)
        return self.index[name]

    def add_row(self, coefs: dict[int, float], sense: str, rhs: float, name: str = "") -> int:
        if sense not in (">=", "<=", "="):
            raise ValueError(f"bad sense {sense!r}")
        idx = np.fromiter(coefs.keys(), dtype=int, count=len(coefs))
        val = np.fromiter(coefs.values(), dtype=float, count=len(coefs))
        if not np.all(np.isfinite(val)) or not np.isfinite(rhs):
            raise ValueError(f"non-finite coefficient in row {name!r}")
        self.row_idx.append(idx)
        self.row_val.append(val)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{len(self.rhs) - 1}")
        return len(self.rhs) - 1

    def triples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Constraint matrix as (row, col, value) arrays."""
        if not self.row_idx:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        r = np.concatenate([np.full(len(ix), k) for k, ix in enumerate(self.row_idx)])
        return r, np.concatenate(self.row_idx), np.concatenate(self.row_val)

    def dense(self) -> np.ndarray:
        a = np.zeros((self.n_rows, self.n_vars))
        r, c, v = self.triples()
        np.add.at(a, (r, c), v)
        return a

    def objective(self, x: np.ndarray) -> float:
        return float(np.dot(self.cost, x))

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.dense() @ x


@dataclass
class StandardForm:
    """min c.x, A x = b (b >= 0), x >= 0, with the map back to the source LP."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_struct: int          # columns 0..n_struct-1 are shifted structural variables
    shift: np.ndarray      # structural x = shift + x'
    row_sign: np.ndarray   # +1/-1 applied to each row to make b >= 0
    n_user_rows: int
    slack_col: np.ndarray  # per row: index of its +1 slack column, or -1
    obj_const: float
    obj_sign: float        # -1 for maximization


def standard_form(lp: LinearProgram) -> StandardForm:
    n = lp.n_vars
    lb = np.array(lp.lb)
    ub = np.array(lp.ub)
    a_user = lp.dense()
    rhs = np.array(lp.rhs, dtype=float) - a_user @ lb
    senses = list(lp.senses)
    rows = [a_user]
    finite = np.flatnonzero(np.isfinite(ub))
    if finite.size:
        ubrows = np.zeros((finite.size, n))
        ubrows[np.arange(finite.size), finite] = 1.0
        rows.append(ubrows)
        rhs = np.concatenate([rhs, ub[finite] - lb[finite]])
        senses += ["<="] * finite.size
    a = np.vstack(rows) if rows else np.zeros((0, n))
    m = a.shape[0]
    n_slack = sum(s != "=" for s in senses)
    full = np.zeros((m, n + n_slack))
    full[:, :n] = a
    sign = np.ones(m)
    slack_col = np.full(m, -1)
    k = n
    for r, s in enumerate(senses):
        if s == "<=":
            full[r, k] = 1.0
        elif s == ">=":
            full[r, k] = -1.0
        if rhs[r] < 0:
            sign[r] = -1.0
        if s != "=":
            if full[r, k] * sign[r] > 0:
                slack_col[r] = k
            k += 1
    full *= sign[:, None]
    b = rhs * sign
    osign = -1.0 if lp.maximize else 1.0
    c = np.zeros(full.shape[1])
    c[:n] = osign * np.array(lp.cost)
    return StandardForm(full, b, c, n, lb, sign, lp.n_rows, slack_col,
                        float(osign * np.dot(lp.cost, lb)), osign)


@dataclass
class LPResult:
    x: np.ndarray                # structural variable values
    objective: float
    duals: np.ndarray            # per user row: d(objective)/d(rhs)
    reduced_costs: np.ndarray    # per structural variable, in the LP's own sense
    basis: np.ndarray            # standard-form basic column per row
    iterations: int
    form: StandardForm = field(repr=False)


class _Simplex:
    def __init__(self, a: np.ndarray, b: np.ndarray, basis: np.ndarray, n_real: int):
        self.a = a
        self.b = b
        self.m = a.shape[0]
        self.basis = basis.copy()
        self.n_real = n_real  # columns >= n_real are artificial
        self.iterations = 0
        self.refactor()

    def refactor(self):
        bm = self.a[:, self.basis]
        self.binv = np.linalg.inv(bm) if self.m else np.zeros((0, 0))
        self.xb = self.binv @ self.b
        self.xb[np.abs(self.xb) < 1e-13] = 0.0
        self.since = 0

    def pivot(self, r: int, q: int, u: np.ndarray):
        piv = u[r]
        self.binv[r] /= piv
        other = np.arange(self.m) != r
        self.binv[other] -= np.outer(u[other], self.binv[r])
        theta = self.xb[r] / piv
        self.xb[other] -= theta * u[other]
        self.xb[r] = theta
        self.xb[np.abs(self.xb) < 1e-13] = 0.0
        self.basis[r] = q
        self.iterations += 1
        self.since += 1
        if self.since >= REFACTOR_EVERY:
            self.refactor()

    def run(self, c: np.ndarray, allowed: np.ndarray, max_iter: int) -> None:
        """Bland's rule: lowest-index improving column, lowest-index leaving variable."""
        for _ in range(max_iter):
            y = c[self.basis] @ self.binv
            d = c - y @ self.a
            d[self.basis] = 0.0
            cand = np.flatnonzero((d < -OPT_TOL) & allowed)
            if cand.size == 0:
                return
            q = int(cand[0])
            u = self.binv @ self.a[:, q]
            pos = np.flatnonzero(u > PIVOT_TOL)
            if pos.size == 0:
                raise UnboundedError("objective is unbounded")
            ratios = np.maximum(self.xb[pos], 0.0) / u[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12]
            r = int(ties[np.argmin(self.basis[ties])])
            self.pivot(r, q, u)
        raise LPError(f"iteration limit {max_iter} reached")


def solve(lp: LinearProgram, max_iter: int = 200000) -> LPResult:
    """Solve ``lp``; raises :class:`InfeasibleError` or :class:`UnboundedError`."""
    sf = standard_form(lp)
    a, b = sf.a, sf.b
    m, n = a.shape
    # initial basis: slack where it has +1 after sign normalisation, artificial otherwise
    need = np.flatnonzero(sf.slack_col < 0)
    art = np.zeros((m, need.size))
    art[need, np.arange(need.size)] = 1.0
    aa = np.hstack([a, art])
    basis = sf.slack_col.copy()
    basis[need] = n + np.arange(need.size)
    spx = _Simplex(aa, b, basis, n)
    if need.size:
        c1 = np.zeros(n + need.size)
        c1[n:] = 1.0
        spx.run(c1, np.ones(n + need.size, bool), max_iter)
        if float(c1[spx.basis] @ spx.xb) > FEAS_TOL * max(1.0, np.abs(b).max()):
            raise InfeasibleError("no feasible point")
        # drive zero-valued artificials out of the basis where possible
        for r in range(m):
            if spx.basis[r] >= n:
                row = spx.binv[r] @ a
                row[spx.basis[spx.basis < n]] = 0.0
                cand = np.flatnonzero(np.abs(row) > PIVOT_TOL)
                if cand.size:
                    q = int(cand[0])
                    spx.pivot(r, q, spx.binv @ aa[:, q])
        spx.xb = np.maximum(spx.xb, 0.0)
    c2 = np.concatenate([sf.c, np.zeros(need.size)])
    allowed = np.arange(n + need.size) < n
    spx.run(c2, allowed, max_iter)
    spx.refactor()
    xs = np.zeros(n + need.size)
    xs[spx.basis] = np.maximum(spx.xb, 0.0)
    y = c2[spx.basis] @ spx.binv
    x = sf.shift + xs[: sf.n_struct]
    red = sf.c[: sf.n_struct] - y @ a[:, : sf.n_struct]
    duals = (y * sf.row_sign)[: sf.n_user_rows] * sf.obj_sign
    return LPResult(
        x=x,
        objective=float(np.dot(lp.cost, x)),
        duals=duals,
        reduced_costs=red * sf.obj_sign,
        basis=spx.basis.copy(),
        iterations=spx.iterations,
        form=sf,
    )


def residuals(lp: LinearProgram, res: LPResult) -> dict[str, float]:
    """Primal/dual infeasibility and complementary-slackness residuals of a solved LP."""
    a = lp.dense()
    act = a @ res.x
    rhs = np.array(lp.rhs)
    sense = np.array(lp.senses)
    viol = np.where(sense == ">=", rhs - act, np.where(sense == "<=", act - rhs, np.abs(act - rhs)))
    primal_inf = float(max(0.0, viol.max(initial=0.0), (np.array(lp.lb) - res.x).max(initial=0.0)))
    # duals in min-sense: >= rows nonnegative, <= rows nonpositive
    s = -1.0 if lp.maximize else 1.0
    yd = s * res.duals
    dual_row_inf = np.where(sense == ">=", -yd, np.where(sense == "<=", yd, 0.0))
    ub = np.array(lp.ub)
    lb = np.array(lp.lb)
    red = s * (np.array(lp.cost) - res.duals @ a)
    # reduced cost may be negative only at a finite upper bound
    at_ub = np.isfinite(ub) & (res.x >= ub - 1e-9)
    dual_var_inf = np.where(at_ub, 0.0, -red)
    dual_inf = float(max(0.0, dual_row_inf.max(initial=0.0), dual_var_inf.max(initial=0.0)))
    cs_rows = float(np.abs(res.duals * (act - rhs)).max(initial=0.0))
    cs_vars = float(np.abs(np.where(at_ub, 0.0, red) * (res.x - lb)).max(initial=0.0))
    raw_red = np.array(lp.cost) - res.duals @ a
    bound = np.where(at_ub, np.where(np.isfinite(ub), ub, 0.0), lb)
    dual_obj = float(res.duals @ rhs + (raw_red * bound).sum())
    return {
        "primal_infeasibility": primal_inf,
        "dual_infeasibility": dual_inf,
        "complementary_slackness": max(cs_rows, cs_vars),
        "duality_gap": abs(res.objective - dual_obj),
    }
