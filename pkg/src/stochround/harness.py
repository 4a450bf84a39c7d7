"""Monte Carlo evaluation, guarantee lines and report rendering."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .cip_rounding import LambdaConfig, TreeTrials, batch_round_tree, choose_lambda, tree_degree, tree_trials
from .instances import GeneratorConfig, ScenarioTreeCip, SuflInstance, generate_sufl
from .lp import solve_cip, solve_sufl
from .lp_rounding import (ALG1_CONNECTION, ALG1_FACILITY, ALG3_BOUND, Alg3Plan, conditional_distance_lines,
                          bifactor_bound, marginal_deviation, per_scenario_bound_check, plan_lp_rounding,
                          prepare_alg1, simulate)
from .oracles import oracle_cip, oracle_sufl
from .per_scenario import GAMMA_DEFAULT, PerScenarioPlan, connection_factor, equalization_root, tradeoff
from .primal_dual import ALPHA_ALG2, ALPHA_DEFAULT, PrimalDualPlan, evaluate_ratio
from .rounded import BoundLine, TrialCosts, bound_line, mean_se, run_blocks

SCHEMA = "stochround.report/1"
CI_Z = 2.576
SANDWICH_TOL = 1e-6
SUFL_ALGOS = ("pd", "alg2", "lp", "alg1", "alg3", "per-scenario")
CIP_ALGOS = ("independent", "dependent")


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("STOCHROUND_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class EvalParams:
    alpha: float = ALPHA_DEFAULT
    gamma: float = GAMMA_DEFAULT
    strict: bool = False
    lam: float | None = None       # independent CIP rounding; None picks it automatically
    coin: bool = False             # ALG3 by coin flip instead of best-of-two
    closest: bool = False          # primal-dual: reassign clients to the closest open facility
    cost_mode: str = "once"        # once | per-copy
    oracle: bool = False
    workers: int = field(default_factory=default_workers)

    def __post_init__(self):
        if self.cost_mode not in ("once", "per-copy"):
            raise ValueError(f"unknown cost mode {self.cost_mode!r}")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "gamma": self.gamma, "strict": self.strict, "lambda": self.lam,
                "coin": self.coin, "closest": self.closest, "cost_mode": self.cost_mode, "oracle": self.oracle}


@dataclass
class TrialReport:
    algorithm: str
    seed: int
    trials: int
    params: dict
    labels: list[str]
    probs: list[float]
    scenario_mean: list[float]
    scenario_se: list[float]
    overall_mean: float
    overall_se: float
    lp: dict
    bounds: list[BoundLine]
    failures: dict
    oracle: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def scenario_ci(self) -> list[list[float]]:
        return [[m - CI_Z * s, m + CI_Z * s] for m, s in zip(self.scenario_mean, self.scenario_se)]

    @property
    def overall_ci(self) -> list[float]:
        return [self.overall_mean - CI_Z * self.overall_se, self.overall_mean + CI_Z * self.overall_se]

    @property
    def passed(self) -> bool:
        return all(b.satisfied for b in self.bounds)

    def bound(self, prefix: str) -> list[BoundLine]:
        return [b for b in self.bounds if b.name.startswith(prefix)]

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "algorithm": self.algorithm,
            "seed": self.seed,
            "trials": self.trials,
            "params": self.params,
            "passed": self.passed,
            "lp": self.lp,
            "oracle": self.oracle,
            "overall": {"mean": self.overall_mean, "se": self.overall_se, "ci99": self.overall_ci},
            "scenarios": [{"label": l, "prob": p, "mean": m, "se": s, "ci99": ci}
                          for l, p, m, s, ci in zip(self.labels, self.probs, self.scenario_mean,
                                                    self.scenario_se, self.scenario_ci)],
            "bounds": [b.to_dict() for b in self.bounds],
            "failures": self.failures,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> TrialReport:
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {doc.get('schema')!r}")
        sc = doc["scenarios"]
        bounds = [BoundLine(b["name"], b["bound"], b["mean"], b["se"], b["margin_sigmas"]) for b in doc["bounds"]]
        return cls(doc["algorithm"], doc["seed"], doc["trials"], doc["params"], [s["label"] for s in sc],
                   [s["prob"] for s in sc], [s["mean"] for s in sc], [s["se"] for s in sc],
                   doc["overall"]["mean"], doc["overall"]["se"], doc["lp"], bounds, doc["failures"],
                   doc["oracle"], doc["diagnostics"])


def _finite(x):
    """JSON-safe numbers: inf and nan become strings."""
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def report_json(report: TrialReport) -> str:
    return json.dumps(_finite(report.to_dict()), indent=2) + "\n"


def report_text(report: TrialReport) -> str:
    lines = [f"{report.algorithm}: T={report.trials} seed={report.seed} "
             f"mean={report.overall_mean:.6g} (99% CI {report.overall_ci[0]:.6g} .. {report.overall_ci[1]:.6g})",
             f"  LP value {report.lp.get('value', float('nan')):.6g}"]
    if report.oracle is not None:
        lines.append(f"  optimum {report.oracle['optimum']:.6g}")
    for b in report.bounds:
        flag = "PASS" if b.satisfied else "FAIL"
        lines.append(f"  [{flag}] {b.name}: mean {b.mean:.6g} vs bound {b.bound:.6g} (se {b.se:.3g})")
    for k, v in report.failures.items():
        lines.append(f"  {k}: {v}")
    return "\n".join(lines) + "\n"


def report_render(report: TrialReport) -> tuple[str, str]:
    return report_text(report), report_json(report)


def render_comparison(reports: list[TrialReport]) -> str:
    rows = sorted(reports, key=lambda r: (r.overall_mean, r.algorithm))
    width = max([len(r.algorithm) for r in rows] + [9])
    out = [f"{'algorithm':<{width}}  {'mean':>12}  {'se':>10}  {'/LP':>7}  bounds"]
    for r in rows:
        lp = r.lp.get("value", float("nan"))
        out.append(f"{r.algorithm:<{width}}  {r.overall_mean:>12.6g}  {r.overall_se:>10.3g}  "
                   f"{r.overall_mean / lp if lp else float('nan'):>7.4f}  {'pass' if r.passed else 'FAIL'}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- evaluation

def _count_line(name: str, count: float) -> BoundLine:
    """A deterministic requirement that ``count`` be zero."""
    return BoundLine(name, 0.0, float(count), 0.0)


def _summary(samples: np.ndarray, probs: np.ndarray) -> tuple[list[float], list[float], float, float]:
    means, ses = [], []
    for k in range(samples.shape[1]):
        m, s = mean_se(samples[:, k])
        means.append(m)
        ses.append(s)
    m, s = mean_se(samples @ probs)
    return means, ses, m, s


def _sufl_costs(trials, mode: str) -> TrialCosts:
    return trials.once if mode == "once" else trials.per_copy


def evaluate(instance, algorithm: str, params: EvalParams | None = None, trials: int = 10_000,
             seed: int = 0) -> TrialReport:
    params = params or EvalParams()
    if trials < 100:
        raise ValueError("at least 100 trials required")
    if isinstance(instance, SuflInstance):
        if algorithm not in SUFL_ALGOS:
            raise ValueError(f"unknown algorithm {algorithm!r} for a facility-location instance")
        return _evaluate_sufl(instance, algorithm, params, trials, seed)
    if isinstance(instance, ScenarioTreeCip):
        if algorithm not in CIP_ALGOS:
            raise ValueError(f"unknown algorithm {algorithm!r} for a scenario-tree CIP")
        return _evaluate_cip(instance, algorithm, params, trials, seed)
    raise TypeError("unsupported instance type")


def _evaluate_sufl(instance: SuflInstance, algo: str, params: EvalParams, n: int, seed: int) -> TrialReport:
    sol, dual = solve_sufl(instance)
    inst = sol.instance
    probs = inst.probs
    lp = {"value": sol.value, "facility": sol.fac_cost, "connection": sol.conn_cost,
          "val_by_scenario": sol.val_by_scenario.tolist()}
    bounds: list[BoundLine] = []
    failures: dict = {}
    diag: dict = {}
    w = params.workers

    if algo in ("pd", "alg2"):
        alpha = ALPHA_ALG2 if algo == "alg2" else params.alpha
        plan = PrimalDualPlan(inst, sol, alpha)
        costs = TrialCosts.concat(run_blocks(lambda rng, k: plan.trials(rng, k, params.closest), n, seed, w))
        fac, conn, ratio = evaluate_ratio(alpha)
        exp = costs.expected(probs)
        bounds.append(bound_line(f"ratio {ratio:.5g} x LP", exp, ratio * sol.value))
        bounds.append(bound_line(f"bifactor {fac:.5g} F* + {conn:.5g} C*", exp,
                                 fac * sol.fac_cost + conn * sol.conn_cost))
        diag.update(alpha=alpha, exact_expectation=float(probs @ plan.exact_expectation(params.closest)),
                    patterns=len(plan.cache))
    elif algo in ("lp", "alg1"):
        run_sol = sol
        if algo == "alg1":
            run = prepare_alg1(inst)
            run_sol, plan = run.solution, run.plan
        else:
            plan = plan_lp_rounding(sol)
        tr = simulate(plan, n, seed, workers=w)
        costs = _sufl_costs(tr, params.cost_mode)
        exp = costs.expected(probs)
        if algo == "lp":
            bounds += per_scenario_bound_check(costs, sol, dual)
            bounds.append(bound_line("2.4061 F* + 1.2707 C*", exp, bifactor_bound(sol)))
        else:
            bounds.append(bound_line("2.4061 F + 1.2707 C of the scaled LP solution", exp, bifactor_bound(run_sol)))
            diag["scaled_lp_objective"] = run_sol.lp_objective
        bounds.append(_count_line("3-hop fallback violations", tr.hop_violations))
        cond = conditional_distance_lines(tr, run_sol)
        diag.update(marginal_max_sigmas=marginal_deviation(tr, plan),
                    conditional_distance_max_sigmas=max(((c.mean - c.bound) / c.se if c.se > 0 else 0.0)
                                                        for c in cond) if cond else 0.0,
                    per_copy_facility_mean=float(tr.per_copy.open.mean(axis=0) @ probs),
                    facility_fractional_scaled=2 * run_sol.fac_cost,
                    clusters=sum(len(v) for v in plan.clusters.values()), pieces=plan.split.n_pieces)
    elif algo == "alg3":
        plan3 = Alg3Plan.build(inst, sol)
        parts = run_blocks(lambda rng, k: plan3.trials(rng, k, params.coin), n, seed, w)
        costs = TrialCosts.concat([p[0] for p in parts])
        exp = costs.expected(probs)
        bounds.append(bound_line(f"{ALG3_BOUND} x LP", exp, ALG3_BOUND * sol.value))
        diag.update(alg1_share=float(np.concatenate([p[1] for p in parts]).mean()), coin=params.coin)
    else:
        plan = PerScenarioPlan.build(sol, params.gamma, params.strict)
        tr = plan.simulate(n, seed, w)
        costs = _sufl_costs(tr, params.cost_mode)
        g = plan.gamma
        val = sol.val_by_scenario
        cf = connection_factor(g)
        for a in range(inst.n_scenarios):
            bounds.append(bound_line(f"scenario {a}: {g:.5g} x Val_A", costs.scenario[:, a], g * val[a]))
        for a in range(inst.n_scenarios):
            bounds.append(bound_line(f"scenario {a}: connection {cf:.5g} x C_A", costs.conn[:, a],
                                     cf * sol.conn_by_scenario[a]))
        bounds.append(_count_line(f"stretch above {3 * g / (g - 2):.5g}", tr.stretch_violations))
        bounds.append(_count_line("radius bound violations", len(plan.filtered.radius_violations())))
        bounds.append(_count_line("3-hop fallback violations", tr.hop_violations))
        diag.update(plan.report(), stretch_max=tr.stretch_max)

    orc = None
    if params.oracle:
        orc = oracle_sufl(inst)
        lp["optimum"] = orc.optimum
        bounds.append(_count_line("LP above optimum", max(0.0, sol.value - orc.optimum - SANDWICH_TOL)))
        below = costs.expected(probs) < orc.optimum - SANDWICH_TOL
        bounds.append(_count_line("trials cheaper than optimum", int(below.sum())))
        if algo == "alg1":
            bounds.append(bound_line("2.4061 F_opt + 1.2707 C_opt", costs.expected(probs),
                                     ALG1_FACILITY * orc.facility + ALG1_CONNECTION * orc.connection))
    means, ses, m, s = _summary(costs.scenario, probs)
    return TrialReport(algo, seed, n, params.to_dict(), [f"scenario {a}" for a in range(inst.n_scenarios)],
                       probs.tolist(), means, ses, m, s, lp, bounds, failures,
                       orc.to_dict() if orc else None, diag)


def cip_lambda(tree: ScenarioTreeCip, lam: float | None = None) -> tuple[float, LambdaConfig]:
    kind = "general" if tree.cip_kind == "general" else "set-cover"
    cfg = LambdaConfig(kind=kind, n=max(1, tree.rows), big_b=max(1.0, tree.big_b) if kind == "general" else 1.0)
    return (choose_lambda(cfg) if lam is None else float(lam)), cfg


def is_unit_cover(tree: ScenarioTreeCip) -> bool:
    cols_ok = all(np.isin(node.columns, (0.0, 1.0)).all() for node in tree.nodes)
    return bool(cols_ok and np.isin(tree.b_by_leaf, (0.0, 1.0)).all())


def _evaluate_cip(tree: ScenarioTreeCip, algo: str, params: EvalParams, n: int, seed: int) -> TrialReport:
    sol = solve_cip(tree)
    lp = {"value": sol.objective}
    bounds: list[BoundLine] = []
    diag: dict = {}
    if algo == "independent":
        lam, cfg = cip_lambda(tree, params.lam)
        param = lam
        diag.update(kind=cfg.kind, eps_row=cfg.eps_row, B=cfg.big_b)
    else:
        if not is_unit_cover(tree):
            raise ValueError("dependent rounding needs 0/1 columns and right-hand sides in {0, 1}")
        param = tree_degree(tree)
        diag["degree"] = param
    parts = run_blocks(lambda rng, k: tree_trials(tree, batch_round_tree(sol, algo, param, rng, k)), n, seed,
                       params.workers)
    tt = TreeTrials.concat(parts)
    leaves = tree.leaves
    probs = np.array([tree.path_prob(v) for v in leaves])
    ok = tt.covered.all(axis=1)
    failures = {"trials_with_uncovered_rows": int((~ok).sum()), "failure_rate": float((~ok).mean()),
                "uncovered_rows_per_trial": float((tt.uncovered @ probs).mean())}
    if algo == "independent":
        diag["lambda"] = lam
        if cfg.kind == "set-cover":
            bounds.append(bound_line("uncovered rows <= 1.5 n e^-lambda", tt.uncovered @ probs,
                                     1.5 * tree.rows * math.exp(-lam)))
        else:
            bounds.append(bound_line("failure rate <= n eps_row", (~ok).astype(float), tree.rows * cfg.eps_row))
        if ok.sum() >= 2:
            bounds.append(bound_line("cost given success <= 1.1 lambda LP", tt.cost[ok], 1.1 * lam * sol.objective))
    else:
        bounds.append(_count_line("uncovered rows", int(tt.uncovered.sum())))
        bounds.append(bound_line(f"{param:g} x LP", tt.cost, param * sol.objective))
    orc = None
    if params.oracle:
        orc = oracle_cip(tree)
        lp["optimum"] = orc.optimum
        bounds.append(_count_line("LP above optimum", max(0.0, sol.objective - orc.optimum - SANDWICH_TOL)))
        bounds.append(_count_line("covered trials cheaper than optimum",
                                  int((tt.cost[ok] < orc.optimum - SANDWICH_TOL).sum())))
    means, ses, m, s = _summary(tt.leaf_cost, probs)
    return TrialReport(algo, seed, n, params.to_dict(), [f"leaf {v}" for v in leaves], probs.tolist(), means, ses,
                       m, s, lp, bounds, failures, orc.to_dict() if orc else None, diag)


# ---------------------------------------------------------------- suites

def suite_configs(count: int = 20, n_facilities: int = 6, n_clients: int = 8, n_scenarios: int = 4
                  ) -> list[GeneratorConfig]:
    """Seeded facility-location suite: even seeds use the set-system metric (often fractional LPs),
    odd seeds points in the unit square."""
    out = []
    for s in range(count):
        if s % 2 == 0:
            out.append(GeneratorConfig(seed=s, n_facilities=n_facilities, n_clients=n_clients,
                                       n_scenarios=n_scenarios, facility_cost=(1.0, 3.0), inflation=(1.0, 1.3),
                                       metric="set-system", set_size=3, near_range=(1.0, 1.2),
                                       demand_range=(0.5, 2.0)))
        else:
            out.append(GeneratorConfig(seed=s, n_facilities=n_facilities, n_clients=n_clients,
                                       n_scenarios=n_scenarios, facility_cost=(0.2, 1.0), inflation=(1.0, 1.5)))
    return out


def suite_instances(count: int = 20, **sizes) -> list[SuflInstance]:
    return [generate_sufl(c) for c in suite_configs(count, **sizes)]


def gamma_tradeoff(gammas) -> list[dict]:
    root = equalization_root()
    return [{**tradeoff(g), "equalization_root": root} for g in gammas]
