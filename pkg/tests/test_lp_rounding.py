import math

import numpy as np
import pytest

from stochround.harness import suite_instances
from stochround.instances import GeneratorConfig, SuflInstance, generate_sufl
from stochround.lp import FractionalSolution, decompose, solve_sufl
from stochround.lp_rounding import (ALG1_CONNECTION, ALG1_FACILITY, ALG3_BOUND, COIN_P, Alg3Plan,
                                    conditional_distance_lines, bifactor_bound, draw_openings, evaluate_openings,
                                    marginal_deviation, mixture_factors, open_and_connect, per_scenario_bound_check,
                                    plan_lp_rounding, prepare_alg1, simulate, threshold_select_half,
                                    to_rounded)
from stochround.oracles import oracle_sufl
from stochround.rounded import bound_line, mean_se


def single_client(y, ya):
    inst = SuflInstance(np.array([1.0]), np.array([[1.0]]), np.array([[1.0]]), ((0,),), np.array([1.0]))
    return FractionalSolution(inst, np.array([y]), np.array([[ya]]), np.array([[[1.0]]]))


def line(distances, y, x) -> FractionalSolution:
    """Stage-I only solution on the given facility-client distances."""
    d = np.array(distances, dtype=float)
    nf, nd = d.shape
    inst = SuflInstance(np.ones(nf), np.full((1, nf), 9.0), d, (tuple(range(nd)),), np.array([1.0]))
    return FractionalSolution(inst, np.array(y, dtype=float), np.zeros((1, nf)), np.array([x], dtype=float))


def test_threshold_boundary():
    assert threshold_select_half(decompose(single_client(0.5, 0.5)))[0, 0]
    assert not threshold_select_half(decompose(single_client(0.49, 0.51)))[0, 0]
    dec = decompose(single_client(0.3, 0.7))
    assert dec.r2[0, 0] >= 0.5


def test_disjoint_neighborhoods():
    sol = line([[0.0, 5.0], [5.0, 0.0]], [1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])
    plan = plan_lp_rounding(sol)
    assert len(plan.clusters[-1]) == 2
    assert plan.skipped == [] and plan.audit() == []


def test_nested_neighborhoods():
    sol = line([[1.0, 2.0]], [1.0], [[1.0, 1.0]])
    plan = plan_lp_rounding(sol)
    assert [c.center for c in plan.clusters[-1]] == [(0, 0)]
    assert plan.skipped == [(-1, (0, 1))]
    assert plan.audit() == []


def test_two_copy_cluster():
    # two equidistant facilities at 0.2 and 0.3 in stage I (scaled 0.4 / 0.6), the rest in stage II
    inst = SuflInstance(np.array([1.0, 1.0, 1.0]), np.full((1, 3), 1.0), np.array([[1.0], [1.0], [2.0]]), ((0,),),
                        np.array([1.0]))
    sol = FractionalSolution(inst, np.array([0.2, 0.3, 0.0]), np.array([[0.0, 0.0, 0.5]]),
                             np.array([[[0.2], [0.3], [0.5]]]))
    plan = plan_lp_rounding(sol)
    (cl,) = plan.clusters[-1]
    assert sorted(plan.split.opening[cl.pieces].tolist()) == pytest.approx([0.4, 0.6])
    opens = draw_openings(plan, np.random.default_rng(0), 100_000)
    assert np.all(opens[:, cl.pieces].sum(axis=1) == 1)
    freq = opens[:, cl.pieces].mean(axis=0)
    p = plan.split.opening[cl.pieces]
    assert np.all(np.abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / 100_000))


def test_three_hop_and_marginals(fractional_sufl):
    sol, _ = solve_sufl(fractional_sufl)
    plan = plan_lp_rounding(sol)
    assert plan.audit() == []
    tr = simulate(plan, 100_000, seed=1)
    assert tr.hop_violations == 0
    assert marginal_deviation(tr, plan) <= 4.5
    # every opened copy paid separately: expected opening cost is twice the fractional one
    for a in range(fractional_sufl.n_scenarios):
        m, se = mean_se(tr.per_copy.open[:, a])
        assert abs(m - 2 * sol.fac_by_scenario[a]) <= 4 * se + 1e-9
    assert np.all(tr.once.open <= tr.per_copy.open + 1e-12)


def test_conditional_distance(fractional_sufl):
    sol, _ = solve_sufl(fractional_sufl)
    tr = simulate(plan_lp_rounding(sol), 50_000, seed=2)
    lines = conditional_distance_lines(tr, sol)
    assert lines and all(b.satisfied for b in lines)


@pytest.mark.parametrize("inst", suite_instances(6), ids=lambda i: f"nf{i.n_facilities}")
def test_structure_on_suite(inst):
    sol, dual = solve_sufl(inst)
    plan = plan_lp_rounding(sol)
    assert plan.audit() == []
    tr = simulate(plan, 4000, seed=0)
    assert tr.hop_violations == 0
    lines = per_scenario_bound_check(tr.once, sol, dual)
    assert all(b.satisfied for b in lines)
    assert bound_line("cor", tr.once.expected(inst.probs), bifactor_bound(sol)).satisfied


def test_integral_lp_is_reproduced():
    inst = generate_sufl(GeneratorConfig(seed=1, n_facilities=6, n_clients=8, n_scenarios=4,
                                         facility_cost=(0.2, 1.0), inflation=(1.0, 1.5)))
    sol, _ = solve_sufl(inst)
    assert np.all((sol.y < 1e-9) | (sol.y > 1 - 1e-9))
    tr = simulate(plan_lp_rounding(sol), 1000, seed=0)
    assert np.allclose(tr.once.scenario, sol.val_by_scenario[None, :])


def test_counterexample_bound(counterexample):
    sol, dual = solve_sufl(counterexample)
    tr = simulate(plan_lp_rounding(sol), 2000, seed=0)
    assert all(b.satisfied for b in per_scenario_bound_check(tr.once, sol, dual))


def test_open_and_connect_feasible(fractional_sufl):
    sol, _ = solve_sufl(fractional_sufl)
    plan = plan_lp_rounding(sol)
    rng = np.random.default_rng(0)
    for _ in range(50):
        open_and_connect(plan, rng).check()


def test_evaluate_matches_rounded(fractional_sufl):
    sol, _ = solve_sufl(fractional_sufl)
    plan = plan_lp_rounding(sol)
    opens = draw_openings(plan, np.random.default_rng(3), 20)
    tr = evaluate_openings(plan, opens)
    for t in range(20):
        r = to_rounded(plan, opens[t])
        assert np.allclose(r.scenario_cost, tr.once.scenario[t])


def test_alg1_zero_connection():
    inst = generate_sufl(GeneratorConfig(seed=3, n_facilities=4, n_clients=5, n_scenarios=3))
    inst = SuflInstance(inst.f1, inst.f2, np.zeros_like(inst.distances), inst.scenarios, inst.probs)
    run = prepare_alg1(inst)
    tr = simulate(run.plan, 20_000, seed=0)
    opt = oracle_sufl(inst)
    assert bound_line("f", tr.once.expected(inst.probs), ALG1_FACILITY * opt.optimum).satisfied


def test_alg1_free_facilities():
    inst = generate_sufl(GeneratorConfig(seed=4, n_facilities=4, n_clients=5, n_scenarios=3))
    inst = SuflInstance(np.zeros(4), np.zeros_like(inst.f2), inst.distances, inst.scenarios, inst.probs)
    run = prepare_alg1(inst)
    tr = simulate(run.plan, 20_000, seed=0)
    opt = oracle_sufl(inst)
    assert bound_line("c", tr.once.expected(inst.probs), ALG1_CONNECTION * opt.optimum).satisfied


def test_mixture_arithmetic():
    fac, conn = mixture_factors()
    assert round(fac, 4) <= ALG3_BOUND and round(conn, 4) <= ALG3_BOUND
    assert COIN_P * 2.4061 + (1 - COIN_P) * 2.24152 <= 2.2975
    assert COIN_P * 1.2707 + (1 - COIN_P) * 2.8254 <= 2.2975


def test_best_of_two_per_trial(fractional_sufl):
    plan = Alg3Plan.build(fractional_sufl)
    probs = fractional_sufl.probs
    best, pick = plan.trials(np.random.default_rng(8), 500)
    rng = np.random.default_rng(8)
    t1 = evaluate_openings(plan.alg1.plan, draw_openings(plan.alg1.plan, rng, 500)).once.expected(probs)
    t2 = plan.alg2.trials(rng, 500).expected(probs)
    got = best.expected(probs)
    assert np.allclose(got, np.minimum(t1, t2))
    assert np.all(got <= COIN_P * t1 + (1 - COIN_P) * t2 + 1e-12)
    assert np.array_equal(pick, t1 <= t2)


def test_alg3_bound(fractional_sufl):
    sol, _ = solve_sufl(fractional_sufl)
    plan = Alg3Plan.build(fractional_sufl, sol)
    for coin in (False, True):
        costs, pick = plan.trials(np.random.default_rng(1), 10_000, coin)
        assert bound_line("alg3", costs.expected(fractional_sufl.probs), ALG3_BOUND * sol.value).satisfied
    assert abs(pick.mean() - COIN_P) <= 4 * math.sqrt(COIN_P * (1 - COIN_P) / 10_000)
    plan.run(np.random.default_rng(0)).check()
