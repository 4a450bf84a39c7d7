import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochround.instances import GeneratorConfig, ScenarioTreeCip, SuflInstance, TreeNode, generate_cip_tree, generate_sufl
from stochround.lp import (FractionalSolution, build_cip_lp, build_sufl_primal, check_complementary_slackness,
                           decompose, dual_budget_range, solution_from_dict, solution_to_dict, solve_cip, solve_sufl,
                           solve_sufl_dual, split_stage_copies, split_to_saturation, sufl_residuals)
from stochround.oracles import oracle_sufl
from stochround.simplex import LinearProgram, solve


def one_point(f1=1.0, f2=2.0, c=1.0) -> SuflInstance:
    return SuflInstance(np.array([f1]), np.array([[f2]]), np.array([[c]]), ((0,),), np.array([1.0]))


def manual(y, ya, x) -> FractionalSolution:
    inst = one_point()
    return FractionalSolution(inst, np.array([y]), np.array([[ya]]), np.array([[[x]]]))


def test_primal_shape():
    lp = build_sufl_primal(one_point())
    assert (lp.n_vars, lp.n_rows) == (3, 2)


def test_counterexample_primal(counterexample):
    sol, dual = solve_sufl(counterexample)
    # the enumeration oracle agrees: stage-I f2 for 0.01 plus expected connection 2
    assert sol.value == pytest.approx(2.01, abs=1e-9)
    assert sol.value == pytest.approx(oracle_sufl(counterexample).optimum, abs=1e-9)
    assert sol.y.tolist() == pytest.approx([0.0, 1.0])
    assert sol.val_by_scenario.tolist() == pytest.approx([3.01, 1.01])
    assert check_complementary_slackness(sol, dual) == []
    # support radius never exceeds the client's dual payment
    for a, clients in enumerate(counterexample.scenarios):
        for j in clients:
            support = sol.x[a, :, j] > 1e-9
            assert counterexample.distances[support, j].max() <= dual.v[a, j] + 1e-9


def test_counterexample_scaled(counterexample):
    sol, _ = solve_sufl(counterexample, (2.4061, 1.2707))
    scaled = SuflInstance(2.4061 * counterexample.f1, 2.4061 * counterexample.f2, 1.2707 * counterexample.distances,
                          counterexample.scenarios, counterexample.probs)
    assert sol.lp_objective == pytest.approx(oracle_sufl(scaled).optimum, abs=1e-9)
    assert sol.lp_objective == pytest.approx(2.4061 * 0.01 + 1.2707 * 2.0, abs=1e-9)


def test_dual_budget_exceeds_val():
    # with f1 at 1 the integral optimum opens f1 for both scenarios, yet scenario 1 must pay for it
    inst = SuflInstance(np.array([1.0, 0.01]), np.full((2, 2), 4.0), np.array([[1.0, 1.0], [3.0, 1.0]]),
                        ((0,), (1,)), np.array([0.5, 0.5]))
    sol, _ = solve_sufl(inst)
    assert sol.val_by_scenario.tolist() == pytest.approx([2.0, 2.0])
    lo, hi = dual_budget_range(inst, 0)
    assert lo > sol.val_by_scenario[0] + 0.9
    assert hi == pytest.approx(3.0, abs=1e-6)


def test_free_facility_dual():
    inst = one_point(f1=0.0, f2=0.0, c=2.5)
    dual = solve_sufl_dual(inst)
    assert dual.v[0, 0] == pytest.approx(2.5)
    assert dual.objective == pytest.approx(2.5)


@given(seed=st.integers(0, 2**31), nf=st.integers(1, 4), nd=st.integers(1, 5), m=st.integers(1, 3))
def test_strong_duality_and_slackness(seed, nf, nd, m):
    inst = generate_sufl(GeneratorConfig(seed=seed, n_facilities=nf, n_clients=nd, n_scenarios=m,
                                         metric="set-system" if seed % 2 else "euclidean"))
    sol, dual = solve_sufl(inst)
    sol.check()
    d2 = solve_sufl_dual(inst)
    assert abs(sol.value - d2.objective) <= 1e-6 * (1 + abs(sol.value))
    assert abs(sol.value - dual.objective) <= 1e-6 * (1 + abs(sol.value))
    assert check_complementary_slackness(sol, dual) == []
    assert max(sufl_residuals(inst).values()) <= 1e-6
    dec = decompose(sol)
    assert np.abs(dec.x1 + dec.x2 - sol.x).max() <= 1e-9


def test_halved_duals_break_slackness(small_sufl):
    sol, dual = solve_sufl(small_sufl)
    dual.v = dual.v / 2
    assert check_complementary_slackness(sol, dual)


@pytest.mark.parametrize("y, ya, x, x1, x2", [(0.5, 0.5, 0.6, 0.3, 0.3), (0.2, 0.6, 0.4, 0.1, 0.3),
                                              (0.5, 0.5, 0.0, 0.0, 0.0)])
def test_decompose(y, ya, x, x1, x2):
    dec = decompose(manual(y, ya, x))
    assert dec.x1[0, 0, 0] == pytest.approx(x1)
    assert dec.x2[0, 0, 0] == pytest.approx(x2)


def test_decompose_rejects_unopened():
    with pytest.raises(ValueError):
        decompose(manual(0.0, 0.0, 0.5))


def test_stage_copies():
    inst, sol = split_stage_copies(one_point(), manual(0.3, 0.2, 0.5))
    assert inst.n_facilities == 2
    assert sol.y.tolist() == pytest.approx([0.3, 0.0])
    assert sol.ya[0].tolist() == pytest.approx([0.0, 0.2])
    assert sol.origin.tolist() == [0, 0]
    base = manual(1.0, 0.0, 1.0)
    same_inst, same = split_stage_copies(base.instance, base)
    assert same is base and same_inst is base.instance


@pytest.mark.parametrize("seed", range(6))
def test_stage_copies_keep_objective(seed):
    inst = generate_sufl(GeneratorConfig(seed=seed, n_facilities=4, n_clients=5, n_scenarios=3,
                                         metric="set-system", facility_cost=(1, 3), inflation=(1, 1.3), set_size=3))
    sol, _ = solve_sufl(inst)
    inst2, sol2 = split_stage_copies(inst, sol)
    assert sol2.value == pytest.approx(sol.value, abs=1e-9)
    assert np.all((sol2.y == 0) | np.all(sol2.ya == 0, axis=0))


def test_saturation_unit_cap():
    sol = manual(0.8, 0.0, 0.8)
    split = split_to_saturation(decompose(sol), 2.0)
    assert sorted(split.opening.tolist()) == pytest.approx([0.6, 1.0])
    assert split.prefix[0][0, 0] is not None
    assert split.opening[split.prefix[0][0, 0].pieces].sum() == pytest.approx(1.0)


def test_saturation_identity():
    sol = manual(1.0, 0.0, 1.0)
    split = split_to_saturation(decompose(sol), 1.0)
    assert split.n_pieces == 1
    assert split.opening.tolist() == [1.0]


@pytest.mark.parametrize("gamma", [1.0, 2.0, 2.4957, 5.0])
def test_saturation_invariants(fractional_sufl, gamma):
    sol, _ = solve_sufl(fractional_sufl)
    dec = decompose(sol)
    split = split_to_saturation(dec, gamma)
    assert split.opening.max() <= 1 + 1e-9
    for i in range(fractional_sufl.n_facilities):
        total = split.group_openings(i, -1).sum()
        assert total == pytest.approx(max(gamma * sol.y[i], gamma * dec.x1[:, i, :].max()), abs=1e-9)
    # every pair is served by whole pieces carrying its scaled stage mass
    for s, xs in ((0, dec.x1), (1, dec.x2)):
        for a, clients in enumerate(fractional_sufl.scenarios):
            for j in clients:
                ids = split.serve[s][a, j]
                assert split.opening[ids].sum() == pytest.approx(gamma * xs[a, :, j].sum(), abs=1e-9)
                pre = split.prefix[s][a, j]
                if gamma * xs[a, :, j].sum() >= 1 - 1e-12:
                    assert split.opening[pre.pieces].sum() == pytest.approx(1.0, abs=1e-9)
                    assert set(pre.pieces) <= set(ids)
                else:
                    assert pre is None


def test_sharing_clients_get_equal_pieces():
    inst = SuflInstance(np.array([1.0]), np.array([[5.0]]), np.array([[1.0, 2.0]]), ((0, 1),), np.array([1.0]))
    sol = FractionalSolution(inst, np.array([0.7]), np.array([[0.0]]), np.array([[[0.3, 0.7]]]))
    split = split_to_saturation(decompose(sol), 1.0)
    assert split.opening.tolist() == pytest.approx([0.3, 0.4])
    assert split.serve[0][0, 0].tolist() == [0]
    assert split.serve[0][0, 1].tolist() == [0, 1]


def test_solution_json_roundtrip(small_sufl):
    sol, dual = solve_sufl(small_sufl)
    back, back_dual = solution_from_dict(small_sufl, solution_to_dict(sol, dual))
    assert back.value == pytest.approx(sol.value)
    assert np.allclose(back_dual.v, dual.v)


def tiny_tree(costs2, b) -> ScenarioTreeCip:
    cols = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]])
    root = TreeNode(-1, 1.0, np.array([1.0, 1.0, 1.0]), cols)
    kids = [TreeNode(0, 0.5, np.array(c, dtype=float), cols) for c in costs2]
    return ScenarioTreeCip(2, 3, (root, *kids), np.array(b, dtype=float))


def test_cip_single_stage_is_covering_lp():
    tree = generate_cip_tree(GeneratorConfig(seed=4, kind="set-cover", stages=1, rows=6, n_vars=5))
    lp = build_cip_lp(tree)
    node = tree.nodes[0]
    ref = LinearProgram()
    for j, c in enumerate(node.costs):
        ref.add_var(f"x{j}", c)
    for r in range(tree.rows):
        ref.add_row({j: node.columns[r, j] for j in np.flatnonzero(node.columns[r])}, ">=", tree.b_by_leaf[0, r])
    assert solve(lp).objective == pytest.approx(solve(ref).objective)


def test_cip_identical_costs_collapse():
    tree = tiny_tree([[1, 1, 1], [1, 1, 1]], [[1, 1, 1], [1, 1, 1]])
    # triangle vertex cover LP: 1/2 everywhere
    assert solve_cip(tree).objective == pytest.approx(1.5)


def test_cip_idle_leaf():
    tree = tiny_tree([[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]], [[1, 1, 1], [0, 0, 0]])
    sol = solve_cip(tree)
    assert np.all(sol.x[2] == 0)
    # half of each vertex, bought only in the active leaf at cost 0.5 and probability 0.5
    assert sol.objective == pytest.approx(0.375, abs=1e-9)
