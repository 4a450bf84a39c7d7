import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochround.instances import (GeneratorConfig, InstanceError, ScenarioTreeCip, SuflInstance, generate_cip_tree,
                                  generate_sufl, instance_from_dict, load_instance, metric_violations, save_instance,
                                  serialize, validate_metric)

from conftest import DATA


def test_counterexample_file(counterexample):
    inst = load_instance(DATA / "counterexample.json")
    assert inst.same_as(counterexample)
    assert inst.f1.tolist() == [2.0, 0.01]
    assert np.all(inst.f2 == 4.0)
    assert inst.distances[1, 0] == 3.0
    assert inst.distances.sum() == 6.0
    assert validate_metric(inst) == []


def test_two_by_two_roundtrip(tmp_path, counterexample):
    path = tmp_path / "x.json"
    save_instance(counterexample, path)
    back = load_instance(path)
    assert isinstance(back, SuflInstance)
    assert back.n_scenarios == 2
    assert back.same_as(counterexample)


def test_bad_probabilities():
    doc = json.loads((DATA / "counterexample.json").read_text())
    doc["scenarios"][1]["prob"] = "0.4"
    with pytest.raises(InstanceError, match="probabilities"):
        instance_from_dict(doc)


def test_decimal_strings_and_numbers_agree():
    doc = json.loads((DATA / "counterexample.json").read_text())
    as_num = json.loads(json.dumps(doc).replace('"0.01"', "0.01"))
    assert instance_from_dict(doc).same_as(instance_from_dict(as_num))


@pytest.mark.parametrize("patch, field", [
    (lambda d: d["facilities"][0].update(f1=-1), "facilities.f1"),
    (lambda d: d["scenarios"][0].update(clients=[5]), "scenarios[0].clients"),
    (lambda d: d.pop("distances"), "distances"),
    (lambda d: d["clients"][0].update(demand=0), "clients.demand"),
    (lambda d: d["facilities"][0].update(f1="abc"), "facilities[0].f1"),
])
def test_validation_errors(patch, field):
    doc = json.loads((DATA / "counterexample.json").read_text())
    patch(doc)
    with pytest.raises(InstanceError) as err:
        instance_from_dict(doc)
    assert err.value.field == field


def test_unknown_kind():
    with pytest.raises(InstanceError):
        instance_from_dict({"kind": "knapsack"})


def test_generator_determinism():
    cfg = GeneratorConfig(seed=1, n_facilities=3, n_clients=4, n_scenarios=2)
    assert serialize(generate_sufl(cfg)) == serialize(generate_sufl(cfg))
    other = generate_sufl(GeneratorConfig(seed=2, n_facilities=3, n_clients=4, n_scenarios=2))
    assert not np.array_equal(generate_sufl(cfg).distances, other.distances)


def test_metric_breach():
    d = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
    assert metric_violations(d) == [(0, 1, 2)]


def test_vertex_cover_tree():
    tree = generate_cip_tree(GeneratorConfig(seed=3, kind="vertex-cover", n_vars=4, stages=2, edge_prob=0.8))
    assert tree.stages == 2
    for node in tree.nodes:
        assert np.all(node.columns.sum(axis=1) == 2)
    assert set(np.unique(tree.b_by_leaf)) <= {0.0, 1.0}


def test_set_cover_rhs():
    tree = generate_cip_tree(GeneratorConfig(seed=0, kind="set-cover", rows=5, n_vars=4, stages=1))
    assert np.all(tree.b_by_leaf == 1.0)
    for node in tree.nodes:
        assert np.all(node.columns.sum(axis=1) >= 1)


def test_general_target():
    tree = generate_cip_tree(GeneratorConfig(seed=0, kind="general", rows=3, n_vars=3, b_target=2.0, activation=0.7))
    assert tree.big_b == 2.0


def test_tree_validation():
    tree = generate_cip_tree(GeneratorConfig(seed=0, kind="set-cover", rows=3, n_vars=2, stages=2))
    doc = tree.to_dict()
    doc["nodes"][1]["prob"] = 0.9
    with pytest.raises(InstanceError, match="probabilities"):
        instance_from_dict(doc)


sizes = st.integers(1, 5)


@given(seed=st.integers(0, 2**32), nf=sizes, nd=sizes, m=sizes,
       metric=st.sampled_from(["euclidean", "graph", "set-system"]))
def test_sufl_roundtrip_and_metric(seed, nf, nd, m, metric):
    inst = generate_sufl(GeneratorConfig(seed=seed, n_facilities=nf, n_clients=nd, n_scenarios=m, metric=metric))
    back = instance_from_dict(json.loads(serialize(inst)))
    assert back.same_as(inst)
    assert serialize(back) == serialize(inst)
    assert validate_metric(inst) == []
    assert abs(inst.probs.sum() - 1) < 1e-9


@given(seed=st.integers(0, 2**32), kind=st.sampled_from(["vertex-cover", "set-cover", "general"]),
       stages=st.integers(1, 3), arity=st.integers(1, 3))
def test_tree_roundtrip(seed, kind, stages, arity):
    tree = generate_cip_tree(GeneratorConfig(seed=seed, kind=kind, stages=stages, arity=arity, rows=4, n_vars=3))
    back = instance_from_dict(json.loads(serialize(tree)))
    assert isinstance(back, ScenarioTreeCip)
    assert back.same_as(tree)
    assert all(tree.depth(v) == stages for v in tree.leaves)
