import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_evidence, brute_posterior, full_joint, random_net
from scenegen.accident_data import Dataset
from scenegen.bayesnet import (
    CausalBayesNet,
    Cpt,
    CycleError,
    Dag,
    ZeroProbabilityEvidence,
    evidence_probability,
    fit_parameters,
    infer_joint,
    infer_posterior,
)
from scenegen.schema import SchemaError, VariableSchema

BIN = ("0", "1")


def chain_net():
    schema = VariableSchema((("A", BIN), ("B", BIN), ("C", BIN)))
    dag = Dag(schema.names, [("A", "B"), ("B", "C")])
    return CausalBayesNet(schema, dag, {
        "A": np.array([[0.3, 0.7]]),
        "B": np.array([[0.9, 0.1], [0.2, 0.8]]),
        "C": np.array([[0.6, 0.4], [0.25, 0.75]]),
    })


def test_dag_rejects_cycles_and_unknown_nodes():
    with pytest.raises(CycleError):
        Dag(["A", "B"], [("A", "B"), ("B", "A")])
    with pytest.raises(ValueError):
        Dag(["A"], [("A", "Z")])


def test_dag_relations():
    dag = Dag("ABCD", [("A", "B"), ("B", "C"), ("A", "D")])
    assert dag.parents("B") == ("A",)
    assert set(dag.children("A")) == {"B", "D"}
    assert dag.descendants("A") == {"A", "B", "C", "D"}
    assert dag.ancestors(["C"]) == {"A", "B", "C"}
    assert dag.has_path("A", "C") and not dag.has_path("C", "A")
    order = dag.topological_order()
    assert all(order.index(u) < order.index(v) for u, v in dag.edges)
    assert "\"A\" -> \"B\"" in dag.to_dot()
    assert Dag.from_json(dag.to_json()) == dag


def test_cpt_rows_must_normalise():
    with pytest.raises(ValueError):
        Cpt("A", (), np.array([[0.5, 0.6]]))
    with pytest.raises(ValueError):
        Cpt("A", (), np.array([[1.5, -0.5]]))


def test_net_checks_cpt_shapes():
    schema = VariableSchema((("A", BIN), ("B", BIN)))
    dag = Dag(schema.names, [("A", "B")])
    with pytest.raises(ValueError):
        CausalBayesNet(schema, dag, {"A": np.array([[0.5, 0.5]]), "B": np.array([[0.5, 0.5]])})
    with pytest.raises(SchemaError):
        CausalBayesNet(schema, dag, {"A": np.array([[0.5, 0.5]])})


def _single(values):
    schema = VariableSchema((("x", BIN),))
    return Dataset(schema, np.asarray(values).reshape(-1, 1))


def test_fit_counts_without_smoothing():
    net = fit_parameters(Dag(["x"]), _single([1, 1, 1, 0]), pseudocount=0.0)
    assert net.cpts["x"].table[0, 1] == pytest.approx(0.75, abs=1e-15)


def test_fit_with_unit_pseudocount():
    net = fit_parameters(Dag(["x"]), _single([1, 1, 1, 0]), pseudocount=1.0)
    assert net.cpts["x"].table[0, 1] == pytest.approx(2.0 / 3.0, abs=1e-15)


def test_fit_without_data_is_uniform():
    schema = VariableSchema((("A", ("a", "b", "c")), ("B", BIN)))
    empty = Dataset(schema, np.zeros((0, 2), dtype=np.int64))
    net = fit_parameters(Dag(schema.names, [("A", "B")]), empty, pseudocount=1.0)
    assert np.allclose(net.cpts["A"].table, 1 / 3)
    assert np.allclose(net.cpts["B"].table, 0.5)
    with pytest.raises(ValueError):
        fit_parameters(Dag(schema.names), empty, pseudocount=0.0)


def test_root_prior_without_evidence():
    assert infer_posterior(chain_net(), "A") == pytest.approx([0.3, 0.7])


def test_chain_posterior_matches_enumeration():
    net = chain_net()
    got = infer_posterior(net, "C", {"A": "1"})
    assert np.allclose(got, brute_posterior(net, "C", {"A": "1"}), atol=1e-12)
    # hand value: P(C=1|A=1) = 0.2*0.4 + 0.8*0.75
    assert got[1] == pytest.approx(0.2 * 0.4 + 0.8 * 0.75, abs=1e-12)


def test_query_in_evidence_is_rejected():
    with pytest.raises(ValueError):
        infer_posterior(chain_net(), "A", {"A": "1"})


def test_zero_probability_evidence():
    schema = VariableSchema((("A", BIN), ("B", BIN)))
    dag = Dag(schema.names, [("A", "B")])
    net = CausalBayesNet(schema, dag, {"A": np.array([[1.0, 0.0]]), "B": np.array([[0.5, 0.5], [0.5, 0.5]])})
    with pytest.raises(ZeroProbabilityEvidence):
        infer_posterior(net, "B", {"A": "1"})
    assert evidence_probability(net, {"A": "1"}) == 0.0


def test_evidence_probability_cases():
    net = chain_net()
    assert evidence_probability(net, {}) == 1.0
    assert evidence_probability(net, {"A": "1", "B": "0", "C": "1"}) == pytest.approx(0.7 * 0.2 * 0.4, abs=1e-15)
    assert evidence_probability(net, {"A": "0", "C": "1"}) == pytest.approx(
        brute_evidence(net, {"A": "0", "C": "1"}), abs=1e-12)


def test_infer_joint_axes_follow_query_order():
    net = chain_net()
    joint = full_joint(net)
    got = infer_joint(net, ["C", "A"])
    assert np.allclose(got, joint.sum(axis=1).T, atol=1e-12)
    with pytest.raises(ValueError):
        infer_joint(net, ["A", "A"])


def test_log_joint_matches_chain_rule():
    net = chain_net()
    assert net.log_joint({"A": "0", "B": "1", "C": "0"}) == pytest.approx(math.log(0.3 * 0.1 * 0.25))


def test_json_round_trip(tmp_path):
    net = chain_net()
    net.save(tmp_path / "n.json")
    back = CausalBayesNet.load(tmp_path / "n.json")
    assert back.dag == net.dag
    for v in net.schema.names:
        assert np.array_equal(back.cpts[v].table, net.cpts[v].table)


@given(st.integers(0, 2**31 - 1))
def test_inference_agrees_with_enumeration(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng, int(rng.integers(2, 7)), arity=int(rng.integers(2, 4)))
    names = net.schema.names
    query = names[int(rng.integers(len(names)))]
    evidence = {v: net.schema.states(v)[int(rng.integers(net.schema.arity(v)))]
                for v in names if v != query and rng.random() < 0.4}
    assert np.allclose(infer_posterior(net, query, evidence), brute_posterior(net, query, evidence), atol=1e-10)
    assert evidence_probability(net, evidence) == pytest.approx(brute_evidence(net, evidence), abs=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_posteriors_are_distributions(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng, 5, arity=3)
    post = infer_posterior(net, net.schema.names[-1], {net.schema.names[0]: "2"})
    assert post.min() >= 0 and post.sum() == pytest.approx(1.0)


def test_sample_marginals_approach_the_model():
    net = chain_net()
    data = net.sample(40_000, seed=5)
    exact = brute_posterior(net, "C", {})[1]
    assert abs(data.column("C").mean() - exact) < 0.015
    assert np.array_equal(data.values, net.sample(40_000, seed=5).values)
