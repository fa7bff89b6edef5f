import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsched.detmodel import OPV2V, V2V4REAL, DetectionModel
from cpsched.sensing import ScanResult
from cpsched.topology import (
    EmpiricalState,
    PerceptionTopology,
    compose,
    ground_truth_topology,
    pair,
    refine,
    replay,
    topology_from_counts,
    update_uncertainty,
)

T = PerceptionTopology.build({0: {"a"}, 1: {"b"}, 2: set()}, {(0, 1): {"c"}, (1, 2): {"d", "e"}})


def test_pair_rejects_self():
    assert pair(1, 2) == pair(2, 1)
    with pytest.raises(ValueError):
        pair(3, 3)


def test_second_order_must_be_disjoint_from_first():
    with pytest.raises(ValueError, match="repeats first-order"):
        PerceptionTopology.build({0: {"a"}}, {(0, 1): {"a", "b"}})
    with pytest.raises(ValueError, match="not a pair"):
        PerceptionTopology({}, {frozenset({0, 1, 2}): frozenset({"x"})})


@pytest.mark.parametrize(
    "S, expected",
    [((), set()), ((0,), {"a"}), ((0, 1), {"a", "b", "c"}), ((0, 2), {"a"}), ((1, 2), {"b", "d", "e"}), ((0, 1, 2), set("abcde"))],
)
def test_compose(S, expected):
    assert compose(T, S) == frozenset(expected)


def test_topology_properties_and_restrict():
    assert T.covs == {0, 1, 2}
    assert T.objects == set("abcde")
    sub = T.restrict(covs=[0, 1], objects={"a", "c", "d"})
    assert sub.first == {0: frozenset("a"), 1: frozenset()}
    assert sub.second == {pair(0, 1): frozenset("c")}
    assert T.without_second().second == {}


def test_arrays_symmetric():
    first, second = T.arrays([0, 1, 2], list("abcde"))
    assert first.sum() == 2
    assert (second == second.transpose(1, 0, 2)).all()
    assert second[1, 2].tolist() == [False, False, False, True, True]


def test_json_round_trip():
    data = json.loads(json.dumps(T.to_json()))
    assert PerceptionTopology.from_json(data, key=int) == T


def hand_topology(cov_ids, obj_ids, counts, D, p):
    """Object-by-object reading of the detection rule."""
    logs = [[math.log(c) if c >= 1 else 0.0 for c in row] for row in counts]
    first = {c: set() for c in cov_ids}
    second = {}
    for k, o in enumerate(obj_ids):
        alone = [r for r in range(len(cov_ids)) if counts[r][k] >= 1 and logs[r][k] >= D[k]]
        for r in alone:
            first[cov_ids[r]].add(o)
        for a, b in itertools.combinations(range(len(cov_ids)), 2):
            if a in alone or b in alone or (counts[a][k] < 1 and counts[b][k] < 1):
                continue
            if (logs[a][k] ** p + logs[b][k] ** p) ** (1 / p) >= D[k]:
                second.setdefault((cov_ids[a], cov_ids[b]), set()).add(o)
    return PerceptionTopology.build(first, second)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 5).flatmap(lambda v: st.integers(1, 6).flatmap(lambda o: st.tuples(
        st.just(v), st.just(o),
        st.lists(st.lists(st.integers(0, 400), min_size=o, max_size=o), min_size=v, max_size=v),
        st.lists(st.floats(0.5, 8.0), min_size=o, max_size=o),
    ))),
    st.sampled_from([V2V4REAL, OPV2V]),
)
def test_topology_from_counts_matches_hand_rule(case, model):
    v, o, counts, D = case
    covs, objs = list(range(v)), [f"o{k}" for k in range(o)]
    got = topology_from_counts(covs, objs, counts, D, model)
    assert got == hand_topology(covs, objs, counts, D, model.p)


def test_topology_from_counts_max_norm():
    m = DetectionModel(p=math.inf, scale=1.0, bias=0.0)
    # the max-norm never beats the better single view, so no pair objects
    got = topology_from_counts([0, 1], ["x"], [[20], [30]], [4.0], m)
    assert got.second == {} and got.first == {0: frozenset(), 1: frozenset()}


def test_ground_truth_topology_from_scans():
    e = math.e
    scans = {0: ScanResult({"x": round(e**3), "y": 0}, frozenset({"x"})), 1: ScanResult({"x": round(e**3)}, frozenset({"x"}))}
    topo = ground_truth_topology(scans, {"x": 4.0, "y": 1.0}, DetectionModel(p=2.0, scale=1.0, bias=0.0))
    assert topo.first == {0: frozenset(), 1: frozenset()}
    assert topo.second == {pair(0, 1): frozenset({"x"})}


# --------------------------------------------------------------------------
# empirical state
# --------------------------------------------------------------------------


def _topologies(n_covs=4, n_objs=6):
    objs = st.sampled_from(range(n_objs))
    firsts = st.dictionaries(st.integers(0, n_covs - 1), st.frozensets(objs, max_size=3))
    seconds = st.dictionaries(st.tuples(st.integers(0, n_covs - 1), st.integers(0, n_covs - 1)).filter(lambda k: k[0] != k[1]),
                              st.frozensets(objs, max_size=3))

    def clean(f, s):
        out = {}
        for (i, j), v in s.items():
            out[(i, j)] = v - f.get(i, frozenset()) - f.get(j, frozenset())
        return PerceptionTopology.build(f, out)

    return st.builds(clean, firsts, seconds)


@settings(max_examples=100, deadline=None)
@given(_topologies(), _topologies(), st.frozensets(st.integers(0, 3)))
def test_replay_reproduces_truth_on_scheduled_set(old, truth, A):
    emp = EmpiricalState(dict(old.first), dict(old.second))
    replay(emp, A, truth, 7)
    assert compose(emp.topo, A) == compose(truth, A)
    assert all(emp.last_seen_single[i] == 7 for i in A)
    # the refreshed state still satisfies the disjointness invariant
    PerceptionTopology(dict(emp.first), dict(emp.second))


def test_replay_trims_stale_pairs():
    emp = EmpiricalState({0: frozenset(), 1: frozenset()}, {pair(0, 1): frozenset({"x", "y"})})
    truth = PerceptionTopology.build({0: {"x"}})
    replay(emp, [0], truth, 3)
    assert emp.second[pair(0, 1)] == frozenset({"y"})
    assert pair(0, 1) not in emp.last_seen_pair
    assert emp.never_scheduled(1) and not emp.never_scheduled(0)


def test_refine_intersects_with_predicted_los():
    emp = EmpiricalState({0: frozenset("ab"), 1: frozenset("c"), 2: frozenset("d")}, {pair(0, 1): frozenset("ef")})
    refine(emp, {0: frozenset("ae"), 1: frozenset("cef")})
    assert emp.first == {0: frozenset("a"), 1: frozenset("c"), 2: frozenset("d")}
    assert emp.second[pair(0, 1)] == frozenset("e")


def test_update_uncertainty_accumulates_only_for_scheduled():
    emp = EmpiricalState(uncertainty={0: frozenset("z"), 1: frozenset("z")})
    prev = {0: frozenset("a"), 1: frozenset("a")}
    pred = {0: frozenset("ab"), 1: frozenset("abc")}
    update_uncertainty(emp, [0], prev, pred, "abcz")
    assert emp.uncertainty == {0: frozenset("bz"), 1: frozenset("bc")}
    assert emp.prev_los == pred
    # objects that left the frame are dropped from the accumulated set
    update_uncertainty(emp, [0], pred, pred, "ab")
    assert emp.uncertainty[0] == frozenset("b")


def test_sync_evicts_departed():
    emp = EmpiricalState({0: frozenset("ab"), 1: frozenset("c")}, {pair(0, 1): frozenset("d"), pair(0, 2): frozenset("e")},
                         last_seen_single={0: 1, 1: 2}, last_seen_pair={pair(0, 1): 1})
    emp.sync([0, 1, 3], "acd")
    assert emp.first == {0: frozenset("a"), 1: frozenset("c"), 3: frozenset()}
    assert emp.second == {pair(0, 1): frozenset("d")}
    assert emp.uncertainty[3] == frozenset()
    emp.sync([3], "a")
    assert emp.second == {} and emp.last_seen_pair == {} and emp.last_seen_single == {}


def test_dump_is_json():
    emp = EmpiricalState({0: frozenset({5})}, last_seen_single={0: 2})
    d = json.loads(emp.dump(9))
    assert d["t"] == 9 and d["first"] == {"0": [5]} and d["tau"] == {"0": 2}


def test_counts_topology_accepts_numpy():
    got = topology_from_counts([0], ["x"], np.array([[100]]), np.array([4.0]), OPV2V)
    assert got.first == {0: frozenset({"x"})}
