import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsched.baselines import FixtureSpec, make_fixture
from cpsched.scheduler import (
    MIX_CLAMP,
    Instance,
    SchedulerParams,
    actual_utility,
    approximation_bound,
    auto_mix_weight,
    cmass_schedule,
    collaboration_degree,
    detection_levels,
    fold_free,
    gamma,
    hybrid_greedy,
    hybrid_utility,
    incremental_oracle_check,
    pending_utility,
)
from cpsched.topology import EmpiricalState, PerceptionTopology, compose, pair

EX1 = make_fixture(FixtureSpec("example1", N=3, eps=0.1))
EX2 = make_fixture(FixtureSpec("example2", N=4, eps=0.01))


def unit_instance(first, second=None, budget=1.0, covs=None, weights=None):
    topo = PerceptionTopology.build(first, second or {})
    covs = tuple(covs or sorted(topo.covs | set(first), key=str))
    weights = weights or {o: 1.0 for o in topo.objects}
    return Instance(covs, topo, weights, {c: 1.0 for c in covs}, budget)


# --------------------------------------------------------------------------
# utilities
# --------------------------------------------------------------------------


@pytest.mark.parametrize("S, expected", [((), 0.0), (("v1", "v2"), 0.2), (("u1", "u2"), 1.0), (("u1",), 0.0)])
def test_actual_utility_example1(S, expected):
    assert actual_utility(EX1, S) == pytest.approx(expected, abs=1e-15)


def test_pending_utility_credits_half_done_pairs():
    # u1 alone holds half of m's cost share
    assert pending_utility(EX1, ["u1"]) == pytest.approx(0.5)
    assert detection_levels(EX1, ["u1"])[list(EX1.objects).index("m")] == 0.5
    everything = EX1.covs
    assert pending_utility(EX1, everything) == pytest.approx(actual_utility(EX1, everything))


def test_pending_share_follows_costs():
    inst = Instance(("a", "b"), PerceptionTopology.build({}, {("a", "b"): {"x"}}), {"x": 2.0}, {"a": 1.0, "b": 3.0}, 4.0)
    assert pending_utility(inst, ["a"]) == pytest.approx(2.0 * 0.25)
    assert pending_utility(inst, ["b"]) == pytest.approx(2.0 * 0.75)


def test_hybrid_utility_blend():
    assert hybrid_utility(EX1, ["u1"], 0.5) == pytest.approx(0.25)
    assert hybrid_utility(EX1, ["u1"], 1.0) == pending_utility(EX1, ["u1"])
    full = EX1.covs
    for lam in (0.0, 0.3, 1.0):
        assert hybrid_utility(EX1, full, lam) == pytest.approx(actual_utility(EX1, full))


def test_collaboration_degree_and_constants():
    empty = unit_instance({0: {"a"}})
    assert collaboration_degree(empty.topo) == 0
    assert gamma(0) == 1.0
    assert auto_mix_weight(0) == 1.0 - MIX_CLAMP
    assert collaboration_degree(EX1.topo) == 1
    assert gamma(1) == pytest.approx(1 / 6)
    assert auto_mix_weight(1) == 0.5
    assert gamma(2) == pytest.approx(1 / 14)
    assert collaboration_degree(make_fixture(FixtureSpec("example3", N=2, C=3)).topo) == 3
    with pytest.raises(ValueError):
        gamma(-1)


@pytest.mark.parametrize("C, N", [(0, 1), (0, 4), (1, 3), (2, 5)])
def test_approximation_bound(C, N):
    assert approximation_bound(C, N) == pytest.approx(1 - (1 - gamma(C) / N) ** (N - 1))
    assert 0 <= approximation_bound(C, N) < 1


def test_collaboration_degree_restricted():
    topo = PerceptionTopology.build({}, {(0, 1): {"a"}, (0, 2): {"b"}, (1, 2): {"c"}})
    assert collaboration_degree(topo) == 2
    assert collaboration_degree(topo, covs=[0, 1]) == 1


# --------------------------------------------------------------------------
# hybrid greedy
# --------------------------------------------------------------------------


def test_budget_zero_schedules_nothing():
    assert hybrid_greedy(EX1.__class__(EX1.covs, EX1.topo, EX1.weights, EX1.costs, 0.0)).scheduled == ()


def test_example1_hand_trace():
    dec = hybrid_greedy(EX1, trace=True)
    assert dec.scheduled == ("u1", "u2")
    assert actual_utility(EX1, dec.scheduled) == 1.0
    tr = dec.trace
    assert tr.mix_weight == 0.5
    k_u1, k_v1 = EX1.covs.index("u1"), EX1.covs.index("v1")
    # round one: h(u1) = 0.5 * 0.5 = 0.25 against h(v) = 0.1
    h0 = 0.5 * tr.gp_hist[0] + 0.5 * tr.gm_hist[0]
    assert h0[k_u1] == pytest.approx(0.25) and h0[k_v1] == pytest.approx(0.1)
    # round two: h(u2 | u1) = 0.5 * 0.5 + 0.5 * 1
    h1 = 0.5 * tr.gp_hist[1] + 0.5 * tr.gm_hist[1]
    assert h1[EX1.covs.index("u2")] == pytest.approx(0.75)
    assert incremental_oracle_check(EX1, dec)


def test_example1_actual_greedy_is_trapped():
    dec = hybrid_greedy(EX1, mix_weight=0.0)
    assert actual_utility(EX1, dec.scheduled) == pytest.approx(0.2)


def test_example2_hand_trace():
    dec = hybrid_greedy(EX2, mix_weight=0.5)
    assert dec.scheduled == ("v1", "u1", "v2", "u2")
    assert actual_utility(EX2, dec.scheduled) == pytest.approx(2.02)
    pend = hybrid_greedy(EX2, mix_weight=1.0)
    assert actual_utility(EX2, pend.scheduled) == pytest.approx(0.04)


def test_ties_go_to_earlier_cov():
    inst = unit_instance({"b": {"x"}, "a": {"y"}}, covs=("b", "a"))
    assert hybrid_greedy(inst).scheduled == ("b",)


def test_zero_marginal_cov_never_picked():
    inst = unit_instance({0: {"x"}, 1: {"x"}, 2: set()}, budget=3.0, covs=(0, 1, 2))
    assert hybrid_greedy(inst).scheduled == (0,)


def test_bonus_and_init():
    inst = unit_instance({0: {"x"}, 1: set()}, budget=1.0, covs=(0, 1))
    assert hybrid_greedy(inst, bonus=[0.0, 2.0]).scheduled == (1,)
    # init CoVs are free and their objects are already covered
    assert hybrid_greedy(inst, init=(0,)).scheduled == ()


def test_unaffordable_cov_skipped():
    inst = Instance((0, 1), PerceptionTopology.build({0: {"a"}, 1: {"b"}}), {"a": 10.0, "b": 1.0}, {0: 5.0, 1: 1.0}, 2.0)
    assert hybrid_greedy(inst).scheduled == (1,)


def test_empty_instance():
    inst = Instance((), PerceptionTopology(), {}, {}, 1.0)
    dec = hybrid_greedy(inst, trace=True)
    assert dec.scheduled == () and dec.bandwidth_used == 0.0
    assert incremental_oracle_check(inst, dec)
    with pytest.raises(ValueError):
        incremental_oracle_check(inst, hybrid_greedy(inst))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(0, 15), st.sampled_from(["auto", 0.0, 0.5, 1.0]), st.booleans())
def test_incremental_state_matches_definitions(seed, nv, no, lam, uniform):
    inst = make_fixture(FixtureSpec("random", seed=seed, n_covs=nv, n_objects=no, uniform_cost=uniform))
    dec = hybrid_greedy(inst, mix_weight=lam, trace=True)
    assert incremental_oracle_check(inst, dec)
    assert dec.bandwidth_used <= inst.budget * (1 + 1e-12)


def test_oracle_check_catches_tampering():
    dec = hybrid_greedy(EX1, trace=True)
    dec.trace.d_hist[1, 0] += 0.1
    rep = incremental_oracle_check(EX1, dec)
    assert not rep and rep.round == 1


# --------------------------------------------------------------------------
# instances
# --------------------------------------------------------------------------


def test_instance_validation():
    topo = PerceptionTopology.build({0: {"a"}})
    with pytest.raises(ValueError, match="duplicate"):
        Instance((0, 0), topo, {"a": 1.0}, {0: 1.0}, 1.0)
    with pytest.raises(ValueError, match="budget"):
        Instance((0,), topo, {"a": 1.0}, {0: 1.0}, -1.0)
    with pytest.raises(ValueError, match="non-positive cost"):
        Instance((0,), topo, {"a": 1.0}, {0: 0.0}, 1.0)
    with pytest.raises(ValueError, match="no cost"):
        Instance((0,), topo, {"a": 1.0}, {}, 1.0)
    with pytest.raises(ValueError, match="without weight"):
        Instance((0,), topo, {}, {0: 1.0}, 1.0)


@pytest.mark.parametrize("inst", [EX1, EX2, make_fixture(FixtureSpec("random", seed=3))], ids=["ex1", "ex2", "random"])
def test_instance_json_round_trip(inst):
    back = Instance.from_json(inst.to_json())
    assert back == inst
    assert hybrid_greedy(back).scheduled == hybrid_greedy(inst).scheduled


def test_scaled_preserves_schedule():
    assert hybrid_greedy(EX2.scaled(7.0)).scheduled == hybrid_greedy(EX2).scheduled


# --------------------------------------------------------------------------
# online scheduling
# --------------------------------------------------------------------------


def _seen(first, second=None, t=0):
    topo = PerceptionTopology.build(first, second or {})
    covs = sorted(topo.covs | set(first))
    return EmpiricalState(dict(topo.first), dict(topo.second), last_seen_single={c: t for c in covs})


def test_cmass_reduces_to_hybrid_greedy_without_bonuses():
    for seed in range(20):
        inst = make_fixture(FixtureSpec("random", seed=seed, n_covs=6, n_objects=10))
        emp = EmpiricalState(dict(inst.topo.first), dict(inst.topo.second), last_seen_single={c: 0 for c in inst.covs})
        dec = cmass_schedule(emp, inst.covs, inst.costs, inst.budget, inst.weights, SchedulerParams(alpha=0.0, beta=0.0), t=5)
        assert dec.scheduled == hybrid_greedy(inst).scheduled
        assert dec.forced == ()


def test_never_seen_cov_is_forced_in():
    emp = _seen({"a": {"x"}})
    dec = cmass_schedule(emp, ["a", "new"], {"a": 1.0, "new": 1.0}, 1.0, {"x": 1.0})
    assert dec.scheduled == ("new",) and dec.forced == ("new",)


def test_forced_overflow_takes_cheapest_first():
    emp = EmpiricalState()
    costs = {"p": 3.0, "q": 1.0, "r": 2.0}
    dec = cmass_schedule(emp, ["p", "q", "r"], costs, 3.5, {})
    assert dec.forced == ("q", "r")


def test_staler_cov_wins_tie():
    emp = _seen({"fresh": {"x"}, "stale": {"y"}})
    emp.last_seen_single = {"fresh": 100, "stale": 0}
    w = {"x": 1.0, "y": 1.0}
    dec = cmass_schedule(emp, ["fresh", "stale"], {"fresh": 1.0, "stale": 1.0}, 1.0, w, SchedulerParams(alpha=0.0, beta=0.01), t=200)
    assert dec.scheduled == ("stale",)
    plain = cmass_schedule(emp, ["fresh", "stale"], {"fresh": 1.0, "stale": 1.0}, 1.0, w, SchedulerParams(alpha=0.0, beta=0.0), t=200)
    assert plain.scheduled == ("fresh",)


def test_uncertainty_bonus_rewards_emerging_objects():
    emp = _seen({"a": {"x"}, "b": set()})
    emp.uncertainty = {"b": frozenset({"y", "z"})}
    w = {"x": 0.01, "y": 1.0, "z": 1.0}
    dec = cmass_schedule(emp, ["a", "b"], {"a": 1.0, "b": 1.0}, 1.0, w, SchedulerParams(alpha=0.01, beta=0.0))
    assert dec.scheduled == ("b",)
    off = SchedulerParams(alpha=0.01, beta=0.0, use_uncertainty=False)
    assert cmass_schedule(emp, ["a", "b"], {"a": 1.0, "b": 1.0}, 1.0, w, off).scheduled == ("a",)


def test_first_order_variant_ignores_pairs():
    emp = _seen({"a": set(), "b": set(), "c": {"y"}}, {("a", "b"): {"x"}})
    w = {"x": 1.0, "y": 0.1}
    costs = {"a": 1.0, "b": 1.0, "c": 1.0}
    full = cmass_schedule(emp, ["a", "b", "c"], costs, 2.0, w, SchedulerParams(alpha=0.0, beta=0.0))
    fo = cmass_schedule(emp, ["a", "b", "c"], costs, 2.0, w, SchedulerParams(alpha=0.0, beta=0.0, first_order=True))
    assert set(full.scheduled) == {"a", "b"}
    assert fo.scheduled == ("c",)


def test_free_user_is_never_charged():
    emp = _seen({"user": {"x"}, "a": {"x"}, "b": set()}, {("user", "b"): {"y"}})
    w = {"x": 1.0, "y": 1.0}
    dec = cmass_schedule(emp, ["a", "b"], {"a": 1.0, "b": 1.0}, 1.0, w, SchedulerParams(alpha=0.0, beta=0.0), free=("user",))
    # x arrives with the user's own data, so only b's joint object is new
    assert dec.scheduled == ("b",)


def test_fold_free_hand_case():
    topo = PerceptionTopology.build({"u": {1}, "a": {2}}, {("u", "a"): {3}, ("a", "b"): {4}, ("u", "b"): {2}})
    got = fold_free(topo, {"u"})
    assert got.first == {"a": frozenset({2, 3}), "b": frozenset({2})}
    assert got.second == {pair("a", "b"): frozenset({4})}
    assert fold_free(topo, ()) is topo


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.data())
def test_fold_free_equals_conditioning(seed, nv, data):
    topo = make_fixture(FixtureSpec("random", seed=seed, n_covs=nv, n_objects=10, groups=2)).topo
    free = data.draw(st.frozensets(st.integers(0, nv - 1), max_size=2))
    S = data.draw(st.frozensets(st.integers(0, nv - 1)))
    S = S - free
    folded = fold_free(topo, free)
    assert compose(folded, S) == compose(topo, S | free) - compose(topo, free)


def test_params_validation():
    with pytest.raises(ValueError):
        SchedulerParams(mix_weight=1.5)
    with pytest.raises(ValueError):
        SchedulerParams(alpha=-0.1)
    assert SchedulerParams().alpha == 0.01 and SchedulerParams().beta == 0.01


def test_decision_bandwidth():
    dec = hybrid_greedy(EX2)
    assert dec.bandwidth_used == pytest.approx(sum(EX2.costs[c] for c in dec.scheduled))
    assert math.isfinite(dec.bandwidth_used) and np.isclose(dec.budget, 4.0)
