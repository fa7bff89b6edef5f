"""Property suites for the scheduling theory and the channel solver.

Each suite returns a :class:`SuiteReport`; the command line prints its
lines and the tests assert on ``passed``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import FixtureSpec, brute_force_optimal, make_fixture, random_instance
from .channel import ChannelParams, InfeasibleLink, achievable_rate, min_bandwidth, rate_ceiling
from .scheduler import (
    actual_utility,
    approximation_bound,
    collaboration_degree,
    gamma,
    hybrid_greedy,
    incremental_oracle_check,
)

SUITES = ("submodularity", "lemma2", "approx-ratio", "examples", "channel")


@dataclass
class SuiteReport:
    name: str
    passed: bool = True
    lines: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def fail(self, msg):
        self.passed = False
        self.lines.append("FAIL " + msg)

    def text(self):
        head = f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"
        return "\n".join([head, *("  " + ln for ln in self.lines)])


# --------------------------------------------------------------------------
# pending utility over every subset at once
# --------------------------------------------------------------------------


def subset_masks(n):
    """``(2**n, n)`` bool membership table; row ``m`` is the bit pattern of ``m``."""
    m = np.arange(1 << n)
    return ((m[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)


def all_subset_utilities(inst):
    """Actual and pending utility of every subset of ``inst.covs`` (indexed by bitmask)."""
    first, second, w, cost = inst.arrays()
    nv = len(inst.covs)
    inS = subset_masks(nv)  # (M, V)
    f = first.astype(float)
    s = second.astype(float)
    det1 = (inS.astype(float) @ f) > 0  # (M, O)
    both = inS[:, :, None] & inS[:, None, :]  # (M, V, V)
    det2 = np.einsum("mij,ijo->mo", both.astype(float), s) > 0
    det = det1 | det2
    share = cost[:, None] / (cost[:, None] + cost[None, :])  # share[i, j] = B_i / (B_i + B_j)
    cross = inS[:, :, None] & ~inS[:, None, :]
    level = (cross[:, :, :, None] * (s * share[:, :, None])[None]).max(axis=(1, 2)) if nv else np.zeros((1, len(w)))
    d = np.where(det, 1.0, level)
    return det.astype(float) @ w, d @ w


def _subset_pairs(n):
    """All ``(S, T)`` bitmask pairs with ``S ⊆ T`` over ``n`` elements."""
    T = np.arange(1 << n)
    S_list, T_list = [], []
    for t in T:
        sub = t
        while True:
            S_list.append(sub)
            T_list.append(t)
            if sub == 0:
                break
            sub = (sub - 1) & t
    return np.array(S_list), np.array(T_list)


def submodularity_violations(values, n, tol=1e-12):
    """Count ``(S, T, i)`` with ``S ⊆ T``, ``i ∉ T`` and
    ``f(S + i) - f(S) < f(T + i) - f(T) - tol``."""
    S, T = _subset_pairs(n)
    bad = checks = 0
    for i in range(n):
        bit = 1 << i
        keep = (T & bit) == 0
        s, t = S[keep], T[keep]
        ms = values[s | bit] - values[s]
        mt = values[t | bit] - values[t]
        bad += int(np.count_nonzero(ms < mt - tol * np.maximum(1.0, np.abs(mt))))
        checks += len(s)
    return bad, checks


def disjoint_joint_objects(topo):
    """Objects that two CoV pairs with no member in common can each detect jointly."""
    pairs = {}
    for k, objs in topo.second.items():
        for o in objs:
            pairs.setdefault(o, []).append(k)
    return {o for o, ks in pairs.items() if any(not (a & b) for a, b in itertools.combinations(ks, 2))}


def submodularity(n_instances=1000, max_covs=7, max_objects=12, seed=0) -> SuiteReport:
    """Diminishing returns of the pending utility on random instances.

    Objects may belong to several singletons and pairs.  Violations are
    tallied separately for instances where some object is jointly detectable
    by two disjoint pairs, the structure that breaks diminishing returns.
    """
    rep = SuiteReport("submodularity")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    total_bad = total_checks = 0
    split = {True: [0, 0], False: [0, 0]}  # has disjoint-pair object -> [instances, violating instances]
    example = None
    for k in range(n_instances):
        spec = FixtureSpec("random", n_covs=int(rng.integers(2, max_covs + 1)), n_objects=int(rng.integers(1, max_objects + 1)),
                           groups=int(rng.integers(1, 3)), uniform_cost=bool(rng.random() < 0.3), seed=int(rng.integers(2**31)))
        inst = random_instance(spec)
        _, pending = all_subset_utilities(inst)
        bad, checks = submodularity_violations(pending, len(inst.covs))
        total_bad += bad
        total_checks += checks
        cls = bool(disjoint_joint_objects(inst.topo))
        split[cls][0] += 1
        split[cls][1] += bool(bad)
        if bad and example is None:
            example = (k, spec.seed, bad)
    rep.stats = {"instances": n_instances, "checks": total_checks, "violations": total_bad,
                 "violating_instances": split[True][1] + split[False][1], "seconds": time.perf_counter() - t0,
                 "with_disjoint_pairs": tuple(split[True]), "without_disjoint_pairs": tuple(split[False])}
    rep.lines.append(f"{n_instances} instances, {total_checks} (S, T, i) checks, {total_bad} violations, {rep.stats['seconds']:.1f} s")
    rep.lines.append(f"objects in two disjoint pairs: {split[True][1]}/{split[True][0]} instances violate; "
                     f"otherwise: {split[False][1]}/{split[False][0]}")
    if total_bad:
        k, sd, bad = example
        rep.fail(f"first violating instance {k} (fixture seed {sd}) has {bad} violating (S, T, i) triples")
    return rep


# --------------------------------------------------------------------------
# incremental bookkeeping
# --------------------------------------------------------------------------


def lemma2(n_instances=500, seed=0, tol=1e-12) -> SuiteReport:
    """Incremental detection levels and marginals equal their definitions at every round."""
    rep = SuiteReport("lemma2")
    rng = np.random.default_rng(seed)
    rounds = 0
    for k in range(n_instances):
        spec = FixtureSpec("random", n_covs=int(rng.integers(1, 9)), n_objects=int(rng.integers(0, 15)),
                           groups=int(rng.integers(1, 3)), uniform_cost=bool(rng.random() < 0.3), seed=int(rng.integers(2**31)))
        inst = random_instance(spec)
        mix = rng.choice(["auto", 0.0, 0.25, 0.5, 1.0])
        mix = mix if mix == "auto" else float(mix)
        n_init = int(rng.integers(0, 2)) if len(inst.covs) > 1 else 0
        init = tuple(inst.covs[:n_init])
        dec = hybrid_greedy(inst, mix, init=init, trace=True)
        rounds += len(dec.scheduled) + 1
        res = incremental_oracle_check(inst, dec, tol)
        if not res:
            rep.fail(f"instance {k} (seed {spec.seed}, mix {mix}) round {res.round}: {res.detail}")
    rep.stats = {"instances": n_instances, "rounds": rounds}
    rep.lines.append(f"{n_instances} instances, {rounds} rounds checked at tolerance {tol:g}")
    return rep


# --------------------------------------------------------------------------
# approximation ratio
# --------------------------------------------------------------------------


def approx_ratio(n_instances=500, max_covs=9, seed=0) -> SuiteReport:
    """Hybrid greedy against the brute-force optimum on uniform-cost instances."""
    rep = SuiteReport("approx-ratio")
    rng = np.random.default_rng(seed)
    ratios = []
    for k in range(n_instances):
        N = int(rng.integers(2, 6))
        nv = int(rng.integers(N, max_covs + 1))
        spec = FixtureSpec("random", n_covs=nv, n_objects=int(rng.integers(1, 16)), groups=int(rng.integers(1, 3)),
                           uniform_cost=True, budget=float(N), seed=int(rng.integers(2**31)))
        inst = random_instance(spec)
        opt = float(all_subset_utilities(inst)[0][_feasible(inst)].max())
        got = actual_utility(inst, hybrid_greedy(inst).scheduled)
        C = collaboration_degree(inst.topo, inst.covs)
        bound = approximation_bound(C, N)
        ratio = got / opt if opt > 0 else 1.0
        ratios.append(ratio)
        if ratio < bound - 1e-12:
            rep.fail(f"instance {k} (seed {spec.seed}, N={N}, C={C}): ratio {ratio:.6f} < bound {bound:.6f}")
    r = np.array(ratios)
    q = np.quantile(r, [0.0, 0.05, 0.5]) if len(r) else np.zeros(3)
    rep.stats = {"instances": n_instances, "min": q[0], "p05": q[1], "median": q[2], "optimal_share": float(np.mean(r >= 1 - 1e-12))}
    rep.lines.append(f"{n_instances} instances; ratio min {q[0]:.4f}, 5% {q[1]:.4f}, median {q[2]:.4f}, "
                     f"optimal in {100 * rep.stats['optimal_share']:.1f}%")
    return rep


def _feasible(inst):
    cost = np.array([inst.costs[c] for c in inst.covs])
    spent = subset_masks(len(inst.covs)).astype(float) @ cost
    return spent <= inst.budget * (1 + 1e-12)


# --------------------------------------------------------------------------
# hand-traced counterexamples
# --------------------------------------------------------------------------


def examples() -> SuiteReport:
    """Greedy variants on the constructions where single-utility greedy fails."""
    rep = SuiteReport("examples")

    def check(label, value, expect, op="=="):
        ok = math.isclose(value, expect, rel_tol=0, abs_tol=1e-12) if op == "==" else value >= expect - 1e-12
        rep.lines.append(f"{label}: {value:.6g} (expected {op} {expect:g})")
        if not ok:
            rep.fail(label)

    for N, eps in ((3, 0.1), (10, 0.01)):
        inst = make_fixture(FixtureSpec("example1", N=N, eps=eps, budget=2))
        check(f"example1 N={N} eps={eps} actual-greedy", actual_utility(inst, hybrid_greedy(inst, 0.0).scheduled), 2 * eps)
        check(f"example1 N={N} eps={eps} hybrid", actual_utility(inst, hybrid_greedy(inst).scheduled), 1.0, ">=")
    for N, eps in ((4, 0.01), (10, 0.01)):
        inst = make_fixture(FixtureSpec("example2", N=N, eps=eps, budget=4))
        check(f"example2 N={N} eps={eps} pending-greedy", actual_utility(inst, hybrid_greedy(inst, 1.0).scheduled), 4 * eps)
        check(f"example2 N={N} eps={eps} hybrid", actual_utility(inst, hybrid_greedy(inst).scheduled), 2.0, ">=")
    for N, C in ((2, 2), (3, 3)):
        inst = make_fixture(FixtureSpec("example3", N=N, C=C))
        got = actual_utility(inst, hybrid_greedy(inst).scheduled)
        opt = brute_force_optimal(inst)[1]
        rep.lines.append(f"example3 N={N} C={C}: hybrid {got:g}, optimum {opt:g}, bound {approximation_bound(C, N):.4f}")
        if got < approximation_bound(collaboration_degree(inst.topo), N) * opt - 1e-12:
            rep.fail(f"example3 N={N} C={C} below the guarantee")
    for C, L in ((4, 2), (6, 3)):
        inst = make_fixture(FixtureSpec("example4", C=C, L=L))
        got = actual_utility(inst, hybrid_greedy(inst).scheduled)
        opt = brute_force_optimal(inst)[1]
        rep.lines.append(f"example4 C={C} L={L}: hybrid {got:.4g}, optimum {opt:.4g}, gamma {gamma(collaboration_degree(inst.topo)):.4f}")
        if got < approximation_bound(collaboration_degree(inst.topo), C) * opt - 1e-12:
            rep.fail(f"example4 C={C} L={L} below the guarantee")
    return rep


# --------------------------------------------------------------------------
# channel
# --------------------------------------------------------------------------


def channel(n_links=100, seed=0, params: ChannelParams = ChannelParams(), dt=0.1) -> SuiteReport:
    """Bandwidth solver residuals, infeasibility flagging and rate shape."""
    rep = SuiteReport("channel")
    rng = np.random.default_rng(seed)
    worst = 0.0
    solved = 0
    while solved < n_links:
        gain = 10 ** rng.uniform(-13, -7)
        ceiling = rate_ceiling(gain, params)
        size = rng.uniform(0.01, 0.99) * ceiling * dt
        B = min_bandwidth(size, gain, params, dt)
        resid = abs(achievable_rate(B, gain, params) * dt - size) / size
        worst = max(worst, resid)
        solved += 1
    rep.lines.append(f"{n_links} feasible links, worst relative residual {worst:.3g}")
    if not worst < 1e-6:
        rep.fail(f"residual {worst:.3g} >= 1e-6")

    flagged = 0
    for _ in range(n_links):
        gain = 10 ** rng.uniform(-13, -7)
        size = rng.uniform(1.0, 3.0) * rate_ceiling(gain, params) * dt
        try:
            min_bandwidth(size, gain, params, dt)
        except InfeasibleLink:
            flagged += 1
    rep.lines.append(f"{flagged}/{n_links} requests at or above the capacity ceiling flagged infeasible")
    if flagged != n_links:
        rep.fail("an infeasible request was solved")
    try:
        min_bandwidth(1.0, 1e-9, params, dt, distance=params.max_comm_distance + 1)
        rep.fail("out-of-range link was solved")
    except InfeasibleLink:
        pass

    bad_mono = bad_conc = 0
    for _ in range(n_links):
        gain = 10 ** rng.uniform(-13, -7)
        W = np.geomspace(1e3, 1e9, 400)
        r = np.array([achievable_rate(x, gain, params) for x in W])
        bad_mono += int(np.count_nonzero(np.diff(r) <= 0))
        # concavity on a uniform grid: second differences are non-positive
        Wu = np.linspace(1e4, 5e7, 200)
        ru = np.array([achievable_rate(x, gain, params) for x in Wu])
        bad_conc += int(np.count_nonzero(np.diff(ru, 2) > 1e-9 * ru[1:-1]))
    rep.lines.append(f"rate monotonicity violations {bad_mono}, concavity violations {bad_conc}")
    if bad_mono or bad_conc:
        rep.fail("rate is not increasing and concave in bandwidth")
    rep.stats = {"worst_residual": worst, "flagged": flagged, "monotone_violations": bad_mono, "concave_violations": bad_conc}
    return rep


def run_suite(name, **kwargs) -> SuiteReport:
    funcs = {"submodularity": submodularity, "lemma2": lemma2, "approx-ratio": approx_ratio, "examples": examples, "channel": channel}
    if name not in funcs:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return funcs[name](**kwargs)
