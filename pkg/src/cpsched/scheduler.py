"""Budgeted CoV scheduling with joint detections.

Utilities are evaluated either definitionally (set operations on a
:class:`~cpsched.topology.PerceptionTopology`) or incrementally through the
detection-level state of the hybrid greedy loop; the two must agree, which
:func:`incremental_oracle_check` verifies.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels.greedy import greedy_core
from .topology import EmpiricalState, PerceptionTopology, compose

MIX_CLAMP = 1e-9


@dataclass(frozen=True)
class Instance:
    """One-shot scheduling problem.  CoV order doubles as the tie-break order."""

    covs: tuple
    topo: PerceptionTopology
    weights: dict
    costs: dict
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "covs", tuple(self.covs))
        if len(set(self.covs)) != len(self.covs):
            raise ValueError("duplicate CoV ids")
        if not self.budget >= 0:
            raise ValueError("budget must be >= 0")
        for c in self.covs:
            if c not in self.costs:
                raise ValueError(f"CoV {c!r} has no cost")
            if not self.costs[c] > 0:
                raise ValueError(f"CoV {c!r} has non-positive cost {self.costs[c]}")
        missing = self.topo.restrict(self.covs).objects - set(self.weights)
        if missing:
            raise ValueError(f"objects without weight: {sorted(missing, key=str)}")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be >= 0")

    @property
    def objects(self):
        return tuple(self.weights)

    def arrays(self):
        first, second = self.topo.arrays(self.covs, self.objects)
        w = np.array([self.weights[o] for o in self.objects], dtype=float)
        cost = np.array([self.costs[c] for c in self.covs], dtype=float)
        return first, second, w, cost

    def scaled(self, k):
        return Instance(self.covs, self.topo, {o: k * w for o, w in self.weights.items()}, self.costs, self.budget)

    def to_json(self):
        return json.dumps({
            "covs": list(self.covs),
            "costs": [self.costs[c] for c in self.covs],
            "weights": [[o, w] for o, w in self.weights.items()],
            "budget": self.budget,
            "topology": self.topo.to_json(),
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        covs = [c if not isinstance(c, list) else tuple(c) for c in data["covs"]]
        by_str = {str(c): c for c in covs}
        topo = PerceptionTopology.from_json(data["topology"], key=lambda s: by_str.get(s, s))
        return cls(tuple(covs), topo, {o: w for o, w in data["weights"]}, dict(zip(covs, data["costs"])), data["budget"])


@dataclass(frozen=True)
class SchedulerParams:
    mix_weight: object = "auto"  # float in [0, 1] or "auto" = 1/(C+1)
    alpha: float = 0.01
    beta: float = 0.01
    use_uncertainty: bool = True
    use_ucb: bool = True
    use_refine: bool = True
    first_order: bool = False

    def __post_init__(self):
        if self.mix_weight != "auto" and not 0 <= float(self.mix_weight) <= 1:
            raise ValueError("mix weight must lie in [0, 1] or be 'auto'")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("exploration weights must be >= 0")


@dataclass(frozen=True)
class GreedyTrace:
    init: tuple
    order: tuple
    d_hist: np.ndarray
    gm_hist: np.ndarray
    gp_hist: np.ndarray
    mix_weight: float


@dataclass(frozen=True)
class ScheduleDecision:
    scheduled: tuple
    costs: dict
    budget: float
    forced: tuple = ()
    trace: GreedyTrace | None = None

    @property
    def bandwidth_used(self):
        return float(sum(self.costs[c] for c in self.scheduled))


# --------------------------------------------------------------------------
# definitional utilities
# --------------------------------------------------------------------------


def actual_utility(inst: Instance, S) -> float:
    return float(sum(inst.weights.get(n, 0.0) for n in compose(inst.topo, S)))


def detection_levels(inst: Instance, S) -> np.ndarray:
    """Per-object detection level of ``S``: 1 if detected, else the best cost
    share over pairs with one CoV inside ``S`` and one outside."""
    S = set(S)
    det = compose(inst.topo, S)
    out = np.zeros(len(inst.objects))
    outside = [j for j in inst.covs if j not in S]
    for k, n in enumerate(inst.objects):
        if n in det:
            out[k] = 1.0
            continue
        best = 0.0
        for i in S:
            for j in outside:
                if n in inst.topo.second_of(i, j):
                    best = max(best, inst.costs[i] / (inst.costs[i] + inst.costs[j]))
        out[k] = best
    return out


def pending_utility(inst: Instance, S) -> float:
    w = np.array([inst.weights[o] for o in inst.objects])
    return float(w @ detection_levels(inst, S))


def hybrid_utility(inst: Instance, S, mix_weight) -> float:
    return mix_weight * pending_utility(inst, S) + (1 - mix_weight) * actual_utility(inst, S)


def collaboration_degree(topo: PerceptionTopology, covs=None) -> int:
    """Largest number of partners any CoV shares a non-empty joint set with."""
    keep = None if covs is None else set(covs)
    deg = {}
    for k, objs in topo.second.items():
        if not objs or (keep is not None and not k <= keep):
            continue
        for i in k:
            deg[i] = deg.get(i, 0) + 1
    return max(deg.values(), default=0)


def gamma(C: int) -> float:
    if C < 0:
        raise ValueError("collaboration degree must be >= 0")
    if C == 0:
        return 1.0
    if C == 1:
        return 1.0 / 6.0
    return 1.0 / (6 * C + 2)


def auto_mix_weight(C: int) -> float:
    return min(max(1.0 / (C + 1), MIX_CLAMP), 1.0 - MIX_CLAMP)


def approximation_bound(C: int, N: int) -> float:
    """Worst-case ratio of hybrid greedy to the optimum with uniform costs and room for ``N`` CoVs."""
    return 1.0 - (1.0 - gamma(C) / N) ** (N - 1)


# --------------------------------------------------------------------------
# hybrid greedy
# --------------------------------------------------------------------------


def _resolve_mix(inst, mix_weight):
    if mix_weight == "auto" or mix_weight is None:
        return auto_mix_weight(collaboration_degree(inst.topo, inst.covs))
    return float(mix_weight)


def hybrid_greedy(inst: Instance, mix_weight="auto", bonus=None, init=(), trace=False) -> ScheduleDecision:
    """Greedy on the utility-to-cost ratio of the blended marginal.

    ``bonus`` (per-CoV, same order as ``inst.covs``) is added to every
    marginal; ``init`` CoVs count as already scheduled and their cost is not
    charged.  Ties go to the earlier CoV in ``inst.covs``; CoVs whose blended
    marginal is zero are never picked.
    """
    lam = _resolve_mix(inst, mix_weight)
    nv = len(inst.covs)
    first, second, w, cost = inst.arrays()
    b = np.zeros(nv) if bonus is None else np.asarray(bonus, dtype=float)
    slot = {c: k for k, c in enumerate(inst.covs)}
    init_mask = np.zeros(nv, dtype=bool)
    for c in init:
        init_mask[slot[c]] = True
    if nv == 0:
        order, d_hist = np.zeros(0, dtype=np.int64), np.zeros((1, len(w)))
        gm_hist = gp_hist = np.zeros((1, 0))
    else:
        order, d_hist, gm_hist, gp_hist, _ = greedy_core(first, second, w, cost, float(inst.budget), lam, b, init_mask)
    picked = tuple(inst.covs[k] for k in order)
    tr = GreedyTrace(tuple(init), picked, d_hist, gm_hist, gp_hist, lam) if trace else None
    return ScheduleDecision(picked, dict(inst.costs), float(inst.budget), (), tr)


@dataclass
class CheckReport:
    ok: bool = True
    round: int | None = None
    detail: str = ""

    def __bool__(self):
        return self.ok


def incremental_oracle_check(inst: Instance, decision: ScheduleDecision, tol=1e-12) -> CheckReport:
    """Recompute every round's detection levels and marginals from their definitions.

    Compares against the incremental state recorded in ``decision.trace``;
    the first mismatch is reported with its round index.
    """
    tr = decision.trace
    if tr is None:
        raise ValueError("decision carries no trace; run hybrid_greedy(..., trace=True)")
    A = list(tr.init)
    for r in range(len(tr.order) + 1):
        d_def = detection_levels(inst, A)
        if not np.allclose(tr.d_hist[r], d_def, rtol=0, atol=tol):
            return CheckReport(False, r, f"detection levels differ: {tr.d_hist[r]} vs {d_def}")
        if r < tr.gm_hist.shape[0]:
            g0, p0 = actual_utility(inst, A), pending_utility(inst, A)
            for k, i in enumerate(inst.covs):
                if i in A:
                    continue
                gm = actual_utility(inst, A + [i]) - g0
                gp = pending_utility(inst, A + [i]) - p0
                if not math.isnan(tr.gm_hist[r, k]) and abs(tr.gm_hist[r, k] - gm) > tol * max(1.0, abs(gm)):
                    return CheckReport(False, r, f"actual marginal of {i!r}: {tr.gm_hist[r, k]} vs {gm}")
                if not math.isnan(tr.gp_hist[r, k]) and abs(tr.gp_hist[r, k] - gp) > tol * max(1.0, abs(gp)):
                    return CheckReport(False, r, f"pending marginal of {i!r}: {tr.gp_hist[r, k]} vs {gp}")
        if r < len(tr.order):
            A.append(tr.order[r])
    return CheckReport()


# --------------------------------------------------------------------------
# online scheduling with exploration
# --------------------------------------------------------------------------


def fold_free(topo: PerceptionTopology, free) -> PerceptionTopology:
    """Absorb CoVs whose data is free (always received) into the others.

    Joint sets with a free CoV become first-order sets of the partner and the
    free CoVs' own detections disappear (they are obtained regardless).
    """
    free = set(free)
    if not free:
        return topo
    base = set()
    for f in free:
        base |= topo.first_of(f)
    for k, objs in topo.second.items():
        if k <= free:
            base |= objs
    first = {i: set(v) for i, v in topo.first.items() if i not in free}
    for k, objs in topo.second.items():
        inside = k & free
        if len(inside) == 1:
            (j,) = k - free
            first.setdefault(j, set()).update(objs)
    first = {i: frozenset(v - base) for i, v in first.items()}
    second = {}
    for k, objs in topo.second.items():
        if k & free:
            continue
        i, j = tuple(k)
        rest = objs - base - first.get(i, frozenset()) - first.get(j, frozenset())
        if rest:
            second[k] = frozenset(rest)
    return PerceptionTopology(first, second)


def cmass_schedule(emp: EmpiricalState, covs, costs, budget, weights, params: SchedulerParams = SchedulerParams(), t=0, free=()) -> ScheduleDecision:
    """One frame of exploration-aware scheduling.

    ``covs`` are the feasible CoVs of this frame (ids in tie-break order),
    ``costs`` their bandwidth needs, ``weights`` the importance of the live
    objects.  Never-scheduled CoVs are admitted first (cheapest first if they
    do not all fit); the remaining budget goes to the hybrid greedy on the
    empirical topology with UCB and uncertainty bonuses.  ``free`` CoVs (the
    distributed-mode user) are treated as always received.
    """
    covs = [c for c in covs if c not in set(free)]
    never = [c for c in covs if emp.never_scheduled(c)]
    if sum(costs[c] for c in never) <= budget:
        forced = never
    else:
        forced, spent = [], 0.0
        for c in sorted(never, key=lambda c: (costs[c], covs.index(c))):
            if spent + costs[c] <= budget:
                forced.append(c)
                spent += costs[c]
    W = budget - sum(costs[c] for c in forced)

    topo = emp.topo
    if params.first_order:
        topo = topo.without_second()
    topo = fold_free(topo.restrict(list(covs) + list(free), [o for o, w in weights.items() if w > 0]), free)
    if params.first_order:
        topo = topo.without_second()
    inst = Instance(tuple(covs), topo.restrict(covs), dict(weights), {c: costs[c] for c in covs}, max(W, 0.0))
    bonus = np.zeros(len(covs))
    for k, c in enumerate(covs):
        if params.use_uncertainty and params.alpha > 0:
            bonus[k] += params.alpha * sum(weights.get(n, 0.0) for n in emp.uncertainty.get(c, ()))
        if params.use_ucb and params.beta > 0 and c in emp.last_seen_single:
            bonus[k] += params.beta * math.sqrt(max(t - emp.last_seen_single[c], 0))
    dec = hybrid_greedy(inst, params.mix_weight, bonus, init=tuple(forced))
    scheduled = tuple(forced) + dec.scheduled
    return ScheduleDecision(scheduled, {c: costs[c] for c in covs}, float(budget), tuple(forced))
