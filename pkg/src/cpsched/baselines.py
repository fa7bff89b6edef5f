"""Reference schedulers, the exact per-frame optimum, and adversarial fixtures."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernels.geometry import segment_hits
from .kernels.subsets import best_subset, pack_bits
from .scheduler import Instance, ScheduleDecision, actual_utility
from .topology import PerceptionTopology, compose


class InstanceTooLarge(ValueError):
    pass


def closest_first(positions, costs, user_xy, budget) -> ScheduleDecision:
    """Add CoVs nearest-first, skipping any that no longer fit the budget.

    ``positions`` maps CoV id to ``(x, y)``; distance ties go to the earlier id
    in ``positions``.
    """
    ux, uy = user_xy
    order = sorted(enumerate(positions), key=lambda kc: (math.hypot(positions[kc[1]][0] - ux, positions[kc[1]][1] - uy), kc[0]))
    chosen, W = [], float(budget)
    for _, c in order:
        if costs[c] <= W:
            chosen.append(c)
            W -= costs[c]
    return ScheduleDecision(tuple(chosen), {c: costs[c] for c in positions}, float(budget))


def region_cells(region, user_pose, cell=5.0):
    """Centres of the ``cell``-sized grid cells lying inside the interest region."""
    if region.mode == "edge-circle":
        ax, ay = region.anchor if region.anchor is not None else user_pose[:2]
        r = region.radius
        xs = np.arange(-r + 0.5 * cell, r, cell)
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        keep = np.hypot(gx, gy) <= r
        return np.column_stack([gx[keep] + ax, gy[keep] + ay])
    ux, uy, uh = user_pose
    lon = np.arange(-region.half_length + 0.5 * cell, region.half_length, cell)
    lat = np.arange(-region.half_width + 0.5 * cell, region.half_width, cell)
    gl, gt = np.meshgrid(lon, lat, indexing="ij")
    gl, gt = gl.ravel(), gt.ravel()
    c, s = math.cos(uh), math.sin(uh)
    return np.column_stack([ux + gl * c - gt * s, uy + gl * s + gt * c])


def coverage_matrix(positions, cells, building_boxes, radius=100.0):
    """``(V, cells)`` bool: cell centre within ``radius`` with no building in between."""
    pos = np.asarray([positions[c] for c in positions], dtype=float).reshape(-1, 2)
    cells = np.asarray(cells, dtype=float).reshape(-1, 2)
    nv, nc = len(pos), len(cells)
    near = np.hypot(pos[:, None, 0] - cells[None, :, 0], pos[:, None, 1] - cells[None, :, 1]) <= radius
    seg = np.empty((nv, nc, 4))
    seg[..., 0:2] = pos[:, None, :]
    seg[..., 2:4] = cells[None, :, :]
    rows = np.argwhere(near)
    cov = np.zeros((nv, nc), dtype=bool)
    if len(rows):
        s = np.ascontiguousarray(seg[rows[:, 0], rows[:, 1]])
        none = np.full(len(s), -1, dtype=np.int64)
        bb = np.ascontiguousarray(np.asarray(building_boxes, dtype=float).reshape(-1, 7))
        clear = ~segment_hits(s, bb, none, none).any(axis=1)
        cov[rows[:, 0], rows[:, 1]] = clear
    return cov


def greedy_area(positions, region, user_pose, building_boxes, costs, budget, cell=5.0, radius=100.0) -> ScheduleDecision:
    """Greedy on newly covered interest-region cells per unit bandwidth."""
    ids = list(positions)
    cov = coverage_matrix(positions, region_cells(region, user_pose, cell), building_boxes, radius)
    covered = np.zeros(cov.shape[1], dtype=bool)
    sched = np.zeros(len(ids), dtype=bool)
    W = float(budget)
    chosen = []
    while True:
        best, pick = 0.0, -1
        for k, c in enumerate(ids):
            if sched[k] or costs[c] > W:
                continue
            gain = np.count_nonzero(cov[k] & ~covered)
            ratio = gain / costs[c]
            if gain > 0 and ratio > best:
                best, pick = ratio, k
        if pick < 0:
            break
        sched[pick] = True
        covered |= cov[pick]
        W -= costs[ids[pick]]
        chosen.append(ids[pick])
    return ScheduleDecision(tuple(chosen), {c: costs[c] for c in ids}, float(budget))


def cpm_baseline(truth: PerceptionTopology, covs) -> frozenset:
    """Object-level sharing: every CoV broadcasts what it detects alone."""
    out = set()
    for c in covs:
        out |= truth.first_of(c)
    return frozenset(out)


def offline_optimal(inst: Instance, cap=18):
    """Exact best budget-feasible subset by branch and bound.

    CoVs that cannot fit the budget or contribute to no positive-weight object
    are pruned first; ``cap`` bounds the remaining count.
    Returns ``(chosen ids, utility)``.
    """
    first, second, w, cost = inst.arrays()
    pos = w > 0
    useful = (first[:, pos].any(axis=1) | second[:, :, pos].any(axis=(1, 2))) & (cost <= inst.budget * (1 + 1e-12))
    keep = np.flatnonzero(useful)
    if cap is not None and len(keep) > cap:
        raise InstanceTooLarge(f"{len(keep)} relevant CoVs exceed the cap of {cap}")
    if len(keep) == 0:
        return (), 0.0
    fb = pack_bits(first[keep])
    sb = pack_bits(second[np.ix_(keep, keep)])
    util, mask = best_subset(fb, sb, w, cost[keep].copy(), float(inst.budget))
    chosen = tuple(inst.covs[keep[k]] for k in np.flatnonzero(mask))
    return chosen, actual_utility(inst, chosen)


def brute_force_optimal(inst: Instance):
    """Plain enumeration of every subset (reference for small instances)."""
    best, best_set = 0.0, ()
    covs = list(inst.covs)
    for r in range(len(covs) + 1):
        for S in itertools.combinations(covs, r):
            if sum(inst.costs[c] for c in S) <= inst.budget * (1 + 1e-12):
                u = actual_utility(inst, S)
                if u > best + 1e-12:
                    best, best_set = u, S
    return best_set, best


# --------------------------------------------------------------------------
# fixtures
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FixtureSpec:
    family: str
    N: int = 3
    C: int = 2
    eps: float = 0.1
    L: int = 2
    budget: float | None = None
    seed: int = 0
    n_covs: int = 6
    n_objects: int = 12
    uniform_cost: bool = False
    groups: int = 1

    def __post_init__(self):
        if self.family not in ("example1", "example2", "example3", "example4", "random"):
            raise ValueError(f"unknown fixture family {self.family!r}")
        if self.N < 1 or self.C < 1 or self.L < 1 or not self.eps > 0:
            raise ValueError("N, C, L must be >= 1 and eps > 0")
        if self.family == "example4" and (self.L < 2 or self.C % self.L):
            raise ValueError("example4 needs L >= 2 dividing C")
        if self.family == "random" and (self.n_covs < 1 or self.n_objects < 0 or self.groups < 1):
            raise ValueError("random fixture needs n_covs >= 1, n_objects >= 0")


def _unit(covs, budget, first, second, weights):
    topo = PerceptionTopology.build(first, second)
    return Instance(tuple(covs), topo, weights, {c: 1.0 for c in covs}, float(budget))


def make_fixture(spec: FixtureSpec) -> Instance:
    """Build the instance described by ``spec``."""
    N, eps = spec.N, spec.eps
    if spec.family == "example1":
        # m needs u1 and u2 together; each v_k sees a low-weight n_k alone
        covs = ["u1", "u2"] + [f"v{k}" for k in range(1, N + 1)]
        weights = {"m": 1.0, **{f"n{k}": eps for k in range(1, N + 1)}}
        first = {f"v{k}": {f"n{k}"} for k in range(1, N + 1)}
        return _unit(covs, spec.budget if spec.budget is not None else 2, first, {("u1", "u2"): {"m"}}, weights)
    if spec.family == "example2":
        # m_k needs u_k and v_k; v_k alone sees n_k
        covs = [f"u{k}" for k in range(1, N + 1)] + [f"v{k}" for k in range(1, N + 1)]
        weights = {**{f"m{k}": 1.0 for k in range(1, N + 1)}, **{f"n{k}": eps for k in range(1, N + 1)}}
        first = {f"v{k}": {f"n{k}"} for k in range(1, N + 1)}
        second = {(f"u{k}", f"v{k}"): {f"m{k}"} for k in range(1, N + 1)}
        return _unit(covs, spec.budget if spec.budget is not None else 4, first, second, weights)
    if spec.family == "example3":
        # N groups: common CoV c_g pairs with each of C particular CoVs on one object
        C = spec.C
        covs = [f"c{g}" for g in range(1, N + 1)] + [f"p{g}_{k}" for g in range(1, N + 1) for k in range(1, C + 1)]
        second = {(f"c{g}", f"p{g}_{k}"): {f"o{g}_{k}"} for g in range(1, N + 1) for k in range(1, C + 1)}
        weights = {f"o{g}_{k}": 1.0 for g in range(1, N + 1) for k in range(1, C + 1)}
        return _unit(covs, spec.budget if spec.budget is not None else N, {}, second, weights)
    if spec.family == "example4":
        # group a: subgroups of size L, each pair sees a sqrt(C) object; group b: each pair sees a unit object
        C, L = spec.C, spec.L
        a = [f"a{k}" for k in range(1, C + 1)]
        b = [f"b{k}" for k in range(1, C + 1)]
        second, weights = {}, {}
        for s in range(C // L):
            for i, j in itertools.combinations(a[s * L:(s + 1) * L], 2):
                o = f"x_{i}_{j}"
                second[(i, j)] = {o}
                weights[o] = math.sqrt(C)
        for i, j in itertools.combinations(b, 2):
            o = f"y_{i}_{j}"
            second[(i, j)] = {o}
            weights[o] = 1.0
        return _unit(a + b, spec.budget if spec.budget is not None else C, {}, second, weights)
    return random_instance(spec)


def random_instance(spec: FixtureSpec) -> Instance:
    """Random topology: each object belongs to ``groups`` random singletons or pairs."""
    rng = np.random.default_rng(spec.seed)
    nv, no = spec.n_covs, spec.n_objects
    covs = list(range(nv))
    first = {c: set() for c in covs}
    second = {}
    for n in range(no):
        for _ in range(spec.groups):
            if nv >= 2 and rng.random() < 0.5:
                i, j = (int(x) for x in rng.choice(nv, 2, replace=False))
                second.setdefault(frozenset((i, j)), set()).add(n)
            else:
                first[int(rng.integers(nv))].add(n)
    for k in list(second):
        i, j = tuple(k)
        second[k] -= first[i] | first[j]
    weights = {n: float(1.0 - rng.random()) for n in range(no)}  # (0, 1]
    costs = {c: 1.0 for c in covs} if spec.uniform_cost else {c: float(rng.uniform(1.0, 4.0)) for c in covs}
    budget = spec.budget if spec.budget is not None else float(rng.uniform(1.0, 0.5 * sum(costs.values()) + 1.0))
    topo = PerceptionTopology({c: frozenset(v) for c, v in first.items()}, {k: frozenset(v) for k, v in second.items() if v})
    return Instance(tuple(covs), topo, weights, costs, float(budget))
