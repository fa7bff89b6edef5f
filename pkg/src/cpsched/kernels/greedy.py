"""Inner loop of the hybrid greedy scheduler.

Everything here works on dense arrays indexed by CoV slot ``i`` and object slot
``n``.  The caller (``cpsched.scheduler``) owns the mapping back to ids.
"""

import numpy as np

from .._jit import njit, select

# relative slack when comparing utility-to-cost ratios, so that ties stay ties
# after harmless floating-point reassociation
TIE_RTOL = 1e-12


def init_levels(first, second, cost):
    """Detection-level matrix before any CoV is scheduled.

    ``P[i, n]`` is 1 when CoV ``i`` detects ``n`` alone, otherwise the largest
    cost share ``B_i / (B_i + B_j)`` over partners ``j`` that detect ``n``
    jointly with ``i``, otherwise 0.
    """
    share = cost[:, None] / (cost[:, None] + cost[None, :])
    pend = np.where(second, share[:, :, None], 0.0).max(axis=1) if second.shape[1] else np.zeros(first.shape)
    return np.where(first, 1.0, pend)


@njit
def _greedy_jit(first, second, w, cost, budget, lam, bonus, init):
    nv, no = first.shape
    P = np.zeros((nv, no))
    for i in range(nv):
        for n in range(no):
            if first[i, n]:
                P[i, n] = 1.0
            else:
                best = 0.0
                for j in range(nv):
                    if second[i, j, n]:
                        sh = cost[i] / (cost[i] + cost[j])
                        if sh > best:
                            best = sh
                P[i, n] = best
    d = np.zeros(no)
    sched = np.zeros(nv, dtype=np.bool_)
    for v in range(nv):
        if init[v]:
            sched[v] = True
            for n in range(no):
                if P[v, n] > d[n]:
                    d[n] = P[v, n]
            for i in range(nv):
                for n in range(no):
                    if second[i, v, n]:
                        P[i, n] = 1.0

    order = np.full(nv, -1, dtype=np.int64)
    d_hist = np.zeros((nv + 1, no))
    gm_hist = np.full((nv + 1, nv), np.nan)
    gp_hist = np.full((nv + 1, nv), np.nan)
    d_hist[0] = d
    W = budget
    r = 0
    while True:
        cheapest = np.inf
        for i in range(nv):
            if not sched[i] and cost[i] < cheapest:
                cheapest = cost[i]
        if cheapest > W:
            break
        pick = -1
        best = -np.inf
        for i in range(nv):
            if sched[i]:
                continue
            gm = 0.0
            gp = 0.0
            for n in range(no):
                if w[n] == 0.0:
                    continue
                pf = 1.0 if P[i, n] >= 1.0 else 0.0
                df = 1.0 if d[n] >= 1.0 else 0.0
                if pf > df:
                    gm += w[n]
                if P[i, n] > d[n]:
                    gp += w[n] * (P[i, n] - d[n])
            gm_hist[r, i] = gm
            gp_hist[r, i] = gp
            if cost[i] > W:
                continue
            h = lam * gp + (1.0 - lam) * gm + bonus[i]
            if h <= 0.0:
                continue
            ratio = h / cost[i]
            if pick < 0 or ratio > best + TIE_RTOL * abs(best):
                best = ratio
                pick = i
        if pick < 0:
            break
        sched[pick] = True
        order[r] = pick
        W -= cost[pick]
        for n in range(no):
            if P[pick, n] > d[n]:
                d[n] = P[pick, n]
        for i in range(nv):
            for n in range(no):
                if second[i, pick, n]:
                    P[i, n] = 1.0
        r += 1
        d_hist[r] = d
    return order[:r], d_hist[: r + 1], gm_hist[: r + 1], gp_hist[: r + 1], W


def _greedy_numpy(first, second, w, cost, budget, lam, bonus, init):
    nv, no = first.shape
    P = init_levels(first, second, cost)
    d = np.zeros(no)
    sched = np.zeros(nv, dtype=bool)
    for v in np.flatnonzero(init):
        sched[v] = True
        d = np.maximum(d, P[v])
        P[second[:, v, :]] = 1.0
    order, d_hist, gm_hist, gp_hist = [], [d.copy()], [], []
    W = float(budget)
    while (~sched).any() and cost[~sched].min() <= W:
        gm = ((P >= 1.0) & (d < 1.0)[None, :]) @ w
        gp = np.maximum(P - d[None, :], 0.0) @ w
        gm_hist.append(np.where(sched, np.nan, gm))
        gp_hist.append(np.where(sched, np.nan, gp))
        h = lam * gp + (1.0 - lam) * gm + bonus
        ok = ~sched & (cost <= W) & (h > 0.0)
        if not ok.any():
            break
        ratio = np.where(ok, h / cost, -np.inf)
        pick, best = -1, -np.inf
        for i in np.flatnonzero(ok):
            if pick < 0 or ratio[i] > best + TIE_RTOL * abs(best):
                best, pick = ratio[i], i
        sched[pick] = True
        order.append(pick)
        W -= cost[pick]
        d = np.maximum(d, P[pick])
        P[second[:, pick, :]] = 1.0
        d_hist.append(d.copy())
    gm_hist.append(np.full(nv, np.nan))
    gp_hist.append(np.full(nv, np.nan))
    return (
        np.asarray(order, dtype=np.int64),
        np.asarray(d_hist),
        np.asarray(gm_hist[: len(order) + 1]),
        np.asarray(gp_hist[: len(order) + 1]),
        W,
    )


greedy_core = select(_greedy_jit, _greedy_numpy)
greedy_core.__doc__ = """Run the hybrid greedy loop.

Returns ``(order, d_hist, gm_hist, gp_hist, remaining_budget)`` where ``order``
lists the picked slots (pre-scheduled ``init`` slots excluded), ``d_hist[r]`` is
the detection-level vector before round ``r`` (last row: final state) and
``gm_hist[r, i]`` / ``gp_hist[r, i]`` are the actual / pending marginals of
unscheduled slot ``i`` computed in round ``r`` (NaN where not evaluated).
"""
