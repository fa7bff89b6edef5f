"""Exact budgeted subset search (branch and bound over include/exclude).

Object sets are packed into ``uint64`` words so the per-node union is a handful
of bitwise ORs.
"""

import numpy as np

from .._jit import njit, select


def pack_bits(mask):
    """Pack a boolean array along its last axis into ``uint64`` words."""
    mask = np.asarray(mask, dtype=bool)
    no = mask.shape[-1]
    nw = max(1, (no + 63) // 64)
    padded = np.zeros(mask.shape[:-1] + (nw * 64,), dtype=bool)
    padded[..., :no] = mask
    bits = padded.reshape(mask.shape[:-1] + (nw, 64)).astype(np.uint64)
    shifts = np.arange(64, dtype=np.uint64)
    return np.bitwise_or.reduce(bits << shifts, axis=-1)


@njit
def _weight(words, w):
    s = 0.0
    one = np.uint64(1)
    for k in range(words.shape[0]):
        x = words[k]
        if x == 0:
            continue
        base = 64 * k
        for b in range(64):
            if (x >> np.uint64(b)) & one:
                s += w[base + b]
    return s


@njit
def _best_subset_jit(first_bits, second_bits, w, cost, budget):
    nv, nw = first_bits.shape
    wpad = np.zeros(nw * 64)
    wpad[: w.shape[0]] = w
    # reach[k]: objects any CoV with slot >= k could still help detect
    reach = np.zeros((nv + 1, nw), dtype=np.uint64)
    for k in range(nv - 1, -1, -1):
        for q in range(nw):
            acc = reach[k + 1, q] | first_bits[k, q]
            for j in range(nv):
                acc |= second_bits[k, j, q]
            reach[k, q] = acc
    limit = budget * (1.0 + 1e-12)
    det = np.zeros((nv + 1, nw), dtype=np.uint64)
    util = np.zeros(nv + 1)
    spent = np.zeros(nv + 1)
    state = np.zeros(nv + 1, dtype=np.int64)
    inc = np.zeros(nv, dtype=np.bool_)
    best_inc = np.zeros(nv, dtype=np.bool_)
    best = -1.0
    tmp = np.zeros(nw, dtype=np.uint64)
    depth = 0
    while depth >= 0:
        if state[depth] == 0:
            if util[depth] > best + 1e-12:
                best = util[depth]
                best_inc[:] = False
                best_inc[:depth] = inc[:depth]
            if depth == nv:
                depth -= 1
                continue
            for q in range(nw):
                tmp[q] = reach[depth, q] & ~det[depth, q]
            if util[depth] + _weight(tmp, wpad) <= best + 1e-12:
                depth -= 1
                continue
            state[depth] = 1
            i = depth
            if spent[depth] + cost[i] <= limit:
                inc[i] = True
                for q in range(nw):
                    acc = det[depth, q] | first_bits[i, q]
                    for j in range(i):
                        if inc[j]:
                            acc |= second_bits[i, j, q]
                    det[depth + 1, q] = acc
                    tmp[q] = acc & ~det[depth, q]
                util[depth + 1] = util[depth] + _weight(tmp, wpad)
                spent[depth + 1] = spent[depth] + cost[i]
                state[depth + 1] = 0
                depth += 1
                continue
        if state[depth] == 1:
            state[depth] = 2
            inc[depth] = False
            det[depth + 1] = det[depth]
            util[depth + 1] = util[depth]
            spent[depth + 1] = spent[depth]
            state[depth + 1] = 0
            depth += 1
            continue
        inc[depth] = False
        state[depth] = 0
        depth -= 1
    return best, best_inc


def _best_subset_numpy(first_bits, second_bits, w, cost, budget):
    nv = first_bits.shape[0]

    def as_int(words):
        return sum(int(x) << (64 * k) for k, x in enumerate(words))

    first = [as_int(first_bits[i]) for i in range(nv)]
    second = [[as_int(second_bits[i, j]) for j in range(nv)] for i in range(nv)]
    weights = np.asarray(w, dtype=float)

    def weight(x):
        s = 0.0
        while x:
            low = x & -x
            s += weights[low.bit_length() - 1]
            x ^= low
        return s

    reach = [0] * (nv + 1)
    for k in range(nv - 1, -1, -1):
        acc = reach[k + 1] | first[k]
        for j in range(nv):
            acc |= second[k][j]
        reach[k] = acc
    limit = budget * (1.0 + 1e-12)
    best = [-1.0, ()]

    def visit(k, det, util, spent, chosen):
        if util > best[0] + 1e-12:
            best[0], best[1] = util, chosen
        if k == nv or util + weight(reach[k] & ~det) <= best[0] + 1e-12:
            return
        if spent + cost[k] <= limit:
            new = det | first[k]
            for j in chosen:
                new |= second[k][j]
            visit(k + 1, new, util + weight(new & ~det), spent + cost[k], chosen + (k,))
        visit(k + 1, det, util, spent, chosen)

    visit(0, 0, 0.0, 0.0, ())
    mask = np.zeros(nv, dtype=bool)
    mask[list(best[1])] = True
    return best[0], mask


best_subset = select(_best_subset_jit, _best_subset_numpy)
