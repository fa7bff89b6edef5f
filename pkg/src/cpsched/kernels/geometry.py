"""Ray/segment vs. oriented-box kernels.

Boxes are passed as a float array ``boxes`` of shape ``(B, 7)`` with columns
``cx, cy, half_length, half_width, cos(heading), sin(heading), height``.
Buildings are boxes with heading 0.  ``labels`` (shape ``(B,)``) maps a box to
the object slot whose point count it feeds; ``-1`` marks absorbing surfaces
(buildings, CoVs, untracked agents).
"""

import math

import numpy as np

from .._jit import njit, select

_EPS = 1e-12


# --------------------------------------------------------------------------
# LiDAR scan
# --------------------------------------------------------------------------


@njit
def _scan_counts_jit(ox, oy, mount_h, boxes, labels, skip, n_az, tan_elev, max_range, n_labels):
    counts = np.zeros(n_labels, dtype=np.int64)
    nb = boxes.shape[0]
    act = np.empty(nb, dtype=np.int64)
    ac = np.empty(nb)
    half = np.empty(nb)
    na = 0
    for b in range(nb):
        if b == skip:
            continue
        dx = boxes[b, 0] - ox
        dy = boxes[b, 1] - oy
        dist = math.hypot(dx, dy)
        rad = math.hypot(boxes[b, 2], boxes[b, 3])
        if dist - rad > max_range:
            continue
        act[na] = b
        ac[na] = math.atan2(dy, dx)
        half[na] = math.pi + 1.0 if dist <= rad else math.asin(rad / dist) + 1e-9
        na += 1

    n_el = tan_elev.shape[0]
    ht0 = np.empty(na)
    ht1 = np.empty(na)
    hh = np.empty(na)
    hl = np.empty(na, dtype=np.int64)
    two_pi = 2.0 * math.pi
    for k in range(n_az):
        a = two_pi * k / n_az
        ddx = math.cos(a)
        ddy = math.sin(a)
        nh = 0
        for q in range(na):
            diff = a - ac[q]
            diff = (diff + math.pi) % two_pi - math.pi
            if abs(diff) > half[q]:
                continue
            b = act[q]
            c = boxes[b, 4]
            s = boxes[b, 5]
            px = ox - boxes[b, 0]
            py = oy - boxes[b, 1]
            lx = px * c + py * s
            ly = -px * s + py * c
            ldx = ddx * c + ddy * s
            ldy = -ddx * s + ddy * c
            tmin = -np.inf
            tmax = np.inf
            ok = True
            for ax in range(2):
                l0 = lx if ax == 0 else ly
                ld = ldx if ax == 0 else ldy
                h = boxes[b, 2] if ax == 0 else boxes[b, 3]
                if abs(ld) < _EPS:
                    if abs(l0) > h:
                        ok = False
                        break
                else:
                    t1 = (-h - l0) / ld
                    t2 = (h - l0) / ld
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > tmin:
                        tmin = t1
                    if t2 < tmax:
                        tmax = t2
            if not ok or tmin > tmax or tmin < 0.0 or tmin > max_range:
                continue
            ht0[nh] = tmin
            ht1[nh] = tmax
            hh[nh] = boxes[b, 6]
            hl[nh] = labels[b]
            nh += 1
        if nh == 0:
            continue
        for e in range(n_el):
            te = tan_elev[e]
            best = np.inf
            lab = -1
            if te < 0.0:
                best = -mount_h / te
            for q in range(nh):
                z0 = mount_h + ht0[q] * te
                if z0 < 0.0:
                    continue
                if z0 <= hh[q]:
                    thit = ht0[q]
                elif te < 0.0:
                    thit = (mount_h - hh[q]) / (-te)
                    if thit > ht1[q]:
                        continue
                else:
                    continue
                if thit < best:
                    best = thit
                    lab = hl[q]
            if lab >= 0 and best <= max_range:
                counts[lab] += 1
    return counts


def _scan_counts_numpy(ox, oy, mount_h, boxes, labels, skip, n_az, tan_elev, max_range, n_labels):
    counts = np.zeros(n_labels, dtype=np.int64)
    idx = np.arange(boxes.shape[0])
    keep = idx != skip
    d = np.hypot(boxes[:, 0] - ox, boxes[:, 1] - oy) - np.hypot(boxes[:, 2], boxes[:, 3])
    keep &= d <= max_range
    bx = boxes[keep]
    lab = labels[keep]
    if bx.shape[0] == 0:
        return counts
    a = 2.0 * np.pi * np.arange(n_az) / n_az
    ddx, ddy = np.cos(a)[:, None], np.sin(a)[:, None]
    c, s = bx[:, 4], bx[:, 5]
    px, py = ox - bx[:, 0], oy - bx[:, 1]
    lx, ly = px * c + py * s, -px * s + py * c
    ldx, ldy = ddx * c + ddy * s, -ddx * s + ddy * c
    tmin = np.full((n_az, bx.shape[0]), -np.inf)
    tmax = np.full((n_az, bx.shape[0]), np.inf)
    miss = np.zeros((n_az, bx.shape[0]), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for l0, ld, h in ((lx, ldx, bx[:, 2]), (ly, ldy, bx[:, 3])):
            par = np.abs(ld) < _EPS
            t1 = (-h - l0) / ld
            t2 = (h - l0) / ld
            lo, hi = np.minimum(t1, t2), np.maximum(t1, t2)
            lo = np.where(par, -np.inf, lo)
            hi = np.where(par, np.inf, hi)
            miss |= par & (np.abs(l0) > h)
            tmin = np.maximum(tmin, lo)
            tmax = np.minimum(tmax, hi)
    hit = ~miss & (tmin <= tmax) & (tmin >= 0.0) & (tmin <= max_range)
    height = bx[:, 6]
    for te in tan_elev:
        z0 = mount_h + tmin * te
        front = hit & (z0 >= 0.0) & (z0 <= height)
        thit = np.where(front, tmin, np.inf)
        if te < 0.0:
            troof = (mount_h - height) / (-te)
            roof = hit & (z0 > height) & (troof <= tmax)
            thit = np.where(roof, troof, thit)
            ground = -mount_h / te
        else:
            ground = np.inf
        j = np.argmin(thit, axis=1)
        best = thit[np.arange(n_az), j]
        ok = (best < ground) & (best <= max_range) & (lab[j] >= 0)
        np.add.at(counts, lab[j[ok]], 1)
    return counts


scan_counts = select(_scan_counts_jit, _scan_counts_numpy)
scan_counts.__doc__ = """Count LiDAR returns per label for one sensor.

One ray is cast per (azimuth step, laser).  The nearest surface along the ray
(box face, box roof, or the ground plane) takes the return; only boxes with a
non-negative label accumulate counts.
"""


# --------------------------------------------------------------------------
# Segment blocking
# --------------------------------------------------------------------------


@njit
def _segment_hits_jit(seg, boxes, skip_a, skip_b):
    ns = seg.shape[0]
    nb = boxes.shape[0]
    out = np.zeros((ns, nb), dtype=np.bool_)
    for i in range(ns):
        ax = seg[i, 0]
        ay = seg[i, 1]
        dx = seg[i, 2] - ax
        dy = seg[i, 3] - ay
        for b in range(nb):
            if b == skip_a[i] or b == skip_b[i]:
                continue
            c = boxes[b, 4]
            s = boxes[b, 5]
            px = ax - boxes[b, 0]
            py = ay - boxes[b, 1]
            l = (px * c + py * s, -px * s + py * c)
            ld = (dx * c + dy * s, -dx * s + dy * c)
            hw = (boxes[b, 2], boxes[b, 3])
            tmin = 0.0
            tmax = 1.0
            ok = True
            for k in range(2):
                if abs(ld[k]) < _EPS:
                    if abs(l[k]) >= hw[k]:
                        ok = False
                        break
                else:
                    t1 = (-hw[k] - l[k]) / ld[k]
                    t2 = (hw[k] - l[k]) / ld[k]
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > tmin:
                        tmin = t1
                    if t2 < tmax:
                        tmax = t2
            if ok and tmax - tmin > 1e-12:
                out[i, b] = True
    return out


def _segment_hits_numpy(seg, boxes, skip_a, skip_b):
    ns, nb = seg.shape[0], boxes.shape[0]
    if ns == 0 or nb == 0:
        return np.zeros((ns, nb), dtype=bool)
    ax, ay = seg[:, 0:1], seg[:, 1:2]
    dx, dy = seg[:, 2:3] - ax, seg[:, 3:4] - ay
    c, s = boxes[:, 4], boxes[:, 5]
    px, py = ax - boxes[:, 0], ay - boxes[:, 1]
    tmin = np.zeros((ns, nb))
    tmax = np.ones((ns, nb))
    ok = np.ones((ns, nb), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for l0, ld, h in (
            (px * c + py * s, dx * c + dy * s, boxes[:, 2]),
            (-px * s + py * c, -dx * s + dy * c, boxes[:, 3]),
        ):
            par = np.abs(ld) < _EPS
            ok &= ~(par & (np.abs(l0) >= h))
            t1 = (-h - l0) / ld
            t2 = (h - l0) / ld
            tmin = np.maximum(tmin, np.where(par, -np.inf, np.minimum(t1, t2)))
            tmax = np.minimum(tmax, np.where(par, np.inf, np.maximum(t1, t2)))
    out = ok & (tmax - tmin > 1e-12)
    cols = np.arange(nb)
    out &= cols != skip_a[:, None]
    out &= cols != skip_b[:, None]
    return out


segment_hits = select(_segment_hits_jit, _segment_hits_numpy)
segment_hits.__doc__ = """Boolean ``(S, B)`` matrix: does segment ``s`` pass through the open interior of box ``b``.

``seg`` rows are ``(ax, ay, bx, by)``.  Box ``skip_a[s]`` and ``skip_b[s]`` are
ignored for segment ``s`` (pass ``-1`` to skip nothing).  Boxes are open sets,
so a segment that only grazes a corner or slides along an edge is not blocked.
"""
