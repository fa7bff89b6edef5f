"""LiDAR emulation, line-of-sight tests, and one-step LoS prediction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels.geometry import scan_counts, segment_hits
from .world import agent_boxes


@dataclass(frozen=True)
class LidarConfig:
    n_lasers: int = 32
    vertical_fov: float = 40.0  # deg, centred on the horizon
    azimuth_resolution: float = 0.1  # deg
    max_range: float = 100.0  # m
    mount_height: float = 1.9  # m

    def __post_init__(self):
        if min(self.n_lasers, self.vertical_fov, self.azimuth_resolution, self.max_range, self.mount_height) <= 0:
            raise ValueError("LiDAR parameters must be positive")
        steps = 360.0 / self.azimuth_resolution
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError("azimuth resolution must divide 360 degrees")

    @property
    def n_azimuth(self):
        return int(round(360.0 / self.azimuth_resolution))

    @property
    def elevations(self):
        """Laser elevation angles in radians."""
        h = 0.5 * math.radians(self.vertical_fov)
        return np.linspace(-h, h, self.n_lasers)

    @property
    def max_points(self):
        return self.n_lasers * self.n_azimuth


@dataclass(frozen=True)
class ScanResult:
    points: dict
    visible: frozenset

    def __post_init__(self):
        if any(v < 0 for v in self.points.values()):
            raise ValueError("negative point count")
        if any(v > 0 and k not in self.visible for k, v in self.points.items()):
            raise ValueError("object with points must be visible")


def box_samples(boxes):
    """Centre and four corners of each box, shape ``(B, 5, 2)``."""
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 7)
    c, s = boxes[:, 4:5], boxes[:, 5:6]
    sl = np.array([0.0, 1, 1, -1, -1]) * (1 - 1e-9)
    sw = np.array([0.0, 1, -1, 1, -1]) * (1 - 1e-9)
    lx = sl[None, :] * boxes[:, 2:3]
    ly = sw[None, :] * boxes[:, 3:4]
    return np.stack([boxes[:, 0:1] + lx * c - ly * s, boxes[:, 1:2] + lx * s + ly * c], axis=-1)


def los_visible(a, b, occluders, skip_a=-1, skip_b=-1) -> bool:
    """True iff the open segment ``a``-``b`` meets no occluder interior.

    ``occluders`` is a ``(B, 7)`` box array; rows ``skip_a``/``skip_b`` (the
    endpoints' own bodies) are ignored.
    """
    seg = np.array([[a[0], a[1], b[0], b[1]]], dtype=float)
    occ = np.ascontiguousarray(np.asarray(occluders, dtype=float).reshape(-1, 7))
    hit = segment_hits(seg, occ, np.array([skip_a], dtype=np.int64), np.array([skip_b], dtype=np.int64))
    return not bool(hit.any())


def object_los(origins, targets, occluders, origin_rows=None, target_rows=None):
    """LoS matrix ``(n_origins, n_targets)`` from points to boxes.

    A target box counts as in LoS when its centre or any corner is visible.
    ``origin_rows``/``target_rows`` name each endpoint's own row in
    ``occluders`` (``-1`` for none) so bodies never block themselves.
    """
    origins = np.asarray(origins, dtype=float).reshape(-1, 2)
    targets = np.asarray(targets, dtype=float).reshape(-1, 7)
    no, nt = len(origins), len(targets)
    if no == 0 or nt == 0:
        return np.zeros((no, nt), dtype=bool)
    samples = box_samples(targets)  # (nt, 5, 2)
    k = samples.shape[1]
    seg = np.empty((no, nt, k, 4))
    seg[..., 0] = origins[:, None, None, 0]
    seg[..., 1] = origins[:, None, None, 1]
    seg[..., 2:] = samples[None]
    orow = np.full(no, -1) if origin_rows is None else np.asarray(origin_rows)
    trow = np.full(nt, -1) if target_rows is None else np.asarray(target_rows)
    sa = np.broadcast_to(orow[:, None, None], (no, nt, k)).reshape(-1).astype(np.int64)
    sb = np.broadcast_to(trow[None, :, None], (no, nt, k)).reshape(-1).astype(np.int64)
    occ = np.ascontiguousarray(np.asarray(occluders, dtype=float).reshape(-1, 7))
    blocked = segment_hits(np.ascontiguousarray(seg.reshape(-1, 4)), occ, sa, sb).any(axis=1)
    return (~blocked).reshape(no, nt, k).any(axis=2)


@dataclass
class FrameScan:
    """Point counts and LoS of every CoV/object pair in one frame."""

    cov_ids: list
    obj_ids: list
    counts: np.ndarray  # (n_cov, n_obj) int
    visible: np.ndarray  # (n_cov, n_obj) bool

    def result(self, cov_id) -> ScanResult:
        r = self.cov_ids.index(cov_id)
        pts = {o: int(self.counts[r, k]) for k, o in enumerate(self.obj_ids)}
        vis = frozenset(o for k, o in enumerate(self.obj_ids) if self.visible[r, k])
        return ScanResult(pts, vis)


def scan_frame(frame, geom, cfg: LidarConfig = LidarConfig(), cov_ids=None, obj_ids=None) -> FrameScan:
    """Ray-cast every requested CoV's LiDAR against the frame.

    Buildings and all agents occlude; only objects (non-CoV vehicles and
    pedestrians) collect points.
    """
    agents = list(frame.agents)
    boxes = np.vstack([geom.building_boxes, agent_boxes(agents)]) if agents else geom.building_boxes.copy()
    nb = len(geom.building_boxes)
    index = {a.id: nb + k for k, a in enumerate(agents)}
    if cov_ids is None:
        cov_ids = [a.id for a in agents if a.is_cov]
    if obj_ids is None:
        obj_ids = [a.id for a in agents if a.is_object]
    labels = np.full(len(boxes), -1, dtype=np.int64)
    for k, o in enumerate(obj_ids):
        labels[index[o]] = k
    boxes = np.ascontiguousarray(boxes)
    tan_elev = np.tan(cfg.elevations)
    by_id = frame.by_id()
    counts = np.zeros((len(cov_ids), len(obj_ids)), dtype=np.int64)
    for r, cid in enumerate(cov_ids):
        c = by_id[cid]
        counts[r] = scan_counts(c.x, c.y, cfg.mount_height, boxes, labels, index[cid], cfg.n_azimuth, tan_elev, cfg.max_range, len(obj_ids))
    origins = np.array([[by_id[c].x, by_id[c].y] for c in cov_ids]).reshape(-1, 2)
    tboxes = boxes[[index[o] for o in obj_ids]] if obj_ids else np.zeros((0, 7))
    vis = object_los(origins, tboxes, boxes, [index[c] for c in cov_ids], [index[o] for o in obj_ids])
    if len(cov_ids) and len(obj_ids):
        dist = np.hypot(origins[:, None, 0] - tboxes[None, :, 0], origins[:, None, 1] - tboxes[None, :, 1])
        vis &= dist <= cfg.max_range
    vis |= counts > 0
    return FrameScan(list(cov_ids), list(obj_ids), counts, vis)


def scan(cov, frame, geom, cfg: LidarConfig = LidarConfig()) -> ScanResult:
    """Point counts per object for one CoV's LiDAR sweep."""
    if not cov.is_cov:
        raise ValueError(f"agent {cov.id} carries no LiDAR")
    return scan_frame(frame, geom, cfg, cov_ids=[cov.id]).result(cov.id)


# --------------------------------------------------------------------------
# prediction
# --------------------------------------------------------------------------


@dataclass
class PredictionState:
    history: dict = field(default_factory=dict)  # object id -> ((t, x, y), ...) newest last, at most 2
    predicted_los: dict = field(default_factory=dict)  # CoV id -> frozenset of object ids
    sizes: dict = field(default_factory=dict)  # object id -> (length, width, height, heading)

    def observe(self, t, detections):
        """Record detected object positions ``{id: (x, y)}`` seen at frame ``t``."""
        for oid, (x, y) in detections.items():
            h = self.history.get(oid, ())
            if h and h[-1][0] == t:
                h = h[:-1]
            self.history[oid] = (h + ((t, float(x), float(y)),))[-2:]

    def extrapolate(self, oid, t):
        h = self.history[oid]
        t1, x1, y1 = h[-1]
        if len(h) == 1:
            return x1, y1
        t0, x0, y0 = h[0]
        k = (t - t1) / (t1 - t0)
        return x1 + k * (x1 - x0), y1 + k * (y1 - y0)


def predict_los(state: PredictionState, frame, geom, detections=None, cov_ids=None,
                cfg: LidarConfig = LidarConfig(), max_age=50) -> PredictionState:
    """Predict which tracked objects each CoV will see at ``frame.t + 1``.

    ``detections`` maps the object ids detected at ``frame.t`` to their
    positions.  Objects are extrapolated linearly from their last two
    detections (held in place after a single one); CoVs move along their
    broadcast heading and speed.  Occluders are buildings plus the predicted
    CoV and object bodies.  Tracks of objects no longer in the frame, or not
    detected for ``max_age`` frames, are dropped.
    """
    if detections:
        state.observe(frame.t, detections)
    by_id = frame.by_id()
    for oid in list(state.history):
        if oid not in by_id or frame.t - state.history[oid][-1][0] > max_age:
            del state.history[oid]
    for oid in state.history:
        a = by_id[oid]
        state.sizes[oid] = (a.length, a.width, a.height, a.heading)
    state.sizes = {k: v for k, v in state.sizes.items() if k in state.history}

    if cov_ids is None:
        cov_ids = [a.id for a in frame.agents if a.is_cov]
    t1 = frame.t + 1
    covs = [by_id[c] for c in cov_ids]
    cov_pos = np.array([[c.x + c.speed * frame.dt * math.cos(c.heading), c.y + c.speed * frame.dt * math.sin(c.heading)] for c in covs]).reshape(-1, 2)
    tracked = sorted(state.history)
    obj_boxes = np.empty((len(tracked), 7))
    for k, oid in enumerate(tracked):
        x, y = state.extrapolate(oid, t1)
        ln, wd, ht, hd = state.sizes[oid]
        obj_boxes[k] = (x, y, 0.5 * ln, 0.5 * wd, math.cos(hd), math.sin(hd), ht)
    cov_boxes = agent_boxes(covs)
    cov_boxes[:, 0:2] = cov_pos
    nb = len(geom.building_boxes)
    occ = np.vstack([geom.building_boxes, cov_boxes, obj_boxes])
    vis = object_los(cov_pos, obj_boxes, occ, nb + np.arange(len(covs)), nb + len(covs) + np.arange(len(tracked)))
    if len(covs) and len(tracked):
        dist = np.hypot(cov_pos[:, None, 0] - obj_boxes[None, :, 0], cov_pos[:, None, 1] - obj_boxes[None, :, 1])
        vis &= dist <= cfg.max_range
    state.predicted_los = {
        c: frozenset(tracked[k] for k in np.flatnonzero(vis[r])) for r, c in enumerate(cov_ids)
    }
    return state
