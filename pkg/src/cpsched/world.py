"""Scene model: grid map, vehicle/pedestrian mobility, interest regions, traces."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

COV = "cov"
VEHICLE = "vehicle"
PEDESTRIAN = "pedestrian"
USER = "user"
KINDS = (COV, VEHICLE, PEDESTRIAN, USER)

# heading index -> unit vector; 0 east, 1 north, 2 west, 3 south
_DIRS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


@dataclass(frozen=True)
class Agent:
    id: int
    kind: str
    x: float
    y: float
    heading: float = 0.0
    speed: float = 0.0
    length: float = 4.5
    width: float = 1.8
    height: float = 1.7

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.speed < 0:
            raise ValueError(f"agent {self.id}: negative speed {self.speed}")

    @property
    def position(self):
        return np.array([self.x, self.y])

    @property
    def is_cov(self):
        """CoVs (and the distributed-mode user, itself a CoV) carry a LiDAR."""
        return self.kind in (COV, USER)

    @property
    def is_object(self):
        return self.kind in (VEHICLE, PEDESTRIAN)

    @property
    def is_vehicle(self):
        return self.kind != PEDESTRIAN


@dataclass(frozen=True)
class FrameState:
    t: int
    agents: tuple = ()
    dt: float = 0.1
    next_id: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("frame length must be positive")
        ids = [a.id for a in self.agents]
        if len(ids) != len(set(ids)):
            raise ValueError(f"frame {self.t}: duplicate agent ids")

    def by_id(self):
        return {a.id: a for a in self.agents}

    @property
    def covs(self):
        return [a for a in self.agents if a.is_cov]

    @property
    def objects(self):
        return [a for a in self.agents if a.is_object]

    @property
    def user(self):
        for a in self.agents:
            if a.kind == USER:
                return a
        return None


@dataclass(frozen=True)
class MapGeometry:
    """Manhattan grid of ``n_blocks x n_blocks`` building blocks.

    Street centerlines sit every ``block_side`` metres.  Each street has one
    lane per direction plus a thin margin; sidewalks run midway between the
    street edge and the building footprint.
    """

    n_blocks: int = 2
    block_side: float = 200.0
    lane_width: float = 3.5
    curb_margin: float = 0.5
    building_inset: float = 5.0
    building_height: float = 15.0
    margin: float = 30.0

    def __post_init__(self):
        if self.n_blocks < 1 or self.block_side <= 2 * self.street_half_width + 2 * self.building_inset:
            raise ValueError("blocks too small for the street cross-section")

    @property
    def street_half_width(self):
        return self.lane_width + self.curb_margin

    @property
    def sidewalk_offset(self):
        return self.street_half_width + 0.5 * self.building_inset

    @cached_property
    def street_coords(self):
        return self.block_side * np.arange(self.n_blocks + 1, dtype=float)

    @property
    def extent(self):
        return float(self.street_coords[-1])

    @property
    def bounds(self):
        lo, hi = -self.margin, self.extent + self.margin
        return (lo, lo, hi, hi)

    @property
    def center(self):
        return np.array([0.5 * self.extent, 0.5 * self.extent])

    @cached_property
    def buildings(self):
        """Building footprints ``(xmin, ymin, xmax, ymax)``, one per block."""
        off = self.street_half_width + self.building_inset
        s = self.street_coords
        return [
            (s[i] + off, s[j] + off, s[i + 1] - off, s[j + 1] - off)
            for i in range(self.n_blocks)
            for j in range(self.n_blocks)
        ]

    @cached_property
    def building_boxes(self):
        b = np.asarray(self.buildings, dtype=float).reshape(-1, 4)
        out = np.empty((len(b), 7))
        out[:, 0] = 0.5 * (b[:, 0] + b[:, 2])
        out[:, 1] = 0.5 * (b[:, 1] + b[:, 3])
        out[:, 2] = 0.5 * (b[:, 2] - b[:, 0])
        out[:, 3] = 0.5 * (b[:, 3] - b[:, 1])
        out[:, 4] = 1.0
        out[:, 5] = 0.0
        out[:, 6] = self.building_height
        return out

    @property
    def streets(self):
        """Lane polylines as ``((x0, y0), (x1, y1), lane_width)``."""
        lo, _, hi, _ = self.bounds
        o = 0.5 * self.lane_width
        lanes = []
        for s in self.street_coords:
            lanes += [((lo, s - o), (hi, s - o), self.lane_width), ((hi, s + o), (lo, s + o), self.lane_width)]
            lanes += [((s + o, lo), (s + o, hi), self.lane_width), ((s - o, hi), (s - o, lo), self.lane_width)]
        return lanes

    def lane_coord(self, street, direction):
        """Perpendicular coordinate of the lane driving ``direction`` on ``street``."""
        o = 0.5 * self.lane_width
        return street + (o if direction in (1, 2) else -o)

    def in_bounds(self, x, y):
        lo, _, hi, _ = self.bounds
        return lo <= x <= hi and lo <= y <= hi


@dataclass(frozen=True)
class MobilityConfig:
    n_vehicles: int = 60
    mpr: float = 0.5
    vehicle_speed: float = 50.0 / 3.6
    headway: float = 2.0
    standstill_gap: float = 2.0
    turn_probs: tuple = (0.5, 0.25, 0.25)  # straight, left, right
    pedestrian_speed: float = 1.2
    pedestrian_rate: float = 0.02
    initial_pedestrians: int = 30
    vehicle_size: tuple = (4.5, 1.8)
    pedestrian_size: tuple = (0.6, 0.6)
    object_height: float = 1.7

    def __post_init__(self):
        if not 0 <= self.mpr <= 1:
            raise ValueError("MPR must lie in [0, 1]")


# --------------------------------------------------------------------------
# mobility
# --------------------------------------------------------------------------


def _dir_index(heading):
    return int(round(heading / (0.5 * math.pi))) % 4


def _heading(d):
    return (0.0, 0.5 * math.pi, math.pi, -0.5 * math.pi)[d]


def _along(x, y, d):
    return x if d % 2 == 0 else y


def _ahead(coords, pos, d):
    """Turn coordinates strictly ahead of ``pos`` when travelling in ``d``, nearest first."""
    if d in (0, 1):
        return coords[coords > pos + 1e-9]
    return coords[coords < pos - 1e-9][::-1]


def _nearest(coords, v):
    return float(coords[np.argmin(np.abs(coords - v))])


def _advance(x, y, d, dist, geom, rng, pedestrian, may_exit, probs):
    """Move along the lane network, turning at crossings."""
    s = geom.street_coords
    if pedestrian:
        off = geom.sidewalk_offset
        crossings = np.sort(np.concatenate([s - off, s + off]))
    else:
        crossings = s
    remaining = dist
    while remaining > 0:
        pos = _along(x, y, d)
        nxt = _ahead(crossings, pos, d)
        if nxt.size == 0 or abs(nxt[0] - pos) > remaining:
            step = remaining * _DIRS[d]
            return x + step[0], y + step[1], d
        c = float(nxt[0])
        remaining -= abs(c - pos)
        if d % 2 == 0:
            x = c
        else:
            y = c
        options = [d, (d + 1) % 4, (d - 1) % 4]
        cur_perp = y if d % 2 == 0 else x
        viable = []
        for nd in options:
            if pedestrian:
                nperp, nalong = c, cur_perp
            else:
                street = _nearest(s, cur_perp)
                nperp, nalong = geom.lane_coord(c, nd), (street if nd != d else cur_perp)
            if not may_exit and _ahead(crossings, nalong, nd).size == 0:
                continue
            viable.append((nd, nperp, nalong))
        if not viable:  # dead end for a non-exiting agent: turn back
            nd = (d + 2) % 4
            street = _nearest(s, cur_perp)
            viable = [(nd, c if pedestrian else geom.lane_coord(c, nd), cur_perp if pedestrian else street)]
        wts = np.array([probs[options.index(v[0])] if v[0] in options else 1.0 for v in viable])
        k = int(rng.choice(len(viable), p=wts / wts.sum()))
        d, nperp, nalong = viable[k]
        if d % 2 == 0:
            x, y = nalong, nperp
        else:
            x, y = nperp, nalong
    return x, y, d


def _lane_key(a, geom):
    d = _dir_index(a.heading)
    perp = a.y if d % 2 == 0 else a.x
    return d, round(perp, 1)


def _vehicle_speeds(vehicles, geom, cfg):
    """Gap-keeping speed for each vehicle from its leader in the same lane."""
    speeds = {}
    lanes = {}
    for a in vehicles:
        lanes.setdefault(_lane_key(a, geom), []).append(a)
    for (d, _), members in lanes.items():
        sign = 1.0 if d in (0, 1) else -1.0
        members.sort(key=lambda a: sign * _along(a.x, a.y, d))
        for k, a in enumerate(members):
            if k + 1 < len(members):
                lead = members[k + 1]
                gap = sign * (_along(lead.x, lead.y, d) - _along(a.x, a.y, d)) - 0.5 * (a.length + lead.length)
                if gap < cfg.standstill_gap:
                    v = 0.0
                else:
                    v = min(cfg.vehicle_speed, (gap - cfg.standstill_gap) / cfg.headway)
            else:
                v = cfg.vehicle_speed
            speeds[a.id] = v
    return speeds


def _as_rng(seed, t):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng([int(seed), int(t)])


def _spawn_vehicle(frame_agents, geom, cfg, rng, next_id):
    """Try to enter one vehicle from a random stub; ``None`` when the entry is occupied."""
    s = geom.street_coords
    lo, _, hi, _ = geom.bounds
    street = float(s[rng.integers(len(s))])
    d = int(rng.integers(4))
    perp = geom.lane_coord(street, d)
    along = lo + 1.0 if d in (0, 1) else hi - 1.0
    x, y = (along, perp) if d % 2 == 0 else (perp, along)
    for a in frame_agents:
        if a.is_vehicle and math.hypot(a.x - x, a.y - y) < 20.0:
            return None
    kind = COV if rng.random() < cfg.mpr else VEHICLE
    length, width = cfg.vehicle_size
    return Agent(next_id, kind, x, y, _heading(d), cfg.vehicle_speed, length, width, cfg.object_height)


def _spawn_pedestrian(geom, cfg, rng, next_id):
    s = geom.street_coords
    off = geom.sidewalk_offset
    line = float(s[rng.integers(len(s))] + (off if rng.random() < 0.5 else -off))
    d = int(rng.integers(4))
    along = float(rng.uniform(0.0, geom.extent))
    x, y = (along, line) if d % 2 == 0 else (line, along)
    length, width = cfg.pedestrian_size
    return Agent(next_id, PEDESTRIAN, x, y, _heading(d), cfg.pedestrian_speed, length, width, cfg.object_height)


def step_mobility(frame: FrameState, geom: MapGeometry, seed, cfg: MobilityConfig = MobilityConfig()) -> FrameState:
    """Advance every agent by one frame.

    Deterministic in ``(frame, seed)``: an integer seed is combined with the
    frame index to derive the generator for this step.
    """
    rng = _as_rng(seed, frame.t)
    dt = frame.dt
    vehicles = [a for a in frame.agents if a.is_vehicle]
    speeds = _vehicle_speeds(vehicles, geom, cfg)
    moved = []
    for a in sorted(frame.agents, key=lambda a: a.id):
        v = speeds.get(a.id, a.speed)
        if v == 0.0:
            moved.append(replace(a, speed=0.0))
            continue
        ped = a.kind == PEDESTRIAN
        x, y, d = _advance(a.x, a.y, _dir_index(a.heading), v * dt, geom, rng, ped, a.kind != USER, cfg.turn_probs if not ped else (1.0, 1.0, 1.0))
        if not geom.in_bounds(x, y):
            continue
        moved.append(replace(a, x=float(x), y=float(y), heading=_heading(d), speed=float(v)))
    next_id = frame.next_id
    n_veh = sum(1 for a in moved if a.is_vehicle)
    for _ in range(max(0, cfg.n_vehicles - n_veh)):
        new = _spawn_vehicle(moved, geom, cfg, rng, next_id)
        if new is not None:
            moved.append(new)
            next_id += 1
    for _ in range(int(rng.poisson(cfg.pedestrian_rate * dt))):
        moved.append(_spawn_pedestrian(geom, cfg, rng, next_id))
        next_id += 1
    return FrameState(frame.t + 1, tuple(moved), dt, next_id)


def init_frame(geom: MapGeometry, cfg: MobilityConfig, seed, dt=0.1, with_user=False) -> FrameState:
    """Populate the map at ``t = 0``.

    With ``with_user`` the CoV nearest to the map centre is promoted to the
    distributed-mode user.
    """
    rng = np.random.default_rng([int(seed), 0x5EED])
    s = geom.street_coords
    length, width = cfg.vehicle_size
    agents = []
    tries = 0
    while len(agents) < cfg.n_vehicles and tries < 100 * cfg.n_vehicles:
        tries += 1
        street = float(s[rng.integers(len(s))])
        d = int(rng.integers(4))
        perp = geom.lane_coord(street, d)
        along = float(rng.uniform(0.0, geom.extent))
        x, y = (along, perp) if d % 2 == 0 else (perp, along)
        if any(math.hypot(a.x - x, a.y - y) < 15.0 for a in agents):
            continue
        kind = COV if rng.random() < cfg.mpr else VEHICLE
        agents.append(Agent(len(agents), kind, x, y, _heading(d), cfg.vehicle_speed, length, width, cfg.object_height))
    nid = len(agents)
    for _ in range(cfg.initial_pedestrians):
        agents.append(_spawn_pedestrian(geom, cfg, rng, nid))
        nid += 1
    if with_user:
        covs = [a for a in agents if a.kind == COV] or [a for a in agents if a.is_vehicle]
        if not covs:
            raise ValueError("distributed mode needs at least one vehicle")
        c = geom.center
        pick = min(covs, key=lambda a: (math.hypot(a.x - c[0], a.y - c[1]), a.id))
        agents = [replace(a, kind=USER) if a.id == pick.id else a for a in agents]
    return FrameState(0, tuple(agents), dt, nid)


def agent_boxes(agents) -> np.ndarray:
    """``(A, 7)`` box array (see :mod:`cpsched.kernels.geometry`) for agents."""
    out = np.empty((len(agents), 7))
    for k, a in enumerate(agents):
        out[k] = (a.x, a.y, 0.5 * a.length, 0.5 * a.width, math.cos(a.heading), math.sin(a.heading), a.height)
    return out


# --------------------------------------------------------------------------
# interest regions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InterestRegion:
    """Edge mode: a disc around a fixed anchor.  Distributed mode: a rectangle in the user's frame."""

    mode: str = "edge-circle"
    radius: float = 70.0
    half_length: float = 100.0
    half_width: float = 40.0
    anchor: tuple | None = None

    def __post_init__(self):
        if self.mode not in ("edge-circle", "distributed-rect"):
            raise ValueError(f"unknown interest mode {self.mode!r}")
        if self.mode == "edge-circle" and not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.mode == "distributed-rect" and not (self.half_length > 0 and self.half_width > 0):
            raise ValueError("half-extents must be positive")


def importance_weights(xy, region: InterestRegion, user_pose) -> np.ndarray:
    """Vectorised importance weights for points ``xy`` of shape ``(N, 2)``."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    ux, uy, uh = user_pose
    if region.mode == "edge-circle":
        ax, ay = region.anchor if region.anchor is not None else (ux, uy)
        return (np.hypot(xy[:, 0] - ax, xy[:, 1] - ay) <= region.radius).astype(float)
    dx, dy = xy[:, 0] - ux, xy[:, 1] - uy
    c, s = math.cos(uh), math.sin(uh)
    lon = dx * c + dy * s
    lat = -dx * s + dy * c
    r = np.hypot(lon / region.half_length, lat / region.half_width)
    with np.errstate(divide="ignore"):
        w = np.clip(-np.log10(r), 0.0, 1.0)
    inside = (np.abs(lon) <= region.half_length) & (np.abs(lat) <= region.half_width)
    return np.where(inside, w, 0.0)


def importance_weight(obj, region: InterestRegion, user_pose) -> float:
    """Importance weight in ``[0, 1]`` of one object."""
    return float(importance_weights([[obj.x, obj.y]], region, user_pose)[0])


# --------------------------------------------------------------------------
# trace ingestion
# --------------------------------------------------------------------------


class TraceError(ValueError):
    pass


_TRACE_FIELDS = ("t", "id", "kind", "x", "y", "heading", "speed")


def _parse_record(rec, lineno):
    try:
        missing = [k for k in _TRACE_FIELDS if k not in rec]
        if missing:
            raise TraceError(f"line {lineno}: missing fields {missing}")
        t = int(rec["t"])
        if float(rec["t"]) != t:
            raise TraceError(f"line {lineno}: frame index t must be an integer")
        extra = {k: float(rec[k]) for k in ("length", "width", "height") if rec.get(k) not in (None, "")}
        agent = Agent(
            id=int(rec["id"]),
            kind=str(rec["kind"]),
            x=float(rec["x"]),
            y=float(rec["y"]),
            heading=float(rec["heading"]),
            speed=float(rec["speed"]),
            **extra,
        )
    except TraceError:
        raise
    except (TypeError, ValueError) as exc:
        raise TraceError(f"line {lineno}: {exc}") from None
    if agent.kind == PEDESTRIAN and "length" not in extra:
        agent = replace(agent, length=0.6, width=0.6)
    return t, agent


def ingest_trace(path, format=None, dt=0.1) -> list:
    """Read a mobility trace (JSONL or CSV) into a list of frames.

    Records must appear in non-decreasing ``t`` and ``(t, id)`` must be unique.
    """
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    if fmt not in ("jsonl", "csv"):
        raise TraceError(f"unsupported trace format {fmt!r}")
    records = []
    with open(path, newline="") as fh:
        if fmt == "jsonl":
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise TraceError(f"line {lineno}: {exc.msg}") from None
                if not isinstance(rec, dict):
                    raise TraceError(f"line {lineno}: expected a JSON object")
                records.append((lineno, rec))
        else:
            reader = csv.DictReader(fh)
            for lineno, rec in enumerate(reader, start=2):
                records.append((lineno, rec))
    frames = []
    seen = set()
    last_t = None
    cur = []
    max_id = -1
    for lineno, rec in records:
        t, agent = _parse_record(rec, lineno)
        if last_t is not None and t < last_t:
            raise TraceError(f"line {lineno}: non-monotone t ({t} after {last_t})")
        if (t, agent.id) in seen:
            raise TraceError(f"line {lineno}: duplicate record for (t={t}, id={agent.id})")
        seen.add((t, agent.id))
        if last_t is not None and t != last_t:
            frames.append((last_t, cur))
            cur = []
        cur.append(agent)
        last_t = t
        max_id = max(max_id, agent.id)
    if cur:
        frames.append((last_t, cur))
    return [FrameState(t, tuple(ag), dt, max_id + 1) for t, ag in frames]


def write_trace(frames, path) -> None:
    """Dump frames as JSONL trace records (inverse of :func:`ingest_trace`)."""
    with open(path, "w") as fh:
        for f in frames:
            for a in f.agents:
                rec = {"t": f.t, "id": a.id, "kind": a.kind, "x": a.x, "y": a.y, "heading": a.heading, "speed": a.speed,
                       "length": a.length, "width": a.width, "height": a.height}
                fh.write(json.dumps(rec) + "\n")
