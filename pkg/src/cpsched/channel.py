"""V2X sidelink link model and the per-CoV bandwidth cost.

Pathloss follows the urban V2V formulas of 3GPP TR 37.885 (``fc`` in GHz,
distance in metres).  Vehicle-blocked links (NLOSv) use the LOS pathloss plus a
random per-blocker attenuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .kernels.geometry import segment_hits

LOS = "LOS"
NLOSV = "NLOSv"
NLOS = "NLOS"
LINK_CLASSES = (LOS, NLOSV, NLOS)

BITS_PER_MB = 8 * 2**20


class InfeasibleLink(ValueError):
    """The requested feature cannot be delivered within one frame on this link."""


@dataclass(frozen=True)
class ChannelParams:
    carrier_frequency: float = 5.9  # GHz
    tx_power: float = 23.0  # dBm
    noise_psd: float = -174.0  # dBm/Hz
    noise_figure: float = 9.0  # dB
    shadowing_std: dict = field(default_factory=lambda: {LOS: 3.0, NLOSV: 3.0, NLOS: 4.0})  # dB
    blockage_mean: float = 5.0  # dB per blocking vehicle
    blockage_std: float = 4.0  # dB
    rician_k: float = 9.0  # dB
    max_comm_distance: float = 150.0  # m
    min_distance: float = 1.0  # m, pathloss clamp
    shadowing: bool = True
    fading: bool = True
    feature_mb: float = 0.2  # MB for the reference area
    feature_area: float = 200.0 * 80.0  # m^2
    feature_floor_mb: float = 0.01
    sensing_radius: float = 100.0  # m

    def __post_init__(self):
        for name in ("carrier_frequency", "tx_power", "noise_psd", "noise_figure"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if any(s < 0 for s in self.shadowing_std.values()) or self.blockage_std < 0:
            raise ValueError("standard deviations must be >= 0")
        if not self.carrier_frequency > 0 or not self.max_comm_distance > 0:
            raise ValueError("carrier frequency and range must be positive")

    @property
    def tx_power_w(self):
        return 10 ** ((self.tx_power - 30.0) / 10.0)

    @property
    def noise_w_per_hz(self):
        """Noise PSD in W/Hz with the receiver noise figure folded in."""
        return 10 ** ((self.noise_psd + self.noise_figure - 30.0) / 10.0)

    def snr_bandwidth(self, gain):
        """``P c / n0`` in Hz: the SNR-bandwidth product of a link with power gain ``gain``."""
        return self.tx_power_w * gain / self.noise_w_per_hz


@dataclass(frozen=True)
class LinkState:
    cls: str
    n_blockers: int = 0
    gain_linear: float = 1.0

    def __post_init__(self):
        if self.cls not in LINK_CLASSES:
            raise ValueError(f"unknown link class {self.cls!r}")
        if not self.gain_linear > 0:
            raise ValueError("gain must be positive")
        if self.cls == NLOSV and self.n_blockers < 1:
            raise ValueError("NLOSv needs at least one blocker")


@dataclass(frozen=True)
class FeatureRequest:
    cov_id: int
    size_bits: float

    def __post_init__(self):
        if self.size_bits < 0:
            raise ValueError("feature size must be >= 0")


# --------------------------------------------------------------------------
# link classification
# --------------------------------------------------------------------------


def classify_links(src, dst, building_boxes, vehicle_boxes, skip_src=None, skip_dst=None):
    """Vectorised link classification for segments ``src[k] -> dst[k]``.

    ``skip_src``/``skip_dst`` give the row of ``vehicle_boxes`` belonging to
    each endpoint (``-1`` for none).  Returns ``(classes, n_blockers)``.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    seg = np.ascontiguousarray(np.hstack([src, dst]))
    ns = seg.shape[0]
    none = np.full(ns, -1, dtype=np.int64)
    skip_src = none if skip_src is None else np.asarray(skip_src, dtype=np.int64)
    skip_dst = none if skip_dst is None else np.asarray(skip_dst, dtype=np.int64)
    bb = np.ascontiguousarray(np.asarray(building_boxes, dtype=float).reshape(-1, 7))
    vb = np.ascontiguousarray(np.asarray(vehicle_boxes, dtype=float).reshape(-1, 7))
    by_building = segment_hits(seg, bb, none, none).any(axis=1)
    n_veh = segment_hits(seg, vb, skip_src, skip_dst).sum(axis=1)
    classes = np.where(by_building, NLOS, np.where(n_veh > 0, NLOSV, LOS))
    return classes, n_veh.astype(int)


def classify_link(a, b, frame, geom):
    """Link class and vehicle-blocker count between two agents (or points).

    A building on the segment makes the link NLOS regardless of vehicles.
    """
    from .world import agent_boxes

    def pos(p):
        return (p.x, p.y) if hasattr(p, "x") else tuple(p)

    vehicles = [ag for ag in frame.agents if ag.is_vehicle]
    ids = [ag.id for ag in vehicles]
    skip_a = ids.index(a.id) if hasattr(a, "id") and a.id in ids else -1
    skip_b = ids.index(b.id) if hasattr(b, "id") and b.id in ids else -1
    cls, nb = classify_links([pos(a)], [pos(b)], geom.building_boxes, agent_boxes(vehicles), [skip_a], [skip_b])
    return str(cls[0]), int(nb[0])


# --------------------------------------------------------------------------
# gain and rate
# --------------------------------------------------------------------------


def pathloss_db(cls, distance, fc):
    """Urban V2V pathloss in dB (blockage of NLOSv links excluded)."""
    lg = math.log10(distance)
    if cls == NLOS:
        return 36.85 + 30.0 * lg + 18.9 * math.log10(fc)
    return 38.77 + 16.7 * lg + 18.2 * math.log10(fc)


def _rician_power(k_db, rng):
    k = 10 ** (k_db / 10.0)
    re, im = rng.standard_normal(2) * math.sqrt(0.5 / (k + 1.0))
    return (math.sqrt(k / (k + 1.0)) + re) ** 2 + im**2


def blockage_loss(n_blockers, params: ChannelParams = ChannelParams(), rng=None):
    """Per-blocker vehicle losses in dB, each ``max{0, N(mean, std)}``.

    Without ``rng`` every blocker takes ``blockage_mean``.
    """
    if rng is None:
        return np.full(n_blockers, params.blockage_mean)
    return np.maximum(rng.normal(params.blockage_mean, params.blockage_std, n_blockers), 0.0)


def channel_gain(cls, n_blockers, distance, params: ChannelParams = ChannelParams(), rng=None) -> float:
    """Linear power gain ``c`` of one link in one frame.

    With ``rng=None`` every random term is replaced by its nominal value
    (no shadowing, blockers at their mean loss, no fast fading).
    """
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance}")
    d = max(distance, params.min_distance)
    loss = pathloss_db(cls, d, params.carrier_frequency)
    if cls == NLOSV and n_blockers:
        loss += float(blockage_loss(n_blockers, params, rng).sum())
    if rng is not None and params.shadowing:
        loss += rng.normal(0.0, params.shadowing_std[cls])
    gain = 10 ** (-loss / 10.0)
    if rng is not None and params.fading:
        gain *= rng.exponential(1.0) if cls == NLOS else _rician_power(params.rician_k, rng)
    return float(gain)


def achievable_rate(bandwidth, gain, params: ChannelParams = ChannelParams()) -> float:
    """Shannon rate ``W log2(1 + P c / (n0 W))`` in bit/s."""
    if bandwidth < 0:
        raise ValueError("bandwidth must be >= 0")
    if bandwidth == 0:
        return 0.0
    return float(bandwidth * math.log1p(params.snr_bandwidth(gain) / bandwidth) / math.log(2.0))


def rate_ceiling(gain, params: ChannelParams = ChannelParams()) -> float:
    """Infinite-bandwidth limit ``P c / (n0 ln 2)``."""
    return params.snr_bandwidth(gain) / math.log(2.0)


def min_bandwidth(request, gain, params: ChannelParams = ChannelParams(), dt=0.1, distance=None) -> float:
    """Smallest bandwidth (Hz) delivering ``request`` within one frame of length ``dt``.

    Raises :class:`InfeasibleLink` beyond the communication range or when the
    required rate reaches the infinite-bandwidth ceiling.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    size = request.size_bits if isinstance(request, FeatureRequest) else float(request)
    if distance is not None and distance > params.max_comm_distance:
        raise InfeasibleLink(f"distance {distance:.1f} m beyond {params.max_comm_distance} m")
    if size == 0:
        return 0.0
    need = size / dt
    if need >= rate_ceiling(gain, params):
        raise InfeasibleLink(f"required rate {need:.4g} bit/s at or above the capacity ceiling")
    hi = need
    while achievable_rate(hi, gain, params) < need:
        hi *= 2.0
    lo = hi / 2.0 if hi > need else 0.0
    return float(brentq(lambda b: achievable_rate(b, gain, params) - need, lo, hi, xtol=1e-12, rtol=1e-14, maxiter=500))


# --------------------------------------------------------------------------
# feature size
# --------------------------------------------------------------------------


def lens_area(r1, r2, d) -> float:
    """Area of the intersection of two discs of radii ``r1``, ``r2`` at centre distance ``d``."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    a1 = r1 * r1 * math.acos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1))
    a2 = r2 * r2 * math.acos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2))
    k = 0.5 * math.sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
    return a1 + a2 - k


def disc_rect_area(cx, cy, r, ux, uy, heading, half_length, half_width) -> float:
    """Area of a disc intersected with a rectangle centred at ``(ux, uy)`` rotated by ``heading``."""
    from shapely.geometry import Point, box

    # work in the rectangle's frame so the rectangle stays axis aligned
    dx, dy = cx - ux, cy - uy
    c, s = math.cos(heading), math.sin(heading)
    lx, ly = dx * c + dy * s, -dx * s + dy * c
    if abs(lx) - r >= half_length or abs(ly) - r >= half_width:
        return 0.0
    disc = Point(lx, ly).buffer(r, quad_segs=256)
    return float(disc.intersection(box(-half_length, -half_width, half_length, half_width)).area)


def coverage_area(cov_xy, region, user_pose, radius=100.0) -> float:
    """Area (m^2) of the CoV's sensing disc inside the requested interest region."""
    cx, cy = cov_xy
    if region.mode == "edge-circle":
        ax, ay = region.anchor if region.anchor is not None else user_pose[:2]
        return lens_area(radius, region.radius, math.hypot(cx - ax, cy - ay))
    ux, uy, uh = user_pose
    return disc_rect_area(cx, cy, radius, ux, uy, uh, region.half_length, region.half_width)


def feature_size(cov, region, user_pose, params: ChannelParams = ChannelParams()) -> float:
    """BEV feature size in bits, proportional to the covered part of the interest region."""
    xy = (cov.x, cov.y) if hasattr(cov, "x") else tuple(cov)
    area = coverage_area(xy, region, user_pose, params.sensing_radius)
    if area <= 0:
        return 0.0
    mb = max(params.feature_mb * area / params.feature_area, params.feature_floor_mb)
    return mb * BITS_PER_MB
