import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from cpsched.channel import (
    BITS_PER_MB,
    LOS,
    NLOS,
    NLOSV,
    ChannelParams,
    FeatureRequest,
    InfeasibleLink,
    LinkState,
    achievable_rate,
    blockage_loss,
    channel_gain,
    classify_links,
    disc_rect_area,
    feature_size,
    lens_area,
    min_bandwidth,
    pathloss_db,
    rate_ceiling,
)
from cpsched.world import InterestRegion

P = ChannelParams()

# E[max{0, X}] for X ~ N(5, 4^2), from quadrature (closed form 5*Phi(1.25) + 4*phi(1.25))
BLOCKAGE_MEAN_DB = 5.2023


def gain_for_snr_product(s):
    """Gain that makes ``P c / n0`` equal to ``s`` Hz."""
    return s * P.noise_w_per_hz / P.tx_power_w


def bisect_bandwidth(s, need):
    """Plain bisection oracle for ``B log2(1 + s/B) = need``."""
    lo, hi = 0.0, 1.0
    while hi * math.log2(1 + s / hi) < need:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.log2(1 + s / mid) < need:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_blockage_quadrature_oracle():
    val, _ = integrate.quad(lambda x: x * stats.norm.pdf(x, 5, 4), 0, np.inf)
    assert val == pytest.approx(BLOCKAGE_MEAN_DB, abs=1e-4)


def test_blockage_sample_mean():
    draws = blockage_loss(100_000, P, np.random.default_rng(7))
    assert draws.min() >= 0
    se = draws.std() / math.sqrt(len(draws))
    assert abs(draws.mean() - BLOCKAGE_MEAN_DB) < 4 * se


def test_nominal_gain_regression():
    pl = 38.77 + 16.7 * math.log10(50) + 18.2 * math.log10(5.9)
    assert channel_gain(LOS, 0, 50.0) == pytest.approx(10 ** (-pl / 10), rel=1e-12)
    assert channel_gain(NLOSV, 2, 50.0) == pytest.approx(10 ** (-(pl + 10) / 10), rel=1e-12)


@pytest.mark.parametrize("cls, exponent", [(LOS, 1.67), (NLOS, 3.0)])
def test_doubling_distance(cls, exponent):
    drop = pathloss_db(cls, 80.0, 5.9) - pathloss_db(cls, 40.0, 5.9)
    assert drop == pytest.approx(10 * exponent * math.log10(2), rel=1e-12)


def test_gain_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        channel_gain(LOS, 0, 0.0)


def test_random_gain_is_reproducible_and_fading_unit_mean():
    g1 = channel_gain(LOS, 0, 30.0, P, np.random.default_rng(1))
    g2 = channel_gain(LOS, 0, 30.0, P, np.random.default_rng(1))
    assert g1 == g2
    nominal = channel_gain(LOS, 0, 30.0)
    p = ChannelParams(shadowing=False)
    rng = np.random.default_rng(2)
    for cls in (LOS, NLOS):
        nom = channel_gain(cls, 0, 30.0)
        ratio = np.array([channel_gain(cls, 0, 30.0, p, rng) for _ in range(20_000)]) / nom
        assert ratio.mean() == pytest.approx(1.0, abs=0.03)
    assert nominal > 0


def test_rate_hand_values():
    g = gain_for_snr_product(1e6)
    assert achievable_rate(0.0, g) == 0.0
    assert achievable_rate(1e6, g) == pytest.approx(1e6, rel=1e-12)
    assert achievable_rate(1e12, g) == pytest.approx(rate_ceiling(g), rel=1e-3)


def test_min_bandwidth_regression_constant():
    # B log2(1 + 1e7/B) = 1e7 has the root B = 1e7 (x log2(1 + 1/x) = 1 at x = 1)
    g = gain_for_snr_product(1e7)
    B = min_bandwidth(1e6, g, P, dt=0.1)
    assert B == pytest.approx(bisect_bandwidth(1e7, 1e7), rel=1e-9)
    assert B == pytest.approx(1e7, rel=1e-9)


def test_min_bandwidth_accepts_request_objects():
    g = gain_for_snr_product(1e7)
    assert min_bandwidth(FeatureRequest(3, 1e6), g) == pytest.approx(min_bandwidth(1e6, g))
    assert min_bandwidth(0.0, g) == 0.0


def test_min_bandwidth_infeasible():
    g = gain_for_snr_product(1e7)
    need = 1.01 * rate_ceiling(g)
    with pytest.raises(InfeasibleLink):
        min_bandwidth(need * 0.1, g, P, dt=0.1)
    with pytest.raises(InfeasibleLink):
        min_bandwidth(1.0, g, P, dt=0.1, distance=150.5)
    with pytest.raises(ValueError):
        min_bandwidth(1.0, g, P, dt=0.0)


@given(st.floats(-12, -8), st.floats(0.05, 0.9), st.floats(1.01, 3.0))
def test_min_bandwidth_monotone(log_gain, frac, more):
    g = 10**log_gain
    size = frac * rate_ceiling(g) * 0.1
    B = min_bandwidth(size, g)
    assert achievable_rate(B, g) * 0.1 == pytest.approx(size, rel=1e-6)
    if frac * more < 0.99:
        assert min_bandwidth(size * more, g) >= B
    assert min_bandwidth(size, g * more) <= B


def test_lens_area_unit_discs():
    assert lens_area(1.0, 1.0, 1.0) == pytest.approx(2 * math.pi / 3 - math.sqrt(3) / 2, rel=1e-12)
    assert lens_area(1.0, 2.0, 0.5) == pytest.approx(math.pi)
    assert lens_area(1.0, 1.0, 2.0) == 0.0


def test_disc_rect_area():
    assert disc_rect_area(0, 0, 30, 0, 0, 0.7, 100, 40) == pytest.approx(math.pi * 900, rel=1e-4)
    # half disc: centre on a long edge of a large rectangle
    assert disc_rect_area(0, 40, 10, 0, 0, 0.0, 100, 40) == pytest.approx(math.pi * 50, rel=1e-4)
    assert disc_rect_area(500, 0, 100, 0, 0, 0.0, 100, 40) == 0.0


@pytest.mark.parametrize("area, mb", [(16000.0, 0.2), (8000.0, 0.1)])
def test_feature_size_proportional(area, mb):
    r = math.sqrt(area / math.pi)
    region = InterestRegion("edge-circle", radius=r, anchor=(0.0, 0.0))
    bits = feature_size((0.0, 0.0), region, (0.0, 0.0, 0.0))
    assert bits == pytest.approx(mb * 8 * 2**20, rel=1e-12)
    assert BITS_PER_MB == 8 * 1_048_576


def test_feature_size_empty_and_floor():
    region = InterestRegion("edge-circle", radius=10.0, anchor=(0.0, 0.0))
    assert feature_size((500.0, 0.0), region, (0, 0, 0)) == 0.0
    # a sliver of overlap is charged the floor
    assert feature_size((109.9, 0.0), region, (0, 0, 0)) == pytest.approx(0.01 * BITS_PER_MB)


def test_classification_precedence():
    building = np.array([[50.0, 0.0, 5.0, 5.0, 1.0, 0.0, 15.0]])
    car = lambda x, y: [x, y, 2.25, 0.9, 1.0, 0.0, 1.7]  # noqa: E731
    vehicles = np.array([car(20.0, 0.0), car(70.0, 0.0), car(0.0, 30.0)])
    cls, nb = classify_links(
        [(0.0, 10.0), (0.0, 0.0), (0.0, 0.0)],
        [(100.0, 10.0), (30.0, 0.0), (100.0, 0.0)],
        building, vehicles,
    )
    assert list(cls) == [LOS, NLOSV, NLOS]
    assert list(nb) == [0, 1, 2]


def test_link_state_invariants():
    LinkState(NLOSV, 1, 1e-9)
    with pytest.raises(ValueError):
        LinkState(NLOSV, 0, 1e-9)
    with pytest.raises(ValueError):
        LinkState(LOS, 0, 0.0)
    with pytest.raises(ValueError):
        LinkState("LOS?", 0, 1.0)
