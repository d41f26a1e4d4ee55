'''
    Testes de two-way ranging e trilateração.
'''
import numpy as np
import pytest
from numpy.testing import assert_allclose

from localization.ranging import (SPEED_OF_LIGHT, AnchorRegistry, RangeExchange, RangeMeasurement, RefKind,
                                  TrilaterationMode, TwrEndpoint, distance_from_tof, measured_distance,
                                  perform_twr, select_mode, synthesize_exchange,
                                  tof_from_exchange, trilaterate)
from protocols.clocksync import HardwareClock
from simulation.engine import Medium
from simulation.errors import DegenerateGeometry, NegativeToF, RangingTimeout

UNIT_SQUARE = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (1.0, 1.0, 0.0), (0.0, 1.0, 0.0)]


def exact_ranges(anchors, target):
    return [(a, float(np.linalg.norm(np.subtract(a, target)))) for a in anchors]


def test_zero_propagation():
    assert tof_from_exchange(RangeExchange(t_round=300.0, t_reply=300.0)) == 0.0


def test_half_difference():
    assert_allclose(tof_from_exchange(RangeExchange(t_round=1_000.0, t_reply=800.0)), 100e-6)


def test_negative_tof():
    with pytest.raises(NegativeToF):
        tof_from_exchange(RangeExchange(t_round=500.0, t_reply=600.0))


def test_distance_from_tof():
    assert distance_from_tof(0.0) == 0.0
    assert abs(distance_from_tof(33.356e-9) - 10.0) < 1e-3
    assert_allclose(distance_from_tof(1.0), SPEED_OF_LIGHT)


def test_exchange_round_trip_recovers_distance():
    exchange = synthesize_exchange(5.0, 300.0, HardwareClock(), HardwareClock())
    assert_allclose(measured_distance(exchange), 5.0, atol=1e-6)


def test_clock_offsets_cancel():
    reference = measured_distance(synthesize_exchange(7.0, 300.0, HardwareClock(), HardwareClock()))
    shifted = measured_distance(synthesize_exchange(
        7.0, 300.0, HardwareClock(offset_phi=12_345.0), HardwareClock(offset_phi=-9_876.0), poll_sent_at=5_000.0))
    assert_allclose(shifted, reference, atol=1e-6)


def test_skew_bias_is_half_the_reply_drift():
    epsilon, reply = 50e-6, 300.0
    exchange = synthesize_exchange(0.0, reply, HardwareClock(rate=1 + epsilon), HardwareClock())
    assert abs(tof_from_exchange(exchange) - epsilon * reply / 2 * 1e-6) < 1e-12


def test_noiseless_measurement_is_exact():
    exchange = synthesize_exchange(3.0, 300.0, HardwareClock(), HardwareClock())
    assert_allclose(measured_distance(exchange, np.random.default_rng(0), sigma_d=0.0), 3.0, atol=1e-6)


def test_measurement_never_negative():
    exchange = synthesize_exchange(0.0, 300.0, HardwareClock(), HardwareClock())
    rng = np.random.default_rng(5)
    assert all(measured_distance(exchange, rng, sigma_d=1.0) >= 0.0 for _ in range(200))


def test_perform_twr_statistics():
    medium = Medium(comm_range=10.0)
    rng = np.random.default_rng(2)
    tag = TwrEndpoint(1, (0.0, 0.0, 0.0))
    anchor = TwrEndpoint(2, (3.0, 0.0, 0.0))
    samples = np.array([perform_twr(tag, anchor, medium, rng, sigma_d=0.05).distance for _ in range(10_000)])
    assert abs(samples.mean() - 3.0) < 0.0015
    assert 0.048 <= samples.std(ddof=1) <= 0.052


def test_perform_twr_carries_reference():
    medium = Medium(comm_range=10.0)
    neighbor = TwrEndpoint(9, (0.0, 4.0, 0.0), kind=RefKind.NEIGHBOR, confidence=1.5)
    m = perform_twr(TwrEndpoint(1, (0.0, 0.0, 0.0)), neighbor, medium, np.random.default_rng(0),
                    now=77, sigma_d=0.0)
    assert m.ref_id == 9
    assert m.ref_kind == RefKind.NEIGHBOR
    assert m.ref_confidence == 1.5
    assert m.taken_at == 77
    assert_allclose(m.distance, 4.0, atol=1e-6)


def test_perform_twr_reports_advertised_neighbor_position():
    medium = Medium(comm_range=10.0)
    neighbor = TwrEndpoint(9, (0.0, 4.0, 0.0), kind=RefKind.NEIGHBOR, confidence=0.5, advertised=(0.1, 3.9, 0.0))
    m = perform_twr(TwrEndpoint(1, (0.0, 0.0, 0.0)), neighbor, medium, np.random.default_rng(0), sigma_d=0.0)
    assert m.ref_position == (0.1, 3.9, 0.0)
    assert_allclose(m.distance, 4.0, atol=1e-6)


def test_perform_twr_uses_reply_stamped_by_responder():
    medium = Medium(comm_range=10.0)
    tag, anchor = TwrEndpoint(1, (0.0, 0.0, 0.0)), TwrEndpoint(2, (3.0, 0.0, 0.0))
    m = perform_twr(tag, anchor, medium, np.random.default_rng(0), sigma_d=0.0, reply_latency_us=300.0,
                    t_reply_us=300.0 - 2 * 1e6 / SPEED_OF_LIGHT)
    assert_allclose(m.distance, 4.0, atol=1e-6)


def test_perform_twr_timeout():
    medium = Medium(comm_range=10.0)
    tag, far = TwrEndpoint(1, (0.0, 0.0, 0.0)), TwrEndpoint(2, (11.0, 0.0, 0.0))
    with pytest.raises(RangingTimeout):
        perform_twr(tag, far, medium, np.random.default_rng(0))
    with pytest.raises(RangingTimeout):
        perform_twr(tag, TwrEndpoint(3, (1.0, 0.0, 0.0)), medium, np.random.default_rng(0), link_ok=False)


def test_range_measurement_validation():
    with pytest.raises(ValueError):
        RangeMeasurement(-1.0, 1, (0.0, 0.0, 0.0), RefKind.ANCHOR, 0)
    with pytest.raises(ValueError):
        RangeMeasurement(1.0, 1, (0.0, 0.0, 0.0), RefKind.ANCHOR, 0, ref_confidence=2.0)


def test_anchor_registry_is_read_only():
    registry = AnchorRegistry({3: [1, 2, 3], 1: (0, 0, 2.5)})
    assert registry.ids() == [1, 3]
    assert registry.position(3) == (1.0, 2.0, 3.0)
    with pytest.raises(TypeError):
        registry._anchors[1] = (9.0, 9.0, 9.0)


def test_select_mode():
    coplanar = [(0, 0, 2.5), (10, 0, 2.5), (10, 10, 2.5), (0, 10, 2.5)]
    spatial = [(0, 0, 0), (10, 0, 0), (0, 10, 0), (0, 0, 5)]
    assert select_mode(coplanar) == TrilaterationMode.TWO_D
    assert select_mode(spatial) == TrilaterationMode.THREE_D
    assert select_mode(coplanar[:2]) is None
    assert select_mode([(0, 0, 0), (1, 1, 0), (2, 2, 0)]) is None


def test_unit_square_2d():
    estimate = trilaterate(exact_ranges(UNIT_SQUARE, (0.5, 0.5, 0.0)), TrilaterationMode.TWO_D,
                           initial_guess=(0.3, 0.8, 0.0))
    assert_allclose(estimate, [0.5, 0.5, 0.0], atol=1e-9)


def test_2d_keeps_guess_height():
    anchors = [(0.0, 0.0, 2.5), (10.0, 0.0, 2.5), (10.0, 10.0, 2.5), (0.0, 10.0, 2.5)]
    target = (3.0, 4.0, 1.0)
    estimate = trilaterate(exact_ranges(anchors, target), TrilaterationMode.TWO_D, initial_guess=(5.0, 5.0, 1.0))
    assert_allclose(estimate, target, atol=1e-6)


def test_collinear_anchors_are_degenerate():
    collinear = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (2.0, 0.0, 0.0)]
    with pytest.raises(DegenerateGeometry):
        trilaterate(exact_ranges(collinear, (1.0, 1.0, 0.0)), TrilaterationMode.TWO_D, (0.5, 0.5, 0.0))


def test_too_few_anchors_for_3d():
    with pytest.raises(DegenerateGeometry):
        trilaterate(exact_ranges(UNIT_SQUARE[:3], (0.5, 0.5, 0.0)), TrilaterationMode.THREE_D, (0.0, 0.0, 0.0))


def test_3d_recovers_target():
    anchors = [(0.0, 0.0, 0.0), (10.0, 0.0, 0.0), (0.0, 10.0, 0.0), (0.0, 0.0, 5.0), (10.0, 10.0, 5.0)]
    target = (3.0, 4.0, 1.5)
    estimate = trilaterate(exact_ranges(anchors, target), TrilaterationMode.THREE_D, initial_guess=(5.0, 5.0, 2.0))
    assert_allclose(estimate, target, atol=1e-9)


def test_noisy_scatter_stays_near_range_noise():
    rng = np.random.default_rng(4)
    anchors = [(0.0, 0.0, 2.5), (10.0, 0.0, 2.5), (10.0, 10.0, 2.5), (0.0, 10.0, 2.5)]
    target = np.array([4.0, 6.0, 1.0])
    sigma = 0.05
    estimates = []
    for _ in range(1_000):
        noisy = [(a, d + rng.normal(0.0, sigma)) for a, d in exact_ranges(anchors, target)]
        estimates.append(trilaterate(noisy, TrilaterationMode.TWO_D, initial_guess=(5.0, 5.0, 1.0)))
    estimates = np.array(estimates)
    assert_allclose(estimates.mean(axis=0), target, atol=0.01)
    assert np.all(estimates[:, :2].std(axis=0) < 2 * sigma)
