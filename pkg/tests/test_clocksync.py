'''
    Testes do relógio lógico e do protocolo de sincronização.
'''
import numpy as np
import pytest
from numpy.testing import assert_allclose

from protocols.clocksync import (HardwareClock, LogicalClock, NeighborClockTable, NodeClock, SyncAction,
                                 average_neighbor_offset, compute_offset_update, is_synchronized,
                                 sync_phase_action)


@pytest.mark.parametrize("rate, offset, t, expected", [
    (1.0, 0.0, 1_000, 1_000),
    (1 + 50e-6, 0.0, 1_000_000, 1_000_050),
    (1.0, -300.0, 1_000, 700),
])
def test_hardware_clock(rate, offset, t, expected):
    assert_allclose(HardwareClock(rate, offset).read(t), expected, atol=1e-6)


def test_logical_clock_without_offset_equals_hardware():
    clock = NodeClock(HardwareClock(1 + 20e-6, 42.0))
    assert clock.read_logical(12_345) == clock.read_hardware(12_345)


def test_logical_clock_adds_theta():
    clock = NodeClock(HardwareClock(1.0, -300.0), LogicalClock(theta=300.0))
    assert clock.read_hardware(1_000) == 700
    assert clock.read_logical(1_000) == 1_000


def test_apply_offset_update_is_additive():
    clock = NodeClock(HardwareClock())
    clock.apply_offset_update(250.0)
    clock.apply_offset_update(-50.0)
    assert clock.logical.theta == 200.0
    assert clock.hardware.offset_phi == 0.0


def test_true_time_of_inverts_logical_clock():
    clock = NodeClock(HardwareClock(1 + 50e-6, 1_234.0), LogicalClock(theta=-567.0))
    for target in (0.0, 10_000.0, 1_000_000.0):
        t = clock.true_time_of(target)
        assert clock.read_logical(t) >= target - 1e-6
        assert clock.read_logical(t - 1) < target


def test_empty_table_gives_zero_update():
    assert compute_offset_update(NeighborClockTable(ttl=1e9), own_L=0.0, delta=300.0) == 0.0


def test_one_neighbor_halves_the_offset():
    table = NeighborClockTable(ttl=1e9)
    table.record(2, logical_time=9_700.0, local_receive=0.0)
    assert compute_offset_update(table, own_L=0.0, delta=300.0) == 5_000.0


def test_symmetric_offsets_cancel():
    table = NeighborClockTable(ttl=1e9)
    for neighbor, offset in ((2, 4_000.0), (3, 0.0), (4, -4_000.0)):
        table.record(neighbor, logical_time=100.0 + offset, local_receive=100.0)
    assert compute_offset_update(table, own_L=100.0, delta=0.0) == 0.0


def test_later_syn_replaces_earlier_entry():
    table = NeighborClockTable(ttl=1e9)
    table.record(2, logical_time=500.0, local_receive=0.0)
    table.record(2, logical_time=1_000.0, local_receive=1_000.0)
    assert len(table) == 1
    assert compute_offset_update(table, own_L=1_000.0, delta=0.0) == 0.0


def test_stale_entries_are_collected():
    table = NeighborClockTable(ttl=1_000)
    table.record(2, logical_time=0.0, local_receive=0.0)
    assert table.entries(now=5_000) == []


def test_sync_phase_action_extremes():
    rng = np.random.default_rng(0)
    assert all(sync_phase_action(rng, 0.0) == SyncAction.LISTEN for _ in range(100))
    assert all(sync_phase_action(rng, 1.0) == SyncAction.BROADCAST for _ in range(100))


def test_sync_phase_action_binomial_fraction():
    rng = np.random.default_rng(1)
    draws = [sync_phase_action(rng, 0.2) for _ in range(10_000)]
    fraction = sum(d == SyncAction.BROADCAST for d in draws) / len(draws)
    assert 0.18 <= fraction <= 0.22


def test_sync_phase_action_rejects_bad_probability():
    with pytest.raises(ValueError):
        sync_phase_action(np.random.default_rng(0), 1.5)


def _table_with_offset(offset):
    table = NeighborClockTable(ttl=1e9)
    table.record(2, logical_time=offset * 2, local_receive=0.0)
    return table


def test_is_synchronized_small_update():
    assert is_synchronized(_table_with_offset(100.0), 0.0, threshold=5_000, timed_out=False)


def test_is_synchronized_large_update():
    assert not is_synchronized(_table_with_offset(6_000.0), 0.0, threshold=5_000, timed_out=False)


def test_is_synchronized_timeout_wins():
    assert is_synchronized(_table_with_offset(1e7), 0.0, threshold=5_000, timed_out=True)


def test_pair_meets_in_the_middle():
    # dois nós trocando SYN sem atraso: cada um anda metade do desvio
    clocks = {1: NodeClock(HardwareClock(1.0, 0.0)), 2: NodeClock(HardwareClock(1.0, 8_000.0))}
    gaps = []
    for t in range(0, 10_000, 1_000):
        readings = {i: clock.read_logical(t) for i, clock in clocks.items()}
        gaps.append(abs(readings[2] - readings[1]))
        updates = {}
        for i, j in ((1, 2), (2, 1)):
            table = NeighborClockTable(ttl=1e9)
            table.record(j, readings[j], readings[i])
            updates[i] = compute_offset_update(table, readings[i], delta=0.0)
        for i, update in updates.items():
            clocks[i].apply_offset_update(update)
    assert gaps[0] == 8_000.0
    assert gaps[1] == 0.0


def test_clique_contracts_to_consensus():
    rng = np.random.default_rng(3)
    offsets = rng.uniform(-20_000, 20_000, size=7)
    clocks = [NodeClock(HardwareClock(1.0, float(phi))) for phi in offsets]
    spread_before = np.ptp([c.read_logical(0) for c in clocks])

    for t in range(0, 50_000, 10_000):
        readings = [c.read_logical(t) for c in clocks]
        updates = []
        for i in range(len(clocks)):
            table = NeighborClockTable(ttl=1e9)
            for j in range(len(clocks)):
                if j != i:
                    table.record(j, readings[j], readings[i])
            updates.append(compute_offset_update(table, readings[i], delta=0.0))
        for clock, update in zip(clocks, updates):
            clock.apply_offset_update(update)

    spread_after = np.ptp([c.read_logical(50_000) for c in clocks])
    assert spread_after < 1e-6 * spread_before + 1e-6


def test_average_neighbor_offset():
    assert average_neighbor_offset(100.0, ()) == 0.0
    assert average_neighbor_offset(100.0, (200.0, 400.0)) == 200.0
