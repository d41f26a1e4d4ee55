'''
    Testes do filtro de Kalman estendido.
'''
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import block_diag

from localization.ekf import (EkfState, GateDecision, RangeObservation, TrilaterationObservation, coast,
                              condition_indicator, confidence_of, gate_range, nis, predict, range_jacobian,
                              range_noise, update_range, update_trilateration)
from localization.ranging import RefKind
from simulation.errors import SingularGeometry, SingularInnovation


def state_at(position, P=None):
    state = EkfState.from_position(position)
    if P is not None:
        state.P = np.asarray(P, dtype=float)
    return state


def test_predict_zero_dt_is_identity():
    state = EkfState(x=np.arange(6, dtype=float), P=np.diag(np.arange(1.0, 7.0)))
    predicted = predict(state, 0.0)
    assert_allclose(predicted.x, state.x)
    assert_allclose(predicted.P, state.P)


def test_predict_moves_with_velocity():
    state = EkfState(x=np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]))
    assert predict(state, 2.0).x[0] == 2.0


def test_predict_from_zero_covariance():
    state = EkfState(P=np.zeros((6, 6)))
    expected = block_diag(np.diag([4.0, 2.0]), np.diag([4.0, 2.0]), np.diag([4.0, 2.0]))
    assert_allclose(predict(state, 1.0).P, expected)


def test_predict_rejects_negative_dt():
    with pytest.raises(ValueError):
        predict(EkfState(), -1.0)


def test_coast_grows_uncertainty():
    state = state_at((1.0, 2.0, 0.0))
    traces = [state.trace()]
    for _ in range(5):
        state = coast(state, 0.5)
        traces.append(state.trace())
    assert all(b > a for a, b in zip(traces, traces[1:]))


def test_perfect_prior_ignores_measurement():
    state = state_at((1.0, 2.0, 3.0), P=np.zeros((6, 6)))
    posterior = update_trilateration(state, TrilaterationObservation(m=(5.0, 5.0, 5.0)))
    assert_allclose(posterior.position, [1.0, 2.0, 3.0])


def test_perfect_measurement_wins():
    state = state_at((1.0, 2.0, 3.0))
    posterior = update_trilateration(state, TrilaterationObservation(m=(4.0, 5.0, 6.0), noise=(1e-12,) * 3))
    assert_allclose(posterior.position, [4.0, 5.0, 6.0], atol=1e-9)


def test_scalar_midpoint():
    state = state_at((0.0, 0.0, 0.0))
    posterior = update_trilateration(state, TrilaterationObservation(m=(2.0, 4.0, 6.0), noise=(1.0, 1.0, 1.0)))
    assert_allclose(posterior.position, [1.0, 2.0, 3.0], atol=1e-12)
    assert_allclose(posterior.P[0, 0], 0.5, atol=1e-12)
    assert_allclose(posterior.P[1, 1], 1.0, atol=1e-12)


def test_trilateration_updates_commute():
    state = predict(state_at((0.0, 0.0, 0.0)), 0.3)
    first = TrilaterationObservation(m=(1.0, -1.0, 0.5))
    second = TrilaterationObservation(m=(1.2, -0.8, 0.4), noise=(0.01, 0.02, 0.03))
    one_way = update_trilateration(update_trilateration(state, first), second)
    other_way = update_trilateration(update_trilateration(state, second), first)
    assert_allclose(one_way.x, other_way.x, atol=1e-10)
    assert_allclose(one_way.P, other_way.P, atol=1e-10)


def test_jacobian_on_axis():
    assert_allclose(range_jacobian((1.0, 0.0, 0.0), (0.0, 0.0, 0.0)), [[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]])


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(8)
    h = 1e-6
    for _ in range(100):
        p = rng.uniform(-10, 10, size=3)
        ref = rng.uniform(-10, 10, size=3)
        H = range_jacobian(p, ref)
        numeric = np.zeros(3)
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = h
            numeric[axis] = (np.linalg.norm(p + step - ref) - np.linalg.norm(p - step - ref)) / (2 * h)
        assert_allclose(H[0, [0, 2, 4]], numeric, atol=1e-6)
        assert_allclose(H[0, [1, 3, 5]], 0.0)


def test_jacobian_at_reference_is_singular():
    with pytest.raises(SingularGeometry):
        range_jacobian((1.0, 1.0, 1.0), (1.0, 1.0, 1.0 + 1e-5))


def test_zero_residual_keeps_mean_and_shrinks_line_of_sight():
    state = state_at((3.0, 0.0, 0.0))
    posterior = update_range(state, RangeObservation(d=3.0, ref_position=(0.0, 0.0, 0.0), noise_eta=0.1))
    assert_allclose(posterior.x, state.x, atol=1e-12)
    assert posterior.P[0, 0] < state.P[0, 0]
    assert_allclose(posterior.P[2, 2], state.P[2, 2])
    assert_allclose(posterior.P[4, 4], state.P[4, 4])


def test_axis_range_leaves_other_axes_alone():
    state = state_at((3.0, 1.0, -2.0))
    ref = (0.0, 1.0, -2.0)
    posterior = update_range(state, RangeObservation(d=3.4, ref_position=ref, noise_eta=0.5))
    assert posterior.position[0] > 3.0
    assert_allclose(posterior.position[1:], [1.0, -2.0], atol=1e-12)


def test_singular_innovation():
    state = state_at((3.0, 0.0, 0.0), P=np.zeros((6, 6)))
    with pytest.raises(SingularInnovation):
        update_range(state, RangeObservation(d=3.0, ref_position=(0.0, 0.0, 0.0), noise_eta=0.0))


def test_covariance_stays_symmetric_psd():
    rng = np.random.default_rng(9)
    state = state_at((0.0, 0.0, 1.0))
    anchors = [(0.0, 0.0, 2.5), (10.0, 0.0, 2.5), (10.0, 10.0, 2.5), (0.0, 10.0, 2.5)]
    for step in range(200):
        state = predict(state, 0.5)
        if step % 3 == 0:
            state = update_trilateration(state, TrilaterationObservation(m=tuple(rng.uniform(0, 10, 3))))
        else:
            ref = anchors[step % 4]
            d = float(np.linalg.norm(state.position - ref)) + rng.normal(0, 0.05)
            state = update_range(state, RangeObservation(d=max(d, 0.0), ref_position=ref, noise_eta=0.01))
        assert_allclose(state.P, state.P.T)
        assert np.linalg.eigvalsh(state.P).min() > -1e-9


@pytest.mark.parametrize("kind, dt, indicator, expected", [
    (RefKind.ANCHOR, 0.5, None, 0.5),
    (RefKind.NEIGHBOR, 0.0, 100.0, 2.0),
    (RefKind.NEIGHBOR, 0.0, 1.0, 1e-4),
    (RefKind.ANCHOR, 0.0, None, 1e-4),
])
def test_range_noise(kind, dt, indicator, expected):
    assert_allclose(range_noise(kind, dt, indicator), expected)


def test_condition_indicator():
    assert_allclose(condition_indicator(np.eye(6)), 1.0)
    assert_allclose(condition_indicator(np.diag([100.0, 1, 1, 1, 1, 1])), 100.0)
    assert condition_indicator(np.diag([1.0, 1, 1, 1, 1, 0])) == math.inf
    assert confidence_of(np.eye(6)) == 0.0


@pytest.mark.parametrize("d, gate, expected", [
    (5.5, 3.0, GateDecision.ACCEPT),
    (20.0, 3.0, GateDecision.REJECT),
    (1_000.0, math.inf, GateDecision.ACCEPT),
])
def test_gate(d, gate, expected):
    state = state_at((0.0, 0.0, 0.0))
    obs = RangeObservation(d=d, ref_position=(5.0, 0.0, 0.0), noise_eta=0.1)
    assert gate_range(state, obs, gate) == expected


def test_nis_is_chi_square_on_average():
    rng = np.random.default_rng(10)
    state = predict(state_at((2.0, 3.0, 1.0)), 0.2)
    H = np.zeros((3, 6))
    H[0, 0] = H[1, 2] = H[2, 4] = 1.0
    R = np.diag([0.0011, 0.0004, 0.0045])
    chol = np.linalg.cholesky(state.P)
    values = []
    for _ in range(2_000):
        truth = state.x + chol @ rng.standard_normal(6)
        m = H @ truth + rng.multivariate_normal(np.zeros(3), R)
        values.append(nis(state, H, R, m - H @ state.x))
    assert abs(np.mean(values) - 3.0) < 0.25
