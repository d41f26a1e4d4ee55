"""
🧭 UWB Swarm Tracker - Filtro de Kalman estendido
Modelo de velocidade constante com 6 estados, fusão de trilateração e de ranges simples
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, block_diag, cho_factor, cho_solve, eigvalsh

from localization.ranging import RefKind
from simulation.errors import SingularGeometry, SingularInnovation

logger = logging.getLogger(__name__)

# Colunas de posição no vetor [x, ẋ, y, ẏ, z, ż]
POSITION_INDEX = (0, 2, 4)
MIN_RANGE = 1e-3  # m
DEFAULT_ETA_P = (0.0011, 0.0004, 0.0045)  # m², variância medida da trilateração
DEFAULT_ETA_MIN = 1e-4


class UpdateType(Enum):
    TRILATERATION = "trilateration"
    RANGE_ANCHOR = "range-anchor"
    RANGE_NEIGHBOR = "range-neighbor"
    MODEL_ONLY = "model-only"
    REJECTED = "rejected"


class GateDecision(Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass
class EkfState:
    x: np.ndarray = field(default_factory=lambda: np.zeros(6))
    P: np.ndarray = field(default_factory=lambda: np.eye(6))
    last_update: int = 0

    @classmethod
    def from_position(cls, position: Sequence[float], at: int = 0) -> "EkfState":
        """Inicialização: posição da primeira trilateração, velocidade nula, P = I"""
        x = np.zeros(6)
        x[list(POSITION_INDEX)] = np.asarray(position, dtype=float)
        return cls(x=x, P=np.eye(6), last_update=at)

    @property
    def position(self) -> np.ndarray:
        return self.x[list(POSITION_INDEX)]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[[1, 3, 5]]

    def trace(self) -> float:
        return float(np.trace(self.P))


@dataclass(frozen=True)
class TrilaterationObservation:
    m: Tuple[float, float, float]
    noise: Tuple[float, float, float] = DEFAULT_ETA_P

    def __post_init__(self):
        if min(self.noise) <= 0:
            raise ValueError("ruído da trilateração deve ser positivo")


@dataclass(frozen=True)
class RangeObservation:
    d: float
    ref_position: Tuple[float, float, float]
    noise_eta: float

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("distância negativa")


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def transition_matrix(dt: float) -> np.ndarray:
    d_f = np.array([[1.0, dt], [0.0, 1.0]])
    return block_diag(d_f, d_f, d_f)


def process_noise(dt: float, q_pos: float = 4.0, q_vel: float = 2.0) -> np.ndarray:
    d_q = np.diag([q_pos * dt, q_vel * dt])
    return block_diag(d_q, d_q, d_q)


def predict(state: EkfState, dt: float, q_pos: float = 4.0, q_vel: float = 2.0) -> EkfState:
    if dt < 0:
        raise ValueError(f"dt negativo: {dt}")
    F = transition_matrix(dt)
    P = F @ state.P @ F.T + process_noise(dt, q_pos, q_vel)
    return replace(state, x=F @ state.x, P=_symmetrize(P))


def coast(state: EkfState, dt: float, q_pos: float = 4.0, q_vel: float = 2.0) -> EkfState:
    """Avanço só pelo modelo (sem medições)"""
    return predict(state, dt, q_pos, q_vel)


def _kalman_update(state: EkfState, H: np.ndarray, R: np.ndarray, residual: np.ndarray) -> EkfState:
    S = _symmetrize(R + H @ state.P @ H.T)
    try:
        factor = cho_factor(S)
    except LinAlgError as exc:
        raise SingularInnovation(f"S não inversível: {exc}") from exc

    # K = P Hᵀ S⁻¹
    K = cho_solve(factor, H @ state.P).T
    x = state.x + K @ residual
    P = (np.eye(6) - K @ H) @ state.P
    return replace(state, x=x, P=_symmetrize(P))


def update_trilateration(state: EkfState, obs: TrilaterationObservation) -> EkfState:
    H = np.zeros((3, 6))
    for row, column in enumerate(POSITION_INDEX):
        H[row, column] = 1.0
    R = np.diag(obs.noise)
    residual = np.asarray(obs.m, dtype=float) - H @ state.x
    return _kalman_update(state, H, R, residual)


def range_jacobian(position: Sequence[float], ref_position: Sequence[float]) -> np.ndarray:
    """Linha 1×6 de ∂d/∂x, com zeros nas colunas de velocidade"""
    diff = np.asarray(position, dtype=float) - np.asarray(ref_position, dtype=float)
    predicted = float(np.linalg.norm(diff))
    if predicted < MIN_RANGE:
        raise SingularGeometry(f"posição prevista a {predicted:.2e} m da referência")
    H = np.zeros((1, 6))
    H[0, list(POSITION_INDEX)] = diff / predicted
    return H


def predicted_range(state: EkfState, ref_position: Sequence[float]) -> float:
    return float(np.linalg.norm(state.position - np.asarray(ref_position, dtype=float)))


def update_range(state: EkfState, obs: RangeObservation) -> EkfState:
    H = range_jacobian(state.position, obs.ref_position)
    residual = np.array([obs.d - predicted_range(state, obs.ref_position)])
    return _kalman_update(state, H, np.array([[obs.noise_eta]]), residual)


def condition_indicator(P: np.ndarray) -> float:
    """κ(P) = λmax / λmin"""
    eigenvalues = eigvalsh(_symmetrize(np.asarray(P, dtype=float)))
    smallest = float(eigenvalues[0])
    if smallest <= 0:
        return math.inf
    return float(eigenvalues[-1]) / smallest


def confidence_of(P: np.ndarray) -> float:
    """Confiança transmitida no PositionBroadcast: log10 κ(P)"""
    kappa = condition_indicator(P)
    return math.log10(kappa) if math.isfinite(kappa) else math.inf


def range_noise(ref_kind: RefKind, dt_since_measurement: float, ref_P_indicator: Optional[float] = None,
                eta_min: float = DEFAULT_ETA_MIN) -> float:
    """η_Rt: idade da medição para âncoras, log10 κ do vizinho para vizinhos"""
    if dt_since_measurement < 0:
        raise ValueError("dt negativo")
    if ref_kind == RefKind.ANCHOR:
        eta = dt_since_measurement
    else:
        kappa = ref_P_indicator if ref_P_indicator is not None else 1.0
        eta = math.log10(max(kappa, 1.0))
    return max(eta, eta_min)


def gate_range(state: EkfState, obs: RangeObservation, max_innovation: float = 3.0) -> GateDecision:
    innovation = abs(obs.d - predicted_range(state, obs.ref_position))
    return GateDecision.REJECT if innovation > max_innovation else GateDecision.ACCEPT


def nis(state: EkfState, H: np.ndarray, R: np.ndarray, residual: np.ndarray) -> float:
    """Inovação quadrática normalizada yᵀ S⁻¹ y"""
    S = _symmetrize(np.atleast_2d(R) + H @ state.P @ H.T)
    y = np.atleast_1d(residual)
    return float(y @ np.linalg.solve(S, y))
