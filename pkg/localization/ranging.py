"""
📏 UWB Swarm Tracker - Ranging e trilateração
Two-way ranging de lado único, conversão ToF → distância e Gauss-Newton multi-âncora
"""

import logging
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from protocols.clocksync import HardwareClock
from simulation.errors import DegenerateGeometry, NegativeToF, NonConvergence, RangingTimeout

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
US = 1e-6

Position = Tuple[float, float, float]


class RefKind(Enum):
    ANCHOR = "anchor"
    NEIGHBOR = "neighbor"


class TrilaterationMode(Enum):
    TWO_D = "2d"
    THREE_D = "3d"


@dataclass(frozen=True)
class RangeExchange:
    t_round: float  # µs no relógio do iniciador
    t_reply: float  # µs no relógio do respondedor


@dataclass(frozen=True)
class RangeMeasurement:
    distance: float
    ref_id: int
    ref_position: Position
    ref_kind: RefKind
    taken_at: int
    ref_confidence: Optional[float] = None  # apenas vizinhos

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError("distância negativa")
        if self.ref_kind == RefKind.ANCHOR and self.ref_confidence is not None:
            raise ValueError("medições de âncora não carregam confiança")

    def to_dict(self) -> Dict[str, object]:
        return {
            'distance': self.distance,
            'ref_id': self.ref_id,
            'ref_position': list(self.ref_position),
            'ref_kind': self.ref_kind.value,
            'ref_confidence': self.ref_confidence,
            'taken_at': self.taken_at,
        }


@dataclass(frozen=True)
class TwrEndpoint:
    """Um lado da troca TWR: posição verdadeira e relógio de hardware"""
    node_id: int
    position: Position
    clock: HardwareClock = HardwareClock()
    kind: RefKind = RefKind.ANCHOR
    confidence: Optional[float] = None
    advertised: Optional[Position] = None  # posição anunciada por vizinhos; âncoras usam a verdadeira

    @property
    def ref_position(self) -> Position:
        return tuple(float(c) for c in (self.advertised if self.advertised is not None else self.position))


class AnchorRegistry:
    """Posições levantadas das âncoras; imutável durante a execução"""

    def __init__(self, anchors: Mapping[int, Sequence[float]]):
        self._anchors = MappingProxyType({
            int(node_id): tuple(float(c) for c in position)
            for node_id, position in sorted(anchors.items())
        })

    def position(self, node_id: int) -> Position:
        return self._anchors[node_id]

    def ids(self) -> List[int]:
        return list(self._anchors)

    def items(self) -> Iterator[Tuple[int, Position]]:
        return iter(self._anchors.items())

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._anchors

    def __len__(self) -> int:
        return len(self._anchors)


def tof_from_exchange(x: RangeExchange) -> float:
    """ToF em segundos: metade de (T_round − T_reply)"""
    if x.t_round < x.t_reply:
        raise NegativeToF(f"t_round={x.t_round} < t_reply={x.t_reply}")
    return (x.t_round - x.t_reply) / 2.0 * US


def distance_from_tof(tof: float) -> float:
    if tof < 0:
        raise NegativeToF(f"ToF negativo: {tof}")
    return tof * SPEED_OF_LIGHT


def synthesize_exchange(true_distance: float, reply_latency_us: float,
                        initiator_clock: HardwareClock, responder_clock: HardwareClock,
                        poll_sent_at: float = 0.0) -> RangeExchange:
    """Carimbos das quatro mensagens, cada um lido no relógio de quem o registra"""
    tof_us = true_distance / SPEED_OF_LIGHT / US
    t1 = initiator_clock.read(poll_sent_at)
    t2 = responder_clock.read(poll_sent_at + tof_us)
    t3 = responder_clock.read(poll_sent_at + tof_us + reply_latency_us)
    t4 = initiator_clock.read(poll_sent_at + 2 * tof_us + reply_latency_us)
    return RangeExchange(t_round=t4 - t1, t_reply=t3 - t2)


def measured_distance(exchange: RangeExchange, rng: Optional[np.random.Generator] = None,
                      sigma_d: float = 0.0) -> float:
    """Distância da troca com ruído gaussiano aditivo, truncada em zero"""
    distance = distance_from_tof(tof_from_exchange(exchange))
    if sigma_d > 0 and rng is not None:
        distance += float(rng.normal(0.0, sigma_d))
    return max(distance, 0.0)


def perform_twr(initiator: TwrEndpoint, responder: TwrEndpoint, medium, rng: np.random.Generator, *,
                now: int = 0, sigma_d: float = 0.05, reply_latency_us: float = 300.0,
                link_ok: bool = True, t_reply_us: Optional[float] = None) -> RangeMeasurement:
    """Troca poll/response completa contra a geometria verdadeira.

    `link_ok` traz o desfecho do meio: falso quando a resposta foi perdida
    por alcance ou colisão. `t_reply_us`, quando informado, é a latência
    carimbada pelo respondedor e transportada na resposta; substitui a
    sintetizada a partir do relógio do respondedor.
    """
    true_distance = float(np.linalg.norm(np.subtract(initiator.position, responder.position)))
    if not link_ok or true_distance > medium.comm_range:
        raise RangingTimeout(f"{initiator.node_id} → {responder.node_id}: sem resposta")

    exchange = synthesize_exchange(true_distance, reply_latency_us, initiator.clock, responder.clock)
    if t_reply_us is not None:
        exchange = RangeExchange(exchange.t_round, t_reply_us)

    return RangeMeasurement(
        distance=measured_distance(exchange, rng, sigma_d),
        ref_id=responder.node_id,
        ref_position=responder.ref_position,
        ref_kind=responder.kind,
        taken_at=now,
        ref_confidence=responder.confidence if responder.kind == RefKind.NEIGHBOR else None,
    )


def select_mode(positions: Sequence[Sequence[float]]) -> Optional[TrilaterationMode]:
    """THREE_D com ≥4 âncoras não coplanares, TWO_D com ≥3 não colineares"""
    points = np.asarray(positions, dtype=float)
    if len(points) >= 4 and np.linalg.matrix_rank(points - points.mean(axis=0), tol=1e-6) == 3:
        return TrilaterationMode.THREE_D
    if len(points) >= 3 and np.linalg.matrix_rank(points[:, :2] - points[:, :2].mean(axis=0), tol=1e-6) == 2:
        return TrilaterationMode.TWO_D
    return None


def trilaterate(anchors: Sequence[Tuple[Sequence[float], float]], mode: TrilaterationMode,
                initial_guess: Sequence[float], tol: float = 1e-6, max_iter: int = 25) -> np.ndarray:
    """Mínimos quadrados não lineares de Σ(‖p − a_i‖ − d_i)² por Gauss-Newton.

    Em TWO_D a coordenada z fica presa à do chute inicial; o retorno é
    sempre um vetor 3D.
    """
    positions = np.asarray([a for a, _ in anchors], dtype=float).reshape(-1, 3)
    distances = np.asarray([d for _, d in anchors], dtype=float)
    dims = 2 if mode == TrilaterationMode.TWO_D else 3

    required = 3 if dims == 2 else 4
    if len(positions) < required:
        raise DegenerateGeometry(f"{mode.value} exige {required} âncoras, recebeu {len(positions)}")
    centered = positions[:, :dims] - positions[:, :dims].mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-6) < dims:
        raise DegenerateGeometry("âncoras colineares" if dims == 2 else "âncoras coplanares")

    p = np.asarray(initial_guess, dtype=float).copy()
    for _ in range(max_iter):
        diff = p - positions
        ranges = np.linalg.norm(diff, axis=1)
        ranges = np.where(ranges < 1e-12, 1e-12, ranges)
        jacobian = diff[:, :dims] / ranges[:, None]
        residual = ranges - distances

        if np.linalg.matrix_rank(jacobian) < dims:
            raise DegenerateGeometry("Jacobiano sem posto completo")

        step, *_ = np.linalg.lstsq(jacobian, -residual, rcond=None)
        p[:dims] += step
        if np.linalg.norm(step) < tol:
            return p

    raise NonConvergence(f"Gauss-Newton não convergiu em {max_iter} iterações")
