"""
⏱️ UWB Swarm Tracker - Sincronização de relógios
Relógio de hardware + relógio lógico e o protocolo de sincronização por gradiente
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from utils.ttl_table import TtlTable

logger = logging.getLogger(__name__)

# Tolerância ao inverter o relógio (erros de arredondamento em float)
_INVERSION_EPS = 1e-6


class SyncAction(Enum):
    LISTEN = "listen"
    BROADCAST = "broadcast"


@dataclass(frozen=True)
class HardwareClock:
    """H_i(t) = h_i·t + φ_i; nunca é ajustado"""
    rate: float = 1.0
    offset_phi: float = 0.0

    def read(self, true_time: float) -> float:
        return self.rate * true_time + self.offset_phi


@dataclass
class LogicalClock:
    theta: float = 0.0
    rate_l: float = 1.0


class NodeClock:
    """Par relógio de hardware / relógio lógico de um nó"""

    def __init__(self, hardware: HardwareClock, logical: LogicalClock = None):
        self.hardware = hardware
        self.logical = logical or LogicalClock()

    def read_hardware(self, true_time: float) -> float:
        return self.hardware.read(true_time)

    def read_logical(self, true_time: float) -> float:
        return self.logical.rate_l * self.read_hardware(true_time) + self.logical.theta

    def apply_offset_update(self, delta: float) -> None:
        """Única forma de alterar o relógio lógico"""
        self.logical.theta += delta

    def true_time_of(self, logical_time: float) -> int:
        """Primeiro instante inteiro (µs) em que o relógio lógico alcança `logical_time`"""
        exact = (logical_time - self.logical.theta - self.hardware.offset_phi) / self.hardware.rate
        return int(math.ceil(exact - _INVERSION_EPS))

    def snapshot(self) -> dict:
        return {'rate': self.hardware.rate, 'phi': self.hardware.offset_phi, 'theta': self.logical.theta}


class NeighborClockTable:
    """N_i: último L_j recebido de cada vizinho e o L_i local na recepção"""

    def __init__(self, ttl: float):
        self._table = TtlTable(ttl)

    def record(self, neighbor: int, logical_time: float, local_receive: float) -> None:
        self._table.set(neighbor, (logical_time, local_receive), local_receive)

    def entries(self, now: float = None):
        if now is not None:
            self._table.collect(now)
        return list(self._table.items())

    def clear(self) -> None:
        self._table.clear()

    def __len__(self) -> int:
        return len(self._table)


def compute_offset_update(table: NeighborClockTable, own_L: float, delta: float) -> float:
    """Média dos desvios para os vizinhos, com denominador |N_i| + 1.

    Cada entrada guarda (L_j enviado, L_i na recepção); o desvio é
    L_j − L_i + δ, avaliado no instante da recepção. `own_L` é aceito
    para manter a assinatura do protocolo, mas as diferenças já estão
    ancoradas no momento em que cada SYN chegou.
    """
    entries = table.entries()
    if not entries:
        return 0.0
    total = sum(sent - received + delta for _, (sent, received) in entries)
    return total / (len(entries) + 1)


def sync_phase_action(rng: np.random.Generator, p_tx: float = 0.2) -> SyncAction:
    if not 0.0 <= p_tx <= 1.0:
        raise ValueError("p_tx deve estar em [0, 1]")
    return SyncAction.BROADCAST if rng.random() < p_tx else SyncAction.LISTEN


def is_synchronized(table: NeighborClockTable, own_L: float, threshold: float, timed_out: bool,
                    delta: float = 0.0) -> bool:
    if timed_out:
        return True
    return abs(compute_offset_update(table, own_L, delta)) < threshold


def average_neighbor_offset(own_L: float, neighbor_L: Tuple[float, ...]) -> float:
    """Desvio médio (µs) do relógio lógico em relação aos vizinhos"""
    if not neighbor_L:
        return 0.0
    return float(np.mean(neighbor_L)) - own_L
