"""
⚙️ UWB Swarm Tracker - Motor de eventos discretos
Fila de prioridade determinística, meio de rádio compartilhado e detecção de colisões
"""

import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Protocol, Tuple

import numpy as np

from simulation.errors import CausalityError, TransmitterBusy
from simulation.messages import MessageFamily, message_record
from utils.event_log import EventLog

logger = logging.getLogger(__name__)

SimTime = int  # microssegundos
NodeId = int
Position = Tuple[float, float, float]
LinkFilter = Callable[[NodeId, NodeId, Position, Position], bool]


class EventKind(Enum):
    TRANSMIT_START = "transmit_start"
    TRANSMIT_END = "transmit_end"
    DELIVER = "deliver"
    TIMER = "timer"


@dataclass(frozen=True)
class TimerToken:
    """Token opaco devolvido ao nó quando o timer dispara"""
    name: str
    arg: Optional[int] = None

    kind = "timer"


@dataclass
class Reception:
    """Janela de recepção [start, end) de um pacote em um receptor"""
    tx_id: int
    source: NodeId
    receiver: NodeId
    start: SimTime
    end: SimTime
    message: Any
    collided: bool = False

    def overlaps(self, other: "Reception") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass
class RadioEvent:
    at: SimTime
    kind: EventKind
    source: Optional[NodeId]
    target: Optional[NodeId]
    payload: Any
    reception: Optional[Reception] = None


@dataclass(order=True)
class _QueuedEvent:
    at: SimTime
    seq: int
    event: RadioEvent = field(compare=False)
    cancelled: bool = field(default=False, compare=False)


class EventHandle:
    """Referência a um evento agendado (permite cancelamento)"""

    def __init__(self, queued: _QueuedEvent):
        self._queued = queued

    @property
    def at(self) -> SimTime:
        return self._queued.at

    @property
    def cancelled(self) -> bool:
        return self._queued.cancelled

    def cancel(self) -> None:
        self._queued.cancelled = True


@dataclass(frozen=True)
class Medium:
    """Parâmetros do canal UWB compartilhado"""
    comm_range: float
    delay_mean: float = 100.0
    delay_jitter: float = 50.0
    airtime: int = 200

    def __post_init__(self):
        if self.comm_range <= 0:
            raise ValueError("comm_range deve ser positivo")
        if self.airtime <= 0:
            raise ValueError("airtime deve ser positivo")
        if self.delay_jitter < 0 or self.delay_mean - self.delay_jitter < 0:
            raise ValueError("atraso de propagação não pode ser negativo")

    def sample_delay(self, rng: np.random.Generator) -> SimTime:
        if self.delay_jitter == 0:
            return int(round(self.delay_mean))
        low = self.delay_mean - self.delay_jitter
        high = self.delay_mean + self.delay_jitter
        return int(round(rng.uniform(low, high)))

    def in_range(self, a: Position, b: Position) -> bool:
        return float(np.linalg.norm(np.subtract(a, b))) <= self.comm_range

    @property
    def max_latency(self) -> float:
        """Maior intervalo entre início da transmissão e fim da recepção"""
        return self.airtime + self.delay_mean + self.delay_jitter


class SimNode(Protocol):
    node_id: NodeId
    is_radio: bool

    def position(self, now: SimTime) -> Position: ...

    def is_active(self, now: SimTime) -> bool: ...

    def handle_event(self, event: RadioEvent, engine: "Engine") -> None: ...


def resolve_collisions(receptions: List[Reception]) -> List[Reception]:
    """Devolve as recepções sobreviventes: qualquer sobreposição descarta todos os envolvidos"""
    ordered = sorted(receptions, key=lambda r: (r.start, r.tx_id))
    lost = set()
    for i, first in enumerate(ordered):
        for j in range(i + 1, len(ordered)):
            second = ordered[j]
            if second.start >= first.end:
                break
            lost.add(i)
            lost.add(j)
    return [reception for i, reception in enumerate(ordered) if i not in lost]


@dataclass
class DeliveryStats:
    """Contadores por família de mensagem"""
    transmissions: Dict[str, int] = field(default_factory=dict)
    delivered: Dict[str, int] = field(default_factory=dict)
    dropped_by_range: Dict[str, int] = field(default_factory=dict)
    dropped_by_collision: Dict[str, int] = field(default_factory=dict)

    @staticmethod
    def _bump(counter: Dict[str, int], family: MessageFamily, amount: int = 1) -> None:
        counter[family.value] = counter.get(family.value, 0) + amount

    def _counters(self) -> Dict[str, Dict[str, int]]:
        return {
            'delivered': self.delivered,
            'dropped_by_collision': self.dropped_by_collision,
            'dropped_by_range': self.dropped_by_range,
            'transmissions': self.transmissions,
        }

    def totals(self) -> Dict[str, int]:
        return {name: sum(counter.values()) for name, counter in self._counters().items()}

    def to_dict(self) -> Dict[str, Any]:
        """Chaves em ordem alfabética em todos os níveis, como no log serializado"""
        result: Dict[str, Any] = {name: dict(sorted(counter.items())) for name, counter in self._counters().items()}
        result['totals'] = self.totals()
        return dict(sorted(result.items()))


class Engine:
    """Simulador de eventos discretos com ordem total (instante, sequência)"""

    def __init__(self, medium: Medium, seed: int = 0, link_filter: Optional[LinkFilter] = None,
                 event_log: Optional[EventLog] = None):
        self.medium = medium
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.link_filter = link_filter
        self.log = event_log if event_log is not None else EventLog()
        self.stats = DeliveryStats()
        self.now: SimTime = 0

        self._queue: List[_QueuedEvent] = []
        self._seq = 0
        self._tx_seq = 0
        self._nodes: Dict[NodeId, SimNode] = {}
        self._busy_until: Dict[NodeId, SimTime] = {}
        self._pending: Dict[NodeId, List[Reception]] = {}
        self._position_cache: Tuple[SimTime, Dict[NodeId, Position]] = (-1, {})

    # ---------- nós ----------

    def add_node(self, node: SimNode) -> None:
        if node.node_id in self._nodes:
            raise ValueError(f"Nó duplicado: {node.node_id}")
        self._nodes[node.node_id] = node
        self._pending[node.node_id] = []

    def node(self, node_id: NodeId) -> SimNode:
        return self._nodes[node_id]

    @property
    def nodes(self) -> List[SimNode]:
        return [self._nodes[node_id] for node_id in sorted(self._nodes)]

    def positions(self) -> Dict[NodeId, Position]:
        """Posições verdadeiras de todos os nós ativos no instante atual"""
        cached_at, cached = self._position_cache
        if cached_at == self.now:
            return cached
        current = {
            node_id: tuple(float(c) for c in node.position(self.now))
            for node_id, node in sorted(self._nodes.items())
            if node.is_active(self.now)
        }
        self._position_cache = (self.now, current)
        return current

    def can_hear(self, sender: NodeId, receiver: NodeId) -> bool:
        """Alcance e máscara de enlace entre dois nós ativos, no instante atual"""
        positions = self.positions()
        if sender not in positions or receiver not in positions:
            return False
        if not self.medium.in_range(positions[sender], positions[receiver]):
            return False
        if self.link_filter is not None:
            return self.link_filter(sender, receiver, positions[sender], positions[receiver])
        return True

    # ---------- agenda ----------

    def schedule(self, at: SimTime, event: RadioEvent) -> EventHandle:
        if at < self.now:
            raise CausalityError(f"Evento em t={at} agendado no instante {self.now}")
        event.at = at
        queued = _QueuedEvent(at, self._seq, event)
        self._seq += 1
        heapq.heappush(self._queue, queued)
        return EventHandle(queued)

    def schedule_timer(self, node_id: NodeId, at: SimTime, token: Any) -> EventHandle:
        return self.schedule(at, RadioEvent(at, EventKind.TIMER, node_id, node_id, token))

    def is_transmitting(self, node_id: NodeId) -> bool:
        return self.now < self._busy_until.get(node_id, 0)

    def broadcast(self, sender: NodeId, msg: Any) -> None:
        """Transmite `msg` a todos os nós de rádio ativos ao alcance"""
        if self.is_transmitting(sender):
            raise TransmitterBusy(f"Nó {sender} ainda transmite até t={self._busy_until[sender]}")

        airtime = self.medium.airtime
        family = msg.family
        tx_id = self._tx_seq
        self._tx_seq += 1
        self._busy_until[sender] = self.now + airtime
        DeliveryStats._bump(self.stats.transmissions, family)

        self.schedule(self.now, RadioEvent(self.now, EventKind.TRANSMIT_START, sender, None, msg))
        self.schedule(self.now + airtime, RadioEvent(self.now + airtime, EventKind.TRANSMIT_END, sender, None, msg))

        for node_id, node in sorted(self._nodes.items()):
            if node_id == sender or not node.is_radio or not node.is_active(self.now):
                continue
            if not self.can_hear(sender, node_id):
                DeliveryStats._bump(self.stats.dropped_by_range, family)
                continue

            start = self.now + self.medium.sample_delay(self.rng)
            reception = Reception(tx_id, sender, node_id, start, start + airtime, msg)
            self._register_reception(reception)
            self.schedule(reception.end, RadioEvent(reception.end, EventKind.DELIVER, sender, node_id, msg, reception))

    def _register_reception(self, reception: Reception) -> None:
        pending = self._pending[reception.receiver]
        overlapping = [other for other in pending if other.overlaps(reception)]
        if overlapping:
            candidates = overlapping + [reception]
            survivors = {id(r) for r in resolve_collisions(candidates)}
            for candidate in candidates:
                if id(candidate) not in survivors:
                    candidate.collided = True
        pending.append(reception)

    # ---------- anotações ----------

    def annotate(self, kind: str, src: Optional[NodeId], **data: Any) -> None:
        """Registro extra no log (estimativas, sincronização, tabelas de escalonamento)"""
        self.log.annotate(self.now, kind, src, data)

    # ---------- laço principal ----------

    def peek_time(self) -> Optional[SimTime]:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].at if self._queue else None

    def step(self) -> bool:
        """Processa o próximo evento; False se a fila estiver vazia"""
        if self.peek_time() is None:
            return False
        queued = heapq.heappop(self._queue)
        self.now = queued.at
        self._dispatch(queued.event)
        return True

    def run(self, until: SimTime) -> None:
        """Processa todos os eventos com instante <= until"""
        while True:
            next_at = self.peek_time()
            if next_at is None or next_at > until:
                break
            self.step()
        self.now = max(self.now, until)

    def _dispatch(self, event: RadioEvent) -> None:
        record = message_record(event.payload) if self.log.enabled else None

        if event.kind in (EventKind.TRANSMIT_START, EventKind.TRANSMIT_END):
            self.log.append(self.now, event.kind.value, event.source, None, record)
            return

        if event.kind == EventKind.TIMER:
            self.log.append(self.now, 'timer', event.source, event.target, record)
            node = self._nodes.get(event.target)
            if node is not None:
                node.handle_event(event, self)
            return

        reception = event.reception
        self._pending[reception.receiver].remove(reception)
        family = event.payload.family
        if reception.collided:
            DeliveryStats._bump(self.stats.dropped_by_collision, family)
            self.log.append(self.now, 'drop', event.source, event.target, record)
            return

        DeliveryStats._bump(self.stats.delivered, family)
        self.log.append(self.now, 'deliver', event.source, event.target, record)
        node = self._nodes[event.target]
        if node.is_active(self.now):
            node.handle_event(event, self)
