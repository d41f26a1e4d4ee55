"""
🗓️ UWB Swarm Tracker - Escalonamento TDMA descentralizado
Consenso de slots por proposta / rejeição / cancelamento, incluindo nós ocultos
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np

from simulation.errors import NoFreeSlot
from simulation.messages import PROPOSAL, RosterMsg, TdmaMsg
from utils.ttl_table import TtlTable

logger = logging.getLogger(__name__)


class SlotClaim(Enum):
    FREE = "free"
    CLAIMED = "claimed"
    DISABLED = "disabled"


@dataclass
class ScheduleState:
    """Tabelas SendList / RecvList / BlockList de um tag"""
    node_id: int
    num_slots: int
    neighbor_table: TtlTable
    preferred_slot: Optional[int] = None
    send_list: List[SlotClaim] = field(default_factory=list)
    recv_list: List[Optional[int]] = field(default_factory=list)
    block_list: List[bool] = field(default_factory=list)
    msg_queue: Deque[TdmaMsg] = field(default_factory=deque)
    claim_turn: Dict[int, int] = field(default_factory=dict)
    confirmed: Set[int] = field(default_factory=set)
    turn: int = 0
    peers: Set[int] = field(default_factory=set)  # tags ouvidos neste ciclo
    echoes: Dict[int, Dict[int, int]] = field(default_factory=dict)  # par → slot → dono aceito pelo par

    def __post_init__(self):
        if self.num_slots <= 0:
            raise ValueError("num_slots deve ser positivo")
        if not self.send_list:
            self.send_list = [SlotClaim.FREE] * self.num_slots
        if not self.recv_list:
            self.recv_list = [None] * self.num_slots
        self.recompute_blocks()

    def recompute_blocks(self) -> None:
        self.block_list = [
            self.send_list[s] != SlotClaim.FREE or self.recv_list[s] is not None
            for s in range(self.num_slots)
        ]

    def free_slots(self) -> List[int]:
        return [s for s in range(self.num_slots) if not self.block_list[s]]

    def own_slots(self) -> List[int]:
        """Slots confirmados (reivindicados, não desabilitados, ecoados por todos os pares)"""
        return sorted(s for s in self.confirmed if self.send_list[s] == SlotClaim.CLAIMED)

    def accepted(self) -> Tuple[Tuple[int, int], ...]:
        """Entradas ocupadas da RecvList, no formato do anúncio"""
        return tuple((s, owner) for s, owner in enumerate(self.recv_list) if owner is not None)

    def enqueue(self, msg: TdmaMsg) -> None:
        if msg not in self.msg_queue:
            self.msg_queue.append(msg)

    def table_view(self) -> Dict[str, object]:
        """Tabelas no formato do log de escalonamento"""
        return {
            'send': [claim.value for claim in self.send_list],
            'recv': list(self.recv_list),
            'own': self.own_slots(),
        }


@dataclass(frozen=True)
class Schedule:
    """Visão local: slot → id do dono (ou None)"""
    slot_count: int
    slot_duration: int
    assignment: Tuple[Optional[int], ...]

    @classmethod
    def from_state(cls, state: ScheduleState, slot_duration: int) -> "Schedule":
        own = set(state.own_slots())
        assignment = tuple(
            state.node_id if s in own else state.recv_list[s]
            for s in range(state.num_slots)
        )
        return cls(state.num_slots, slot_duration, assignment)

    def slots_of(self, node_id: int) -> List[int]:
        return [s for s, owner in enumerate(self.assignment) if owner == node_id]


def initial_sequence(known_neighbors: Iterable[int], self_id: int) -> int:
    """Posição de `self_id` na sequência de ids crescentes"""
    ids = sorted(set(known_neighbors) | {self_id})
    return ids.index(self_id)


def propose_slot(state: ScheduleState, rng: Optional[np.random.Generator] = None,
                 random_order: bool = False) -> TdmaMsg:
    """Próxima mensagem TDMA: a fila tem prioridade sobre novas propostas"""
    if state.msg_queue:
        return state.msg_queue.popleft()

    free = state.free_slots()
    if not free:
        raise NoFreeSlot(f"Tag {state.node_id}: todos os {state.num_slots} slots bloqueados")

    if state.preferred_slot is not None and state.preferred_slot in free:
        slot = state.preferred_slot
    elif random_order and rng is not None:
        slot = int(free[int(rng.integers(len(free)))])
    else:
        slot = free[0]
    state.preferred_slot = None

    state.send_list[slot] = SlotClaim.CLAIMED
    state.claim_turn[slot] = state.turn
    state.recompute_blocks()
    return TdmaMsg(sender_id=state.node_id, action_code=PROPOSAL, slot_id=slot)


def on_tdma_msg(state: ScheduleState, msg: TdmaMsg, now: float) -> ScheduleState:
    """Ramificação em quatro casos ao receber uma mensagem TDMA"""
    slot = msg.slot_id
    if msg.sender_id not in state.neighbor_table:
        logger.debug(f"Tag {state.node_id}: novo vizinho {msg.sender_id}")
    state.neighbor_table.set(msg.sender_id, now, now)
    state.peers.add(msg.sender_id)

    if not 0 <= slot < state.num_slots:
        logger.warning(f"Tag {state.node_id}: slot {slot} fora do quadro, ignorado")
        return state

    if msg.is_proposal:
        if state.recv_list[slot] == msg.sender_id:
            # reanúncio de uma proposta já aceita
            return state
        if not state.block_list[slot]:
            state.recv_list[slot] = msg.sender_id
        else:
            state.enqueue(TdmaMsg(sender_id=state.node_id, action_code=msg.sender_id, slot_id=slot))
    elif msg.action_code == state.node_id:
        state.send_list[slot] = SlotClaim.DISABLED
        state.claim_turn.pop(slot, None)
        state.confirmed.discard(slot)
        state.enqueue(TdmaMsg(sender_id=state.node_id, action_code=state.node_id, slot_id=slot))
    elif state.recv_list[slot] is not None and msg.action_code == state.recv_list[slot]:
        state.recv_list[slot] = None
    else:
        # rejeição que não nos diz respeito
        return state

    state.recompute_blocks()
    return state


def on_roster(state: ScheduleState, msg: RosterMsg, now: float) -> ScheduleState:
    """Guarda o eco da RecvList do par; só ele libera a confirmação das nossas propostas"""
    state.neighbor_table.set(msg.sender_id, now, now)
    state.peers.add(msg.sender_id)
    state.echoes[msg.sender_id] = {slot: owner for slot, owner in msg.accepted}
    return state


def echoed_by_peers(state: ScheduleState, slot: int) -> bool:
    """Todos os pares ouvidos no ciclo relatam `slot` como nosso"""
    return all(state.echoes.get(peer, {}).get(slot) == state.node_id for peer in state.peers)


def confirm_claims(state: ScheduleState) -> List[int]:
    """Na vez do tag: reivindicações de vezes anteriores, já ecoadas por todos os pares, viram confirmadas"""
    newly = []
    for slot, turn in sorted(state.claim_turn.items()):
        if turn < state.turn and state.send_list[slot] == SlotClaim.CLAIMED and echoed_by_peers(state, slot):
            state.confirmed.add(slot)
            newly.append(slot)
    for slot in newly:
        del state.claim_turn[slot]
    return newly


def unacknowledged_claims(state: ScheduleState) -> List[TdmaMsg]:
    """Propostas de vezes anteriores ainda sem eco completo, para reanunciar"""
    return [
        TdmaMsg(sender_id=state.node_id, action_code=PROPOSAL, slot_id=slot)
        for slot, turn in sorted(state.claim_turn.items())
        if turn < state.turn and state.send_list[slot] == SlotClaim.CLAIMED
    ]


def drop_unconfirmed(state: ScheduleState) -> List[int]:
    """Fim da fase de escalonamento: reivindicações pendentes são liberadas"""
    dropped = sorted(state.claim_turn)
    for slot in dropped:
        state.send_list[slot] = SlotClaim.FREE
    state.claim_turn.clear()
    state.recompute_blocks()
    return dropped


def schedule_converged(state: ScheduleState, min_own_slots: int = 1) -> bool:
    return len(state.own_slots()) >= min_own_slots or not state.free_slots()


def gc_neighbors(state: ScheduleState, now: float, window: float) -> ScheduleState:
    """Coletor de lixo da tabela de vizinhos; libera os slots dos que saíram"""
    for key in state.neighbor_table.keys():
        stamped = state.neighbor_table.stamped_at(key)
        if stamped < now - window:
            state.neighbor_table.delete(key)
            state.recv_list = [None if owner == key else owner for owner in state.recv_list]
            state.peers.discard(key)
            state.echoes.pop(key, None)
            logger.debug(f"Tag {state.node_id}: vizinho {key} removido pelo coletor")
    state.recompute_blocks()
    return state


def two_hop_conflicts(own_slots: Mapping[int, Iterable[int]],
                      adjacency: Mapping[int, Iterable[int]]) -> List[Tuple[int, int, int]]:
    """Pares (a, b, slot) a até dois saltos que possuem o mesmo slot"""
    neighborhood: Dict[int, Set[int]] = {}
    for node, neighbors in adjacency.items():
        reach = set(neighbors)
        for neighbor in list(reach):
            reach |= set(adjacency.get(neighbor, ()))
        reach.discard(node)
        neighborhood[node] = reach

    conflicts = []
    nodes = sorted(own_slots)
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if b not in neighborhood.get(a, set()):
                continue
            for slot in sorted(set(own_slots[a]) & set(own_slots[b])):
                conflicts.append((a, b, slot))
    return conflicts
