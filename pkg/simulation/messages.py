"""
📡 UWB Swarm Tracker - Mensagens de rádio
União etiquetada de todos os pacotes transmitidos pelo meio UWB
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Tuple, Union


class MessageFamily(Enum):
    """Fase do ciclo à qual cada tipo de pacote pertence"""
    SYNC = "sync"
    SCHEDULE = "schedule"
    TASK = "task"


@dataclass(frozen=True)
class SynMsg:
    logical_time: float  # L_j no início da transmissão (µs)

    kind = "syn"
    family = MessageFamily.SYNC


@dataclass(frozen=True)
class TdmaMsg:
    sender_id: int
    action_code: int  # -1 = proposta; senão o id do tag em conflito
    slot_id: int

    kind = "tdma"
    family = MessageFamily.SCHEDULE

    @property
    def is_proposal(self) -> bool:
        return self.action_code == PROPOSAL


@dataclass(frozen=True)
class RosterMsg:
    """Anúncio do tag na sua vez: membros conhecidos e propostas aceitas"""
    sender_id: int
    members: Tuple[Tuple[int, float], ...]  # (id do tag, L do último anúncio do próprio tag)
    accepted: Tuple[Tuple[int, int], ...]  # (slot, dono) da RecvList do emissor

    kind = "roster"
    family = MessageFamily.SCHEDULE


@dataclass(frozen=True)
class RangePoll:
    initiator: int
    responder: int
    seq: int

    kind = "poll"
    family = MessageFamily.TASK


@dataclass(frozen=True)
class RangeResponse:
    initiator: int
    responder: int
    seq: int
    t_reply_us: float  # medido no relógio de hardware do respondedor

    kind = "response"
    family = MessageFamily.TASK


@dataclass(frozen=True)
class PositionBroadcast:
    sender: int
    position: Tuple[float, float, float]
    confidence: float  # log10 do indicador de condição de P
    at: float  # tempo lógico do emissor (µs)

    kind = "position"
    family = MessageFamily.TASK


PROPOSAL = -1

Message = Union[SynMsg, TdmaMsg, RosterMsg, RangePoll, RangeResponse, PositionBroadcast]

# tipo serializado → família (usado ao reprocessar logs)
FAMILY_BY_KIND = {cls.kind: cls.family for cls in (SynMsg, TdmaMsg, RosterMsg, RangePoll, RangeResponse,
                                                PositionBroadcast)}


def message_record(msg: Any) -> Dict[str, Any]:
    """Serializar mensagem (ou token de timer) para o log de eventos"""
    if hasattr(msg, 'kind') and hasattr(msg, '__dataclass_fields__'):
        record = asdict(msg)
        if 'position' in record:
            record['position'] = list(record['position'])
        record['type'] = msg.kind
        return record
    return {'type': 'timer', 'name': str(msg)}
