"""
🧾 UWB Swarm Tracker - Log de eventos
Um registro JSON por linha: time_us, kind, src, dst, msg
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional


def dump_record(record: Dict[str, Any]) -> str:
    """Serialização canônica (chaves ordenadas) para logs byte-idênticos"""
    return json.dumps(record, sort_keys=True, separators=(',', ':'))


class EventLog:
    """Acumulador em memória do log de eventos de uma execução.

    Com `enabled=False` o tráfego de rádio e os timers são descartados;
    as anotações continuam sendo gravadas, e delas saem todas as métricas.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.records: List[Dict[str, Any]] = []

    def append(self, time_us: int, kind: str, src: Optional[int], dst: Optional[int], msg: Dict[str, Any]) -> None:
        if self.enabled:
            self.records.append({'time_us': time_us, 'kind': kind, 'src': src, 'dst': dst, 'msg': msg})

    def annotate(self, time_us: int, kind: str, src: Optional[int], data: Dict[str, Any]) -> None:
        self.records.append({'time_us': time_us, 'kind': kind, 'src': src, 'dst': None, 'msg': data})

    @staticmethod
    def dumps_records(records: Iterable[Dict[str, Any]]) -> str:
        return ''.join(dump_record(record) + '\n' for record in records)

    def dumps(self) -> str:
        return self.dumps_records(self.records)

    def __len__(self) -> int:
        return len(self.records)


def read_records(path: Path) -> List[Dict[str, Any]]:
    """Ler um log JSON-lines gravado por `write_records`"""
    with open(path, encoding='utf-8') as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_records(path: Path, records: Iterable[Dict[str, Any]]) -> None:
    with open(path, 'w', encoding='utf-8') as handle:
        for record in records:
            handle.write(dump_record(record) + '\n')
