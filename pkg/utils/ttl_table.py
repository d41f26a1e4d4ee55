"""
🗂️ UWB Swarm Tracker - Tabela com TTL
Tabela chaveada por id de nó com expiração em tempo simulado
"""

from typing import Any, Dict, Iterator, List, Tuple


class TtlTable:
    """Tabela em memória com TTL medido no relógio do chamador.

    O tempo nunca vem de `time.time()`: cada chamada recebe o instante
    atual (microssegundos lógicos ou simulados), o que mantém as execuções
    reproduzíveis.
    """

    def __init__(self, ttl: float):
        if ttl <= 0:
            raise ValueError("ttl deve ser positivo")
        self.ttl = ttl
        self._entries: Dict[int, Tuple[Any, float]] = {}

    def collect(self, now: float) -> List[int]:
        """Coletor de lixo: remove entradas vencidas e devolve as chaves removidas"""
        expired = sorted(key for key, (_, stamped) in self._entries.items() if stamped < now - self.ttl)
        for key in expired:
            del self._entries[key]
        return expired

    def stamped_at(self, key: int) -> float:
        return self._entries[key][1]

    def set(self, key: int, value: Any, now: float) -> None:
        self._entries[key] = (value, now)

    def delete(self, key: int) -> bool:
        return self._entries.pop(key, None) is not None

    def clear(self) -> None:
        self._entries.clear()

    def keys(self) -> List[int]:
        return sorted(self._entries)

    def items(self) -> Iterator[Tuple[int, Any]]:
        """Itera em ordem crescente de chave (determinística)"""
        for key in sorted(self._entries):
            yield key, self._entries[key][0]

    def __getitem__(self, key: int) -> Any:
        return self._entries[key][0]

    def __contains__(self, key: int) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)
