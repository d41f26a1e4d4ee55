"""
🗺️ UWB Swarm Tracker - Serviço de cenários
Carregamento e validação de cenários, zonas de visibilidade e trajetórias verdadeiras
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set, Tuple, Union

import numpy as np
from matplotlib.path import Path as PolygonPath
from pydantic import ValidationError

from config import settings
from models.scenario import Scenario, ScenarioError, TagSpec

logger = logging.getLogger(__name__)

Position = Tuple[float, float, float]


class Trajectory:
    """Movimento linear por partes ao longo dos waypoints, com velocidade constante"""

    def __init__(self, waypoints: Sequence[Sequence[float]], speed: float, start_us: int = 0, loop: bool = False):
        points = np.asarray(waypoints, dtype=float).reshape(-1, 3)
        if loop and len(points) > 1:
            points = np.vstack([points, points[:1]])
        self.points = points
        self.speed = speed
        self.start_us = start_us
        self.loop = loop
        segments = np.linalg.norm(np.diff(points, axis=0), axis=1) if len(points) > 1 else np.zeros(0)
        self.cumulative = np.concatenate([[0.0], np.cumsum(segments)])
        self.length = float(self.cumulative[-1])

    @classmethod
    def from_tag(cls, tag: TagSpec) -> "Trajectory":
        return cls(tag.waypoints, tag.speed, tag.start_us, tag.loop)

    def position(self, t: int) -> Position:
        travelled = max(t - self.start_us, 0) * 1e-6 * self.speed
        if self.length == 0:
            return tuple(float(c) for c in self.points[0])
        if self.loop:
            travelled = travelled % self.length
        travelled = min(travelled, self.length)
        return tuple(float(np.interp(travelled, self.cumulative, self.points[:, axis])) for axis in range(3))


def ground_truth(tag: TagSpec, t: int) -> Position:
    return Trajectory.from_tag(tag).position(t)


class ZoneMap:
    """Máscaras de visibilidade âncora ↔ tag por zona do piso"""

    def __init__(self, scenario: Scenario):
        self.anchor_ids: Set[int] = set(scenario.anchor_ids())
        self.tag_ids: Set[int] = set(scenario.tag_ids())
        self._zones: List[Tuple[PolygonPath, Set[int]]] = [
            (PolygonPath(zone.polygon), set(zone.visible_anchors))
            for zone in scenario.zones
        ]

    def anchor_visible(self, anchor_id: int, point: Sequence[float]) -> bool:
        """Fora de qualquer zona, só o alcance decide"""
        for polygon, visible in self._zones:
            if polygon.contains_point((point[0], point[1])):
                return anchor_id in visible
        return True

    def link_filter(self, sender: int, receiver: int, sender_pos: Position, receiver_pos: Position) -> bool:
        if sender in self.anchor_ids and receiver in self.tag_ids:
            return self.anchor_visible(sender, receiver_pos)
        if receiver in self.anchor_ids and sender in self.tag_ids:
            return self.anchor_visible(receiver, sender_pos)
        return True


class ScenarioService:
    """Serviço de leitura de cenários do diretório configurado"""

    def __init__(self, scenario_dir: Union[str, Path] = None):
        self.scenario_dir = Path(scenario_dir or settings.SCENARIO_DIR)

    def parse(self, data: dict) -> Scenario:
        try:
            return Scenario.model_validate(data)
        except ValidationError as exc:
            raise ScenarioError.from_validation_error(exc) from exc

    def load_scenario(self, path: Union[str, Path]) -> Scenario:
        path = Path(path)
        if not path.exists() and not path.is_absolute():
            candidate = self.scenario_dir / path
            if candidate.exists():
                path = candidate
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except FileNotFoundError as exc:
            raise ScenarioError([(str(path), "arquivo não encontrado")]) from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError([(str(path), f"JSON inválido: {exc.msg} (linha {exc.lineno})")]) from exc

        scenario = self.parse(data)
        logger.info(f"Cenário '{scenario.name}' carregado: {len(scenario.anchors)} âncoras, {len(scenario.tags)} tags")
        return scenario

    def list_scenarios(self) -> List[str]:
        if not self.scenario_dir.exists():
            return []
        return sorted(path.stem for path in self.scenario_dir.glob('*.json'))

    def trajectories(self, scenario: Scenario) -> Dict[int, Trajectory]:
        return {tag.id: Trajectory.from_tag(tag) for tag in scenario.tags}


def adjacency(positions: Dict[int, Position], comm_range: float, nodes: Iterable[int] = None) -> Dict[int, Set[int]]:
    """Grafo de conectividade verdadeiro entre os nós informados"""
    ids = sorted(nodes if nodes is not None else positions)
    graph = {node: set() for node in ids}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if np.linalg.norm(np.subtract(positions[a], positions[b])) <= comm_range:
                graph[a].add(b)
                graph[b].add(a)
    return graph


scenario_service = ScenarioService()


def load_scenario(path: Union[str, Path]) -> Scenario:
    return scenario_service.load_scenario(path)
