"""
📈 UWB Swarm Tracker - Serviço de métricas
Erros de posição, colisões, sincronização e tabelas de escalonamento a partir do log de eventos
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from models.metrics import RunMetrics, ScheduleTable, SyncCycle, TagError
from models.scenario import Scenario
from protocols.clocksync import average_neighbor_offset
from protocols.tdma import two_hop_conflicts
from services.scenario_service import Trajectory, adjacency
from simulation.messages import FAMILY_BY_KIND, MessageFamily

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ['time_us', 'tag', 'est_x', 'est_y', 'est_z', 'true_x', 'true_y', 'true_z',
                      'update_type', 'trace_P']


class MetricsService:
    """Pós-processamento puro: o mesmo log sempre produz as mesmas métricas"""

    def trajectory_frame(self, records: Iterable[Dict[str, Any]],
                         trajectories: Optional[Dict[int, Trajectory]] = None) -> pd.DataFrame:
        """Uma linha por saída do EKF; verdade recalculada das trajetórias quando informadas"""
        rows = []
        for record in records:
            if record['kind'] != 'estimate':
                continue
            msg = record['msg']
            tag = msg['tag']
            truth = msg['true']
            if trajectories is not None and tag in trajectories:
                truth = trajectories[tag].position(record['time_us'])
            rows.append([record['time_us'], tag, *msg['est'], *truth, msg['update_type'], msg['trace_P']])
        return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)

    def position_errors(self, frame: pd.DataFrame) -> List[TagError]:
        if frame.empty:
            return []
        est = frame[['est_x', 'est_y', 'est_z']].to_numpy(dtype=float)
        true = frame[['true_x', 'true_y', 'true_z']].to_numpy(dtype=float)
        frame = frame.assign(
            err=np.linalg.norm(est - true, axis=1),
            err_xy=np.linalg.norm(est[:, :2] - true[:, :2], axis=1),
        )

        errors = []
        for tag, per_tag in frame.groupby('tag', sort=True):
            errors.append(self._summarize(int(tag), 'all', per_tag))
            for update_type, group in per_tag.groupby('update_type', sort=True):
                errors.append(self._summarize(int(tag), str(update_type), group))
        return errors

    @staticmethod
    def _summarize(tag: int, update_type: str, group: pd.DataFrame) -> TagError:
        return TagError(
            tag=tag,
            update_type=update_type,
            samples=len(group),
            rmse=float(np.sqrt(np.mean(group['err'] ** 2))),
            mae=float(group['err'].mean()),
            rmse_xy=float(np.sqrt(np.mean(group['err_xy'] ** 2))),
            mae_xy=float(group['err_xy'].mean()),
        )

    def collision_counts(self, records: Iterable[Dict[str, Any]]) -> Dict[str, int]:
        """Perdas por colisão por família: do resumo run_end, ou contando os registros de descarte"""
        records = list(records)
        counts = {family.value: 0 for family in MessageFamily}
        end = next((r for r in records if r['kind'] == 'run_end'), None)
        if end is not None and 'dropped_by_collision' in end['msg'].get('stats', {}):
            for family, dropped in end['msg']['stats']['dropped_by_collision'].items():
                counts[family] = counts.get(family, 0) + int(dropped)
            return counts
        for record in records:
            if record['kind'] == 'drop':
                family = FAMILY_BY_KIND.get(record['msg'].get('type'))
                if family is not None:
                    counts[family.value] += 1
        return counts

    def sync_cycles(self, records: List[Dict[str, Any]], comm_range: float) -> List[SyncCycle]:
        by_cycle: Dict[int, List[Dict[str, Any]]] = {}
        for record in records:
            if record['kind'] == 'sync':
                by_cycle.setdefault(record['msg']['cycle'], []).append(record)

        cycles = []
        for cycle, entries in sorted(by_cycle.items()):
            t_star = max(entry['time_us'] for entry in entries)
            logical = {}
            positions = {}
            for entry in entries:
                msg = entry['msg']
                logical[entry['src']] = msg['rate'] * t_star + msg['phi'] + msg['theta']
                positions[entry['src']] = tuple(msg['position'])

            graph = adjacency(positions, comm_range)
            offsets = [
                average_neighbor_offset(logical[tag], tuple(logical[n] for n in sorted(neighbors)))
                for tag, neighbors in sorted(graph.items()) if neighbors
            ]

            cycles.append(SyncCycle(
                cycle=cycle,
                tags=len(entries),
                max_offset_us=float(max((abs(o) for o in offsets), default=0.0)),
                mean_abs_offset_us=float(np.mean(np.abs(offsets))) if offsets else 0.0,
                max_update_us=float(max(entry['msg']['max_update'] for entry in entries)),
                synchronized=sum(1 for entry in entries if entry['msg']['synchronized']),
            ))
        return cycles

    def schedule_tables(self, records: Iterable[Dict[str, Any]]) -> List[ScheduleTable]:
        tables = [
            ScheduleTable(cycle=r['msg']['cycle'], tag=r['src'], own=r['msg']['own'],
                          recv=r['msg']['recv'], converged=r['msg']['converged'])
            for r in records if r['kind'] == 'schedule'
        ]
        return sorted(tables, key=lambda t: (t.cycle, t.tag))

    def slot_conflicts(self, tables: List[ScheduleTable],
                       records: List[Dict[str, Any]], comm_range: float) -> int:
        """Pares de tags a até dois saltos com o mesmo slot, somados por ciclo"""
        positions_by_cycle: Dict[int, Dict[int, tuple]] = {}
        for record in records:
            if record['kind'] == 'sync':
                positions_by_cycle.setdefault(record['msg']['cycle'], {})[record['src']] = tuple(record['msg']['position'])

        total = 0
        for cycle in sorted({t.cycle for t in tables}):
            own = {t.tag: t.own for t in tables if t.cycle == cycle}
            positions = positions_by_cycle.get(cycle, {})
            graph = adjacency(positions, comm_range, [tag for tag in own if tag in positions])
            total += len(two_hop_conflicts({tag: own[tag] for tag in graph}, graph))
        return total

    @staticmethod
    def slot_utilization(tables: List[ScheduleTable], num_slots: int) -> float:
        cycles = sorted({t.cycle for t in tables})
        if not cycles:
            return 0.0
        fractions = []
        for cycle in cycles:
            used = set()
            for table in tables:
                if table.cycle == cycle:
                    used.update(table.own)
            fractions.append(len(used) / num_slots)
        return float(np.mean(fractions))

    def compute_metrics(self, records: List[Dict[str, Any]], trajectories: Optional[Dict[int, Trajectory]],
                        scenario: Scenario, seed: int) -> RunMetrics:
        comm_range = scenario.medium.comm_range
        collisions = self.collision_counts(records)
        tables = self.schedule_tables(records)
        sync = self.sync_cycles(records, comm_range)

        delivery: Dict[str, Dict[str, int]] = {}
        duration_us = scenario.duration_us
        for record in records:
            if record['kind'] == 'run_end':
                delivery = _sorted_nested(record['msg']['stats'])
            elif record['kind'] == 'run_start':
                duration_us = record['msg'].get('duration_us', duration_us)

        metrics = RunMetrics(
            scenario=scenario.name,
            seed=seed,
            duration_us=duration_us,
            errors=self.position_errors(self.trajectory_frame(records, trajectories)),
            collisions=collisions,
            task_collisions=collisions[MessageFamily.TASK.value],
            delivery=delivery,
            sync=sync,
            schedules=tables,
            slot_conflicts=self.slot_conflicts(tables, records, comm_range),
            slot_utilization=self.slot_utilization(tables, scenario.protocol.num_slots),
        )
        logger.info(f"Métricas de '{scenario.name}' (seed {seed}): {len(metrics.errors)} grupos de erro, "
                    f"{metrics.task_collisions} colisões na fase TASK")
        return metrics

    def write_trajectory(self, frame: pd.DataFrame, path: Path) -> None:
        frame.to_csv(path, index=False, columns=TRAJECTORY_COLUMNS)


def _sorted_nested(value: Any) -> Any:
    """Dicionários com chaves ordenadas em todos os níveis, como no log serializado"""
    if isinstance(value, dict):
        return {key: _sorted_nested(value[key]) for key in sorted(value)}
    return value


metrics_service = MetricsService()


def compute_metrics(records: List[Dict[str, Any]], trajectories: Optional[Dict[int, Trajectory]],
                    scenario: Scenario, seed: int = 0) -> RunMetrics:
    return metrics_service.compute_metrics(records, trajectories, scenario, seed)
