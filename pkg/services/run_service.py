"""
🚀 UWB Swarm Tracker - Serviço de execução
Monta o mundo simulado, executa, reprocessa logs e faz varreduras de parâmetros
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from config import settings
from localization.ranging import AnchorRegistry
from models.metrics import RunMetrics
from models.scenario import Scenario, ScenarioError
from protocols.clocksync import HardwareClock, NodeClock
from services.metrics_service import metrics_service
from services.scenario_service import ZoneMap, scenario_service
from simulation.agent import TagAgent
from simulation.engine import Engine, Medium
from simulation.nodes import AnchorNode
from utils.event_log import EventLog, read_records, write_records

logger = logging.getLogger(__name__)

EVENTS_FILE = "events.jsonl"
TRAJECTORY_FILE = "trajectory.csv"
METRICS_FILE = "metrics.json"


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    engine: Engine
    agents: Dict[int, TagAgent]
    metrics: RunMetrics

    @property
    def records(self) -> List[Dict[str, Any]]:
        return self.engine.log.records


def _draw_clock(engine: Engine, skew_ppm: float, offset_spread_us: float) -> HardwareClock:
    rate = 1.0 + float(engine.rng.uniform(-skew_ppm, skew_ppm)) * 1e-6 if skew_ppm > 0 else 1.0
    phi = float(engine.rng.uniform(-offset_spread_us, offset_spread_us)) if offset_spread_us > 0 else 0.0
    return HardwareClock(rate=rate, offset_phi=phi)


class RunService:
    """Execuções completas de cenários"""

    def build(self, scenario: Scenario, seed: int,
              event_log: Optional[EventLog] = None) -> Tuple[Engine, Dict[int, TagAgent]]:
        medium_spec = scenario.medium
        protocol = scenario.protocol
        medium = Medium(medium_spec.comm_range, medium_spec.delay_mean_us,
                        medium_spec.delay_jitter_us, medium_spec.airtime_us)
        zones = ZoneMap(scenario) if scenario.zones else None
        engine = Engine(medium, seed=seed, link_filter=zones.link_filter if zones else None, event_log=event_log)

        registry = AnchorRegistry({anchor.id: anchor.position for anchor in scenario.anchors})
        for anchor in sorted(scenario.anchors, key=lambda a: a.id):
            clock = _draw_clock(engine, protocol.clock_skew_ppm, 0.0)
            engine.add_node(AnchorNode(anchor.id, anchor.position, clock, protocol.reply_latency_us))

        trajectories = scenario_service.trajectories(scenario)
        agents: Dict[int, TagAgent] = {}
        for tag in sorted(scenario.tags, key=lambda t: t.id):
            clock = _draw_clock(engine, protocol.clock_skew_ppm, protocol.clock_offset_spread_us)
            agent = TagAgent(tag.id, trajectories[tag.id].position, NodeClock(clock), registry,
                             protocol, medium_spec, tag.start_us, tag.stop_us)
            engine.add_node(agent)
            agents[tag.id] = agent
        return engine, agents

    def run(self, scenario: Scenario, seed: Optional[int] = None, duration_us: Optional[int] = None,
            record_traffic: bool = True) -> RunResult:
        """Executa o cenário; sem `record_traffic` o log guarda só anotações (métricas iguais, menos memória)"""
        seed = scenario.seed if seed is None else seed
        duration_us = duration_us or scenario.duration_us
        engine, agents = self.build(scenario, seed, EventLog(enabled=record_traffic))

        engine.annotate('run_start', None, scenario=scenario.to_json_dict(), seed=seed, duration_us=duration_us)
        for agent in agents.values():
            agent.boot(engine)

        logger.info(f"Executando '{scenario.name}' seed={seed} por {duration_us / 1e6:.1f} s")
        engine.run(until=duration_us)
        engine.annotate('run_end', None, stats=engine.stats.to_dict())

        metrics = metrics_service.compute_metrics(
            engine.log.records, scenario_service.trajectories(scenario), scenario, seed)
        return RunResult(scenario, seed, engine, agents, metrics)

    def write_outputs(self, records: List[Dict[str, Any]], metrics: RunMetrics, out_dir: Union[str, Path],
                      write_events: bool = True) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if write_events:
            write_records(out / EVENTS_FILE, records)
        metrics_service.write_trajectory(metrics_service.trajectory_frame(records), out / TRAJECTORY_FILE)
        (out / METRICS_FILE).write_text(metrics.model_dump_json(indent=2), encoding='utf-8')
        logger.info(f"Saídas gravadas em {out}")
        return out

    def run_to_dir(self, scenario: Scenario, seed: int, out_dir: Union[str, Path]) -> RunResult:
        result = self.run(scenario, seed)
        self.write_outputs(result.records, result.metrics, out_dir)
        return result

    def replay(self, log_path: Union[str, Path], out_dir: Optional[Union[str, Path]] = None,
               verify: bool = False) -> RunMetrics:
        """Recalcula as métricas a partir de um log gravado"""
        records = read_records(Path(log_path))
        header = next((r for r in records if r['kind'] == 'run_start'), None)
        if header is None:
            raise ScenarioError([(str(log_path), "log sem registro run_start")])

        scenario = scenario_service.parse(header['msg']['scenario'])
        seed = header['msg']['seed']
        metrics = metrics_service.compute_metrics(
            records, scenario_service.trajectories(scenario), scenario, seed)

        if verify:
            fresh = self.run(scenario, seed, header['msg'].get('duration_us'))
            if EventLog.dumps_records(fresh.records) != EventLog.dumps_records(records):
                raise RuntimeError("replay divergiu do log gravado")
            logger.info("Replay verificado: log idêntico")

        if out_dir is not None:
            self.write_outputs(records, metrics, out_dir, write_events=False)
        return metrics

    def load_metrics(self, run_dir: Union[str, Path]) -> RunMetrics:
        path = Path(run_dir) / METRICS_FILE
        if path.exists():
            return RunMetrics.model_validate_json(path.read_text(encoding='utf-8'))
        return self.replay(Path(run_dir) / EVENTS_FILE)

    def sweep(self, scenario: Scenario, param: str, values: Sequence[Any], seed: Optional[int] = None,
              jobs: int = None) -> List[Dict[str, Any]]:
        """Uma execução independente por valor; em paralelo entre processos quando jobs > 1"""
        jobs = jobs or settings.SWEEP_JOBS
        variants = [apply_override(scenario, param, value) for value in values]
        seed = scenario.seed if seed is None else seed
        tasks = [(variant.to_json_dict(), seed) for variant in variants]

        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_payload, tasks))
        else:
            results = [_run_payload(task) for task in tasks]

        return [{'param': param, 'value': value, 'metrics': metrics}
                for value, metrics in zip(values, results)]


def apply_override(scenario: Scenario, param: str, value: Any) -> Scenario:
    """Copia o cenário com `param` (caminho pontilhado ou nome de parâmetro) alterado"""
    data = scenario.to_json_dict()
    path = param.split('.')
    if len(path) == 1:
        for section in ('protocol', 'medium'):
            if path[0] in data[section]:
                path = [section, path[0]]
                break
    target = data
    for key in path[:-1]:
        if key not in target or not isinstance(target[key], dict):
            raise ScenarioError([(param, "parâmetro desconhecido")])
        target = target[key]
    if path[-1] not in target:
        raise ScenarioError([(param, "parâmetro desconhecido")])
    target[path[-1]] = value
    return scenario_service.parse(data)


def parse_values(raw: str) -> List[Any]:
    """'25,30,35' → [25, 30, 35]; valores não-JSON ficam como texto"""
    values = []
    for item in raw.split(','):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    return values


def _run_payload(task) -> Dict[str, Any]:
    scenario_data, seed = task
    scenario = scenario_service.parse(scenario_data)
    try:
        return run_service.run(scenario, seed, record_traffic=False).metrics.model_dump(mode='json')
    except Exception as exc:
        logger.error(f"Execução de '{scenario.name}' falhou: {exc}")
        raise


run_service = RunService()
