"""
🏷️ UWB Swarm Tracker - Agente do tag
Máquina de estados do ciclo SYNC → TDMA → TASK e fluxo de decisão de cada slot
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from localization import ekf as filters
from localization.ekf import EkfState, RangeObservation, TrilaterationObservation, UpdateType
from localization.ranging import (AnchorRegistry, RangeMeasurement, RefKind, TwrEndpoint, perform_twr, select_mode,
                                  trilaterate)
from models.scenario import MediumSpec, ProtocolSpec
from protocols import clocksync, tdma
from protocols.clocksync import NeighborClockTable, NodeClock, SyncAction
from simulation.engine import Engine, Position, SimTime, TimerToken
from simulation.errors import (DegenerateGeometry, NegativeToF, NoFreeSlot, NonConvergence, NoReference,
                               RangingTimeout, SingularGeometry, SingularInnovation)
from simulation.messages import PositionBroadcast, RangePoll, RangeResponse, RosterMsg, SynMsg, TdmaMsg
from simulation.nodes import RadioNode
from utils.ttl_table import TtlTable

logger = logging.getLogger(__name__)

TICK = "tick"
SYN = "syn"
TDMA = "tdma"
POLL = "poll"
FUSE = "fuse"
BOOT = "boot"


class Phase(Enum):
    SYNC = "sync"
    SCHEDULE = "schedule"
    TASK = "task"


PHASE_ORDER = (Phase.SYNC, Phase.SCHEDULE, Phase.TASK)


@dataclass(frozen=True)
class CyclePhase:
    phase: Phase
    phase_start: float  # tempo lógico (µs)
    cycle_index: int

    def ordinal(self) -> int:
        return self.cycle_index * len(PHASE_ORDER) + PHASE_ORDER.index(self.phase)


@dataclass(frozen=True)
class PhaseTiming:
    sync_us: int
    schedule_us: int
    task_us: int

    @classmethod
    def from_protocol(cls, protocol: ProtocolSpec) -> "PhaseTiming":
        return cls(protocol.sync_duration_us, protocol.schedule_duration_us, protocol.task_duration_us)

    @property
    def cycle_us(self) -> int:
        return self.sync_us + self.schedule_us + self.task_us

    def cycle_start(self, cycle_index: int) -> int:
        return cycle_index * self.cycle_us

    def phase_at(self, logical_time: float) -> CyclePhase:
        cycle_index = int(math.floor(logical_time / self.cycle_us))
        base = self.cycle_start(cycle_index)
        offset = logical_time - base
        if offset < self.sync_us:
            return CyclePhase(Phase.SYNC, base, cycle_index)
        if offset < self.sync_us + self.schedule_us:
            return CyclePhase(Phase.SCHEDULE, base + self.sync_us, cycle_index)
        return CyclePhase(Phase.TASK, base + self.sync_us + self.schedule_us, cycle_index)


class ActionKind(Enum):
    POLL = "poll"
    FUSE = "fuse"
    BROADCAST = "broadcast"


@dataclass(frozen=True)
class SlotAction:
    kind: ActionKind
    target: Optional[int] = None


class VisibilityView:
    """Âncoras com TWR bem-sucedido e vizinhos com posição anunciada, dentro da janela do coletor"""

    def __init__(self, window: float):
        self.anchors = TtlTable(window)  # id → RangeMeasurement
        self.neighbors = TtlTable(window)  # id → PositionBroadcast

    def refresh(self, now: float) -> None:
        self.anchors.collect(now)
        self.neighbors.collect(now)

    @property
    def visible_anchors(self) -> List[Tuple[int, RangeMeasurement]]:
        return list(self.anchors.items())

    @property
    def visible_neighbors(self) -> List[Tuple[int, PositionBroadcast]]:
        return list(self.neighbors.items())


def select_reference(view: VisibilityView) -> int:
    """Âncora com a medição mais recente; senão o vizinho de menor confiança κ"""
    anchors = view.visible_anchors
    if anchors:
        freshest = max(measurement.taken_at for _, measurement in anchors)
        return min(node_id for node_id, measurement in anchors if measurement.taken_at == freshest)

    neighbors = view.visible_neighbors
    if neighbors:
        best = min(broadcast.confidence for _, broadcast in neighbors)
        return min(node_id for node_id, broadcast in neighbors if broadcast.confidence == best)

    raise NoReference("nenhuma âncora ou vizinho visível")


def execute_slot(view: VisibilityView, discovery: Sequence[int] = (),
                 max_polls: Optional[int] = None) -> List[SlotAction]:
    """Plano de ações do slot próprio (polls, fusão, anúncio de posição)"""
    anchor_ids = [node_id for node_id, _ in view.visible_anchors]
    if len(anchor_ids) >= 3:
        targets = list(anchor_ids)
    else:
        try:
            targets = [select_reference(view)]
        except NoReference:
            targets = []
    targets += [anchor for anchor in discovery if anchor not in targets]
    if max_polls is not None:
        targets = targets[:max_polls]

    actions = [SlotAction(ActionKind.POLL, target) for target in targets]
    actions.append(SlotAction(ActionKind.FUSE))
    actions.append(SlotAction(ActionKind.BROADCAST))
    return actions


class TagAgent(RadioNode):
    """Tag móvel: sincroniza, negocia slots e localiza-se nos slots próprios"""

    def __init__(self, node_id: int, position_fn: Callable[[SimTime], Position], clock: NodeClock,
                 registry: AnchorRegistry, protocol: ProtocolSpec, medium: MediumSpec,
                 start_us: int = 0, stop_us: Optional[int] = None):
        super().__init__(node_id, position_fn, clock, protocol.reply_latency_us, start_us, stop_us)
        self.registry = registry
        self.protocol = protocol
        self.medium = medium
        self.timing = PhaseTiming.from_protocol(protocol)
        self.delta = protocol.delta_us(medium)

        self.phase: Optional[CyclePhase] = None
        self.neighbors = TtlTable(protocol.gc_window_us)  # vizinhos tag → último L ouvido
        self.members = TtlTable(protocol.gc_window_us)  # tags da rede (diretos ou por anúncio) → L de origem
        self._heard: Set[int] = set()  # tags ouvidos desde o início do ciclo
        self.view = VisibilityView(protocol.gc_window_us)
        self.ekf: Optional[EkfState] = None

        # sincronização
        self.clock_table = NeighborClockTable(protocol.sync_duration_us)
        self._max_update = 0.0
        self._synchronized = False

        # escalonamento
        self.schedule_state: Optional[tdma.ScheduleState] = None
        self.own_slots: List[int] = []
        self._access_index = 0
        self._outbox: List[Union[TdmaMsg, RosterMsg]] = []

        # tarefa
        self._plan: List[SlotAction] = []
        self._slot_measurements: List[RangeMeasurement] = []
        self._pending_polls: Dict[int, int] = {}
        self._poll_seq = 0
        self._discovery_cursor = 0
        self._current_slot: Optional[int] = None

        spacing = medium.airtime_us + medium.delay_mean_us + medium.delay_jitter_us + 100
        self._packet_spacing = int(math.ceil(spacing))

    # ---------- relógio e timers ----------

    def logical_now(self, engine: Engine) -> float:
        return self.clock.read_logical(engine.now)

    def _at_logical(self, engine: Engine, logical_time: float, name: str, arg: Optional[int] = None) -> None:
        at = max(self.clock.true_time_of(logical_time), engine.now)
        engine.schedule_timer(self.node_id, at, TimerToken(name, arg))

    def boot(self, engine: Engine) -> None:
        """Agenda a primeira ativação do tag"""
        engine.schedule_timer(self.node_id, max(self.start_us, engine.now), TimerToken(BOOT))

    def _join(self, engine: Engine) -> None:
        now_l = self.logical_now(engine)
        phase = self.timing.phase_at(now_l)
        offset = now_l - self.timing.cycle_start(phase.cycle_index)
        minislot = self.protocol.minislot_us
        if offset < self.timing.sync_us / 2:
            target = self.timing.cycle_start(phase.cycle_index) + math.ceil(offset / minislot) * minislot
        else:
            target = self.timing.cycle_start(phase.cycle_index + 1)
        logger.info(f"Tag {self.node_id} entra na rede em L={target:.0f}")
        self._at_logical(engine, target, TICK, int(target))

    def on_phase_boundary(self, now_logical: float) -> CyclePhase:
        """Avança a fase quando o tempo lógico cruza uma fronteira"""
        current = self.timing.phase_at(now_logical)
        if self.phase is not None and current.ordinal() != self.phase.ordinal():
            jump = current.ordinal() - self.phase.ordinal()
            if jump < 0:
                logger.warning(f"Tag {self.node_id}: relógio recuou de {self.phase.phase.value} "
                               f"(ciclo {self.phase.cycle_index}), fase mantida")
                return self.phase
            if jump > 1:
                logger.warning(f"Tag {self.node_id}: {jump - 1} fase(s) saltada(s) até "
                               f"{current.phase.value} do ciclo {current.cycle_index}")
        self.phase = current
        return current

    # ---------- despacho ----------

    def on_timer(self, token: TimerToken, engine: Engine) -> None:
        if token.name == BOOT:
            self._join(engine)
        elif token.name == TICK:
            self._on_tick(token.arg, engine)
        elif token.name == SYN:
            if self.phase is not None and self.phase.phase == Phase.SYNC:
                self.send(engine, SynMsg(self.logical_now(engine)))
        elif token.name == TDMA:
            self._send_tdma(token.arg, engine)
        elif token.name == POLL:
            self._send_poll(token.arg, engine)
        elif token.name == FUSE:
            self._fuse(engine)

    def on_message(self, msg, source: int, engine: Engine) -> None:
        super().on_message(msg, source, engine)
        now_l = self.logical_now(engine)
        if source not in self.registry:
            self._heard_tag(source, now_l)
        scheduling = self.phase is not None and self.phase.phase == Phase.SCHEDULE and self.schedule_state is not None
        if scheduling and isinstance(msg, (TdmaMsg, RosterMsg)):
            # donos que já saíram não bloqueiam a proposta recebida
            tdma.gc_neighbors(self.schedule_state, now_l, self.protocol.gc_window_us)

        if isinstance(msg, SynMsg):
            if self.phase is not None and self.phase.phase == Phase.SYNC:
                self.clock_table.record(source, msg.logical_time, now_l)
        elif isinstance(msg, TdmaMsg):
            if scheduling:
                tdma.on_tdma_msg(self.schedule_state, msg, now_l)
        elif isinstance(msg, RosterMsg):
            self._merge_members(msg.members)
            if scheduling:
                tdma.on_roster(self.schedule_state, msg, now_l)
        elif isinstance(msg, PositionBroadcast):
            self.view.neighbors.set(msg.sender, msg, now_l)
        elif isinstance(msg, RangeResponse) and msg.initiator == self.node_id:
            self._on_response(msg, engine)

    def _heard_tag(self, node_id: int, now_l: float) -> None:
        self.neighbors.set(node_id, now_l, now_l)
        self.members.set(node_id, now_l, now_l)
        self._heard.add(node_id)

    def _merge_members(self, members: Iterable[Tuple[int, float]]) -> None:
        """Une a lista anunciada à nossa, guardando o carimbo de origem mais recente"""
        for node_id, stamp in members:
            if node_id == self.node_id or node_id in self.registry:
                continue
            if node_id not in self.members or self.members.stamped_at(node_id) < stamp:
                self.members.set(node_id, stamp, stamp)

    def _on_tick(self, target: int, engine: Engine) -> None:
        phase = self.on_phase_boundary(target)
        base = self.timing.cycle_start(phase.cycle_index)
        offset = target - base

        if phase.phase == Phase.SYNC:
            next_target = self._sync_tick(engine, offset, base)
        elif phase.phase == Phase.SCHEDULE:
            if offset == self.timing.sync_us:
                self._finish_sync(engine, phase.cycle_index)
                self._begin_schedule(engine, target)
            next_target = self._schedule_tick(engine, target, base)
        else:
            if offset == self.timing.sync_us + self.timing.schedule_us:
                self._finish_schedule(engine, phase.cycle_index)
            else:
                self._run_slot(engine, target, base)
            next_target = self._next_slot_tick(target, base)

        self._at_logical(engine, next_target, TICK, int(next_target))

    # ---------- SYNC ----------

    def _sync_tick(self, engine: Engine, offset: int, base: int) -> int:
        minislot = self.protocol.minislot_us
        if offset == 0:
            self.clock_table.clear()
            self._heard.clear()
            self._max_update = 0.0
            self._synchronized = False
        else:
            self._apply_sync_batch(engine)

        if clocksync.sync_phase_action(engine.rng, self.protocol.p_tx) == SyncAction.BROADCAST:
            latest = max(minislot // 2 - self.medium.airtime_us, 0)
            jitter = int(engine.rng.integers(0, latest + 1))
            self._at_logical(engine, base + offset + jitter, SYN)

        return base + offset + minislot

    def _apply_sync_batch(self, engine: Engine) -> None:
        now_l = self.logical_now(engine)
        update = clocksync.compute_offset_update(self.clock_table, now_l, self.delta)
        if len(self.clock_table):
            self._synchronized = clocksync.is_synchronized(
                self.clock_table, now_l, self.protocol.sync_threshold_us, False, self.delta)
        self.clock.apply_offset_update(update)
        self._max_update = max(self._max_update, abs(update))
        self.clock_table.clear()

    def _finish_sync(self, engine: Engine, cycle_index: int) -> None:
        self._apply_sync_batch(engine)
        snapshot = self.clock.snapshot()
        # fim da fase: quem não atingiu o limiar sai pela cláusula de timeout
        engine.annotate('sync', self.node_id, cycle=cycle_index, max_update=self._max_update,
                        synchronized=self._synchronized, timed_out=not self._synchronized,
                        position=list(self.position(engine.now)), **snapshot)
        logger.debug(f"Tag {self.node_id} ciclo {cycle_index}: maior ajuste {self._max_update:.1f} µs")

    # ---------- TDMA ----------

    def _round_us(self) -> int:
        return self.protocol.access_slots * self.protocol.access_slot_us

    def _rounds(self) -> int:
        return self.protocol.schedule_duration_us // self._round_us()

    def _known_tags(self, now_l: float) -> List[int]:
        """Tags ouvidos diretamente ou anunciados por vizinhos, ainda dentro da janela"""
        self.members.collect(now_l)
        direct = {node_id for node_id in self.neighbors.keys() if node_id not in self.registry}
        return sorted(set(self.members.keys()) | direct | {self.node_id})

    def _begin_schedule(self, engine: Engine, target: int) -> None:
        self.schedule_state = tdma.ScheduleState(
            node_id=self.node_id,
            num_slots=self.protocol.num_slots,
            neighbor_table=self.neighbors,
            peers=set(self._heard),
        )
        tdma.gc_neighbors(self.schedule_state, target, self.protocol.gc_window_us)
        known = self._known_tags(target)
        if len(known) > self.protocol.access_slots:
            logger.warning(f"Tag {self.node_id}: {len(known)} tags conhecidos para {self.protocol.access_slots} "
                           f"vezes de acesso; vezes repetidas dependem do eco para não conflitar")
        self.schedule_state.preferred_slot = tdma.initial_sequence(known, self.node_id) % self.protocol.num_slots
        self._outbox = []

    def _schedule_tick(self, engine: Engine, target: int, base: int) -> int:
        """Início de rodada recalcula a vez de acesso; a vez em si negocia slots"""
        start = base + self.timing.sync_us
        end = start + self.timing.schedule_us
        round_index, offset = divmod(target - start, self._round_us())
        if self.schedule_state is None or round_index >= self._rounds():
            return end

        if offset == 0:
            rank = tdma.initial_sequence(self._known_tags(target), self.node_id)
            self._access_index = rank % self.protocol.access_slots
            if self._access_index > 0:
                return target + self._access_index * self.protocol.access_slot_us

        self._take_turn(engine, target)
        if round_index + 1 < self._rounds():
            return start + (round_index + 1) * self._round_us()
        return end

    def _turn_budget(self) -> int:
        usable = self.protocol.access_slot_us - 2 * self.protocol.guard_us
        return max(usable // self._packet_spacing, 1)

    def _roster(self, now_l: float) -> RosterMsg:
        self.members.collect(now_l)
        members = dict(self.members.items())
        members[self.node_id] = float(now_l)
        return RosterMsg(self.node_id, tuple(sorted(members.items())), self.schedule_state.accepted())

    def _take_turn(self, engine: Engine, target: int) -> None:
        state = self.schedule_state
        state.turn += 1
        tdma.gc_neighbors(state, target, self.protocol.gc_window_us)
        confirmed = tdma.confirm_claims(state)
        if confirmed:
            logger.debug(f"Tag {self.node_id}: slots confirmados {confirmed}")

        # rejeições e cancelamentos, reanúncios, nova proposta; o anúncio fecha a vez
        budget = self._turn_budget() - 1
        outbox: List[Union[TdmaMsg, RosterMsg]] = []
        while state.msg_queue and len(outbox) < budget:
            outbox.append(tdma.propose_slot(state))
        for msg in tdma.unacknowledged_claims(state):
            if len(outbox) < budget:
                outbox.append(msg)
        if len(outbox) < budget:
            try:
                outbox.append(tdma.propose_slot(state, engine.rng, self.protocol.slot_selection == 'random'))
            except NoFreeSlot:
                pass
        outbox.append(self._roster(target))
        self._outbox = outbox

        guard = self.protocol.guard_us
        room = self.protocol.access_slot_us - 2 * guard - len(outbox) * self._packet_spacing
        start = target + guard + int(engine.rng.integers(0, max(room, 0) + 1))
        for index in range(len(outbox)):
            self._at_logical(engine, start + index * self._packet_spacing, TDMA, index)

    def _send_tdma(self, index: int, engine: Engine) -> None:
        if self.phase is None or self.phase.phase != Phase.SCHEDULE or index >= len(self._outbox):
            return
        self.send(engine, self._outbox[index])

    def _finish_schedule(self, engine: Engine, cycle_index: int) -> None:
        state = self.schedule_state
        if state is None:
            self.own_slots = []
            return
        dropped = tdma.drop_unconfirmed(state)
        if dropped:
            logger.debug(f"Tag {self.node_id}: reivindicações não confirmadas liberadas {dropped}")
        self.own_slots = state.own_slots()
        engine.annotate('schedule', self.node_id, cycle=cycle_index,
                        converged=tdma.schedule_converged(state, self.protocol.min_own_slots),
                        neighbors=[n for n in self.neighbors.keys() if n not in self.registry],
                        **state.table_view())
        if not self.own_slots:
            logger.warning(f"Tag {self.node_id} sem slot no ciclo {cycle_index}")
        else:
            logger.debug(f"Tag {self.node_id} ciclo {cycle_index}: slots {self.own_slots}")

    # ---------- TASK ----------

    def _slot_tick_target(self, base: int, slot: int) -> int:
        return (base + self.timing.sync_us + self.timing.schedule_us
                + slot * self.protocol.slot_duration_us + self.protocol.guard_us)

    def _next_slot_tick(self, target: int, base: int) -> int:
        for slot in self.own_slots:
            candidate = self._slot_tick_target(base, slot)
            if candidate > target:
                return candidate
        return base + self.timing.cycle_us

    def _max_polls(self) -> int:
        usable = (self.protocol.slot_duration_us - 2 * self.protocol.guard_us
                  - self.medium.airtime_us - self.medium.delay_mean_us - self.medium.delay_jitter_us)
        return max(int(usable // self.protocol.twr_window_us), 0)

    def _discovery_candidates(self) -> List[int]:
        """Âncoras fora da visão atual, em rodízio, para redescobrir enlaces"""
        hidden = [node_id for node_id in self.registry.ids() if node_id not in self.view.anchors]
        if not hidden or self.protocol.max_discovery_polls == 0:
            return []
        count = min(self.protocol.max_discovery_polls, len(hidden))
        start = self._discovery_cursor % len(hidden)
        self._discovery_cursor += count
        return [hidden[(start + i) % len(hidden)] for i in range(count)]

    def _run_slot(self, engine: Engine, target: int, base: int) -> None:
        self._current_slot = (target - self.protocol.guard_us - base - self.timing.sync_us
                              - self.timing.schedule_us) // self.protocol.slot_duration_us
        self.view.refresh(target)
        self._slot_measurements = []
        self._pending_polls = {}
        self._plan = execute_slot(self.view, self._discovery_candidates(), self._max_polls())

        window = self.protocol.twr_window_us
        polls = [action for action in self._plan if action.kind == ActionKind.POLL]
        for index in range(len(polls)):
            self._at_logical(engine, target + index * window, POLL, index)
        self._at_logical(engine, target + len(polls) * window, FUSE)

    def _send_poll(self, index: int, engine: Engine) -> None:
        polls = [action for action in self._plan if action.kind == ActionKind.POLL]
        if index >= len(polls):
            return
        self._poll_seq += 1
        responder = polls[index].target
        self._pending_polls[self._poll_seq] = responder
        self.send(engine, RangePoll(self.node_id, responder, self._poll_seq))

    def _on_response(self, msg: RangeResponse, engine: Engine) -> None:
        responder = self._pending_polls.pop(msg.seq, None)
        if responder is None or responder != msg.responder:
            return

        positions = engine.positions()
        if self.node_id not in positions or msg.responder not in positions:
            return
        if msg.responder in self.registry:
            responder = TwrEndpoint(msg.responder, positions[msg.responder],
                                    advertised=self.registry.position(msg.responder))
        elif msg.responder in self.view.neighbors:
            broadcast = self.view.neighbors[msg.responder]
            responder = TwrEndpoint(msg.responder, positions[msg.responder], kind=RefKind.NEIGHBOR,
                                    confidence=broadcast.confidence, advertised=tuple(broadcast.position))
        else:
            return

        taken_at = int(round(self.logical_now(engine)))
        initiator = TwrEndpoint(self.node_id, positions[self.node_id], self.clock.hardware)
        try:
            measurement = perform_twr(initiator, responder, self.medium, engine.rng, now=taken_at,
                                      sigma_d=self.protocol.sigma_d, reply_latency_us=self.reply_latency_us,
                                      t_reply_us=msg.t_reply_us)
        except (NegativeToF, RangingTimeout) as exc:
            logger.debug(f"Tag {self.node_id}: troca com {msg.responder} descartada ({exc})")
            return

        if measurement.ref_kind == RefKind.ANCHOR:
            self.view.anchors.set(msg.responder, measurement, taken_at)
        self._slot_measurements.append(measurement)
        engine.annotate('measurement', self.node_id, **measurement.to_dict())

    def _fuse(self, engine: Engine) -> None:
        if self._pending_polls:
            logger.debug(f"Tag {self.node_id}: {len(self._pending_polls)} poll(s) sem resposta")
        self._pending_polls = {}

        now_l = int(round(self.logical_now(engine)))
        update_type = self._fuse_measurements(now_l)
        if self.ekf is None:
            logger.debug(f"Tag {self.node_id}: filtro ainda não inicializado")
            return

        phase = self.phase
        engine.annotate('estimate', self.node_id,
                        tag=self.node_id,
                        cycle=phase.cycle_index if phase else None,
                        slot=self._current_slot,
                        est=[float(c) for c in self.ekf.position],
                        true=list(self.position(engine.now)),
                        update_type=update_type.value,
                        trace_P=self.ekf.trace())

        if update_type != UpdateType.MODEL_ONLY:
            confidence = filters.confidence_of(self.ekf.P)
            self.send(engine, PositionBroadcast(self.node_id, tuple(float(c) for c in self.ekf.position),
                                                confidence, float(now_l)))

    def _fuse_measurements(self, now_l: int) -> UpdateType:
        """Reavalia o fluxo de decisão com as medições que de fato chegaram"""
        protocol = self.protocol
        anchors = [m for m in self._slot_measurements if m.ref_kind == RefKind.ANCHOR]
        neighbors = [m for m in self._slot_measurements if m.ref_kind == RefKind.NEIGHBOR]

        if self.ekf is not None:
            dt = max(now_l - self.ekf.last_update, 0) * 1e-6
            advance = filters.predict if self._slot_measurements else filters.coast
            self.ekf = advance(self.ekf, dt, protocol.q_pos, protocol.q_vel)
            self.ekf.last_update = now_l

        if len(anchors) >= 3:
            fix = self._trilaterate(anchors)
            if fix is not None:
                if self.ekf is None:
                    self.ekf = EkfState.from_position(fix, at=now_l)
                    return UpdateType.TRILATERATION
                try:
                    self.ekf = filters.update_trilateration(
                        self.ekf, TrilaterationObservation(tuple(fix), tuple(protocol.eta_p)))
                    return UpdateType.TRILATERATION
                except SingularInnovation as exc:
                    logger.warning(f"Tag {self.node_id}: {exc}")

        if self.ekf is None:
            return UpdateType.MODEL_ONLY

        if anchors:
            freshest = max(m.taken_at for m in anchors)
            measurement = min((m for m in anchors if m.taken_at == freshest), key=lambda m: m.ref_id)
            eta = filters.range_noise(RefKind.ANCHOR, (now_l - measurement.taken_at) * 1e-6, eta_min=protocol.eta_min)
            return self._range_update(measurement, eta, UpdateType.RANGE_ANCHOR)

        if neighbors:
            best = min(m.ref_confidence for m in neighbors)
            measurement = min((m for m in neighbors if m.ref_confidence == best), key=lambda m: m.ref_id)
            kappa = 10 ** measurement.ref_confidence if math.isfinite(measurement.ref_confidence) else math.inf
            eta = filters.range_noise(RefKind.NEIGHBOR, 0.0, kappa, eta_min=protocol.eta_min)
            return self._range_update(measurement, eta, UpdateType.RANGE_NEIGHBOR)

        return UpdateType.MODEL_ONLY

    def _trilaterate(self, anchors: List[RangeMeasurement]) -> Optional[np.ndarray]:
        positions = [m.ref_position for m in anchors]
        mode = select_mode(positions)
        if mode is None:
            logger.debug(f"Tag {self.node_id}: âncoras degeneradas para trilateração")
            return None
        if self.ekf is not None:
            guess = self.ekf.position.copy()
        else:
            center = np.mean(np.asarray(positions, dtype=float), axis=0)
            guess = np.array([center[0], center[1], self.protocol.default_height_m])
        try:
            return trilaterate([(m.ref_position, m.distance) for m in anchors], mode, guess)
        except DegenerateGeometry as exc:
            logger.debug(f"Tag {self.node_id}: {exc}")
        except NonConvergence as exc:
            logger.warning(f"Tag {self.node_id}: {exc}")
        return None

    def _range_update(self, measurement: RangeMeasurement, eta: float, update_type: UpdateType) -> UpdateType:
        obs = RangeObservation(measurement.distance, measurement.ref_position, eta)
        if filters.gate_range(self.ekf, obs, self.protocol.gate_m) == filters.GateDecision.REJECT:
            logger.debug(f"Tag {self.node_id}: range para {measurement.ref_id} rejeitado pelo gate")
            return UpdateType.REJECTED
        try:
            self.ekf = filters.update_range(self.ekf, obs)
        except (SingularGeometry, SingularInnovation) as exc:
            logger.debug(f"Tag {self.node_id}: atualização ignorada ({exc})")
            return UpdateType.MODEL_ONLY
        return update_type
