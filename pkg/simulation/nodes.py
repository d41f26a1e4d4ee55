"""
📟 UWB Swarm Tracker - Nós de rádio
Base comum de tags e âncoras: posição, ciclo de vida e resposta a polls TWR
"""

import logging
from collections import deque
from typing import Callable, Deque, Optional, Sequence

from protocols.clocksync import HardwareClock, NodeClock
from simulation.engine import Engine, EventKind, Position, RadioEvent, SimTime, TimerToken
from simulation.errors import TransmitterBusy
from simulation.messages import RangePoll, RangeResponse

logger = logging.getLogger(__name__)

REPLY = "reply"


class RadioNode:
    """Nó com rádio UWB; responde a polls endereçados a ele"""

    is_radio = True

    def __init__(self, node_id: int, position_fn: Callable[[SimTime], Position], clock: NodeClock,
                 reply_latency_us: int = 300, start_us: int = 0, stop_us: Optional[int] = None):
        self.node_id = node_id
        self._position_fn = position_fn
        self.clock = clock
        self.reply_latency_us = reply_latency_us
        self.start_us = start_us
        self.stop_us = stop_us
        self._replies: Deque[RangePoll] = deque()

    def position(self, now: SimTime) -> Position:
        return self._position_fn(now)

    def is_active(self, now: SimTime) -> bool:
        return now >= self.start_us and (self.stop_us is None or now < self.stop_us)

    def handle_event(self, event: RadioEvent, engine: Engine) -> None:
        if event.kind == EventKind.DELIVER:
            self.on_message(event.payload, event.source, engine)
        elif event.kind == EventKind.TIMER:
            if not self.is_active(engine.now):
                if event.payload.name == REPLY and self._replies:
                    self._replies.popleft()
                return
            if event.payload.name == REPLY:
                self._send_reply(engine)
            else:
                self.on_timer(event.payload, engine)

    def on_message(self, msg, source: int, engine: Engine) -> None:
        if isinstance(msg, RangePoll) and msg.responder == self.node_id:
            self._replies.append(msg)
            engine.schedule_timer(self.node_id, engine.now + self.reply_latency_us, TimerToken(REPLY))

    def on_timer(self, token: TimerToken, engine: Engine) -> None:
        pass

    def _send_reply(self, engine: Engine) -> None:
        poll = self._replies.popleft()
        # latência de resposta medida no relógio de hardware do respondedor
        t_reply = self.clock.read_hardware(engine.now) - self.clock.read_hardware(engine.now - self.reply_latency_us)
        self.send(engine, RangeResponse(poll.initiator, self.node_id, poll.seq, t_reply))

    def send(self, engine: Engine, msg) -> bool:
        try:
            engine.broadcast(self.node_id, msg)
            return True
        except TransmitterBusy:
            logger.debug(f"Nó {self.node_id}: transmissor ocupado, {msg.kind} descartado")
            return False


class AnchorNode(RadioNode):
    """Âncora passiva: posição fixa, só responde a polls"""

    def __init__(self, node_id: int, position: Sequence[float], clock: HardwareClock = None,
                 reply_latency_us: int = 300):
        fixed = tuple(float(c) for c in position)
        super().__init__(node_id, lambda now: fixed, NodeClock(clock or HardwareClock()), reply_latency_us)
        self.surveyed_position = fixed
