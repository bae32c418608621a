"""Deterministic discrete-event engine with visibility-gated links and a
slot-limited relay.

Events are ordered by ``(time_s, seq)``; ``seq`` is assigned when an event is
scheduled, so simultaneous events fire in scheduling order. A message sent
over an occluded link waits at the sender until the next visibility window
(store-and-wait). Propagation delay uses the distance at transmission time.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .geometry import (
    DEFAULT_LOS,
    LosConfig,
    NodeGeometry,
    next_visibility_window,
    node_distance_km,
    node_los,
    one_way_latency_s,
)

logger = logging.getLogger(__name__)

DEFAULT_WAIT_HORIZON_S = 3 * 86400.0


class SchedulingError(Exception):
    pass


class RoutingError(Exception):
    pass


class EventKind(str, enum.Enum):
    MESSAGE_DELIVERY = "message-delivery"
    TIMER = "timer"
    WINDOW_OPEN = "window-open"
    WINDOW_CLOSE = "window-close"


@dataclass(order=True)
class Event:
    time_s: float
    seq: int
    kind: EventKind = field(compare=False)
    callback: Optional[Callable] = field(default=None, compare=False, repr=False)
    payload: Any = field(default=None, compare=False, repr=False)
    info: dict = field(default_factory=dict, compare=False, repr=False)
    cancelled: bool = field(default=False, compare=False)


class EventHandle:
    def __init__(self, event: Event):
        self._event = event

    @property
    def time_s(self) -> float:
        return self._event.time_s

    @property
    def cancelled(self) -> bool:
        return self._event.cancelled

    def cancel(self):
        self._event.cancelled = True


@dataclass
class Message:
    msg_id: int
    src: Any
    dst: Any
    payload: Any
    request_id: Optional[str] = None
    sent_s: float = 0.0
    via: Any = None
    final_dst: Any = None


@dataclass
class LatencyRecord:
    request_id: str
    scheme: str
    t_initiated_s: float
    requester: str = ""
    target: str = ""
    t_completed_s: Optional[float] = None
    wait_visibility_s: float = 0.0
    propagation_s: float = 0.0
    queuing_s: float = 0.0
    processing_s: float = 0.0
    hops: list = field(default_factory=list)
    status: str = "PENDING"

    @property
    def completed(self) -> bool:
        return self.t_completed_s is not None

    @property
    def total_s(self) -> Optional[float]:
        if self.t_completed_s is None:
            return None
        return self.t_completed_s - self.t_initiated_s

    @property
    def component_sum_s(self) -> float:
        return self.wait_visibility_s + self.propagation_s + self.queuing_s + self.processing_s

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "scheme": self.scheme,
            "requester": self.requester,
            "target": self.target,
            "status": self.status,
            "t_initiated_s": self.t_initiated_s,
            "t_completed_s": self.t_completed_s,
            "total_s": self.total_s,
            "wait_visibility_s": self.wait_visibility_s,
            "propagation_s": self.propagation_s,
            "queuing_s": self.queuing_s,
            "processing_s": self.processing_s,
            "hops": [[str(a), str(b), d] for a, b, d in self.hops],
        }


@dataclass
class RelayModel:
    capacity_slots: int = 20
    slot_service_s: float = 0.1
    max_queue: Optional[int] = None
    in_service: int = 0
    max_in_service: int = 0
    queue: deque = field(default_factory=deque)
    drops: int = 0


@dataclass
class RunStats:
    events_processed: int
    messages_in_flight: int
    drops: int
    clock_s: float


@dataclass
class _Node:
    geometry: NodeGeometry
    handler: Optional[Callable]
    processing_s: float = 0.0


class Engine:
    def __init__(self, los: LosConfig = DEFAULT_LOS, window_step_s: float = 10.0,
                 window_tol_s: float = 0.1, wait_horizon_s: float = DEFAULT_WAIT_HORIZON_S,
                 record_trace: bool = True):
        self.los = los
        self.window_step_s = window_step_s
        self.window_tol_s = window_tol_s
        self.wait_horizon_s = wait_horizon_s
        self.record_trace = record_trace
        self.clock = 0.0
        self._heap: list = []
        self._seq = itertools.count()
        self._msg_ids = itertools.count(1)
        self.nodes: dict = {}
        self.relays: dict = {}
        self.records: dict = {}
        self.trace: list = []
        self.events_processed = 0
        self.in_flight: dict = {}  # msg_id -> Message
        self.stranded: dict = {}  # msg_id -> (Message, since_s) with no window inside the horizon
        self.drops = 0

    # -- topology --------------------------------------------------------------

    def add_node(self, actor, geometry: NodeGeometry, handler: Optional[Callable] = None,
                 processing_s: float = 0.0):
        self.nodes[actor] = _Node(geometry, handler, processing_s)

    def set_handler(self, actor, handler: Callable):
        self.nodes[actor].handler = handler

    def add_relay(self, actor, geometry: NodeGeometry, model: Optional[RelayModel] = None):
        self.nodes[actor] = _Node(geometry, None)
        self.relays[actor] = model or RelayModel()

    def geometry(self, actor) -> NodeGeometry:
        return self.nodes[actor].geometry

    # -- scheduling ------------------------------------------------------------

    def schedule(self, time_s: float, kind: EventKind = EventKind.TIMER,
                 callback: Optional[Callable] = None, payload: Any = None, **info) -> EventHandle:
        if time_s < self.clock:
            raise SchedulingError(f"cannot schedule at {time_s} before clock {self.clock}")
        ev = Event(time_s, next(self._seq), kind, callback, payload, info)
        heapq.heappush(self._heap, ev)
        return EventHandle(ev)

    def cancel(self, handle: EventHandle):
        handle.cancel()

    def _trace(self, ev: Event):
        if not self.record_trace:
            return
        rec = {"time_s": ev.time_s, "seq": ev.seq, "kind": ev.kind.value}
        for k, v in ev.info.items():
            rec[k] = v if isinstance(v, (int, float, bool, type(None))) else str(v)
        self.trace.append(rec)

    def run_until(self, t_end_s: float) -> RunStats:
        if t_end_s < self.clock:
            raise SchedulingError(f"t_end {t_end_s} precedes clock {self.clock}")
        while self._heap and self._heap[0].time_s <= t_end_s:
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.clock = ev.time_s
            self.events_processed += 1
            self._trace(ev)
            if ev.callback is not None:
                ev.callback(ev)
        self.clock = t_end_s
        return RunStats(self.events_processed, len(self.in_flight) + len(self.stranded),
                        self.drops, self.clock)

    def trace_lines(self) -> list:
        return [json.dumps(r, sort_keys=True) for r in self.trace]

    def trace_digest(self) -> str:
        h = hashlib.sha256()
        for line in self.trace_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def write_trace(self, path):
        with open(path, "w") as fh:
            for line in self.trace_lines():
                fh.write(line + "\n")

    # -- request bookkeeping ---------------------------------------------------

    def open_request(self, request_id: str, scheme: str, **meta) -> LatencyRecord:
        rec = LatencyRecord(request_id, scheme, self.clock, **meta)
        self.records[request_id] = rec
        return rec

    def complete_request(self, request_id: str, status: str):
        rec = self.records[request_id]
        if rec.completed:
            return
        rec.t_completed_s = self.clock
        rec.status = status

    def _record(self, msg: Message) -> Optional[LatencyRecord]:
        if msg.request_id is None:
            return None
        return self.records.get(msg.request_id)

    # -- transport -------------------------------------------------------------

    def send_message(self, src, dst, payload, request_id: Optional[str] = None, via=None) -> Message:
        """Send ``payload``; with ``via`` the message is forwarded by that relay."""
        for actor in (src, dst) + ((via,) if via is not None else ()):
            if actor not in self.nodes:
                raise RoutingError(f"unknown actor {actor}")
        if via is not None and via not in self.relays:
            raise RoutingError(f"{via} is not a relay")
        msg = Message(next(self._msg_ids), src, via if via is not None else dst, payload,
                      request_id, self.clock, via, dst)
        self.in_flight[msg.msg_id] = msg
        self._transmit(msg)
        return msg

    def _transmit(self, msg: Message, forced: bool = False):
        now = self.clock
        a, b = self.nodes[msg.src].geometry, self.nodes[msg.dst].geometry
        rec = self._record(msg)
        if msg.src == msg.dst or (a.is_ground and b.is_ground):
            self._schedule_delivery(msg, now, 0.0, los=True)
            return
        visible = node_los(a, b, now, self.los)
        if visible or forced:
            d = node_distance_km(a, b, now)
            delay = one_way_latency_s(d)
            if rec is not None:
                rec.propagation_s += delay
                rec.hops.append((msg.src, msg.dst, d))
            self._schedule_delivery(msg, now + delay, d, los=visible)
            return
        window = next_visibility_window(a, b, now, self.wait_horizon_s, self.los,
                                        self.window_step_s, self.window_tol_s)
        if window is None:
            logger.debug("message %s stranded: no window %s->%s", msg.msg_id, msg.src, msg.dst)
            self.in_flight.pop(msg.msg_id, None)
            self.stranded[msg.msg_id] = (msg, now)
            return
        if rec is not None:
            rec.wait_visibility_s += window.start_s - now

        def opened(ev):
            # the window start is the first bisected instant with line of sight
            self._transmit(msg, forced=True)

        self.schedule(window.start_s, EventKind.WINDOW_OPEN, opened,
                      **{"from": msg.src, "to": msg.dst, "msg_id": msg.msg_id,
                         "request_id": msg.request_id})

    def _schedule_delivery(self, msg: Message, at: float, distance: float, los: bool):
        self.schedule(at, EventKind.MESSAGE_DELIVERY, lambda ev: self._deliver(msg),
                      **{"from": msg.src, "to": msg.dst, "msg_id": msg.msg_id,
                         "request_id": msg.request_id, "sent_s": self.clock,
                         "distance_km": distance, "los": los})

    def _deliver(self, msg: Message):
        if msg.via is not None and msg.dst == msg.via and msg.final_dst != msg.via:
            self.relay_forward(msg.via, msg)
            return
        self.in_flight.pop(msg.msg_id, None)
        node = self.nodes[msg.dst]
        if node.handler is None:
            return
        if node.processing_s > 0:
            rec = self._record(msg)
            if rec is not None:
                rec.processing_s += node.processing_s
            self.schedule(self.clock + node.processing_s, EventKind.TIMER,
                          lambda ev: node.handler(self, msg),
                          note="processing", to=msg.dst, request_id=msg.request_id)
        else:
            node.handler(self, msg)

    # -- relay -------------------------------------------------------------------

    def relay_forward(self, relay_id, msg: Message):
        """Serve ``msg`` in a free slot or queue it FIFO."""
        relay = self.relays[relay_id]
        if relay.in_service < relay.capacity_slots:
            self._start_service(relay_id, msg, self.clock)
        elif relay.max_queue is not None and len(relay.queue) >= relay.max_queue:
            relay.drops += 1
            self.drops += 1
            self.in_flight.pop(msg.msg_id, None)
            rec = self._record(msg)
            if rec is not None and not rec.completed:
                rec.status = "DROPPED"
            self.schedule(self.clock, EventKind.TIMER, None, note="relay-drop",
                          relay=relay_id, msg_id=msg.msg_id, request_id=msg.request_id)
        else:
            relay.queue.append((msg, self.clock))

    def _start_service(self, relay_id, msg: Message, arrival_s: float):
        relay = self.relays[relay_id]
        relay.in_service += 1
        relay.max_in_service = max(relay.max_in_service, relay.in_service)
        rec = self._record(msg)
        if rec is not None:
            rec.queuing_s += self.clock - arrival_s
        self.schedule(self.clock + relay.slot_service_s, EventKind.TIMER,
                      lambda ev: self._release(relay_id),
                      note="relay-release", relay=relay_id, msg_id=msg.msg_id,
                      request_id=msg.request_id)
        self.trace_relay_start(relay_id, msg)
        msg.src, msg.dst, msg.via = relay_id, msg.final_dst, None
        self._transmit(msg)

    def trace_relay_start(self, relay_id, msg: Message):
        if self.record_trace:
            self.trace.append({
                "time_s": self.clock, "seq": -1, "kind": "relay-service-start",
                "relay": str(relay_id), "msg_id": msg.msg_id,
                "request_id": msg.request_id, "in_service": self.relays[relay_id].in_service,
            })

    def _release(self, relay_id):
        relay = self.relays[relay_id]
        relay.in_service -= 1
        if relay.queue:
            msg, arrival = relay.queue.popleft()
            self._start_service(relay_id, msg, arrival)
