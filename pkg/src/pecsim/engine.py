"""Discrete-event core: integer-microsecond clock, event queue, link model, tracing."""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

from .names import Name
from .topology import Link, World

TRACE_FORMAT = "pec-sim-trace"
TRACE_VERSION = 1


class RuntimeInvariantViolation(RuntimeError):
    def __init__(self, message: str, record: Optional[dict] = None) -> None:
        super().__init__(message)
        self.record = record


class EventKind(Enum):
    PACKET_ARRIVAL = "packet_arrival"
    EXEC_COMPLETE = "exec_complete"
    TIMER_EXPIRY = "timer_expiry"
    HANDOVER = "handover"
    ONBOARD = "onboard"
    OFFBOARD = "offboard"
    SCENARIO_ACTION = "scenario_action"


@dataclass(order=True)
class Event:
    time: int
    seq: int
    kind: EventKind = field(compare=False)
    callback: Callable[..., Any] = field(compare=False)
    args: tuple = field(compare=False, default=())
    cancelled: bool = field(compare=False, default=False)


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[Event] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: int, kind: EventKind, callback: Callable[..., Any], *args) -> Event:
        event = Event(time, self._seq, kind, callback, args)
        self._seq += 1
        heapq.heappush(self._heap, event)
        return event

    def peek_time(self) -> Optional[int]:
        return self._heap[0].time if self._heap else None

    def pop(self) -> Event:
        return heapq.heappop(self._heap)


def node_rng(seed: int, node_id: str) -> random.Random:
    """Per-node stream: adding a node never perturbs another node's draws."""
    digest = hashlib.blake2b(f"{seed}:{node_id}".encode(), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "big"))


def make_record(time: int, node: str, kind: str, name: Optional[Name | str], faces, nbytes: int, annotation: dict) -> dict:
    return {
        "time": time,
        "node": node,
        "kind": kind,
        "name": None if name is None else str(name),
        "faces": list(faces),
        "bytes": int(nbytes),
        "annotation": annotation,
    }


def dumps_record(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), sort_keys=False)


def trace_header(seed: int) -> dict:
    return {"kind": "header", "format": TRACE_FORMAT, "version": TRACE_VERSION, "seed": seed}


class Tracer:
    def __init__(self) -> None:
        self.records: list[dict] = []
        self.listeners: list[Callable[[dict], None]] = []

    def emit(self, time: int, node: str, kind: str, name=None, faces=(), nbytes: int = 0, annotation=None) -> dict:
        record = make_record(time, node, kind, name, faces, nbytes, annotation or {})
        if self.records and time < self.records[-1]["time"]:
            raise RuntimeInvariantViolation("trace time went backwards", record)
        self.records.append(record)
        for listener in self.listeners:
            listener(record)
        return record

    def lines(self, seed: int) -> list[str]:
        return [dumps_record(trace_header(seed))] + [dumps_record(r) for r in self.records]


# receive(node_id, face, kind, packet)
ReceiveFn = Callable[[str, int, str, Any], None]


class Engine:
    """Event loop plus the point-to-point link model.

    A packet leaving on a link starts serialising when the link direction is
    free (FIFO) and arrives ``serialisation + latency`` after that.
    """

    def __init__(self, world: World, seed: int = 0, end_us: Optional[int] = None) -> None:
        self.world = world
        self.seed = seed
        self.end_us = end_us
        self.now = 0
        self.queue = EventQueue()
        self.tracer = Tracer()
        self.receive: Optional[ReceiveFn] = None
        self.in_flight = 0
        self._rngs: dict[str, random.Random] = {}

    def rng(self, node_id: str) -> random.Random:
        if node_id not in self._rngs:
            self._rngs[node_id] = node_rng(self.seed, node_id)
        return self._rngs[node_id]

    def nonce(self, node_id: str) -> int:
        return self.rng(node_id).getrandbits(64)

    def trace(self, node: str, kind: str, name=None, faces=(), nbytes: int = 0, annotation=None) -> dict:
        return self.tracer.emit(self.now, node, kind, name, faces, nbytes, annotation)

    def schedule_at(self, time: int, kind: EventKind, callback: Callable[..., Any], *args) -> Event:
        if time < self.now:
            raise RuntimeInvariantViolation(
                f"event {kind.value} scheduled in the past ({time} < {self.now})"
            )
        return self.queue.push(time, kind, callback, *args)

    def schedule(self, delay_us: int, kind: EventKind, callback: Callable[..., Any], *args) -> Event:
        return self.schedule_at(self.now + max(0, int(delay_us)), kind, callback, *args)

    def transmit(self, node_id: str, face: int, kind: str, packet) -> bool:
        node = self.world.nodes[node_id]
        link_id = node.faces.get(face)
        size = packet.size_bytes
        if link_id is None:
            self.trace(node_id, "drop_no_face", packet.name, [face], size, {"pkt": kind})
            return False
        link = self.world.links[link_id]
        peer = link.other(node_id)
        depart = max(self.now, link.busy_until[node_id])
        serial = link.serialization_us(size)
        link.busy_until[node_id] = depart + serial
        arrival = depart + serial + link.latency_us
        self.trace(node_id, "tx", packet.name, [face], size, {"pkt": kind, "to": peer, "link": link.id, "arrive": arrival})
        self.in_flight += 1
        self.schedule_at(arrival, EventKind.PACKET_ARRIVAL, self._arrive, link, peer, kind, packet)
        return True

    def _arrive(self, link: Link, peer: str, kind: str, packet) -> None:
        self.in_flight -= 1
        sender = link.other(peer)
        if not link.up:
            self.trace(peer, "link_drop", packet.name, [], packet.size_bytes, {"pkt": kind, "from": sender, "link": link.id})
            return
        face = link.face_a if peer == link.a else link.face_b
        self.trace(peer, "rx", packet.name, [face], packet.size_bytes, {"pkt": kind, "from": sender, "link": link.id})
        if self.receive is not None:
            self.receive(peer, face, kind, packet)

    def step(self) -> bool:
        while self.queue:
            event = self.queue.pop()
            if event.cancelled:
                continue
            self.now = event.time
            event.callback(*event.args)
            return True
        return False

    def run(self, until: Optional[int] = None) -> None:
        limit = self.end_us if until is None else until
        while self.queue:
            t = self.queue.peek_time()
            if limit is not None and t > limit:
                self.now = max(self.now, limit)
                return
            self.step()
