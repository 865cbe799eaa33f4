"""Invocation bookkeeping: thunks, triage, compute reuse and delegation accounting."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Union

from .names import InvocationName, Name, ThunkName
from .topology import World

THUNK_TTL_FACTOR = 10


class UnknownThunk(KeyError):
    pass


class NonCooperativeDomain(Exception):
    pass


@dataclass(frozen=True)
class InvocationRequest:
    invocation_name: InvocationName
    requester: str
    data_bytes: int
    issued_at: int

    def __post_init__(self) -> None:
        if self.data_bytes <= 0:
            raise ValueError("data_bytes must be > 0")


class ThunkState(Enum):
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"
    MIGRATED = "migrated"


@dataclass
class ThunkRecord:
    thunk: ThunkName
    server: str
    estimate_us: int
    issued_at: int
    # completion time; projected until ``started`` is set
    done_at: int
    started: bool = False
    state: ThunkState = ThunkState.RUNNING
    result_bytes: Optional[int] = None
    request: Optional[InvocationRequest] = None

    def __post_init__(self) -> None:
        if self.estimate_us <= 0:
            raise ValueError("estimate must be > 0")

    @property
    def estimate_ms(self) -> float:
        return self.estimate_us / 1000

    @property
    def expires_at(self) -> int:
        return self.issued_at + THUNK_TTL_FACTOR * self.estimate_us

    def is_done(self, now: int) -> bool:
        if self.state is ThunkState.DONE:
            return True
        return self.state is ThunkState.RUNNING and self.started and self.done_at <= now


@dataclass(frozen=True)
class Result:
    record: ThunkRecord


@dataclass(frozen=True)
class NotReady:
    remaining_us: int


@dataclass(frozen=True)
class Failed:
    reason: str = "failed"


PollOutcome = Union[Result, NotReady, Failed]


def poll_thunk(table: dict[Name, ThunkRecord], thunk: Name, at_time: int) -> PollOutcome:
    record = table.get(thunk)
    if record is None or at_time > record.expires_at or record.state is ThunkState.MIGRATED:
        raise UnknownThunk(str(thunk))
    if record.state is ThunkState.FAILED:
        return Failed()
    if record.is_done(at_time):
        return Result(record)
    return NotReady(max(0, record.done_at - at_time))


@dataclass(frozen=True)
class Fresh:
    pass


@dataclass(frozen=True)
class JoinRunning:
    thunk: ThunkName


@dataclass(frozen=True)
class CachedResult:
    record: ThunkRecord


ReuseDecision = Union[Fresh, JoinRunning, CachedResult]


class ReuseTable:
    """Per-server map from (service, data) to the execution serving it."""

    def __init__(self, freshness_us: int) -> None:
        self.freshness_us = freshness_us
        self.entries: dict[tuple[Name, Name], ThunkRecord] = {}

    def start(self, key: tuple[Name, Name], record: ThunkRecord) -> None:
        current = self.entries.get(key)
        if current is not None and current.state is ThunkState.RUNNING and not current.is_done(record.issued_at):
            raise ValueError(f"a running execution already serves {key}")
        self.entries[key] = record

    def discard(self, key: tuple[Name, Name], record: ThunkRecord) -> None:
        if self.entries.get(key) is record:
            del self.entries[key]


def check_reuse(table: ReuseTable, key: tuple[Name, Name], now: int) -> ReuseDecision:
    record = table.entries.get(key)
    if record is None:
        return Fresh()
    if record.is_done(now):
        if now - record.done_at <= table.freshness_us:
            return CachedResult(record)
        del table.entries[key]
        return Fresh()
    if record.state is ThunkState.RUNNING:
        return JoinRunning(record.thunk)
    del table.entries[key]
    return Fresh()


@dataclass(frozen=True)
class ExecuteHere:
    pass


@dataclass(frozen=True)
class RelayIntraDomain:
    server: str


@dataclass(frozen=True)
class ToCloud:
    pass


TriageDecision = Union[ExecuteHere, RelayIntraDomain, ToCloud]


def triage(world: World, server: str, service: Name) -> TriageDecision:
    node = world.nodes[server]
    if node.has_spare_capacity():
        return ExecuteHere()
    if node.domain is not None and node.domain in world.domains:
        peers = [
            s for s in world.servers_in_domain(node.domain)
            if s.id != server and s.hosts(service) and s.has_spare_capacity()
        ]
        if peers:
            best = min(peers, key=lambda s: (s.running, s.id))
            return RelayIntraDomain(best.id)
    return ToCloud()


def select_delegate(world: World, designated: str, service: Name) -> Optional[tuple[str, str]]:
    """Least-loaded capable server in a cooperative peer domain, as (domain, server)."""
    domain = world.nodes[designated].domain
    if domain is None or domain not in world.domains:
        return None
    best = None
    for peer, coop in sorted(world.domains[domain].peers.items()):
        if not coop or peer not in world.domains:
            continue
        for s in world.servers_in_domain(peer):
            if s.hosts(service) and s.has_spare_capacity():
                key = (s.running, s.id)
                if best is None or key < best[0]:
                    best = (key, peer, s.id)
    return None if best is None else (best[1], best[2])


def queue_wait_us(now: int, capacity: Optional[int], busy_until: Iterable[int], queued_exec_us: Iterable[int]) -> int:
    """Time until a request queued behind ``queued_exec_us`` gets a slot."""
    if capacity is None:
        return 0
    if capacity == 0:
        raise ValueError("server has no capacity")
    slots = sorted(max(t, now) for t in busy_until)[:capacity]
    slots += [now] * (capacity - len(slots))
    heapq.heapify(slots)
    for exec_us in queued_exec_us:
        t = heapq.heappop(slots)
        heapq.heappush(slots, t + exec_us)
    return heapq.heappop(slots) - now


class DelegationMode(Enum):
    DIRECT = "direct"
    MAPPED = "mapped"


@dataclass
class DelegationRecord:
    designated_server: str
    destination_server: str
    user_thunk: ThunkName
    destination_thunk: ThunkName
    mode: DelegationMode
    completed: bool = False
    designated_domain: str = ""
    destination_domain: str = ""

    def __post_init__(self) -> None:
        if self.mode is DelegationMode.DIRECT and self.user_thunk != self.destination_thunk:
            raise ValueError("direct delegation hands the destination thunk to the user")
        if self.mode is DelegationMode.MAPPED and self.user_thunk == self.destination_thunk:
            raise ValueError("mapped delegation needs a thunk minted by the designated server")

    def mark_completed(self) -> bool:
        """Flip ``completed``; returns False if it was already set."""
        if self.completed:
            return False
        self.completed = True
        return True

    def to_dict(self) -> dict:
        return {
            "designated_server": self.designated_server,
            "destination_server": self.destination_server,
            "user_thunk": str(self.user_thunk),
            "destination_thunk": str(self.destination_thunk),
            "mode": self.mode.value,
            "completed": self.completed,
            "designated_domain": self.designated_domain,
            "destination_domain": self.destination_domain,
        }


def delegate_inter(
    world: World,
    designated: str,
    destination_domain: str,
    destination_server: str,
    destination_thunk: ThunkName,
    mode: DelegationMode,
    mint_user_thunk: Callable[[], ThunkName],
) -> DelegationRecord:
    domain = world.nodes[designated].domain
    if domain is None or not world.domains[domain].cooperates_with(destination_domain):
        raise NonCooperativeDomain(f"{domain} does not cooperate with {destination_domain}")
    user_thunk = destination_thunk if mode is DelegationMode.DIRECT else mint_user_thunk()
    return DelegationRecord(
        designated_server=designated,
        destination_server=destination_server,
        user_thunk=user_thunk,
        destination_thunk=destination_thunk,
        mode=mode,
        designated_domain=domain,
        destination_domain=destination_domain,
    )


class Ledger:
    """Append-only delegation log; only ``completed`` may change, false to true."""

    def __init__(self) -> None:
        self._records: list[DelegationRecord] = []

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def append(self, record: DelegationRecord) -> None:
        self._records.append(record)

    def query(self, domain_a: str, domain_b: str) -> list[DelegationRecord]:
        pair = {domain_a, domain_b}
        return [r for r in self._records if {r.designated_domain, r.destination_domain} == pair]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in self._records)


ledger_append = Ledger.append
ledger_query = Ledger.query
