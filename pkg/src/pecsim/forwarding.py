"""Per-node NDN data plane: content store, PIT, FIB and strategy layer.

The pipeline functions mutate only the node they are given and return the
packets to emit as :class:`Action` values. Face 0 is the node's local
application face; every other face maps to one link.
"""

from __future__ import annotations

from collections import OrderedDict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Optional, Protocol

from .names import Name

APP_FACE = 0

DEFAULT_HOP_LIMIT = 32
DEFAULT_INTEREST_BYTES = 100
DEFAULT_PIT_LIFETIME_US = 4_000_000

# trace(kind, name, faces, bytes, annotation)
TraceFn = Callable[[str, Optional[Name], list, int, dict], None]


def _no_trace(kind, name, faces, nbytes, annotation):
    pass


@dataclass(frozen=True)
class Interest:
    name: Name
    nonce: int
    hop_limit: int = DEFAULT_HOP_LIMIT
    size_bytes: int = DEFAULT_INTEREST_BYTES
    # None means the forwarding node's default PIT lifetime.
    lifetime_us: Optional[int] = None

    def __post_init__(self) -> None:
        if self.size_bytes < 1:
            raise ValueError("interest size must be >= 1 byte")


@dataclass(frozen=True)
class Data:
    name: Name
    payload_bytes: int
    # None: never stale; 0: never cached.
    freshness_ms: Optional[float] = None
    producer_id: str = ""
    content: Any = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.payload_bytes < 0:
            raise ValueError("payload_bytes must be >= 0")

    @property
    def size_bytes(self) -> int:
        return self.payload_bytes


@dataclass(frozen=True)
class Nack:
    name: Name
    nonce: int
    reason: str
    size_bytes: int = DEFAULT_INTEREST_BYTES


@dataclass(frozen=True)
class Action:
    kind: str  # "interest" | "data" | "nack"
    face: int
    packet: Any


class Strategy(Enum):
    BEST_ROUTE = "best-route"
    MULTICAST = "multicast"
    BROADCAST = "broadcast"


@dataclass
class CsEntry:
    data: Data
    insert_time: int
    last_use_time: int


class ContentStore:
    """Exact-match content store with least-recently-used eviction."""

    def __init__(self, capacity_entries: int) -> None:
        if capacity_entries < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity_entries = capacity_entries
        self.entries: OrderedDict[Name, CsEntry] = OrderedDict()

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: Name) -> bool:
        return name in self.entries

    def names(self) -> list[Name]:
        """Names from least to most recently used."""
        return list(self.entries)

    def _stale(self, entry: CsEntry, now: int) -> bool:
        fresh = entry.data.freshness_ms
        return fresh is not None and now - entry.insert_time > fresh * 1000

    def lookup(self, name: Name, now: int) -> Optional[Data]:
        entry = self.entries.get(name)
        if entry is None:
            return None
        if self._stale(entry, now):
            del self.entries[name]
            return None
        entry.last_use_time = now
        self.entries.move_to_end(name)
        return entry.data

    def insert(self, data: Data, now: int) -> list[Name]:
        """Insert ``data``; returns the names evicted to make room."""
        if self.capacity_entries == 0 or data.freshness_ms == 0:
            return []
        if data.name in self.entries:
            self.entries[data.name] = CsEntry(data, now, now)
            self.entries.move_to_end(data.name)
            return []
        evicted = []
        while len(self.entries) >= self.capacity_entries:
            victim, _ = self.entries.popitem(last=False)
            evicted.append(victim)
        self.entries[data.name] = CsEntry(data, now, now)
        return evicted


@dataclass
class PitEntry:
    name: Name
    in_faces: set[int]
    nonces: set[int]
    expiry: int
    out_faces: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class FibEntry:
    prefix: Name
    # (face, cost) pairs ordered by (cost, face)
    next_hops: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.next_hops:
            raise ValueError(f"FIB entry {self.prefix} has no next hops")
        object.__setattr__(
            self, "next_hops", tuple(sorted(self.next_hops, key=lambda h: (h[1], h[0])))
        )

    @property
    def faces(self) -> list[int]:
        return [f for f, _ in self.next_hops]


class ForwardingNode(Protocol):
    cs: ContentStore
    pit: dict[Name, PitEntry]
    fib: dict[Name, FibEntry]
    strategies: dict[Name, Strategy]
    faces: dict[int, str]
    pit_lifetime_us: int


def fib_lpm(fib: Mapping[Name, FibEntry] | Iterable[FibEntry], name: Name) -> Optional[FibEntry]:
    if isinstance(fib, Mapping):
        for prefix in name.prefixes():
            entry = fib.get(prefix)
            if entry is not None:
                return entry
        return None
    best = None
    for entry in fib:
        if entry.prefix.is_prefix_of(name) and (best is None or len(entry.prefix) > len(best.prefix)):
            best = entry
    return best


def strategy_for(strategies: Mapping[Name, Strategy], name: Name) -> Strategy:
    for prefix in name.prefixes():
        s = strategies.get(prefix)
        if s is not None:
            return s
    return Strategy.BEST_ROUTE


def strategy_forward(
    entry: FibEntry,
    strategy: Strategy,
    exclude: Optional[int] = None,
    all_faces: Iterable[int] = (),
) -> list[int]:
    if strategy is Strategy.BEST_ROUTE:
        hops = [(cost, face) for face, cost in entry.next_hops if face != exclude]
        return [min(hops)[1]] if hops else []
    if strategy is Strategy.MULTICAST:
        return sorted(face for face in entry.faces if face != exclude)
    return sorted(face for face in all_faces if face != exclude and face != APP_FACE)


def on_interest(
    node: ForwardingNode, face: int, interest: Interest, now: int, trace: TraceFn = _no_trace
) -> list[Action]:
    name = interest.name
    cached = node.cs.lookup(name, now)
    if cached is not None:
        trace("cs_hit", name, [face], cached.payload_bytes, {})
        return [Action("data", face, cached)]

    entry = node.pit.get(name)
    lifetime = interest.lifetime_us if interest.lifetime_us is not None else node.pit_lifetime_us
    if entry is not None:
        if interest.nonce in entry.nonces:
            trace("loop_drop", name, [face], interest.size_bytes, {"nonce": interest.nonce})
            return []
        entry.in_faces.add(face)
        entry.nonces.add(interest.nonce)
        entry.expiry = max(entry.expiry, now + lifetime)
        trace("aggregate", name, sorted(entry.in_faces), interest.size_bytes, {})
        return []

    route = fib_lpm(node.fib, name)
    out: list[int] = []
    if route is not None:
        strategy = strategy_for(node.strategies, name)
        out = strategy_forward(route, strategy, exclude=face, all_faces=node.faces)
    if not out:
        trace("nack_noroute", name, [face], interest.size_bytes, {})
        return [Action("nack", face, Nack(name, interest.nonce, "NoRoute"))]

    network = [f for f in out if f != APP_FACE]
    if network and interest.hop_limit <= 0:
        trace("hop_drop", name, [face], interest.size_bytes, {})
        return []

    node.pit[name] = PitEntry(name, {face}, {interest.nonce}, now + lifetime, set(out))
    trace("forward", name, out, interest.size_bytes, {"in": face})
    actions = []
    for f in out:
        pkt = interest if f == APP_FACE else replace(interest, hop_limit=interest.hop_limit - 1)
        actions.append(Action("interest", f, pkt))
    return actions


def on_data(
    node: ForwardingNode, face: int, data: Data, now: int, trace: TraceFn = _no_trace
) -> list[Action]:
    entry = node.pit.pop(data.name, None)
    if entry is None:
        trace("unsolicited", data.name, [face], data.payload_bytes, {})
        return []
    for victim in node.cs.insert(data, now):
        trace("cs_evict", victim, [], 0, {})
    out = sorted(entry.in_faces - {face})
    trace("data_fwd", data.name, out, data.payload_bytes, {"in": face})
    return [Action("data", f, data) for f in out]


def on_nack(
    node: ForwardingNode, face: int, nack: Nack, now: int, trace: TraceFn = _no_trace
) -> list[Action]:
    entry = node.pit.get(nack.name)
    if entry is None or face not in entry.out_faces:
        trace("nack_drop", nack.name, [face], nack.size_bytes, {"reason": nack.reason})
        return []
    entry.out_faces.discard(face)
    if entry.out_faces:
        # other upstreams may still answer
        trace("nack_absorb", nack.name, [face], nack.size_bytes, {"reason": nack.reason})
        return []
    del node.pit[nack.name]
    out = sorted(entry.in_faces - {face})
    trace("nack_fwd", nack.name, out, nack.size_bytes, {"reason": nack.reason})
    return [Action("nack", f, nack) for f in out]


def expire_pit(node: ForwardingNode, now: int, trace: TraceFn = _no_trace) -> list[Name]:
    expired = sorted(name for name, e in node.pit.items() if e.expiry <= now)
    for name in expired:
        entry = node.pit.pop(name)
        trace("pit_expire", name, sorted(entry.in_faces), 0, {})
    return expired
