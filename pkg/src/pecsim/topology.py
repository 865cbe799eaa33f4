"""Network graph, PEC domains, onboarding, handover and static routing."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional

from .forwarding import (
    APP_FACE,
    DEFAULT_PIT_LIFETIME_US,
    ContentStore,
    FibEntry,
    PitEntry,
    Strategy,
)
from .names import CTL, DISCOVER, IMN, JOIN, SVC, THUNK, Name

if TYPE_CHECKING:
    from .config import ScenarioConfig
    from .orchestration import ServiceDescriptor


class TopologyError(Exception):
    pass


class DisconnectedAdvertiser(TopologyError):
    pass


class DuplicateNodeId(TopologyError):
    pass


class UnknownDomain(TopologyError):
    pass


class AlreadyOnboarded(TopologyError):
    pass


class NotOnboarded(TopologyError):
    pass


class Role(Enum):
    USER = "user"
    ACCESS_POINT = "access_point"
    ROUTER = "router"
    EDGE_SERVER = "edge_server"
    ORCHESTRATOR = "orchestrator"
    CLOUD = "cloud"


@dataclass(eq=False)
class NodeState:
    id: str
    role: Role
    domain: Optional[str] = None
    # concurrent instances; None means unbounded (cloud)
    compute_capacity: Optional[int] = 0
    env: set[str] = field(default_factory=set)
    hosted_services: set[Name] = field(default_factory=set)
    advertise: list[Name] = field(default_factory=list)
    # access points: the edge server users attached here are served by
    server: Optional[str] = None
    onboarded: bool = False
    ondemand: bool = False
    cs_capacity: int = 100
    pit_lifetime_us: int = DEFAULT_PIT_LIFETIME_US
    faces: dict[int, str] = field(default_factory=dict)
    face_peers: dict[int, str] = field(default_factory=dict)
    onboard_faces: set[int] = field(default_factory=set)
    pit: dict[Name, PitEntry] = field(default_factory=dict)
    fib: dict[Name, FibEntry] = field(default_factory=dict)
    strategies: dict[Name, Strategy] = field(default_factory=dict)
    running: int = 0
    next_face: int = 1
    home_domain: Optional[str] = None

    def __post_init__(self) -> None:
        if self.compute_capacity is not None and self.compute_capacity < 0:
            raise ValueError(f"{self.id}: capacity must be >= 0")
        self.cs = ContentStore(self.cs_capacity)

    @property
    def is_server(self) -> bool:
        if self.role in (Role.EDGE_SERVER, Role.CLOUD):
            return True
        return self.role is Role.USER and self.onboarded

    def hosts(self, service: Name) -> bool:
        return self.role is Role.CLOUD or service in self.hosted_services

    def has_env(self, env: str) -> bool:
        return self.role is Role.CLOUD or env in self.env

    def has_spare_capacity(self) -> bool:
        return self.compute_capacity is None or self.running < self.compute_capacity

    def face_to(self, peer: str) -> Optional[int]:
        for face, other in sorted(self.face_peers.items()):
            if other == peer:
                return face
        return None


@dataclass(eq=False)
class Link:
    id: str
    a: str
    b: str
    latency_us: int
    bandwidth_bps: int
    face_a: int = 0
    face_b: int = 0
    up: bool = True
    busy_until: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.latency_us <= 0:
            raise ValueError(f"link {self.id}: latency must be > 0")
        if self.bandwidth_bps <= 0:
            raise ValueError(f"link {self.id}: bandwidth must be > 0")

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a

    def serialization_us(self, size_bytes: int) -> int:
        # rounded up to the next microsecond
        return -(-(size_bytes * 8 * 1_000_000) // self.bandwidth_bps)


@dataclass
class PecDomain:
    id: str
    orchestrator: str
    members: set[str] = field(default_factory=set)
    # peer domain id -> cooperation flag
    peers: dict[str, bool] = field(default_factory=dict)

    def cooperates_with(self, other: str) -> bool:
        return self.peers.get(other, False)


@dataclass
class MobilityStep:
    time_us: int
    user: str
    from_ap: str
    to_ap: str


class World:
    """All nodes, links, domains and service descriptors of one run."""

    def __init__(self) -> None:
        self.nodes: dict[str, NodeState] = {}
        self.links: dict[str, Link] = {}
        self.domains: dict[str, PecDomain] = {}
        self.services: dict[Name, ServiceDescriptor] = {}
        self.data_sizes: dict[Name, int] = {}
        self._link_counter = 0

    def add_node(self, node: NodeState) -> NodeState:
        if node.id in self.nodes:
            raise DuplicateNodeId(node.id)
        self.nodes[node.id] = node
        return node

    def add_link(self, a: str, b: str, latency_us: int, bandwidth_bps: int, link_id: str | None = None) -> Link:
        while link_id is None or link_id in self.links:
            link_id = f"dyn{self._link_counter}"
            self._link_counter += 1
        link = Link(link_id, a, b, latency_us, bandwidth_bps)
        na, nb = self.nodes[a], self.nodes[b]
        link.face_a, link.face_b = na.next_face, nb.next_face
        na.next_face += 1
        nb.next_face += 1
        na.faces[link.face_a] = link.id
        na.face_peers[link.face_a] = b
        nb.faces[link.face_b] = link.id
        nb.face_peers[link.face_b] = a
        link.busy_until = {a: 0, b: 0}
        self.links[link.id] = link
        return link

    def remove_link(self, link_id: str) -> Link:
        link = self.links.pop(link_id)
        link.up = False
        for node_id, face in ((link.a, link.face_a), (link.b, link.face_b)):
            node = self.nodes[node_id]
            node.faces.pop(face, None)
            node.face_peers.pop(face, None)
            node.onboard_faces.discard(face)
        return link

    def link_between(self, a: str, b: str) -> Optional[Link]:
        node = self.nodes[a]
        face = node.face_to(b)
        return None if face is None else self.links[node.faces[face]]

    def neighbors(self, node_id: str) -> list[tuple[int, str]]:
        return sorted(self.nodes[node_id].face_peers.items())

    def attached_ap(self, user: str) -> Optional[str]:
        for _, peer in self.neighbors(user):
            if self.nodes[peer].role is Role.ACCESS_POINT:
                return peer
        return None

    def serving_server(self, user: str) -> Optional[str]:
        ap = self.attached_ap(user)
        return None if ap is None else self.nodes[ap].server

    def domain_of(self, node_id: str) -> Optional[str]:
        return self.nodes[node_id].domain

    def servers_in_domain(self, domain: str) -> list[NodeState]:
        return [
            self.nodes[n]
            for n in sorted(self.domains[domain].members)
            if self.nodes[n].is_server and self.nodes[n].role is not Role.CLOUD
        ]

    def clouds(self) -> list[NodeState]:
        return [n for _, n in sorted(self.nodes.items()) if n.role is Role.CLOUD]

    def _transit(self, node_id: str) -> bool:
        return self.nodes[node_id].role is not Role.USER

    def hop_distances(self, sources: list[str]) -> dict[str, int]:
        """Hop counts from ``sources``; users are reachable but never relay."""
        dist = {s: 0 for s in sources}
        queue = deque(sorted(sources))
        while queue:
            u = queue.popleft()
            if dist[u] > 0 and not self._transit(u):
                continue
            for _, v in self.neighbors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def hop_distance(self, a: str, b: str) -> Optional[int]:
        return self.hop_distances([a]).get(b)

    def path(self, a: str, b: str) -> Optional[list[str]]:
        """Shortest path a -> b; ties resolved by lowest face at each hop."""
        dist = self.hop_distances([b])
        if a not in dist:
            return None
        path = [a]
        cur = a
        while cur != b:
            step = None
            for _, peer in self.neighbors(cur):
                if dist.get(peer) == dist[cur] - 1 and (peer == b or self._transit(peer)):
                    step = peer
                    break
            if step is None:
                return None
            path.append(step)
            cur = step
        return path

    def path_links(self, a: str, b: str) -> Optional[list[Link]]:
        p = self.path(a, b)
        if p is None:
            return None
        return [self.link_between(u, v) for u, v in zip(p, p[1:])]

    def transfer_time_us(self, a: str, b: str, size_bytes: int) -> int:
        """Store-and-forward delivery time of one packet on an idle path a -> b."""
        links = self.path_links(a, b)
        if links is None:
            raise TopologyError(f"no path {a} -> {b}")
        return sum(link.serialization_us(size_bytes) + link.latency_us for link in links)


def advertisements(world: World) -> dict[Name, list[str]]:
    """Prefix -> sorted advertiser ids for the current world state."""
    ads: dict[Name, set[str]] = {}

    def add(prefix: Name, node_id: str) -> None:
        ads.setdefault(prefix, set()).add(node_id)

    for node_id, node in sorted(world.nodes.items()):
        for prefix in node.advertise:
            add(prefix, node_id)
        if node.is_server:
            add(THUNK / node_id, node_id)
            add(IMN / node_id, node_id)
            add(CTL / node_id, node_id)
            if node.role is not Role.CLOUD:
                for svc in node.hosted_services:
                    add(svc, node_id)
                if node.ondemand:
                    add(SVC, node_id)
        if node.role is Role.ORCHESTRATOR and node.domain is not None:
            add(JOIN / node.domain, node_id)
            add(DISCOVER / node.domain, node_id)
            add(CTL / node_id, node_id)
        if node.role is Role.ACCESS_POINT:
            add(CTL / node_id, node_id)
    return {prefix: sorted(ids) for prefix, ids in sorted(ads.items())}


def _components(world: World) -> list[set[str]]:
    seen: set[str] = set()
    comps = []
    for start in sorted(world.nodes):
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for _, v in world.neighbors(u):
                if v not in comp:
                    comp.add(v)
                    queue.append(v)
        seen |= comp
        comps.append(comp)
    return comps


def check_connectivity(world: World) -> None:
    comps = _components(world)
    if len(comps) <= 1:
        return
    main = max(comps, key=len)
    stranded = sorted(
        node_id
        for ids in advertisements(world).values()
        for node_id in ids
        if node_id not in main
    )
    if stranded:
        raise DisconnectedAdvertiser(", ".join(dict.fromkeys(stranded)))


def compute_routes(world: World) -> None:
    """Rebuild every FIB by hop-count shortest paths toward each advertised prefix."""
    for node in world.nodes.values():
        node.fib = {}
    for prefix, advertisers in advertisements(world).items():
        dist = world.hop_distances(advertisers)
        sources = set(advertisers)
        for node_id, d in dist.items():
            node = world.nodes[node_id]
            if d == 0:
                node.fib[prefix] = FibEntry(prefix, ((APP_FACE, 0),))
                continue
            hops = tuple(
                (face, d)
                for face, peer in world.neighbors(node_id)
                if dist.get(peer) == d - 1 and (peer in sources or world._transit(peer))
            )
            if hops:
                node.fib[prefix] = FibEntry(prefix, hops)


def fib_snapshot(world: World) -> dict[str, dict[str, tuple]]:
    return {
        node_id: {str(p): e.next_hops for p, e in sorted(node.fib.items())}
        for node_id, node in sorted(world.nodes.items())
    }


def build_topology(config: ScenarioConfig) -> World:
    world = World()
    policy = config.policy
    for spec in config.nodes:
        node = NodeState(
            id=spec.id,
            role=Role(spec.role),
            domain=spec.domain,
            compute_capacity=None if spec.role == "cloud" else spec.capacity,
            env=set(spec.env),
            hosted_services=set(spec.services),
            advertise=list(spec.advertise),
            server=spec.server,
            ondemand=(policy.deployment == "ondemand" and spec.role == "edge_server"),
            cs_capacity=policy.cs_capacity,
            pit_lifetime_us=policy.pit_lifetime_us,
        )
        node.home_domain = node.domain
        node.strategies = {DISCOVER: Strategy.MULTICAST}
        for prefix, strategy in config.strategies.items():
            node.strategies[prefix] = Strategy(strategy)
        world.add_node(node)
    for spec in config.links:
        world.add_link(spec.a, spec.b, spec.latency_us, spec.bandwidth_bps, spec.id)
    for spec in config.domains:
        members = set(spec.members) | {spec.orchestrator}
        world.domains[spec.id] = PecDomain(spec.id, spec.orchestrator, members, dict(spec.peers))
        for m in members:
            if world.nodes[m].domain is None:
                world.nodes[m].domain = spec.id
                world.nodes[m].home_domain = spec.id
    # cooperation is symmetric
    for d in world.domains.values():
        for peer, flag in list(d.peers.items()):
            other = world.domains.get(peer)
            if other is not None:
                merged = flag and other.peers.get(d.id, flag)
                d.peers[peer] = merged
                other.peers[d.id] = merged
    for svc in config.services:
        world.services[svc.id] = svc
    world.data_sizes = dict(config.data_sizes())
    check_connectivity(world)
    compute_routes(world)
    return world


def onboard_device(world: World, device: str, ap: str, orchestrator: str) -> None:
    """Apply a confirmed join: the device becomes an edge server of the AP's domain."""
    dev = world.nodes[device]
    ap_node = world.nodes[ap]
    orch = world.nodes[orchestrator]
    domain = orch.domain
    if domain is None or domain not in world.domains or ap_node.domain != domain:
        raise UnknownDomain(f"{ap} is not in the domain of {orchestrator}")
    if dev.onboarded:
        raise AlreadyOnboarded(device)
    face = ap_node.face_to(device)
    if face is None or dev.face_to(ap) is None:
        raise TopologyError(f"{device} is not attached to {ap}")
    ap_node.onboard_faces.add(face)
    dev.onboarded = True
    dev.domain = domain
    world.domains[domain].members.add(device)


def offboard_device(world: World, device: str) -> None:
    dev = world.nodes[device]
    if not dev.onboarded:
        raise NotOnboarded(device)
    dev.onboarded = False
    if dev.domain is not None and dev.domain in world.domains and dev.domain != dev.home_domain:
        world.domains[dev.domain].members.discard(device)
    dev.domain = dev.home_domain
    for _, peer in world.neighbors(device):
        face = world.nodes[peer].face_to(device)
        world.nodes[peer].onboard_faces.discard(face)


def handover(world: World, user: str, from_ap: str, to_ap: str,
             latency_us: int | None = None, bandwidth_bps: int | None = None) -> Link:
    """Move ``user`` from ``from_ap`` to ``to_ap``; returns the new access link."""
    if from_ap == to_ap:
        raise ValueError("handover needs two different access points")
    old = world.link_between(user, from_ap)
    if old is None:
        raise TopologyError(f"{user} is not attached to {from_ap}")
    world.remove_link(old.id)
    return world.add_link(
        user,
        to_ap,
        old.latency_us if latency_us is None else latency_us,
        old.bandwidth_bps if bandwidth_bps is None else bandwidth_bps,
    )
