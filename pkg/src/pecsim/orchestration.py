"""Service deployment (orchestrated and on-demand) and service discovery."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .names import SVC, Name, is_prefix_of, parse_name
from .topology import Role, World


class OrchestrationError(Exception):
    pass


class InsufficientCapacity(OrchestrationError):
    pass


class ServiceUnknownEverywhere(OrchestrationError):
    pass


@dataclass(frozen=True)
class ServiceDescriptor:
    id: Name
    exec_base_ms: float
    exec_ms_per_byte: float
    result_bytes: int
    instance_state_bytes: int
    container_bytes: int
    vm_image_bytes: int
    requires_env: str = "linux"

    def __post_init__(self) -> None:
        if not is_prefix_of(SVC, self.id) or len(self.id) <= len(SVC):
            raise ValueError(f"service id must live under {SVC}: {self.id}")
        sizes = (self.result_bytes, self.instance_state_bytes, self.container_bytes, self.vm_image_bytes)
        if min(sizes) <= 0:
            raise ValueError(f"{self.id}: all sizes must be > 0")
        if list(sizes) != sorted(sizes):
            raise ValueError(
                f"{self.id}: need result_bytes <= instance_state_bytes <= container_bytes <= vm_image_bytes"
            )
        if self.exec_base_ms < 0 or self.exec_ms_per_byte < 0:
            raise ValueError(f"{self.id}: execution model must be non-negative")

    def exec_time_ms(self, data_bytes: int) -> float:
        return self.exec_base_ms + self.exec_ms_per_byte * data_bytes

    def exec_time_us(self, data_bytes: int) -> int:
        return max(1, math.ceil(self.exec_time_ms(data_bytes) * 1000 - 1e-9))


# (service, domain) -> request count over the warm-up window
PopularityStats = Counter


@dataclass
class DeploymentPlan:
    placements: dict[Name, list[str]] = field(default_factory=dict)

    def pairs(self) -> list[tuple[Name, str]]:
        return [(svc, s) for svc, servers in sorted(self.placements.items()) for s in servers]


@dataclass(frozen=True)
class DeploymentOrder:
    service: Name
    target: str
    source: str
    kind: str  # "container" | "vm"
    bytes: int


def image_for(descriptor: ServiceDescriptor, env_present: bool) -> tuple[str, int]:
    if env_present:
        return "container", descriptor.container_bytes
    return "vm", descriptor.vm_image_bytes


def orchestrated_deploy(stats: PopularityStats, k: int, world: World) -> DeploymentPlan:
    """Place each demanded service on ``k`` servers in its highest-demand domains."""
    if k < 1:
        raise ValueError("replica target must be >= 1")
    candidates = [
        n for _, n in sorted(world.nodes.items())
        if n.role is Role.EDGE_SERVER and (n.compute_capacity or 0) >= 1
    ]
    plan = DeploymentPlan()
    services = sorted({svc for (svc, _dom), count in stats.items() if count > 0})
    for svc in services:
        if len(candidates) < k:
            raise InsufficientCapacity(f"{svc}: {len(candidates)} feasible servers < {k}")
        ranked = sorted(candidates, key=lambda n: (-stats.get((svc, n.domain), 0), n.id))
        plan.placements[svc] = [n.id for n in ranked[:k]]
    return plan


def deployment_orders(plan: DeploymentPlan, world: World) -> list[DeploymentOrder]:
    """Cloud-sourced transfers needed to realise ``plan``."""
    clouds = world.clouds()
    if not clouds:
        raise ServiceUnknownEverywhere("no cloud node to deploy from")
    orders = []
    for svc, server in plan.pairs():
        node = world.nodes[server]
        if node.hosts(svc):
            continue
        desc = world.services[svc]
        kind, nbytes = image_for(desc, node.has_env(desc.requires_env))
        source = min(clouds, key=lambda c: (world.hop_distance(server, c.id) or math.inf, c.id))
        orders.append(DeploymentOrder(svc, server, source.id, kind, nbytes))
    return orders


def ondemand_deploy(world: World, domain: str, service: Name, requesting_server: str) -> DeploymentOrder:
    """Choose where ``requesting_server`` fetches an absent service from.

    Candidates are servers of cooperative peer domains holding the service and
    every cloud node; the fewest-hop source wins and peers win ties.
    """
    if service not in world.services:
        raise ServiceUnknownEverywhere(str(service))
    if any(s.hosts(service) for s in world.servers_in_domain(domain)):
        raise OrchestrationError(f"{service} already present in {domain}")
    desc = world.services[service]
    target = world.nodes[requesting_server]
    kind, nbytes = image_for(desc, target.has_env(desc.requires_env))
    candidates = []
    for peer, coop in sorted(world.domains[domain].peers.items()):
        if not coop or peer not in world.domains:
            continue
        for server in world.servers_in_domain(peer):
            if server.hosts(service):
                candidates.append((server.id, 0))
    candidates += [(c.id, 1) for c in world.clouds()]
    reachable = []
    for node_id, is_cloud in candidates:
        hops = world.hop_distance(requesting_server, node_id)
        if hops is not None:
            reachable.append((hops, is_cloud, node_id))
    if not reachable:
        raise ServiceUnknownEverywhere(str(service))
    _, _, source = min(reachable)
    return DeploymentOrder(service, requesting_server, source, kind, nbytes)


def popularity_from_schedule(requests, domain_of_user: Callable[[str], Optional[str]]) -> PopularityStats:
    stats: PopularityStats = Counter()
    for req in requests:
        if req.kind == "invoke":
            stats[(req.service, domain_of_user(req.user))] += 1
    return stats


def catalog(world: World, domain: str) -> list[Name]:
    """Services invocable in ``domain`` right now, sorted by canonical text."""
    hosted = set()
    for server in world.servers_in_domain(domain):
        hosted |= server.hosted_services
    return sorted(hosted, key=str)


def encode_catalog(services: list[Name]) -> bytes:
    return "\n".join(sorted(str(s) for s in services)).encode("utf-8")


def decode_catalog(payload: bytes) -> list[Name]:
    text = payload.decode("utf-8")
    return [parse_name(line) for line in text.split("\n") if line]


@dataclass(frozen=True)
class Delegate:
    domain: str
    server: str


@dataclass(frozen=True)
class Deploy:
    order: DeploymentOrder


MissDecision = Union[Delegate, Deploy]


def discovery_miss_policy(
    world: World,
    server: str,
    service: Name,
    queue_wait_us: Callable[[str], int],
) -> MissDecision:
    """Delegate to a cooperative peer when its wait beats fetching the service."""
    domain = world.nodes[server].domain
    order = ondemand_deploy(world, domain, service, server)
    fetch_us = world.transfer_time_us(order.source, server, order.bytes)
    best = None
    for peer, coop in sorted(world.domains[domain].peers.items()):
        if not coop or peer not in world.domains:
            continue
        for node in world.servers_in_domain(peer):
            if not node.hosts(service) or node.compute_capacity == 0:
                continue
            wait = queue_wait_us(node.id)
            if best is None or (wait, node.id) < best[0]:
                best = ((wait, node.id), peer)
    if best is not None and best[0][0] < fetch_us:
        return Delegate(best[1], best[0][1])
    return Deploy(order)
