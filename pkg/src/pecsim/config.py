"""Scenario files: JSON schema, referential checks and typed configuration."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .names import Name, NameParseError, parse_name
from .orchestration import ServiceDescriptor

ROLES = ["user", "access_point", "router", "edge_server", "orchestrator", "cloud"]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_str = {"type": "string", "minLength": 1}
_names = {"type": "array", "items": _str}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["nodes", "links"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": 1},
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "end_ms": {"anyOf": [_pos, {"type": "null"}]},
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sync_threshold_ms": _nonneg,
                "thunk_mode": {"enum": ["direct", "mapped"]},
                "pit_lifetime_ms": _pos,
                "transfer_lifetime_ms": _pos,
                "cs_capacity": {"type": "integer", "minimum": 0},
                "reuse_freshness_ms": _nonneg,
                "hop_limit": _int_pos,
                "interest_bytes": _int_pos,
                "control_bytes": _int_pos,
                "discovery_response_bytes": _int_pos,
                "discovery_freshness_ms": _nonneg,
                "default_object_bytes": _int_pos,
                "deployment": {"enum": ["static", "orchestrated", "ondemand"]},
                "replicas": _int_pos,
                "migration": {"enum": ["stop_and_copy"]},
                "migrate_min_remaining_ms": _nonneg,
                "consumer_retries": {"type": "integer", "minimum": 0},
                "discovery_retries": {"type": "integer", "minimum": 0},
            },
        },
        "strategies": {
            "type": "object",
            "additionalProperties": {"enum": ["best-route", "multicast", "broadcast"]},
        },
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "role"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "pattern": "^[^/]+$"},
                    "role": {"enum": ROLES},
                    "domain": {"type": ["string", "null"]},
                    "capacity": {"type": "integer", "minimum": 0},
                    "env": _names,
                    "services": _names,
                    "advertise": _names,
                    "server": _str,
                },
            },
        },
        "links": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b", "latency_ms", "bandwidth_bps"],
                "additionalProperties": False,
                "properties": {
                    "id": _str,
                    "a": _str,
                    "b": _str,
                    "latency_ms": _pos,
                    "bandwidth_bps": _pos,
                },
            },
        },
        "domains": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "orchestrator"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "pattern": "^[^/]+$"},
                    "orchestrator": _str,
                    "members": _names,
                    "peers": {"type": "object", "additionalProperties": {"type": "boolean"}},
                },
            },
        },
        "services": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "id", "exec_base_ms", "result_bytes", "instance_state_bytes",
                    "container_bytes", "vm_image_bytes",
                ],
                "additionalProperties": False,
                "properties": {
                    "id": _str,
                    "exec_base_ms": _nonneg,
                    "exec_ms_per_byte": _nonneg,
                    "result_bytes": _int_pos,
                    "instance_state_bytes": _int_pos,
                    "container_bytes": _int_pos,
                    "vm_image_bytes": _int_pos,
                    "env": _str,
                },
            },
        },
        "placements": {"type": "object", "additionalProperties": _names},
        "data": {"type": "object", "additionalProperties": _int_pos},
        "requests": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["at_ms", "user", "kind"],
                "additionalProperties": False,
                "properties": {
                    "id": _str,
                    "at_ms": _nonneg,
                    "user": _str,
                    "kind": {"enum": ["invoke", "discover", "fetch"]},
                    "service": _str,
                    "data": _str,
                    "data_bytes": _int_pos,
                    "name": _str,
                    "poll_after_ms": _nonneg,
                },
            },
        },
        "mobility": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["at_ms", "user", "from", "to"],
                "additionalProperties": False,
                "properties": {
                    "at_ms": _nonneg,
                    "user": _str,
                    "from": _str,
                    "to": _str,
                    "latency_ms": _pos,
                    "bandwidth_bps": _pos,
                },
            },
        },
        "actions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["at_ms", "kind", "device"],
                "additionalProperties": False,
                "properties": {
                    "at_ms": _nonneg,
                    "kind": {"enum": ["onboard", "offboard"]},
                    "device": _str,
                    "domain": _str,
                },
            },
        },
    },
}


class SchemaError(Exception):
    def __init__(self, errors: list[str]) -> None:
        super().__init__("; ".join(errors))
        self.errors = errors


def ms_to_us(ms: float) -> int:
    return int(round(ms * 1000))


@dataclass
class Policy:
    sync_threshold_ms: float = 50.0
    thunk_mode: str = "mapped"
    pit_lifetime_ms: float = 4000.0
    transfer_lifetime_ms: float = 3_600_000.0
    cs_capacity: int = 100
    reuse_freshness_ms: float = 10_000.0
    hop_limit: int = 32
    interest_bytes: int = 100
    control_bytes: int = 100
    discovery_response_bytes: int = 500
    discovery_freshness_ms: float = 1000.0
    default_object_bytes: int = 1024
    deployment: str = "static"
    replicas: int = 1
    migration: str = "stop_and_copy"
    migrate_min_remaining_ms: float = 0.0
    consumer_retries: int = 1
    discovery_retries: int = 2

    @property
    def pit_lifetime_us(self) -> int:
        return ms_to_us(self.pit_lifetime_ms)

    @property
    def transfer_lifetime_us(self) -> int:
        return ms_to_us(self.transfer_lifetime_ms)

    @property
    def sync_threshold_us(self) -> int:
        return ms_to_us(self.sync_threshold_ms)

    @property
    def reuse_freshness_us(self) -> int:
        return ms_to_us(self.reuse_freshness_ms)


@dataclass
class NodeSpec:
    id: str
    role: str
    domain: Optional[str] = None
    capacity: int = 0
    env: list[str] = field(default_factory=list)
    services: list[Name] = field(default_factory=list)
    advertise: list[Name] = field(default_factory=list)
    server: Optional[str] = None


@dataclass
class LinkSpec:
    id: Optional[str]
    a: str
    b: str
    latency_us: int
    bandwidth_bps: int


@dataclass
class DomainSpec:
    id: str
    orchestrator: str
    members: list[str] = field(default_factory=list)
    peers: dict[str, bool] = field(default_factory=dict)


@dataclass
class RequestSpec:
    index: int
    id: str
    time_us: int
    user: str
    kind: str
    service: Optional[Name] = None
    data: Optional[Name] = None
    data_bytes: int = 0
    name: Optional[Name] = None
    poll_after_us: Optional[int] = None


@dataclass
class MobilitySpec:
    time_us: int
    user: str
    from_ap: str
    to_ap: str
    latency_us: Optional[int] = None
    bandwidth_bps: Optional[int] = None


@dataclass
class ActionSpec:
    time_us: int
    kind: str
    device: str
    domain: Optional[str] = None


@dataclass
class ScenarioConfig:
    seed: int = 0
    end_us: Optional[int] = None
    policy: Policy = field(default_factory=Policy)
    strategies: dict[Name, str] = field(default_factory=dict)
    nodes: list[NodeSpec] = field(default_factory=list)
    links: list[LinkSpec] = field(default_factory=list)
    domains: list[DomainSpec] = field(default_factory=list)
    services: list[ServiceDescriptor] = field(default_factory=list)
    requests: list[RequestSpec] = field(default_factory=list)
    mobility: list[MobilitySpec] = field(default_factory=list)
    actions: list[ActionSpec] = field(default_factory=list)
    objects: dict[Name, int] = field(default_factory=dict)

    def data_sizes(self) -> dict[Name, int]:
        sizes = dict(self.objects)
        for r in self.requests:
            if r.kind == "invoke" and r.data is not None:
                sizes.setdefault(r.data, r.data_bytes)
        return sizes


def _name(value: str, where: str, errors: list[str]) -> Optional[Name]:
    try:
        return parse_name(value)
    except (NameParseError, ValueError) as exc:
        errors.append(f"{where}: bad name {value!r} ({exc.__class__.__name__})")
        return None


def _schema_errors(raw: Any) -> list[str]:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path))):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        errors.append(f"{where}: {err.message}")
    return errors


def parse_config(raw: Any) -> tuple[Optional[ScenarioConfig], list[str]]:
    """Schema and referential validation; returns (config or None, errors)."""
    errors = _schema_errors(raw)
    if errors:
        return None, errors

    policy = Policy(**raw.get("policy", {}))
    cfg = ScenarioConfig(seed=raw.get("seed", 0), policy=policy)
    if raw.get("end_ms") is not None:
        cfg.end_us = ms_to_us(raw["end_ms"])
    for prefix, strategy in raw.get("strategies", {}).items():
        name = _name(prefix, "strategies", errors)
        if name is not None:
            cfg.strategies[name] = strategy

    ids: dict[str, NodeSpec] = {}
    for i, n in enumerate(raw["nodes"]):
        where = f"nodes[{i}]"
        if n["id"] in ids:
            errors.append(f"{where}: duplicate node id {n['id']!r}")
            continue
        spec = NodeSpec(
            id=n["id"],
            role=n["role"],
            domain=n.get("domain"),
            capacity=n.get("capacity", 0),
            env=list(n.get("env", [])),
            server=n.get("server"),
        )
        spec.services = [x for x in (_name(s, where, errors) for s in n.get("services", [])) if x]
        spec.advertise = [x for x in (_name(s, where, errors) for s in n.get("advertise", [])) if x]
        ids[spec.id] = spec
        cfg.nodes.append(spec)

    def node_ref(node_id: str, where: str, role: Optional[str] = None) -> bool:
        if node_id not in ids:
            errors.append(f"{where}: undefined node id {node_id!r}")
            return False
        if role is not None and ids[node_id].role != role:
            errors.append(f"{where}: {node_id!r} is a {ids[node_id].role}, expected {role}")
            return False
        return True

    link_ids = set()
    for i, l in enumerate(raw["links"]):
        where = f"links[{i}]"
        ok = node_ref(l["a"], where) & node_ref(l["b"], where)
        if l["a"] == l["b"]:
            errors.append(f"{where}: self-loop on {l['a']!r}")
            ok = False
        lid = l.get("id", f"l{i}")
        if lid in link_ids:
            errors.append(f"{where}: duplicate link id {lid!r}")
            ok = False
        link_ids.add(lid)
        if ok:
            cfg.links.append(LinkSpec(lid, l["a"], l["b"], ms_to_us(l["latency_ms"]), math.ceil(l["bandwidth_bps"])))

    for spec in cfg.nodes:
        if spec.server is not None:
            if spec.role != "access_point":
                errors.append(f"node {spec.id!r}: only access points name a serving server")
            elif spec.server not in ids or ids[spec.server].role not in ("edge_server", "cloud"):
                errors.append(f"node {spec.id!r}: undefined server id {spec.server!r}")

    domain_ids = set()
    for i, d in enumerate(raw.get("domains", [])):
        where = f"domains[{i}]"
        if d["id"] in domain_ids:
            errors.append(f"{where}: duplicate domain id {d['id']!r}")
            continue
        domain_ids.add(d["id"])
        node_ref(d["orchestrator"], where, "orchestrator")
        members = [m for m in d.get("members", []) if node_ref(m, where)]
        cfg.domains.append(DomainSpec(d["id"], d["orchestrator"], members, dict(d.get("peers", {}))))
    for d in cfg.domains:
        for peer in d.peers:
            if peer not in domain_ids:
                errors.append(f"domain {d.id!r}: undefined peer domain {peer!r}")
    for spec in cfg.nodes:
        if spec.domain is not None and spec.domain not in domain_ids:
            errors.append(f"node {spec.id!r}: undefined domain {spec.domain!r}")
    member_of = {}
    for d in cfg.domains:
        for m in set(d.members) | {d.orchestrator}:
            if m in member_of and member_of[m] != d.id:
                errors.append(f"node {m!r}: member of both {member_of[m]!r} and {d.id!r}")
            member_of[m] = d.id
    for spec in cfg.nodes:
        if spec.domain is not None and spec.id in member_of and member_of[spec.id] != spec.domain:
            errors.append(f"node {spec.id!r}: domain {spec.domain!r} disagrees with membership")
        if spec.domain is None and spec.id in member_of:
            spec.domain = member_of[spec.id]
    for d in cfg.domains:
        for m in d.members:
            if m in ids and ids[m].domain is None:
                ids[m].domain = d.id
        if d.orchestrator in ids and ids[d.orchestrator].domain is None:
            ids[d.orchestrator].domain = d.id

    services: dict[Name, ServiceDescriptor] = {}
    for i, s in enumerate(raw.get("services", [])):
        where = f"services[{i}]"
        sid = _name(s["id"], where, errors)
        if sid is None:
            continue
        if sid in services:
            errors.append(f"{where}: duplicate service {sid}")
            continue
        try:
            desc = ServiceDescriptor(
                id=sid,
                exec_base_ms=s["exec_base_ms"],
                exec_ms_per_byte=s.get("exec_ms_per_byte", 0.0),
                result_bytes=s["result_bytes"],
                instance_state_bytes=s["instance_state_bytes"],
                container_bytes=s["container_bytes"],
                vm_image_bytes=s["vm_image_bytes"],
                requires_env=s.get("env", "linux"),
            )
        except ValueError as exc:
            errors.append(f"{where}: {exc}")
            continue
        services[sid] = desc
        cfg.services.append(desc)

    for spec in cfg.nodes:
        for svc in spec.services:
            if svc not in services:
                errors.append(f"node {spec.id!r}: undefined service {svc}")
        if spec.services and spec.role not in ("edge_server", "user"):
            errors.append(f"node {spec.id!r}: only edge servers and user devices host services")
    for svc_text, servers in raw.get("placements", {}).items():
        svc = _name(svc_text, "placements", errors)
        if svc is None:
            continue
        if svc not in services:
            errors.append(f"placements: undefined service {svc}")
        for server in servers:
            if server not in ids or ids[server].role != "edge_server":
                errors.append(f"placements[{svc_text}]: undefined server id {server!r}")
            elif svc not in ids[server].services:
                ids[server].services.append(svc)

    for obj, size in raw.get("data", {}).items():
        name = _name(obj, "data", errors)
        if name is not None:
            cfg.objects[name] = size

    seen_req_ids = set()
    for i, r in enumerate(raw.get("requests", [])):
        where = f"requests[{i}]"
        node_ref(r["user"], where, "user")
        rid = r.get("id", f"r{i}")
        if rid in seen_req_ids:
            errors.append(f"{where}: duplicate request id {rid!r}")
        seen_req_ids.add(rid)
        req = RequestSpec(i, rid, ms_to_us(r["at_ms"]), r["user"], r["kind"])
        if r.get("poll_after_ms") is not None:
            req.poll_after_us = ms_to_us(r["poll_after_ms"])
        if r["kind"] == "invoke":
            for key in ("service", "data", "data_bytes"):
                if key not in r:
                    errors.append(f"{where}: invoke needs {key!r}")
            if "service" in r:
                req.service = _name(r["service"], where, errors)
                if req.service is not None and req.service not in services:
                    errors.append(f"{where}: undefined service {req.service}")
            if "data" in r:
                req.data = _name(r["data"], where, errors)
            req.data_bytes = r.get("data_bytes", 0)
        elif r["kind"] == "fetch":
            if "name" not in r:
                errors.append(f"{where}: fetch needs 'name'")
            else:
                req.name = _name(r["name"], where, errors)
        cfg.requests.append(req)
    sizes: dict[Name, int] = dict(cfg.objects)
    for req in cfg.requests:
        if req.kind == "invoke" and req.data is not None:
            if sizes.setdefault(req.data, req.data_bytes) != req.data_bytes:
                errors.append(f"requests[{req.index}]: conflicting size for data {req.data}")

    # replay mobility in time order against the initial attachments
    attach: dict[str, Optional[str]] = {}
    for spec in cfg.nodes:
        if spec.role == "user":
            aps = sorted(
                (l.b if l.a == spec.id else l.a)
                for l in cfg.links
                if spec.id in (l.a, l.b) and ids[l.b if l.a == spec.id else l.a].role == "access_point"
            )
            if len(aps) > 1:
                errors.append(f"node {spec.id!r}: attached to several access points {aps}")
            attach[spec.id] = aps[0] if aps else None
    last_time: dict[str, int] = {}
    moves = sorted(enumerate(raw.get("mobility", [])), key=lambda im: (im[1]["at_ms"], im[0]))
    for i, m in moves:
        where = f"mobility[{i}] {json.dumps(m, sort_keys=True)}"
        if not (node_ref(m["user"], where, "user") and node_ref(m["from"], where, "access_point")
                and node_ref(m["to"], where, "access_point")):
            continue
        t = ms_to_us(m["at_ms"])
        if m["user"] in last_time and t <= last_time[m["user"]]:
            errors.append(f"{where}: times must strictly increase per user")
        last_time[m["user"]] = t
        if m["from"] == m["to"]:
            errors.append(f"{where}: from and to are the same access point")
        if attach.get(m["user"]) != m["from"]:
            errors.append(f"{where}: from_ap mismatch, {m['user']!r} is attached to {attach.get(m['user'])!r}")
        attach[m["user"]] = m["to"]
        cfg.mobility.append(MobilitySpec(
            t, m["user"], m["from"], m["to"],
            ms_to_us(m["latency_ms"]) if "latency_ms" in m else None,
            math.ceil(m["bandwidth_bps"]) if "bandwidth_bps" in m else None,
        ))
    cfg.mobility.sort(key=lambda m: m.time_us)

    for i, a in enumerate(raw.get("actions", [])):
        where = f"actions[{i}]"
        if node_ref(a["device"], where, "user"):
            if a["kind"] == "onboard" and ids[a["device"]].capacity < 0:
                errors.append(f"{where}: negative capacity")
        if a.get("domain") is not None and a["domain"] not in domain_ids:
            errors.append(f"{where}: undefined domain {a['domain']!r}")
        cfg.actions.append(ActionSpec(ms_to_us(a["at_ms"]), a["kind"], a["device"], a.get("domain")))

    roles = [s.role for s in cfg.nodes]
    if policy.deployment == "orchestrated" and "cloud" not in roles:
        errors.append("policy: orchestrated deployment needs a cloud node")
    return (None if errors else cfg), errors


def load_config(raw: Any) -> ScenarioConfig:
    cfg, errors = parse_config(raw)
    if errors:
        raise SchemaError(errors)
    return cfg


def read_config(path: str | Path) -> tuple[bytes, Any]:
    data = Path(path).read_bytes()
    try:
        return data, json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError([f"<root>: invalid JSON ({exc})"]) from None


@dataclass
class ValidationReport:
    ok: bool
    errors: list[str]
    summary: list[str]

    def render(self) -> str:
        if self.ok:
            return "\n".join(["OK"] + self.summary) + "\n"
        return "\n".join(f"error: {e}" for e in self.errors) + "\n"


def validate(raw: Any) -> ValidationReport:
    """Never raises; the report carries every problem found."""
    try:
        cfg, errors = parse_config(raw)
    except Exception as exc:  # pragma: no cover - defensive
        return ValidationReport(False, [f"<root>: {exc}"], [])
    if cfg is not None:
        from .topology import TopologyError, build_topology

        try:
            build_topology(cfg)
        except (TopologyError, ValueError) as exc:
            errors = [f"topology: {exc.__class__.__name__}: {exc}"]
            cfg = None
    if cfg is None:
        return ValidationReport(False, errors, [])
    by_role: dict[str, int] = {}
    for n in cfg.nodes:
        by_role[n.role] = by_role.get(n.role, 0) + 1
    summary = [
        f"nodes: {len(cfg.nodes)} (" + ", ".join(f"{r}={c}" for r, c in sorted(by_role.items())) + ")",
        f"links: {len(cfg.links)}",
        f"domains: {len(cfg.domains)}" + (
            " (" + ", ".join(f"{d.id}: {len(set(d.members) | {d.orchestrator})} members" for d in cfg.domains) + ")"
            if cfg.domains else ""
        ),
        f"services: {len(cfg.services)}",
        f"requests: {len(cfg.requests)}",
        f"mobility steps: {len(cfg.mobility)}",
        f"actions: {len(cfg.actions)}",
    ]
    return ValidationReport(True, [], summary)
