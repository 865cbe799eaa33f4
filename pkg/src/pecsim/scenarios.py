"""Ready-made scenario dictionaries (the same JSON the CLI reads).

Each builder returns a plain ``dict`` so it can be dumped to a file,
validated, or passed to :func:`pecsim.config.load_config`.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

MBPS = 1_000_000
SERVICE = "/pec/svc/detect"


def _node(id: str, role: str, **kw) -> dict:
    return {"id": id, "role": role, **kw}


def _link(a: str, b: str, latency_ms: float = 1.0, bandwidth_bps: float = 100 * MBPS, **kw) -> dict:
    return {"a": a, "b": b, "latency_ms": latency_ms, "bandwidth_bps": bandwidth_bps, **kw}


def _service(id: str = SERVICE, exec_ms: float = 400.0, result: int = 2_000, state: int = 2_000_000,
             container: int = 100_000_000, vm: int = 1_000_000_000, per_byte: float = 0.0) -> dict:
    return {
        "id": id,
        "exec_base_ms": exec_ms,
        "exec_ms_per_byte": per_byte,
        "result_bytes": result,
        "instance_state_bytes": state,
        "container_bytes": container,
        "vm_image_bytes": vm,
    }


def star_aggregation(n_users: int = 10, object_bytes: int = 4096) -> dict:
    """``n_users`` consumers behind one router, all fetching one object at t=0."""
    users = [f"u{i}" for i in range(n_users)]
    return {
        "version": 1,
        "name": "star-aggregation",
        "seed": 1,
        "nodes": [_node("p", "router", advertise=["/video"]), _node("r", "router")]
        + [_node(u, "user") for u in users],
        "links": [_link("r", "p", 5.0, 10 * MBPS, id="uplink")]
        + [_link(u, "r", 1.0, 10 * MBPS, id=f"acc-{u}") for u in users],
        "data": {"/video/seg0": object_bytes},
        "requests": [{"id": f"q{i}", "at_ms": 0, "user": u, "kind": "fetch", "name": "/video/seg0"}
                     for i, u in enumerate(users)],
    }


def _single_domain(users: list[str], capacity: int = 4, exec_ms: float = 400.0, **svc) -> dict:
    return {
        "version": 1,
        "seed": 7,
        "nodes": [
            _node("o1", "orchestrator"),
            _node("ap1", "access_point", server="es1"),
            _node("es1", "edge_server", capacity=capacity, env=["linux"], services=[SERVICE]),
            _node("cam", "router", advertise=["/cam"]),
        ] + [_node(u, "user") for u in users],
        "links": [
            _link("ap1", "es1", 2.0, 100 * MBPS, id="ap1-es1"),
            _link("es1", "cam", 2.0, 100 * MBPS, id="es1-cam"),
            _link("ap1", "o1", 1.0, 100 * MBPS, id="ap1-o1"),
        ] + [_link(u, "ap1", 2.0, 50 * MBPS, id=f"acc-{u}") for u in users],
        "domains": [{"id": "d1", "orchestrator": "o1", "members": ["ap1", "es1", "cam"]}],
        "services": [_service(exec_ms=exec_ms, **svc)],
        "data": {"/cam/frame0": 20_000},
    }


def compute_reuse(n_users: int = 10, exec_ms: float = 400.0, spread_ms: float = 5.0) -> dict:
    """``n_users`` invoke the same (service, data) within one execution window."""
    users = [f"u{i}" for i in range(n_users)]
    cfg = _single_domain(users, exec_ms=exec_ms)
    cfg["name"] = "compute-reuse"
    cfg["requests"] = [
        {"id": f"q{i}", "at_ms": i * spread_ms, "user": u, "kind": "invoke",
         "service": SERVICE, "data": "/cam/frame0", "data_bytes": 20_000}
        for i, u in enumerate(users)
    ]
    return cfg


def thunk_protocol(exec_ms: float = 400.0, poll_after_ms: Optional[float] = None) -> dict:
    """One user, one long invocation answered with a thunk."""
    cfg = _single_domain(["u0"], exec_ms=exec_ms)
    cfg["name"] = "thunk-protocol"
    req = {"id": "q0", "at_ms": 0, "user": "u0", "kind": "invoke",
           "service": SERVICE, "data": "/cam/frame0", "data_bytes": 20_000}
    if poll_after_ms is not None:
        req["poll_after_ms"] = poll_after_ms
    cfg["requests"] = [req]
    return cfg


def delegation(n: int = 20, mode: str = "mapped") -> dict:
    """``n`` users whose designated server (es1, no capacity) delegates to domain d2.

    es1 hangs off r1, so the user -> es2 path never crosses it.
    """
    users = [f"u{i}" for i in range(n)]
    return {
        "version": 1,
        "name": f"delegation-{mode}",
        "seed": 11,
        "policy": {"thunk_mode": mode},
        "nodes": [
            _node("o1", "orchestrator"),
            _node("o2", "orchestrator"),
            _node("ap1", "access_point", server="es1"),
            _node("r1", "router"),
            _node("r2", "router"),
            _node("es1", "edge_server", capacity=0, env=["linux"], services=[SERVICE]),
            _node("es2", "edge_server", capacity=n, env=["linux"], services=[SERVICE]),
            _node("cam", "router", advertise=["/cam"]),
        ] + [_node(u, "user") for u in users],
        "links": [
            _link("ap1", "r1", 1.0, id="ap1-r1"),
            _link("r1", "es1", 1.0, id="r1-es1"),
            _link("r1", "r2", 3.0, id="r1-r2"),
            _link("r2", "es2", 1.0, id="r2-es2"),
            _link("r2", "cam", 1.0, id="r2-cam"),
            _link("r1", "o1", 1.0, id="r1-o1"),
            _link("r2", "o2", 1.0, id="r2-o2"),
        ] + [_link(u, "ap1", 1.0, 50 * MBPS, id=f"acc-{u}") for u in users],
        "domains": [
            {"id": "d1", "orchestrator": "o1", "members": ["ap1", "r1", "es1"], "peers": {"d2": True}},
            {"id": "d2", "orchestrator": "o2", "members": ["r2", "es2", "cam"], "peers": {"d1": True}},
        ],
        "services": [_service(exec_ms=300.0)],
        "requests": [
            {"id": f"q{i}", "at_ms": i * 2, "user": u, "kind": "invoke",
             "service": SERVICE, "data": f"/cam/frame{i}", "data_bytes": 10_000}
            for i, u in enumerate(users)
        ],
    }


LOCAL_SERVICE = "/pec/svc/local-render"


def onboarding(join_ms: float = 100.0, offboard_ms: float = 2000.0) -> dict:
    """A device hosting a service joins domain d1, serves a neighbour, then leaves."""
    return {
        "version": 1,
        "name": "onboarding",
        "seed": 3,
        "nodes": [
            _node("o1", "orchestrator"),
            _node("ap1", "access_point", server="es1"),
            _node("es1", "edge_server", capacity=2, env=["linux"], services=[SERVICE]),
            _node("dev", "user", capacity=1, env=["linux"], services=[LOCAL_SERVICE]),
            _node("u1", "user"),
            _node("cam", "router", advertise=["/cam"]),
        ],
        "links": [
            _link("ap1", "es1", 1.0, id="ap1-es1"),
            _link("ap1", "o1", 1.0, id="ap1-o1"),
            _link("es1", "cam", 1.0, id="es1-cam"),
            _link("dev", "ap1", 2.0, 50 * MBPS, id="acc-dev"),
            _link("u1", "ap1", 2.0, 50 * MBPS, id="acc-u1"),
        ],
        "domains": [{"id": "d1", "orchestrator": "o1", "members": ["ap1", "es1", "cam"]}],
        "services": [_service(), _service(LOCAL_SERVICE, exec_ms=20.0)],
        "actions": [
            {"at_ms": join_ms, "kind": "onboard", "device": "dev", "domain": "d1"},
            {"at_ms": offboard_ms, "kind": "offboard", "device": "dev"},
        ],
        "requests": [
            {"id": "before", "at_ms": 0, "user": "u1", "kind": "invoke",
             "service": LOCAL_SERVICE, "data": "/cam/a", "data_bytes": 1000},
            {"id": "during", "at_ms": (join_ms + offboard_ms) / 2, "user": "u1", "kind": "invoke",
             "service": LOCAL_SERVICE, "data": "/cam/b", "data_bytes": 1000},
            {"id": "after", "at_ms": offboard_ms + 500, "user": "u1", "kind": "invoke",
             "service": LOCAL_SERVICE, "data": "/cam/c", "data_bytes": 1000},
        ],
    }


MIGRATION_LEVELS = ("result", "instance", "container", "full_vm")


def migration(level: str, exec_ms: float = 60_000.0, handover_ms: float = 10_000.0) -> dict:
    """One user hands over from ap1 (es1) to ap2 (es2) while its job runs on es1.

    The destination's state forces ``level``: es2 runs the service (instance),
    has the runtime only (container) or nothing (full VM). For result
    migration the handover comes after the job finished.
    """
    if level not in MIGRATION_LEVELS:
        raise ValueError(f"unknown migration level {level!r}")
    es2 = {"capacity": 2}
    if level == "instance":
        es2.update(env=["linux"], services=[SERVICE])
    elif level == "container":
        es2.update(env=["linux"])
    at = exec_ms + handover_ms if level == "result" else handover_ms
    return {
        "version": 1,
        "name": f"migration-{level}",
        "seed": 5,
        "nodes": [
            _node("o1", "orchestrator"),
            _node("ap1", "access_point", server="es1"),
            _node("ap2", "access_point", server="es2"),
            _node("es1", "edge_server", capacity=2, env=["linux"], services=[SERVICE]),
            _node("es2", "edge_server", **es2),
            _node("cam", "router", advertise=["/cam"]),
            _node("u0", "user"),
        ],
        "links": [
            _link("u0", "ap1", 2.0, 50 * MBPS, id="acc"),
            _link("ap1", "es1", 2.0, 50 * MBPS, id="ap1-es1"),
            _link("ap2", "es2", 2.0, 50 * MBPS, id="ap2-es2"),
            _link("es1", "es2", 2.0, 50 * MBPS, id="es1-es2"),
            _link("es1", "cam", 2.0, 50 * MBPS, id="es1-cam"),
            _link("es1", "o1", 2.0, 50 * MBPS, id="es1-o1"),
        ],
        "domains": [{"id": "d1", "orchestrator": "o1", "members": ["ap1", "ap2", "es1", "es2", "cam"]}],
        "services": [_service(exec_ms=exec_ms, result=10_000)],
        "requests": [{
            "id": "job", "at_ms": 0, "user": "u0", "kind": "invoke", "service": SERVICE,
            "data": "/cam/frame0", "data_bytes": 10_000,
            # first poll lands just after the handover
            "poll_after_ms": at + 1.0,
        }],
        "mobility": [{"at_ms": at, "user": "u0", "from": "ap1", "to": "ap2"}],
    }


def campus() -> dict:
    """Two cooperating domains with orchestrated deployment, discovery, fetches and a roaming user."""
    return {
        "version": 1,
        "name": "campus",
        "seed": 42,
        "end_ms": 600_000,
        "policy": {"deployment": "orchestrated", "replicas": 1},
        "nodes": [
            _node("cloud", "cloud"),
            _node("core", "router"),
            _node("o1", "orchestrator"),
            _node("o2", "orchestrator"),
            _node("ap1", "access_point", server="es1"),
            _node("ap2", "access_point", server="es2"),
            _node("es1", "edge_server", capacity=2, env=["linux"]),
            _node("es2", "edge_server", capacity=2, env=["linux"]),
            _node("cam", "router", advertise=["/cam"]),
            _node("alice", "user"),
            _node("bob", "user"),
            _node("carol", "user"),
        ],
        "links": [
            _link("cloud", "core", 20.0, 1000 * MBPS),
            _link("core", "es1", 2.0, 1000 * MBPS),
            _link("core", "es2", 2.0, 1000 * MBPS),
            _link("es1", "ap1", 1.0),
            _link("es2", "ap2", 1.0),
            _link("es1", "o1", 1.0),
            _link("es2", "o2", 1.0),
            _link("core", "cam", 1.0),
            _link("alice", "ap1", 2.0, 50 * MBPS),
            _link("bob", "ap1", 2.0, 50 * MBPS),
            _link("carol", "ap2", 2.0, 50 * MBPS),
        ],
        "domains": [
            {"id": "d1", "orchestrator": "o1", "members": ["ap1", "es1"], "peers": {"d2": True}},
            {"id": "d2", "orchestrator": "o2", "members": ["ap2", "es2"], "peers": {"d1": True}},
        ],
        "services": [_service(exec_ms=800.0), _service("/pec/svc/ocr", exec_ms=30.0, container=20_000_000)],
        "data": {"/cam/frame0": 50_000, "/cam/page1": 8_000},
        "requests": [
            {"id": "a-disc", "at_ms": 0, "user": "alice", "kind": "discover"},
            {"id": "a-job", "at_ms": 10, "user": "alice", "kind": "invoke", "service": SERVICE,
             "data": "/cam/frame0", "data_bytes": 50_000},
            {"id": "b-job", "at_ms": 12, "user": "bob", "kind": "invoke", "service": SERVICE,
             "data": "/cam/frame0", "data_bytes": 50_000},
            {"id": "c-ocr", "at_ms": 20, "user": "carol", "kind": "invoke", "service": "/pec/svc/ocr",
             "data": "/cam/page1", "data_bytes": 8_000},
            {"id": "c-fetch", "at_ms": 30, "user": "carol", "kind": "fetch", "name": "/cam/page1"},
        ],
        "mobility": [{"at_ms": 300, "user": "alice", "from": "ap1", "to": "ap2"}],
    }


SAMPLES = {
    "star_aggregation": star_aggregation,
    "compute_reuse": compute_reuse,
    "thunk_protocol": thunk_protocol,
    "delegation_mapped": lambda: delegation(mode="mapped"),
    "delegation_direct": lambda: delegation(mode="direct"),
    "onboarding": onboarding,
    "migration_instance": lambda: migration("instance"),
    "campus": campus,
}


def write_samples(directory: str | Path) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, build in SAMPLES.items():
        path = out / f"{name}.json"
        path.write_text(json.dumps(build(), indent=2) + "\n", encoding="utf-8")
        paths.append(path)
    return paths
