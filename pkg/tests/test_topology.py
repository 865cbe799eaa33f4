from __future__ import annotations

import itertools

import pytest

from pecsim.config import load_config
from pecsim.forwarding import APP_FACE
from pecsim.names import SVC, parse_name
from pecsim.topology import (
    AlreadyOnboarded,
    DisconnectedAdvertiser,
    NotOnboarded,
    UnknownDomain,
    build_topology,
    compute_routes,
    fib_snapshot,
    handover,
    offboard_device,
    onboard_device,
)


def link(a, b, **kw):
    return {"a": a, "b": b, "latency_ms": 1, "bandwidth_bps": 1e6, **kw}


def world_of(raw):
    return build_topology(load_config(raw))


def chain():
    return world_of({
        "nodes": [
            {"id": "u1", "role": "user"},
            {"id": "ap1", "role": "access_point"},
            {"id": "r1", "role": "router"},
            {"id": "es1", "role": "edge_server", "capacity": 1, "advertise": ["/pec/svc"]},
        ],
        "links": [link("u1", "ap1"), link("ap1", "r1"), link("r1", "es1")],
    })


def test_chain_routes_toward_advertiser():
    w = chain()
    for node_id, peer in (("u1", "ap1"), ("ap1", "r1"), ("r1", "es1")):
        entry = w.nodes[node_id].fib[SVC]
        assert [w.nodes[node_id].face_peers[f] for f in entry.faces] == [peer]
    assert w.nodes["es1"].fib[SVC].next_hops == ((APP_FACE, 0),)


def _bfs(adj, src):
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def test_equal_cost_paths_match_shortest_path_oracle():
    # diamond s - {x, y} - p plus a longer detour through z
    raw = {
        "nodes": [{"id": i, "role": "router"} for i in ("s", "x", "y", "z", "p")],
        "links": [link("s", "y"), link("s", "x"), link("x", "p"), link("y", "p"), link("s", "z"), link("z", "y")],
    }
    raw["nodes"][-1]["advertise"] = ["/obj"]
    w = world_of(raw)
    adj = {n: [] for n in w.nodes}
    for l in w.links.values():
        adj[l.a].append(l.b)
        adj[l.b].append(l.a)
    dist = _bfs(adj, "p")
    prefix = parse_name("/obj")
    for node_id, node in w.nodes.items():
        if node_id == "p":
            continue
        want = sorted(
            (face, dist[node_id]) for face, peer in node.face_peers.items() if dist[peer] == dist[node_id] - 1
        )
        assert sorted(node.fib[prefix].next_hops) == want
        # BestRoute picks the lowest face among equal-cost hops
        assert node.fib[prefix].faces[0] == min(f for f, _ in want)


def test_disconnected_advertiser():
    with pytest.raises(DisconnectedAdvertiser):
        world_of({
            "nodes": [{"id": "a", "role": "router"}, {"id": "b", "role": "router"},
                      {"id": "c", "role": "router", "advertise": ["/x"]}],
            "links": [link("a", "b")],
        })


def two_domains():
    return world_of({
        "nodes": [
            {"id": "o1", "role": "orchestrator"}, {"id": "o2", "role": "orchestrator"},
            {"id": "ap1", "role": "access_point"}, {"id": "ap2", "role": "access_point"},
            {"id": "phone", "role": "user", "capacity": 1, "services": ["/pec/svc/x"]},
        ],
        "links": [link("phone", "ap1"), link("ap1", "o1"), link("ap1", "ap2"), link("ap2", "o2")],
        "domains": [{"id": "d1", "orchestrator": "o1", "members": ["ap1"]},
                    {"id": "d2", "orchestrator": "o2", "members": ["ap2"]}],
        "services": [{"id": "/pec/svc/x", "exec_base_ms": 1, "result_bytes": 1, "instance_state_bytes": 2,
                      "container_bytes": 3, "vm_image_bytes": 4}],
    })


def test_onboard_then_offboard_restores_routes():
    w = two_domains()
    before = fib_snapshot(w)
    assert parse_name("/pec/svc/x") not in w.nodes["ap1"].fib
    onboard_device(w, "phone", "ap1", "o1")
    compute_routes(w)
    assert parse_name("/pec/svc/x") in w.nodes["ap1"].fib
    with pytest.raises(AlreadyOnboarded):
        onboard_device(w, "phone", "ap1", "o1")
    offboard_device(w, "phone")
    compute_routes(w)
    assert fib_snapshot(w) == before
    with pytest.raises(NotOnboarded):
        offboard_device(w, "phone")


def test_join_to_other_domains_ap_rejected():
    w = two_domains()
    with pytest.raises(UnknownDomain):
        onboard_device(w, "phone", "ap1", "o2")


def test_handover_moves_access_link():
    w = two_domains()
    new = handover(w, "phone", "ap1", "ap2")
    assert w.attached_ap("phone") == "ap2"
    assert {new.a, new.b} == {"phone", "ap2"}
    with pytest.raises(Exception):
        handover(w, "phone", "ap1", "ap2")


def test_users_never_transit():
    w = world_of({
        "nodes": [{"id": "a", "role": "router"}, {"id": "u", "role": "user"},
                  {"id": "b", "role": "router", "advertise": ["/x"]}],
        "links": [link("a", "u"), link("u", "b")],
    })
    assert parse_name("/x") not in w.nodes["a"].fib
    assert parse_name("/x") in w.nodes["u"].fib


def test_serialization_rounds_up():
    w = chain()
    l = next(iter(w.links.values()))
    assert l.serialization_us(1) == 8
    l.bandwidth_bps = 3
    assert l.serialization_us(1) == 2_666_667
    assert all(a != b for a, b in itertools.combinations(w.links, 2))
