from __future__ import annotations

import pytest

from pecsim.config import load_config
from pecsim.engine import RuntimeInvariantViolation
from pecsim.names import parse_name
from pecsim.scenarios import SERVICE, _link, _node, _single_domain, compute_reuse, migration, onboarding, thunk_protocol
from pecsim.sim import Simulation


def simulate(raw, **policy):
    if policy:
        raw.setdefault("policy", {}).update(policy)
    return Simulation(load_config(raw)).run()


def of(sim, kind, node=None):
    return [r for r in sim.records if r["kind"] == kind and (node is None or r["node"] == node)]


def interests_on(sim, link, sender):
    return [r for r in of(sim, "tx", sender) if r["annotation"]["link"] == link and r["annotation"]["pkt"] == "interest"]


def test_short_job_answers_synchronously():
    sim = simulate(thunk_protocol(exec_ms=20))
    assert not of(sim, "thunk_rx") and not of(sim, "poll")
    assert len(of(sim, "result_delivered")) == 1


def test_long_job_gets_thunk_and_one_poll():
    sim = simulate(thunk_protocol(exec_ms=400))
    (thunk,) = of(sim, "thunk_rx")
    assert thunk["annotation"]["estimate_us"] == 400_000
    assert len(of(sim, "poll")) == 1 and len(of(sim, "result_delivered")) == 1


def test_cached_result_needs_no_second_fetch():
    sim = simulate(compute_reuse(n_users=2, spread_ms=1000))
    assert len(of(sim, "exec_start")) == 1
    assert len(of(sim, "reuse_cached")) == 1
    assert len(interests_on(sim, "es1-cam", "es1")) == 1
    assert sim.metrics.reuse_savings == 1


def test_second_discovery_served_from_cache():
    raw = _single_domain(["u0"])
    raw["requests"] = [{"id": f"d{i}", "at_ms": i * 20, "user": "u0", "kind": "discover"} for i in range(2)]
    sim = simulate(raw)
    done = of(sim, "discovery_done")
    assert [r["annotation"]["services"] for r in done] == [[SERVICE], [SERVICE]]
    assert len(interests_on(sim, "ap1-o1", "ap1")) == 1
    assert of(sim, "cs_hit")


def test_offboard_fails_running_instance():
    raw = onboarding()
    raw["services"][1]["exec_base_ms"] = 5000
    sim = simulate(raw)
    assert [r["node"] for r in of(sim, "instance_failed")] == ["dev"]
    failed = {r["annotation"]["req"]: r["annotation"]["reason"] for r in of(sim, "request_failed")}
    assert "during" in failed
    assert not of(sim, "result_delivered")


def test_two_handovers_before_poll_migrate_once():
    raw = migration("instance")
    raw["nodes"] += [_node("ap3", "access_point", server="es3"),
                     _node("es3", "edge_server", capacity=2, env=["linux"], services=[SERVICE])]
    raw["links"] += [_link("ap3", "es3", 2.0, id="ap3-es3"), _link("es2", "es3", 2.0, id="es2-es3")]
    raw["domains"][0]["members"] += ["ap3", "es3"]
    raw["mobility"] = [
        {"at_ms": 10_000, "user": "u0", "from": "ap1", "to": "ap2"},
        {"at_ms": 10_000.5, "user": "u0", "from": "ap2", "to": "ap3"},
    ]
    raw["requests"][0]["poll_after_ms"] = 10_001
    sim = simulate(raw)
    (begin,) = of(sim, "migration_begin")
    assert begin["node"] == "es1"
    (done,) = of(sim, "reconnect_done")
    assert done["annotation"]["destination"] == "es3"
    assert of(sim, "result_delivered")[0]["annotation"]["server"] == "es3"


def test_declined_migration_falls_back_to_source():
    sim = simulate(migration("instance"), migrate_min_remaining_ms=10**9)
    assert not of(sim, "migration_begin")
    (failed,) = of(sim, "reconnect_failed")
    assert failed["annotation"]["reason"] == "WaitPreferred"
    (done,) = of(sim, "result_delivered")
    assert done["annotation"]["server"] == "es1"


def test_empty_schedule_gives_header_and_end():
    raw = _single_domain(["u0"])
    sim = simulate(raw)
    assert [r["kind"] for r in sim.records] == ["end"]
    assert sim.trace_lines()[0].startswith('{"kind":"header"')
    assert sim.metrics.requests == 0 and sim.metrics.in_flight_at_end == 0


def test_pit_leak_is_reported():
    sim = Simulation(load_config(_single_domain(["u0"])))
    sim.start()
    sim.world.nodes["es1"].pit[parse_name("/cam/x")] = object()
    with pytest.raises(RuntimeInvariantViolation) as exc:
        sim.finish(drained=True)
    assert exc.value.record["kind"] == "pit_leak"


def test_unknown_service_is_refused():
    raw = thunk_protocol()
    raw["services"].append(dict(raw["services"][0], id="/pec/svc/other"))
    raw["requests"][0]["service"] = "/pec/svc/other"
    sim = simulate(raw)
    assert len(of(sim, "request_failed")) == 1


def test_direct_delegation_without_handover_never_reconnects():
    from pecsim.scenarios import delegation

    direct = simulate(delegation(3, "direct"))
    assert not of(direct, "reconnect_issue") and not of(direct, "migration_begin")
    mapped = simulate(delegation(3, "mapped"))
    last = max(r["time"] for r in of(mapped, "delegate"))
    # the mapped designated server keeps proxying polls after the handoff
    assert [r for r in of(mapped, "rx", "es1") if r["time"] > last]
