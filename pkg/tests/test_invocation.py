from __future__ import annotations

import pytest

from pecsim.config import load_config
from pecsim.invocation import (
    CachedResult,
    DelegationMode,
    DelegationRecord,
    ExecuteHere,
    Failed,
    Fresh,
    JoinRunning,
    Ledger,
    NonCooperativeDomain,
    NotReady,
    RelayIntraDomain,
    Result,
    ReuseTable,
    ThunkRecord,
    ThunkState,
    ToCloud,
    UnknownThunk,
    check_reuse,
    delegate_inter,
    poll_thunk,
    queue_wait_us,
    select_delegate,
    triage,
)
from pecsim.names import make_thunk_name, parse_name
from pecsim.topology import build_topology

S = parse_name("/pec/svc/annotate")
D1, D2 = parse_name("/cam/u1/frame9"), parse_name("/cam/u2/frame9")


def thunk(n=0, server="es1"):
    return make_thunk_name(server, S, n)


def record(n=0, issued=0, est=400_000, started=True):
    return ThunkRecord(thunk(n), "es1", est, issued, issued + est, started=started)


def test_poll_examples():
    rec = record()
    table = {rec.thunk.to_name(): rec}
    assert isinstance(poll_thunk(table, rec.thunk.to_name(), 400_000), Result)
    assert poll_thunk(table, rec.thunk.to_name(), 200_000) == NotReady(200_000)
    with pytest.raises(UnknownThunk):
        poll_thunk(table, rec.thunk.to_name(), rec.expires_at + 1)
    with pytest.raises(UnknownThunk):
        poll_thunk(table, thunk(9).to_name(), 0)
    rec.state = ThunkState.FAILED
    assert isinstance(poll_thunk(table, rec.thunk.to_name(), 1), Failed)


def test_reuse_lifecycle():
    table = ReuseTable(freshness_us=1_000)
    key = (S, D1)
    assert check_reuse(table, key, 0) == Fresh()
    rec = record()
    table.start(key, rec)
    assert check_reuse(table, key, 10) == JoinRunning(rec.thunk)
    assert check_reuse(table, (S, D2), 10) == Fresh()
    assert isinstance(check_reuse(table, key, 400_500), CachedResult)
    assert check_reuse(table, key, 401_001) == Fresh()


def test_reuse_rejects_second_running_execution():
    table = ReuseTable(0)
    table.start((S, D1), record())
    with pytest.raises(ValueError):
        table.start((S, D1), record(1, issued=5))


def world(caps=(2, 1), coop=True, es2_load=0):
    raw = {
        "nodes": [
            {"id": "o1", "role": "orchestrator"}, {"id": "o2", "role": "orchestrator"},
            {"id": "es1", "role": "edge_server", "capacity": caps[0], "services": [str(S)]},
            {"id": "es2", "role": "edge_server", "capacity": caps[1], "services": [str(S)]},
            {"id": "es3", "role": "edge_server", "capacity": 1, "services": [str(S)]},
            {"id": "es4", "role": "edge_server", "capacity": 1, "services": [str(S)]},
        ],
        "links": [{"a": a, "b": b, "latency_ms": 1, "bandwidth_bps": 1e6}
                  for a, b in (("o1", "es1"), ("es1", "es2"), ("es2", "es3"), ("es3", "es4"), ("es4", "o2"))],
        "domains": [
            {"id": "d1", "orchestrator": "o1", "members": ["es1", "es2"], "peers": {"d2": coop}},
            {"id": "d2", "orchestrator": "o2", "members": ["es3", "es4"], "peers": {"d1": coop}},
        ],
        "services": [{"id": str(S), "exec_base_ms": 10, "result_bytes": 1, "instance_state_bytes": 2,
                      "container_bytes": 3, "vm_image_bytes": 4}],
    }
    w = build_topology(load_config(raw))
    w.nodes["es2"].running = es2_load
    return w


def test_triage_examples():
    w = world()
    w.nodes["es1"].running = 1
    assert triage(w, "es1", S) == ExecuteHere()
    w.nodes["es1"].running = 2
    assert triage(w, "es1", S) == RelayIntraDomain("es2")
    w.nodes["es2"].running = 1
    assert triage(w, "es1", S) == ToCloud()


def test_select_delegate_lowest_id_on_tie():
    w = world()
    assert select_delegate(w, "es1", S) == ("d2", "es3")
    assert select_delegate(world(coop=False), "es1", S) is None


def test_delegation_modes():
    w = world()
    dest = thunk(0, "es3")
    direct = delegate_inter(w, "es1", "d2", "es3", dest, DelegationMode.DIRECT, lambda: thunk(5))
    assert direct.user_thunk == dest
    mapped = delegate_inter(w, "es1", "d2", "es3", dest, DelegationMode.MAPPED, lambda: thunk(5))
    assert mapped.user_thunk == thunk(5)
    assert mapped.mark_completed() and not mapped.mark_completed()
    with pytest.raises(NonCooperativeDomain):
        delegate_inter(world(coop=False), "es1", "d2", "es3", dest, DelegationMode.DIRECT, lambda: thunk(5))
    with pytest.raises(ValueError):
        DelegationRecord("es1", "es3", thunk(1), dest, DelegationMode.DIRECT)


def test_ledger_counts():
    w = world()
    ledger = Ledger()
    assert ledger.query("d1", "d2") == []
    for i in range(3):
        rec = delegate_inter(w, "es1", "d2", "es3", thunk(i, "es3"), DelegationMode.MAPPED, lambda i=i: thunk(10 + i))
        ledger.append(rec)
    list(ledger)[0].mark_completed()
    list(ledger)[1].mark_completed()
    recs = ledger.query("d2", "d1")
    assert len(recs) == 3 and sum(r.completed for r in recs) == 2
    assert len(ledger.to_jsonl().splitlines()) == 3


def test_queue_wait():
    assert queue_wait_us(0, None, [], [5]) == 0
    assert queue_wait_us(0, 1, [100], []) == 100
    assert queue_wait_us(0, 2, [100], []) == 0
    assert queue_wait_us(10, 1, [100], [50, 50]) == 190
