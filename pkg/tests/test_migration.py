from __future__ import annotations

import itertools

import pytest
from hypothesis import given, strategies as st

from pecsim.migration import (
    ImnRecord,
    InstanceRecord,
    MigrationLevel,
    UnknownImn,
    choose_level,
    decide_migration,
    payload_bytes,
    remaining_work_us,
)
from pecsim.names import make_migration_name, make_thunk_name, parse_name
from pecsim.orchestration import ServiceDescriptor
from pecsim.topology import NodeState, Role

S = parse_name("/pec/svc/detect")
DESC = ServiceDescriptor(S, 1000, 0, 10_000, 2_000_000, 100_000_000, 1_000_000_000)

TABLE = {
    # (complete, service, env) -> level; written out by hand
    (True, True, True): MigrationLevel.RESULT,
    (True, True, False): MigrationLevel.RESULT,
    (True, False, True): MigrationLevel.RESULT,
    (True, False, False): MigrationLevel.RESULT,
    (False, True, True): MigrationLevel.INSTANCE,
    (False, True, False): MigrationLevel.INSTANCE,
    (False, False, True): MigrationLevel.CONTAINER,
    (False, False, False): MigrationLevel.FULL_VM,
}


def test_choose_level_table():
    for combo, level in TABLE.items():
        assert choose_level(*combo) is level


def setup(progress_at: int):
    imn = make_migration_name("es1", 0)
    inst = InstanceRecord("u", S, make_thunk_name("es1", S, 0), 0, 1_000_000)
    return {imn.instance_id: ImnRecord(imn, inst, "es1", 0)}, imn


def dest(service: bool, env: bool):
    n = NodeState("es2", Role.EDGE_SERVER, compute_capacity=1)
    if service:
        n.hosted_services.add(S)
    if env:
        n.env.add(DESC.requires_env)
    return n


def test_decide_examples():
    imns, imn = setup(0)
    d = decide_migration(imns, dest(False, False), imn, DESC, 1_000_000)
    assert d.level is MigrationLevel.RESULT and d.payload_bytes == 10_000
    d = decide_migration(imns, dest(True, False), imn, DESC, 500_000)
    assert d.level is MigrationLevel.INSTANCE and d.progress == 0.5
    d = decide_migration(imns, dest(False, False), imn, DESC, 500_000)
    assert d.level is MigrationLevel.FULL_VM and d.payload_bytes == 1_002_000_000
    with pytest.raises(UnknownImn):
        decide_migration({}, dest(False, False), imn, DESC, 0)


def test_all_combinations_bytes():
    expected = {
        MigrationLevel.RESULT: 10_000,
        MigrationLevel.INSTANCE: 2_000_000,
        MigrationLevel.CONTAINER: 102_000_000,
        MigrationLevel.FULL_VM: 1_002_000_000,
    }
    for complete, service, env in itertools.product([True, False], repeat=3):
        imns, imn = setup(0)
        now = 1_000_000 if complete else 400_000
        d = decide_migration(imns, dest(service, env), imn, DESC, now)
        assert d.level is TABLE[(complete, service, env)]
        assert d.payload_bytes == expected[d.level]


sizes = st.lists(st.integers(min_value=1, max_value=10**10), min_size=4, max_size=4).map(sorted)


@given(sizes)
def test_payload_monotone(s):
    desc = ServiceDescriptor(S, 1, 0, *s)
    got = [payload_bytes(level, desc) for level in MigrationLevel]
    assert got == sorted(got)


def test_remaining_work():
    assert remaining_work_us(0.5, 1000) == 500
    assert remaining_work_us(1 / 3, 1000) == 667
    assert remaining_work_us(1.0, 1000) == 0
