"""Migration level selection and the instance bookkeeping behind IMN rendezvous.

The level table, checked in order:

1. execution already finished            -> result migration
2. destination already runs the service  -> instance migration
3. destination has the runtime env only  -> container + instance state
4. otherwise                             -> full VM image + instance state
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .names import MigrationName, Name, ThunkName
from .orchestration import ServiceDescriptor
from .topology import NodeState


class UnknownImn(KeyError):
    pass


class MigrationLevel(Enum):
    RESULT = "result"
    INSTANCE = "instance"
    CONTAINER = "container"
    FULL_VM = "full_vm"


LEVELS = (MigrationLevel.RESULT, MigrationLevel.INSTANCE, MigrationLevel.CONTAINER, MigrationLevel.FULL_VM)


@dataclass
class InstanceRecord:
    user: str
    service: Name
    thunk: ThunkName
    started_at: Optional[int]
    exec_us: int
    done: bool = False

    def progress(self, now: int) -> float:
        if self.done:
            return 1.0
        if self.started_at is None:
            return 0.0
        return min(1.0, (now - self.started_at) / self.exec_us)

    def remaining_us(self, now: int) -> int:
        return remaining_work_us(self.progress(now), self.exec_us)


@dataclass
class ImnRecord:
    imn: MigrationName
    instance: InstanceRecord
    source_server: str
    issued_at: int


@dataclass(frozen=True)
class MigrationDecision:
    level: MigrationLevel
    payload_bytes: int
    progress: float = 0.0


def choose_level(complete: bool, has_service: bool, has_env: bool) -> MigrationLevel:
    if complete:
        return MigrationLevel.RESULT
    if has_service:
        return MigrationLevel.INSTANCE
    if has_env:
        return MigrationLevel.CONTAINER
    return MigrationLevel.FULL_VM


def payload_bytes(level: MigrationLevel, desc: ServiceDescriptor) -> int:
    if level is MigrationLevel.RESULT:
        return desc.result_bytes
    if level is MigrationLevel.INSTANCE:
        return desc.instance_state_bytes
    if level is MigrationLevel.CONTAINER:
        return desc.container_bytes + desc.instance_state_bytes
    return desc.vm_image_bytes + desc.instance_state_bytes


def decide_migration(
    imns: dict[str, ImnRecord],
    destination: NodeState,
    imn: MigrationName,
    desc: ServiceDescriptor,
    now: int,
) -> MigrationDecision:
    """Pick the migration level for the instance bound to ``imn`` at its source."""
    record = imns.get(imn.instance_id)
    if record is None or record.imn != imn:
        raise UnknownImn(str(imn))
    progress = record.instance.progress(now)
    level = choose_level(
        progress >= 1.0,
        destination.hosts(desc.id),
        destination.has_env(desc.requires_env),
    )
    return MigrationDecision(level, payload_bytes(level, desc), progress)


def remaining_work_us(progress: float, exec_us: int) -> int:
    return max(0, math.ceil((1.0 - progress) * exec_us - 1e-9))
