"""Hierarchical names and the special name forms used by the PEC protocols.

Canonical text form is ``/`` followed by the components joined with ``/``.
The root name ``/`` (zero components) is accepted only as a routing prefix.

Reserved layouts::

    /pec/svc/<service...>                          service names
    <service...>/=data=/<data...>/<nonce>          invocation names
    /pec/thunk/<server>/<service...>/<state-id>    thunk names
    /pec/imn/<source-server>/<instance-id>         instance migration names
    /pec/discover/<domain>                         discovery
    /pec/join/<domain>/<device>                    onboarding
    /pec/ctl/<node>/<op>/...                       node-directed control
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

__all__ = [
    "Name",
    "NameParseError",
    "EmptyInput",
    "MissingLeadingSlash",
    "EmptyComponent",
    "InvocationName",
    "ThunkName",
    "MigrationName",
    "parse_name",
    "is_prefix_of",
    "make_invocation_name",
    "make_thunk_name",
    "make_migration_name",
    "SVC",
    "DISCOVER",
    "THUNK",
    "IMN",
    "JOIN",
    "CTL",
    "DATA_MARKER",
]

DATA_MARKER = "=data="
NONCE_LIMIT = 1 << 64


class NameParseError(ValueError):
    pass


class EmptyInput(NameParseError):
    pass


class MissingLeadingSlash(NameParseError):
    pass


class EmptyComponent(NameParseError):
    pass


def _check_component(value: str) -> str:
    if not isinstance(value, str):
        raise TypeError(f"name component must be str, got {type(value).__name__}")
    if not value:
        raise EmptyComponent("empty name component")
    if "/" in value:
        raise ValueError(f"name component contains '/': {value!r}")
    return value


@dataclass(frozen=True, order=True)
class Name:
    components: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        for c in comps:
            _check_component(c)
        object.__setattr__(self, "components", comps)

    @classmethod
    def of(cls, *components: str) -> Name:
        return cls(tuple(components))

    @classmethod
    def parse(cls, text: str) -> Name:
        return parse_name(text)

    def __str__(self) -> str:
        return "/" + "/".join(self.components)

    def __repr__(self) -> str:
        return f"Name({str(self)!r})"

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return Name(self.components[index])
        return self.components[index]

    def __truediv__(self, other: str | Name | Iterable[str]) -> Name:
        if isinstance(other, Name):
            return Name(self.components + other.components)
        if isinstance(other, str):
            return Name(self.components + (other,))
        return Name(self.components + tuple(other))

    @property
    def is_root(self) -> bool:
        return not self.components

    def is_prefix_of(self, other: Name) -> bool:
        return is_prefix_of(self, other)

    def prefixes(self) -> list[Name]:
        """All prefixes from the full name down to the root, longest first."""
        return [Name(self.components[:n]) for n in range(len(self.components), -1, -1)]


def parse_name(text: str) -> Name:
    if not text:
        raise EmptyInput("empty name")
    if not text.startswith("/"):
        raise MissingLeadingSlash(f"name must begin with '/': {text!r}")
    if text == "/":
        return Name()
    parts = text[1:].split("/")
    if any(p == "" for p in parts):
        raise EmptyComponent(f"empty component in {text!r}")
    return Name(tuple(parts))


def is_prefix_of(prefix: Name, name: Name) -> bool:
    n = len(prefix.components)
    return n <= len(name.components) and name.components[:n] == prefix.components


SVC = Name.of("pec", "svc")
DISCOVER = Name.of("pec", "discover")
THUNK = Name.of("pec", "thunk")
IMN = Name.of("pec", "imn")
JOIN = Name.of("pec", "join")
CTL = Name.of("pec", "ctl")


@dataclass(frozen=True)
class InvocationName:
    service: Name
    data: Name
    nonce: int

    def __post_init__(self) -> None:
        if self.service.is_root or self.data.is_root:
            raise ValueError("service and data names must be non-empty")
        for part in (self.service, self.data):
            if DATA_MARKER in part.components:
                raise ValueError(f"{DATA_MARKER} is reserved: {part}")
        if not 0 <= self.nonce < NONCE_LIMIT:
            raise ValueError(f"nonce out of 64-bit range: {self.nonce}")

    @property
    def reuse_key(self) -> tuple[Name, Name]:
        return (self.service, self.data)

    def to_name(self) -> Name:
        return Name(
            self.service.components
            + (DATA_MARKER,)
            + self.data.components
            + (str(self.nonce),)
        )

    def __str__(self) -> str:
        return str(self.to_name())

    @classmethod
    def from_name(cls, name: Name) -> InvocationName:
        comps = name.components
        try:
            i = comps.index(DATA_MARKER)
        except ValueError:
            raise ValueError(f"not an invocation name: {name}") from None
        if i == 0 or len(comps) < i + 3:
            raise ValueError(f"not an invocation name: {name}")
        try:
            nonce = int(comps[-1])
        except ValueError:
            raise ValueError(f"invocation nonce is not an integer: {name}") from None
        return cls(Name(comps[:i]), Name(comps[i + 1 : -1]), nonce)

    @classmethod
    def parse(cls, text: str) -> InvocationName:
        return cls.from_name(parse_name(text))


@dataclass(frozen=True)
class ThunkName:
    server_id: str
    service: Name
    state_id: str

    def __post_init__(self) -> None:
        _check_component(self.server_id)
        _check_component(self.state_id)
        if self.service.is_root:
            raise ValueError("thunk service must be non-empty")

    def to_name(self) -> Name:
        return THUNK / self.server_id / self.service / self.state_id

    def __str__(self) -> str:
        return str(self.to_name())

    @classmethod
    def from_name(cls, name: Name) -> ThunkName:
        comps = name.components
        if not is_prefix_of(THUNK, name) or len(comps) < 5:
            raise ValueError(f"not a thunk name: {name}")
        return cls(comps[2], Name(comps[3:-1]), comps[-1])

    @classmethod
    def parse(cls, text: str) -> ThunkName:
        return cls.from_name(parse_name(text))


@dataclass(frozen=True)
class MigrationName:
    source_server_id: str
    instance_id: str

    def __post_init__(self) -> None:
        _check_component(self.source_server_id)
        _check_component(self.instance_id)

    def to_name(self) -> Name:
        return IMN / self.source_server_id / self.instance_id

    def __str__(self) -> str:
        return str(self.to_name())

    @classmethod
    def from_name(cls, name: Name) -> MigrationName:
        if not is_prefix_of(IMN, name) or len(name) != 4:
            raise ValueError(f"not an instance migration name: {name}")
        return cls(name[2], name[3])

    @classmethod
    def parse(cls, text: str) -> MigrationName:
        return cls.from_name(parse_name(text))


def make_invocation_name(service: Name, data: Name, nonce: int) -> InvocationName:
    return InvocationName(service, data, nonce)


def make_thunk_name(server_id: str, service: Name, pending_counter: int) -> ThunkName:
    """Thunk for the ``pending_counter``-th execution accepted by ``server_id``."""
    if pending_counter < 0:
        raise ValueError("pending counter must be non-negative")
    return ThunkName(server_id, service, f"s{pending_counter}")


def make_migration_name(server_id: str, instance_counter: int) -> MigrationName:
    return MigrationName(server_id, f"i{instance_counter}")
