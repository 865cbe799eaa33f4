"""Run metrics as a pure fold over trace records, plus trace/CSV I/O."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .engine import TRACE_FORMAT, TRACE_VERSION

METRICS_FORMAT = "pec-sim-metrics/1"

MISS_KINDS = frozenset({"aggregate", "forward", "nack_noroute", "loop_drop", "hop_drop"})
CONTROL_PREFIXES = ("/pec/join/", "/pec/discover/")
LEVELS = ("result", "instance", "container", "full_vm")
RECORD_KEYS = ("time", "node", "kind", "name", "faces", "bytes", "annotation")


class MalformedTrace(ValueError):
    pass


def _is_control(name: str | None) -> bool:
    if not name:
        return False
    if name.startswith(CONTROL_PREFIXES):
        return True
    parts = name.split("/")
    # /pec/ctl/<node>/addface/...
    return len(parts) > 4 and parts[1] == "pec" and parts[2] == "ctl" and parts[4] == "addface"


@dataclass
class Metrics:
    requests: int = 0
    results_delivered: int = 0
    requests_failed: int = 0
    executions_started: int = 0
    reuse_joined: int = 0
    reuse_cached: int = 0
    latencies_us: list[int] = field(default_factory=list)
    cs_hits: int = 0
    cs_misses: int = 0
    interests_suppressed: int = 0
    fetches_satisfied: int = 0
    discoveries: int = 0
    migration_count: dict[str, int] = field(default_factory=dict)
    migration_bytes: dict[str, int] = field(default_factory=dict)
    interruptions_us: dict[str, list[int]] = field(default_factory=dict)
    control_plane_bytes: int = 0
    deployment_bytes: int = 0
    delegations: dict[str, int] = field(default_factory=dict)
    delegations_completed: int = 0
    results_relayed: int = 0
    packets_sent: int = 0
    packets_received: int = 0
    packets_dropped: int = 0
    in_flight_at_end: int = 0
    records: int = 0

    @property
    def reuse_savings(self) -> int:
        return self.requests - self.executions_started

    @property
    def cs_hit_ratio(self) -> float:
        total = self.cs_hits + self.cs_misses
        return self.cs_hits / total if total else 0.0

    def add(self, record: dict) -> None:
        self.records += 1
        kind = record["kind"]
        ann = record["annotation"]
        if kind in MISS_KINDS:
            self.cs_misses += 1
            if kind == "aggregate":
                self.interests_suppressed += 1
        elif kind == "cs_hit":
            self.cs_hits += 1
        elif kind == "tx":
            self.packets_sent += 1
            if _is_control(record["name"]):
                self.control_plane_bytes += record["bytes"]
        elif kind == "rx":
            self.packets_received += 1
        elif kind == "link_drop":
            self.packets_dropped += 1
        elif kind == "request_issued":
            self.requests += 1
        elif kind == "result_delivered":
            self.results_delivered += 1
            self.latencies_us.append(ann["latency_us"])
        elif kind == "request_failed":
            self.requests_failed += 1
        elif kind == "exec_start":
            self.executions_started += 1
        elif kind == "reuse_join":
            self.reuse_joined += 1
        elif kind == "reuse_cached":
            self.reuse_cached += 1
        elif kind == "data_delivered":
            self.fetches_satisfied += 1
        elif kind == "discovery_done":
            self.discoveries += 1
        elif kind == "migration_begin":
            level = ann["level"]
            self.migration_count[level] = self.migration_count.get(level, 0) + 1
            self.migration_bytes[level] = self.migration_bytes.get(level, 0) + record["bytes"]
        elif kind == "reconnect_done":
            self.interruptions_us.setdefault(ann["level"], []).append(ann["interruption_us"])
        elif kind == "deploy_end":
            self.deployment_bytes += record["bytes"]
        elif kind == "delegate":
            pair = f"{ann['designated_domain']}->{ann['destination_domain']}"
            self.delegations[pair] = self.delegations.get(pair, 0) + 1
        elif kind == "delegation_completed":
            self.delegations_completed += 1
        elif kind == "result_relayed":
            self.results_relayed += 1
        elif kind == "end":
            self.in_flight_at_end = ann["in_flight"]

    def rows(self) -> list[tuple[str, str]]:
        lat = sorted(self.latencies_us)

        def ms(us: float) -> str:
            return f"{us / 1000:.3f}"

        rows = [
            ("format", METRICS_FORMAT),
            ("requests", str(self.requests)),
            ("results_delivered", str(self.results_delivered)),
            ("requests_failed", str(self.requests_failed)),
            ("executions_started", str(self.executions_started)),
            ("reuse_savings", str(self.reuse_savings)),
            ("reuse_joined", str(self.reuse_joined)),
            ("reuse_cached", str(self.reuse_cached)),
            ("latency_mean_ms", ms(sum(lat) / len(lat)) if lat else ""),
            ("latency_p50_ms", ms(lat[(len(lat) - 1) // 2]) if lat else ""),
            ("latency_max_ms", ms(lat[-1]) if lat else ""),
            ("cs_hits", str(self.cs_hits)),
            ("cs_misses", str(self.cs_misses)),
            ("cs_hit_ratio", f"{self.cs_hit_ratio:.6f}"),
            ("interests_suppressed", str(self.interests_suppressed)),
            ("fetches_satisfied", str(self.fetches_satisfied)),
            ("discoveries", str(self.discoveries)),
        ]
        for level in LEVELS:
            ints = self.interruptions_us.get(level, [])
            rows += [
                (f"migration.{level}.count", str(self.migration_count.get(level, 0))),
                (f"migration.{level}.bytes", str(self.migration_bytes.get(level, 0))),
                (f"migration.{level}.interruption_mean_ms", ms(sum(ints) / len(ints)) if ints else ""),
            ]
        rows += [
            ("control_plane_bytes", str(self.control_plane_bytes)),
            ("deployment_bytes", str(self.deployment_bytes)),
        ]
        rows += [(f"delegations.{pair}", str(n)) for pair, n in sorted(self.delegations.items())]
        rows += [
            ("delegations_completed", str(self.delegations_completed)),
            ("results_relayed", str(self.results_relayed)),
            ("packets_sent", str(self.packets_sent)),
            ("packets_received", str(self.packets_received)),
            ("packets_dropped", str(self.packets_dropped)),
            ("in_flight_at_end", str(self.in_flight_at_end)),
            ("trace_records", str(self.records)),
        ]
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        writer.writerows(self.rows())
        return buf.getvalue()


def metrics_fold(records: Iterable[dict]) -> Metrics:
    metrics = Metrics()
    for record in records:
        metrics.add(record)
    return metrics


def parse_trace(lines: Iterable[str]) -> tuple[dict, list[dict]]:
    """Parse JSON-lines trace text into (header, records)."""
    header = None
    records = []
    last_time = None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedTrace(f"line {lineno}: {exc}") from None
        if header is None:
            if not isinstance(obj, dict) or obj.get("format") != TRACE_FORMAT:
                raise MalformedTrace("line 1: missing trace header")
            if obj.get("version") != TRACE_VERSION:
                raise MalformedTrace(f"line 1: unsupported trace version {obj.get('version')!r}")
            header = obj
            continue
        if not isinstance(obj, dict) or tuple(obj) != RECORD_KEYS:
            raise MalformedTrace(f"line {lineno}: record fields must be {RECORD_KEYS}")
        if last_time is not None and obj["time"] < last_time:
            raise MalformedTrace(f"line {lineno}: time goes backwards")
        last_time = obj["time"]
        records.append(obj)
    if header is None:
        raise MalformedTrace("empty trace")
    return header, records


def read_trace(path: str | Path) -> tuple[dict, list[dict]]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh)
