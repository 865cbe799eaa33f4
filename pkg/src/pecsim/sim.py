"""Scenario runner: wires the event engine, the NDN data plane and the node applications.

Every node runs the forwarding pipeline. Interests that reach a node's
application face are dispatched by name to the local applications:

* producers answer plain data names from the configured object sizes;
* servers (edge servers, clouds, onboarded devices) run invocations, answer
  thunk polls, serve IMNs and handle ``/pec/ctl/<server>/...`` operations;
* orchestrators answer join and discovery Interests;
* access points acknowledge face set-up during onboarding;
* users express Interests on behalf of the request schedule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import ActionSpec, MobilitySpec, Policy, RequestSpec, ScenarioConfig
from .engine import Engine, Event, EventKind, RuntimeInvariantViolation
from .forwarding import (
    APP_FACE,
    Data,
    Interest,
    Nack,
    expire_pit,
    on_data,
    on_interest,
    on_nack,
)
from .invocation import (
    CachedResult,
    DelegationMode,
    ExecuteHere,
    JoinRunning,
    Ledger,
    NotReady,
    RelayIntraDomain,
    Result,
    ReuseTable,
    ThunkRecord,
    ThunkState,
    UnknownThunk,
    check_reuse,
    delegate_inter,
    poll_thunk,
    queue_wait_us,
    select_delegate,
    triage,
)
from .metrics import Metrics
from .migration import (
    ImnRecord,
    InstanceRecord,
    MigrationLevel,
    UnknownImn,
    decide_migration,
    remaining_work_us,
)
from .names import (
    CTL,
    DISCOVER,
    IMN,
    JOIN,
    SVC,
    THUNK,
    InvocationName,
    MigrationName,
    Name,
    ThunkName,
    make_migration_name,
    make_thunk_name,
    parse_name,
)
from .orchestration import (
    Delegate,
    OrchestrationError,
    ServiceDescriptor,
    catalog,
    deployment_orders,
    discovery_miss_policy,
    encode_catalog,
    orchestrated_deploy,
    popularity_from_schedule,
)
from .topology import (
    Role,
    TopologyError,
    World,
    build_topology,
    compute_routes,
    handover,
    offboard_device,
    onboard_device,
)

log = logging.getLogger(__name__)


@dataclass(eq=False)
class _Pending:
    name: Name
    on_data: Callable[[Data], None]
    on_nack: Callable[[str], None]
    retries: int
    lifetime_us: int
    size_bytes: int
    done: bool = False
    timer: Optional[Event] = None


class Simulation:
    """One scenario run. ``run`` drives it to the end and returns the trace."""

    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None) -> None:
        self.config = config
        self.policy: Policy = config.policy
        self.seed = config.seed if seed is None else seed
        self.world: World = build_topology(config)
        self.engine = Engine(self.world, self.seed, config.end_us)
        self.engine.receive = self._receive
        self.metrics = Metrics()
        self.engine.tracer.listeners.append(self.metrics.add)
        self.ledger = Ledger()
        self._pending: dict[str, dict[Name, list[_Pending]]] = {}
        self._pit_timers: dict[str, set[int]] = {}
        self.servers: dict[str, ServerApp] = {}
        self.users: dict[str, UserApp] = {}
        self.controllers: dict[str, ControllerApp] = {}
        self.traffic_offset_us = 0
        self.started = False
        self.finished = False
        for node_id, node in sorted(self.world.nodes.items()):
            if node.role in (Role.EDGE_SERVER, Role.CLOUD) or (
                node.role is Role.USER and (node.compute_capacity or node.hosted_services)
            ):
                self.servers[node_id] = ServerApp(self, node_id)
            if node.role is Role.USER:
                self.users[node_id] = UserApp(self, node_id)
            if node.role is Role.ORCHESTRATOR:
                self.controllers[node_id] = ControllerApp(self, node_id)

    # ------------------------------------------------------------------ basics

    @property
    def now(self) -> int:
        return self.engine.now

    def trace(self, node: str, kind: str, name=None, faces=(), nbytes: int = 0, annotation=None) -> dict:
        return self.engine.trace(node, kind, name, faces, nbytes, annotation)

    def fail(self, message: str, record: Optional[dict] = None) -> None:
        raise RuntimeInvariantViolation(message, record)

    def _ftrace(self, node_id: str):
        def trace(kind, name, faces, nbytes, annotation):
            self.engine.trace(node_id, kind, name, faces, nbytes, annotation)
        return trace

    def recompute_routes(self, reason: str) -> None:
        compute_routes(self.world)
        log.debug("routes recomputed at %d (%s)", self.now, reason)

    # -------------------------------------------------------------- data plane

    def _receive(self, node_id: str, face: int, kind: str, packet) -> None:
        node = self.world.nodes[node_id]
        tr = self._ftrace(node_id)
        if kind == "interest":
            actions = on_interest(node, face, packet, self.now, tr)
            entry = node.pit.get(packet.name)
            if entry is not None:
                self._arm_pit_timer(node_id, entry.expiry)
        elif kind == "data":
            actions = on_data(node, face, packet, self.now, tr)
        else:
            actions = on_nack(node, face, packet, self.now, tr)
        self._apply(node_id, actions)

    def _arm_pit_timer(self, node_id: str, at: int) -> None:
        armed = self._pit_timers.setdefault(node_id, set())
        if at not in armed:
            armed.add(at)
            self.engine.schedule_at(at, EventKind.TIMER_EXPIRY, self._expire_pit, node_id, at)

    def _expire_pit(self, node_id: str, at: int) -> None:
        self._pit_timers[node_id].discard(at)
        expire_pit(self.world.nodes[node_id], self.now, self._ftrace(node_id))

    def _apply(self, node_id: str, actions) -> None:
        for action in actions:
            if action.face == APP_FACE:
                self.engine.schedule(0, EventKind.PACKET_ARRIVAL, self._to_app, node_id, action.kind, action.packet)
            else:
                self.engine.transmit(node_id, action.face, action.kind, action.packet)

    def _to_app(self, node_id: str, kind: str, packet) -> None:
        if kind == "interest":
            self._dispatch(node_id, packet)
            return
        waiting = self._pending.get(node_id, {}).pop(packet.name, [])
        if not waiting:
            self.trace(node_id, "app_unclaimed", packet.name, [APP_FACE], packet.size_bytes, {"pkt": kind})
            return
        for p in waiting:
            p.done = True
            if p.timer is not None:
                p.timer.cancelled = True
            if kind == "data":
                p.on_data(packet)
            else:
                p.on_nack(packet.reason)

    def _dispatch(self, node_id: str, interest: Interest) -> None:
        name = interest.name
        node = self.world.nodes[node_id]
        server = self.servers.get(node_id)
        if THUNK.is_prefix_of(name) or IMN.is_prefix_of(name) or SVC.is_prefix_of(name):
            if server is not None and node.is_server:
                server.on_interest(interest)
                return
        elif JOIN.is_prefix_of(name) or DISCOVER.is_prefix_of(name):
            if node_id in self.controllers:
                self.controllers[node_id].on_interest(interest)
                return
        elif CTL.is_prefix_of(name):
            op = name[3] if len(name) > 3 else ""
            if op == "addface" and node.role is Role.ACCESS_POINT:
                self._ap_addface(node_id, interest)
                return
            if server is not None and node.is_server:
                server.on_interest(interest)
                return
        else:
            self._produce_object(node_id, interest)
            return
        self.nack(node_id, name, "NoApp")

    # ------------------------------------------------------- app-side helpers

    def express(
        self,
        node_id: str,
        name: Name,
        on_data_cb: Callable[[Data], None],
        on_nack_cb: Callable[[str], None],
        retries: Optional[int] = None,
        lifetime_us: Optional[int] = None,
        size_bytes: Optional[int] = None,
    ) -> None:
        pending = _Pending(
            name,
            on_data_cb,
            on_nack_cb,
            self.policy.consumer_retries if retries is None else retries,
            self.policy.pit_lifetime_us if lifetime_us is None else lifetime_us,
            self.policy.interest_bytes if size_bytes is None else size_bytes,
        )
        self._pending.setdefault(node_id, {}).setdefault(name, []).append(pending)
        self._send(node_id, pending)

    def _send(self, node_id: str, pending: _Pending) -> None:
        interest = Interest(
            pending.name,
            self.engine.nonce(node_id),
            hop_limit=self.policy.hop_limit,
            size_bytes=pending.size_bytes,
            lifetime_us=pending.lifetime_us,
        )
        self._receive(node_id, APP_FACE, "interest", interest)
        # armed after the local PIT timer so a retransmission finds the entry gone
        pending.timer = self.engine.schedule(
            pending.lifetime_us, EventKind.TIMER_EXPIRY, self._consumer_timeout, node_id, pending
        )

    def _consumer_timeout(self, node_id: str, pending: _Pending) -> None:
        if pending.done:
            return
        if pending.retries > 0:
            pending.retries -= 1
            self.trace(node_id, "retransmit", pending.name, [APP_FACE], pending.size_bytes, {})
            self._send(node_id, pending)
            return
        pending.done = True
        waiting = self._pending.get(node_id, {}).get(pending.name, [])
        if pending in waiting:
            waiting.remove(pending)
            if not waiting:
                del self._pending[node_id][pending.name]
        self.trace(node_id, "timeout", pending.name, [APP_FACE], 0, {})
        pending.on_nack("Timeout")

    def produce(self, node_id: str, data: Data) -> None:
        actions = on_data(self.world.nodes[node_id], APP_FACE, data, self.now, self._ftrace(node_id))
        self._apply(node_id, actions)

    def nack(self, node_id: str, name: Name, reason: str) -> None:
        node = self.world.nodes[node_id]
        actions = on_nack(node, APP_FACE, Nack(name, 0, reason, self.policy.interest_bytes), self.now,
                          self._ftrace(node_id))
        self._apply(node_id, actions)

    def control_data(self, node_id: str, name: Name, content: dict, size: Optional[int] = None,
                     freshness_ms: Optional[float] = 0) -> None:
        size = self.policy.control_bytes if size is None else size
        self.produce(node_id, Data(name, size, freshness_ms, node_id, content))

    def _produce_object(self, node_id: str, interest: Interest) -> None:
        size = self.world.data_sizes.get(interest.name, self.policy.default_object_bytes)
        self.trace(node_id, "produce", interest.name, [APP_FACE], size, {})
        self.produce(node_id, Data(interest.name, size, None, node_id))

    def _ap_addface(self, node_id: str, interest: Interest) -> None:
        device = interest.name[4] if len(interest.name) > 4 else ""
        self.trace(node_id, "addface", interest.name, [APP_FACE], 0, {"device": device})
        self.control_data(node_id, interest.name, {"status": "ok", "device": device})

    # -------------------------------------------------------------- schedule

    def start(self) -> None:
        if self.started:
            return
        self.started = True
        if self.policy.deployment == "orchestrated":
            self._orchestrated_deployment()
        else:
            self._schedule_scenario(0)

    def _orchestrated_deployment(self) -> None:
        world = self.world

        def domain_of_user(user: str) -> Optional[str]:
            ap = world.attached_ap(user)
            return world.nodes[ap].domain if ap else world.nodes[user].domain

        stats = popularity_from_schedule(self.config.requests, domain_of_user)
        plan = orchestrated_deploy(stats, self.policy.replicas, world)
        orders = deployment_orders(plan, world)
        self.trace("-", "deploy_plan", None, [], 0, {
            "placements": {str(s): list(v) for s, v in sorted(plan.placements.items())},
            "orders": len(orders),
        })
        if not orders:
            self._schedule_scenario(0)
            return
        remaining = {"n": len(orders)}

        def one_done() -> None:
            remaining["n"] -= 1
            if remaining["n"] == 0:
                self.traffic_offset_us = self.now
                self._schedule_scenario(self.now)

        for order in orders:
            self.servers[order.target].fetch_image(order.service, order.source, order.kind, one_done)

    def _schedule_scenario(self, offset: int) -> None:
        for req in self.config.requests:
            self.engine.schedule_at(offset + req.time_us, EventKind.SCENARIO_ACTION, self._issue, req)
        for step in self.config.mobility:
            self.engine.schedule_at(offset + step.time_us, EventKind.HANDOVER, self._handover, step)
        for action in self.config.actions:
            kind = EventKind.ONBOARD if action.kind == "onboard" else EventKind.OFFBOARD
            self.engine.schedule_at(offset + action.time_us, kind, self._action, action)

    def _issue(self, req: RequestSpec) -> None:
        self.users[req.user].issue(req)

    def _handover(self, step: MobilitySpec) -> None:
        try:
            link = handover(self.world, step.user, step.from_ap, step.to_ap, step.latency_us, step.bandwidth_bps)
        except (TopologyError, ValueError) as exc:
            record = self.trace(step.user, "handover_error", None, [], 0, {"error": str(exc)})
            self.fail(f"handover of {step.user} failed: {exc}", record)
        self.recompute_routes("handover")
        self.trace(step.user, "handover", None, [link.face_a if link.a == step.user else link.face_b], 0,
                   {"from": step.from_ap, "to": step.to_ap, "link": link.id})
        self.users[step.user].on_handover()

    def _action(self, action: ActionSpec) -> None:
        if action.kind == "onboard":
            self.users[action.device].join(action.domain)
            return
        device = action.device
        try:
            offboard_device(self.world, device)
        except TopologyError as exc:
            self.trace(device, "offboard_failed", None, [], 0, {"reason": exc.__class__.__name__})
            return
        if device in self.servers:
            self.servers[device].fail_all("Offboarded")
        self.recompute_routes("offboard")
        self.trace(device, "offboard", None, [], 0, {})

    # ------------------------------------------------------------------ run

    def run_until(self, until_us: int) -> None:
        self.start()
        self.engine.run(until_us)

    def run(self, until_us: Optional[int] = None) -> "Simulation":
        self.start()
        self.engine.run(until_us)
        self.finish(drained=not self.engine.queue)
        return self

    def finish(self, drained: bool) -> None:
        if self.finished:
            return
        self.finished = True
        if drained:
            for node_id, node in sorted(self.world.nodes.items()):
                if node.pit:
                    record = self.trace(node_id, "pit_leak", sorted(node.pit)[0], [], 0, {"entries": len(node.pit)})
                    self.fail(f"PIT of {node_id} not empty after the queue drained", record)
        self.trace("-", "end", None, [], 0, {"in_flight": self.engine.in_flight, "drained": drained})

    def trace_lines(self) -> list[str]:
        return self.engine.tracer.lines(self.seed)

    @property
    def records(self) -> list[dict]:
        return self.engine.tracer.records


# ---------------------------------------------------------------------------
# server side


@dataclass(eq=False)
class _Waiter:
    name: Name
    force_thunk: bool = False
    extra: dict = field(default_factory=dict)


@dataclass(eq=False)
class Execution:
    key: tuple[Name, Name]
    desc: ServiceDescriptor
    record: ThunkRecord
    imn: MigrationName
    instance: InstanceRecord
    requester: str
    exec_us: Optional[int] = None
    data_ready: bool = False
    service_ready: bool = True
    has_slot: bool = False
    state: str = "pending"  # pending, running, done, migrated, failed
    sharers: int = 1
    resumed: bool = False
    waiters: list[_Waiter] = field(default_factory=list)
    completion: Optional[Event] = None

    @property
    def ready(self) -> bool:
        return self.data_ready and self.service_ready and self.exec_us is not None

    @property
    def thunk_name(self) -> Name:
        return self.record.thunk.to_name()


class ServerApp:
    def __init__(self, sim: Simulation, node_id: str) -> None:
        self.sim = sim
        self.id = node_id
        self.node = sim.world.nodes[node_id]
        self.thunks: dict[Name, ThunkRecord] = {}
        self.executions: dict[Name, Execution] = {}
        self.by_instance: dict[str, Execution] = {}
        self.imns: dict[str, ImnRecord] = {}
        self.reuse = ReuseTable(sim.policy.reuse_freshness_us)
        self.mappings: dict[Name, object] = {}
        self.queue: list[Execution] = []
        self.deploying: dict[Name, list[Execution]] = {}
        self.deploy_eta: dict[Name, int] = {}
        self._thunk_counter = 0
        self._imn_counter = 0

    @property
    def world(self) -> World:
        return self.sim.world

    @property
    def policy(self) -> Policy:
        return self.sim.policy

    def trace(self, kind, name=None, faces=(), nbytes=0, annotation=None):
        return self.sim.trace(self.id, kind, name, faces, nbytes, annotation)

    # ------------------------------------------------------------- dispatch

    def on_interest(self, interest: Interest) -> None:
        name = interest.name
        if THUNK.is_prefix_of(name):
            self._on_poll(interest)
        elif IMN.is_prefix_of(name):
            self._on_imn(interest)
        elif CTL.is_prefix_of(name):
            op = name[3] if len(name) > 3 else ""
            handler = {
                "relay": self._on_relay,
                "delegate": self._on_delegated,
                "resume": self._on_resume,
                "image": self._on_image,
            }.get(op)
            if handler is None:
                self.sim.nack(self.id, name, "UnknownOperation")
            else:
                handler(interest)
        else:
            self._on_invoke(interest)

    # ------------------------------------------------------------ invocation

    def _parse_invocation(self, name: Name) -> Optional[InvocationName]:
        try:
            return InvocationName.from_name(name)
        except ValueError:
            return None

    def _on_invoke(self, interest: Interest) -> None:
        inv = self._parse_invocation(interest.name)
        if inv is None or inv.service not in self.world.services:
            self.sim.nack(self.id, interest.name, "UnknownService")
            return
        self.trace("invoke_rx", interest.name, [APP_FACE], 0, {"service": str(inv.service)})
        waiter = _Waiter(interest.name)
        if self._try_reuse(inv, waiter):
            return
        if not self.node.hosts(inv.service):
            self._on_miss(interest, inv)
            return
        decision = triage(self.world, self.id, inv.service)
        if isinstance(decision, ExecuteHere):
            self.admit(inv.reuse_key, "invoke", waiter)
        elif isinstance(decision, RelayIntraDomain):
            self.trace("relay", interest.name, [], 0, {"to": decision.server})
            self._forward(decision.server, "relay", interest.name, inv)
        else:
            self._to_cloud(interest, inv)

    def _to_cloud(self, interest: Interest, inv: InvocationName) -> None:
        chosen = select_delegate(self.world, self.id, inv.service)
        if chosen is not None:
            self._delegate(interest, inv, *chosen)
            return
        clouds = self.world.clouds()
        if not clouds:
            self.sim.nack(self.id, interest.name, "NoCapacity")
            return
        cloud = min(clouds, key=lambda c: (self.world.hop_distance(self.id, c.id) or 1 << 30, c.id)).id
        self.trace("relay", interest.name, [], 0, {"to": cloud, "cloud": True})
        self._forward(cloud, "relay", interest.name, inv)

    def _try_reuse(self, inv: InvocationName, waiter: _Waiter) -> bool:
        decision = check_reuse(self.reuse, inv.reuse_key, self.sim.now)
        if isinstance(decision, CachedResult):
            record = decision.record
            self.trace("reuse_cached", waiter.name, [], 0, {"thunk": str(record.thunk)})
            self._reply_result(waiter, record, self.world.services[inv.service])
            return True
        if isinstance(decision, JoinRunning):
            exe = self.executions[decision.thunk.to_name()]
            exe.sharers += 1
            self.trace("reuse_join", waiter.name, [], 0, {"thunk": str(exe.record.thunk)})
            exe.waiters.append(waiter)
            self._answer(exe)
            return True
        return False

    def _forward(self, target: str, op: str, reply_to: Name, inv: InvocationName,
                 on_thunk: Optional[Callable[[Data], None]] = None) -> None:
        name = CTL / target / op / inv.to_name()

        def got(data: Data) -> None:
            if on_thunk is not None and data.content.get("status") == "thunk":
                on_thunk(data)
                return
            self.sim.produce(self.id, Data(reply_to, data.payload_bytes, 0, self.id, data.content))

        self.sim.express(self.id, name, got, lambda reason: self.sim.nack(self.id, reply_to, reason))

    def _refuse(self, name: Name, inv: Optional[InvocationName]) -> bool:
        if inv is None or not self.node.hosts(inv.service):
            self.sim.nack(self.id, name, "UnknownService")
            return True
        if self.node.compute_capacity == 0:
            self.sim.nack(self.id, name, "NoCapacity")
            return True
        return False

    def _on_relay(self, interest: Interest) -> None:
        inv = self._parse_invocation(Name(interest.name.components[4:]))
        if self._refuse(interest.name, inv):
            return
        waiter = _Waiter(interest.name)
        if not self._try_reuse(inv, waiter):
            self.admit(inv.reuse_key, "relayed", waiter)

    def _on_delegated(self, interest: Interest) -> None:
        inv = self._parse_invocation(Name(interest.name.components[4:]))
        if self._refuse(interest.name, inv):
            return
        waiter = _Waiter(interest.name, force_thunk=True)
        if not self._try_reuse(inv, waiter):
            self.admit(inv.reuse_key, "delegated", waiter)

    def _delegate(self, interest: Interest, inv: InvocationName, domain: str, server: str) -> None:
        mode = DelegationMode(self.policy.thunk_mode)

        def on_thunk(data: Data) -> None:
            content = data.content
            dest_thunk = ThunkName.parse(content["thunk"])
            record = delegate_inter(
                self.world, self.id, domain, server, dest_thunk, mode,
                lambda: self._mint(inv.service),
            )
            self.sim.ledger.append(record)
            if mode is DelegationMode.MAPPED:
                self.mappings[record.user_thunk.to_name()] = record
            self.trace("delegate", interest.name, [], 0, {
                "mode": mode.value,
                "designated_domain": record.designated_domain,
                "destination_domain": record.destination_domain,
                "destination": server,
                "user_thunk": str(record.user_thunk),
                "destination_thunk": str(record.destination_thunk),
            })
            reply = {
                "status": "thunk",
                "thunk": str(record.user_thunk),
                "estimate_us": content["estimate_us"],
                "imn": content.get("imn") if mode is DelegationMode.DIRECT else None,
                "server": server if mode is DelegationMode.DIRECT else self.id,
            }
            self.sim.control_data(self.id, interest.name, reply)

        self._forward(server, "delegate", interest.name, inv, on_thunk)

    def _mint(self, service: Name) -> ThunkName:
        thunk = make_thunk_name(self.id, service, self._thunk_counter)
        self._thunk_counter += 1
        return thunk

    def _on_miss(self, interest: Interest, inv: InvocationName) -> None:
        domain = self.node.domain
        if domain is None or domain not in self.world.domains or self.node.compute_capacity == 0:
            self._to_cloud(interest, inv)
            return
        try:
            decision = discovery_miss_policy(self.world, self.id, inv.service, self.sim_queue_wait)
        except OrchestrationError:
            # another server of this domain already hosts it
            holders = [s for s in self.world.servers_in_domain(domain) if s.hosts(inv.service) and s.id != self.id]
            if not holders:
                self.sim.nack(self.id, interest.name, "ServiceUnknown")
                return
            target = min(holders, key=lambda s: (s.running, s.id)).id
            self.trace("relay", interest.name, [], 0, {"to": target})
            self._forward(target, "relay", interest.name, inv)
            return
        self.trace("miss_decision", interest.name, [], 0, {
            "decision": "delegate" if isinstance(decision, Delegate) else "deploy",
        })
        if isinstance(decision, Delegate):
            self._delegate(interest, inv, decision.domain, decision.server)
            return
        order = decision.order
        exe = self.admit(inv.reuse_key, "invoke", None, service_ready=False)
        self.deploying.setdefault(inv.service, []).append(exe)
        if inv.service not in self.deploy_eta:
            to_source = self.world.transfer_time_us(self.id, order.source, self.policy.interest_bytes)
            back = self.world.transfer_time_us(order.source, self.id, order.bytes)
            self.deploy_eta[inv.service] = self.sim.now + to_source + back
            self.fetch_image(order.service, order.source, order.kind, None)
        guess = exe.exec_us or exe.instance.exec_us
        exe.record.done_at = self.deploy_eta[inv.service] + guess
        exe.record.estimate_us = max(1, exe.record.done_at - exe.record.issued_at)
        self._reply_thunk(_Waiter(interest.name), exe)

    def sim_queue_wait(self, server_id: str) -> int:
        app = self.sim.servers.get(server_id)
        return app.queue_wait() if app is not None else 0

    def queue_wait(self) -> int:
        cap = self.node.compute_capacity
        if cap == 0:
            return 1 << 62
        now = self.sim.now
        busy = [e.record.done_at for e in self.executions.values() if e.has_slot]
        queued = [e.exec_us or e.instance.exec_us for e in self.queue]
        return queue_wait_us(now, cap, busy, queued)

    # ---------------------------------------------------------- executions

    def admit(self, key: tuple[Name, Name], origin: str, waiter: Optional[_Waiter],
              exec_us: Optional[int] = None, service_ready: bool = True,
              requester: str = "") -> Execution:
        service, data = key
        desc = self.world.services[service]
        now = self.sim.now
        guess = exec_us or desc.exec_time_us(self.world.data_sizes.get(data, self.policy.default_object_bytes))
        thunk = self._mint(service)
        imn = make_migration_name(self.id, self._imn_counter)
        self._imn_counter += 1
        record = ThunkRecord(thunk, self.id, guess, now, now + guess)
        instance = InstanceRecord(requester, service, thunk, None, guess)
        exe = Execution(key, desc, record, imn, instance, requester, exec_us=exec_us,
                        data_ready=exec_us is not None, service_ready=service_ready,
                        resumed=exec_us is not None)
        if waiter is not None:
            exe.waiters.append(waiter)
        self.thunks[thunk.to_name()] = record
        self.executions[thunk.to_name()] = exe
        self.by_instance[imn.instance_id] = exe
        self.imns[imn.instance_id] = ImnRecord(imn, instance, self.id, now)
        try:
            self.reuse.start(key, record)
        except ValueError:
            pass  # a resumed instance never displaces a running local one
        self.trace("admit", thunk.to_name(), [], 0, {
            "service": str(service), "data": str(data), "origin": origin, "imn": str(imn),
        })
        if self.node.has_spare_capacity():
            self._acquire(exe)
        else:
            self.queue.append(exe)
            self.trace("queued", thunk.to_name(), [], 0, {"depth": len(self.queue)})
        if exe.data_ready:
            self._maybe_ready(exe)
        else:
            self._fetch_input(exe)
        return exe

    def _acquire(self, exe: Execution) -> None:
        self.node.running += 1
        exe.has_slot = True
        cap = self.node.compute_capacity
        if cap is not None and self.node.running > cap:
            record = self.trace("capacity_exceeded", exe.thunk_name, [], 0, {"running": self.node.running})
            self.sim.fail(f"{self.id} exceeds its capacity {cap}", record)

    def _release(self, exe: Execution) -> None:
        if exe.has_slot:
            exe.has_slot = False
            self.node.running -= 1
        if exe in self.queue:
            self.queue.remove(exe)
        self._pump()

    def _pump(self) -> None:
        while self.queue and self.node.has_spare_capacity():
            exe = self.queue.pop(0)
            self._acquire(exe)
            if exe.ready:
                self._start(exe)

    def _fetch_input(self, exe: Execution) -> None:
        data_name = exe.key[1]
        cached = self.node.cs.lookup(data_name, self.sim.now)
        if cached is not None:
            self._input_arrived(exe, cached.payload_bytes)
            return
        if any(p.is_prefix_of(data_name) for p in self.node.advertise):
            size = self.world.data_sizes.get(data_name, self.policy.default_object_bytes)
            self._input_arrived(exe, size)
            return

        def got(data: Data) -> None:
            self._input_arrived(exe, data.payload_bytes)

        def lost(reason: str) -> None:
            if exe.state != "pending":
                return
            self._abort(exe, "InputUnavailable")

        self.sim.express(self.id, data_name, got, lost)

    def _input_arrived(self, exe: Execution, nbytes: int) -> None:
        if exe.state != "pending":
            return
        exe.data_ready = True
        exe.exec_us = exe.desc.exec_time_us(nbytes)
        self.trace("input_ready", exe.key[1], [], nbytes, {"thunk": str(exe.record.thunk)})
        self._maybe_ready(exe)

    def _maybe_ready(self, exe: Execution) -> None:
        if not exe.ready or exe.state != "pending":
            return
        exe.instance.exec_us = exe.exec_us
        if exe.has_slot:
            self._start(exe)
        else:
            now = self.sim.now
            ahead = self.queue[: self.queue.index(exe)]
            busy = [e.record.done_at for e in self.executions.values() if e.has_slot]
            wait = queue_wait_us(now, self.node.compute_capacity, busy, [e.exec_us or e.instance.exec_us for e in ahead])
            exe.record.done_at = now + wait + exe.exec_us
            exe.record.estimate_us = max(1, exe.record.done_at - exe.record.issued_at)
        self._answer(exe)

    def _start(self, exe: Execution) -> None:
        now = self.sim.now
        exe.state = "running"
        exe.record.started = True
        exe.record.done_at = now + exe.exec_us
        exe.record.estimate_us = max(1, exe.record.done_at - exe.record.issued_at)
        exe.instance.started_at = now
        exe.completion = self.sim.engine.schedule(exe.exec_us, EventKind.EXEC_COMPLETE, self._complete, exe)
        self.trace("exec_resume" if exe.resumed else "exec_start", exe.thunk_name, [], 0, {
            "service": str(exe.key[0]), "data": str(exe.key[1]), "exec_us": exe.exec_us,
        })

    def _complete(self, exe: Execution) -> None:
        if exe.state != "running":
            return
        exe.state = "done"
        exe.record.state = ThunkState.DONE
        exe.record.done_at = self.sim.now
        exe.record.result_bytes = exe.desc.result_bytes
        exe.instance.done = True
        self.trace("exec_done", exe.thunk_name, [], exe.desc.result_bytes, {"service": str(exe.key[0])})
        self._answer(exe)
        self._release(exe)

    def _abort(self, exe: Execution, reason: str) -> None:
        if exe.completion is not None:
            exe.completion.cancelled = True
        exe.state = "failed"
        exe.record.state = ThunkState.FAILED
        self.reuse.discard(exe.key, exe.record)
        self.trace("instance_failed", exe.thunk_name, [], 0, {"reason": reason})
        for w in exe.waiters:
            self.sim.nack(self.id, w.name, reason)
        exe.waiters.clear()
        self._release(exe)

    def fail_all(self, reason: str) -> None:
        for _, exe in sorted(self.executions.items()):
            if exe.state in ("pending", "running"):
                self._abort(exe, reason)
        self.queue.clear()

    def _answer(self, exe: Execution) -> None:
        keep = []
        for w in exe.waiters:
            if exe.state == "done":
                self._reply_result(w, exe.record, exe.desc)
            elif not exe.ready:
                keep.append(w)
            elif w.force_thunk or exe.state != "running" or exe.exec_us > self.policy.sync_threshold_us:
                self._reply_thunk(w, exe)
            else:
                keep.append(w)
        exe.waiters = keep

    def _reply_thunk(self, w: _Waiter, exe: Execution) -> None:
        content = {
            "status": "thunk",
            "thunk": str(exe.record.thunk),
            "estimate_us": max(1, exe.record.done_at - self.sim.now),
            "imn": str(exe.imn) if exe.imn.instance_id in self.imns else None,
            "server": self.id,
        }
        content.update(w.extra)
        self.trace("thunk_issued", w.name, [], 0, {"thunk": content["thunk"], "estimate_us": content["estimate_us"]})
        self.sim.control_data(self.id, w.name, content)

    def _reply_result(self, w: _Waiter, record: ThunkRecord, desc: ServiceDescriptor) -> None:
        content = {"status": "result", "thunk": str(record.thunk), "server": self.id}
        content.update(w.extra)
        self.sim.produce(self.id, Data(w.name, desc.result_bytes, 0, self.id, content))

    # ---------------------------------------------------------------- polls

    def _on_poll(self, interest: Interest) -> None:
        name = interest.name
        if name in self.mappings:
            self._proxy_poll(interest, self.mappings[name])
            return
        try:
            outcome = poll_thunk(self.thunks, name, self.sim.now)
        except UnknownThunk:
            self.trace("poll_rx", name, [], 0, {"outcome": "unknown"})
            self.sim.nack(self.id, name, "UnknownThunk")
            return
        if isinstance(outcome, Result):
            self.trace("poll_rx", name, [], 0, {"outcome": "result"})
            desc = self.world.services[outcome.record.thunk.service]
            self.sim.produce(self.id, Data(name, desc.result_bytes, self.policy.reuse_freshness_ms, self.id,
                                           {"status": "result", "thunk": str(name), "server": self.id}))
        elif isinstance(outcome, NotReady):
            self.trace("poll_rx", name, [], 0, {"outcome": "not_ready", "remaining_us": outcome.remaining_us})
            self.sim.control_data(self.id, name, {"status": "not_ready", "remaining_us": outcome.remaining_us})
        else:
            self.trace("poll_rx", name, [], 0, {"outcome": "failed"})
            self.sim.control_data(self.id, name, {"status": "failed", "reason": outcome.reason})

    def _proxy_poll(self, interest: Interest, record) -> None:
        user_name = interest.name

        def got(data: Data) -> None:
            content = dict(data.content)
            if content.get("status") == "result":
                if record.mark_completed():
                    self.trace("delegation_completed", user_name, [], 0, {
                        "designated_domain": record.designated_domain,
                        "destination_domain": record.destination_domain,
                    })
                self.trace("result_relayed", user_name, [], data.payload_bytes, {
                    "destination_thunk": str(record.destination_thunk),
                })
                content["thunk"] = str(user_name)
                content["server"] = self.id
                self.sim.produce(self.id, Data(user_name, data.payload_bytes, self.policy.reuse_freshness_ms,
                                               self.id, content))
            else:
                self.sim.produce(self.id, Data(user_name, data.payload_bytes, 0, self.id, content))

        self.sim.express(self.id, record.destination_thunk.to_name(), got,
                         lambda reason: self.sim.nack(self.id, user_name, reason))

    # ------------------------------------------------------------ migration

    def _on_imn(self, interest: Interest) -> None:
        # /pec/imn/<me>/<instance>/<destination>/<nonce>
        name = interest.name
        if len(name) < 6:
            self.sim.nack(self.id, name, "UnknownImn")
            return
        imn = MigrationName(name[2], name[3])
        dest = name[4]
        exe = self.by_instance.get(imn.instance_id)
        if exe is None or dest not in self.world.nodes:
            self.sim.nack(self.id, name, "UnknownImn")
            return
        now = self.sim.now
        try:
            decision = decide_migration(self.imns, self.world.nodes[dest], imn, exe.desc, now)
        except UnknownImn:
            self.sim.nack(self.id, name, "UnknownImn")
            return
        if exe.exec_us is None:
            self.sim.nack(self.id, name, "NotStarted")
            return
        remaining = exe.instance.remaining_us(now)
        if decision.level is not MigrationLevel.RESULT:
            if exe.sharers > 1:
                self.sim.nack(self.id, name, "InstanceShared")
                return
            if remaining < round(self.policy.migrate_min_remaining_ms * 1000):
                self.sim.nack(self.id, name, "WaitPreferred")
                return
        self.trace("migration_begin", imn.to_name(), [], decision.payload_bytes, {
            "level": decision.level.value,
            "progress": round(decision.progress, 9),
            "remaining_us": remaining,
            "destination": dest,
            "thunk": str(exe.record.thunk),
        })
        del self.imns[imn.instance_id]
        if decision.level is not MigrationLevel.RESULT:
            # stop-and-copy: the source stops and frees its slot
            if exe.completion is not None:
                exe.completion.cancelled = True
            exe.state = "migrated"
            exe.record.state = ThunkState.MIGRATED
            self.reuse.discard(exe.key, exe.record)
            self._release(exe)
        content = {
            "level": decision.level.value,
            "progress": decision.progress,
            "remaining_us": remaining,
            "exec_us": exe.exec_us,
            "service": str(exe.key[0]),
            "data": str(exe.key[1]),
            "requester": exe.requester,
        }
        self.sim.produce(self.id, Data(name, decision.payload_bytes, 0, self.id, content))

    def _on_resume(self, interest: Interest) -> None:
        # /pec/ctl/<me>/resume/<source>/<instance>/<nonce>
        name = interest.name
        if len(name) < 7:
            self.sim.nack(self.id, name, "BadResume")
            return
        source, instance = name[4], name[5]
        if self.node.compute_capacity == 0:
            self.sim.nack(self.id, name, "NoCapacity")
            return
        self.trace("resume_rx", name, [], 0, {"source": source, "instance": instance})
        imn_interest = IMN / source / instance / self.id / name[6]
        asked = self.sim.now

        def got(data: Data) -> None:
            c = data.content
            level = MigrationLevel(c["level"])
            self.trace("migration_end", imn_interest, [], data.payload_bytes, {
                "level": level.value, "source": source, "transfer_us": self.sim.now - asked,
            })
            service, data_name = parse_name(c["service"]), parse_name(c["data"])
            if level is MigrationLevel.RESULT:
                self.sim.produce(self.id, Data(name, data.payload_bytes, 0, self.id, {
                    "status": "result", "level": level.value, "server": self.id,
                    "thunk": None,
                }))
                return
            self.install(service, level)
            remaining = remaining_work_us(c["progress"], c["exec_us"])
            waiter = _Waiter(name, force_thunk=True, extra={"level": level.value})
            self.admit((service, data_name), "migrated", waiter, exec_us=max(1, remaining),
                       requester=c.get("requester", ""))

        self.sim.express(self.id, imn_interest, got, lambda reason: self.sim.nack(self.id, name, reason),
                         lifetime_us=self.policy.transfer_lifetime_us)

    def install(self, service: Name, level: MigrationLevel | str) -> None:
        desc = self.world.services[service]
        level_value = level.value if isinstance(level, MigrationLevel) else level
        changed = False
        if level_value in ("full_vm", "vm") and desc.requires_env not in self.node.env:
            self.node.env.add(desc.requires_env)
            changed = True
        if service not in self.node.hosted_services and self.node.role is not Role.CLOUD:
            self.node.hosted_services.add(service)
            changed = True
        if changed:
            self.trace("install", service, [], 0, {"level": level_value})
            self.sim.recompute_routes("install")

    # ----------------------------------------------------------- deployment

    def _on_image(self, interest: Interest) -> None:
        # /pec/ctl/<me>/image/<service...>/<kind>
        name = interest.name
        service, kind = Name(name.components[4:-1]), name[-1]
        desc = self.world.services.get(service)
        if desc is None or not self.node.hosts(service):
            self.sim.nack(self.id, name, "NoImage")
            return
        size = desc.container_bytes if kind == "container" else desc.vm_image_bytes
        self.trace("image_tx", name, [], size, {"kind": kind})
        self.sim.produce(self.id, Data(name, size, 0, self.id, {"service": str(service), "kind": kind}))

    def fetch_image(self, service: Name, source: str, kind: str, done: Optional[Callable[[], None]]) -> None:
        name = CTL / source / "image" / service / kind
        self.trace("deploy_begin", service, [], 0, {"source": source, "kind": kind})

        def got(data: Data) -> None:
            self.trace("deploy_end", service, [], data.payload_bytes, {"source": source, "kind": kind})
            self.install(service, kind)
            self.deploy_eta.pop(service, None)
            for exe in self.deploying.pop(service, []):
                exe.service_ready = True
                self._maybe_ready(exe)
            if done is not None:
                done()

        def lost(reason: str) -> None:
            self.trace("deploy_failed", service, [], 0, {"reason": reason})
            self.deploy_eta.pop(service, None)
            for exe in self.deploying.pop(service, []):
                self._abort(exe, "DeployFailed")
            if done is not None:
                done()

        self.sim.express(self.id, name, got, lost, lifetime_us=self.policy.transfer_lifetime_us)


# ---------------------------------------------------------------------------
# orchestrator


class ControllerApp:
    def __init__(self, sim: Simulation, node_id: str) -> None:
        self.sim = sim
        self.id = node_id
        self.node = sim.world.nodes[node_id]

    def on_interest(self, interest: Interest) -> None:
        if JOIN.is_prefix_of(interest.name):
            self._on_join(interest)
        else:
            self._on_discover(interest)

    def _on_join(self, interest: Interest) -> None:
        # /pec/join/<domain>/<device>/<nonce>
        sim, world, name = self.sim, self.sim.world, interest.name
        domain, device = (name[2], name[3]) if len(name) >= 4 else ("", "")
        sim.trace(self.id, "join_rx", name, [], 0, {"device": device})
        if device not in world.nodes or domain != self.node.domain:
            sim.nack(self.id, name, "UnknownDomain")
            return
        ap = world.attached_ap(device)
        if ap is None or world.nodes[ap].domain != domain:
            sim.nack(self.id, name, "UnknownDomain")
            return
        if world.nodes[device].onboarded:
            sim.nack(self.id, name, "AlreadyOnboarded")
            return

        def acked(_data: Data) -> None:
            try:
                onboard_device(world, device, ap, self.id)
            except TopologyError as exc:
                sim.nack(self.id, name, exc.__class__.__name__)
                return
            if device not in sim.servers:
                sim.servers[device] = ServerApp(sim, device)
            sim.recompute_routes("onboard")
            sim.trace(self.id, "onboard", name, [], 0, {"device": device, "ap": ap, "domain": domain})
            sim.control_data(self.id, name, {"status": "joined", "domain": domain})

        sim.express(self.id, CTL / ap / "addface" / device, acked,
                    lambda reason: sim.nack(self.id, name, reason))

    def _on_discover(self, interest: Interest) -> None:
        sim, name = self.sim, interest.name
        domain = name[2] if len(name) > 2 else ""
        if domain != self.node.domain:
            sim.nack(self.id, name, "UnknownDomain")
            return
        services = catalog(sim.world, domain)
        payload = encode_catalog(services)
        sim.trace(self.id, "discover_rx", name, [], 0, {"services": len(services)})
        size = max(sim.policy.discovery_response_bytes, len(payload))
        sim.produce(self.id, Data(name, size, sim.policy.discovery_freshness_ms, self.id,
                                  {"catalog": payload.decode("utf-8")}))


# ---------------------------------------------------------------------------
# users


@dataclass(eq=False)
class _Outstanding:
    req: RequestSpec
    issued_at: int
    thunk: Optional[Name] = None
    imn: Optional[str] = None
    server: Optional[str] = None
    # serving server of the user's AP when the request went out (or after
    # the last reconnect); a change means the user moved
    home: Optional[str] = None
    poll_event: Optional[Event] = None
    first_poll: bool = True
    nack_retry: bool = True
    reconnecting: bool = False
    fallback: bool = False
    generation: int = 0
    finished: bool = False


class UserApp:
    def __init__(self, sim: Simulation, node_id: str) -> None:
        self.sim = sim
        self.id = node_id
        self.outstanding: dict[str, _Outstanding] = {}
        self.delivered: set[str] = set()

    def trace(self, kind, name=None, faces=(), nbytes=0, annotation=None):
        return self.sim.trace(self.id, kind, name, faces, nbytes, annotation)

    def issue(self, req: RequestSpec) -> None:
        if req.kind == "invoke":
            self._invoke(req)
        elif req.kind == "fetch":
            self._fetch(req)
        else:
            self._discover(req)

    # --------------------------------------------------------------- fetch

    def _fetch(self, req: RequestSpec) -> None:
        sent = self.sim.now
        self.trace("fetch_issued", req.name, [], 0, {"req": req.id})

        def got(data: Data) -> None:
            self.trace("data_delivered", data.name, [], data.payload_bytes,
                       {"req": req.id, "latency_us": self.sim.now - sent})

        def lost(reason: str) -> None:
            self.trace("fetch_failed", req.name, [], 0, {"req": req.id, "reason": reason})

        self.sim.express(self.id, req.name, got, lost)

    # ------------------------------------------------------------ discover

    def _discover(self, req: RequestSpec) -> None:
        world = self.sim.world
        ap = world.attached_ap(self.id)
        domain = world.nodes[ap].domain if ap else None
        if domain is None:
            self.trace("discovery_done", None, [], 0, {"req": req.id, "services": [], "reason": "NoDomain"})
            return
        name = DISCOVER / domain

        def got(data: Data) -> None:
            services = [s for s in data.content["catalog"].split("\n") if s]
            self.trace("discovery_done", name, [], data.payload_bytes, {"req": req.id, "services": services})

        def lost(reason: str) -> None:
            self.trace("discovery_done", name, [], 0, {"req": req.id, "services": [], "reason": reason})

        self.sim.express(self.id, name, got, lost, retries=self.sim.policy.discovery_retries)

    # --------------------------------------------------------------- invoke

    def _invoke(self, req: RequestSpec) -> None:
        inv = InvocationName(req.service, req.data, self.sim.engine.nonce(self.id))
        out = _Outstanding(req, self.sim.now, home=self.sim.world.serving_server(self.id))
        self.outstanding[req.id] = out
        self.trace("request_issued", inv.to_name(), [], 0,
                   {"req": req.id, "service": str(req.service), "data": str(req.data)})
        self.sim.express(self.id, inv.to_name(), lambda d: self._on_reply(out, d),
                         lambda reason: self._failed(out, reason))

    def _on_reply(self, out: _Outstanding, data: Data) -> None:
        content = data.content or {}
        status = content.get("status")
        if status == "result":
            self._deliver(out, content.get("server"))
        elif status == "thunk":
            out.thunk = parse_name(content["thunk"])
            out.imn = content.get("imn")
            out.server = content.get("server")
            self.trace("thunk_rx", out.thunk, [], 0, {"req": out.req.id, "estimate_us": content["estimate_us"]})
            delay = content["estimate_us"]
            if out.first_poll and out.req.poll_after_us is not None:
                delay = out.req.poll_after_us
            self._schedule_poll(out, delay)
        else:
            self._failed(out, content.get("reason", "Failed"))

    def _schedule_poll(self, out: _Outstanding, delay: int) -> None:
        out.poll_event = self.sim.engine.schedule(delay, EventKind.TIMER_EXPIRY, self._poll, out, out.generation)

    def _poll(self, out: _Outstanding, generation: int) -> None:
        if out.finished or out.reconnecting or generation != out.generation:
            return
        out.first_poll = False
        dest = self.sim.world.serving_server(self.id)
        moved = dest is not None and dest != out.home and dest != out.server
        if out.imn is not None and moved and not out.fallback:
            self._reconnect(out, dest)
            return
        self.trace("poll", out.thunk, [], 0, {"req": out.req.id})
        gen = out.generation

        def got(data: Data) -> None:
            if out.finished or gen != out.generation:
                return
            content = data.content or {}
            status = content.get("status")
            if status == "result":
                self._deliver(out, content.get("server"))
            elif status == "not_ready":
                self._schedule_poll(out, max(1, content["remaining_us"]))
            else:
                self._failed(out, content.get("reason", "Failed"))

        def lost(reason: str) -> None:
            if out.finished or gen != out.generation:
                return
            if out.nack_retry:
                out.nack_retry = False
                self.trace("poll_retry", out.thunk, [], 0, {"req": out.req.id, "reason": reason})
                self._schedule_poll(out, 0)
            else:
                self._failed(out, reason)

        self.sim.express(self.id, out.thunk, got, lost)

    def on_handover(self) -> None:
        # migration is negotiated lazily, on the next poll, by whichever
        # server the user is attached to at that moment
        self.trace("reattached", None, [], 0, {"server": self.sim.world.serving_server(self.id)})

    def _reconnect(self, out: _Outstanding, dest: str) -> None:
        sim = self.sim
        imn = MigrationName.parse(out.imn)
        if out.poll_event is not None:
            out.poll_event.cancelled = True
        out.generation += 1
        out.reconnecting = True
        name = CTL / dest / "resume" / imn.source_server_id / imn.instance_id / str(sim.engine.nonce(self.id))
        sent = sim.now
        self.trace("reconnect_issue", name, [], 0, {"req": out.req.id, "source": imn.source_server_id,
                                                     "destination": dest})

        def got(data: Data) -> None:
            out.reconnecting = False
            out.home = dest
            content = data.content or {}
            self.trace("reconnect_done", name, [], data.payload_bytes, {
                "req": out.req.id,
                "level": content.get("level"),
                "interruption_us": sim.now - sent,
                "source": imn.source_server_id,
                "destination": dest,
            })
            if content.get("status") == "result":
                self._deliver(out, dest)
                return
            out.thunk = parse_name(content["thunk"])
            out.imn = content.get("imn")
            out.server = content.get("server", dest)
            self._schedule_poll(out, content["estimate_us"])

        def lost(reason: str) -> None:
            out.reconnecting = False
            out.fallback = True
            self.trace("reconnect_failed", name, [], 0, {"req": out.req.id, "reason": reason})
            # fall back to the original thunk at the source
            self._schedule_poll(out, 0)

        sim.express(self.id, name, got, lost, lifetime_us=sim.policy.transfer_lifetime_us, retries=0)

    def _deliver(self, out: _Outstanding, server: Optional[str]) -> None:
        if out.finished:
            return
        if out.req.id in self.delivered:
            record = self.trace("duplicate_result", out.thunk, [], 0, {"req": out.req.id})
            self.sim.fail(f"request {out.req.id} delivered twice", record)
        self.delivered.add(out.req.id)
        out.finished = True
        self.trace("result_delivered", out.thunk, [], 0, {
            "req": out.req.id, "latency_us": self.sim.now - out.issued_at, "server": server,
        })

    def _failed(self, out: _Outstanding, reason: str) -> None:
        if out.finished:
            return
        out.finished = True
        self.trace("request_failed", out.thunk, [], 0, {"req": out.req.id, "reason": reason})

    # ---------------------------------------------------------------- join

    def join(self, domain: Optional[str]) -> None:
        world = self.sim.world
        ap = world.attached_ap(self.id)
        if domain is None:
            domain = world.nodes[ap].domain if ap else None
        if domain is None:
            self.trace("join_failed", None, [], 0, {"reason": "UnknownDomain"})
            return
        name = JOIN / domain / self.id / str(self.sim.engine.nonce(self.id))
        self.trace("join_issue", name, [], 0, {"domain": domain})
        self.sim.express(
            self.id, name,
            lambda d: self.trace("join_done", name, [], 0, {"domain": domain}),
            lambda reason: self.trace("join_failed", name, [], 0, {"reason": reason}),
        )


def run(config: ScenarioConfig, seed: Optional[int] = None, until_us: Optional[int] = None) -> Simulation:
    """Run ``config`` to completion (or ``until_us``); the returned object holds trace and metrics."""
    return Simulation(config, seed).run(until_us)
