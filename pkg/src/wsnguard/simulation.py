"""Simulation loop: discovery, elections, data collection, detection and attacks.

Everything runs inside one event loop driven by ``Scheduler``; every energy debit,
packet hop, tag, verdict and election lands in the ``RunTrace``.
"""

from __future__ import annotations

import gc
import logging
from dataclasses import dataclass
from fractions import Fraction

from .attacker import AttackMode, AttackPlan, Attacker
from .config import ScenarioConfig, generated_ids
from .detection import (
    ClusterDecider,
    Decision,
    IsolationList,
    Reason,
    WindowCounter,
    phase1_classify,
    phase1_suspect,
)
from .energy import (
    ALWAYS_ON,
    Action,
    CostTable,
    EnergyBaseline,
    NodeEnergy,
    SleepSchedule,
    to_micro,
)
from .engine import EventKind, RunTrace, Scheduler, TraceRecord, derive_rng
from .protocol import Packet, PacketKind, StatusProfile, Tag, next_hop
from .roles import (
    Cluster,
    ElectionRecord,
    NoEligibleCandidate,
    Role,
    Tier,
    cluster_members,
    elect_cic,
    elect_sics,
    elect_sm,
    needs_rotation,
)
from .topology import NeighborGraph, Position, build_graph, uniform_positions

logger = logging.getLogger(__name__)


@dataclass
class NodeState:
    id: str
    node_class: str
    tier: Tier
    position: Position
    energy: NodeEnergy | None  # None for the mains-powered SG
    arrival: int = 0
    present: bool = True
    profiled: bool = False
    role: Role | None = None
    cluster: str | None = None
    profile_serial: int | None = None
    forced_until: int = 0
    deep_sleep: bool = False
    isolated: bool = False
    version: int = 0

    @property
    def alive(self) -> bool:
        return self.energy is None or not self.energy.dead


@dataclass
class NodeSpec:
    id: str
    node_class: str
    position: Position
    initial_energy: float | None = None
    arrival: int = 0


def _node_specs(cfg: ScenarioConfig) -> list[NodeSpec]:
    topo = cfg.topology
    if topo.nodes is not None:
        specs = [NodeSpec(n.id, n.node_class, Position(n.x, n.y), n.initial_energy) for n in topo.nodes]
    else:
        gen = topo.generator
        rng = derive_rng(cfg.seed, "topology")
        classes = [name for name, count in gen.counts.items() for _ in range(count)]
        rng.shuffle(classes)
        ids = generated_ids(gen.counts)
        positions = uniform_positions(ids, gen.width, gen.height, rng)
        sg_pos = gen.sg_position or (gen.width / 2, gen.height / 2)
        specs = [NodeSpec(gen.sg_id, gen.gateway_class, Position(*sg_pos))]
        specs += [NodeSpec(i, c, positions[i]) for i, c in zip(ids, classes)]
    specs += [
        NodeSpec(a.id, a.node_class, Position(a.x, a.y), a.initial_energy, a.at) for a in cfg.arrivals
    ]
    return specs


def _schedule(sc) -> SleepSchedule:
    return SleepSchedule(sc.period, sc.offset, sc.wake)


def _candidates_field(record: ElectionRecord) -> str:
    return ",".join(
        f"{c.node}:{c.energy}:{c.degree}:{'-' if c.distance is None else repr(c.distance)}"
        for c in record.candidates
    )


class Simulation:
    def __init__(self, cfg: ScenarioConfig, *, detection: bool | None = None) -> None:
        self.cfg = cfg
        self.detection = cfg.detection.enabled if detection is None else detection
        self.horizon = cfg.horizon
        self.latency = cfg.protocol.latency
        c = cfg.costs
        self.costs = CostTable(
            to_micro(c.transmit), to_micro(c.receive), to_micro(c.sense),
            to_micro(c.idle), to_micro(c.sleep), to_micro(c.processing),
        )
        self.schedules = {
            Role.SIC: _schedule(cfg.schedules.sic),
            Role.SM: _schedule(cfg.schedules.sm),
            Role.LN: _schedule(cfg.schedules.ln),
            Role.CIC: ALWAYS_ON,
        }
        det = cfg.detection
        self.margin = Fraction(str(det.margin))
        self.baselines = {
            name: EnergyBaseline(
                to_micro(cls.initial_energy), self.schedules[Role.LN],
                self.costs.idle, self.costs.sleep, self.margin,
            )
            for name, cls in cfg.classes.items() if cls.tier != "gateway"
        }

        self.nodes: dict[str, NodeState] = {}
        for spec in _node_specs(cfg):
            cls = cfg.classes[spec.node_class]
            tier = Tier(cls.tier)
            energy = None
            if tier is not Tier.GATEWAY:
                initial = spec.initial_energy if spec.initial_energy is not None else cls.initial_energy
                energy = NodeEnergy(to_micro(initial), None if spec.arrival else self.schedules[Role.LN])
            self.nodes[spec.id] = NodeState(
                spec.id, spec.node_class, tier, spec.position, energy,
                arrival=spec.arrival, present=spec.arrival == 0,
            )
        self.sg = next(n.id for n in self.nodes.values() if n.tier is Tier.GATEWAY)
        self.nodes[self.sg].role = Role.SG
        self.graph: NeighborGraph = build_graph(
            {n.id: n.position for n in self.nodes.values()}, cfg.topology.radius
        )

        self.scheduler = Scheduler()
        self.trace = RunTrace()
        self._append = self.trace.records.append
        self.clusters: list[Cluster] = []
        self.profiles: dict[int, StatusProfile] = {}
        self._profile_serial = 0
        self._pkt_id = 0
        self._verdict_id = 0
        self.isolation = IsolationList(self.sg)
        self.counters: dict[str, WindowCounter] = {}
        self.deciders: dict[str, ClusterDecider] = {}
        self.elections: list[ElectionRecord] = []
        self._responders: set[str] = set()
        self._touched: set[str] = set()
        self._targets_resolved = False
        self.halted = False
        self.events = 0  # dispatched so far
        self.end_tick: int | None = None

        self.attackers = []
        for a in cfg.attacks:
            plan = AttackPlan(
                a.id, tuple(a.targets), a.start, a.stop, a.period, AttackMode(a.mode),
                a.random_targets,
                Position(a.x, a.y) if a.x is not None else None,
                a.range, None if a.energy is None else to_micro(a.energy),
            )
            self.attackers.append(Attacker(plan))

    # ------------------------------------------------------------------ helpers

    def _log(self, kind: str, actor: str, /, **fields) -> None:
        # same record RunTrace.log builds, without re-packing the keyword arguments
        self._append(tuple.__new__(TraceRecord, (self.scheduler.now, kind, actor, tuple(fields.items()))))

    def _next_pkt(self) -> int:
        self._pkt_id += 1
        return self._pkt_id

    def alive_sensors(self) -> list[NodeState]:
        return [n for n in self.nodes.values() if n.energy is not None and n.alive]

    def _usable(self, node: NodeState) -> bool:
        return node.present and node.alive and not node.isolated and node.energy is not None

    def _background_schedule(self, node: NodeState) -> SleepSchedule | None:
        if not node.present or node.deep_sleep:
            return None
        if node.role is Role.CIC:
            return ALWAYS_ON
        return self.schedules.get(node.role, self.schedules[Role.LN])

    def _radio_awake(self, node: NodeState, t: int) -> bool:
        if node.energy is None:
            return True
        if not node.alive:
            return False
        if node.forced_until > t:
            return True
        sched = node.energy.schedule
        return sched is not None and sched.is_awake(t)

    def _next_radio_awake(self, node: NodeState, t: int) -> int | None:
        if node.energy is None or node.forced_until > t:
            return t
        sched = node.energy.schedule
        return None if sched is None else sched.next_awake(t)

    def _sync(self, node: NodeState, t: int | None = None) -> None:
        if node.energy is None or not node.present:
            return
        t = self.scheduler.now if t is None else t
        was_dead = node.energy.dead
        debits = dict(node.energy.sync(t, self.costs))
        if debits:
            self._log("DRAIN", node.id, idle=debits.get(Action.IDLE, 0), sleep=debits.get(Action.SLEEP, 0),
                      residual=node.energy.residual)
        self._touched.add(node.id)
        if node.energy.dead and not was_dead:
            self._on_death(node)

    def _sync_all(self) -> None:
        for node in self.nodes.values():
            self._sync(node)

    def _debit(self, node: NodeState, action: Action, amount: int | None = None) -> bool:
        """Charge one action; returns False if the node is (now) dead."""
        if node.energy is None:
            return True
        self._sync(node)
        if node.energy.dead:
            return False
        amount = self.costs.of(action) if amount is None else amount
        taken = node.energy.consume(action, amount, self.scheduler.now)
        if taken:
            self._log("ENERGY", node.id, action=action, amount=taken, residual=node.energy.residual)
        if node.energy.dead:
            self._on_death(node)
            return False
        return True

    def _set_mode(self, node: NodeState) -> None:
        if node.energy is None:
            return
        self._sync(node)
        node.energy.set_schedule(self._background_schedule(node))
        self._touched.add(node.id)

    def _arm_depletion(self, node: NodeState) -> None:
        if node.energy is None or node.energy.dead or not node.present:
            return
        node.version += 1
        at = node.energy.predict_depletion(self.costs, self.horizon)
        if at is not None and at < self.horizon:
            self.scheduler.schedule(max(at, self.scheduler.now), EventKind.DEPLETION, (node.id, node.version))

    def _on_death(self, node: NodeState) -> None:
        self._log("DEATH", node.id, at=node.energy.dead_at, role=node.role, cluster=node.cluster)
        if not self.alive_sensors():
            self.halted = True

    # ------------------------------------------------------------------ packets

    def forward(self, packet: Packet, sender: NodeState, receiver: NodeState) -> bool:
        """Send one hop. Returns False if the packet did not leave the sender."""
        t = self.scheduler.now
        if packet.kind is PacketKind.DATA and (
            packet.origin in self.isolation or sender.id in self.isolation
        ):
            self._log("DROP", sender.id, pkt=packet.pkt_id, kind=packet.kind, origin=packet.origin,
                      hop=packet.hop, reason="isolated")
            return False
        if not sender.alive:
            return False
        if not self._debit(sender, Action.TRANSMIT):
            self._log("DROP", sender.id, pkt=packet.pkt_id, kind=packet.kind, origin=packet.origin,
                      hop=packet.hop, reason="sender_died")
            return False
        if packet.hop == 0 and sender.id == packet.origin and sender.energy is not None:
            packet.sender_residual = sender.energy.residual
        eta = t + self.latency
        if packet.kind in (PacketKind.DATA, PacketKind.DATA_REQUEST) and receiver.role in (Role.SIC, Role.SM):
            nxt = self._next_radio_awake(receiver, eta)
            if nxt is not None:
                eta = nxt
        packet.path.append(sender.id)
        self._log("SEND", sender.id, pkt=packet.pkt_id, kind=packet.kind, to=receiver.id,
                  origin=packet.origin, hop=packet.hop, created=packet.created_at, eta=eta)
        self.scheduler.schedule(eta, EventKind.PACKET_DELIVERY, (packet, sender.id, receiver.id))
        return True

    def _new_packet(self, kind: PacketKind, origin: str, dst: str) -> Packet:
        return Packet(self._next_pkt(), kind, origin, dst, self.scheduler.now)

    def _on_delivery(self, payload) -> None:
        packet, sender_id, receiver_id = payload
        t = self.scheduler.now
        receiver = self.nodes[receiver_id]
        self._sync(receiver)
        common = dict(pkt=packet.pkt_id, kind=packet.kind, origin=packet.origin, hop=packet.hop)
        if not receiver.alive:
            self._log("DROP", receiver_id, **common, reason="receiver_dead")
            return
        if packet.kind is PacketKind.DATA and packet.hop >= 1 and packet.origin in self.isolation:
            self._log("DROP", receiver_id, **common, reason="isolated")
            return
        if receiver.isolated and packet.kind is not PacketKind.SLEEP_SIGNAL:
            # an excluded node no longer takes part; the radio send is all that happened
            self._log("DELIVER", receiver_id, **common, frm=sender_id, created=packet.created_at, ignored=True)
            return
        if packet.kind is PacketKind.DATA_REQUEST and receiver.role is Role.LN and not self._radio_awake(receiver, t):
            self._log("MISS", receiver_id, **common)
            return
        if packet.kind in (PacketKind.DATA, PacketKind.DATA_REQUEST) and not self._radio_awake(receiver, t):
            nxt = self._next_radio_awake(receiver, t)
            if nxt is None:
                self._log("DROP", receiver_id, **common, reason="asleep")
            else:
                self._log("DEFER", receiver_id, **common, until=nxt)
                self.scheduler.schedule(nxt, EventKind.PACKET_DELIVERY, payload)
            return

        asleep = packet.kind is PacketKind.FAKE_REQUEST and not self._radio_awake(receiver, t)
        if not self._debit(receiver, Action.RECEIVE):
            self._log("DROP", receiver_id, **common, reason="receiver_died")
            return
        self._log("DELIVER", receiver_id, **common, frm=sender_id, created=packet.created_at, asleep=asleep)
        if packet.kind is not PacketKind.SLEEP_SIGNAL:
            self.counters.setdefault(receiver_id, WindowCounter(self.cfg.detection.window)).observe(packet.origin, t)
        packet.hop += 1

        kind = packet.kind
        if kind is PacketKind.QUERY:
            self._respond_to_query(receiver)
        elif kind is PacketKind.STATUS_RESPONSE:
            self._responders.add(packet.origin)
        elif kind is PacketKind.STATUS_PROFILE:
            if packet.dst != receiver_id:
                self.forward(packet, receiver, self.nodes[packet.dst])
        elif kind is PacketKind.DATA_REQUEST:
            self._handle_request(receiver)
        elif kind is PacketKind.FAKE_REQUEST:
            self._handle_fake(receiver, asleep)
        elif kind is PacketKind.DATA:
            self._handle_data(receiver, packet)
        elif kind is PacketKind.SLEEP_SIGNAL:
            receiver.deep_sleep = True
            self._set_mode(receiver)

    # ------------------------------------------------------------------ discovery and roles

    def _on_discovery(self, stage: str) -> None:
        t = self.scheduler.now
        if stage == "query":
            self._responders = set()
            sg = self.nodes[self.sg]
            for nid in sorted(self.graph.neighbors(self.sg)):
                node = self.nodes[nid]
                if node.present and node.alive and not node.isolated:
                    self.forward(self._new_packet(PacketKind.QUERY, self.sg, nid), sg, node)
            self.scheduler.schedule(t + self.latency, EventKind.DISCOVERY, "collect")
            period = self.cfg.protocol.discovery_period
            if period and t + period < self.horizon:
                self.scheduler.schedule(t + period, EventKind.DISCOVERY, "query")
        elif stage == "collect":
            self.scheduler.schedule(t + self.latency, EventKind.DISCOVERY, "finalize")
        else:
            self.sg_discover_finalize()

    def _respond_to_query(self, node: NodeState) -> None:
        packet = self._new_packet(PacketKind.STATUS_RESPONSE, node.id, self.sg)
        self.forward(packet, node, self.nodes[self.sg])

    def _energies(self, *, require_profile: bool) -> dict[str, int]:
        return {
            n.id: n.energy.residual
            for n in self.nodes.values()
            if self._usable(n) and (n.profiled or not require_profile)
        }

    def _l2_eligible(self, energies) -> set[str]:
        return {n for n in energies if self.nodes[n].tier.can_hold(Role.SIC)}

    def _log_election(self, record: ElectionRecord, cluster: str) -> None:
        self.elections.append(record)
        self._log("ELECTION", self.sg, role=record.role, winner=record.winner, cluster=cluster,
                  candidates=_candidates_field(record))

    def _form_cluster(self, energies: dict[str, int], claimed: set[str], responders=None) -> Cluster | None:
        t = self.scheduler.now
        eligible = {n for n in energies if self.nodes[n].tier.can_hold(Role.CIC)}
        if responders is not None:
            eligible &= responders
        try:
            record = elect_cic(self.sg, self.graph, energies, eligible, tick=t, exclude=claimed)
        except NoEligibleCandidate as exc:
            self._log("HALT", self.sg, reason="no_cic_candidate", detail=str(exc).replace(" ", "_"))
            return None
        cic = record.winner
        self._log_election(record, cic)
        members = cluster_members(cic, self.sg, self.graph, energies, claimed | {cic})
        claimed |= members | {cic}
        cluster = Cluster(cic, members)
        self._form_sectors(cluster, energies)
        return cluster

    def _form_sectors(self, cluster: Cluster, energies: dict[str, int]) -> None:
        t = self.scheduler.now
        eligible = self._l2_eligible(energies)
        records, sectors, shortfall = elect_sics(
            cluster.cic, self.graph, energies, self.cfg.protocol.sectors, cluster.members, eligible, tick=t
        )
        for record in records:
            self._log_election(record, cluster.cic)
        if shortfall:
            self._log("SHORTFALL", self.sg, cluster=cluster.cic, role=Role.SIC, missing=shortfall)
        for sector in sectors:
            record = elect_sm(sector, cluster.cic, self.graph, eligible, energies, tick=t)
            if record is None:
                self._log("NO_SM", self.sg, cluster=cluster.cic, sic=sector.sic)
            else:
                self._log_election(record, cluster.cic)
        cluster.sectors = sectors

    def _apply_roles(self, affected: set[str]) -> None:
        """Push the role map implied by ``self.clusters`` to ``affected`` nodes and re-profile them."""
        t = self.scheduler.now
        assignment: dict[str, tuple[Role | None, str | None]] = {}
        for cluster in self.clusters:
            for nid in cluster.members | {cluster.cic}:
                assignment[nid] = (cluster.role_of(nid), cluster.cic)
        sg = self.nodes[self.sg]
        for nid in sorted(affected):
            node = self.nodes[nid]
            if node.isolated:
                node.role, node.cluster = None, None  # excluded nodes get no profile
                continue
            if node.energy is None or not node.alive or not node.present:
                continue
            role, cic = assignment.get(nid, (None, None))
            node.role, node.cluster = role, cic
            node.profiled = True
            if role is not None:
                node.deep_sleep = False
            self._set_mode(node)
            self._profile_serial += 1
            schedule = self._background_schedule(node)
            profile = StatusProfile(nid, role, schedule, node.node_class, t, self._profile_serial, cic)
            self.profiles[profile.serial] = profile
            node.profile_serial = profile.serial
            self._log(
                "PROFILE", nid, serial=profile.serial, role=role, cluster=cic,
                period=schedule.period if schedule else None,
                offset=schedule.wake_offset if schedule else None,
                wake=schedule.wake_len if schedule else None,
            )
            packet = self._new_packet(PacketKind.STATUS_PROFILE, self.sg, nid)
            if nid in self.graph.neighbors(self.sg) or cic is None or cic == nid:
                self.forward(packet, sg, node)
            else:
                self.forward(packet, sg, self.nodes[cic])

    def sg_discover_finalize(self) -> None:
        """Elect every role from scratch using the nodes that answered the SG's query."""
        self._sync_all()
        energies = self._energies(require_profile=False)
        responders = {n for n in self._responders if n in energies}
        before = {n for c in self.clusters for n in c.members | {c.cic}}
        self.clusters = []
        claimed: set[str] = set()
        for _ in range(self.cfg.protocol.clusters):
            cluster = self._form_cluster(energies, claimed, responders)
            if cluster is None:
                break
            self.clusters.append(cluster)
        now_in = {n for c in self.clusters for n in c.members | {c.cic}}
        self._apply_roles(responders | now_in | before)
        self._refresh_deciders()
        if not self._targets_resolved:
            self._resolve_targets()

    def _refresh_deciders(self) -> None:
        det = self.cfg.detection
        live = {c.cic for c in self.clusters}
        self.deciders = {
            cic: self.deciders.get(cic) or ClusterDecider(det.window, det.corroboration) for cic in live
        }

    def _resolve_targets(self) -> None:
        self._targets_resolved = True
        leaves = sorted(n.id for n in self.nodes.values() if n.role is Role.LN)
        for i, attacker in enumerate(self.attackers):
            targets = list(attacker.plan.targets)
            extra = [n for n in leaves if n not in targets]
            k = min(attacker.plan.random_targets, len(extra))
            if k:
                targets += derive_rng(self.cfg.seed, f"attack/{i}").sample(extra, k)
            attacker.targets = tuple(targets)
            self._log("ATTACK_PLAN", attacker.id, targets=",".join(targets) or None,
                      mode=attacker.plan.mode, start=attacker.plan.start, stop=attacker.plan.stop,
                      period=attacker.plan.period)

    def rotate_roles(self) -> list[ElectionRecord]:
        """Re-elect roles whose holders are dead, isolated or below the energy trigger."""
        t = self.scheduler.now
        self._sync_all()
        energies = self._energies(require_profile=True)
        factor = Fraction(str(self.cfg.protocol.rotation_factor))
        start = len(self.elections)
        affected: set[str] = set()
        kept: list[Cluster] = []
        for cluster in self.clusters:
            pool = [n for n in cluster.members | {cluster.cic} if n in energies]
            values = [energies[n] for n in pool]

            def tripped(holder: str) -> bool:
                return holder not in energies or needs_rotation(energies[holder], values, factor)

            if tripped(cluster.cic):
                affected |= cluster.members | {cluster.cic}
                self._log("ROTATE", self.sg, cluster=cluster.cic, scope="cluster")
                continue
            if any(tripped(h) for h in cluster.holders()[1:]):
                self._log("ROTATE", self.sg, cluster=cluster.cic, scope="sectors")
                affected |= cluster.members
                claimed = {n for c in self.clusters if c is not cluster for n in c.members | {c.cic}}
                cluster.members = cluster_members(cluster.cic, self.sg, self.graph, energies, claimed | {cluster.cic})
                affected |= cluster.members
                self._form_sectors(cluster, energies)
            kept.append(cluster)
        self.clusters = kept
        claimed = {n for c in self.clusters for n in c.members | {c.cic}}
        while len(self.clusters) < self.cfg.protocol.clusters:
            if not any(self.nodes[n].tier.can_hold(Role.CIC) and n not in claimed
                       for n in self.graph.neighbors(self.sg) if n in energies):
                if affected:
                    self._log("HALT", self.sg, reason="no_cic_candidate")
                break
            cluster = self._form_cluster(energies, claimed)
            if cluster is None:
                break
            affected |= cluster.members | {cluster.cic}
            self.clusters.append(cluster)
        if affected:
            self._apply_roles(affected)
            self._refresh_deciders()
        return self.elections[start:]

    # ------------------------------------------------------------------ data collection

    def collect_round(self, cic_id: str) -> None:
        cic = self.nodes[cic_id]
        if not self._usable(cic) or cic.role is not Role.CIC:
            return
        self._handle_request(cic)

    def _handle_request(self, node: NodeState) -> None:
        """React to a data request (real or fake) according to the node's current role."""
        if node.role is Role.LN:
            if not self._debit(node, Action.SENSE):
                return
            packet = self._new_packet(PacketKind.DATA, node.id, self.sg)
            packet.profile = node.profile_serial
            parent = self._parent(node)
            if parent is not None:
                self.forward(packet, node, self.nodes[parent])
        elif node.role in (Role.SIC, Role.CIC):
            cluster = self._cluster(node)
            if cluster is None:
                return
            if node.role is Role.CIC:
                children = [s.sic for s in cluster.sectors]
            else:
                sector = cluster.sector_of(node.id)
                children = sorted(sector.leaves) if sector else []
            for child_id in children:
                child = self.nodes[child_id]
                if child.alive and not child.isolated:
                    self.forward(self._new_packet(PacketKind.DATA_REQUEST, node.id, child_id), node, child)

    def _cluster(self, node: NodeState) -> Cluster | None:
        for cluster in self.clusters:
            if cluster.cic == node.cluster:
                return cluster
        return None

    def _parent(self, node: NodeState) -> str | None:
        cluster = self._cluster(node)
        return None if cluster is None else next_hop(cluster, node.id, self.sg)

    def _handle_fake(self, node: NodeState, asleep: bool) -> None:
        t = self.scheduler.now
        if asleep:
            sched = node.energy.schedule or self.schedules[Role.LN]
            node.forced_until = t + sched.wake_len
            self._log("WAKEUP", node.id, cause="fake_request", until=node.forced_until)
            if not self._debit(node, Action.FORCED_WAKE, sched.wake_len * self.costs.idle):
                return
            self.scheduler.schedule(node.forced_until, EventKind.SLEEP_START, node.id)
        self._handle_request(node)

    def _handle_data(self, node: NodeState, packet: Packet) -> None:
        t = self.scheduler.now
        if node.id == self.sg:
            self._log("SINK", self.sg, pkt=packet.pkt_id, origin=packet.origin, tag=packet.tag,
                      reclassified=packet.reclassified, path=">".join(packet.path + [self.sg]))
            return
        role = node.role
        if role not in (Role.SIC, Role.SM, Role.CIC) or node.isolated:
            self._log("DROP", node.id, pkt=packet.pkt_id, kind=packet.kind, origin=packet.origin,
                      hop=packet.hop, reason="stale_route")
            return
        if self.detection and role is Role.SM:
            if not self._classify(node, packet):
                return
        elif self.detection and role is Role.CIC:
            if packet.tag is Tag.UNTAGGED and not self._classify(node, packet):
                return
            if not self._decide(node, packet):
                return
        parent = self._parent(node)
        if parent is None:
            self._log("DROP", node.id, pkt=packet.pkt_id, kind=packet.kind, origin=packet.origin,
                      hop=packet.hop, reason="stale_route")
            return
        self.forward(packet, node, self.nodes[parent])

    def _schedule_of(self, origin: str, serial: int | None) -> SleepSchedule | None:
        profile = self.profiles.get(serial) if serial is not None else None
        if profile is None or profile.node != origin:
            return None
        return profile.schedule or _NEVER_AWAKE

    def _classify(self, node: NodeState, packet: Packet) -> bool:
        """Phase 1 at ``node``. Returns False if the node died doing it."""
        t = self.scheduler.now
        if not self._debit(node, Action.PROCESSING):
            return False
        counter = self.counters.setdefault(node.id, WindowCounter(self.cfg.detection.window))
        result = phase1_classify(packet, t, counter, self._schedule_of, self.cfg.detection.rate_threshold)
        suspected = False
        threshold = None
        origin = self.nodes.get(packet.origin)
        if result.tag is Tag.INVALID and origin is not None and origin.node_class in self.baselines:
            threshold = self.baselines[origin.node_class].threshold(packet.created_at)
            suspected = packet.sender_residual is not None and phase1_suspect(packet.sender_residual, threshold)
        packet.reason = result.reason.value
        packet.suspected = suspected
        self._log(
            "CLASSIFY", node.id, pkt=packet.pkt_id, origin=packet.origin, created=packet.created_at,
            profile=packet.profile, role=node.role, count=result.count, asleep=result.asleep,
            unprofiled=result.unprofiled, tag=result.tag, reason=result.reason,
            residual=packet.sender_residual,
            threshold=None if threshold is None else f"{threshold.numerator}/{threshold.denominator}",
            suspected=suspected,
        )
        return True

    def _decide(self, cic: NodeState, packet: Packet) -> bool:
        """Phase 2 at the CIC. Returns True if the packet should continue to the SG."""
        t = self.scheduler.now
        if not self._debit(cic, Action.PROCESSING):
            return False
        decider = self.deciders.setdefault(
            cic.id, ClusterDecider(self.cfg.detection.window, self.cfg.detection.corroboration)
        )
        self._verdict_id += 1
        reason = Reason(packet.reason) if packet.reason else Reason.NONE
        verdict = decider.decide(self._verdict_id, packet, t, packet.suspected, reason)
        self._log(
            "VERDICT", cic.id, verdict=verdict.verdict_id, pkt=packet.pkt_id, origin=packet.origin,
            phase1=verdict.phase1_tag, reason=verdict.phase1_reason, suspected=verdict.suspected,
            invalid_count=verdict.evidence.get("invalid_count"), phase2=verdict.phase2,
            confirmed=verdict.confirmed_intrusion,
        )
        if verdict.phase2 is Decision.DROP:
            self._log("DROP", cic.id, pkt=packet.pkt_id, kind=packet.kind, origin=packet.origin,
                      hop=packet.hop, reason="detection")
            self.isolate(packet.origin, verdict.verdict_id)
            return False
        if packet.tag is Tag.INVALID:
            packet.reclassify()
        return True

    def isolate(self, node_id: str, verdict_id: int) -> bool:
        if not self.isolation.isolate(node_id, self.scheduler.now, verdict_id):
            return False
        node = self.nodes[node_id]
        node.isolated = True
        self._log("ISOLATE", self.sg, node=node_id, verdict=verdict_id, role=node.role)
        self.sleep_signal(node)
        return True

    def sleep_signal(self, node: NodeState) -> None:
        packet = self._new_packet(PacketKind.SLEEP_SIGNAL, self.sg, node.id)
        self.forward(packet, self.nodes[self.sg], node)

    # ------------------------------------------------------------------ attacks, arrivals, sampling

    def _on_fire(self, index: int) -> None:
        t = self.scheduler.now
        attacker = self.attackers[index]
        plan = attacker.plan
        nxt = t + plan.period
        if nxt < min(plan.stop, self.horizon):
            self.scheduler.schedule(nxt, EventKind.ATTACKER_FIRE, index)
        for target_id in attacker.targets:
            if attacker.exhausted:
                return
            target = self.nodes[target_id]
            if not target.present or not attacker.in_range(target.position):
                continue
            schedule = target.energy.schedule if target.energy else ALWAYS_ON
            if not attacker.wants_fire(schedule, t + self.latency):
                continue
            taken = attacker.spend(self.costs.transmit)
            if taken:
                self._log("ENERGY", attacker.id, action=Action.TRANSMIT, amount=taken, residual=attacker.energy)
            packet = self._new_packet(PacketKind.FAKE_REQUEST, attacker.id, target_id)
            self._log("FIRE", attacker.id, target=target_id, pkt=packet.pkt_id)
            packet.path.append(attacker.id)
            self._log("SEND", attacker.id, pkt=packet.pkt_id, kind=packet.kind, to=target_id,
                      origin=attacker.id, hop=0, created=t, eta=t + self.latency)
            self.scheduler.schedule(t + self.latency, EventKind.PACKET_DELIVERY, (packet, attacker.id, target_id))

    def _on_arrival(self, node_id: str) -> None:
        t = self.scheduler.now
        node = self.nodes[node_id]
        node.present = True
        node.energy.last_sync = t
        period = self.cfg.protocol.discovery_period
        on_discovery = t == 0 or (period and t % period == 0)
        self._log("ARRIVAL", node_id, x=node.position.x, y=node.position.y, discovery=bool(on_discovery))
        if on_discovery:
            node.deep_sleep = False
            self._set_mode(node)
        else:
            node.deep_sleep = True
            self._set_mode(node)
            self.sleep_signal(node)

    def _on_sample(self) -> None:
        self._sync_all()
        sensors = [n for n in self.nodes.values() if n.energy is not None]
        self._log(
            "SAMPLE", "-", alive=sum(1 for n in sensors if n.alive),
            total_residual=sum(n.energy.residual for n in sensors),
            residuals=",".join(f"{n.id}:{n.energy.residual}" for n in sensors),
        )
        nxt = self.scheduler.now + self.cfg.protocol.sample_period
        if nxt < self.horizon:
            self.scheduler.schedule(nxt, EventKind.METRICS_SAMPLE)

    # ------------------------------------------------------------------ run loop

    def _init_trace(self) -> None:
        cfg = self.cfg
        det = cfg.detection
        self._log(
            "HEADER", "-", name=cfg.name, seed=cfg.seed, horizon=cfg.horizon,
            fingerprint=cfg.fingerprint(), detection=self.detection, sg=self.sg,
            rate_threshold=det.rate_threshold, window=det.window, margin=det.margin,
            corroboration=det.corroboration, latency=self.latency, sectors=cfg.protocol.sectors,
            clusters=cfg.protocol.clusters, ln_period=cfg.schedules.ln.period,
            ln_offset=cfg.schedules.ln.offset, ln_wake=cfg.schedules.ln.wake,
            idle=self.costs.idle, sleep=self.costs.sleep,
        )
        for name, cls in cfg.classes.items():
            self._log("CLASS", name, tier=cls.tier, initial=to_micro(cls.initial_energy))
        for node in self.nodes.values():
            self._log(
                "INIT", node.id, node_class=node.node_class, tier=node.tier, x=node.position.x,
                y=node.position.y, energy=None if node.energy is None else node.energy.initial,
                arrival=node.arrival,
            )
        for attacker in self.attackers:
            plan = attacker.plan
            self._log("ATTACKER", attacker.id, mode=plan.mode, start=plan.start, stop=plan.stop,
                      period=plan.period, energy=plan.energy)

    def _prime(self) -> None:
        s = self.scheduler
        h = self.horizon
        for node in self.nodes.values():
            if not node.present and node.arrival < h:
                s.schedule(node.arrival, EventKind.NODE_ARRIVAL, node.id)
        if h > 0:
            s.schedule(0, EventKind.DISCOVERY, "query")
        p = self.cfg.protocol
        if p.round_period < h:
            s.schedule(p.round_period, EventKind.COLLECTION_ROUND)
        if p.election_period < h:
            s.schedule(p.election_period, EventKind.ELECTION_TICK)
        if p.sample_period < h:
            s.schedule(p.sample_period, EventKind.METRICS_SAMPLE)
        for i, attacker in enumerate(self.attackers):
            if attacker.plan.start < min(attacker.plan.stop, h):
                s.schedule(attacker.plan.start, EventKind.ATTACKER_FIRE, i)
        for node in self.nodes.values():
            self._arm_depletion(node)

    def _dispatch(self, event) -> None:
        kind = event.kind
        if kind is EventKind.PACKET_DELIVERY:
            self._on_delivery(event.payload)
        elif kind is EventKind.DEPLETION:
            node_id, version = event.payload
            node = self.nodes[node_id]
            if node.version == version:
                self._sync(node)
        elif kind is EventKind.COLLECTION_ROUND:
            for cluster in list(self.clusters):
                self.collect_round(cluster.cic)
            nxt = event.at + self.cfg.protocol.round_period
            if nxt < self.horizon:
                self.scheduler.schedule(nxt, EventKind.COLLECTION_ROUND)
        elif kind is EventKind.ELECTION_TICK:
            self.rotate_roles()
            nxt = event.at + self.cfg.protocol.election_period
            if nxt < self.horizon:
                self.scheduler.schedule(nxt, EventKind.ELECTION_TICK)
        elif kind is EventKind.DISCOVERY:
            self._on_discovery(event.payload)
        elif kind is EventKind.ATTACKER_FIRE:
            self._on_fire(event.payload)
        elif kind is EventKind.SLEEP_START:
            node = self.nodes[event.payload]
            if node.forced_until == event.at and node.alive:
                self._log("SLEEPSTART", node.id, cause="forced_window_end")
        elif kind is EventKind.NODE_ARRIVAL:
            self._on_arrival(event.payload)
        elif kind is EventKind.METRICS_SAMPLE:
            self._on_sample()

    def start(self) -> None:
        """Write the initial records and queue the first events."""
        logger.debug("run %s seed=%d detection=%s", self.cfg.name, self.cfg.seed, self.detection)
        self._init_trace()
        self._prime()

    def _flush_touched(self) -> None:
        for nid in sorted(self._touched):
            self._arm_depletion(self.nodes[nid])
        self._touched.clear()

    def advance(self, until: int | None = None) -> None:
        """Dispatch every event before ``until`` (capped at the horizon)."""
        limit = self.horizon if until is None else min(until, self.horizon)
        s = self.scheduler
        self._flush_touched()
        while not self.halted:
            nxt = s.peek_time()
            if nxt is None or nxt >= limit:
                break
            self._dispatch(s.pop())
            self.events += 1
            if self._touched:
                self._flush_touched()

    def finish(self) -> RunTrace:
        s = self.scheduler
        self.end_tick = s.now if self.halted else self.horizon
        if not self.halted:
            s.now = self.horizon
            self._sync_all()
        sensors = [n for n in self.nodes.values() if n.energy is not None]
        self._log(
            "END", "-", end=self.end_tick, halted=self.halted, events=self.events,
            alive=sum(1 for n in sensors if n.alive),
            total_residual=sum(n.energy.residual for n in sensors),
            isolated=",".join(self.isolation.members()) or None,
            residuals=",".join(f"{n.id}:{n.energy.residual}" for n in sensors),
        )
        return self.trace

    def run(self) -> RunTrace:
        # the growing trace makes every cyclic-GC pass rescan it; the loop builds no cycles
        paused = gc.isenabled()
        gc.disable()
        try:
            self.start()
            self.advance()
            return self.finish()
        finally:
            if paused:
                gc.enable()


class _NeverAwake:
    """Schedule stand-in for a profile issued while the node was radio-off."""

    def is_awake(self, t: int) -> bool:
        return False


_NEVER_AWAKE = _NeverAwake()


def run(cfg: ScenarioConfig, *, detection: bool | None = None) -> RunTrace:
    return Simulation(cfg, detection=detection).run()
