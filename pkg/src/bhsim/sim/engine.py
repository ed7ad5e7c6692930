"""
The simulator: one cluster, one head, and a stream of data packets.

Every state change happens inside an event handler, and every handler appends
to the event log through :meth:`Simulator._log`. Counters are derived from
that log, so a finished log fully explains the report.
"""

from __future__ import annotations

import logging
import random
from typing import Any, Callable, Dict, Mapping, Optional, Set, Tuple

from attrs import evolve, frozen

from ..adversary import (
    Action,
    BehaviorSpec,
    BehaviorState,
    Honest,
    decide_action,
    node_stream,
)
from ..cluster import Activity, ClusterManager, EnergyTimerConfig, consume_energy
from ..config import ScenarioConfig
from ..metrics import (
    ENERGY_SNAPSHOT,
    PACKET_LOST,
    EventLogRecord,
    MetricsCollector,
    MetricsReport,
)
from ..trust import TrustTable
from ._queue import EventKind, EventQueue, SimEvent
from .topology import NodeState, Topology, discover_route

__all__ = ["CONTROL_LATENCY", "Packet", "Simulator", "Transmission", "run"]

logger = logging.getLogger(__name__)

#: Ticks an ACK or RTR takes to reach the source.
CONTROL_LATENCY = 1

TimerKey = Tuple[int, int, str]


@frozen
class Packet:
    """
    A data packet. Retransmissions keep `seq` and bump `attempt`.
    """

    seq: int
    source: str
    destination: str
    attempt: int = 0
    hop_trace: Tuple[str, ...] = ()

    @property
    def label(self) -> str:
        """How the packet appears in the log: ``5`` or ``5.1``."""
        return f"{self.seq}.{self.attempt}" if self.attempt else str(self.seq)

    def hop(self, node_id: str) -> Packet:
        return evolve(self, hop_trace=(*self.hop_trace, node_id))

    def retransmitted(self) -> Packet:
        return Packet(
            self.seq, self.source, self.destination, self.attempt + 1, (self.source,)
        )


@frozen
class Transmission:
    """One hop: `sender` sends `packet` to `receiver`."""

    sender: str
    receiver: str
    packet: Packet

    @property
    def timer_key(self) -> TimerKey:
        return (self.packet.seq, self.packet.attempt, self.receiver)


class Simulator:
    """
    Runs one scenario to quiescence.

    A simulator is single use: build it from a validated
    :class:`ScenarioConfig`, call :meth:`run`, then inspect :attr:`log`,
    :attr:`cluster` and :attr:`nodes`.
    """

    def __init__(self, config: ScenarioConfig) -> None:
        self.config = config
        self.topology: Topology = config.topology.build()
        self.costs = config.energy.costs
        self.nodes: Dict[str, NodeState] = {
            node_id: NodeState(
                node_id,
                config.energy.initial_for(node_id),
                behavior=config.behaviors.get(node_id, Honest()),
                state=BehaviorState(node_stream(config.seed, node_id)),
            )
            for node_id in sorted(self.topology.node_ids)
        }
        self.queue = EventQueue()
        self.cluster = ClusterManager(
            EnergyTimerConfig(config.period_te), config.x, config.ttf
        )
        self.collector = MetricsCollector()
        self.excluded: Set[str] = set()

        self._channel = random.Random(f"{config.seed}:channel")
        self._routes: Dict[Tuple[str, str], Tuple[str, ...]] = {}
        self._timers: Dict[TimerKey, SimEvent] = {}
        self._energy_timer: Optional[SimEvent] = None
        self._next_seq = 0
        self._started = False
        self._ran = False
        self._outstanding: Set[int] = set()
        self._resolved: Dict[int, str] = {}
        self._handlers: Dict[EventKind, Callable[[SimEvent], None]] = {
            EventKind.ENERGY_TIMER_EXPIRY: self._on_energy_timer,
            EventKind.ENERGY_BROADCAST: self._on_energy_broadcast,
            EventKind.ELECTION: self._on_election,
            EventKind.PACKET_SEND: self._on_packet_send,
            EventKind.PACKET_RECEIVE: self._on_packet_receive,
            EventKind.OVERHEAR: self._on_overhear,
            EventKind.FORWARD_TIMER_EXPIRY: self._on_forward_timeout,
            EventKind.MALICIOUS_BROADCAST: self._on_malicious_broadcast,
            EventKind.RTR_DELIVERY: self._on_rtr,
            EventKind.ACK_DELIVERY: self._on_ack,
            EventKind.CHANNEL_LOSS: self._on_channel_loss,
        }

    @property
    def log(self) -> list[EventLogRecord]:
        return self.collector.records

    @property
    def behaviors(self) -> Mapping[str, BehaviorSpec]:
        return {n: s.behavior for n, s in self.nodes.items()}

    @property
    def trust_table(self) -> Optional[TrustTable]:
        return self.cluster.table

    def run(self) -> MetricsReport:
        if self._ran:
            raise RuntimeError("A simulator can only run once.")
        self._ran = True
        if self.config.workload.packets > 0:
            self._energy_timer = self.queue.schedule(
                0, EventKind.ENERGY_TIMER_EXPIRY, "-"
            )
        while (event := self.queue.pop()) is not None:
            self._handlers[event.kind](event)
        if self._outstanding:
            logger.error(
                "Queue drained with %d packets unresolved.", len(self._outstanding)
            )
        for node in self.nodes.values():
            self._log(
                ENERGY_SNAPSHOT,
                node.node_id,
                energy=repr(node.energy),
                alive=int(node.alive),
            )
        report = self.collector.report(self.behaviors)
        logger.info(
            "Run finished at t=%d: %d sent, %d delivered, %d lost.",
            self.queue.now,
            report.packets_sent,
            report.packets_delivered,
            report.packets_lost_permanently,
        )
        return report

    # Bookkeeping.

    def _log(self, kind: str, subject: str, seq: Optional[str] = None, **detail: Any):
        kind = getattr(kind, "value", kind)
        text = " ".join(f"{k}={v}" for k, v in detail.items())
        self.collector.record(EventLogRecord(self.queue.now, kind, subject, seq, text))

    def _unusable(self) -> Set[str]:
        return self.excluded | {n for n, s in self.nodes.items() if not s.alive}

    def _work_pending(self) -> bool:
        return self._next_seq < self.config.workload.packets or bool(self._outstanding)

    def _resolve(self, seq: int, outcome: str) -> None:
        self._resolved[seq] = outcome
        self._outstanding.discard(seq)
        if not self._work_pending() and self._energy_timer is not None:
            self._energy_timer.cancel()
            self._energy_timer = None

    def _lose(self, packet: Packet, reason: str) -> None:
        if packet.seq in self._resolved:
            return
        self._resolve(packet.seq, "lost")
        self._log(PACKET_LOST, packet.source, str(packet.seq), reason=reason)

    def _charge(self, node_id: str, activity: Activity) -> None:
        node = self.nodes[node_id]
        was_alive = node.alive
        consume_energy(node, activity, self.costs)
        if was_alive and not node.alive:
            self._on_death(node_id)

    def _on_death(self, node_id: str) -> None:
        logger.warning("Node %s died at t=%d.", node_id, self.queue.now)
        self._invalidate(node_id)
        if node_id == self.cluster.head:
            self.queue.schedule(self.queue.now, EventKind.ELECTION, "-")

    # Routing.

    def _install_route(self, path: Tuple[str, ...]) -> None:
        destination = path[-1]
        for hop, nxt in zip(path, path[1:]):
            self.nodes[hop].routing[destination] = nxt
        self._routes[(path[0], destination)] = path

    def _invalidate(self, node_id: str) -> None:
        """Forget every route that runs through `node_id`."""
        for key, path in list(self._routes.items()):
            if node_id in path:
                del self._routes[key]
        self.nodes[node_id].routing.clear()
        for state in self.nodes.values():
            for destination, nxt in list(state.routing.items()):
                if nxt == node_id or destination == node_id:
                    del state.routing[destination]

    def _next_hop(self, node_id: str, destination: str) -> Optional[str]:
        unusable = self._unusable()
        nxt = self.nodes[node_id].routing.get(destination)
        # A false route reply can install a next hop that is not a neighbor.
        if (
            nxt is not None
            and nxt not in unusable
            and self.topology.adjacent(node_id, nxt)
        ):
            return nxt
        now = self.queue.now
        discovery = discover_route(
            node_id, destination, self.topology, self.behaviors, unusable, now
        )
        self._log(EventKind.ROUTE_REQUEST, node_id, dst=destination)
        for reply in discovery.replies:
            self._log(
                EventKind.ROUTE_REPLY,
                reply.responder,
                path=",".join(reply.path),
                arrival=now + reply.arrival,
                false=int(reply.false_claim),
                chosen=int(reply is discovery.chosen),
            )
        if discovery.chosen is None:
            return None
        self._install_route(discovery.chosen.path)
        return discovery.next_hop

    # Data plane.

    def _schedule_send(self, time: int) -> None:
        seq = self._next_seq
        self._next_seq += 1
        self._outstanding.add(seq)
        destinations = self.config.destinations
        source = self.config.source
        destination = destinations[seq % len(destinations)]
        packet = Packet(seq, source, destination, 0, (source,))
        self.queue.schedule(time, EventKind.PACKET_SEND, source, packet)

    def _on_packet_send(self, event: SimEvent) -> None:
        packet: Packet = event.payload
        if self._next_seq < self.config.workload.packets:
            self._schedule_send(self.queue.now + self.config.workload.interval)
        self._send(packet)

    def _send(self, packet: Packet) -> None:
        self._log(
            EventKind.PACKET_SEND,
            packet.source,
            packet.label,
            dst=packet.destination,
            attempt=packet.attempt,
        )
        if not self.nodes[packet.source].alive:
            self._lose(packet, "source_dead")
            return
        nxt = self._next_hop(packet.source, packet.destination)
        if nxt is None:
            self._lose(packet, "no_route")
            return
        self._transmit(packet.source, nxt, packet)

    def _transmit(self, sender: str, receiver: str, packet: Packet) -> None:
        now = self.queue.now
        self._charge(sender, Activity.TRANSMIT)
        hop = Transmission(sender, receiver, packet)
        arrival = now + self.topology.latency(sender, receiver)
        stale = self._timers.pop(hop.timer_key, None)
        if stale is not None:
            stale.cancel()
        self._timers[hop.timer_key] = self.queue.schedule(
            now + self.config.delay_tr, EventKind.FORWARD_TIMER_EXPIRY, receiver, hop
        )
        loss_p = self.config.channel_loss_p
        if loss_p and self._channel.random() < loss_p:
            self.queue.schedule(arrival, EventKind.CHANNEL_LOSS, receiver, hop)
        else:
            self.queue.schedule(arrival, EventKind.PACKET_RECEIVE, receiver, hop)
        # The head hears the transmission whether or not the receiver does.
        self.queue.schedule(arrival, EventKind.OVERHEAR, sender, hop)

    def _on_packet_receive(self, event: SimEvent) -> None:
        hop: Transmission = event.payload
        receiver = hop.receiver
        node = self.nodes[receiver]
        if receiver in self.excluded or not node.alive:
            logger.debug("%s cannot receive %s.", receiver, hop.packet.label)
            return
        packet = hop.packet.hop(receiver)
        self._charge(receiver, Activity.RECEIVE)

        if receiver == packet.destination:
            timer = self._timers.pop(hop.timer_key, None)
            if timer is not None:
                timer.cancel()
            if packet.seq in self._resolved:
                action = "duplicate"
            else:
                action = "deliver"
                self._resolve(packet.seq, "delivered")
                self.queue.schedule(
                    self.queue.now + CONTROL_LATENCY,
                    EventKind.ACK_DELIVERY,
                    packet.source,
                    packet,
                )
            self._log(
                EventKind.PACKET_RECEIVE,
                receiver,
                packet.label,
                **{"from": hop.sender, "action": action},
            )
            self._acknowledge(receiver, packet)
            return

        if not node.alive:
            self._log(
                EventKind.PACKET_RECEIVE,
                receiver,
                packet.label,
                **{"from": hop.sender, "action": "dead"},
            )
            return
        action = decide_action(node.behavior, node.state, self.queue.now)
        self._log(
            EventKind.PACKET_RECEIVE,
            receiver,
            packet.label,
            **{"from": hop.sender, "action": action.value},
        )
        if action is Action.DROP:
            return
        nxt = self._next_hop(receiver, packet.destination)
        if nxt is None:
            logger.info("%s has no route for %s.", receiver, packet.label)
            return
        self._transmit(receiver, nxt, packet)

    def _on_channel_loss(self, event: SimEvent) -> None:
        hop: Transmission = event.payload
        self._log(
            EventKind.CHANNEL_LOSS,
            hop.receiver,
            hop.packet.label,
            **{"from": hop.sender},
        )

    # Watchdog.

    def _on_overhear(self, event: SimEvent) -> None:
        hop: Transmission = event.payload
        sender, packet = hop.sender, hop.packet
        timer = self._timers.pop((packet.seq, packet.attempt, sender), None)
        if timer is not None:
            timer.cancel()
        head = self.cluster.head
        if head is None or not self.cluster.head_alive(self.nodes):
            self._log(
                EventKind.OVERHEAR,
                sender,
                packet.label,
                role="unheard",
                to=hop.receiver,
            )
            return
        table = self.cluster.table
        if sender == packet.source:
            role = "origin"
        elif sender in table.detected:
            role = "ignored"
        else:
            if timer is None:
                logger.warning(
                    "Overheard %s forwarding %s with no timer armed.",
                    sender,
                    packet.label,
                )
                role = "unmatched"
            else:
                role = "forward"
            table.record_forward(sender)
        self._log(
            EventKind.OVERHEAR,
            sender,
            packet.label,
            role=role,
            head=head,
            to=hop.receiver,
        )
        self._charge(head, Activity.OVERHEAR)

    def _acknowledge(self, destination: str, packet: Packet) -> None:
        """The ACK passes through the head, which counts it as a forward."""
        if not self.cluster.head_alive(self.nodes):
            return
        table = self.cluster.table
        if destination in table.detected:
            return
        table.record_forward(destination)
        self._log(
            EventKind.OVERHEAR,
            destination,
            packet.label,
            role="ack",
            head=self.cluster.head,
        )

    def _on_forward_timeout(self, event: SimEvent) -> None:
        hop: Transmission = event.payload
        suspect, packet = hop.receiver, hop.packet
        self._timers.pop(hop.timer_key, None)
        if packet.seq in self._resolved:
            self._log(
                EventKind.FORWARD_TIMER_EXPIRY, suspect, packet.label, outcome="stale"
            )
            return
        if not self.cluster.head_alive(self.nodes):
            self._log(
                EventKind.FORWARD_TIMER_EXPIRY,
                suspect,
                packet.label,
                outcome="unobserved",
            )
            self._lose(packet, "unobserved")
            return
        table = self.cluster.table
        if suspect in table.detected:
            self._log(
                EventKind.FORWARD_TIMER_EXPIRY, suspect, packet.label, outcome="ignored"
            )
        else:
            verdict = table.record_drop(suspect)
            self._log(
                EventKind.FORWARD_TIMER_EXPIRY,
                suspect,
                packet.label,
                outcome="drop",
                streak=verdict.streak_at_verdict,
                tf=repr(verdict.tf_at_verdict),
            )
            if verdict.malicious:
                self.queue.schedule(
                    self.queue.now, EventKind.MALICIOUS_BROADCAST, suspect, verdict
                )
        self.queue.schedule(
            self.queue.now + CONTROL_LATENCY, EventKind.RTR_DELIVERY, packet.source, hop
        )

    def _on_malicious_broadcast(self, event: SimEvent) -> None:
        offender = event.subject
        self.excluded.add(offender)
        self._invalidate(offender)
        self._log(
            EventKind.MALICIOUS_BROADCAST,
            offender,
            streak=event.payload.streak_at_verdict,
            tf=repr(event.payload.tf_at_verdict),
        )
        if offender == self.cluster.head:
            self.queue.schedule(self.queue.now, EventKind.ELECTION, "-")

    def _on_rtr(self, event: SimEvent) -> None:
        hop: Transmission = event.payload
        packet = hop.packet
        self._log(
            EventKind.RTR_DELIVERY, packet.source, packet.label, suspect=hop.receiver
        )
        if packet.seq in self._resolved:
            return
        if packet.attempt >= self.config.max_retransmissions:
            self._lose(packet, "budget")
            return
        self._send(packet.retransmitted())

    def _on_ack(self, event: SimEvent) -> None:
        packet: Packet = event.payload
        self._log(
            EventKind.ACK_DELIVERY, packet.source, packet.label, dst=packet.destination
        )

    # Elections.

    def _on_energy_timer(self, event: SimEvent) -> None:
        if self._energy_timer is event:
            self._energy_timer = None
        now = self.queue.now
        self._log(
            EventKind.ENERGY_TIMER_EXPIRY,
            self.cluster.head or "-",
            term=self.cluster.term,
        )
        alive_before = {n for n, s in self.nodes.items() if s.alive}
        trigger = self.cluster.on_energy_timer(self.nodes, self.costs, now)
        for node_id in sorted(alive_before):
            if not self.nodes[node_id].alive:
                self._on_death(node_id)
        for record in trigger.broadcasts:
            self.queue.schedule(now, EventKind.ENERGY_BROADCAST, record.node_id, record)
        self.queue.schedule(now, EventKind.ELECTION, "-")

    def _on_energy_broadcast(self, event: SimEvent) -> None:
        energy = repr(event.payload.energy)
        self._log(EventKind.ENERGY_BROADCAST, event.subject, energy=energy)

    def _on_election(self, event: SimEvent) -> None:
        now = self.queue.now
        result = self.cluster.elect(self.nodes, self.excluded, now)
        assert result.head_energy == max(result.candidates.values())
        assert result.head == min(
            n for n, e in result.candidates.items() if e == result.head_energy
        )
        self._log(
            EventKind.ELECTION,
            result.head,
            term=result.term,
            energy=repr(result.head_energy),
        )
        if self._energy_timer is not None:
            self._energy_timer.cancel()
            self._energy_timer = None
        if self._work_pending():
            self._energy_timer = self.queue.schedule(
                self.cluster.next_expiry(now),
                EventKind.ENERGY_TIMER_EXPIRY,
                result.head,
                result.term,
            )
        if not self._started:
            self._started = True
            self._schedule_send(now)


def run(config: ScenarioConfig) -> MetricsReport:
    """Simulate `config` to quiescence and report."""
    return Simulator(config).run()
