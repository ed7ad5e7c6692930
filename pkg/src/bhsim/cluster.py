"""Energy accounting and maximum-energy cluster head election."""

from __future__ import annotations

import logging
from enum import Enum
from typing import (
    TYPE_CHECKING,
    AbstractSet,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Tuple,
)

from attrs import define, field, frozen
from attrs.validators import ge, gt, instance_of

from .errors import NoEligibleHeadError
from .trust import TrustTable

if TYPE_CHECKING:
    from .sim.topology import NodeState

__all__ = [
    "Activity",
    "ClusterManager",
    "ElectionResult",
    "EnergyCosts",
    "EnergyRecord",
    "EnergyTimerConfig",
    "EnergyTrigger",
    "consume_energy",
    "elect_head",
    "handoff_trust_table",
]

logger = logging.getLogger(__name__)


class Activity(str, Enum):
    TRANSMIT = "transmit"
    RECEIVE = "receive"
    OVERHEAR = "overhear"
    IDLE_TICK = "idle_tick"


@frozen
class EnergyCosts:
    """Abstract energy units charged per activity."""

    c_tx: float = field(default=1.0, converter=float, validator=ge(0.0))
    c_rx: float = field(default=0.5, converter=float, validator=ge(0.0))
    c_oh: float = field(default=0.75, converter=float, validator=ge(0.0))
    c_idle: float = field(default=0.0, converter=float, validator=ge(0.0))

    def cost(self, activity: Activity, packet_size: int = 1) -> float:
        if activity is Activity.TRANSMIT:
            per_unit = self.c_tx
        elif activity is Activity.RECEIVE:
            per_unit = self.c_rx
        elif activity is Activity.OVERHEAR:
            per_unit = self.c_oh
        else:
            return self.c_idle
        return per_unit * packet_size


@frozen
class EnergyRecord:
    node_id: str
    energy: float = field(validator=ge(0.0))


@frozen
class EnergyTimerConfig:
    period_te: int = field(validator=[instance_of(int), gt(0)])


@frozen
class EnergyTrigger:
    """What an energy timer expiry asks the simulator to schedule."""

    broadcasts: Tuple[EnergyRecord, ...]
    next_expiry: int


@frozen
class ElectionResult:
    """
    The outcome of one election.

    `candidates` is the energy snapshot the election was decided on, restricted
    to eligible nodes, so the maximum-energy property can be checked after the
    fact.
    """

    head: str
    term: int
    elected_at: int
    head_energy: float
    candidates: Mapping[str, float] = field(factory=dict)


def elect_head(
    records: Iterable[EnergyRecord],
    excluded: AbstractSet[str] = frozenset(),
    term: int = 1,
    elected_at: int = 0,
) -> ElectionResult:
    """
    Pick the eligible node with the most energy, lowest id on ties.

    :raises NoEligibleHeadError: if every record is excluded.
    """
    best: Optional[EnergyRecord] = None
    candidates: Dict[str, float] = {}
    for record in records:
        if record.node_id in excluded:
            continue
        candidates[record.node_id] = record.energy
        if (
            best is None
            or record.energy > best.energy
            or (record.energy == best.energy and record.node_id < best.node_id)
        ):
            best = record
    if best is None:
        raise NoEligibleHeadError(
            "No eligible cluster head: every node is dead or detected.",
            sorted(excluded),
        )
    return ElectionResult(best.node_id, term, elected_at, best.energy, candidates)


def consume_energy(
    node: NodeState, activity: Activity, costs: EnergyCosts, packet_size: int = 1
) -> float:
    """
    Charge `node` for one activity, clamping at zero.

    A node that reaches zero is marked dead. Returns the remaining energy.
    """
    if not node.alive:
        return node.energy
    node.energy = max(0.0, node.energy - costs.cost(activity, packet_size))
    if node.energy == 0.0:
        node.alive = False
        logger.info("Node %s ran out of energy.", node.node_id)
    return node.energy


def handoff_trust_table(
    previous: Optional[TrustTable], nodes: Iterable[str], x: float, ttf: float
) -> TrustTable:
    """
    The table the incoming head starts its term with.

    Continuity is total: streaks and the detected set carry over unchanged. With
    no previous head every node starts at full trust.
    """
    if previous is None:
        return TrustTable.for_nodes(nodes, x, ttf)
    return previous.snapshot()


@define
class ClusterManager:
    """
    Single-cluster election state: the current head, its term and trust table.

    The simulator drives it; it never schedules anything by itself.
    """

    timer: EnergyTimerConfig
    x: float
    ttf: float
    head: Optional[str] = None
    term: int = 0
    table: Optional[TrustTable] = None
    elections: List[ElectionResult] = field(factory=list)

    def next_expiry(self, now: int) -> int:
        """When the energy timer armed at `now` goes off."""
        return now + self.timer.period_te

    def eligible_records(
        self, nodes: Mapping[str, NodeState], excluded: AbstractSet[str]
    ) -> List[EnergyRecord]:
        return [
            EnergyRecord(n.node_id, n.energy)
            for n in nodes.values()
            if n.alive and n.node_id not in excluded
        ]

    def elect(
        self, nodes: Mapping[str, NodeState], excluded: AbstractSet[str], now: int
    ) -> ElectionResult:
        """Run an election at `now` and hand the trust table to the winner."""
        records = self.eligible_records(nodes, excluded)
        result = elect_head(records, excluded, self.term + 1, now)
        previous_head = self.head
        self.handoff_trust_table(previous_head, result.head, nodes)
        self.term = result.term
        self.elections.append(result)
        if previous_head != result.head:
            logger.info(
                "Term %d: cluster head %s -> %s at t=%d.",
                self.term,
                previous_head,
                result.head,
                now,
            )
        return result

    def handoff_trust_table(
        self, old_head: Optional[str], new_head: str, nodes: Mapping[str, NodeState]
    ) -> TrustTable:
        self.table = handoff_trust_table(self.table, nodes.keys(), self.x, self.ttf)
        self.head = new_head
        for node in nodes.values():
            node.role = "head" if node.node_id == new_head else "member"
        logger.debug("Trust table handed from %s to %s.", old_head, new_head)
        return self.table

    def on_energy_timer(
        self, nodes: Mapping[str, NodeState], costs: EnergyCosts, now: int
    ) -> EnergyTrigger:
        """
        The energy timer went off at `now`.

        Every live node pays its idle tick and broadcasts its energy; the
        election that follows re-arms the timer for the next term.
        """
        for node in nodes.values():
            if node.alive:
                consume_energy(node, Activity.IDLE_TICK, costs)
        broadcasts = tuple(
            EnergyRecord(n.node_id, n.energy) for n in nodes.values() if n.alive
        )
        return EnergyTrigger(broadcasts, self.next_expiry(now))

    def head_alive(self, nodes: Mapping[str, NodeState]) -> bool:
        return self.head is not None and nodes[self.head].alive
