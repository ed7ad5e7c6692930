"""The trust table: streak counters and exponentially decaying trust factors."""

from __future__ import annotations

import logging
from enum import Enum
from typing import Dict, Iterable, Set

from attrs import Attribute, define, evolve, field, frozen, setters

from .errors import BookkeepingError

__all__ = [
    "FULL_TRUST",
    "DEFAULT_TTF",
    "FaultTolerance",
    "TrustEntry",
    "TrustTable",
    "Verdict",
    "VerdictStatus",
    "as_fault_tolerance",
    "compute_tf",
    "drops_to_detection",
]

logger = logging.getLogger(__name__)

FULL_TRUST = 100.0
DEFAULT_TTF = 10.0


def _open_unit_interval(_, attribute: Attribute, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"'{attribute.name}' must be in (0, 1) (got {value!r})")


def _threshold(_, attribute: Attribute, value: float) -> None:
    if not 0.0 < value < FULL_TRUST:
        raise ValueError(f"'{attribute.name}' must be in (0, 100) (got {value!r})")


@frozen
class FaultTolerance:
    """
    The network-wide fault tolerance `x`.

    Close to 1 the network tolerates long drop streaks, close to 0 a handful
    of consecutive drops is enough to condemn a node.
    """

    x: float = field(converter=float, validator=_open_unit_interval)


def as_fault_tolerance(x: float | FaultTolerance) -> FaultTolerance:
    return x if isinstance(x, FaultTolerance) else FaultTolerance(x)


def compute_tf(x: float | FaultTolerance, n: int) -> float:
    """
    The trust factor after `n` consecutive drops: ``100 * x**n``.

    The power is built by repeated multiplication, in the same order everywhere
    it is needed (the engine, :func:`drops_to_detection` and the replay
    oracle), so all of them agree to the last bit.
    """
    if n < 0:
        raise ValueError(f"streak must be non-negative (got {n})")
    factor = as_fault_tolerance(x).x
    tf = FULL_TRUST
    for _ in range(n):
        tf *= factor
    return tf


def drops_to_detection(x: float | FaultTolerance, ttf: float) -> int:
    """The smallest positive streak whose trust factor is at or below `ttf`."""
    if not 0.0 < ttf < FULL_TRUST:
        raise ValueError(f"ttf must be in (0, 100) (got {ttf!r})")
    factor = as_fault_tolerance(x).x
    tf = FULL_TRUST
    n = 0
    while True:
        tf *= factor
        n += 1
        if tf <= ttf:
            return n


@frozen
class TrustEntry:
    node_id: str
    streak: int = 0
    tf: float = FULL_TRUST


class VerdictStatus(str, Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"


@frozen
class Verdict:
    node_id: str
    status: VerdictStatus
    tf_at_verdict: float
    streak_at_verdict: int

    @property
    def malicious(self) -> bool:
        return self.status is VerdictStatus.MALICIOUS


@define
class TrustTable:
    """
    Per-node trust bookkeeping held by the cluster head.

    `x` and `ttf` are fixed for the lifetime of a table. Nodes in
    :attr:`detected` are frozen: any further update is a bookkeeping error.
    """

    x: FaultTolerance = field(
        converter=as_fault_tolerance,
        on_setattr=setters.frozen,
    )
    ttf: float = field(
        default=DEFAULT_TTF,
        converter=float,
        validator=_threshold,
        on_setattr=setters.frozen,
    )
    entries: Dict[str, TrustEntry] = field(factory=dict)
    detected: Set[str] = field(factory=set)

    @classmethod
    def for_nodes(
        cls, nodes: Iterable[str], x: float | FaultTolerance, ttf: float = DEFAULT_TTF
    ) -> TrustTable:
        """A fresh table with every node at full trust."""
        table = cls(x, ttf)
        for node in nodes:
            table.register_node(node)
        return table

    def register_node(self, node_id: str) -> TrustEntry:
        if node_id in self.entries:
            raise BookkeepingError(f"Node {node_id!r} is already tracked.", node_id)
        entry = self.entries[node_id] = TrustEntry(node_id)
        return entry

    def deregister_node(self, node_id: str) -> None:
        if node_id not in self.entries:
            raise BookkeepingError(f"Node {node_id!r} is not tracked.", node_id)
        del self.entries[node_id]
        self.detected.discard(node_id)

    def lookup(self, node_id: str) -> TrustEntry | None:
        return self.entries.get(node_id)

    def _live_entry(self, node_id: str) -> TrustEntry:
        try:
            entry = self.entries[node_id]
        except KeyError:
            raise BookkeepingError(
                f"Trust update for unknown node {node_id!r}.", node_id
            ) from None
        if node_id in self.detected:
            raise BookkeepingError(
                f"Trust update for node {node_id!r}, already declared malicious.",
                node_id,
            )
        return entry

    def record_drop(self, node_id: str) -> Verdict:
        """The head timed out waiting for `node_id` to forward a packet."""
        entry = self._live_entry(node_id)
        streak = entry.streak + 1
        tf = compute_tf(self.x, streak)
        self.entries[node_id] = TrustEntry(node_id, streak, tf)
        if tf <= self.ttf:
            self.detected.add(node_id)
            logger.info(
                "Node %s declared malicious (streak %d, tf %r).", node_id, streak, tf
            )
            status = VerdictStatus.MALICIOUS
        else:
            status = VerdictStatus.BENIGN
        return Verdict(node_id, status, tf, streak)

    def record_forward(self, node_id: str) -> TrustEntry:
        """The head overheard `node_id` forwarding; its streak starts over."""
        entry = self._live_entry(node_id)
        if entry.streak:
            entry = self.entries[node_id] = TrustEntry(node_id)
        return entry

    def snapshot(self) -> TrustTable:
        """An independent copy, sharing no mutable state with this table."""
        return evolve(self, entries=dict(self.entries), detected=set(self.detected))
