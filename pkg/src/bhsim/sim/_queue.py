"""The global event queue."""

from __future__ import annotations

import heapq
from enum import Enum
from typing import Any, List, Optional, Tuple

from attrs import define, field

__all__ = ["EventKind", "EventQueue", "SimEvent"]


class EventKind(str, Enum):
    ENERGY_BROADCAST = "EnergyBroadcast"
    ELECTION = "Election"
    ROUTE_REQUEST = "RouteRequest"
    ROUTE_REPLY = "RouteReply"
    PACKET_SEND = "PacketSend"
    PACKET_RECEIVE = "PacketReceive"
    OVERHEAR = "Overhear"
    FORWARD_TIMER_EXPIRY = "ForwardTimerExpiry"
    ENERGY_TIMER_EXPIRY = "EnergyTimerExpiry"
    ACK_DELIVERY = "AckDelivery"
    RTR_DELIVERY = "RtrDelivery"
    MALICIOUS_BROADCAST = "MaliciousBroadcast"
    CHANNEL_LOSS = "ChannelLoss"


@define
class SimEvent:
    time: int
    seq_tiebreak: int
    kind: EventKind
    subject: str
    payload: Any = None
    canceled: bool = field(default=False, eq=False)

    def cancel(self) -> None:
        self.canceled = True


@define
class EventQueue:
    """
    A min-heap of events ordered by ``(time, seq_tiebreak)``.

    The insertion counter makes the order total, so equal timestamps pop in
    the order they were scheduled. Cancellation is lazy.
    """

    _heap: List[Tuple[int, int, SimEvent]] = field(factory=list)
    _counter: int = 0
    now: int = 0

    def schedule(
        self, time: int, kind: EventKind, subject: str, payload: Any = None
    ) -> SimEvent:
        if time < self.now:
            raise ValueError(
                f"Cannot schedule {kind.value} in the past ({time} < {self.now})."
            )
        event = SimEvent(time, self._counter, kind, subject, payload)
        self._counter += 1
        heapq.heappush(self._heap, (time, event.seq_tiebreak, event))
        return event

    def pop(self) -> Optional[SimEvent]:
        """The next live event, advancing the clock; `None` once drained."""
        while self._heap:
            time, _, event = heapq.heappop(self._heap)
            if event.canceled:
                continue
            self.now = time
            return event
        return None

    def __len__(self) -> int:
        return sum(1 for _, _, e in self._heap if not e.canceled)
