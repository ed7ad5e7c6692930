"""The discrete-event network model; the simulator lives in `bhsim.sim.engine`."""

from ._queue import EventKind, EventQueue, SimEvent
from .topology import (
    Link,
    NodeState,
    RouteDiscovery,
    RouteReply,
    Topology,
    discover_route,
    random_connected,
)

__all__ = [
    "EventKind",
    "EventQueue",
    "Link",
    "NodeState",
    "RouteDiscovery",
    "RouteReply",
    "SimEvent",
    "Topology",
    "discover_route",
    "random_connected",
]
