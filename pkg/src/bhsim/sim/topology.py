"""Nodes, links and route discovery."""

from __future__ import annotations

import heapq
import logging
import random
from typing import (
    AbstractSet,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Tuple,
)

from attrs import define, field, frozen

from ..adversary import (
    BehaviorSpec,
    BehaviorState,
    CooperativeBlackHole,
    Honest,
    ReplyStrategy,
    effective_spec,
    rrep_strategy,
)

__all__ = [
    "Link",
    "NodeState",
    "RouteDiscovery",
    "RouteReply",
    "Topology",
    "discover_route",
    "random_connected",
]

logger = logging.getLogger(__name__)


@frozen
class Link:
    a: str
    b: str
    latency: int = 1

    def __attrs_post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError(f"Self-link on node {self.a!r}.")
        if self.latency <= 0:
            raise ValueError(f"Link {self.a}-{self.b} needs a positive latency.")


@frozen
class Topology:
    """An undirected graph with integer per-hop latencies."""

    node_ids: Tuple[str, ...]
    links: Tuple[Link, ...]
    _adjacency: Dict[str, Dict[str, int]] = field(init=False, eq=False, repr=False)

    def __attrs_post_init__(self) -> None:
        adjacency: Dict[str, Dict[str, int]] = {n: {} for n in self.node_ids}
        for link in self.links:
            for u, v in ((link.a, link.b), (link.b, link.a)):
                if u not in adjacency:
                    raise ValueError(f"Link endpoint {u!r} is not a node.")
                adjacency[u][v] = link.latency
        object.__setattr__(self, "_adjacency", adjacency)
        if not self.is_connected():
            logger.warning("Topology is not connected at start.")

    def neighbors(self, node: str) -> List[str]:
        return sorted(self._adjacency[node])

    def latency(self, u: str, v: str) -> int:
        return self._adjacency[u][v]

    def adjacent(self, u: str, v: str) -> bool:
        return v in self._adjacency[u]

    @property
    def max_latency(self) -> int:
        return max((link.latency for link in self.links), default=0)

    def is_connected(self) -> bool:
        if not self.node_ids:
            return True
        seen = {self.node_ids[0]}
        stack = [self.node_ids[0]]
        while stack:
            for v in self._adjacency[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.node_ids)


def random_connected(
    n: int, degree: float, seed: int, latency: int = 1
) -> Topology:
    """
    A connected random graph on `n` nodes with roughly the given mean degree.

    A random spanning tree guarantees connectivity; extra random edges are added
    until the mean degree is reached. Node ids are zero-padded (``n00``, ``n01``,
    ...) so lexicographic and numeric order agree.
    """
    if n < 1:
        raise ValueError("A topology needs at least one node.")
    rng = random.Random(seed)
    width = len(str(n - 1))
    ids = [f"n{i:0{width}d}" for i in range(n)]
    edges = set()
    for i in range(1, n):
        edges.add((rng.randrange(i), i))
    target = min(max(n - 1, round(n * degree / 2)), n * (n - 1) // 2)
    while len(edges) < target:
        a, b = sorted(rng.sample(range(n), 2))
        edges.add((a, b))
    links = tuple(Link(ids[a], ids[b], latency) for a, b in sorted(edges))
    return Topology(tuple(ids), links)


@define
class NodeState:
    node_id: str
    energy: float
    behavior: BehaviorSpec = field(factory=Honest)
    state: Optional[BehaviorState] = None
    role: str = "member"
    routing: Dict[str, str] = field(factory=dict)
    alive: bool = True


@frozen
class RouteReply:
    """One route reply as seen by the source."""

    responder: str
    path: Tuple[str, ...]
    arrival: int
    false_claim: bool

    @property
    def claimed_hops(self) -> int:
        return len(self.path) - 1


@frozen
class RouteDiscovery:
    source: str
    destination: str
    replies: Tuple[RouteReply, ...]
    chosen: Optional[RouteReply]

    @property
    def path(self) -> Optional[Tuple[str, ...]]:
        return self.chosen.path if self.chosen is not None else None

    @property
    def next_hop(self) -> Optional[str]:
        path = self.path
        return path[1] if path is not None else None


def _reached(
    source: str,
    topology: Topology,
    usable: AbstractSet[str],
    relays: AbstractSet[str],
) -> Dict[str, Tuple[int, Tuple[str, ...]]]:
    """
    Where the route request flood gets to: the fastest path to every usable
    node, ties broken by fewer hops, then by lexicographically smaller path.

    Only nodes in `relays` rebroadcast the request.
    """
    best: Dict[str, Tuple[int, Tuple[str, ...]]] = {}
    heap: List[Tuple[int, int, Tuple[str, ...]]] = [(0, 0, (source,))]
    while heap:
        dist, hops, path = heapq.heappop(heap)
        node = path[-1]
        if node in best:
            continue
        best[node] = (dist, path)
        if node != source and node not in relays:
            continue
        for nxt in topology.neighbors(node):
            if nxt in usable and nxt not in best:
                heapq.heappush(
                    heap,
                    (dist + topology.latency(node, nxt), hops + 1, (*path, nxt)),
                )
    return best


def discover_route(
    source: str,
    destination: str,
    topology: Topology,
    behaviors: Mapping[str, BehaviorSpec],
    unusable: Iterable[str] = (),
    now: int = 0,
) -> RouteDiscovery:
    """
    Flood a route request from `source` and pick the reply that wins the race.

    Honest replies come from the destination along the true fastest path and
    take the full round trip. A node advertising false routes answers as soon as
    the request reaches it, claiming to be one hop from the destination (or two,
    through a cooperating partner). The earliest reply wins; ties go to the
    shorter claimed route, then to the lower responder id.

    Nodes in `unusable` (detected or dead) neither relay nor answer.
    """
    unusable = set(unusable)
    usable = {n for n in topology.node_ids if n not in unusable}
    if source == destination:
        raise ValueError("Source and destination must differ.")
    if source not in usable or destination not in usable:
        return RouteDiscovery(source, destination, (), None)

    liars = {
        n
        for n in usable
        if n not in (source, destination)
        and rrep_strategy(behaviors.get(n, Honest()), now)
        is ReplyStrategy.IMMEDIATE_FALSE_REPLY
    }
    relays = usable - liars - {destination}
    reached = _reached(source, topology, usable, relays)

    replies: List[RouteReply] = []
    if destination in reached:
        dist, path = reached[destination]
        replies.append(RouteReply(destination, path, 2 * dist, False))
    for liar in sorted(liars):
        if liar not in reached:
            continue
        dist, path = reached[liar]
        spec = effective_spec(behaviors[liar], now)
        claimed = (*path, destination)
        if isinstance(spec, CooperativeBlackHole):
            partner = next(
                (
                    p
                    for p in sorted(spec.partner_ids)
                    if p in usable
                    and p not in path
                    and p != destination
                    and topology.adjacent(liar, p)
                ),
                None,
            )
            if partner is not None:
                claimed = (*path, partner, destination)
        replies.append(RouteReply(liar, claimed, 2 * dist, True))

    chosen = min(
        replies,
        key=lambda r: (r.arrival, r.claimed_hops, r.responder),
        default=None,
    )
    return RouteDiscovery(source, destination, tuple(replies), chosen)
