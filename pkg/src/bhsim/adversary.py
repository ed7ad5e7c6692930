"""Per-packet behavior models for honest and malicious nodes."""

from __future__ import annotations

import random
from enum import Enum
from typing import Tuple, Union

from attrs import Attribute, define, field, frozen
from attrs.validators import ge, gt, instance_of

__all__ = [
    "Action",
    "BehaviorSpec",
    "BehaviorState",
    "BlackHole",
    "CooperativeBlackHole",
    "GrayHole",
    "Honest",
    "OnOff",
    "ReplyStrategy",
    "Turncoat",
    "decide_action",
    "effective_spec",
    "is_benign",
    "node_stream",
    "rrep_strategy",
]


class Action(str, Enum):
    FORWARD = "forward"
    DROP = "drop"


class ReplyStrategy(str, Enum):
    """How a node answers a route request."""

    HONEST_REPLY = "honest_reply"
    IMMEDIATE_FALSE_REPLY = "immediate_false_reply"


def _never_lies(_, attribute: Attribute, value: bool) -> None:
    if value:
        raise ValueError(f"'{attribute.name}' cannot be set for an honest node")


def _probability(_, attribute: Attribute, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"'{attribute.name}' must be in [0, 1] (got {value!r})")


@frozen
class Honest:
    advertise_false_route: bool = field(default=False, validator=_never_lies)


@frozen
class BlackHole:
    """Claims the shortest route, then drops everything it receives."""

    advertise_false_route: bool = True


@frozen
class GrayHole:
    """Drops each packet independently with `drop_probability`."""

    drop_probability: float = field(converter=float, validator=_probability)
    advertise_false_route: bool = False


@frozen
class OnOff:
    """Drops `drop_run` packets, then forwards `forward_run`, forever."""

    drop_run: int = field(validator=[instance_of(int), gt(0)])
    forward_run: int = field(validator=[instance_of(int), gt(0)])
    advertise_false_route: bool = False


@frozen
class Turncoat:
    """Behaves honestly until `activation_time`, then like `then`."""

    activation_time: int = field(validator=[instance_of(int), ge(0)])
    then: BehaviorSpec
    advertise_false_route: bool = False


@frozen
class CooperativeBlackHole:
    """A black hole that vouches for its `partner_ids` during route discovery."""

    partner_ids: Tuple[str, ...] = field(converter=tuple, default=())
    advertise_false_route: bool = True


BehaviorSpec = Union[Honest, BlackHole, GrayHole, OnOff, Turncoat, CooperativeBlackHole]


@define
class BehaviorState:
    """Mutable per-node decision state; one per node per simulation."""

    rng: random.Random
    handled: int = 0


def node_stream(seed: int, node_id: str) -> random.Random:
    """
    An independent random stream for `node_id`.

    Derived from the scenario seed and the node id only, so adding a node
    never perturbs the decisions of the others.
    """
    return random.Random(f"{seed}:{node_id}")


def effective_spec(spec: BehaviorSpec, now: int) -> BehaviorSpec:
    """Resolve turncoats: the behavior actually in force at `now`."""
    while isinstance(spec, Turncoat):
        if now < spec.activation_time:
            return Honest()
        spec = spec.then
    return spec


def is_benign(spec: BehaviorSpec) -> bool:
    """Whether declaring a node with this behavior malicious is a false positive."""
    return isinstance(spec, Honest) or (
        isinstance(spec, GrayHole) and spec.drop_probability == 0.0
    )


def decide_action(
    spec: BehaviorSpec, state: BehaviorState, now: int
) -> Action:
    """Decide whether a node forwards the packet it just received at `now`."""
    spec = effective_spec(spec, now)
    index = state.handled
    state.handled += 1
    if isinstance(spec, Honest):
        return Action.FORWARD
    if isinstance(spec, (BlackHole, CooperativeBlackHole)):
        return Action.DROP
    if isinstance(spec, GrayHole):
        # Always draw, so p=0 and p=1 consume the stream identically.
        draw = state.rng.random()
        return Action.DROP if draw < spec.drop_probability else Action.FORWARD
    if isinstance(spec, OnOff):
        position = index % (spec.drop_run + spec.forward_run)
        return Action.DROP if position < spec.drop_run else Action.FORWARD
    raise TypeError(f"Unsupported behavior: {spec!r}")


def rrep_strategy(spec: BehaviorSpec, now: int = 0) -> ReplyStrategy:
    spec = effective_spec(spec, now)
    if spec.advertise_false_route:
        return ReplyStrategy.IMMEDIATE_FALSE_REPLY
    return ReplyStrategy.HONEST_REPLY
