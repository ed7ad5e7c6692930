"""
Scenario configuration: TOML files, dotted overrides and validation.

A scenario is loaded in three steps. The TOML document is parsed and the
``--override`` pairs are applied to the raw mapping; the result is structured
into a :class:`ScenarioConfig` by a cattrs converter; finally the semantic
constraints are checked. Any failure in the last two steps raises a
:class:`ConfigValidationError` listing every violation as ``msg @ $.path``.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import tomlkit
from attrs import Factory, evolve, field, frozen
from cattrs import BaseValidationError
from cattrs.v import format_exception, transform_error
from tomlkit.exceptions import TOMLKitError

from .adversary import BehaviorSpec, CooperativeBlackHole, Turncoat
from .cluster import EnergyCosts
from .converters import BehaviorError, make_scenario_converter
from .errors import ConfigValidationError
from .sim.topology import Link, Topology, random_connected

__all__ = [
    "EdgeConfig",
    "EnergyConfig",
    "GeneratorConfig",
    "ScenarioConfig",
    "TopologyConfig",
    "WorkloadConfig",
    "apply_overrides",
    "dump_config",
    "load_config",
    "parse_config",
    "structure_config",
    "unstructure_config",
    "validate_config",
    "with_parameters",
]

logger = logging.getLogger(__name__)

converter = make_scenario_converter()

_SEED_LIMIT = 2**64
# Separators of the event log format.
_RESERVED = frozenset("=,")


@frozen
class EdgeConfig:
    a: str
    b: str
    latency: int = 1


@frozen
class GeneratorConfig:
    """Parameters of a random connected topology."""

    n: int
    degree: float = 3.0
    seed: int = 0
    latency: int = 1


@frozen
class TopologyConfig:
    """Either an explicit node and edge list, or a generator."""

    nodes: Tuple[str, ...] = ()
    edges: Tuple[EdgeConfig, ...] = ()
    generator: Optional[GeneratorConfig] = None

    def node_ids(self) -> Tuple[str, ...]:
        if self.generator is not None:
            width = len(str(self.generator.n - 1))
            return tuple(f"n{i:0{width}d}" for i in range(self.generator.n))
        return self.nodes

    def build(self) -> Topology:
        if self.generator is not None:
            g = self.generator
            return random_connected(g.n, g.degree, g.seed, g.latency)
        return Topology(
            self.nodes, tuple(Link(e.a, e.b, e.latency) for e in self.edges)
        )

    def max_latency(self) -> int:
        if self.generator is not None:
            return self.generator.latency
        return max((e.latency for e in self.edges), default=0)


@frozen
class EnergyConfig:
    initial: float = 100_000.0
    initial_overrides: Dict[str, float] = Factory(dict)
    c_tx: float = 1.0
    c_rx: float = 0.5
    c_oh: float = 0.75
    c_idle: float = 0.0

    @property
    def costs(self) -> EnergyCosts:
        return EnergyCosts(self.c_tx, self.c_rx, self.c_oh, self.c_idle)

    def initial_for(self, node_id: str) -> float:
        return self.initial_overrides.get(node_id, self.initial)


@frozen
class WorkloadConfig:
    """`packets` data packets, one every `interval` ticks."""

    packets: int = 100
    interval: int = 1


@frozen(kw_only=True)
class ScenarioConfig:
    seed: int = 0
    source: str
    destinations: Tuple[str, ...]
    x: float = 0.95
    ttf: float = 10.0
    delay_tr: int = 4
    period_te: int = 100
    channel_loss_p: float = 0.0
    max_retransmissions: int = 5
    topology: TopologyConfig
    energy: EnergyConfig = field(factory=EnergyConfig)
    workload: WorkloadConfig = field(factory=WorkloadConfig)
    behaviors: Dict[str, BehaviorSpec] = field(factory=dict)


def _format_exception(exc: BaseException, type: Union[type, None]) -> str:
    # Behavior tags and attrs validators carry their own wording.
    if isinstance(exc, BehaviorError) or (
        type is None and isinstance(exc, ValueError) and exc.args
    ):
        return str(exc.args[0])
    return format_exception(exc, type)


def structure_config(raw: Mapping[str, Any]) -> ScenarioConfig:
    """
    Structure a raw mapping, reporting every structural problem at once.

    :raises ConfigValidationError: with one message per problem.
    """
    try:
        return converter.structure(raw, ScenarioConfig)
    except BaseValidationError as exc:
        raise ConfigValidationError.from_messages(
            transform_error(exc, format_exception=_format_exception)
        ) from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigValidationError.from_messages(
            [f"{_format_exception(exc, None)} @ $"]
        ) from exc


def _check(errors: List[str], ok: bool, message: str, path: str) -> None:
    if not ok:
        errors.append(f"{message} @ {path}")


def _node_refs(spec: BehaviorSpec) -> Iterable[str]:
    while isinstance(spec, Turncoat):
        spec = spec.then
    if isinstance(spec, CooperativeBlackHole):
        yield from spec.partner_ids


def _validate_topology(errors: List[str], topology: TopologyConfig) -> None:
    if topology.generator is not None:
        g = topology.generator
        _check(
            errors,
            not topology.nodes and not topology.edges,
            "use either a generator or explicit nodes and edges, not both",
            "$.topology",
        )
        _check(errors, g.n >= 2, "must be at least 2", "$.topology.generator.n")
        _check(errors, g.degree > 0, "must be positive", "$.topology.generator.degree")
        _check(
            errors, g.latency > 0, "must be positive", "$.topology.generator.latency"
        )
        return
    nodes = topology.nodes
    _check(errors, len(nodes) >= 2, "at least 2 nodes are required", "$.topology.nodes")
    seen = set()
    for i, node in enumerate(nodes):
        path = f"$.topology.nodes[{i}]"
        _check(errors, node not in seen, f"duplicate node {node!r}", path)
        if not node.strip():
            errors.append(f"node ids cannot be blank @ {path}")
        elif any(c.isspace() or c in _RESERVED for c in node):
            errors.append(f"node ids cannot contain whitespace, '=' or ',' @ {path}")
        seen.add(node)
    pairs = set()
    for i, edge in enumerate(topology.edges):
        path = f"$.topology.edges[{i}]"
        for end in (edge.a, edge.b):
            _check(errors, end in seen, f"unknown node {end!r}", path)
        _check(errors, edge.a != edge.b, "self-links are not allowed", path)
        _check(errors, edge.latency > 0, "must be positive", f"{path}.latency")
        pair = frozenset((edge.a, edge.b))
        _check(errors, pair not in pairs, "duplicate edge", path)
        pairs.add(pair)


def validate_config(config: ScenarioConfig) -> List[str]:
    """Every semantic constraint `config` violates, as ``msg @ $.path`` strings."""
    errors: List[str] = []
    _check(
        errors,
        0 <= config.seed < _SEED_LIMIT,
        "must be an unsigned 64-bit integer",
        "$.seed",
    )
    _check(errors, 0.0 < config.x < 1.0, "must be in (0, 1)", "$.x")
    _check(errors, 0.0 < config.ttf < 100.0, "must be in (0, 100)", "$.ttf")
    _check(errors, config.period_te > 0, "must be positive", "$.period_te")
    _check(
        errors,
        0.0 <= config.channel_loss_p <= 1.0,
        "must be in [0, 1]",
        "$.channel_loss_p",
    )
    _check(
        errors,
        config.max_retransmissions >= 0,
        "must be non-negative",
        "$.max_retransmissions",
    )
    _validate_topology(errors, config.topology)

    max_latency = config.topology.max_latency()
    _check(
        errors,
        config.delay_tr > 2 * max_latency,
        f"must exceed twice the largest link latency ({2 * max_latency})",
        "$.delay_tr",
    )

    nodes = set(config.topology.node_ids())
    _check(
        errors, config.source in nodes, f"unknown node {config.source!r}", "$.source"
    )
    _check(
        errors,
        bool(config.destinations),
        "at least one destination is required",
        "$.destinations",
    )
    for i, dest in enumerate(config.destinations):
        path = f"$.destinations[{i}]"
        _check(errors, dest in nodes, f"unknown node {dest!r}", path)
        _check(errors, dest != config.source, "cannot be the source", path)

    energy = config.energy
    _check(errors, energy.initial > 0, "must be positive", "$.energy.initial")
    for name in ("c_tx", "c_rx", "c_oh", "c_idle"):
        path = f"$.energy.{name}"
        _check(errors, getattr(energy, name) >= 0, "must be non-negative", path)
    for node, value in energy.initial_overrides.items():
        path = f"$.energy.initial_overrides[{node!r}]"
        _check(errors, node in nodes, f"unknown node {node!r}", path)
        _check(errors, value > 0, "must be positive", path)

    workload = config.workload
    _check(errors, workload.packets >= 0, "must be non-negative", "$.workload.packets")
    _check(errors, workload.interval > 0, "must be positive", "$.workload.interval")

    for node, spec in config.behaviors.items():
        path = f"$.behaviors[{node!r}]"
        _check(errors, node in nodes, f"unknown node {node!r}", path)
        _check(errors, node != config.source, "the source must be honest", path)
        for partner in _node_refs(spec):
            _check(errors, partner in nodes, f"unknown partner {partner!r}", path)
    return errors


def _parse_value(text: str) -> Any:
    """A TOML scalar or array; anything else is taken as a bare string."""
    try:
        return tomlkit.parse(f"v = {text}")["v"].unwrap()
    except TOMLKitError:
        return text


def apply_overrides(raw: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """
    Apply ``dotted.key=value`` overrides to a raw scenario mapping, in place.

    :raises ConfigValidationError: if an override is not a ``key=value`` pair.
    """
    errors = []
    for override in overrides:
        key, sep, value = override.partition("=")
        key = key.strip()
        if not sep or not key:
            errors.append(f"override {override!r} is not key=value @ $")
            continue
        *parents, leaf = key.split(".")
        target = raw
        for part in parents:
            nxt = target.setdefault(part, {})
            if not isinstance(nxt, dict):
                errors.append(f"{part!r} is not a table @ $.{key}")
                break
            target = nxt
        else:
            target[leaf] = _parse_value(value.strip())
            logger.debug("Override %s = %r.", key, target[leaf])
    if errors:
        raise ConfigValidationError.from_messages(errors)
    return raw


def parse_config(
    text: str, overrides: Iterable[str] = (), seed: Optional[int] = None
) -> ScenarioConfig:
    """
    Parse, override, structure and validate a scenario document.

    :raises ConfigValidationError: listing every problem found.
    """
    try:
        raw = tomlkit.loads(text).unwrap()
    except TOMLKitError as exc:
        raise ConfigValidationError.from_messages(
            [f"invalid TOML ({exc}) @ $"]
        ) from exc
    apply_overrides(raw, overrides)
    if seed is not None:
        raw["seed"] = seed
    config = structure_config(raw)
    errors = validate_config(config)
    if errors:
        raise ConfigValidationError.from_messages(errors)
    return config


def load_config(
    path: Union[str, Path], overrides: Iterable[str] = (), seed: Optional[int] = None
) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf8")
    config = parse_config(text, overrides, seed)
    logger.info("Loaded scenario %s (seed %d).", path, config.seed)
    return config


def _strip_none(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _strip_none(v) for k, v in value.items() if v is not None}
    if isinstance(value, list):
        return [_strip_none(v) for v in value]
    return value


def unstructure_config(config: ScenarioConfig) -> Dict[str, Any]:
    """The plain mapping form, scalars before tables, with no `None` values."""
    raw = _strip_none(converter.unstructure(config))
    scalars = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in raw.items() if isinstance(v, dict)}
    return {**scalars, **tables}


def dump_config(config: ScenarioConfig) -> str:
    """The canonical TOML echo; loading it reproduces `config` exactly."""
    return tomlkit.dumps(unstructure_config(config))


def with_parameters(config: ScenarioConfig, **changes: Any) -> ScenarioConfig:
    """A copy of `config` with top-level parameters replaced and revalidated."""
    config = evolve(config, **changes)
    errors = validate_config(config)
    if errors:
        raise ConfigValidationError.from_messages(errors)
    return config
