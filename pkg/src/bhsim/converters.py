"""Preconfigured converters for scenario files and reports."""

from __future__ import annotations

from typing import Any, Dict, Mapping, Type

from cattrs import BaseConverter
from cattrs.preconf.json import JsonConverter
from cattrs.preconf.json import make_converter as make_json_converter
from cattrs.preconf.tomlkit import TomlkitConverter
from cattrs.preconf.tomlkit import make_converter as make_tomlkit_converter

from .adversary import BehaviorSpec

__all__ = [
    "BEHAVIOR_TAG",
    "BehaviorError",
    "configure_behaviors",
    "make_report_converter",
    "make_scenario_converter",
]

#: The key naming the behavior class in a `[behaviors.<node>]` table.
BEHAVIOR_TAG = "kind"


class BehaviorError(ValueError):
    """A behavior table names an unknown `kind`, or fails its own checks."""


def configure_behaviors(converter: BaseConverter) -> None:
    """
    Un/structure :data:`BehaviorSpec` as a union tagged by `kind`.

    Member hooks are looked up on every call rather than up front, because
    `Turncoat` nests the union itself and generating its hook eagerly would
    recurse into this very registration.
    """
    tag_to_cl: Dict[str, Type] = {cl.__name__: cl for cl in BehaviorSpec.__args__}

    def structure_behavior(val: Any, _) -> BehaviorSpec:
        if not isinstance(val, Mapping):
            raise TypeError(f"expected a table, got {type(val).__name__}")
        val = dict(val)
        kind = val.pop(BEHAVIOR_TAG)
        try:
            cl = tag_to_cl[kind]
        except (KeyError, TypeError):
            known = ", ".join(tag_to_cl)
            raise BehaviorError(
                f"unknown behavior kind {kind!r}, expected one of {known}"
            ) from None
        try:
            return converter.get_structure_hook(cl)(val, cl)
        except ValueError as exc:
            raise BehaviorError(f"invalid {kind}: {exc}") from exc

    def unstructure_behavior(val: BehaviorSpec) -> Dict[str, Any]:
        res = converter.get_unstructure_hook(val.__class__)(val)
        return {BEHAVIOR_TAG: val.__class__.__name__, **res}

    converter.register_structure_hook(BehaviorSpec, structure_behavior)
    converter.register_unstructure_hook(BehaviorSpec, unstructure_behavior)


def make_scenario_converter() -> TomlkitConverter:
    """The converter scenario files are loaded and echoed with."""
    converter = make_tomlkit_converter(forbid_extra_keys=True)
    configure_behaviors(converter)
    return converter


def make_report_converter() -> JsonConverter:
    return make_json_converter()
