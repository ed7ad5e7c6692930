"""Parameter sweeps over fault tolerance, threshold and seed."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import tomlkit
from attrs import field, frozen
from cattrs import BaseValidationError
from tomlkit.exceptions import TOMLKitError

from .config import ScenarioConfig, converter, unstructure_config, with_parameters
from .errors import ConfigValidationError, SweepRunError
from .metrics import report_row
from .sim.engine import run

__all__ = [
    "SweepPoint",
    "SweepSpec",
    "format_rows",
    "load_sweep_spec",
    "run_point",
    "run_sweep",
]

logger = logging.getLogger(__name__)


def _sorted_tuple(values: Iterable[Any]) -> Tuple[Any, ...]:
    return tuple(sorted(set(values)))


@frozen
class SweepSpec:
    """
    The grid to sweep. Each axis is deduplicated and sorted ascending; an
    empty axis falls back to the base scenario's value.
    """

    x: Tuple[float, ...] = field(default=(), converter=_sorted_tuple)
    ttf: Tuple[float, ...] = field(default=(), converter=_sorted_tuple)
    seed: Tuple[int, ...] = field(default=(), converter=_sorted_tuple)

    def points(self, base: ScenarioConfig) -> List[SweepPoint]:
        """The grid in lexicographic `(x, ttf, seed)` order."""
        xs = self.x or (base.x,)
        ttfs = self.ttf or (base.ttf,)
        seeds = self.seed or (base.seed,)
        return [SweepPoint(*p) for p in product(xs, ttfs, seeds)]


@frozen
class SweepPoint:
    x: float
    ttf: float
    seed: int


def load_sweep_spec(path: Union[str, Path]) -> SweepSpec:
    """
    Read a sweep spec: a TOML document with optional `x`, `ttf` and `seed`
    arrays, either at the top level or under a `[sweep]` table.
    """
    try:
        raw = tomlkit.loads(Path(path).read_text(encoding="utf8")).unwrap()
    except TOMLKitError as exc:
        raise ConfigValidationError.from_messages(
            [f"invalid TOML ({exc}) @ $"], "invalid sweep spec"
        ) from exc
    raw = raw.get("sweep", raw)
    try:
        return converter.structure(raw, SweepSpec)
    except (BaseValidationError, TypeError, ValueError) as exc:
        raise ConfigValidationError.from_messages(
            [f"invalid sweep spec ({exc}) @ $"], "invalid sweep spec"
        ) from exc


def run_point(base: ScenarioConfig, point: SweepPoint) -> Dict[str, Any]:
    """Run one grid point; the row starts with the point's coordinates."""
    try:
        config = with_parameters(base, x=point.x, ttf=point.ttf, seed=point.seed)
    except ConfigValidationError as exc:
        raise SweepRunError(
            f"sweep point {point} is invalid: {'; '.join(exc.errors)}",
            unstructure_config(base),
            exc,
        ) from exc
    try:
        report = run(config)
    except Exception as exc:
        raise SweepRunError(
            f"sweep point {point} failed: {exc}", unstructure_config(config), exc
        ) from exc
    logger.info(
        "x=%r ttf=%r seed=%d: %d/%d delivered.",
        point.x,
        point.ttf,
        point.seed,
        report.packets_delivered,
        report.packets_sent,
    )
    return {"x": point.x, "ttf": point.ttf, "seed": point.seed, **report_row(report)}


def _run_packed(args: Tuple[ScenarioConfig, SweepPoint]) -> Dict[str, Any]:
    return run_point(*args)


def run_sweep(
    base: ScenarioConfig, spec: SweepSpec, jobs: int = 1
) -> List[Dict[str, Any]]:
    """
    Run every grid point and return the rows in grid order.

    With `jobs` > 1 the points run in worker processes; the rows are identical
    to a serial sweep. The first failing point aborts the sweep.
    """
    points = spec.points(base)
    logger.info("Sweeping %d points with %d job(s).", len(points), jobs)
    if jobs <= 1:
        return [run_point(base, p) for p in points]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_packed, [(base, p) for p in points]))


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_rows(
    rows: Sequence[Mapping[str, Any]], columns: Optional[Sequence[str]] = None
) -> str:
    """
    Render rows as CSV. Columns default to the union of the row keys in
    first-seen order; missing cells are left empty.
    """
    if columns is None:
        seen: Dict[str, None] = {}
        for row in rows:
            seen.update(dict.fromkeys(row))
        columns = list(seen)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) if c in row else "" for c in columns])
    return buffer.getvalue()
