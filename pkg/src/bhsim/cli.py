"""The `bhsim` command line: run, table, curve and sweep."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import tomlkit

from .config import ScenarioConfig, dump_config, load_config
from .converters import make_report_converter
from .errors import BhsimError, ConfigValidationError, SweepRunError
from .metrics import MetricsReport, report_row, write_log
from .sim.engine import Simulator
from .sweep import SweepSpec, format_rows, load_sweep_spec, run_sweep
from .trust import FaultTolerance, compute_tf

__all__ = ["TABLE_ROWS", "cmd_curve", "cmd_run", "cmd_sweep", "cmd_table", "main"]

logger = logging.getLogger(__name__)

#: The streak lengths tabulated by default.
TABLE_ROWS = (1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 200, 300, 500, 1000)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2

OUT_ENV = "BHS_OUT"
DEFAULT_OUT = "bhsim-out"

report_converter = make_report_converter()


def cmd_table(x: float, n_list: Sequence[int] = TABLE_ROWS) -> List[Dict[str, Any]]:
    """Trust factor rows for the given streak lengths."""
    if not n_list:
        raise ValueError("at least one streak length is required")
    fault_tolerance = FaultTolerance(x)
    return [{"n": n, "tf": compute_tf(fault_tolerance, n)} for n in n_list]


def cmd_curve(xs: Sequence[float], n_max: int = 100) -> List[Dict[str, Any]]:
    """
    The trust factor curve for `n` = 0..`n_max`, one series per `x`.

    With a single `x` the rows are ``(n, tf)``; with several, ``(x, n, tf)``.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be at least 1 (got {n_max})")
    rows = []
    for x in xs:
        for row in cmd_table(x, range(n_max + 1)):
            rows.append(row if len(xs) == 1 else {"x": x, **row})
    return rows


def report_json(report: MetricsReport) -> str:
    return report_converter.dumps(report, indent=2) + "\n"


def cmd_run(config: ScenarioConfig, out: Path, fmt: str = "json") -> MetricsReport:
    """
    Simulate `config`, writing ``events.log``, ``report.json`` and the
    canonical ``config.toml`` echo (plus ``report.csv`` for the csv format).
    """
    simulator = Simulator(config)
    report = simulator.run()
    out.mkdir(parents=True, exist_ok=True)
    with (out / "events.log").open("w", encoding="utf8", newline="\n") as f:
        write_log(simulator.log, f)
    (out / "report.json").write_text(report_json(report), encoding="utf8")
    (out / "config.toml").write_text(dump_config(config), encoding="utf8")
    if fmt == "csv":
        (out / "report.csv").write_text(
            format_rows([report_row(report)]), encoding="utf8"
        )
    logger.info("Wrote results to %s.", out)
    return report


def cmd_sweep(
    config: ScenarioConfig, spec: SweepSpec, out: Path, jobs: int = 1, fmt: str = "csv"
) -> List[Dict[str, Any]]:
    rows = run_sweep(config, spec, jobs)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_config(config), encoding="utf8")
    if fmt == "json":
        (out / "sweep.json").write_text(
            json.dumps(rows, indent=2) + "\n", encoding="utf8"
        )
    else:
        (out / "sweep.csv").write_text(format_rows(rows), encoding="utf8")
    return rows


def _emit(rows: List[Dict[str, Any]], fmt: str, out: Optional[str], name: str) -> None:
    text = json.dumps(rows, indent=2) + "\n" if fmt == "json" else format_rows(rows)
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    (path / f"{name}.{fmt}").write_text(text, encoding="utf8")


def _sweep_spec(args: argparse.Namespace) -> SweepSpec:
    spec = load_sweep_spec(args.sweep_spec) if args.sweep_spec else SweepSpec()
    grids = {"x": spec.x, "ttf": spec.ttf, "seed": spec.seed}
    for grid in args.grid:
        key, sep, values = grid.partition("=")
        if not sep or key not in grids:
            raise ConfigValidationError.from_messages(
                [f"grid {grid!r} must be x=, ttf= or seed= @ $"], "invalid sweep spec"
            )
        cast = int if key == "seed" else float
        try:
            grids[key] = tuple(cast(v) for v in values.split(","))
        except ValueError:
            raise ConfigValidationError.from_messages(
                [f"grid {grid!r} has a malformed value @ $.{key}"], "invalid sweep spec"
            ) from None
    return SweepSpec(**grids)


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _load(args: argparse.Namespace) -> ScenarioConfig:
    if args.config is None:
        raise ConfigValidationError.from_messages(["--config is required @ $"])
    return load_config(args.config, args.override, args.seed)


def _run(args: argparse.Namespace) -> int:
    if args.command == "table":
        rows = cmd_table(args.x, args.n or TABLE_ROWS)
        _emit(rows, args.format or "csv", args.out, "table")
    elif args.command == "curve":
        rows = cmd_curve(args.x or [0.95], args.n_max)
        _emit(rows, args.format or "csv", args.out, "curve")
    elif args.command == "run":
        cmd_run(_load(args), _out_dir(args), args.format or "json")
    elif args.command == "sweep":
        config = _load(args)
        cmd_sweep(
            config, _sweep_spec(args), _out_dir(args), args.jobs, args.format or "csv"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario TOML file")
    common.add_argument(
        "--out", metavar="DIR", help=f"output directory (default: ${OUT_ENV})"
    )
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument(
        "--override",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        help="set a dotted config key, repeatable",
    )
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="bhsim", description="Trust-based black hole detection simulator."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate one scenario")

    table = sub.add_parser("table", parents=[common], help="tabulate trust factors")
    table.add_argument("--x", type=float, default=0.95, help="fault tolerance")
    table.add_argument(
        "--n", type=int, action="append", help="streak length, repeatable"
    )

    curve = sub.add_parser("curve", parents=[common], help="trust factor curve")
    curve.add_argument(
        "--x", type=float, action="append", help="fault tolerance, repeatable"
    )
    curve.add_argument("--n-max", type=int, default=100)

    sweep = sub.add_parser("sweep", parents=[common], help="run a parameter grid")
    sweep.add_argument(
        "--sweep-spec", metavar="PATH", help="TOML file with x, ttf and seed grids"
    )
    sweep.add_argument(
        "--grid",
        metavar="AXIS=V1,V2",
        action="append",
        default=[],
        help="grid values for x, ttf or seed, repeatable",
    )
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    return parser


def _configure_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        return _run(args)
    except ConfigValidationError as exc:
        sys.stderr.write(f"error: {exc.message}\n")
        for message in exc.errors:
            sys.stderr.write(f"  {message}\n")
        return EXIT_INVALID
    except SweepRunError as exc:
        sys.stderr.write(f"error: {exc}\n")
        sys.stderr.write("failing configuration:\n")
        sys.stderr.write(tomlkit.dumps(exc.config))
        return EXIT_ERROR
    except (BhsimError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        logger.debug("Traceback:", exc_info=True)
        return EXIT_ERROR
    except Exception:
        logger.exception("Internal error.")
        return EXIT_ERROR
