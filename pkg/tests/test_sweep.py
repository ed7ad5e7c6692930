"""Tests for parameter sweeps."""

import csv
import io
from pathlib import Path

import pytest

from bhsim.errors import ConfigValidationError, SweepRunError
from bhsim.metrics import report_row
from bhsim.sim.engine import run
from bhsim.sweep import (
    SweepPoint,
    SweepSpec,
    format_rows,
    load_sweep_spec,
    run_point,
    run_sweep,
)

from .scenarios import five_node


def test_grid_order():
    spec = SweepSpec(x=[0.95, 0.9, 0.95], seed=[2, 1])
    base = five_node()
    assert spec.x == (0.9, 0.95)
    assert spec.points(base) == [
        SweepPoint(0.9, 10.0, 1),
        SweepPoint(0.9, 10.0, 2),
        SweepPoint(0.95, 10.0, 1),
        SweepPoint(0.95, 10.0, 2),
    ]


def test_empty_axes_use_the_base():
    assert SweepSpec().points(five_node()) == [SweepPoint(0.95, 10.0, 7)]


def test_load_sweep_spec(scenarios_dir: Path, tmp_path: Path):
    spec = load_sweep_spec(scenarios_dir / "sweep.toml")
    assert spec == SweepSpec(x=(0.9, 0.95), ttf=(10.0,), seed=(1, 2))

    top_level = tmp_path / "top.toml"
    top_level.write_text("seed = [3]\n")
    assert load_sweep_spec(top_level) == SweepSpec(seed=(3,))


def test_load_sweep_spec_errors(tmp_path: Path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[sweep]\ndelay = [1]\n")
    with pytest.raises(ConfigValidationError):
        load_sweep_spec(bad)

    bad.write_text("x = [\n")
    with pytest.raises(ConfigValidationError):
        load_sweep_spec(bad)


def test_detection_follows_x():
    rows = run_sweep(five_node(), SweepSpec(x=(0.9, 0.95)))
    assert [(r["x"], r["drops_before_detection.M"]) for r in rows] == [
        (0.9, 22),
        (0.95, 45),
    ]
    assert all(r["packets_delivered"] == 100 for r in rows)


def test_point_matches_a_single_run():
    base = five_node()
    row = run_point(base, SweepPoint(0.95, 10.0, 7))
    assert row == {"x": 0.95, "ttf": 10.0, "seed": 7, **report_row(run(base))}


def test_invalid_point():
    with pytest.raises(SweepRunError) as exc:
        run_point(five_node(), SweepPoint(1.5, 10.0, 7))
    assert "must be in (0, 1) @ $.x" in str(exc.value)
    assert exc.value.config["source"] == "S"


def test_parallel_sweep_matches_serial():
    spec = SweepSpec(x=(0.9, 0.95), seed=(1, 2))
    serial = run_sweep(five_node(), spec)
    assert run_sweep(five_node(), spec, jobs=2) == serial


def test_format_rows():
    rows = [{"x": 0.95, "n": 1}, {"x": 0.1 + 0.2, "n": 2, "extra": "y"}]
    text = format_rows(rows)
    assert text.splitlines()[0] == "x,n,extra"
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert parsed[0] == {"x": "0.95", "n": "1", "extra": ""}
    assert float(parsed[1]["x"]) == 0.1 + 0.2
    assert format_rows(rows, ["n"]) == "n\n1\n2\n"
