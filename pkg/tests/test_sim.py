"""End-to-end simulator runs."""

from typing import Dict, List, Set, Tuple

import pytest
from attrs import evolve

from bhsim.adversary import BlackHole, GrayHole, Honest, OnOff, Turncoat
from bhsim.config import EnergyConfig, ScenarioConfig, WorkloadConfig
from bhsim.metrics import format_log, oracle_replay, recount
from bhsim.sim.engine import Packet, Simulator, run
from bhsim.trust import drops_to_detection

from .scenarios import five_node, graph, honest_line, line


def _simulate(config: ScenarioConfig) -> Simulator:
    sim = Simulator(config)
    sim.run()
    return sim


def _kinds(sim: Simulator, kind: str) -> List:
    return [r for r in sim.log if r.kind == kind]


def _assert_elections_sound(sim: Simulator) -> None:
    detected_at = sim.collector.report(sim.behaviors).detection_time
    for election in sim.cluster.elections:
        top = max(election.candidates.values())
        assert election.head_energy == top
        assert election.head == min(
            n for n, e in election.candidates.items() if e == top
        )
        for node, t in detected_at.items():
            if t < election.elected_at:
                assert node not in election.candidates


def _assert_trust_replays(sim: Simulator) -> None:
    config = sim.config
    states = oracle_replay(sim.log, config.x, config.ttf, list(sim.nodes))
    table = sim.trust_table
    for node, state in states.items():
        assert table.entries[node].streak == state.streak
        assert (node in table.detected) == state.detected
        assert table.entries[node].tf == pytest.approx(state.tf)


def _assert_timers_paired(sim: Simulator) -> None:
    """Every forward timer is either cancelled or fires, exactly once."""
    armed: Dict[Tuple[str, str], int] = {}
    settled: Dict[Tuple[str, str], int] = {}
    for r in sim.log:
        fields = r.fields()
        if r.kind == "Overhear" and fields["role"] != "ack":
            key = (r.seq, fields["to"])
            armed[key] = armed.get(key, 0) + 1
            own = (r.seq, r.subject)
            settled[own] = settled.get(own, 0) + 1
        elif r.kind == "ForwardTimerExpiry" or (
            r.kind == "PacketReceive" and fields["action"] in ("deliver", "duplicate")
        ):
            key = (r.seq, r.subject)
            settled[key] = settled.get(key, 0) + 1
    assert armed
    assert set(armed.values()) == {1}
    for key in armed:
        assert settled.get(key) == 1, key


def _assert_energy_never_rises(sim: Simulator) -> None:
    last: Dict[str, float] = {}
    for r in sim.log:
        if r.kind in ("EnergyBroadcast", "EnergySnapshot"):
            energy = float(r.fields()["energy"])
            assert energy <= last.get(r.subject, energy)
            last[r.subject] = energy
    assert last.keys() == set(sim.nodes)


def _assert_excluded_nodes_are_silent(sim: Simulator) -> None:
    excluded: Set[str] = set()
    for r in sim.log:
        if r.kind == "MaliciousBroadcast":
            excluded.add(r.subject)
        elif r.kind == "PacketReceive":
            assert r.subject not in excluded
        elif r.kind == "RouteReply" and r.fields()["chosen"] == "1":
            assert excluded.isdisjoint(r.fields()["path"].split(","))


def _assert_trace_sound(sim: Simulator) -> None:
    _assert_elections_sound(sim)
    _assert_trust_replays(sim)
    _assert_timers_paired(sim)
    _assert_energy_never_rises(sim)
    _assert_excluded_nodes_are_silent(sim)


def test_packet_labels():
    packet = Packet(5, "S", "D", hop_trace=("S",))
    assert packet.label == "5"
    assert packet.retransmitted().label == "5.1"
    assert packet.hop("M").retransmitted().hop_trace == ("S",)


def test_five_node_detection(five_node_config: ScenarioConfig):
    """The black hole is caught after exactly the analytic number of drops."""
    sim = _simulate(five_node_config)
    report = recount(sim.log, sim.behaviors)

    assert drops_to_detection(0.95, 10.0) == 45
    assert report.drops_before_detection == {"M": 45}
    assert report.detection_time == {"M": 22}
    assert report.packets_sent == 100
    assert report.packets_delivered == 100
    assert report.packets_lost_permanently == 0
    assert report.false_positives == 0
    assert report.false_negatives == 0
    assert report.retransmissions > 45

    broadcasts = _kinds(sim, "MaliciousBroadcast")
    assert [(r.time, r.subject) for r in broadcasts] == [(22, "M")]
    assert broadcasts[0].fields()["streak"] == "45"
    assert "M" in sim.excluded
    _assert_trace_sound(sim)


def test_no_traffic_through_an_excluded_node(five_node_config: ScenarioConfig):
    sim = _simulate(five_node_config)
    after = [
        r
        for r in _kinds(sim, "PacketReceive")
        if r.time > 22 and r.fields()["from"] == "S"
    ]
    assert after
    assert all(r.subject == "B" for r in after)


def test_report_matches_recount(five_node_config: ScenarioConfig):
    sim = Simulator(five_node_config)
    report = sim.run()
    assert report == recount(sim.log, sim.behaviors)
    assert report.conserved
    assert report.elections_held == len(sim.cluster.elections)
    assert set(report.final_energy) == {"B", "C", "D", "M", "S"}


@pytest.mark.parametrize("drop_run", range(1, 61))
def test_on_off_threshold(drop_run: int):
    """An on-off attacker escapes exactly when its drop run is too short."""
    config = line(
        ["S", "M", "D"],
        {"M": OnOff(drop_run, 1)},
        workload=WorkloadConfig(packets=30, interval=50),
    )
    sim = _simulate(config)
    report = sim.collector.report(sim.behaviors)

    assert sim.cluster.elections[0].head == "D"
    if drop_run >= 45:
        assert report.detection_time.keys() == {"M"}
        assert report.drops_before_detection == {"M": 45}
    else:
        assert report.detection_time == {}
        assert report.false_negatives == 1
    assert report.conserved
    _assert_trace_sound(sim)


def test_runs_are_deterministic():
    config = graph(
        ["S", "A", "B", "G", "D"],
        [("S", "A"), ("S", "G"), ("A", "B"), ("B", "D"), ("G", "D")],
        behaviors={"G": GrayHole(0.7)},
        channel_loss_p=0.1,
        seed=1234,
    )
    first = _simulate(config)
    second = _simulate(config)
    assert format_log(first.log) == format_log(second.log)

    other = _simulate(evolve(config, seed=1235))
    assert format_log(first.log) != format_log(other.log)


def test_simulator_runs_once(five_node_config: ScenarioConfig):
    sim = Simulator(five_node_config)
    sim.run()
    with pytest.raises(RuntimeError):
        sim.run()


def test_honest_lossy_line():
    """Channel losses alone never add up to a detection."""
    config = honest_line(
        seed=11, channel_loss_p=0.05, workload=WorkloadConfig(11112, 10)
    )
    sim = _simulate(config)
    report = sim.collector.report(sim.behaviors)

    assert _kinds(sim, "MaliciousBroadcast") == []
    assert report.false_positives == 0
    hops = len(_kinds(sim, "ChannelLoss")) + len(_kinds(sim, "PacketReceive"))
    assert hops >= 100_000
    assert report.conserved
    _assert_trace_sound(sim)


def test_lossless_honest_line():
    report = run(honest_line(workload=WorkloadConfig(20, 3)))
    assert report.packets_delivered == 20
    assert report.retransmissions == 0
    assert report.rtr_count == 0
    assert report.ack_count == 20
    assert report.detection_time == {}


def test_zero_packets():
    sim = Simulator(five_node(workload=WorkloadConfig(packets=0)))
    report = sim.run()
    assert report.packets_sent == 0
    assert report.elections_held == 0
    assert {r.kind for r in sim.log} == {"EnergySnapshot"}


def test_unreachable_destination():
    config = graph(["S", "A", "D"], [("S", "A")], workload=WorkloadConfig(4, 1))
    sim = _simulate(config)
    report = sim.collector.report(sim.behaviors)
    assert report.packets_sent == 4
    assert report.packets_lost_permanently == 4
    lost = _kinds(sim, "PacketLost")
    assert {r.fields()["reason"] for r in lost} == {"no_route"}


def test_isolated_attacker_exhausts_retransmissions():
    """With no honest detour, packets through the black hole run out of attempts."""
    config = line(
        ["S", "M", "D"],
        {"M": BlackHole()},
        workload=WorkloadConfig(packets=3, interval=40),
        max_retransmissions=2,
    )
    sim = _simulate(config)
    report = sim.collector.report(sim.behaviors)
    assert report.packets_lost_permanently == 3
    assert report.packets_delivered == 0
    assert report.drops_before_detection == {"M": 9}
    assert {r.fields()["reason"] for r in _kinds(sim, "PacketLost")} == {"budget"}


def test_head_death_triggers_election():
    config = graph(
        ["S", "M", "B", "C", "D"],
        [("S", "M"), ("M", "D"), ("S", "B"), ("B", "C"), ("C", "D")],
        energy=EnergyConfig(
            initial=10.0,
            initial_overrides={"B": 12.5, "C": 11.0},
            c_tx=0.0,
            c_rx=0.0,
            c_oh=5.0,
        ),
        workload=WorkloadConfig(packets=2, interval=1),
    )
    sim = _simulate(config)
    report = sim.collector.report(sim.behaviors)

    assert [(e.head, e.term, e.elected_at) for e in sim.cluster.elections] == [
        ("B", 1, 0),
        ("C", 2, 2),
    ]
    assert not sim.nodes["B"].alive
    assert sim.nodes["C"].energy == 6.0
    assert report.packets_delivered == 2
    _assert_elections_sound(sim)
    _assert_energy_never_rises(sim)


def test_turncoat_is_caught_after_activation():
    config = graph(
        ["S", "M", "A", "B", "D"],
        [("S", "M"), ("M", "D"), ("S", "A"), ("A", "B"), ("B", "D")],
        behaviors={"M": Turncoat(10, BlackHole())},
    )
    sim = _simulate(config)
    report = sim.collector.report(sim.behaviors)

    first_drop = next(
        r for r in _kinds(sim, "ForwardTimerExpiry") if r.fields()["outcome"] == "drop"
    )
    assert first_drop.time >= 10
    assert report.drops_before_detection == {"M": 45}
    assert report.packets_delivered == 100
    _assert_trace_sound(sim)


def test_benign_gray_hole_is_not_a_false_positive():
    config = graph(
        ["S", "M", "A", "B", "D"],
        [("S", "M"), ("M", "D"), ("S", "A"), ("A", "B"), ("B", "D")],
        behaviors={"M": GrayHole(0.0)},
    )
    report = run(config)
    assert report.false_positives == 0
    assert report.false_negatives == 0
    assert report.drops_before_detection == {}
    assert report.packets_delivered == 100


def test_gray_hole_is_eventually_caught():
    config = graph(
        ["S", "M", "A", "B", "D"],
        [("S", "M"), ("M", "D"), ("S", "A"), ("A", "B"), ("B", "D")],
        behaviors={"M": GrayHole(1.0)},
        ttf=50.0,
    )
    sim = _simulate(config)
    report = sim.collector.report(sim.behaviors)
    assert report.drops_before_detection == {"M": drops_to_detection(0.95, 50.0)}
    assert report.conserved
    _assert_trace_sound(sim)


@pytest.mark.parametrize(
    "behavior, equivalent",
    [(GrayHole(0.0), Honest()), (GrayHole(1.0, True), BlackHole())],
    ids=["never-drops", "always-drops"],
)
def test_gray_hole_extremes_match_fixed_behaviors(behavior, equivalent):
    """A gray hole at probability 0 or 1 leaves the same trace as its fixed twin."""
    logs = [
        format_log(_simulate(five_node(behaviors={"M": b})).log)
        for b in (behavior, equivalent)
    ]
    assert logs[0] == logs[1]


def test_gray_hole_needs_the_same_advertise_flag():
    honest_replies = _simulate(five_node(behaviors={"M": GrayHole(1.0)}))
    black_hole = _simulate(five_node())
    assert format_log(honest_replies.log) != format_log(black_hole.log)
