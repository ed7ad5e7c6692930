"""Tests for energy accounting and cluster head elections."""

from typing import Dict

from hypothesis import given
from hypothesis.strategies import dictionaries, floats, sampled_from, sets
from pytest import raises

from bhsim.adversary import Honest
from bhsim.cluster import (
    Activity,
    ClusterManager,
    EnergyCosts,
    EnergyRecord,
    EnergyTimerConfig,
    consume_energy,
    elect_head,
    handoff_trust_table,
)
from bhsim.errors import NoEligibleHeadError
from bhsim.sim import NodeState
from bhsim.trust import TrustTable

node_ids = sampled_from(["A", "B", "C", "D", "E", "F"])
energies = floats(min_value=0.0, max_value=1000.0, allow_nan=False)


def _records(energy: Dict[str, float]):
    return [EnergyRecord(n, e) for n, e in energy.items()]


def _nodes(energy: Dict[str, float]) -> Dict[str, NodeState]:
    return {n: NodeState(n, e, Honest()) for n, e in sorted(energy.items())}


def test_elect_max_energy():
    result = elect_head(_records({"A": 50, "B": 80, "C": 80}))
    assert result.head == "B"
    assert result.head_energy == 80


def test_elect_skips_excluded():
    assert elect_head(_records({"A": 50, "B": 80}), {"B"}).head == "A"


def test_elect_nobody_left():
    with raises(NoEligibleHeadError) as exc:
        elect_head(_records({"A": 50}), {"A"})
    assert exc.value.excluded == ("A",)


@given(dictionaries(node_ids, energies, min_size=1), sets(node_ids))
def test_election_invariant(energy: Dict[str, float], excluded):
    """The head has the most energy of the eligible nodes, lowest id on ties."""
    eligible = {n: e for n, e in energy.items() if n not in excluded}
    if not eligible:
        with raises(NoEligibleHeadError):
            elect_head(_records(energy), excluded)
        return
    result = elect_head(_records(energy), excluded)
    top = max(eligible.values())
    assert result.head_energy == top
    assert result.head == min(n for n, e in eligible.items() if e == top)
    assert dict(result.candidates) == eligible


def test_consume_energy_clamps_and_kills():
    node = NodeState("A", 1.2)
    costs = EnergyCosts()
    assert consume_energy(node, Activity.TRANSMIT, costs) == 0.19999999999999996
    assert node.alive
    assert consume_energy(node, Activity.OVERHEAR, costs) == 0.0
    assert not node.alive
    assert consume_energy(node, Activity.TRANSMIT, costs) == 0.0


def test_costs():
    costs = EnergyCosts(2.0, 1.0, 0.5, 0.25)
    assert costs.cost(Activity.TRANSMIT, 3) == 6.0
    assert costs.cost(Activity.RECEIVE) == 1.0
    assert costs.cost(Activity.OVERHEAR) == 0.5
    assert costs.cost(Activity.IDLE_TICK, 10) == 0.25
    with raises(ValueError):
        EnergyCosts(c_tx=-1)


def test_handoff_preserves_state():
    table = TrustTable.for_nodes(["A", "B", "C"], 0.95, 10)
    for _ in range(30):
        table.record_drop("B")
    handed = handoff_trust_table(table, ["A", "B", "C"], 0.95, 10)
    assert handed.lookup("B").streak == 30
    assert handed is not table
    handed.record_drop("C")
    assert table.lookup("C").streak == 0


def test_first_handoff_is_fresh():
    table = handoff_trust_table(None, ["A", "B"], 0.95, 10)
    assert {e.streak for e in table.entries.values()} == {0}


def test_manager_elections():
    nodes = _nodes({"A": 10.0, "B": 30.0, "C": 20.0})
    manager = ClusterManager(EnergyTimerConfig(100), 0.95, 10.0)
    first = manager.elect(nodes, set(), 0)
    assert first.head == "B"
    assert first.term == 1
    assert nodes["B"].role == "head"
    manager.table.record_drop("C")

    nodes["B"].energy = 5.0
    second = manager.elect(nodes, set(), 100)
    assert second.head == "C"
    assert second.term == 2
    assert nodes["B"].role == "member"
    assert manager.table.lookup("C").streak == 1
    assert manager.elections == [first, second]


def test_manager_excludes_dead_nodes():
    nodes = _nodes({"A": 10.0, "B": 30.0})
    nodes["B"].alive = False
    manager = ClusterManager(EnergyTimerConfig(100), 0.95, 10.0)
    assert manager.elect(nodes, set(), 0).head == "A"
    assert manager.head_alive(nodes)


def test_energy_timer_charges_idle():
    nodes = _nodes({"A": 10.0, "B": 1.0})
    manager = ClusterManager(EnergyTimerConfig(50), 0.95, 10.0)
    trigger = manager.on_energy_timer(nodes, EnergyCosts(c_idle=1.0), 200)
    assert trigger.next_expiry == 250
    assert [r.node_id for r in trigger.broadcasts] == ["A"]
    assert not nodes["B"].alive


def test_period_must_be_positive():
    with raises(ValueError):
        EnergyTimerConfig(0)
