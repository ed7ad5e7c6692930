import pytest

from bhsim.trust import FaultTolerance, TrustTable, compute_tf


@pytest.mark.parametrize("n", [10, 1000])
def test_compute_tf(benchmark, n):
    x = FaultTolerance(0.95)

    benchmark(compute_tf, x, n)


def test_record_drop_and_forward(benchmark):
    nodes = [f"n{i:02d}" for i in range(50)]

    def churn():
        table = TrustTable.for_nodes(nodes, 0.95, 1e-9)
        for _ in range(20):
            for node in nodes:
                table.record_drop(node)
            for node in nodes:
                table.record_forward(node)

    benchmark(churn)
