import time

import numpy as np
import pytest

from piac.controllers import ControllerGains
from piac.dynamics import integrate
from piac.netmodel import Edge, Node, NodeKind, PowerNetwork, from_area_lists, per_node, single_area
from piac.scenario_io import builtin_ieee39, load_scenario

M, F, P = NodeKind.MACHINE, NodeKind.FREQ_DEPENDENT, NodeKind.PASSIVE

SECTION_GAINS = dict(k1=0.4, k2=1.6, k3=10.0)


def five_node_network(injection=(0.5, 0.3, -0.2, -0.4, -0.2)):
    nodes = (
        Node(1, M, 2.0, 1.0, injection[0], 0.8),
        Node(2, M, 3.0, 1.5, injection[1], 0.5),
        Node(3, F, 0.0, 1.2, injection[2], 0.3),
        Node(4, F, 0.0, 0.8, injection[3], 0.9),
        Node(5, P, 0.0, 0.0, injection[4]),
    )
    edges = (Edge(1, 2, 2.0), Edge(2, 3, 1.5), Edge(3, 4, 2.5), Edge(4, 5, 1.8), Edge(1, 5, 2.2))
    return PowerNetwork(nodes, edges)


def five_node_partitions(net):
    return {
        "gbpiac": single_area(net),
        "dpiac": per_node(net),
        "mlpiac": from_area_lists(net, {1: [1, 3, 5], 2: [2, 4]}, {(1, 2): 1.0}),
    }


@pytest.fixture
def five():
    net = five_node_network()
    return net, five_node_partitions(net)


@pytest.fixture(scope="session")
def ieee39():
    net, parts = builtin_ieee39()
    _, _, spec = load_scenario("scenario_fig3.json")
    return net, parts, spec


@pytest.fixture(scope="session")
def ieee39_runs(ieee39):
    """One 70 s run per variant at the case-study gains; shared by the slow tests."""
    net, parts, spec = ieee39
    runs = {}
    for v in ("gbpiac", "dpiac", "mlpiac"):
        g = ControllerGains(variant=v, **SECTION_GAINS)
        t0 = time.perf_counter()
        runs[v] = integrate(net, parts[v], g, spec.disturbances, t_end=70.0, dt=1e-3)
        runs[v].meta["wall_s"] = time.perf_counter() - t0
    return runs


ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
