import numpy as np
import pytest

from netslab.design import Dataset
from netslab.graph import GeneNetwork
from netslab.vbem import StructuredModel

# Small network layouts used across the suite: (gene list, edge list) per network.
LAYOUTS = {
    "path3": [(["a", "b", "c"], [("a", "b"), ("b", "c")])],
    "tri+pair": [(["a", "b", "c"], [("a", "b")]), (["d", "e"], [("d", "e")])],
    "two3": [(["a", "b", "c"], [("a", "b"), ("a", "c")]), (["d", "e", "f"], [("d", "e")])],
    "single": [(["a"], [])],
}


def make_networks(layout):
    return [GeneNetwork.from_ids(f"N{k}", nodes, edges) for k, (nodes, edges) in enumerate(LAYOUTS[layout])]


def make_problem(rng, layout="path3", n=50, coef=None, noise_sd=1.0, networks=None):
    """Random Gaussian genes; y from the expanded design with coefficient dict {slot: value}."""
    networks = networks or make_networks(layout)
    genes = sorted({g for net in networks for g in net.nodes})
    X = rng.standard_normal((n, len(genes)))
    probe = StructuredModel.build(Dataset(X, np.zeros(n), genes), networks)
    w = np.zeros(probe.P)
    for j, v in (coef or {}).items():
        w[j] = v
    y = probe.design.Xt.T @ w + noise_sd * rng.standard_normal(n)
    data = Dataset(X, y, genes)
    return data, networks, StructuredModel.build(data, networks), w


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE[key])
