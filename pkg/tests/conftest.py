import numpy as np
import pytest

from balarm.model import BalarmModel, ClusterParams, ModelSpec


@pytest.fixture
def harmonic_model():
    """Two-cluster K=1, H=2 model on a short period, for fast checks."""
    spec = ModelSpec(n_clusters=2, ar_order=1, harmonic_order=2, period=12)
    clusters = (
        ClusterParams([0.6, -0.3, 0.2, 0.1], [2.5], -1.2),
        ClusterParams([0.9, 0.4, -0.2, 0.3], [3.5], -3.5),
    )
    return BalarmModel(spec, [0.4, 0.6], clusters)


def random_model(gen, G, K, H, P):
    spec = ModelSpec(n_clusters=G, ar_order=K, harmonic_order=H, period=P)
    clusters = tuple(ClusterParams(gen.normal(0, 0.5, 2 * H), gen.normal(1.5, 1.0, K),
                                   gen.uniform(-3, 0)) for _ in range(G))
    pi = gen.dirichlet(np.full(G, 3.0))
    return BalarmModel(spec, pi, clusters)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
