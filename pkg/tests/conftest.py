import numpy as np
import pytest

from memegcn.dataio import gen_synthetic, synthetic_embeddings, build_node_features
from memegcn.labelgraph import adjacency_from_pools
from memegcn.optim import GraphInputs

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_split():
    """Easy synthetic problem shared by the training tests."""
    ds = gen_synthetic(3, 300, 12, 10, separability=2.0)
    train, valid = ds.split(200)
    graph = GraphInputs(build_node_features(synthetic_embeddings(3, 6)), adjacency_from_pools([train.labels]))
    return train, valid, graph


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
