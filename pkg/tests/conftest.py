import numpy as np
import pytest

from bcomd.database import make_session_factory
from bcomd.environment import make_trace, stationary_trace, write_trace
from bcomd.init_db import init_db
from bcomd.policies import make_generator


@pytest.fixture
def rng():
    return make_generator(2024)


@pytest.fixture
def results_dir(tmp_path):
    out = tmp_path / "results"
    out.mkdir()
    return out


@pytest.fixture
def stationary():
    # arm 0 is cheaper and feasible
    return stationary_trace((0.2, 0.8), (-0.5, 0.5), 256)


@pytest.fixture
def alternating():
    losses = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    return make_trace(losses, np.full((4, 2), -0.5))


@pytest.fixture
def stationary_path(tmp_path, stationary):
    return write_trace(stationary, tmp_path / "stationary.trace")


@pytest.fixture
def ledger(tmp_path):
    url = f"sqlite:///{tmp_path / 'ledger.db'}"
    init_db(url)
    return make_session_factory(url)
