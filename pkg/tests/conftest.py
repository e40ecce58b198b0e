import numpy as np
import pytest

from sgsp.environments import build_hart_game
from sgsp.game import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture(scope="session")
def hart():
    return build_hart_game(0.8)


def profile(game, *rows):
    """Policy profile for a single-state game from per-agent probability rows."""
    return [np.array([r], dtype=float) for r in rows]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
