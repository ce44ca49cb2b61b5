import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nashplay.game import make_random_game
from nashplay.rng import make_rng

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def tiny_game():
    """(H=2, S=2, A=B=2) random game."""
    return make_random_game(2, 2, 2, 2, make_rng(11))


@pytest.fixture
def small_game():
    return make_random_game(3, 3, 2, 2, make_rng(0))


def one_state_game(H, A, B, reward):
    from nashplay.game import MarkovGame
    r = np.broadcast_to(np.asarray(reward, dtype=float), (H, 1, A, B)).copy()
    P = np.ones((H, 1, A, B, 1))
    return MarkovGame(H, 1, A, B, P, r, 0)
