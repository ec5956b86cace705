import numpy as np
import pytest

from stormpg.mdp import TabularMdp, bundled_mdp, random_mdp


@pytest.fixture
def two_state():
    return bundled_mdp("two_state")


@pytest.fixture
def bandit():
    return bundled_mdp("bandit")


@pytest.fixture
def benchmark():
    return bundled_mdp("benchmark")


@pytest.fixture
def zero_reward():
    rng = np.random.default_rng(11)
    m = random_mdp(3, 2, 0.8, rng)
    return TabularMdp(m.transition, np.zeros_like(m.reward), m.gamma, m.rho, m.mu)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_random(seed, S=3, A=2, gamma=0.8):
    return random_mdp(S, A, gamma, np.random.default_rng(seed))
