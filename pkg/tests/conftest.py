import numpy as np
import pytest

from feedbacktn.model import SimParams, make_two_level_node, single_node_network, validate_network


@pytest.fixture
def standard_node():
    """The workhorse driven two-level node: Omega = 0.5, phi = pi, gamma = 1/2 each."""
    return make_two_level_node(0.5, 0.0, 0.5, 0.5, np.pi)


@pytest.fixture
def decoupled_node():
    """Feedback severed: gamma_R = 0, resonant drive Omega = 0.5."""
    return make_two_level_node(0.5, 0.0, 0.5, 0.0, 0.0)


@pytest.fixture
def ground_state():
    return np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)


def network_at(node, tau, dt, chi_max=100, svd_cutoff=1e-12, **kw):
    net = single_node_network(node, tau=tau)
    return validate_network(net, SimParams(dt=dt, chi_max=chi_max,
                                           svd_cutoff=svd_cutoff, **kw))


@pytest.fixture
def rng():
    return np.random.default_rng(7041)
