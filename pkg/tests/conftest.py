import numpy as np
import pytest
import scipy.sparse as sp

from fastslow.envs import make_bandit_env, make_queue_env
from fastslow.mdp import JointKernel, build_mdp


def tiny_mdp(R, P, gamma=0.9, n_slow=1):
    """MDP from a dense (nS, nA) reward and (nS, nA, nS) kernel; states split evenly over slow states."""
    R = np.asarray(R, float)
    P = np.asarray(P, float)
    nS, nA = R.shape
    nY = nS // n_slow
    K = sp.csr_matrix(P.reshape(nS * nA, nS))
    return build_mdp(
        np.arange(n_slow, dtype=float), np.arange(nY, dtype=float), np.arange(nA), R,
        JointKernel(K, n_slow, nY, nA), gamma,
    )  # fmt: skip


def dense_kernel(mdp):
    """(nS, nA, nS) array of the joint kernel."""
    return mdp.kernel.joint_csr().toarray().reshape(mdp.n_states, mdp.n_actions, mdp.n_states)


@pytest.fixture(scope="session")
def queue():
    return make_queue_env()


@pytest.fixture(scope="session")
def bandit():
    return make_bandit_env()


@pytest.fixture(scope="session")
def demand_response():
    from fastslow.envs import make_demand_response_env

    return make_demand_response_env()
