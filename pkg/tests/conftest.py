import numpy as np
import pytest

from cq_lab import CqSource, DensityMatrix, QuantumChannel


@pytest.fixture
def zero_state():
    return DensityMatrix([[1, 0], [0, 0]])


@pytest.fixture
def plus_state():
    return DensityMatrix([[0.5, 0.5], [0.5, 0.5]])


@pytest.fixture
def binary_source(zero_state, plus_state):
    """The |0>, |+> source with uniform prior used throughout."""
    return CqSource([zero_state, plus_state], [0.5, 0.5])


@pytest.fixture
def identity_channel():
    return QuantumChannel.identity(2)


@pytest.fixture
def dephasing_channel():
    kraus = [np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)]
    return QuantumChannel(kraus)


@pytest.fixture
def depolarizing_channel():
    kraus = []
    for i in range(2):
        for j in range(2):
            k = np.zeros((2, 2), dtype=complex)
            k[i, j] = 1 / np.sqrt(2)
            kraus.append(k)
    return QuantumChannel(kraus)


@pytest.fixture
def mixed_diagonal_source():
    states = [DensityMatrix(np.diag([0.85, 0.15])), DensityMatrix(np.diag([0.2, 0.8]))]
    return CqSource(states, [0.5, 0.5])


def random_density(dim, rng):
    raw = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = raw @ raw.conj().T
    return DensityMatrix(rho / np.trace(rho))


def random_subspace(dim, rank, rng):
    from cq_lab import Subspace

    raw = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    q, _ = np.linalg.qr(raw)
    return Subspace(q[:, :rank])
