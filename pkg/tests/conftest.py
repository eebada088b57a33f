import numpy as np
import pytest

from clusterbell.lattice import build_chain
from clusterbell.states import QuantumState, ghz_state


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    d = 2**n
    k = rank or d
    G = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = A + A.conj().T
    return H / np.max(np.abs(np.linalg.eigvalsh(H)))


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def chain3():
    return build_chain(3)


@pytest.fixture
def ghz3():
    return ghz_state(3)


@pytest.fixture
def make_mixed():
    def make(n, seed, rank=None):
        rng = np.random.default_rng(seed)
        return QuantumState(build_chain(n), matrix=random_density(n, rng, rank))

    return make
