import numpy as np
import pytest
from conftest import random_density
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from clusterbell.errors import ConfigError, DomainError, InvalidRegionError, NotHermitianError
from clusterbell.lattice import build_chain
from clusterbell.operators import PAULI, Operator, PauliTerm, xy_chain_hamiltonian
from clusterbell.states import (
    QuantumState,
    dump_state,
    evolve,
    ghz_state,
    gibbs_state,
    ground_state,
    load_state,
    product_state,
    product_vector,
    reduce,
    spectrum,
)

Z = PAULI["Z"]
X = PAULI["X"]


def z_op():
    return Operator(terms=[PauliTerm(1.0, ((0, "Z"),))], n_sites=1)


def test_pauli_spectrum():
    spec = spectrum(z_op())
    assert spec.eigenvalues == (-1.0, 1.0)
    assert spec.gap == 2.0 and not spec.degenerate


def test_zero_operator_is_degenerate():
    H = Operator(matrix=np.zeros((4, 4)), support=(0, 1))
    spec = spectrum(H)
    assert all(e == 0 for e in spec.eigenvalues)
    assert spec.degenerate
    _, gspec = ground_state(H)
    assert gspec.degenerate


def test_xy_pair_ground_state():
    state, spec = ground_state(xy_chain_hamiltonian(build_chain(2), 0.0, 0.0))
    assert spec.eigenvalues == pytest.approx((-2, 0, 0, 2), abs=1e-12)
    assert spec.ground_energy == pytest.approx(-2) and spec.gap == pytest.approx(2)
    assert np.allclose(state.vector, np.array([0, 1, 1, 0]) / np.sqrt(2))


def test_ground_state_of_z():
    state, spec = ground_state(z_op())
    assert spec.ground_energy == -1
    assert np.allclose(state.vector, [0, 1])


def test_non_hermitian_rejected():
    H = Operator(matrix=np.array([[0, 1], [0, 0]]))
    with pytest.raises(NotHermitianError):
        spectrum(H)


@pytest.mark.parametrize("L", [4, 11])
def test_ground_residual(L):
    H = xy_chain_hamiltonian(build_chain(L), 0.5, 1.0)
    state, spec = ground_state(H)
    Hs = H.sparse()
    resid = np.linalg.norm(Hs @ state.vector - spec.ground_energy * state.vector)
    norm = np.max(np.abs(np.linalg.eigvalsh(H.dense())))
    assert resid <= 1e-8 * norm


def test_iterative_path_agrees_with_dense():
    H = xy_chain_hamiltonian(build_chain(11), 0.5, 1.0)
    dense = np.linalg.eigvalsh(H.dense())
    _, spec = ground_state(H)
    assert not spec.full
    assert spec.ground_energy == pytest.approx(dense[0], abs=1e-9)
    assert spec.gap == pytest.approx(dense[1] - dense[0], abs=1e-8)


def test_gibbs_examples():
    lat = build_chain(3)
    H = xy_chain_hamiltonian(lat, 0.5, 1.0)
    assert np.allclose(gibbs_state(H, 0.0).matrix, np.eye(8) / 8)
    b = 0.7
    rho = gibbs_state(z_op(), b).matrix
    assert np.allclose(rho, np.diag([np.exp(-b), np.exp(b)]) / (np.exp(-b) + np.exp(b)))
    with pytest.raises(DomainError):
        gibbs_state(H, -1.0)


def test_gibbs_low_temperature_limit():
    H = xy_chain_hamiltonian(build_chain(4), 0.5, 1.0)
    g, spec = ground_state(H)
    assert not spec.degenerate
    rho = gibbs_state(H, 50.0).matrix
    fid = np.vdot(g.vector, rho @ g.vector).real
    assert fid >= 1 - 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 20.0))
def test_gibbs_is_a_state(beta):
    H = xy_chain_hamiltonian(build_chain(3), 0.5, 1.0)
    rho = gibbs_state(H, beta).matrix
    assert abs(np.trace(rho) - 1) <= 1e-10
    assert np.linalg.eigvalsh(rho).min() >= -1e-12


def test_energy_decreases_with_beta():
    H = xy_chain_hamiltonian(build_chain(4), 0.5, 1.0)
    Hd = H.dense()
    energies = [np.trace(gibbs_state(H, b).matrix @ Hd).real for b in np.linspace(0, 5, 21)]
    assert all(e2 <= e1 + 1e-12 for e1, e2 in zip(energies, energies[1:]))


def test_product_state_examples():
    rho = product_state(["0"] * 3).matrix
    expect = np.zeros((8, 8))
    expect[0, 0] = 1
    assert np.allclose(rho, expect)
    mixed = product_state([np.eye(2) / 2] * 2).matrix
    assert np.allclose(mixed, np.eye(4) / 4)
    r = product_state(["+", "0"]).matrix
    assert np.linalg.matrix_rank(r) == 1
    assert np.trace(r @ np.kron(X, np.eye(2))).real == pytest.approx(1)
    with pytest.raises(ConfigError):
        product_state(["0", "0"], build_chain(3))
    with pytest.raises(ConfigError):
        product_state([np.diag([1.5, -0.5])])


def test_evolve_examples():
    plus = product_state(["+"])
    assert evolve(plus, z_op(), 0.0) is plus
    out = evolve(plus, z_op(), np.pi / 2).matrix
    assert np.trace(out @ X).real == pytest.approx(-1)


def test_evolve_matches_matrix_exponential(make_mixed):
    lat = build_chain(3)
    H = xy_chain_hamiltonian(lat, 0.5, 1.0)
    rho = make_mixed(3, 5)
    U = expm(-1j * 0.37 * H.dense())
    assert np.allclose(evolve(rho, H, 0.37).matrix, U @ rho.matrix @ U.conj().T, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_evolution_invariants(seed, t1, t2):
    lat = build_chain(3)
    H = xy_chain_hamiltonian(lat, 0.5, 1.0)
    rho = QuantumState(lat, matrix=random_density(3, np.random.default_rng(seed)))
    a = evolve(rho, H, t1)
    ev0, ev1 = np.linalg.eigvalsh(rho.matrix), np.linalg.eigvalsh(a.matrix)
    assert np.max(np.abs(ev0 - ev1)) <= 1e-10
    assert abs(np.trace(a.matrix) - 1) <= 1e-9
    assert np.max(np.abs(a.matrix - a.matrix.conj().T)) <= 1e-9
    purity = lambda m: np.trace(m @ m).real  # noqa: E731
    assert abs(purity(a.matrix) - purity(rho.matrix)) <= 1e-9
    b = evolve(a, H, t2)
    c = evolve(rho, H, t1 + t2)
    assert np.max(np.abs(b.matrix - c.matrix)) <= 1e-8


def test_pure_evolution_stays_a_vector():
    lat = build_chain(3)
    psi = product_vector(["0", "+", "1"], lat)
    H = xy_chain_hamiltonian(lat, 0.5, 1.0)
    out = evolve(psi, H, 0.8)
    assert out.is_pure
    mixed = evolve(QuantumState(lat, matrix=psi.density()), H, 0.8)
    assert np.allclose(out.density(), mixed.matrix, atol=1e-12)


def test_reduce_examples(ghz3):
    assert np.allclose(reduce(product_vector(["0"] * 3), [0]), np.diag([1, 0]))
    expect = np.zeros((4, 4))
    expect[0, 0] = expect[3, 3] = 0.5
    assert np.allclose(reduce(ghz3, [0, 1]), expect)
    mm = QuantumState(build_chain(3), matrix=np.eye(8) / 8)
    assert np.allclose(reduce(mm, [0, 2]), np.eye(4) / 4)
    with pytest.raises(InvalidRegionError):
        reduce(ghz3, [])


def test_reduce_against_einsum_oracle(make_mixed):
    rho = make_mixed(3, 11)
    t = rho.matrix.reshape([2] * 6)
    oracle = np.einsum("abcdbf->acdf", t).reshape(4, 4)
    assert np.allclose(reduce(rho, [0, 2]), oracle, atol=1e-14)


def test_dump_roundtrip(tmp_path, make_mixed):
    rho = make_mixed(2, 3)
    bin_path, side = dump_state(rho, tmp_path / "rho", kind="test")
    raw = np.fromfile(bin_path, dtype="<f8")
    assert raw.size == 2 * 16
    assert raw[0] == rho.matrix[0, 0].real and raw[1] == rho.matrix[0, 0].imag
    back = load_state(tmp_path / "rho")
    assert np.array_equal(back.matrix, rho.matrix)
    v = ghz_state(3)
    dump_state(v, tmp_path / "g")
    assert np.array_equal(load_state(tmp_path / "g").vector, v.vector)
