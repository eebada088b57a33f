import numpy as np
import pytest
from conftest import kron_all, random_density, random_hermitian
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterbell.correlators import (
    all_partitions,
    defect_bipartition,
    defect_chain_bound_check,
    defect_sequential,
    expectation,
    expectation_full,
    max_pauli_defect,
    parse_partition,
    pauli_tensor,
)
from clusterbell.errors import ArityError, DisjointnessError, NumericIntegrityError, PartitionError
from clusterbell.lattice import Region, build_chain
from clusterbell.operators import PAULI, Observable, pauli_observable
from clusterbell.states import QuantumState, ghz_state, product_state, product_vector

X, Z = PAULI["X"], PAULI["Z"]


def sites(lat, *idx):
    return [lat.region(i) for i in idx]


def xs(regions, label="X"):
    return [(pauli_observable(label * R.size, R), R) for R in regions]


def test_expectation_examples(ghz3):
    lat = build_chain(3)
    assert expectation(product_vector(["0"] * 3), [(Z, lat.region(1))]) == pytest.approx(1)
    assert expectation(ghz3, xs(sites(lat, 1, 2, 3))) == pytest.approx(1)
    mm = QuantumState(lat, matrix=np.eye(8) / 8)
    assert expectation(mm, [(PAULI["Y"], lat.region(2)), (X, lat.region(3))]) == pytest.approx(0)


def test_overlap_raises(ghz3):
    lat = build_chain(3)
    with pytest.raises(DisjointnessError):
        expectation(ghz3, [(X, lat.region(1)), (Z, lat.region(1))])


def test_imaginary_residue_is_an_error():
    lat = build_chain(1)
    rho = QuantumState(lat, matrix=np.array([[0.5, 0.5j], [-0.5j, 0.5]]))
    antiherm_free = np.array([[0, 1], [0, 0]], dtype=complex)
    with pytest.raises(Exception):
        expectation(rho, [(antiherm_free, lat.region(1))])
    # broken state: non-hermitian density matrix slips past construction
    bad = QuantumState(lat, matrix=np.array([[0.5, 0.3], [0.0, 0.5]]))
    with pytest.raises(NumericIntegrityError):
        expectation(bad, [(PAULI["Y"], lat.region(1))])


def test_region_order_does_not_matter(make_mixed):
    rho = make_mixed(4, 2)
    lat = rho.lattice
    rng = np.random.default_rng(1)
    A, B = random_hermitian(2, rng), random_hermitian(4, rng)
    fwd = expectation(rho, [(A, lat.region(4)), (B, lat.region(1, 3))])
    rev = expectation(rho, [(B, lat.region(1, 3)), (A, lat.region(4))])
    full = np.trace(rho.matrix @ np.kron(np.eye(1), _embed_oracle(B, (0, 2), A, 3, 4))).real
    assert fwd == pytest.approx(rev, abs=1e-14)
    assert fwd == pytest.approx(full, abs=1e-12)


def _embed_oracle(B, b_sites, A, a_site, n):
    """Direct sum over basis states: (B on b_sites) (x) (A on a_site)."""
    d = 2**n
    out = np.zeros((d, d), dtype=complex)
    for r in range(d):
        rb = [(r >> (n - 1 - i)) & 1 for i in range(n)]
        for c in range(d):
            cb = [(c >> (n - 1 - i)) & 1 for i in range(n)]
            rest = [i for i in range(n) if i not in b_sites and i != a_site]
            if any(rb[i] != cb[i] for i in rest):
                continue
            bi = 2 * rb[b_sites[0]] + rb[b_sites[1]]
            bj = 2 * cb[b_sites[0]] + cb[b_sites[1]]
            out[r, c] = B[bi, bj] * A[rb[a_site], cb[a_site]]
    return out


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reduced_and_full_paths_agree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 6))
    lat = build_chain(n)
    rho = QuantumState(lat, matrix=random_density(n, rng))
    perm = rng.permutation(n)
    k = int(rng.integers(1, min(n, 3) + 1))
    cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False)) if k > 1 else []
    groups = [g for g in np.split(perm[: n - int(rng.integers(0, 2))], cuts) if len(g)]
    obs = [(random_hermitian(2 ** len(g), rng), Region(tuple(int(i) for i in g))) for g in groups]
    a, b = expectation(rho, obs), expectation_full(rho, obs)
    assert abs(a - b) <= 1e-10
    assert -1 - 1e-10 <= a <= 1 + 1e-10


def test_sequential_examples(ghz3):
    lat = build_chain(3)
    rec = defect_sequential(product_state(["+", "0", "-i"]), xs(sites(lat, 1, 2, 3)))
    assert rec.defect <= 1e-10
    rec = defect_sequential(ghz3, xs(sites(lat, 1, 2, 3)))
    assert (rec.joint, rec.factored, rec.defect) == pytest.approx((1, 0, 1))
    mm = QuantumState(lat, matrix=np.eye(8) / 8)
    rec = defect_sequential(mm, xs(sites(lat, 1, 2, 3), "Z"))
    assert (rec.joint, rec.factored, rec.defect) == pytest.approx((0, 0, 0))
    with pytest.raises(ArityError):
        defect_sequential(ghz3, xs(sites(lat, 1, 2)))


def test_bipartition_examples():
    lat = build_chain(4)
    regs = sites(lat, 1, 2, 3, 4)
    assert defect_bipartition(product_state(["0", "+", "1", "-"]), xs(regs), {0, 1}).defect <= 1e-10
    rec = defect_bipartition(ghz_state(4), xs(regs), {0, 1})
    assert (rec.joint, rec.factored, rec.defect) == pytest.approx((1, 0, 1))
    assert rec.partition == "1+2|3+4"
    for bad in (set(), {0, 1, 2, 3}):
        with pytest.raises(PartitionError):
            defect_bipartition(ghz_state(4), xs(regs), bad)


def test_two_party_split_is_covariance(make_mixed):
    rho = make_mixed(2, 9)
    lat = rho.lattice
    obs = [(X, lat.region(1)), (Z, lat.region(2))]
    cov = expectation(rho, obs) - expectation(rho, obs[:1]) * expectation(rho, obs[1:])
    assert defect_bipartition(rho, obs, {0}).defect == pytest.approx(abs(cov))


def test_three_party_shapes_coincide(make_mixed):
    rho = make_mixed(3, 4)
    obs = xs(sites(rho.lattice, 1, 2, 3), "Y")
    assert defect_sequential(rho, obs).defect == pytest.approx(defect_bipartition(rho, obs, {0}).defect)


def test_chain_bound_examples():
    lat = build_chain(4)
    ok, rep = defect_chain_bound_check(product_state(["0", "+", "1", "+i"]), xs(sites(lat, 1, 2, 3, 4)))
    assert ok and max(rep["steps"]) <= 1e-12
    ok, rep = defect_chain_bound_check(ghz_state(4), xs(sites(lat, 1, 2, 3, 4)))
    assert ok and rep["lhs"] == pytest.approx(1) and rep["rhs"] >= 1 - 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_telescoping_on_random_pure_states(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    lat = build_chain(3)
    psi = QuantumState(lat, vector=v / np.linalg.norm(v))
    obs = [(random_hermitian(2, rng), lat.region(i)) for i in (1, 2, 3)]
    ok, rep = defect_chain_bound_check(psi, obs)
    assert ok
    assert rep["record"].defect <= 2


def test_pauli_tensor_matches_expectations(make_mixed):
    rho = make_mixed(4, 6)
    lat = rho.lattice
    regs = [lat.region(3), lat.region(1, 4)]
    T = pauli_tensor(rho, regs)
    assert T.shape == (4, 16)
    labels = "IXYZ"
    for a in range(4):
        for b in range(16):
            pb = labels[b // 4] + labels[b % 4]
            ref = np.trace(rho.matrix @ _pauli_full(4, {2: labels[a], 0: pb[0], 3: pb[1]})).real
            assert T[a, b] == pytest.approx(ref, abs=1e-12)


def _pauli_full(n, where):
    return kron_all([PAULI[where.get(i, "I")] for i in range(n)])


def test_max_pauli_defect_on_ghz():
    lat = build_chain(3)
    rec = max_pauli_defect(ghz_state(3), sites(lat, 1, 2, 3))
    assert rec.defect == pytest.approx(1)
    assert rec.partition == "seq"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["seq", "1|2+3", "1+3|2", "1+2|3"]))
def test_max_pauli_defect_is_attained(seed, label):
    rng = np.random.default_rng(seed)
    lat = build_chain(3)
    rho = QuantumState(lat, matrix=random_density(3, rng))
    regs = sites(lat, 1, 2, 3)
    part = parse_partition(label, 3)
    rec = max_pauli_defect(rho, regs, part)
    obs = [(Observable.from_matrix(PAULI[p], R.site_indices), R) for p, R in zip(rec.observables, regs)]
    direct = defect_sequential(rho, obs) if part == "seq" else defect_bipartition(rho, obs, part)
    assert rec.defect == pytest.approx(direct.defect, abs=1e-12)
    for combo in [("Z", "Z", "Z"), ("X", "Y", "Z")]:
        o = [(PAULI[p], R) for p, R in zip(combo, regs)]
        d = defect_sequential(rho, o) if part == "seq" else defect_bipartition(rho, o, part)
        assert d.defect <= rec.defect + 1e-12


@pytest.mark.parametrize("s, count", [(2, 1), (3, 4), (4, 8)])
def test_partition_listing(s, count):
    parts = all_partitions(s)
    assert len(parts) == count
    assert len(set(map(str, parts))) == count


def test_product_states_have_zero_defect_everywhere():
    rho = product_state(["0", "+", "-i", "1"])
    lat = rho.lattice
    regs = sites(lat, 1, 2, 3, 4)
    for part in all_partitions(4):
        assert max_pauli_defect(rho, regs, part).defect <= 1e-10
