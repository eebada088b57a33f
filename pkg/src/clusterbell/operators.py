"""Pauli-string operator algebra and the spin Hamiltonians used by the engine.

Canonical qubit ordering: the site with index 0 is the most significant tensor
factor, so a basis state ``|b_0 b_1 ... b_{n-1}>`` has integer label
``sum(b_i << (n - 1 - i))``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import reduce
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateObservableError,
    GeometryError,
    InvalidRegionError,
    InvalidSizeError,
    NotHermitianError,
    ResourceError,
    ShapeError,
)
from .lattice import Lattice, MetricKind, Region

HERMITIAN_TOL = 1e-10

#: Full-space dimension above which dense matrices are refused.
DENSE_CAP = 2**12
#: Hard cap for any full-space (sparse) representation.
SPARSE_CAP = 2**14

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class LongRangeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PauliTerm:
    coefficient: complex
    factors: tuple[tuple[int, str], ...]

    def __post_init__(self):
        facs = dict(self.factors.items() if isinstance(self.factors, Mapping) else self.factors)
        for site, p in facs.items():
            if p not in ("X", "Y", "Z"):
                raise ValueError(f"unknown Pauli factor {p!r} on site {site}")
            if int(site) < 0:
                raise InvalidRegionError(f"negative site index {site}")
        object.__setattr__(self, "factors", tuple(sorted((int(s), p) for s, p in facs.items())))
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.factors)

    def masks(self, n: int) -> tuple[int, int, int]:
        """Bit masks (flip, z-phase, y-count) for an ``n``-site register."""
        flip = zmask = 0
        ny = 0
        for site, p in self.factors:
            bit = 1 << (n - 1 - site)
            if p in ("X", "Y"):
                flip |= bit
            if p in ("Y", "Z"):
                zmask |= bit
            if p == "Y":
                ny += 1
        return flip, zmask, ny


def _parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    out = np.zeros_like(x)
    while np.any(x):
        out ^= x & 1
        x >>= 1
    return out


def pauli_sum_sparse(terms: Sequence[PauliTerm], n: int) -> sp.csr_matrix:
    """Assemble a Pauli-term sum on ``n`` qubits as a CSR matrix."""
    dim = 2**n
    if dim > SPARSE_CAP:
        raise ResourceError(f"dimension 2^{n} exceeds the sparse cap {SPARSE_CAP}")
    cols = np.arange(dim, dtype=np.int64)
    rows_all, cols_all, data_all = [], [], []
    for term in terms:
        if term.factors and term.support[-1] >= n:
            raise InvalidRegionError(f"term support {term.support} exceeds {n} sites")
        flip, zmask, ny = term.masks(n)
        # P|b> = i^ny (-1)^{popcount(b & zmask)} |b ^ flip>, with Y = i X Z
        sign = 1.0 - 2.0 * _parity(cols & zmask)
        rows_all.append(cols ^ flip)
        cols_all.append(cols)
        data_all.append(term.coefficient * (1j**ny) * sign)
    if not terms:
        return sp.csr_matrix((dim, dim), dtype=complex)
    m = sp.coo_matrix(
        (np.concatenate(data_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(dim, dim),
        dtype=complex,
    )
    return m.tocsr()


def pauli_string_matrix(labels: str) -> np.ndarray:
    """Dense Kronecker product of single-qubit Paulis, e.g. ``"XIZ"``."""
    return reduce(np.kron, (PAULI[c] for c in labels), np.ones((1, 1), dtype=complex))


class Operator:
    """Either a sum of Pauli terms or a dense matrix on an explicit support."""

    def __init__(self, terms: Sequence[PauliTerm] | None = None, matrix=None,
                 support: Region | Sequence[int] | None = None, n_sites: int | None = None):
        if (terms is None) == (matrix is None):
            raise ValueError("give exactly one of terms or matrix")
        self.n_sites = n_sites
        if terms is not None:
            self.terms = tuple(terms)
            self._matrix = None
            sites = sorted({s for t in self.terms for s in t.support})
            if support is not None:
                sup = tuple(support.site_indices if isinstance(support, Region) else support)
                if not set(sites) <= set(sup):
                    raise InvalidRegionError("term support exceeds the declared support")
                sites = sorted(sup)
            self.support = tuple(sites)
        else:
            m = np.asarray(matrix, dtype=complex)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ShapeError(f"operator matrix must be square, got {m.shape}")
            if support is None:
                k = int(round(np.log2(m.shape[0])))
                support = tuple(range(k))
            sup = tuple(support.site_indices if isinstance(support, Region) else support)
            if m.shape[0] != 2 ** len(sup):
                raise ShapeError(f"matrix of size {m.shape[0]} does not match support {sup}")
            order = np.argsort(sup)
            if list(order) != list(range(len(sup))):
                m = _permute_qubits(m, list(order))
                sup = tuple(sorted(sup))
            self.terms = None
            self._matrix = m
            self.support = sup

    @property
    def is_dense(self) -> bool:
        return self._matrix is not None

    @property
    def hermitian(self) -> bool:
        if self._matrix is not None:
            return bool(np.max(np.abs(self._matrix - self._matrix.conj().T), initial=0.0)
                        <= HERMITIAN_TOL)
        combined: dict = {}
        for t in self.terms:
            combined[t.factors] = combined.get(t.factors, 0) + t.coefficient
        return all(abs(c.imag) <= HERMITIAN_TOL for c in combined.values())

    def local_matrix(self) -> np.ndarray:
        """Dense matrix on the operator's own support (sites in sorted order)."""
        if self._matrix is not None:
            return self._matrix
        pos = {s: i for i, s in enumerate(self.support)}
        shifted = [PauliTerm(t.coefficient, tuple((pos[s], p) for s, p in t.factors))
                   for t in self.terms]
        return pauli_sum_sparse(shifted, len(self.support)).toarray()

    def sparse(self, n: int | None = None) -> sp.csr_matrix:
        """Full-register sparse matrix on ``n`` sites."""
        n = self._register(n)
        if self.terms is not None:
            return pauli_sum_sparse(self.terms, n)
        return sp.csr_matrix(embed_matrix(self._matrix, self.support, n))

    def dense(self, n: int | None = None) -> np.ndarray:
        n = self._register(n)
        if 2**n > DENSE_CAP:
            raise ResourceError(f"dense matrix of dimension 2^{n} exceeds cap {DENSE_CAP}")
        if self._matrix is not None:
            return embed_matrix(self._matrix, self.support, n)
        return pauli_sum_sparse(self.terms, n).toarray()

    def _register(self, n):
        n = self.n_sites if n is None else n
        if n is None:
            n = (self.support[-1] + 1) if self.support else 0
        if self.support and self.support[-1] >= n:
            raise InvalidRegionError(f"support {self.support} exceeds a {n}-site register")
        return n

    def __add__(self, other: "Operator") -> "Operator":
        n = self.n_sites if self.n_sites is not None else other.n_sites
        if self.terms is not None and other.terms is not None:
            return Operator(terms=self.terms + other.terms, n_sites=n)
        sup = tuple(sorted(set(self.support) | set(other.support)))
        a = embed_matrix(self.local_matrix(), _relative(self.support, sup), len(sup))
        b = embed_matrix(other.local_matrix(), _relative(other.support, sup), len(sup))
        return Operator(matrix=a + b, support=sup, n_sites=n)

    def scaled(self, factor: complex) -> "Operator":
        if self.terms is not None:
            return Operator(terms=[PauliTerm(t.coefficient * factor, t.factors) for t in self.terms],
                            support=self.support, n_sites=self.n_sites)
        return Operator(matrix=self._matrix * factor, support=self.support, n_sites=self.n_sites)

    def __repr__(self):
        kind = f"{len(self.terms)} terms" if self.terms is not None else "dense"
        return f"Operator({kind}, support={self.support})"


@dataclass(frozen=True)
class Observable:
    base: Operator
    norm: float
    matrix: np.ndarray = field(repr=False, compare=False)

    @property
    def support(self) -> tuple[int, ...]:
        return self.base.support

    @classmethod
    def from_matrix(cls, matrix, support) -> "Observable":
        return normalize_observable(Operator(matrix=matrix, support=support))


def _relative(sub, sup):
    pos = {s: i for i, s in enumerate(sup)}
    return tuple(pos[s] for s in sub)


def _permute_qubits(m: np.ndarray, order: list[int]) -> np.ndarray:
    """Reorder tensor factors: output factor ``i`` is input factor ``order[i]``."""
    k = len(order)
    t = m.reshape([2] * (2 * k))
    t = t.transpose(order + [k + o for o in order])
    return t.reshape(2**k, 2**k)


def embed_matrix(m: np.ndarray, support: Sequence[int], n: int) -> np.ndarray:
    """Tensor-extend ``m`` (acting on sorted ``support``) by identity to ``n`` sites."""
    support = list(support)
    k = len(support)
    if support and max(support) >= n:
        raise InvalidRegionError(f"support {tuple(support)} exceeds {n} sites")
    if 2**n > DENSE_CAP:
        raise ResourceError(f"dense embedding of dimension 2^{n} exceeds cap {DENSE_CAP}")
    rest = [i for i in range(n) if i not in support]
    full = np.kron(m, np.eye(2 ** len(rest), dtype=complex))
    # factor order of ``full`` is support + rest; move each to its lattice slot
    current = support + rest
    order = [current.index(i) for i in range(n)]
    if order == list(range(n)):
        return full
    return _permute_qubits(full, order)


def embed(A: Operator, lat: Lattice) -> np.ndarray:
    if A.support and A.support[-1] >= lat.size:
        raise InvalidRegionError(f"support {A.support} exceeds lattice of {lat.size} sites")
    return embed_matrix(A.local_matrix(), A.support, lat.size)


def operator_norm(A) -> float:
    """Largest singular value; for hermitian inputs the largest |eigenvalue|."""
    if isinstance(A, Operator):
        if A.is_dense or len(A.support) <= 12:
            m = A.local_matrix()
            herm = A.hermitian
        else:
            raise ResourceError("operator support too large for an exact norm")
    else:
        m = np.asarray(A)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"operator norm needs a square matrix, got {m.shape}")
        herm = bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= HERMITIAN_TOL)
    if m.size == 0:
        return 0.0
    if herm:
        return float(np.max(np.abs(np.linalg.eigvalsh(m))))
    return float(np.linalg.svd(m, compute_uv=False)[0])


def normalize_observable(A: Operator) -> Observable:
    if not A.hermitian:
        raise NotHermitianError("observables must be hermitian")
    norm = operator_norm(A)
    if norm <= HERMITIAN_TOL:
        raise DegenerateObservableError("cannot normalise the zero operator")
    scale = max(1.0, norm)
    m = A.local_matrix()
    m = 0.5 * (m + m.conj().T) / scale
    base = Operator(matrix=m, support=A.support, n_sites=A.n_sites)
    return Observable(base=base, norm=norm / scale, matrix=m)


def pauli_observable(labels: str, region: Region) -> Observable:
    """Pauli string on a region, one label per site in region order."""
    if len(labels) != region.size:
        raise ShapeError(f"need {region.size} Pauli labels, got {labels!r}")
    m = pauli_string_matrix(labels)
    return Observable(base=Operator(matrix=m, support=region.site_indices), norm=1.0, matrix=m)


def _fields(lat: Lattice, fields) -> list[float]:
    if np.isscalar(fields):
        return [float(fields)] * lat.size
    fields = [float(c) for c in fields]
    if len(fields) != lat.size:
        raise InvalidSizeError(f"expected {lat.size} field values, got {len(fields)}")
    return fields


def xy_chain_hamiltonian(lat: Lattice, gamma: float, fields) -> Operator:
    """Open XY chain: -(1+g) X_j X_{j+1} - (1-g) Y_j Y_{j+1} + c_j Z_j."""
    if lat.metric_kind is not MetricKind.PATH:
        raise GeometryError("the XY chain needs a chain lattice")
    cs = _fields(lat, fields)
    terms = []
    for j in range(lat.size - 1):
        terms.append(PauliTerm(-(1 + gamma), ((j, "X"), (j + 1, "X"))))
        terms.append(PauliTerm(-(1 - gamma), ((j, "Y"), (j + 1, "Y"))))
    for j, c in enumerate(cs):
        terms.append(PauliTerm(c, ((j, "Z"),)))
    return Operator(terms=terms, support=tuple(range(lat.size)), n_sites=lat.size)


def neighbor_pairs(lat: Lattice, k: int) -> list[tuple[int, int]]:
    return [(x, y) for x, y in itertools.combinations(range(lat.size), 2)
            if lat.distance(x, y) <= k]


def grid_hamiltonian(lat: Lattice, k: int, coupling, fields) -> Operator:
    """k-neighbour XYZ couplings plus a longitudinal Z field on any lattice."""
    if int(k) < 1:
        raise InvalidSizeError(f"interaction range must be >= 1, got {k}")
    if lat.size > 1 and k > lat.diameter:
        warnings.warn(f"k={k} exceeds the lattice diameter {lat.diameter}: interactions are "
                      "all-to-all, not short-range", LongRangeWarning, stacklevel=2)
    jx, jy, jz = (float(c) for c in coupling)
    cs = _fields(lat, fields)
    terms = []
    for x, y in neighbor_pairs(lat, k):
        for j, p in ((jx, "X"), (jy, "Y"), (jz, "Z")):
            if j != 0.0:
                terms.append(PauliTerm(j, ((x, p), (y, p))))
    for x, c in enumerate(cs):
        if c != 0.0:
            terms.append(PauliTerm(c, ((x, "Z"),)))
    return Operator(terms=terms, support=tuple(range(lat.size)), n_sites=lat.size)


def hamiltonian_from_spec(lat: Lattice, spec: dict) -> Operator:
    family = spec.get("family")
    fields = spec.get("fields", 0.0)
    if family == "xy_chain":
        return xy_chain_hamiltonian(lat, float(spec.get("gamma", 0.0)), fields)
    if family == "grid":
        return grid_hamiltonian(lat, int(spec.get("k", 1)), spec.get("coupling", (1, 1, 1)), fields)
    raise GeometryError(f"unknown Hamiltonian family {family!r}")
