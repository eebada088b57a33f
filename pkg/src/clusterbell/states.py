"""Ground, thermal and time-evolved states, spectra and partial traces."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import reduce as _fold
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import scipy.sparse.linalg as sla

from .errors import (
    ConfigError,
    DomainError,
    InvalidRegionError,
    NotHermitianError,
    ResourceError,
)
from .lattice import Lattice, Region, build_chain
from .operators import DENSE_CAP, SPARSE_CAP, Operator

DEGENERACY_TOL = 1e-10
STATE_TOL = 1e-10
#: Ground states of registers up to this dimension use a dense eigensolve.
DENSE_GROUND_DIM = 2**10


@dataclass(frozen=True, eq=False)
class QuantumState:
    lattice: Lattice
    vector: np.ndarray | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if (self.vector is None) == (self.matrix is None):
            raise ConfigError("a state is either a vector or a density matrix")
        dim = 2**self.lattice.size
        if self.vector is not None:
            v = np.asarray(self.vector, dtype=complex).reshape(-1)
            if v.shape[0] != dim:
                raise ConfigError(f"state vector length {v.shape[0]} != 2^{self.lattice.size}")
            if abs(np.linalg.norm(v) - 1.0) > STATE_TOL:
                raise ConfigError("state vector is not normalised")
            object.__setattr__(self, "vector", v)
        else:
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (dim, dim):
                raise ConfigError(f"density matrix shape {m.shape} != ({dim}, {dim})")
            if abs(np.trace(m).real - 1.0) > STATE_TOL:
                raise ConfigError("density matrix does not have unit trace")
            object.__setattr__(self, "matrix", m)

    @property
    def is_pure(self) -> bool:
        return self.vector is not None

    @property
    def n_sites(self) -> int:
        return self.lattice.size

    @property
    def dim(self) -> int:
        return 2**self.lattice.size

    def density(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return np.outer(self.vector, self.vector.conj())

    def check(self, tol: float = STATE_TOL) -> None:
        """Raise if the density-matrix invariants are violated."""
        if self.is_pure:
            return
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise NotHermitianError("density matrix is not hermitian")
        if np.linalg.eigvalsh(m).min() < -tol:
            raise ConfigError("density matrix is not positive semidefinite")


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: tuple[float, ...]
    ground_energy: float
    gap: float
    degenerate: bool
    full: bool

    def to_dict(self, head: int | None = None) -> dict:
        ev = list(self.eigenvalues if head is None else self.eigenvalues[:head])
        return {"eigenvalues": ev, "ground_energy": self.ground_energy, "gap": self.gap,
                "degenerate": self.degenerate, "full_spectrum": self.full}


@dataclass(frozen=True, eq=False)
class Eigensystem:
    """Dense eigendecomposition reused by Gibbs states and time evolution."""

    values: np.ndarray
    vectors: np.ndarray
    n_sites: int


def _dense_hamiltonian(H: Operator) -> np.ndarray:
    if not H.hermitian:
        raise NotHermitianError("Hamiltonian is not hermitian")
    n = H._register(None)
    if 2**n > DENSE_CAP:
        raise ResourceError(f"dimension 2^{n} exceeds the dense cap {DENSE_CAP}")
    return H.dense(n)


def eigensystem(H: Operator) -> Eigensystem:
    m = _dense_hamiltonian(H)
    if not np.any(m.imag):
        # real symmetric input: same decomposition at a fraction of the cost
        w, v = np.linalg.eigh(m.real)
        v = v.astype(complex)
    else:
        w, v = np.linalg.eigh(m)
    return Eigensystem(values=w, vectors=v, n_sites=H._register(None))


def _spectral(values: np.ndarray, full: bool) -> SpectralData:
    vals = tuple(float(x) for x in np.sort(values))
    gap = vals[1] - vals[0] if len(vals) > 1 else 0.0
    gap = max(gap, 0.0)
    return SpectralData(vals, vals[0], gap, gap < DEGENERACY_TOL, full)


def _lanczos_lowest(H: Operator, k: int = 3):
    n = H._register(None)
    if 2**n > SPARSE_CAP:
        raise ResourceError(f"dimension 2^{n} exceeds the hard cap {SPARSE_CAP}")
    if not H.hermitian:
        raise NotHermitianError("Hamiltonian is not hermitian")
    m = H.sparse(n)
    if not np.any(m.data.imag):
        m = m.real
    dim = m.shape[0]
    v0 = np.ones(dim) / np.sqrt(dim)
    w, v = sla.eigsh(m, k=min(k, dim - 1), which="SA", v0=v0, tol=1e-13, maxiter=20 * dim)
    order = np.argsort(w)
    return w[order], v[:, order].astype(complex)


def spectrum(H: Operator) -> SpectralData:
    n = H._register(None)
    if 2**n <= DENSE_CAP:
        m = _dense_hamiltonian(H)
        w = np.linalg.eigvalsh(m.real if not np.any(m.imag) else m)
        return _spectral(w, full=True)
    w, _ = _lanczos_lowest(H)
    return _spectral(w, full=False)


def ground_state(H: Operator, lattice: Lattice | None = None) -> tuple[QuantumState, SpectralData]:
    """Lowest eigenvector; degenerate ground spaces return the first eigh vector."""
    n = H._register(None)
    lattice = lattice or build_chain(n)
    if 2**n <= DENSE_GROUND_DIM:
        es = eigensystem(H)
        w, v = es.values, es.vectors
        spec = _spectral(w, full=True)
    else:
        w, v = _lanczos_lowest(H)
        spec = _spectral(w, full=False)
        if spec.degenerate and 2**n <= DENSE_CAP:
            es = eigensystem(H)
            w, v = es.values, es.vectors
            spec = _spectral(w, full=True)
    psi = v[:, 0]
    # fix the global phase: largest-magnitude entry made real positive
    k = int(np.argmax(np.abs(psi) > np.abs(psi).max() - 1e-12))
    psi = psi * (abs(psi[k]) / psi[k])
    psi = psi / np.linalg.norm(psi)
    return QuantumState(lattice, vector=psi), spec


def _as_eigensystem(H) -> Eigensystem:
    return H if isinstance(H, Eigensystem) else eigensystem(H)


def gibbs_state(H: Union[Operator, Eigensystem], beta: float,
                lattice: Lattice | None = None) -> QuantumState:
    if beta < 0:
        raise DomainError(f"inverse temperature must be >= 0, got {beta}")
    n = H.n_sites if isinstance(H, Eigensystem) else H._register(None)
    lattice = lattice or build_chain(n)
    dim = 2**n
    if dim > DENSE_CAP:
        raise ResourceError(f"Gibbs state of dimension 2^{n} exceeds the dense cap")
    if beta == 0:
        return QuantumState(lattice, matrix=np.eye(dim, dtype=complex) / dim)
    es = _as_eigensystem(H)
    w = np.exp(-beta * (es.values - es.values[0]))
    rho = (es.vectors * (w / w.sum())) @ es.vectors.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    return QuantumState(lattice, matrix=rho)


def evolve(rho0: QuantumState, H: Union[Operator, Eigensystem], t: float) -> QuantumState:
    """Schroedinger-picture evolution exp(-iHt) rho exp(iHt)."""
    if rho0.dim > DENSE_CAP:
        raise ResourceError("time evolution needs the dense path")
    if t == 0:
        return rho0
    es = _as_eigensystem(H)
    if es.n_sites != rho0.n_sites:
        raise ConfigError("Hamiltonian and state act on different registers")
    phases = np.exp(-1j * t * es.values)
    U = es.vectors
    if rho0.is_pure:
        psi = U @ (phases * (U.conj().T @ rho0.vector))
        return QuantumState(rho0.lattice, vector=psi / np.linalg.norm(psi))
    V = (U * phases) @ U.conj().T
    rho = V @ rho0.matrix @ V.conj().T
    return QuantumState(rho0.lattice, matrix=0.5 * (rho + rho.conj().T))


LOCAL_STATES = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-i": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


def _local_density(x) -> np.ndarray:
    if isinstance(x, str):
        if x not in LOCAL_STATES:
            raise ConfigError(f"unknown local state label {x!r}")
        v = LOCAL_STATES[x]
        return np.outer(v, v.conj())
    m = np.asarray(x, dtype=complex)
    if m.shape != (2, 2):
        raise ConfigError(f"local states must be 2x2, got {m.shape}")
    if (np.max(np.abs(m - m.conj().T)) > STATE_TOL or abs(np.trace(m).real - 1) > STATE_TOL
            or np.linalg.eigvalsh(m).min() < -STATE_TOL):
        raise ConfigError("local state is not a valid density matrix")
    return m


def product_state(locals_: Sequence, lattice: Lattice | None = None) -> QuantumState:
    """Tensor product of single-site density matrices (or labels like ``"+"``)."""
    lattice = lattice or build_chain(max(len(locals_), 1))
    if len(locals_) != lattice.size:
        raise ConfigError(f"need {lattice.size} local states, got {len(locals_)}")
    if 2**lattice.size > DENSE_CAP:
        raise ResourceError("product density matrix exceeds the dense cap")
    mats = [_local_density(x) for x in locals_]
    return QuantumState(lattice, matrix=_fold(np.kron, mats))


def product_vector(labels: Sequence[str], lattice: Lattice | None = None) -> QuantumState:
    """Pure product state from labels ``0 1 + - +i -i``."""
    lattice = lattice or build_chain(len(labels))
    if len(labels) != lattice.size:
        raise ConfigError(f"need {lattice.size} local states, got {len(labels)}")
    for x in labels:
        if x not in LOCAL_STATES:
            raise ConfigError(f"unknown local state label {x!r}")
    return QuantumState(lattice, vector=_fold(np.kron, [LOCAL_STATES[x] for x in labels]))


def ghz_state(lattice: Lattice | int) -> QuantumState:
    if isinstance(lattice, int):
        lattice = build_chain(lattice)
    v = np.zeros(2**lattice.size, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return QuantumState(lattice, vector=v)


def reduce(rho: QuantumState, keep: Region | Sequence[int]) -> np.ndarray:
    """Partial trace onto ``keep`` (kept sites in increasing index order)."""
    idx = list(keep.site_indices if isinstance(keep, Region) else sorted(keep))
    if not idx:
        raise InvalidRegionError("cannot reduce onto an empty region")
    n = rho.n_sites
    if idx[-1] >= n or len(set(idx)) != len(idx):
        raise InvalidRegionError(f"region {idx} is not valid for {n} sites")
    rest = [i for i in range(n) if i not in idx]
    dk, dr = 2 ** len(idx), 2 ** len(rest)
    if rho.is_pure:
        psi = rho.vector.reshape([2] * n).transpose(idx + rest).reshape(dk, dr)
        return psi @ psi.conj().T
    t = rho.matrix.reshape([2] * (2 * n))
    t = t.transpose(idx + rest + [n + i for i in idx + rest]).reshape(dk, dr, dk, dr)
    return np.einsum("ajbj->ab", t)


def binary_paths(path: str | Path) -> tuple[Path, Path]:
    """``<path>.bin`` and ``<path>.json``; an explicit .bin/.json suffix is dropped first."""
    path = Path(path)
    if path.suffix in (".bin", ".json"):
        path = path.with_suffix("")
    return path.with_name(path.name + ".bin"), path.with_name(path.name + ".json")


def dump_state(rho: QuantumState, path: str | Path, kind: str = "") -> tuple[Path, Path]:
    """Write raw little-endian complex128 data plus a JSON sidecar."""
    data = rho.vector if rho.is_pure else rho.matrix
    bin_path, side = binary_paths(path)
    np.ascontiguousarray(data, dtype="<c16").tofile(bin_path)
    side.write_text(json.dumps({
        "dimension": rho.dim,
        "shape": list(data.shape),
        "representation": "vector" if rho.is_pure else "density_matrix",
        "kind": kind,
        "lattice": rho.lattice.to_dict(),
        "dtype": "complex128-le",
        "ordering": "site 1 most significant",
    }, indent=2, sort_keys=True) + "\n")
    return bin_path, side


def load_state(path: str | Path) -> QuantumState:
    from .lattice import lattice_from_spec

    bin_path, side = binary_paths(path)
    meta = json.loads(side.read_text())
    data = np.fromfile(bin_path, dtype="<c16").reshape(meta["shape"])
    lat = lattice_from_spec(meta["lattice"])
    if meta["representation"] == "vector":
        return QuantumState(lat, vector=data)
    return QuantumState(lat, matrix=data)
