"""Multi-region expectation values and clustering defects.

A defect compares a joint expectation ``<E_1 ... E_s>`` with a factored
product: either the sequential form ``<E_1>...<E_{s-2}><E_{s-1} E_s>`` or the
product of two block expectations for a bipartition of the observables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import reduce as _fold
from typing import Sequence

import numpy as np

from .errors import (
    ArityError,
    DisjointnessError,
    NotHermitianError,
    NumericIntegrityError,
    PartitionError,
    ResourceError,
)
from .lattice import Region, min_separation
from .operators import DENSE_CAP, HERMITIAN_TOL, PAULI, Observable, embed_matrix
from .states import QuantumState, reduce

#: Reduced-density-matrix path is used while the union support stays this small.
REDUCED_MAX_SITES = 8
IMAG_DISCARD = 1e-10
IMAG_ERROR = 1e-8

PAULI_LABELS = "IXYZ"
_PAULI_BASIS = np.stack([PAULI[c] for c in PAULI_LABELS])  # [mu, row, col]


@dataclass(frozen=True)
class DefectRecord:
    partition: str
    joint: float
    factored: float
    defect: float
    tau: int | None
    region_sizes: tuple[int, ...]
    observables: tuple[str, ...] | None = field(default=None, compare=False)

    @property
    def s(self) -> int:
        return len(self.region_sizes)

    @property
    def max_region_size(self) -> int:
        return max(self.region_sizes)


def _matrix(obs) -> np.ndarray:
    return obs.matrix if isinstance(obs, Observable) else np.asarray(obs, dtype=complex)


def _check_disjoint(regions: Sequence[Region]) -> None:
    for X, Y in itertools.combinations(regions, 2):
        if X.overlaps(Y):
            raise DisjointnessError(f"regions {X.site_indices} and {Y.site_indices} overlap")


def _real(value: complex) -> float:
    if abs(value.imag) >= IMAG_ERROR:
        raise NumericIntegrityError(f"expectation has imaginary residue {value.imag:.3e}")
    return float(value.real)


def _product_operator(obs, regions):
    """Tensor product of the observables on the sorted union of their regions."""
    mats = []
    for E, X in zip(obs, regions):
        m = _matrix(E)
        if m.shape != (2**X.size,) * 2:
            raise ResourceError(f"observable shape {m.shape} does not match region size {X.size}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise NotHermitianError("observables must be hermitian")
        mats.append(m)
    concat = [i for X in regions for i in X.site_indices]
    union = sorted(concat)
    op = _fold(np.kron, mats, np.ones((1, 1), dtype=complex))
    pos = {s: i for i, s in enumerate(concat)}
    # reorder factors from region order to increasing site order
    k = len(concat)
    order = [pos[s] for s in union]
    if order != list(range(k)):
        t = op.reshape([2] * (2 * k)).transpose(order + [k + o for o in order])
        op = t.reshape(2**k, 2**k)
    return op, union


def expectation(rho: QuantumState, obs: Sequence[tuple]) -> float:
    """``tr(E_1 (x) ... (x) E_s (x) 1 rho)`` for observables on disjoint regions."""
    if not obs:
        return 1.0
    ops, regions = zip(*obs)
    _check_disjoint(regions)
    op, union = _product_operator(ops, regions)
    if len(union) <= REDUCED_MAX_SITES:
        r = reduce(rho, union)
        return _real(np.einsum("ij,ji->", r, op))
    return _full_trace(rho, op, union)


def expectation_full(rho: QuantumState, obs: Sequence[tuple]) -> float:
    """Reference path: embed into the whole register and trace against rho."""
    if not obs:
        return 1.0
    ops, regions = zip(*obs)
    _check_disjoint(regions)
    op, union = _product_operator(ops, regions)
    return _full_trace(rho, op, union)


def _full_trace(rho, op, union) -> float:
    if rho.dim > DENSE_CAP:
        raise ResourceError("full-register trace exceeds the dense cap")
    full = embed_matrix(op, union, rho.n_sites)
    if rho.is_pure:
        return _real(np.vdot(rho.vector, full @ rho.vector))
    return _real(np.einsum("ij,ji->", full, rho.matrix))


def pauli_labels(width: int) -> list[str]:
    return ["".join(p) for p in itertools.product(PAULI_LABELS, repeat=width)]


def pauli_tensor(rho: QuantumState, regions: Sequence[Region]) -> np.ndarray:
    """Correlation tensor ``T[mu_1, ..., mu_n] = tr(rho P_mu_1 (x) ... (x) P_mu_n)``.

    Axis ``i`` runs over the ``4**|X_i|`` Pauli strings of region ``i`` in
    lexicographic ``IXYZ`` order (first site of the region most significant).
    """
    _check_disjoint(regions)
    concat = [i for X in regions for i in X.site_indices]
    m = len(concat)
    if m > REDUCED_MAX_SITES:
        raise ResourceError(f"union support of {m} sites is too large for a Pauli tensor")
    union = sorted(concat)
    r = reduce(rho, union)
    pos = {s: i for i, s in enumerate(union)}
    order = [pos[s] for s in concat]
    t = r.reshape([2] * (2 * m)).transpose(order + [m + o for o in order])
    rem = m
    for _ in range(m):
        # sum_{a,b} t[a.., b..] P[mu, b, a]: row axis 0, column axis rem
        t = np.tensordot(t, _PAULI_BASIS, axes=([0, rem], [2, 1]))
        rem -= 1
    t = np.asarray(t)
    if m and np.max(np.abs(t.imag)) >= IMAG_ERROR:
        raise NumericIntegrityError("Pauli correlation tensor is not real")
    T = t.real.reshape([4**X.size for X in regions]) if m else np.ones(())
    return T


def _sizes_and_tau(rho, regions):
    sizes = tuple(X.size for X in regions)
    tau = min_separation(rho.lattice, regions) if len(regions) >= 2 else None
    return sizes, tau


def _seq_label(s: int) -> str:
    return "seq"


def _split_label(split, s: int) -> str:
    a = sorted(split)
    b = [i for i in range(s) if i not in split]
    return "+".join(str(i + 1) for i in a) + "|" + "+".join(str(i + 1) for i in b)


def parse_partition(label: str, s: int):
    """Inverse of the partition labels used in records and CSV files."""
    if label == "seq":
        return "seq"
    try:
        left = {int(x) - 1 for x in label.split("|")[0].split("+")}
    except ValueError:
        raise PartitionError(f"bad partition label {label!r}") from None
    _validate_split(left, s)
    return frozenset(left)


def _validate_split(split, s: int) -> None:
    if not split or len(split) >= s or any(i < 0 or i >= s for i in split):
        raise PartitionError(f"split {sorted(split)} is not a proper subset of {s} observables")


def defect_sequential(rho: QuantumState, obs: Sequence[tuple]) -> DefectRecord:
    s = len(obs)
    if s < 3:
        raise ArityError(f"sequential defect needs s >= 3 observables, got {s}")
    regions = [X for _, X in obs]
    _check_disjoint(regions)
    joint = expectation(rho, obs)
    factored = expectation(rho, obs[s - 2:])
    for o in obs[: s - 2]:
        factored *= expectation(rho, [o])
    sizes, tau = _sizes_and_tau(rho, regions)
    return DefectRecord(_seq_label(s), joint, factored, abs(joint - factored), tau, sizes)


def defect_bipartition(rho: QuantumState, obs: Sequence[tuple], split) -> DefectRecord:
    s = len(obs)
    split = set(split)
    _validate_split(split, s)
    regions = [X for _, X in obs]
    _check_disjoint(regions)
    joint = expectation(rho, obs)
    left = [o for i, o in enumerate(obs) if i in split]
    right = [o for i, o in enumerate(obs) if i not in split]
    factored = expectation(rho, left) * expectation(rho, right)
    sizes, tau = _sizes_and_tau(rho, regions)
    return DefectRecord(_split_label(split, s), joint, factored, abs(joint - factored), tau, sizes)


def defect_chain_bound_check(rho: QuantumState, obs: Sequence[tuple], slack: float = 1e-9):
    """Check the telescoping bound behind the sequential induction.

    Returns ``(holds, report)`` where ``report["steps"]`` lists the one-vs-rest
    defects ``D_m = |<E_{s-m+1}...E_s> - <E_{s-m+1}><E_{s-m+2}...E_s>|`` for
    ``m = 3..s``.
    """
    s = len(obs)
    if s < 3:
        raise ArityError(f"chain bound needs s >= 3 observables, got {s}")
    lhs = defect_sequential(rho, obs)
    steps = []
    for m in range(3, s + 1):
        j = s - m
        tail = expectation(rho, obs[j:])
        head = expectation(rho, [obs[j]]) * expectation(rho, obs[j + 1:])
        steps.append(abs(tail - head))
    rhs = float(sum(steps))
    report = {"lhs": lhs.defect, "rhs": rhs, "steps": steps, "record": lhs}
    return lhs.defect <= rhs + slack, report


def _pauli_strings(T, regions):
    return [pauli_labels(X.size) for X in regions]


def _marginal(T: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Tensor restricted to non-identity strings on ``keep``, identity elsewhere."""
    idx = tuple(slice(1, None) if i in keep else 0 for i in range(T.ndim))
    return T[idx]


def max_pauli_defect(rho: QuantumState, regions: Sequence[Region], partition="seq",
                     T: np.ndarray | None = None) -> DefectRecord:
    """Largest defect over all non-identity Pauli-string observables on the regions.

    ``partition`` is ``"seq"`` or a collection of 0-based observable indices
    forming one side of a bipartition.
    """
    s = len(regions)
    if T is None:
        T = pauli_tensor(rho, regions)
    joint = _marginal(T, range(s))
    if partition == "seq":
        if s < 3:
            raise ArityError(f"sequential defect needs s >= 3 regions, got {s}")
        factored = _marginal(T, [s - 2, s - 1])
        for i in range(s - 3, -1, -1):
            m = _marginal(T, [i])
            factored = np.multiply.outer(m, factored)
        label = "seq"
    else:
        split = set(partition)
        _validate_split(split, s)
        left = sorted(split)
        right = [i for i in range(s) if i not in split]
        a = _marginal(T, left)
        b = _marginal(T, right)
        factored = np.multiply.outer(a, b).transpose(np.argsort(left + right))
        label = _split_label(split, s)
    diff = np.abs(joint - factored)
    k = np.unravel_index(int(np.argmax(diff)), diff.shape)
    labels = _pauli_strings(T, regions)
    names = tuple(labels[i][k[i] + 1] for i in range(s))
    sizes, tau = _sizes_and_tau(rho, regions)
    return DefectRecord(label, float(joint[k]), float(factored[k]), float(diff[k]), tau, sizes,
                        observables=names)


def all_partitions(s: int) -> list:
    """``"seq"`` followed by every bipartition, smaller side containing index 0 first."""
    out: list = ["seq"] if s >= 3 else []
    seen = set()
    for size in range(1, s):
        for left in itertools.combinations(range(s), size):
            key = frozenset(left)
            comp = frozenset(range(s)) - key
            if comp in seen or key in seen:
                continue
            seen.add(key)
            out.append(key if 0 in key else comp)
    return out
