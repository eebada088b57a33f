"""Svetlichny-type Bell functionals, biseparable bounds and a see-saw maximizer.

A :class:`BellInequality` is a list of correlator terms
``coeff * <E^{(i_1)}_{k_1} ... E^{(i_s)}_{k_s}>`` with 0-based parties and
inputs. The see-saw works on Pauli coefficient vectors: an observable ``E`` on
``w`` sites is stored as ``x[mu] = tr(E P_mu) / 2**w`` so that every
expectation becomes a contraction with the state's Pauli correlation tensor.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce as _fold
from pathlib import Path
from typing import Sequence

import numpy as np

from .correlators import expectation, pauli_tensor
from .errors import (
    ArityError,
    ConfigError,
    DisjointnessError,
    FeasibilityError,
)
from .lattice import Region, build_chain
from .operators import HERMITIAN_TOL, PAULI, Observable, Operator
from .states import QuantumState

NORM_TOL = 1e-10
#: Enumeration cap for exact biseparable bounds.
BISEP_MAX_PARTIES = 4
BISEP_MAX_INPUTS = 2


@dataclass(frozen=True)
class BellTerm:
    parties: tuple[int, ...]
    inputs: tuple[int, ...]
    coeff: float

    @property
    def arity(self) -> int:
        return len(self.parties)


@dataclass(frozen=True)
class BellInequality:
    name: str
    n: int
    inputs: tuple[int, ...]
    terms: tuple[BellTerm, ...]
    delta_loc: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ArityError("an inequality needs at least one party")
        inputs = tuple(int(k) for k in self.inputs)
        if len(inputs) != self.n or min(inputs) < 1:
            raise ConfigError(f"inputs {inputs} must list a positive count for each of {self.n} parties")
        merged: dict = {}
        for t in self.terms:
            if len(t.parties) != len(t.inputs) or not t.parties:
                raise ConfigError(f"term {t} needs one input per party")
            if len(set(t.parties)) != len(t.parties):
                raise ConfigError(f"term {t} repeats a party")
            for p, k in zip(t.parties, t.inputs):
                if not 0 <= p < self.n or not 0 <= k < inputs[p]:
                    raise ConfigError(f"term {t} references an invalid party or input")
            order = np.argsort(t.parties)
            key = (tuple(int(t.parties[i]) for i in order), tuple(int(t.inputs[i]) for i in order))
            merged[key] = merged.get(key, 0.0) + float(t.coeff)
        terms = tuple(BellTerm(p, k, c) for (p, k), c in sorted(merged.items()) if c != 0.0)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "terms", terms)

    @property
    def eta(self) -> float:
        return float(sum(abs(t.coeff) for t in self.terms))

    @property
    def delta_bi(self) -> float | None:
        """Alias: the biseparable bound is the same number as ``delta_loc``."""
        return self.delta_loc

    @property
    def is_full_correlator(self) -> bool:
        return all(t.arity == self.n for t in self.terms)

    def coefficient_tensor(self) -> np.ndarray:
        """Dense ``C[k_1, ..., k_n]``; index ``inputs[i]`` on axis ``i`` means party absent."""
        C = np.zeros([k + 1 for k in self.inputs])
        for t in self.terms:
            idx = list(self.inputs)
            for p, k in zip(t.parties, t.inputs):
                idx[p] = k
            C[tuple(idx)] += t.coeff
        return C

    def permuted(self, perm: Sequence[int]) -> "BellInequality":
        """Relabel parties: new party ``j`` is old party ``perm[j]``."""
        inv = {old: new for new, old in enumerate(perm)}
        terms = [BellTerm(tuple(inv[p] for p in t.parties), t.inputs, t.coeff) for t in self.terms]
        return BellInequality(self.name, self.n, tuple(self.inputs[p] for p in perm), tuple(terms),
                              self.delta_loc)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "inputs": list(self.inputs),
            "terms": [{"parties": [p + 1 for p in t.parties], "inputs": list(t.inputs),
                       "coeff": t.coeff} for t in self.terms],
            "delta_loc": self.delta_loc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BellInequality":
        n = int(d["n"])
        inputs = d.get("inputs", 2)
        inputs = [int(inputs)] * n if isinstance(inputs, int) else [int(k) for k in inputs]
        terms = tuple(BellTerm(tuple(int(p) - 1 for p in t["parties"]),
                               tuple(int(k) for k in t["inputs"]), float(t["coeff"]))
                      for t in d["terms"])
        dl = d.get("delta_loc")
        return cls(str(d.get("name", "custom")), n, tuple(inputs), terms,
                   None if dl is None else float(dl))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _full_correlator(name: str, n: int, coeff, delta) -> BellInequality:
    terms = tuple(BellTerm(tuple(range(n)), I, float(coeff(I)))
                  for I in itertools.product((0, 1), repeat=n))
    return BellInequality(name, n, (2,) * n, terms, delta)


def nu(k: int, sign: int) -> int:
    return -1 if (k * (k + sign) // 2) % 2 else 1


def svetlichny3() -> BellInequality:
    """Tripartite Svetlichny functional; biseparable bound 4, quantum maximum 4*sqrt(2)."""
    sign = {0: 1, 1: 1, 2: -1, 3: -1}
    return _full_correlator("svetlichny3", 3, lambda I: sign[sum(I)], 4.0)


def seevinck_svetlichny(n: int, sign: int = 1) -> BellInequality:
    """``S_n^{+/-}``: coefficient ``nu_{t(I)}`` with ``t(I)`` the number of 1-inputs."""
    if n < 3:
        raise ArityError(f"the n-partite family needs n >= 3, got {n}")
    if sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1")
    label = "plus" if sign > 0 else "minus"
    return _full_correlator(f"seevinck_svetlichny{n}_{label}", n,
                            lambda I: nu(sum(I), sign), float(2 ** (n - 1)))


def svetlichny4() -> BellInequality:
    """Four-party functional with sign pattern ``+ - - + +`` by number of 1-inputs."""
    sign = {0: 1, 1: -1, 2: -1, 3: 1, 4: 1}
    return _full_correlator("svetlichny4", 4, lambda I: sign[sum(I)], 8.0)


def inequality_from_spec(spec: dict) -> BellInequality:
    name = spec.get("name", "svetlichny3")
    if name == "svetlichny3":
        return svetlichny3()
    if name == "svetlichny4":
        return svetlichny4()
    if name == "seevinck_svetlichny":
        s = spec.get("sign", "+")
        return seevinck_svetlichny(int(spec.get("n", 3)), 1 if s in ("+", 1, "plus") else -1)
    if name == "custom":
        return BellInequality.from_dict(spec)
    raise ConfigError(f"unknown inequality {name!r}")


# ---------------------------------------------------------------- assignments


@dataclass(frozen=True)
class MeasurementAssignment:
    regions: tuple[Region, ...]
    observables: tuple[tuple[Observable, ...], ...]

    def __post_init__(self):
        if len(self.regions) != len(self.observables):
            raise ArityError("one observable list per region is required")
        for X, obs in zip(self.regions, self.observables):
            for E in obs:
                if not set(E.support) <= set(X.site_indices):
                    raise ConfigError(f"observable support {E.support} is outside region {X.site_indices}")
                if E.norm > 1 + NORM_TOL:
                    raise ConfigError(f"observable norm {E.norm} exceeds 1")

    def matrix(self, party: int, k: int) -> np.ndarray:
        """Observable matrix on the full party region (identity padding)."""
        E = self.observables[party][k]
        X = self.regions[party]
        if tuple(E.support) == X.site_indices:
            return E.matrix
        from .operators import _relative, embed_matrix

        return embed_matrix(E.matrix, _relative(E.support, X.site_indices), X.size)

    def to_dict(self) -> dict:
        return {
            "regions": [list(X.site_indices) for X in self.regions],
            "observables": [[_matrix_to_list(self.matrix(i, k)) for k in range(len(obs))]
                            for i, obs in enumerate(self.observables)],
        }


def _matrix_to_list(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def save_assignment(asg: MeasurementAssignment, path: str | Path) -> tuple[Path, Path]:
    """Observables as consecutive little-endian complex128 matrices plus a JSON sidecar."""
    from .states import binary_paths

    blocks, layout = [], []
    for i, obs in enumerate(asg.observables):
        for k in range(len(obs)):
            m = asg.matrix(i, k)
            blocks.append(np.ascontiguousarray(m, dtype="<c16").reshape(-1))
            layout.append({"party": i + 1, "input": k, "dimension": m.shape[0],
                           "sites": [s + 1 for s in asg.regions[i].site_indices]})
    bin_path, side = binary_paths(path)
    np.concatenate(blocks).tofile(bin_path)
    side.write_text(json.dumps({"dtype": "complex128-le", "blocks": layout}, indent=2) + "\n")
    return bin_path, side


def assignment_from_matrices(regions: Sequence[Region], mats) -> MeasurementAssignment:
    obs = tuple(tuple(Observable.from_matrix(m, X.site_indices) for m in row)
                for X, row in zip(regions, mats))
    return MeasurementAssignment(tuple(regions), obs)


def _check_regions(regions: Sequence[Region], ineq: BellInequality) -> None:
    if len(regions) != ineq.n:
        raise ArityError(f"{ineq.name} has {ineq.n} parties but {len(regions)} regions were given")
    for X, Y in itertools.combinations(regions, 2):
        if X.overlaps(Y):
            raise DisjointnessError(f"regions {X.site_indices} and {Y.site_indices} overlap")


def evaluate(rho: QuantumState, ineq: BellInequality, asg: MeasurementAssignment) -> float:
    """Coefficient-weighted sum of expectations, one expectation call per term."""
    _check_regions(asg.regions, ineq)
    total = 0.0
    for t in ineq.terms:
        obs = [(asg.observables[p][k], asg.regions[p]) for p, k in zip(t.parties, t.inputs)]
        total += t.coeff * expectation(rho, obs)
    return float(total)


# ---------------------------------------------------------------- see-saw


def _pauli_basis(w: int) -> np.ndarray:
    mats = [_fold(np.kron, [PAULI[c] for c in s], np.ones((1, 1), dtype=complex))
            for s in itertools.product("IXYZ", repeat=w)]
    return np.stack(mats)


@dataclass(frozen=True)
class BellResult:
    value: float
    assignment: MeasurementAssignment
    iterations: int
    restarts_used: int
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False, compare=False)
    flags: tuple[str, ...] = ()
    restart_values: tuple[float, ...] = field(default=(), repr=False, compare=False)


class _SeeSaw:
    """Coordinate ascent on Pauli coefficient vectors for a fixed state."""

    def __init__(self, T: np.ndarray, ineq: BellInequality, widths: Sequence[int]):
        self.T = T
        self.C = ineq.coefficient_tensor()
        self.n = ineq.n
        self.inputs = ineq.inputs
        self.widths = list(widths)
        self.bases = [_pauli_basis(w) for w in self.widths]
        letters = "abcdefghijklm"
        upper = "ABCDEFGHIJKLM"
        if self.n > len(letters):
            raise FeasibilityError("too many parties for the see-saw contraction")
        self._t = letters[: self.n]
        self._c = upper[: self.n]

    def _rows(self, X: np.ndarray, i: int) -> np.ndarray:
        # input rows plus the identity row used by marginal terms
        ident = np.zeros((1, 4 ** self.widths[i]))
        ident[0, 0] = 1.0
        return np.vstack([X, ident])

    def value(self, xs) -> float:
        ops = [self.C, self.T] + [self._rows(x, i) for i, x in enumerate(xs)]
        spec = f"{self._c},{self._t}," + ",".join(self._c[i] + self._t[i] for i in range(self.n))
        return float(np.einsum(spec + "->", *ops, optimize=True))

    def effective(self, xs, i: int) -> np.ndarray:
        others = [j for j in range(self.n) if j != i]
        ops = [self.C, self.T] + [self._rows(xs[j], j) for j in others]
        spec = f"{self._c},{self._t}," + ",".join(self._c[j] + self._t[j] for j in others)
        out = self._c[i] + self._t[i]
        m = np.einsum(spec + "->" + out, *ops, optimize=True)
        return m[: self.inputs[i]]

    def best_response(self, m: np.ndarray, i: int):
        """Exact maximizer of ``m . x`` over admissible observables for party ``i``."""
        w = self.widths[i]
        x = np.zeros_like(m)
        flagged = False
        if w == 1:
            for k, row in enumerate(m):
                r = row[1:]
                nr = np.linalg.norm(r)
                if nr <= 1e-14:
                    x[k, 3] = 1.0
                    flagged = True
                else:
                    x[k, 1:] = r / nr
            return x, flagged
        B = self.bases[i]
        d = 2**w
        for k, row in enumerate(m):
            F = np.tensordot(row, B, axes=(0, 0))
            F = 0.5 * (F + F.conj().T)
            if np.max(np.abs(F)) <= 1e-14:
                x[k, 0] = 1.0
                flagged = True
                continue
            ev, V = np.linalg.eigh(F)
            s = np.where(ev < -1e-12 * max(1.0, np.max(np.abs(ev))), -1.0, 1.0)
            E = (V * s) @ V.conj().T
            x[k] = np.einsum("mab,ba->m", B, E).real / d
        return x, flagged

    def random_start(self, rng: np.random.Generator):
        xs = []
        for i in range(self.n):
            w = self.widths[i]
            X = np.zeros((self.inputs[i], 4**w))
            for k in range(self.inputs[i]):
                if w == 1:
                    v = rng.normal(size=3)
                    X[k, 1:] = v / np.linalg.norm(v)
                else:
                    # random dichotomic traceless-ish observable: sign of a random hermitian
                    r = rng.normal(size=4**w)
                    r[0] = 0.0
                    X[k] = self.best_response(r[None, :], i)[0][0]
            xs.append(X)
        return xs

    def run(self, rng, max_iter: int, tol: float):
        xs = self.random_start(rng)
        val = self.value(xs)
        history = [val]
        flagged = False
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            for i in range(self.n):
                x, f = self.best_response(self.effective(xs, i), i)
                xs[i] = x
                flagged |= f
            new = self.value(xs)
            history.append(new)
            gain = new - val
            val = max(val, new)
            if gain < tol:
                converged = True
                break
        return val, xs, it, converged, flagged, history

    def to_matrices(self, xs):
        out = []
        for i, X in enumerate(xs):
            B = self.bases[i]
            out.append([np.tensordot(row, B, axes=(0, 0)) for row in X])
        return out


@dataclass(frozen=True)
class OptimizerOptions:
    restarts: int = 20
    seed: int = 0
    max_iter: int = 500
    tol: float = 1e-9
    workers: int = 1


def optimize(rho: QuantumState, ineq: BellInequality, regions: Sequence[Region],
             opts: OptimizerOptions | dict | None = None) -> BellResult:
    """Best see-saw value over seeded restarts (ties go to the lowest restart index)."""
    if opts is None:
        opts = OptimizerOptions()
    elif isinstance(opts, dict):
        opts = OptimizerOptions(**opts)
    regions = tuple(regions)
    _check_regions(regions, ineq)
    if opts.restarts < 1:
        raise ConfigError("at least one restart is required")
    T = pauli_tensor(rho, regions)
    saw = _SeeSaw(T, ineq, [X.size for X in regions])
    children = np.random.SeedSequence(opts.seed).spawn(opts.restarts)

    def one(child):
        return saw.run(np.random.default_rng(child), opts.max_iter, opts.tol)

    if opts.workers > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            runs = list(pool.map(one, children))
    else:
        runs = [one(c) for c in children]
    values = [r[0] for r in runs]
    best = int(np.argmax(values))
    val, xs, it, conv, flagged, hist = runs[best]
    mats = saw.to_matrices(xs)
    obs = tuple(tuple(_exact_observable(m, X) for m in row) for X, row in zip(regions, mats))
    flags = ("zero_effective_operator",) if any(r[4] for r in runs) else ()
    return BellResult(value=float(val), assignment=MeasurementAssignment(regions, obs),
                      iterations=it, restarts_used=opts.restarts, converged=conv,
                      history=tuple(hist), flags=flags, restart_values=tuple(values))


def _exact_observable(m: np.ndarray, X: Region) -> Observable:
    m = 0.5 * (m + m.conj().T)
    return Observable(base=Operator(matrix=m, support=X.site_indices),
                      norm=float(np.max(np.abs(np.linalg.eigvalsh(m)))), matrix=m)


# ---------------------------------------------------------------- biseparable bound


def bipartitions(n: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All splits ``S | rest`` with party 0 in ``S``: larger ``S`` first, then lexicographic."""
    out = []
    for size in range(n - 1, 0, -1):
        for rest in itertools.combinations(range(1, n), size - 1):
            S = (0,) + rest
            out.append((S, tuple(i for i in range(n) if i not in S)))
    return out


def _block_value_rows(ineq: BellInequality, small, large):
    """Row-wise maximum of the larger block for every deterministic small-block strategy."""
    inputs = ineq.inputs
    s_tuples = list(itertools.product(*[range(inputs[p]) for p in small]))
    l_tuples = list(itertools.product(*[range(inputs[p]) for p in large]))
    s_row = {t: i for i, t in enumerate(s_tuples)}
    l_row = {t: i for i, t in enumerate(l_tuples)}
    nS, nL = len(small), len(large)
    n_strat = 2 ** (nS * len(s_tuples))
    if n_strat > 2**24:
        raise FeasibilityError("block strategy enumeration is too large")
    # strategies[sigma, party, row] in {+1, -1}
    bits = (np.arange(n_strat)[:, None] >> np.arange(nS * len(s_tuples))[None, :]) & 1
    strategies = (1 - 2 * bits).reshape(n_strat, nS, len(s_tuples)) if nS else np.ones((1, 0, 1))
    choices = 1 - 2 * ((np.arange(2**nL)[:, None] >> np.arange(nL)[None, :]) & 1)

    nT = len(ineq.terms)
    small_val = np.ones((strategies.shape[0], nT))
    R = np.zeros((len(l_tuples), nT))
    M = np.ones((nT, 2**nL))
    for j, t in enumerate(ineq.terms):
        got = dict(zip(t.parties, t.inputs))
        if nS:
            srow = s_row[tuple(got.get(p, 0) for p in small)]
            for a, p in enumerate(small):
                if p in got:
                    small_val[:, j] *= strategies[:, a, srow]
        R[l_row[tuple(got.get(p, 0) for p in large)], j] = 1.0
        for b, p in enumerate(large):
            if p in got:
                M[j] *= choices[:, b]
    W = small_val * np.array([t.coeff for t in ineq.terms])[None, :]
    # V[sigma, row, choice] = sum_t R[row, t] W[sigma, t] M[t, choice]
    V = np.einsum("rt,st,tc->src", R, W, M, optimize=True)
    return float(np.max(V.max(axis=2).sum(axis=1)))


def biseparable_bound(ineq: BellInequality) -> float:
    """Exact maximum over deterministic hybrid strategies for every bipartition.

    Inside a block each party's output may depend on all inputs of its block;
    in terms where some block members are absent their inputs are read as 0.
    """
    if ineq.n > BISEP_MAX_PARTIES or max(ineq.inputs) > BISEP_MAX_INPUTS:
        raise FeasibilityError(
            f"exact enumeration supports n <= {BISEP_MAX_PARTIES} parties with "
            f"<= {BISEP_MAX_INPUTS} inputs; use the catalog bound instead")
    if not ineq.terms:
        return 0.0
    if ineq.n == 1:
        return _block_value_rows(ineq, (), (0,))
    best = -np.inf
    for S, rest in bipartitions(ineq.n):
        small, large = (S, rest) if len(S) <= len(rest) else (rest, S)
        best = max(best, _block_value_rows(ineq, small, large))
    return float(best)


# ---------------------------------------------------------------- coefficient sums


def coefficient_sums(ineq: BellInequality, region_sizes: Sequence[int]) -> dict:
    """Weighted absolute coefficient sums entering the epsilon bounds.

    ``gamma`` weights a term of arity ``s`` by ``s - 2`` (clipped at 0),
    ``mu`` by ``alpha = sum_{i=1}^{s-2} prod_{j=i}^{s} |X_{i_j}|`` and
    ``mu_hat`` by ``xi = prod |X_{i_j}|``.
    """
    if len(region_sizes) != ineq.n:
        raise ArityError(f"need {ineq.n} region sizes, got {len(region_sizes)}")
    eta = gamma = mu = mu_hat = 0.0
    for t in ineq.terms:
        a = abs(t.coeff)
        sizes = [int(region_sizes[p]) for p in t.parties]
        s = len(sizes)
        alpha = sum(float(np.prod(sizes[i:])) for i in range(s - 2))
        eta += a
        gamma += max(s - 2, 0) * a
        mu += alpha * a
        mu_hat += float(np.prod(sizes)) * a
    return {"eta": eta, "gamma": gamma, "gamma_hat": eta, "mu": mu, "mu_hat": mu_hat}


# ---------------------------------------------------------------- biseparable sampler


def _haar_vector(rng: np.random.Generator, k: int) -> np.ndarray:
    v = rng.normal(size=2**k) + 1j * rng.normal(size=2**k)
    return v / np.linalg.norm(v)


def random_biseparable_state(n: int, weights: Sequence[float], seed: int,
                             mixed_blocks: bool = False) -> QuantumState:
    """Mixture of ``rho_S (x) rho_rest`` over the splits listed by :func:`bipartitions`."""
    if n < 3:
        raise ArityError(f"biseparable samples need n >= 3, got {n}")
    splits = bipartitions(n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(splits),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ConfigError(f"weights must be a probability vector of length {len(splits)}")
    rng = np.random.default_rng(seed)
    dim = 2**n
    rho = np.zeros((dim, dim), dtype=complex)
    for p, (S, rest) in zip(w, splits):
        blocks = []
        for block in (S, rest):
            if mixed_blocks:
                G = rng.normal(size=(2 ** len(block),) * 2) + 1j * rng.normal(size=(2 ** len(block),) * 2)
                r = G @ G.conj().T
                blocks.append(r / np.trace(r))
            else:
                v = _haar_vector(rng, len(block))
                blocks.append(np.outer(v, v.conj()))
        if p == 0:
            continue
        m = np.kron(blocks[0], blocks[1])
        order = list(S) + list(rest)
        perm = [order.index(i) for i in range(n)]
        t = m.reshape([2] * (2 * n)).transpose(perm + [n + q for q in perm])
        rho += p * t.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    return QuantumState(build_chain(n), matrix=rho)
