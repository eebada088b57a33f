"""Separation sweeps, decay and light-cone fits, epsilon bounds and certification.

Clustering constants ``c, kappa, v`` are estimated from sweeps; every epsilon
derived from them is empirical and reported as such.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import __version__
from .bell import BellInequality, OptimizerOptions, biseparable_bound, coefficient_sums, optimize
from .correlators import all_partitions, max_pauli_defect, parse_partition, pauli_tensor
from .errors import (
    ConfigError,
    DataError,
    InsufficientDataError,
    NoDecayError,
    ScheduleError,
)
from .lattice import Lattice, MetricKind, Region
from .operators import Operator, hamiltonian_from_spec
from .states import (
    QuantumState,
    SpectralData,
    eigensystem,
    evolve,
    ghz_state,
    gibbs_state,
    ground_state,
    product_state,
    product_vector,
)

DEFECT_FLOOR = 1e-12
DEFAULT_DELTA = 0.01
CSV_HEADER = ("tau", "t", "s", "partition", "joint", "factored", "defect", "max_region_size")
NORMALIZATIONS = ("per_maxregion", "raw")


def fmt(x) -> str:
    """Ten significant digits, plain ``.`` decimal separator."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if v == 0.0:
        return "0"
    return f"{v:.10g}"


# ---------------------------------------------------------------- placement


def _line(lat: Lattice) -> list[int]:
    """Site indices along which sweep regions are packed."""
    if lat.metric_kind is MetricKind.PATH:
        return list(range(lat.size))
    return [lat.index_of((j, 1)) for j in range(1, lat.shape[0] + 1)]


def max_feasible_tau(lat: Lattice, parties: int, region_size: int) -> int:
    room = len(_line(lat)) - parties * region_size
    if room < 0:
        return 0
    if parties < 2:
        return 0
    return room // (parties - 1) + 1


def place_regions(lat: Lattice, parties: int, region_size: int, tau: int) -> list[Region]:
    """Leftmost packing: first region at the origin, each next one ``tau`` past the last."""
    if tau < 1:
        raise ScheduleError(f"separation must be >= 1 for disjoint regions, got {tau}")
    line = _line(lat)
    top = max_feasible_tau(lat, parties, region_size)
    if tau > top:
        raise ScheduleError(f"separation {tau} does not fit {parties} regions of size "
                            f"{region_size}; max feasible tau is {top}")
    regions, start = [], 0
    for _ in range(parties):
        regions.append(Region(tuple(line[start:start + region_size])))
        start += region_size - 1 + tau
    return regions


# ---------------------------------------------------------------- states


class StatePreparer:
    """Builds the configured state once and serves it (at any time ``t`` if evolved)."""

    def __init__(self, lattice: Lattice, state_spec: dict, hamiltonian: Operator | None = None):
        self.lattice = lattice
        self.spec = dict(state_spec)
        self.kind = self.spec.get("kind")
        self.H = hamiltonian
        self.spectral: SpectralData | None = None
        self._eig = None
        self._fixed: QuantumState | None = None
        self._initial: QuantumState | None = None
        if self.kind in ("ground", "gibbs", "evolved") and hamiltonian is None:
            raise ConfigError(f"state kind {self.kind!r} needs a hamiltonian")
        if self.kind == "ground":
            self._fixed, self.spectral = ground_state(hamiltonian, lattice)
        elif self.kind == "gibbs":
            self._eig = eigensystem(hamiltonian)
            self.spectral = _spectral_from_values(self._eig.values)
            self._fixed = gibbs_state(self._eig, float(self.spec.get("beta", 0.0)), lattice)
        elif self.kind == "evolved":
            self._eig = eigensystem(hamiltonian)
            init = self.spec.get("initial", "0")
            labels = [init] * lattice.size if isinstance(init, str) else list(init)
            self._initial = product_vector(labels, lattice)
        elif self.kind == "ghz":
            self._fixed = ghz_state(lattice)
        elif self.kind == "product":
            self._fixed = product_state(self.spec["locals"], lattice)
        else:
            raise ConfigError(f"unknown state kind {self.kind!r}")

    @property
    def time_dependent(self) -> bool:
        return self.kind == "evolved"

    @property
    def family(self) -> str:
        if self.kind == "gibbs":
            return "thermal"
        if self.kind == "evolved":
            return "evolved"
        return "ground"

    def at(self, t: float | None = None) -> QuantumState:
        if self.kind != "evolved":
            return self._fixed
        t = float(self.spec.get("t", 0.0) if t is None else t)
        return evolve(self._initial, self._eig, t)

    def describe(self) -> dict:
        d = {"kind": self.kind}
        for key in ("beta", "t", "initial", "locals"):
            if key in self.spec:
                d[key] = self.spec[key]
        return d


def _spectral_from_values(values) -> SpectralData:
    from .states import _spectral

    return _spectral(np.asarray(values), full=True)


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepRow:
    tau: int
    t: float
    s: int
    partition: str
    joint: float
    factored: float
    defect: float
    max_region_size: int
    observables: tuple[str, ...] | None = field(default=None, compare=False)

    def csv_fields(self) -> list[str]:
        return [fmt(self.tau), fmt(self.t), fmt(self.s), self.partition, fmt(self.joint),
                fmt(self.factored), fmt(self.defect), fmt(self.max_region_size)]


@dataclass(frozen=True)
class BellPoint:
    tau: int
    t: float
    defect: float
    bell_value: float | None


@dataclass(frozen=True)
class Schedule:
    tau_list: tuple[int, ...]
    t_list: tuple[float, ...] = (0.0,)
    parties: int = 3
    region_size: int = 1
    partitions: tuple = ("seq",)

    @classmethod
    def from_spec(cls, spec: dict, lattice: Lattice, parties_default: int = 3) -> "Schedule":
        parties = int(spec.get("parties", parties_default))
        size = int(spec.get("region_size", 1))
        taus = spec.get("tau_list")
        if taus is None:
            taus = list(range(1, max_feasible_tau(lattice, parties, size) + 1))
        parts = spec.get("partitions", ["seq"])
        if parts == "all":
            parts = all_partitions(parties)
        else:
            parts = [parse_partition(p, parties) if isinstance(p, str) else frozenset(
                int(i) - 1 for i in p) for p in parts]
        return cls(tuple(int(x) for x in taus), tuple(float(x) for x in spec.get("t_list", [0.0])),
                   parties, size, tuple(parts))


def sweep_separation(prep: StatePreparer, schedule: Schedule, ineq: BellInequality | None = None,
                     opt: OptimizerOptions | None = None, workers: int = 1):
    """Defect rows for every ``(tau, t, partition)`` plus one Bell point per ``(tau, t)``.

    Each defect is the largest one over all non-identity Pauli-string
    observables on the placed regions. Rows are ordered by ``(tau, t)``.
    """
    lat = prep.lattice
    top = max_feasible_tau(lat, schedule.parties, schedule.region_size)
    bad = [tau for tau in schedule.tau_list if tau < 1 or tau > top]
    if bad:
        raise ScheduleError(f"separations {bad} are not realizable; max feasible tau is {top}")
    t_list = schedule.t_list if prep.time_dependent else (0.0,)
    tasks = [(tau, t) for tau in sorted(schedule.tau_list) for t in sorted(t_list)]
    run_bell = ineq is not None and ineq.n == schedule.parties

    def one(task):
        tau, t = task
        regions = place_regions(lat, schedule.parties, schedule.region_size, tau)
        rho = prep.at(t) if prep.time_dependent else prep.at()
        T = pauli_tensor(rho, regions)
        rows = []
        for part in schedule.partitions:
            rec = max_pauli_defect(rho, regions, part, T=T)
            rows.append(SweepRow(tau, t, len(regions), rec.partition, rec.joint, rec.factored,
                                 rec.defect, rec.max_region_size, rec.observables))
        value = optimize(rho, ineq, regions, opt).value if run_bell else None
        return rows, BellPoint(tau, t, max(r.defect for r in rows), value)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(task) for task in tasks]
    rows = [r for rs, _ in results for r in rs]
    return rows, [b for _, b in results]


def write_sweep_csv(rows: Iterable[SweepRow], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def read_sweep_csv(path: str | Path) -> list[SweepRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise DataError(f"CSV header must be {','.join(CSV_HEADER)}")
        rows = []
        for line in reader:
            if not line:
                continue
            try:
                tau, t, s, part, joint, fac, d, m = line
                rows.append(SweepRow(int(tau), float(t), int(s), part, float(joint), float(fac),
                                     float(d), int(m)))
            except ValueError as exc:
                raise DataError(f"malformed CSV row {line}: {exc}") from None
    return rows


def envelope(rows: Sequence[SweepRow]) -> list[tuple[int, float, float, int]]:
    """Largest defect per ``(tau, t)`` across partitions: ``(tau, t, defect, max_region_size)``."""
    best: dict = {}
    for r in rows:
        key = (r.tau, r.t)
        if key not in best or r.defect > best[key][0]:
            best[key] = (r.defect, r.max_region_size)
    return [(k[0], k[1], v[0], v[1]) for k, v in sorted(best.items())]


# ---------------------------------------------------------------- fits


@dataclass(frozen=True)
class DecayFit:
    c_est: float
    kappa_est: float
    r_squared: float
    points_used: int
    normalization: str = "raw"
    points_excluded: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LightConeFit:
    v_est: float
    kappa_est: float
    c_est: float
    residual: float
    points_used: int = 0
    points_excluded: int = 0
    rate_at_bound: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _linfit(x, y):
    A = np.vstack([np.ones_like(x), x]).T
    (b0, b1), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (b0 + b1 * x)
    ss_res = float(res @ res)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res <= 1e-24 else 0.0)
    return float(b0), float(b1), min(max(r2, 0.0), 1.0)


def fit_decay(points: Sequence[Sequence[float]], normalization: str = "raw") -> DecayFit:
    """Least squares of ``ln defect`` against ``tau``.

    ``points`` are ``(tau, defect)`` or ``(tau, defect, max_region_size)``;
    ``per_maxregion`` divides each defect by its region size first.
    """
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
    xs, ys, excluded = [], [], 0
    for p in points:
        tau, d = float(p[0]), float(p[1])
        if normalization == "per_maxregion":
            d /= float(p[2]) if len(p) > 2 else 1.0
        if not d > DEFECT_FLOOR:
            excluded += 1
            continue
        xs.append(tau)
        ys.append(math.log(d))
    if len(xs) < 3:
        raise InsufficientDataError(f"decay fit needs >= 3 defects above {DEFECT_FLOOR}, "
                                    f"got {len(xs)} ({excluded} excluded)")
    if len(set(xs)) < 2:
        raise InsufficientDataError("decay fit needs at least two distinct separations")
    b0, b1, r2 = _linfit(np.array(xs), np.array(ys))
    return DecayFit(math.exp(b0), -b1, r2, len(xs), normalization, excluded)


def _log_expm1(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x + np.log(-np.expm1(-x))


def fit_light_cone(points: Sequence[Sequence[float]]) -> LightConeFit:
    """Fit ``c e^{-kappa tau} (e^{kappa v t} - 1)`` to ``(tau, t, defect)`` points.

    ``kappa`` comes from the tau-slope at the largest time; ``c`` and ``v``
    from a profile least-squares fit of the remaining time dependence.
    """
    pts = [(float(a), float(b), float(d)) for a, b, d in points]
    usable = [p for p in pts if p[1] > 0 and p[2] > DEFECT_FLOOR]
    excluded = len(pts) - len(usable)
    taus = sorted({p[0] for p in usable})
    times = sorted({p[1] for p in usable})
    if len(taus) < 3 or len(times) < 3:
        raise InsufficientDataError("light-cone fit needs >= 3 separations and >= 3 positive times")
    t_max = times[-1]
    last = [p for p in usable if p[1] == t_max]
    if len({p[0] for p in last}) < 3:
        raise InsufficientDataError("light-cone fit needs >= 3 separations at the largest time")
    _, slope, _ = _linfit(np.array([p[0] for p in last]), np.log([p[2] for p in last]))
    kappa = -slope
    if not kappa > 0:
        raise NoDecayError(f"no decay in separation at t={t_max} (kappa={kappa:.3g})")
    tau = np.array([p[0] for p in usable])
    t = np.array([p[1] for p in usable])
    # ln A = ln c + ln(e^{rate t} - 1), rate = kappa v
    lnA = np.log([p[2] for p in usable]) + kappa * tau

    def profile(log_rate):
        g = _log_expm1(math.exp(log_rate) * t)
        lnc = float(np.mean(lnA - g))
        r = lnA - lnc - g
        return float(r @ r)

    lo, hi = math.log(1e-8 / t_max), math.log(50.0 / times[0])
    grid = np.linspace(lo, hi, 401)
    vals = [profile(x) for x in grid]
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(profile, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-14, "maxiter": 500})
    log_rate = float(res.x) if res.fun <= vals[k] else float(grid[k])
    at_bound = k in (0, len(grid) - 1)
    rate = math.exp(log_rate)
    g = _log_expm1(rate * t)
    lnc = float(np.mean(lnA - g))
    resid = lnA - lnc - g
    return LightConeFit(v_est=rate / kappa, kappa_est=kappa, c_est=math.exp(lnc),
                        residual=float(np.sqrt(np.mean(resid**2))), points_used=len(usable),
                        points_excluded=excluded, rate_at_bound=at_bound)


# ---------------------------------------------------------------- epsilon and tau*


@dataclass(frozen=True)
class EpsilonBounds:
    variants: dict
    minimum: float
    variant: str

    def to_dict(self) -> dict:
        return {"variants": dict(self.variants), "minimum": self.minimum, "variant": self.variant}


def epsilon_bound(fit: DecayFit | None, sums: dict, max_region: int, tau: float,
                  t: float | None = None, light_cone: LightConeFit | None = None,
                  family: str = "ground", n_parties: int = 3,
                  region_sizes: Sequence[int] | None = None) -> EpsilonBounds:
    """Every applicable epsilon for the state family, plus the smallest one.

    ground: ``{eta, gamma, gamma_hat} c e^{-kappa tau} |X|`` (``eta`` only for n=3);
    thermal: the same without ``|X|``;
    evolved: ``eta c e^{-kappa tau}(e^{kappa v t}-1)|X||Y||Z|`` for n=3 and
    ``{mu, mu_hat} c e^{-kappa tau}(e^{kappa v t}-1)``.
    """
    variants: dict = {}
    if family in ("ground", "thermal"):
        if fit is None:
            raise ConfigError("ground and thermal bounds need a decay fit")
        base = fit.c_est * math.exp(-fit.kappa_est * tau)
        scale = float(max_region) if family == "ground" else 1.0
        keys = ("eta", "gamma", "gamma_hat") if n_parties == 3 else ("gamma", "gamma_hat")
        for key in keys:
            variants[key] = sums[key] * base * scale
    elif family == "evolved":
        if light_cone is None or t is None:
            raise ConfigError("time-dependent bounds need a light-cone fit and a time")
        lc = light_cone
        base = lc.c_est * math.exp(-lc.kappa_est * tau) * math.expm1(lc.kappa_est * lc.v_est * t)
        if n_parties == 3:
            prod = float(np.prod(region_sizes)) if region_sizes is not None else float(max_region) ** 3
            variants["eta"] = sums["eta"] * base * prod
        variants["mu"] = sums["mu"] * base
        variants["mu_hat"] = sums["mu_hat"] * base
    else:
        raise ConfigError(f"unknown state family {family!r}")
    name = min(variants, key=lambda k: (variants[k], k))
    return EpsilonBounds(variants, float(variants[name]), name)


def tau_star(fit: DecayFit, delta: float = DEFAULT_DELTA, prefactor: float = 8.0) -> float:
    """Separation ``(1/kappa) ln(prefactor c / delta)`` past which the strict bound holds."""
    if delta <= 0:
        raise ConfigError("delta must be positive")
    if not fit.kappa_est > 0:
        raise NoDecayError(f"kappa={fit.kappa_est:.3g} <= 0: no finite critical separation")
    return math.log(prefactor * fit.c_est / delta) / fit.kappa_est


# ---------------------------------------------------------------- certification


@dataclass
class CertificationReport:
    inequality: str
    regions: list
    tau: int
    state: dict
    delta_loc: float
    value: float
    fits: dict
    epsilon: dict
    epsilon_min: float
    epsilon_variant: str
    epsilon_source: str
    epsilon_local: bool
    flags: list
    tau_star: float | None = None
    spectral: dict | None = None
    seed: int = 0
    engine_version: str = __version__
    optimizer: dict = field(default_factory=dict)

    def recompute_verdict(self) -> bool:
        return verdict(self.value, self.delta_loc, self.epsilon_min)

    def to_dict(self) -> dict:
        return asdict(self)


def verdict(value: float, delta_loc: float, epsilon: float) -> bool:
    return bool(value <= delta_loc + epsilon)


def _stage(stage: str, exc: Exception) -> Exception:
    exc.args = (f"[{stage}] " + (str(exc.args[0]) if exc.args else ""),) + tuple(exc.args[1:])
    return exc


def certify(prep: StatePreparer, ineq: BellInequality, regions: Sequence[Region],
            schedule: Schedule | None = None, opt: OptimizerOptions | None = None,
            delta: float = DEFAULT_DELTA, constants: dict | None = None,
            workers: int = 1) -> CertificationReport:
    """Fit clustering constants, optimize the Bell value and decide epsilon-locality.

    ``constants`` (``c``, ``kappa`` and for evolved states ``v``) replace the
    fitted values when given.
    """
    opt = opt or OptimizerOptions()
    regions = list(regions)
    lat = prep.lattice
    from .lattice import min_separation

    tau = min_separation(lat, regions)
    sizes = [X.size for X in regions]
    max_region = max(sizes)
    flags: list[str] = []
    if prep.spectral is not None and prep.kind == "ground" and prep.spectral.degenerate:
        flags.append("gap_degenerate")
    if prep.kind == "gibbs":
        flags.append("beta_star_unknown")

    fits: dict = {}
    decay = decay_raw = light = None
    if constants:
        c, kappa = float(constants["c"]), float(constants["kappa"])
        decay = DecayFit(c, kappa, float("nan"), 0, "per_maxregion")
        decay_raw = DecayFit(c, kappa, float("nan"), 0, "raw")
        if prep.time_dependent:
            if "v" not in constants:
                raise ConfigError("[constants] evolved states need c, kappa and v")
            light = LightConeFit(float(constants["v"]), kappa, c, float("nan"))
        fits["supplied"] = dict(constants)
        source = "supplied"
    else:
        source = "fitted"
        if schedule is None:
            schedule = Schedule(tuple(range(1, max_feasible_tau(lat, ineq.n, max_region) + 1)),
                                parties=ineq.n, region_size=max_region)
        if prep.time_dependent and len(schedule.t_list) < 4:
            t_end = float(prep.spec.get("t", 1.0)) or 1.0
            schedule = Schedule(schedule.tau_list, tuple(np.linspace(0.0, t_end, 4)),
                                schedule.parties, schedule.region_size, schedule.partitions)
        try:
            rows, _ = sweep_separation(prep, schedule, workers=workers)
        except DataError as exc:
            raise _stage("sweep", exc)
        env = envelope(rows)
        try:
            if prep.time_dependent:
                light = fit_light_cone([(a, b, d) for a, b, d, _ in env])
                fits["light_cone"] = light.to_dict()
            else:
                decay = fit_decay([(a, d, m) for a, _, d, m in env], "per_maxregion")
                decay_raw = fit_decay([(a, d, m) for a, _, d, m in env], "raw")
                fits["per_maxregion"] = decay.to_dict()
                fits["raw"] = decay_raw.to_dict()
        except DataError as exc:
            raise _stage("fit", exc)
        if decay is not None and not decay.kappa_est > 0:
            flags.append("no_decay")

    try:
        result = optimize(prep.at(), ineq, regions, opt)
    except Exception as exc:  # noqa: BLE001 - relabel and re-raise
        raise _stage("optimize", exc)
    delta_loc = ineq.delta_loc if ineq.delta_loc is not None else biseparable_bound(ineq)
    sums = coefficient_sums(ineq, sizes)
    family = prep.family
    fit_for = decay if family == "ground" else decay_raw
    eps = epsilon_bound(fit_for, sums, max_region, tau, t=prep.spec.get("t"),
                        light_cone=light, family=family, n_parties=ineq.n, region_sizes=sizes)
    if result.flags:
        flags.extend(result.flags)
    ts = None
    if family == "thermal" and decay_raw is not None and decay_raw.kappa_est > 0:
        ts = tau_star(decay_raw, delta, sums["eta"])
    return CertificationReport(
        inequality=ineq.name,
        regions=[[list(c) if len(c) > 1 else c[0] for c in lat.coords(X)] for X in regions],
        tau=int(tau),
        state=prep.describe(),
        delta_loc=float(delta_loc),
        value=float(result.value),
        fits=fits,
        epsilon=dict(eps.variants),
        epsilon_min=eps.minimum,
        epsilon_variant=eps.variant,
        epsilon_source=source,
        epsilon_local=verdict(result.value, delta_loc, eps.minimum),
        flags=flags,
        tau_star=ts,
        spectral=None if prep.spectral is None else _spectral_summary(prep.spectral),
        seed=int(opt.seed),
        optimizer={"restarts": opt.restarts, "max_iter": opt.max_iter, "tol": opt.tol,
                   "iterations": result.iterations, "converged": result.converged},
    )


def _spectral_summary(spec: SpectralData) -> dict:
    return {"ground_energy": spec.ground_energy, "gap": spec.gap, "degenerate": spec.degenerate}


def build_preparer(config: dict, lattice: Lattice) -> StatePreparer:
    ham = config.get("hamiltonian")
    H = hamiltonian_from_spec(lattice, ham) if ham else None
    return StatePreparer(lattice, config["state"], H)
