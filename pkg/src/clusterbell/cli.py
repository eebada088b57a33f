"""Command-line front end.

Exit codes: 0 certified local, 1 violation detected, 2 config error,
3 resource error, 4 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import (
    BellPoint,
    Schedule,
    StatePreparer,
    build_preparer,
    certify,
    envelope,
    fit_decay,
    fit_light_cone,
    fmt,
    place_regions,
    read_sweep_csv,
    sweep_separation,
    write_sweep_csv,
)
from .bell import OptimizerOptions, biseparable_bound, inequality_from_spec, optimize, save_assignment
from .config import load_config, run_id
from .errors import ClusterBellError, ConfigError, DataError
from .lattice import lattice_from_spec, min_separation, region_from_spec
from .operators import DENSE_CAP, hamiltonian_from_spec
from .states import dump_state, spectrum

EXIT_LOCAL, EXIT_VIOLATION, EXIT_CONFIG, EXIT_RESOURCE, EXIT_DATA = 0, 1, 2, 3, 4
RESULT_HEADER = ("run_id", "stage", "tau", "t", "defect", "bell_value", "wall_time_ms")
SPECTRUM_HEAD = 8


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def _require(config: dict, *keys: str) -> None:
    for key in keys:
        if key not in config:
            raise ConfigError(f"$.{key}: required for this command")


def _seed(args, config) -> int:
    seed = getattr(args, "seed", None)
    return int(seed if seed is not None else config.get("seed", 0))


def _opt(args, config) -> OptimizerOptions:
    o = config.get("optimizer", {})
    return OptimizerOptions(restarts=int(o.get("restarts", 20)), seed=_seed(args, config),
                            max_iter=int(o.get("max_iter", 500)), tol=float(o.get("tol", 1e-9)),
                            workers=_threads(args))


def _threads(args) -> int:
    n = getattr(args, "threads", None) or 1
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    return int(n)


def _effective_config(args, config) -> dict:
    cfg = dict(config)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = int(args.seed)
    return cfg


def _out(args, config, key: str) -> str | None:
    return getattr(args, "out", None) or config.get("output", {}).get(key)


def _dump(args, prep: StatePreparer, out: str | None) -> None:
    if not getattr(args, "dump_state", False):
        return
    base = Path(out).with_suffix("") if out else Path("state")
    dump_state(prep.at(), base.with_name(base.name + ".state"), kind=prep.kind)


def _regions(config, lat, parties: int):
    if "regions" in config:
        return [region_from_spec(lat, r) for r in config["regions"]]
    tau = config.get("certify", {}).get("tau")
    if tau is None:
        raise ConfigError("$.regions: give explicit regions or certify.tau")
    size = int(config.get("schedule", {}).get("region_size", 1))
    return place_regions(lat, parties, size, int(tau))


# ---------------------------------------------------------------- commands


def cmd_build(args, config) -> int:
    lat = lattice_from_spec(config["lattice"])
    summary = {"sites": lat.size, "lattice": lat.to_dict()}
    ham = config.get("hamiltonian")
    if ham:
        H = hamiltonian_from_spec(lat, ham)
        summary["terms"] = len(H.terms)
        summary["bonds"] = len({t.support for t in H.terms if len(t.factors) == 2})
        summary["bond_terms"] = sum(1 for t in H.terms if len(t.factors) == 2)
        summary["field_terms"] = sum(1 for t in H.terms if len(t.factors) == 1)
        summary["hermitian"] = H.hermitian
        mode = config.get("spectrum", "head")
        if mode == "full" and 2**lat.size > DENSE_CAP:
            from .errors import ResourceError

            raise ResourceError(f"full spectrum of 2^{lat.size} states exceeds the dense cap {DENSE_CAP}")
        if mode != "none" and (mode == "full" or 2**lat.size <= DENSE_CAP):
            spec = spectrum(H)
            summary["spectrum"] = spec.to_dict(None if mode == "full" else SPECTRUM_HEAD)
    if "state" in config and getattr(args, "dump_state", False):
        _dump(args, build_preparer(config, lat), _out(args, config, "state"))
    _emit(_dumps(summary), _out(args, config, "build"))
    return EXIT_LOCAL


def _result_rows(rid: str, points: list[BellPoint], timings: dict | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    for p in points:
        wall = fmt(timings[(p.tau, p.t)]) if timings else ""
        w.writerow([rid, "sweep", fmt(p.tau), fmt(p.t), fmt(p.defect),
                    "" if p.bell_value is None else fmt(p.bell_value), wall])
    return buf.getvalue()


def cmd_sweep(args, config) -> int:
    _require(config, "state")
    cfg = _effective_config(args, config)
    lat = lattice_from_spec(config["lattice"])
    prep = build_preparer(config, lat)
    ineq = inequality_from_spec(config["inequality"]) if "inequality" in config else None
    parties = ineq.n if ineq is not None else 3
    schedule = Schedule.from_spec(config.get("schedule", {}), lat, parties)
    start = time.perf_counter()
    rows, points = sweep_separation(prep, schedule, ineq, _opt(args, config), workers=_threads(args))
    elapsed = (time.perf_counter() - start) * 1000.0
    out = _out(args, config, "csv")
    _emit(write_sweep_csv(rows), out)
    if out:
        timings = {(p.tau, p.t): elapsed / len(points) for p in points} if args.timings else None
        Path(out).with_suffix(".results.csv").write_text(
            _result_rows(run_id(cfg), points, timings), encoding="utf-8", newline="")
    _dump(args, prep, out)
    return EXIT_LOCAL


def cmd_certify(args, config) -> int:
    _require(config, "state", "inequality")
    lat = lattice_from_spec(config["lattice"])
    ineq = inequality_from_spec(config["inequality"])
    prep = build_preparer(config, lat)
    regions = _regions(config, lat, ineq.n)
    cert = config.get("certify", {})
    sched = None
    if "schedule" in config:
        size = max(X.size for X in regions)
        sched_spec = {"parties": ineq.n, "region_size": size, **config["schedule"]}
        sched = Schedule.from_spec(sched_spec, lat, ineq.n)
    report = certify(prep, ineq, regions, schedule=sched, opt=_opt(args, config),
                     delta=float(cert.get("delta", 0.01)), constants=cert.get("constants"),
                     workers=_threads(args))
    doc = report.to_dict()
    doc["run_id"] = run_id(_effective_config(args, config))
    out = _out(args, config, "report")
    _emit(_dumps(doc), out)
    _dump(args, prep, out)
    return EXIT_LOCAL if report.epsilon_local else EXIT_VIOLATION


def cmd_fit(args, config) -> int:
    path = args.csv or (config or {}).get("output", {}).get("csv")
    if not path:
        raise ConfigError("fit needs a CSV path")
    try:
        rows = read_sweep_csv(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    env = envelope(rows)
    taus = {e[0] for e in env}
    times = {e[1] for e in env}
    if len(taus) > 1 and len(times) > 1:
        fit = fit_light_cone([(a, b, d) for a, b, d, _ in env])
        doc = {"kind": "light_cone", **fit.to_dict()}
    else:
        fit = fit_decay([(a, d, m) for a, _, d, m in env], args.normalization)
        doc = {"kind": "decay", **fit.to_dict()}
    _emit(_dumps(doc), getattr(args, "out", None))
    return EXIT_LOCAL


def cmd_bound(args, config) -> int:
    spec = {"name": args.inequality} if args.inequality else (config or {}).get("inequality")
    if spec is None:
        raise ConfigError("$.inequality: required for this command")
    if args.inequality == "seevinck_svetlichny":
        spec.update({"n": args.n, "sign": args.sign})
    ineq = inequality_from_spec(spec)
    doc = {"name": ineq.name, "n": ineq.n, "eta": ineq.eta, "catalog_delta_loc": ineq.delta_loc,
           "biseparable_bound": biseparable_bound(ineq)}
    _emit(_dumps(doc), getattr(args, "out", None))
    return EXIT_LOCAL


def cmd_bell(args, config) -> int:
    _require(config, "state", "inequality")
    lat = lattice_from_spec(config["lattice"])
    ineq = inequality_from_spec(config["inequality"])
    prep = build_preparer(config, lat)
    regions = _regions(config, lat, ineq.n)
    res = optimize(prep.at(), ineq, regions, _opt(args, config))
    doc = {"inequality": ineq.name, "value": res.value, "iterations": res.iterations,
           "restarts_used": res.restarts_used, "converged": res.converged, "flags": list(res.flags),
           "tau": min_separation(lat, regions) if len(regions) > 1 else None,
           "delta_loc": ineq.delta_loc, "seed": _seed(args, config)}
    out = _out(args, config, "bell")
    _emit(_dumps(doc), out)
    if out:
        base = Path(out).with_suffix("")
        save_assignment(res.assignment, base.with_name(base.name + ".assignment"))
    _dump(args, prep, out)
    return EXIT_LOCAL


# ---------------------------------------------------------------- parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="experiment JSON config")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--seed", type=int, help="master seed, overrides the config")
    p.add_argument("--dump-state", action="store_true", dest="dump_state",
                   help="write the prepared state as .bin plus a .json sidecar")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="clusterbell", parents=[common],
                                     description="Clustering and Bell-locality engine for spin lattices.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="summarize the Hamiltonian")
    sp = sub.add_parser("sweep", parents=[common], help="defect sweep to CSV")
    sp.add_argument("--timings", action="store_true", help="fill the wall_time_ms column")
    sub.add_parser("certify", parents=[common], help="epsilon-locality report")
    fp = sub.add_parser("fit", parents=[common], help="fit decay or light-cone constants")
    fp.add_argument("csv", nargs="?", help="sweep CSV")
    fp.add_argument("--normalization", choices=["raw", "per_maxregion"], default="raw")
    bp = sub.add_parser("bound", parents=[common], help="exact biseparable bound")
    bp.add_argument("--inequality", choices=["svetlichny3", "svetlichny4", "seevinck_svetlichny"])
    bp.add_argument("--n", type=int, default=3)
    bp.add_argument("--sign", choices=["+", "-"], default="+")
    sub.add_parser("bell", parents=[common], help="optimize the Bell value at the config regions")
    return parser


COMMANDS = {"build": cmd_build, "sweep": cmd_sweep, "certify": cmd_certify, "fit": cmd_fit,
            "bound": cmd_bound, "bell": cmd_bell}
NEEDS_CONFIG = {"build", "sweep", "certify", "bell"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_LOCAL
    try:
        cfg_path = getattr(args, "config", None)
        if args.command in NEEDS_CONFIG and not cfg_path:
            raise ConfigError("--config is required for this command")
        config = load_config(cfg_path) if cfg_path else None
        return COMMANDS[args.command](args, config)
    except ClusterBellError as exc:
        print(f"clusterbell: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
