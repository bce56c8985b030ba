"""Command-line interface: single solves, CRLB evaluation, parameter sweeps,
beampattern export, and the validation suite.

Exit codes: 0 success, 2 parse/validation error, 3 singular FIM,
4 infeasible, 5 tolerance not met. CSV output is RFC-4180 style with
`#`-prefixed metadata comment lines; `--no-timestamp` makes files
byte-reproducible.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, channel, metrics, scenario, solvers, validate
from .conic import ConicSettings
from .scenario import (SingularGeometryError, ValidationError, linear_to_db,
                       watts_to_dbm)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SINGULAR = 3
EXIT_INFEASIBLE = 4
EXIT_TOLERANCE = 5

_STATUS_EXIT = {"solved": EXIT_OK, "infeasible": EXIT_INFEASIBLE,
                "tolerance-not-met": EXIT_TOLERANCE}


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return "nan"
        return f"{float(x):.8e}"
    return str(x)


def _write_csv(path, header, rows, meta: dict, no_timestamp: bool):
    lines = []
    for key, value in meta.items():
        lines.append(f"# {key}: {value}")
    if not no_timestamp:
        import datetime
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        lines.append(f"# created_utc: {stamp}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _load_scenario_or_die(path) -> scenario.Scenario:
    if not os.path.exists(path):
        raise ValidationError(f"scenario file not found: {path}")
    return scenario.load_scenario_file(path)


def _default_tolerances() -> str:
    req = solvers.SolveRequest(mode="sensing", algorithm="auto", sinr_threshold_eta=0.0)
    return (f"sca_rel_tol={req.sca_rel_tol};bisection_tol={req.bisection_tol};"
            f"rank_tol={req.rank_tol};conic_accuracy={req.conic.accuracy}")


def _base_meta(s, seed=None):
    meta = {"nisac_version": __version__, "scenario_hash": scenario.scenario_hash(s)}
    if seed is not None:
        meta["seed"] = seed
    meta["tolerances"] = _default_tolerances()
    return meta


# -- crlb ---------------------------------------------------------------------------

def cmd_crlb(args) -> int:
    s = _load_scenario_or_die(args.scenario)
    ch = channel.draw_channels(s, args.seed)
    if args.uniform_mrt:
        b = metrics.uniform_mrt(s, ch)
    elif args.beamformers:
        b, _doc = solvers.load_beamformers(args.beamformers)
    else:
        raise ValidationError("provide --beamformers FILE or --uniform-mrt")
    crlbs = [metrics.crlb(s, ch, b, u).crlb_m2 for u in range(s.num_targets)]
    sinrs = metrics.all_sinrs(s, ch, b)
    power = metrics.per_bs_power(b)
    lines = []
    for u, c in enumerate(crlbs):
        lines.append(f"target {u}: crlb_m2 = {_fmt(c)}")
    for m in range(s.num_bs):
        for k in range(s.num_users):
            lines.append(f"user ({m},{k}): sinr_db = {_fmt(linear_to_db(max(sinrs[m, k], 1e-300)))}")
    for m in range(s.num_bs):
        lines.append(f"bs {m}: power_dbm = {_fmt(watts_to_dbm(max(power[m], 1e-300)))}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for key, value in _base_meta(s, args.seed).items():
                fh.write(f"# {key}: {value}\n")
            fh.write(text)
    return EXIT_OK


# -- solve --------------------------------------------------------------------------

def _request_from_args(args) -> solvers.SolveRequest:
    eta = None
    eps = None
    if args.mode == "sensing":
        if args.eta_db is None:
            raise ValidationError("sensing mode requires --eta-db")
        if args.epsilon is not None:
            raise ValidationError("--epsilon is a comm-mode flag")
        eta = 10.0 ** (args.eta_db / 10.0) if args.eta_db > -math.inf else 0.0
        if args.eta_db <= -200:
            eta = 0.0
    else:
        if args.epsilon is None:
            raise ValidationError("comm mode requires --epsilon (m^2)")
        if args.eta_db is not None:
            raise ValidationError("--eta-db is a sensing-mode flag")
        eps = args.epsilon
    conic = ConicSettings(backend=args.backend)
    return solvers.SolveRequest(mode=args.mode, algorithm=args.algo,
                                sinr_threshold_eta=eta, crlb_threshold_epsilon=eps,
                                seed=args.seed, conic=conic)


def cmd_solve(args) -> int:
    s = _load_scenario_or_die(args.scenario)
    req = _request_from_args(args)
    if args.algo == "bisection" and s.num_bs != 1:
        raise ValidationError("bisection requires M=1")
    ch = channel.draw_channels(s, args.seed)
    t0 = time.perf_counter()
    report = solvers.run_request(s, ch, req)
    seconds = time.perf_counter() - t0
    if args.out:
        solvers.save_report(args.out, report, s, req, timestamp=not args.no_timestamp)
    min_sinr_db = linear_to_db(report.min_sinr) if report.sinr is not None and report.min_sinr > 0 \
        else float("nan")
    crlb_txt = ";".join(_fmt(c) for c in report.crlb_m2) if report.crlb_m2 is not None else "nan"
    max_power_dbm = watts_to_dbm(float(np.max(report.per_bs_power_w))) \
        if report.per_bs_power_w is not None else float("nan")
    print(",".join([report.status, _fmt(report.objective), _fmt(min_sinr_db), crlb_txt,
                    _fmt(max_power_dbm), str(report.iterations), _fmt(seconds)]))
    return _STATUS_EXIT.get(report.status, EXIT_TOLERANCE)


# -- sweep --------------------------------------------------------------------------

_SENSING_ALGOS = {"sdr", "sca", "zf", "mmse", "beampattern"}
_COMM_ALGOS = {"bisection", "sca", "zf", "mmse"}
_PARAMETERS = {"eta_db", "epsilon_m2", "num_tmts", "num_bs", "num_targets"}


def _load_sweep_spec(path) -> dict:
    if not os.path.exists(path):
        raise ValidationError(f"sweep spec not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"sweep spec does not parse: {e}") from e
    for key in ("parameter", "values", "algorithms", "seeds", "scenario"):
        if key not in spec:
            raise ValidationError(f"sweep spec missing '{key}'")
    if spec["parameter"] not in _PARAMETERS:
        raise ValidationError(f"unknown sweep parameter '{spec['parameter']}'")
    for key in ("values", "algorithms", "seeds"):
        if not isinstance(spec[key], list) or not spec[key]:
            raise ValidationError(f"sweep spec '{key}' must be a nonempty list")
    param = spec["parameter"]
    mode = spec.get("mode")
    if param == "eta_db":
        mode = mode or "sensing"
        if mode != "sensing":
            raise ValidationError("eta_db sweeps require sensing mode")
    elif param == "epsilon_m2":
        mode = mode or "comm"
        if mode != "comm":
            raise ValidationError("epsilon sweeps require comm mode")
    elif mode is None:
        raise ValidationError(f"'{param}' sweeps need an explicit 'mode'")
    spec["mode"] = mode
    allowed = _SENSING_ALGOS if mode == "sensing" else _COMM_ALGOS
    bad = [a for a in spec["algorithms"] if a not in allowed]
    if bad:
        raise ValidationError(f"algorithms {bad} not valid in {mode} mode")
    if mode == "sensing" and param != "eta_db" and "eta_db" not in spec:
        raise ValidationError(f"'{param}' sweep in sensing mode needs a fixed 'eta_db'")
    if mode == "comm" and param != "epsilon_m2" and "epsilon_m2" not in spec:
        raise ValidationError(f"'{param}' sweep in comm mode needs a fixed 'epsilon_m2'")
    return spec


def _sweep_cell(payload):
    """One (value, algorithm, seed) cell; importable so worker pools can run it."""
    (scenario_text, param, value, algo, seed, mode, eta_db, epsilon, backend) = payload
    try:
        s = scenario.load_scenario(scenario_text)
        if param == "num_tmts":
            s = scenario.with_first_tmts(s, int(value))
        elif param == "num_bs":
            s = scenario.with_first_bss(s, int(value))
        elif param == "num_targets":
            s = scenario.with_first_targets(s, int(value))
        if param == "eta_db":
            eta_db = float(value)
        if param == "epsilon_m2":
            epsilon = float(value)
        eta = 10.0 ** (eta_db / 10.0) if mode == "sensing" else None
        if mode == "sensing" and eta_db <= -200:
            eta = 0.0
        req = solvers.SolveRequest(
            mode=mode, algorithm=algo,
            sinr_threshold_eta=eta,
            crlb_threshold_epsilon=epsilon if mode == "comm" else None,
            seed=int(seed), conic=ConicSettings(backend=backend))
        ch = channel.draw_channels(s, int(seed))
        t0 = time.perf_counter()
        report = solvers.run_request(s, ch, req)
        seconds = time.perf_counter() - t0
        crlb_val = report.max_crlb
        sinr_db = linear_to_db(report.min_sinr) if report.sinr is not None and report.min_sinr > 0 \
            else float("nan")
        power_dbm = watts_to_dbm(float(np.max(report.per_bs_power_w))) \
            if report.per_bs_power_w is not None else float("nan")
        return (param, value, algo, seed, report.status, crlb_val, sinr_db, power_dbm,
                report.iterations, seconds)
    except Exception as e:  # per-cell failures recorded, the sweep continues
        return (param, value, algo, seed, f"error:{type(e).__name__}", float("nan"),
                float("nan"), float("nan"), 0, 0.0)


def cmd_sweep(args) -> int:
    spec = _load_sweep_spec(args.spec)
    with open(spec["scenario"], "r", encoding="utf-8") as fh:
        scenario_text = fh.read()
    s = scenario.load_scenario(scenario_text)  # validate up front
    out_path = args.out or spec.get("output")
    cells = [(scenario_text, spec["parameter"], value, algo, seed, spec["mode"],
              spec.get("eta_db", 0.0), spec.get("epsilon_m2"), args.backend)
             for value in spec["values"]
             for algo in spec["algorithms"]
             for seed in spec["seeds"]]
    workers = int(os.environ.get("NISAC_WORKERS", "1"))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = []
        for cell in cells:
            row = _sweep_cell(cell)
            rows.append(row)
            print(f"done: {row[0]}={row[1]} algo={row[2]} seed={row[3]} status={row[4]}")
    if args.no_timestamp:
        # byte-stable golden-file mode: wall times are the only varying field
        rows = [row[:9] + (0.0,) for row in rows]
    meta = _base_meta(s)
    meta.update({"parameter": spec["parameter"], "mode": spec["mode"],
                 "algorithms": ";".join(spec["algorithms"]),
                 "seeds": ";".join(str(x) for x in spec["seeds"])})
    header = ["param", "value", "algo", "seed", "status", "crlb_m2", "min_sinr_db",
              "power_dbm", "iters", "seconds"]
    _write_csv(out_path, header, rows, meta, args.no_timestamp)
    return EXIT_OK


# -- beampattern ----------------------------------------------------------------------

def cmd_beampattern(args) -> int:
    b, doc = solvers.load_beamformers(args.solution)
    array = doc["meta"]["array"]

    class _ArrayParams:
        num_tx_antennas = int(array["num_tx_antennas"])
        antenna_spacing_ratio = float(array["antenna_spacing_ratio"])

    grid_deg = np.arange(-90.0, 90.0 + args.grid_deg / 2, args.grid_deg)
    rows = []
    for m in range(b.num_bs):
        lin, norm_db = metrics.beampattern(b, m, np.radians(grid_deg), _ArrayParams)
        for angle, g, gdb in zip(grid_deg, lin, norm_db):
            rows.append((m, float(angle), float(g), float(gdb)))
    sol_meta = doc["meta"]
    meta = {"nisac_version": __version__,
            "scenario_hash": sol_meta.get("scenario_hash", ""),
            "seed": sol_meta.get("seed", ""),
            "tolerances": ";".join(f"{k}={v}" for k, v in sol_meta.get("tolerances", {}).items()),
            "grid_deg": args.grid_deg}
    _write_csv(args.out, ["bs_index", "angle_deg", "gain_linear", "gain_db_normalized"],
               rows, meta, args.no_timestamp)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nisac",
                                     description="Coordinated beamforming for networked "
                                                 "ISAC with ToA-based localization")
    parser.add_argument("--version", action="version", version=f"nisac {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("crlb", help="evaluate CRLB / SINR / power for fixed beamformers")
    p.add_argument("--scenario", required=True)
    p.add_argument("--beamformers", help="solution file with beamformers")
    p.add_argument("--uniform-mrt", action="store_true",
                   help="use max-power MRT with equal power split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_crlb)

    p = sub.add_parser("solve", help="run one beamforming design")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", required=True, choices=["sensing", "comm"])
    p.add_argument("--algo", required=True,
                   choices=["auto", "sdr", "sca", "bisection", "zf", "mmse", "beampattern"])
    p.add_argument("--eta-db", type=float, help="SINR threshold in dB (sensing mode)")
    p.add_argument("--epsilon", type=float, help="CRLB threshold in m^2 (comm mode)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="solution file to write")
    p.add_argument("--backend", default="clarabel", choices=["clarabel", "scs"])
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("sweep", help="run a parameter sweep from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", help="override the spec's output path")
    p.add_argument("--backend", default="clarabel", choices=["clarabel", "scs"])
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("beampattern", help="export beampatterns of a solution file")
    p.add_argument("--solution", required=True)
    p.add_argument("--grid-deg", type=float, default=0.5)
    p.add_argument("--out")
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(fn=cmd_beampattern)

    p = sub.add_parser("validate", help="run the property suite")
    p.set_defaults(fn=lambda args: EXIT_OK if validate.run_validation() else 1)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SingularGeometryError as e:
        print(f"error: singular FIM: {e}", file=sys.stderr)
        return EXIT_SINGULAR
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except metrics.SingularFimError as e:
        print(f"error: singular FIM: {e}", file=sys.stderr)
        return EXIT_SINGULAR
    except (json.JSONDecodeError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
