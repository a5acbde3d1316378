"""Command-line front end.

    trajrss scenario [paper-hexagon | FILE] [--out FILE]
    trajrss estimate [--scenario S] [--estimator joint] [--seed 0] [--repeat 1]
    trajrss crlb     [--scenario S] [--sigma 6] [--mode 2d]
    trajrss sweep    sigma|gamma|cep [--trials 1000] [--out DIR]

Exit codes: 0 success, 2 usage or schema error, 3 numerical or degenerate
geometry error, 4 every trial of an experiment failed.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from trajrss import __version__
from trajrss.crlb import crlb_report
from trajrss.errors import DegenerateGeometryError, ScenarioSchemaError, SingularFisherError
from trajrss.estimators import ESTIMATORS, GridModel, SearchGrid, estimate
from trajrss.model import Scenario, synthesize
from trajrss.montecarlo import (
    _json_safe,
    cep_map,
    miss_stats,
    quantization_floor,
    simulate,
    sweep_gamma,
    sweep_sigma,
)
from trajrss.scenario import BUILTINS, builtin, dump_scenario, load_scenario, scenario_hash

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_TOTAL_FAILURE = 4

OUT_DIR_ENV = "TRAJRSS_OUT_DIR"

DEFAULT_SIGMAS = [float(s) for s in range(1, 11)]
DEFAULT_GAMMAS = [2.0 + 0.25 * i for i in range(13)]

log = logging.getLogger("trajrss")


def _floats(text: str) -> list[float]:
    """Parse ``"1,2,3"`` or ``"start:stop:step"`` (inclusive stop)."""
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(n)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list or start:stop:step, got {text!r}") from None


def _resolve_scenario(args) -> Scenario:
    name = args.scenario
    scenario = builtin(name) if name in BUILTINS else load_scenario(name)
    if getattr(args, "steps", None):
        try:
            scenario = scenario.first_steps(args.steps)
        except ValueError as exc:
            raise ScenarioSchemaError("steps", str(exc)) from None
    if getattr(args, "gamma", None) is not None:
        try:
            scenario = scenario.with_gamma(args.gamma)
        except ValueError as exc:
            raise ScenarioSchemaError("gamma", str(exc)) from None
    if getattr(args, "sigma", None) is not None:
        if args.sigma < 0:
            raise ScenarioSchemaError("sigma", "must be non-negative")
        scenario = scenario.with_sigma(args.sigma)
    return scenario


def _grid(args, scenario: Scenario) -> SearchGrid:
    if args.grid_step <= 0 or args.aoi <= 0:
        raise ScenarioSchemaError("grid", "--grid-step and --aoi must be positive")
    altitude = float(scenario.true_u1[2])
    if args.mode == "3d":
        half = (args.aoi / 2, args.aoi / 2, args.z_extent)
        return SearchGrid((0.0, 0.0, altitude), half, args.grid_step, "3d")
    return SearchGrid.aoi(args.aoi, args.grid_step, altitude)


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def cmd_scenario(args) -> int:
    scenario = builtin(args.name) if args.name in BUILTINS else load_scenario(args.name)
    text = dump_scenario(scenario)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    report = sys.stderr if not args.out else sys.stdout
    print(f"N={scenario.N} base stations, K={scenario.K} trajectory points, "
          f"sha256={scenario_hash(scenario)[:12]}", file=report)
    print("k   du_x      du_y      du_z", file=report)
    for k, du in enumerate(scenario.trajectory.displacements):
        print(f"{k:<3d} {du[0]:9.2f} {du[1]:9.2f} {du[2]:9.2f}", file=report)
    print("virtual BS positions s_n - du_k (m):", file=report)
    vbs = scenario.virtual_base_stations()
    for k in range(scenario.K):
        cells = "  ".join(f"({p[0]:.1f}, {p[1]:.1f}, {p[2]:.1f})" for p in vbs[k])
        print(f"k={k}: {cells}", file=report)
    return EXIT_OK


def cmd_estimate(args) -> int:
    scenario = _resolve_scenario(args)
    grid = _grid(args, scenario)
    model = GridModel(scenario, grid)
    doc = {
        "estimator": args.estimator,
        "seed": args.seed,
        "grid": grid.to_dict(),
        "scenario_sha256": scenario_hash(scenario),
        "true_u1_m": scenario.true_u1.tolist(),
        "code_version": __version__,
        "created_utc": _now(),
    }
    if args.repeat <= 1:
        rss = synthesize(scenario, args.seed)
        report = estimate(args.estimator, rss, scenario, grid, model=model, refine=args.refine)
        doc["report"] = report.to_dict()
        doc["miss_distance_m"] = report.miss_distance(scenario.true_u1)
    else:
        miss = simulate(scenario, grid, [args.estimator], args.repeat, args.seed,
                        threads=args.threads, refine=args.refine, model=model)[args.estimator]
        s = miss_stats(miss)
        doc["repeat"] = args.repeat
        doc["summary"] = {
            "mean_miss_m": s.mean, "stderr_m": s.stderr, "rms_miss_m": s.rms,
            "rms_stderr_m": s.rms_stderr, "cep_m": s.median, "n_ok": s.n_ok, "n_failed": s.n_failed,
            "quantization_floor_m": quantization_floor(grid),
        }
        try:
            doc["summary"]["crlb_m"] = crlb_report(scenario.true_u1, scenario, mode=grid.mode).miss_distance_bound
        except (SingularFisherError, ValueError):
            doc["summary"]["crlb_m"] = None
        if s.n_ok == 0:
            _emit(doc)
            return EXIT_TOTAL_FAILURE
    _emit(doc)
    return EXIT_OK


def cmd_crlb(args) -> int:
    scenario = _resolve_scenario(args)
    sigma = args.sigma if args.sigma is not None else None
    report = crlb_report(scenario.true_u1, scenario, sigma, mode=args.mode)
    doc = report.to_dict()
    doc.update({
        "K": scenario.K,
        "N": scenario.N,
        "u1_m": scenario.true_u1.tolist(),
        "scenario_sha256": scenario_hash(scenario),
        "note": "joint-estimator bound; in 2d mode the altitude is known and only x, y are bounded",
    })
    _emit(doc)
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = _resolve_scenario(args)
    grid = _grid(args, scenario)
    out_dir = Path(args.out or os.environ.get(OUT_DIR_ENV, "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    common = dict(n_trials=args.trials, seed=args.seed, grid=grid, threads=args.threads, refine=args.refine)
    if args.kind == "sigma":
        result = sweep_sigma(scenario, args.sigmas or DEFAULT_SIGMAS, args.estimators, **common)
    elif args.kind == "gamma":
        result = sweep_gamma(scenario, args.gammas or DEFAULT_GAMMAS, args.estimators, **common)
    else:
        result = cep_map(scenario, args.sigmas or DEFAULT_SIGMAS, args.gammas or DEFAULT_GAMMAS,
                         args.threshold, **common)
    stem = out_dir / f"sweep_{args.kind}"
    result.to_csv(stem.with_suffix(".csv"))
    result.to_json(stem.with_suffix(".json"))

    rows = result.table()
    if args.kind == "cep":
        print(f"{'sigma_db':>8} {'gamma':>6} {'cep_m':>9} {'<thr':>5}")
        for r in rows:
            print(f"{r['sigma_db']:8.2f} {r['gamma']:6.2f} {r['cep_m']:9.2f} {int(r['below_threshold']):5d}")
    else:
        print(f"{result.axis:>8} {'estimator':>9} {'mean_m':>9} {'rms_m':>9} {'stderr':>7} {'crlb_m':>9} {'failed':>6}")
        for r in rows:
            print(f"{r['axis_value']:8.2f} {r['estimator']:>9} {r['mean_miss_m']:9.2f} {r['rms_miss_m']:9.2f} "
                  f"{r['stderr_m']:7.2f} {r['crlb_m']:9.2f} {r['n_failed']:6d}")
    print(f"wrote {stem.with_suffix('.csv')} and {stem.with_suffix('.json')}")
    if all(r["n_ok"] == 0 for r in rows):
        return EXIT_TOTAL_FAILURE
    return EXIT_OK


def _add_scenario_flags(p: argparse.ArgumentParser, sigma_default=None) -> None:
    p.add_argument("--scenario", default="paper-hexagon",
                   help="builtin name (%s) or path to a scenario JSON file" % ", ".join(BUILTINS))
    p.add_argument("--sigma", type=float, default=sigma_default, help="override sigma (dB, homogeneous)")
    p.add_argument("--gamma", type=float, default=None, help="override the path-loss exponent")
    p.add_argument("--steps", type=int, default=None, help="keep only the first K trajectory points")


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-step", type=float, default=10.0, help="grid step in meters (default 10)")
    p.add_argument("--aoi", type=float, default=2000.0, help="side of the square search area in meters")
    p.add_argument("--mode", choices=("2d", "3d"), default="2d", help="2d fixes the known altitude")
    p.add_argument("--z-extent", type=float, default=100.0, help="3d only: +- altitude search range (m)")
    p.add_argument("--refine", action="store_true", help="re-search +-1 step at step/10 around each minimum")
    p.add_argument("--threads", type=int, default=1, help="worker threads; 0 uses every core")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajrss", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"trajrss {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", help="write or validate a normalized scenario file")
    p.add_argument("name", nargs="?", default="paper-hexagon", help="builtin name or scenario file")
    p.add_argument("--out", help="write the normalized scenario here instead of stdout")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("estimate", help="simulate one measurement and localize the UAV")
    _add_scenario_flags(p)
    _add_grid_flags(p)
    p.add_argument("--estimator", choices=sorted(ESTIMATORS), default="joint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=1, help="average over this many seeded trials")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("crlb", help="joint CRLB and miss-distance bound at the true position")
    _add_scenario_flags(p)
    p.add_argument("--mode", choices=("2d", "3d"), default="2d")
    p.set_defaults(func=cmd_crlb)

    p = sub.add_parser("sweep", help="Monte Carlo experiments: sigma sweep, gamma sweep, CEP map")
    p.add_argument("kind", choices=("sigma", "gamma", "cep"))
    _add_scenario_flags(p)
    _add_grid_flags(p)
    p.add_argument("--sigmas", type=_floats, default=None, help="sigma values (dB), e.g. 1:10:1")
    p.add_argument("--gammas", type=_floats, default=None, help="gamma values, e.g. 2:5:0.25")
    p.add_argument("--estimators", type=lambda s: s.split(","), default=list(ESTIMATORS),
                   help="comma list from: " + ",".join(ESTIMATORS))
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=100.0, help="CEP threshold in meters")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_DIR_ENV} or .)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "estimators", None):
        bad = [e for e in args.estimators if e not in ESTIMATORS]
        if bad:
            parser.error(f"unknown estimator(s): {', '.join(bad)}")
    for name in ("trials", "repeat"):
        if getattr(args, name, 1) < 1:
            parser.error(f"--{name} must be >= 1")
    try:
        return args.func(args)
    except ScenarioSchemaError as exc:
        print(f"error: scenario field {exc.field!r}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularFisherError as exc:
        print(json.dumps({"error": "singular-fisher", "message": str(exc),
                          "condition_number": _json_safe(exc.condition_number)}), file=sys.stderr)
        return EXIT_NUMERIC
    except DegenerateGeometryError as exc:
        print(json.dumps({"error": "degenerate-geometry", "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
