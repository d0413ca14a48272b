"""Command-line front end: analyze, synth, simulate, example.

Exit codes: 0 success, 1 no certificate / numerical failure, 2 invalid input.
Reports go to stdout as JSON and are byte-identical for fixed inputs and seeds.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import serialize as ser
from .benchmarks import AMB_DISPLACEMENT_STATES, EXAMPLES
from .errors import (IllConditionedV, IllPosedLoop, Infeasible, LftError, SingularFactor, SolverFailure,
                     UnstableFrozenLoop)
from .lft_model import LftController, close_output_feedback, close_state_feedback, validate_plant
from .sdp import SolverOptions
from .simulation import (delta_grid, estimate_h2_white_noise, estimate_induced_gain, settling_index,
                         step_disturbance_response, write_csv)
from .synthesis import analyze_robust_h2, synthesize_gs, synthesize_sf

log = logging.getLogger("lfth2")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class UsageError(Exception):
    pass


def _flags(args) -> dict:
    return {"tol": args.tol, "seed": args.seed, "max_iter": args.max_iter}


def _opts(args) -> SolverOptions:
    return SolverOptions(tol=args.tol, max_iter=args.max_iter)


def _emit(report: dict) -> None:
    sys.stdout.write(ser.dumps(report) + "\n")


def _closed_loop(plant, controller_doc):
    if controller_doc is None:
        return ser.plant_as_closed_loop(plant)
    K = ser.controller_from_dict(controller_doc)
    if isinstance(K, LftController):
        return close_output_feedback(plant, K)
    if K.shape != (plant.nu, plant.n):
        raise ser.InvalidDocument(f"gain has shape {K.shape}, expected {(plant.nu, plant.n)}")
    return close_state_feedback(plant, K)


def _load_discrete(path):
    plant = ser.load_plant(path)
    if plant.ts <= 0:
        raise ser.InvalidDocument("plant must be discrete-time (ts > 0)")
    return plant


def cmd_analyze(args) -> int:
    plant = _load_discrete(args.plant)
    ctrl = ser.load_json(args.controller) if args.controller else None
    clp = _closed_loop(plant, ctrl)
    cert = analyze_robust_h2(clp, _opts(args))
    _emit({"command": "analyze", "flags": _flags(args), "status": cert.status, "gamma": cert.gamma,
           "margins": cert.margins, "iterations": cert.iterations})
    return EXIT_OK


def cmd_synth(args) -> int:
    plant = _load_discrete(args.plant)
    opts = _opts(args)
    report = {"command": "synth", "mode": args.mode, "flags": _flags(args)}
    if args.mode == "sf":
        res = synthesize_sf(plant, opts, verify=True)
        doc = ser.controller_to_dict(res.F)
        report.update(status=res.status, gamma=res.gamma, gamma_verified=res.gamma_verified,
                      margins=res.margins)
    else:
        res = synthesize_gs(plant, opts, verify=True)
        doc = ser.controller_to_dict(res.controller)
        log.info("controller round-trip error %.3e", res.roundtrip_error)
        report.update(status=res.status, gamma=res.gamma, gamma_verified=res.gamma_verified,
                      roundtrip_error=res.roundtrip_error, perturbed=res.perturbed, margins=res.margins)
    if args.output:
        ser.save_json(doc, args.output)
        report["controller_file"] = str(args.output)
    else:
        report["controller"] = doc
    _emit(report)
    return EXIT_OK


def _parse_ints(text):
    if text is None:
        return None
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def cmd_simulate(args) -> int:
    plant = _load_discrete(args.plant)
    ctrl = ser.load_json(args.controller) if args.controller else None
    clp = _closed_loop(plant, ctrl)
    chosen = [bool(args.white_noise), args.step is not None, bool(args.induced)]
    if sum(chosen) != 1:
        raise UsageError("choose exactly one of --white-noise, --step, --induced")
    report = {"command": "simulate", "flags": _flags(args)}
    if args.white_noise:
        burn = min(512, args.horizon // 8) if args.burn_in is None else args.burn_in
        est = estimate_h2_white_noise(clp, n_runs=args.runs, T=args.horizon, burn_in=burn, seed=args.seed,
                                      workers=args.workers)
        report.update(scenario="white_noise", estimate=est.to_dict())
    elif args.induced:
        est = estimate_induced_gain(clp, args.grid)
        report.update(scenario="induced", estimate=est.to_dict())
    else:
        channels = _parse_ints(args.channels) or (0, 1)
        states = _parse_ints(args.states)
        runs = []
        for i, delta in enumerate(delta_grid(clp.structure, args.grid) if clp.np else [np.zeros((0, 0))]):
            run = step_disturbance_response(clp, delta, magnitude=args.step, T=args.horizon, channels=channels)
            sig = run.x[:, list(states)] if states else run.e
            k = settling_index(sig)
            peak = float(np.max(np.abs(sig)))
            runs.append({"delta": [float(v) for v in np.diag(delta)], "peak": peak, "settling_step": k,
                         "settling_time": None if k is None else k * clp.ts})
            if args.csv:
                write_csv(run, Path(args.csv).with_name(f"{Path(args.csv).stem}_{i}.csv"))
        ok = all(r["settling_step"] is not None for r in runs)
        log.info("step decay below 5%% of peak within horizon: %s", ok)
        report.update(scenario="step", magnitude=args.step, channels=list(channels),
                      signal="states" if states else "e", runs=runs, decayed=ok)
    _emit(report)
    return EXIT_OK


def cmd_example(args) -> int:
    if args.name not in EXAMPLES:
        raise UsageError(f"unknown example {args.name!r}; choose from {sorted(EXAMPLES)}")
    built = EXAMPLES[args.name]()
    plants = {k: v for k, v in built.items() if k.startswith("weighted")}
    files = []
    if args.emit:
        out = Path(args.emit)
        out.mkdir(parents=True, exist_ok=True)
        for key, p in plants.items():
            path = out / f"{args.name}_{key}.json"
            ser.save_plant(p, path)
            validate_plant(ser.load_plant(path))
            files.append(str(path))
    report = {"command": "example", "name": args.name, "flags": _flags(args), "files": files,
              "plants": {k: p.dims | {"ts": p.ts} for k, p in plants.items()}}
    if args.name == "amb":
        report["displacement_states"] = list(AMB_DISPLACEMENT_STATES)
    _emit(report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lfth2", description=__doc__.splitlines()[0])
    ap.add_argument("--tol", type=float, default=1e-7, help="solver tolerance")
    ap.add_argument("--seed", type=int, default=0, help="random seed")
    ap.add_argument("--max-iter", type=int, default=200, help="solver iteration limit")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="certified robust H2 bound of a closed loop")
    a.add_argument("plant")
    a.add_argument("--controller", help="controller JSON (omit for plants without control channels)")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", help="robust state-feedback or gain-scheduled synthesis")
    s.add_argument("mode", choices=("sf", "gs"))
    s.add_argument("plant")
    s.add_argument("-o", "--output", help="write the controller JSON here")
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("simulate", help="white-noise, step or frozen-gain experiments")
    m.add_argument("plant")
    m.add_argument("controller", nargs="?")
    m.add_argument("--white-noise", action="store_true")
    m.add_argument("--step", type=float, metavar="MAG")
    m.add_argument("--induced", action="store_true")
    m.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (same as the global flag)")
    m.add_argument("--horizon", type=int, default=1000)
    m.add_argument("--grid", type=int, default=3, help="levels per uncertainty block")
    m.add_argument("--runs", type=int, default=64)
    m.add_argument("--burn-in", type=int, help="white-noise steps discarded per run (default min(512, horizon/8))")
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--channels", help="disturbance channels for --step, e.g. 2,3")
    m.add_argument("--states", help="state indices to judge decay on for --step (default: e)")
    m.add_argument("--csv", help="trajectory CSV path (step runs are suffixed _0, _1, ...)")
    m.set_defaults(func=cmd_simulate)

    e = sub.add_parser("example", help="build a benchmark plant")
    e.add_argument("name")
    e.add_argument("--emit", metavar="DIR", help="write the weighted plants as JSON")
    e.set_defaults(func=cmd_example)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ser.InvalidDocument, LftError, ValueError) as exc:
        if isinstance(exc, (Infeasible, SolverFailure, IllConditionedV, SingularFactor, IllPosedLoop,
                            UnstableFrozenLoop)):
            print(f"{args.command}: {'infeasible' if isinstance(exc, Infeasible) else 'failed'}: {exc}",
                  file=sys.stderr)
            return EXIT_FAIL
        print(f"{args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
