"""Command-line interface: simulate, invert, report and oracle subcommands.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 format mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .errors import CmcFieldError, ConfigError
from .field import BoundaryDrive, DomainSpec

log = logging.getLogger("cmcfield")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_FORMAT = 4


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def cmd_simulate(args) -> int:
    from .harness.io import write_dataset
    from .harness.simulate import SimConfig, simulate

    raw = _load_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = SimConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    ds = simulate(cfg)
    out = write_dataset(ds, args.out)
    print(f"wrote {len(ds.times)} windows x {len(ds.channel_ids)} channels to {out}")
    return EXIT_OK


def cmd_invert(args) -> int:
    from .harness.io import read_dataset, write_results
    from .harness.pipeline import InvertConfig, invert_dataset

    raw = _load_config(args.config)
    if args.paper_literal_prediction:
        raw["paper_literal_prediction"] = True
    try:
        icfg = InvertConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    ds = read_dataset(args.data)
    start = time.perf_counter()

    def progress(k, report):
        log.info("window %d t=%g: EV=%.5f iterations=%d converged=%s", k, report.t,
                 report.explained_variance, report.iterations, report.converged)

    traj, _ = invert_dataset(ds, icfg, progress=progress)
    echo = icfg.to_dict()
    if args.seed is not None:
        echo["seed"] = args.seed
    write_results(traj, args.out, ds, args.data, echo)
    bad = sum(not e.report.converged for e in traj)
    print(f"inverted {len(traj)} windows in {time.perf_counter() - start:.1f} s "
          f"({bad} not converged); results in {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .harness.report import report

    summary = report(args.results, args.data, args.out)
    print(f"total explained variance: {summary['total_explained_variance']:.6f}")
    if "field_correlation" in summary:
        print(f"field correlation:        {summary['field_correlation']:.6f}")
        print(f"hotspot agreement:        {summary['hotspot_agreement']:.3f}")
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .harness import oracles

    if args.case == "heat":
        if args.boundary == "sin":
            domain, drive = oracles.boundary_driven_case()
            tol = 1e-3
        else:
            domain = DomainSpec.interval(1.0, 1.0)
            drive = BoundaryDrive(lambda t: 0.0, lambda t: 0.0, lambda x: np.sin(np.pi * x))
            tol = 1e-4
        cmp = oracles.compare_heat(domain, drive, times=args.times, n_modes=args.n_modes, dx=args.dx, dt=args.dt)
        for t, err in zip(cmp.times, cmp.rel_l2):
            print(f"t={t:g}  relative L2 error {err:.3e}")
        ok = cmp.worst < tol
        print(f"{'PASS' if ok else 'FAIL'}: worst {cmp.worst:.3e} (tolerance {tol:g})")
    else:
        seed = 0 if args.seed is None else args.seed
        cmp = oracles.compare_spectrum(duration=args.duration, n_realizations=args.realizations, seed=seed)
        ok = cmp.peak_rel_error <= 0.10
        print(f"peak at {cmp.peak_freq:g} Hz: analytic {cmp.analytic.max():.6g}, "
              f"simulated {cmp.simulated[np.argmax(cmp.analytic)]:.6g}")
        print(f"{'PASS' if ok else 'FAIL'}: relative error {cmp.peak_rel_error:.3%} (tolerance 10%)")
    return EXIT_OK if ok else EXIT_NUMERICAL


def _seed(value: str) -> int:
    v = int(value)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmcfield", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=_seed, default=None, help="override the RNG seed (u64)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", help="simulation config JSON (defaults to the 4x5 grid scene)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("invert", help="run sequential belief updating over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="inversion config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--paper-literal-prediction", action="store_true",
                   help="predict covariance as Q + R instead of D Q D + R")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("report", help="summarize a results bundle against its dataset")
    p.add_argument("--results", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("oracle", help="cross-check solvers against independent oracles")
    p.add_argument("case", choices=["heat", "spectrum"])
    p.add_argument("--boundary", choices=["sin", "zero"], default="sin",
                   help="heat: sin-driven left boundary, or zero boundaries with a single mode")
    p.add_argument("--times", type=float, nargs="+", default=[0.5, 1.0, 1.5, 2.0])
    p.add_argument("--n-modes", type=int, default=64)
    p.add_argument("--dx", type=float, default=1 / 512)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--duration", type=float, default=200.0, help="spectrum: seconds per realization")
    p.add_argument("--realizations", type=int, default=8)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CmcFieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
