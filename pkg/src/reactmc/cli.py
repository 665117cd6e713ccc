"""Command-line entry point.

Subcommands: cr, particle, tau, table, ber, sweep. Every command is
reproducible from (config, seed); outputs are CSVs plus a JSON manifest
carrying the config hash. Exit codes: 0 success, 1 validation/usage
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from .config import (ConfigValidationError, ReactionDiffusionConfig,
                     ReleaseSchedule, default_config_path, load_config,
                     validate)
from .experiments import (BerRun, ber_to_csv, run_ber, sweep_parameter,
                          sweep_to_csv, write_manifest)
from .particles import RegimeError, run_particle_sim
from .signaling import (SCHEME_KINDS, ModulationScheme, build_cr_table,
                        compute_tau)
from .solver import SolverError, compute_cr


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _apply_overrides(config: ReactionDiffusionConfig,
                     pairs: list[str]) -> ReactionDiffusionConfig:
    fields = {f.name: f.type for f in dataclasses.fields(config)}
    changes = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or key not in fields:
            raise ConfigValidationError(
                f"unknown override {pair!r}; known keys: "
                + ", ".join(sorted(fields)))
        current = getattr(config, key)
        changes[key] = type(current)(value) if not isinstance(
            current, float) else float(value)
    return config.replace(**changes)


def _schedule(args, config: ReactionDiffusionConfig) -> ReleaseSchedule:
    rel_a = tuple((t, config.n_tx_a) for t in _parse_floats(args.release_a))
    rel_b = tuple((t, config.n_tx_b) for t in _parse_floats(args.release_b))
    return ReleaseSchedule(releases_a=rel_a, releases_b=rel_b)


def _scheme(args, config: ReactionDiffusionConfig) -> ModulationScheme:
    tau0, tau1 = args.tau0, args.tau1
    if args.scheme in ("ook", "osk") and (tau1 is None
                                          or (args.scheme == "osk"
                                              and tau0 is None)):
        auto0, auto1 = compute_tau(config)
        tau0 = auto0 if tau0 is None else tau0
        tau1 = auto1 if tau1 is None else tau1
    return ModulationScheme(args.scheme, tau0=tau0, tau1=tau1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reactmc",
        description="Reactive molecular-communication simulation toolkit.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=default_config_path(),
                       help="JSON config file (SI base units)")
        p.add_argument("--out", type=Path, default=Path("."),
                       help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--set", dest="overrides", action="append",
                       default=[], metavar="KEY=VALUE",
                       help="override a config field")
        p.add_argument("--threads", type=int, default=None,
                       help="parallelism bound (recorded in the manifest)")

    p = sub.add_parser("cr", help="deterministic channel response CSV")
    common(p)
    p.add_argument("--release-a", default="", help="comma-separated times")
    p.add_argument("--release-b", default="", help="comma-separated times")

    p = sub.add_parser("particle", help="particle ensemble CSVs + histogram")
    common(p)
    p.add_argument("--release-a", default="")
    p.add_argument("--release-b", default="")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--hist-t", type=float, default=None,
                   help="instant for the count histogram (default: t_max)")
    p.add_argument("--hist-species", choices=("a", "b"), default="a")

    p = sub.add_parser("tau", help="print release-offset design values")
    common(p)

    for name, desc in (("table", "symbol/history mean table CSV"),
                       ("ber", "bit-error-rate sweep CSV")):
        p = sub.add_parser(name, help=desc)
        common(p)
        p.add_argument("--scheme", choices=SCHEME_KINDS, required=True)
        p.add_argument("--tau0", type=float, default=None)
        p.add_argument("--tau1", type=float, default=None)
        p.add_argument("--memory", type=int, default=5)
        if name == "ber":
            p.add_argument("--detector", default="genie",
                           choices=("genie", "ml-isi", "isi-neglect"))
            p.add_argument("--receiver", default="2tm",
                           choices=("1tm", "2tm"))
            p.add_argument("--k", type=int, default=8, dest="k_symbols")
            p.add_argument("--blocks", type=int, default=10_000)
            p.add_argument("--ntx", default="1.25e3,2.5e3,5e3,10e3",
                           help="comma-separated release sizes")
            p.add_argument("--noise-mean", type=float, default=0.0,
                           help="constant added to both species' means")
            p.add_argument("--cache-dir", type=Path, default=None)

    p = sub.add_parser("sweep", help="channel-response parameter family")
    common(p)
    p.add_argument("--parameter", choices=("diff_b", "kf", "kb"),
                   required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated values; 'inf' allowed for kf")

    return parser


def _run(args) -> None:
    config = validate(_apply_overrides(load_config(args.config),
                                       args.overrides))
    args.out.mkdir(parents=True, exist_ok=True)
    t_start = time.time()

    if args.subcommand == "cr":
        resp = compute_cr(config, _schedule(args, config))
        resp.to_csv(args.out / "cr.csv")
    elif args.subcommand == "particle":
        ens = run_particle_sim(config, _schedule(args, config),
                               args.trials, seed=args.seed)
        ens.to_csv(args.out / "particle.csv")
        t_hist = config.t_max if args.hist_t is None else args.hist_t
        ens.histogram_to_csv(args.out / "particle_hist.csv", t_hist,
                             args.hist_species)
    elif args.subcommand == "tau":
        tau0, tau1 = compute_tau(config)
        print(f"tau0={tau0!r} tau1={tau1!r}")
        return
    elif args.subcommand == "table":
        table = build_cr_table(config, _scheme(args, config), args.memory)
        table.to_csv(args.out / "table.csv")
    elif args.subcommand == "ber":
        run = BerRun(scheme=_scheme(args, config), detector=args.detector,
                     receiver=args.receiver, k_symbols=args.k_symbols,
                     memory_len=args.memory, n_blocks=args.blocks,
                     n_tx_values=tuple(_parse_floats(args.ntx)),
                     seed=args.seed, noise_mean=args.noise_mean)
        ber_to_csv(run_ber(run, config, cache_dir=args.cache_dir),
                   args.out / "ber.csv")
    elif args.subcommand == "sweep":
        values = [float(v) for v in args.values.split(",") if v]
        family = sweep_parameter(config, args.parameter, values)
        sweep_to_csv(family, args.out / f"sweep_{args.parameter}.csv")

    write_manifest(args.out / "manifest.json", config, args.seed,
                   runtimes={args.subcommand: round(time.time() - t_start,
                                                    3)},
                   subcommand=args.subcommand,
                   threads=args.threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _run(args)
    except (ConfigValidationError, FileNotFoundError, ValueError,
            RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, ArithmeticError, np.linalg.LinAlgError,
            OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
