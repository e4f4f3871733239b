"""Command-line experiment driver.

One subcommand per experiment; every run writes a CSV with a JSON metadata
header, a .fit.json next to it when a decay fit is produced, and a PNG
figure unless --no-fig is given.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .ensemble import EXPERIMENTS, OBSERVABLES, ConfigError, ExperimentConfig, run
from .lattice import GeometryError
from .operators import phi_from_energy
from .parallel import resolve_workers
from .spectral import NumericalError


def _add_common(sub: argparse.ArgumentParser, multi_phi: bool = False) -> None:
    group = sub.add_mutually_exclusive_group()
    if multi_phi:
        group.add_argument("--phi", type=float, nargs="+",
                           help="mixing angle(s) in radians")
    else:
        group.add_argument("--phi", type=float, help="mixing angle in radians")
    group.add_argument("--epsilon", type=float,
                       help="energy distance to the band center; sets phi via "
                            "|t| = 1/sqrt(1+e^eps)")
    sub.add_argument("--L1", type=int, default=2)
    sub.add_argument("--L2", type=int, default=2)
    sub.add_argument("--mode", choices=["box", "strip", "torus"], default=None,
                     help="geometry mode where the experiment allows a choice")
    sub.add_argument("--length", type=int, default=0,
                     help="strip x-extent in sites (even)")
    sub.add_argument("--s", type=float, default=0.5)
    sub.add_argument("--rho", type=float, nargs="+", default=None,
                     help="|z| values for resolvent test points")
    sub.add_argument("--theta", type=float, default=0.0)
    sub.add_argument("--theta-count", type=int, default=16)
    sub.add_argument("--eta", type=float, default=0.1)
    sub.add_argument("--p", type=float, default=2.0)
    sub.add_argument("--horizon", type=int, default=200)
    sub.add_argument("--trials", type=int, default=200)
    sub.add_argument("--seeds", type=int, default=8,
                     help="ensemble size for spreading runs")
    sub.add_argument("--seed", type=int, default=0, help="master seed")
    sub.add_argument("--workers", type=int, default=None,
                     help="worker processes (default: CCNET_WORKERS or cpu count)")
    sub.add_argument("--out", type=str, default=None, help="output CSV path")
    sub.add_argument("--no-fig", action="store_true",
                     help="skip the PNG figure next to the CSV")
    sub.add_argument("--d-min", type=int, default=2)
    sub.add_argument("--d-max", type=int, default=8)


_DEFAULT_MODE = {
    "unitarity": "box", "spectrum": "box", "gaps": "box", "moments": "box",
    "correlator": "torus", "contraction": "box", "spread": "torus",
    "strip": "strip",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccnet",
        description="Random unitary network model: finite-volume localization "
                    "experiments")
    subs = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sub = subs.add_parser(name)
        _add_common(sub, multi_phi=(name == "contraction"))
        if name == "unitarity":
            sub.add_argument("--cases", type=int, default=50)
        if name == "contraction":
            sub.add_argument("--nu", type=int, nargs=2, default=None,
                             metavar=("M", "N"),
                             help="far test site in the box complement")
        if name == "strip":
            sub.add_argument("--observable", choices=list(OBSERVABLES),
                             default="correlator_decay")
        if name == "spread":
            sub.add_argument("--psi0", type=str, default=None,
                             help="initial state file with `m n re im` rows "
                                  "(default: point source at the origin)")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.epsilon is not None:
        phis = (float(phi_from_energy(args.epsilon)),)
    elif args.phi is None:
        phis = (0.0,) if args.experiment == "gaps" else (0.05,)
    elif isinstance(args.phi, list):
        phis = tuple(args.phi)
    else:
        phis = (args.phi,)
    mode = args.mode or _DEFAULT_MODE[args.experiment]
    rhos = tuple(args.rho) if args.rho is not None else \
        ((1.0,) if args.experiment == "gaps" else (1.05, 1.1))
    return ExperimentConfig(
        experiment=args.experiment, phis=phis, L1=args.L1, L2=args.L2,
        mode=mode, length=args.length, s=args.s, rhos=rhos, theta=args.theta,
        theta_count=args.theta_count, eta=args.eta, p=args.p,
        horizon=args.horizon, trials=args.trials, seeds=args.seeds,
        seed=args.seed, workers=resolve_workers(args.workers), out=args.out,
        fig=not args.no_fig, observable=getattr(args, "observable",
                                                "correlator_decay"),
        nu=tuple(args.nu) if getattr(args, "nu", None) else None,
        d_min=args.d_min, d_max=args.d_max,
        cases=getattr(args, "cases", 50), psi0=getattr(args, "psi0", None))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        config.validate()
        written = run(config)
    except (ConfigError, GeometryError, ValueError) as exc:
        print(f"ccnet: configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"ccnet: numerical failure: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
