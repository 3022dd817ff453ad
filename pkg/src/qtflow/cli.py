"""``qtf`` command-line interface.

Exit codes: 0 ok, 2 configuration error, 3 CFL abort, 4 NaN abort,
5 failed check.
"""
import argparse
import logging
import sys

from . import experiments
from .config import ConfigError, ExperimentConfig, build_potential, load_config
from .selftest import run_selftest
from .timestepper import CFLViolation, NaNDetected

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CFL = 3
EXIT_NAN = 4
EXIT_FAIL = 5

COMMANDS = {
    "simulate": experiments.cmd_simulate,
    "decay": experiments.cmd_decay,
    "depend": experiments.cmd_depend,
    "criterion": experiments.cmd_criterion,
    "convergence": experiments.cmd_convergence,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="qtf", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=tuple(COMMANDS) + ("selftest",))
    ap.add_argument("--config", help="YAML experiment file")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="override the random seed")
    ap.add_argument("--threads", type=int, help="FFT threads (default: $QTF_THREADS or 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        return EXIT_OK if run_selftest() else EXIT_FAIL
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.command == "convergence":
            cfg = ExperimentConfig(potential=build_potential(1.0, 0.0, 0.0))
        else:
            raise ConfigError(f"'{args.command}' needs --config")
        threads = experiments.threads_from_env(args.threads)
        grid = cfg.grid(workers=threads)
        out = args.out or cfg.out_dir
        passed, _ = COMMANDS[args.command](cfg, grid, out, seed=args.seed)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CFLViolation as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_CFL
    except NaNDetected as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_NAN
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
