"""``sflab`` command line.

    sflab <mode> --config FILE [--out DIR] [--jobs N] [--seed S]
    sflab acceptance <suite> [--out DIR] [--jobs N]

Exit codes: 0 success, 1 usage, 2 numerical failure, 3 config error.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import MODES, ConfigError, load_config
from .continuum import BoundaryKernelError
from .gauge import RoughFieldError
from .spectral import SpectralError

_MODE_LINE = re.compile(r"^\s*mode\s*=", re.M)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> _Parser:
    p = _Parser(prog="sflab", description="Lattice domain-wall spectral flow experiments.")
    p.add_argument("mode", help=f"one of {', '.join(MODES)}, or 'acceptance'")
    p.add_argument("suite", nargs="?", help="suite name for 'acceptance' (core or full)")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--out", help="output directory (default: config 'output' or current directory)")
    p.add_argument("--jobs", type=int, help="worker threads (SFLAB_JOBS overrides)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--version", action="version", version=f"sflab {__version__}")
    return p


def _acceptance(args) -> int:
    from .acceptance import SUITES, run_suite, verdicts_json
    from .run import default_jobs

    if not args.suite:
        raise UsageError("acceptance needs a suite name")
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; known: {', '.join(SUITES)}")
    verdicts = run_suite(args.suite, default_jobs(args.jobs))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"acceptance_{args.suite}.json").write_text(verdicts_json(verdicts) + "\n")
    failed = [v.id for v in verdicts if not v.passed]
    print(f"{len(verdicts) - len(failed)}/{len(verdicts)} criteria passed")
    return EXIT_OK if not failed else EXIT_NUMERICAL


def main(argv=None) -> int:
    from .run import run, write_outputs

    try:
        args = _parser().parse_args(argv)
        if args.mode == "acceptance":
            return _acceptance(args)
        if args.mode not in MODES:
            raise UsageError(f"unknown mode {args.mode!r}")
        if args.suite:
            raise UsageError(f"unexpected argument {args.suite!r}")
        if not args.config:
            raise UsageError("--config is required")
    except UsageError as exc:
        print(f"sflab: usage error: {exc}", file=sys.stderr)
        _parser().print_usage(sys.stderr)
        return EXIT_USAGE

    cfg = None
    try:
        cfg = load_config(args.config)
        if cfg.mode != args.mode:
            if _MODE_LINE.search(Path(args.config).read_text()):
                raise ConfigError(f"config says mode = {cfg.mode} but the command line says {args.mode}")
            cfg = cfg.replace(mode=args.mode)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        result = run(cfg, args.jobs)
        out_dir = args.out or cfg.output or "."
        for path in write_outputs(result, out_dir):
            print(path)
        return EXIT_OK
    except (SpectralError, RoughFieldError, BoundaryKernelError, np.linalg.LinAlgError) as exc:
        _report(exc, cfg)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        _report(exc, cfg)
        return EXIT_CONFIG


def _report(exc: Exception, cfg) -> None:
    print(f"sflab: {type(exc).__name__}: {exc}", file=sys.stderr)
    if cfg is not None:
        print(f"sflab: config {cfg.digest()}: {cfg.to_dict()}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
