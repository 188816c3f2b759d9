"""Command-line entry point ``irsbf``.

Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.
"""

import argparse
import sys

from .. import __version__
from .config import ConfigError, load_config
from .presets import PRESET_VERSION, figure_ids, preset
from .report import write_outputs
from .runner import run_experiment

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text):
    v = int(text)
    if v < 0 or v >= 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = _Parser(prog="irsbf", description="IRS joint beamforming experiments")
    p.add_argument("--version", action="version",
                   version=f"irsbf {__version__} (presets {PRESET_VERSION})")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=".")
    r.add_argument("--seed", type=_seed)
    r.add_argument("--threads", type=_positive, default=1)
    r.add_argument("--no-plot", action="store_true", help="skip PNG rendering")

    f = sub.add_parser("figure", help="reproduce a built-in figure preset")
    f.add_argument("id")
    f.add_argument("--out", default=".")
    f.add_argument("--trials", type=_positive)
    f.add_argument("--seed", type=_seed)
    f.add_argument("--threads", type=_positive, default=1)
    f.add_argument("--no-plot", action="store_true", help="skip PNG rendering")

    sub.add_parser("list-figures", help="list preset ids")
    return p


def _progress(total):
    def cb(done):
        print(f"\r{done}/{total} trials", end="" if done < total else "\n",
              file=sys.stderr, flush=True)
    return cb


def _execute(cfg, args, preset_version):
    try:
        records = run_experiment(cfg, threads=args.threads,
                                 progress=_progress(cfg.trials))
        paths = write_outputs(cfg, records, args.out, preset_version=preset_version,
                              plot=not args.no_plot)
    except ConfigError as exc:
        print(f"irsbf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:          # solver or I/O failure
        print(f"irsbf: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths.values():
        print(p)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command == "list-figures":
        for fid in figure_ids():
            print(fid)
        return EXIT_OK
    if args.command == "figure":
        if args.id not in figure_ids():
            print(f"irsbf: unknown figure {args.id!r}; valid ids: "
                  + ", ".join(figure_ids()), file=sys.stderr)
            return EXIT_USAGE
        cfg = preset(args.id, trials=args.trials, seed=args.seed)
        return _execute(cfg, args, PRESET_VERSION)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
    except ConfigError as exc:
        print(f"irsbf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(cfg, args, None)


if __name__ == "__main__":
    sys.exit(main())
