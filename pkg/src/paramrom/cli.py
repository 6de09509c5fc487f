"""Command-line entry point.

    paramrom convergence-low  --config FILE [--out DIR] [--seed N] [--set key=value ...]
    paramrom convergence-high --study table2-desk --out runs/t2
    paramrom reconstruct      --study exp2-desk --set settings.trials=1
    paramrom verify           [--suite fem --suite elm] [--out DIR]

On failure a single JSON error record is written to stderr and the exit
code is nonzero.
"""

import argparse
import csv
import json
import logging
import os
import sys
import traceback

from . import __version__
from .cache import cache_dir
from .config import STUDIES, load_config
from .errors import ConfigurationError, FitFailure, InvalidArgument, NumericalFailure, OutOfDomain
from .experiments import run_experiment
from .outputs import emit_outputs, write_manifest

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
EXIT_INTERNAL = 5
EXIT_VERIFY = 1


def _add_run_args(p):
    p.add_argument("--config", help="YAML or JSON config file (a run manifest also works)")
    p.add_argument("--study", help=f"registered study: {', '.join(sorted(STUDIES))}")
    p.add_argument("--out", default=None, help="output directory (default: runs/<name>)")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. settings.trials=2 (repeatable)")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers for independent runs")
    p.add_argument("--no-figures", action="store_true", help="write the plot script but skip rendering PNGs")


def build_parser():
    parser = argparse.ArgumentParser(prog="paramrom", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("convergence-low", "simplicial surrogate convergence table (two parameters)"),
        ("convergence-high", "ELM surrogate convergence table (many parameters)"),
        ("reconstruct", "potential reconstruction experiments"),
    ):
        _add_run_args(sub.add_parser(name, help=help_text))
    v = sub.add_parser("verify", help="run the invariant suites")
    v.add_argument("--suite", action="append", default=None, help="suite name (repeatable; default all)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None, help="directory for verify.csv")
    sub.add_parser("studies", help="list registered studies")
    return parser


def _error(kind, exc, code):
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    t = getattr(exc, "t", None)
    if t is not None:
        record["parameter"] = [float(v) for v in t]
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def _run(args):
    if args.config is None and args.study is None:
        raise ConfigurationError("give --config FILE or --study NAME")
    overrides = list(args.overrides)
    if args.jobs is not None:
        overrides.append(f"n_jobs={args.jobs}")
    cfg = load_config(args.config, overrides, seed=args.seed, kind=args.command, study=args.study)
    out = args.out or os.path.join("runs", cfg.name)
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    cdir = cache_dir(cfg.cache_dir, os.path.join(out, ".cache"))
    report = run_experiment(cfg, cdir)
    csvs, script, pngs = emit_outputs(report, out, figures=not args.no_figures)
    manifest = write_manifest(cfg, report, out, csvs, script, pngs)
    summary = {"out": out, "kind": cfg.kind, "name": cfg.name, "content_hash": manifest["content_hash"]}
    if "rates" in manifest:
        summary["rates"] = manifest["rates"]
    print(json.dumps(summary))
    return 0


def _verify(args):
    from .verify import run_suites

    results = run_suites(args.suite, seed=args.seed)
    for r in results:
        print(r.line())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "verify.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["suite", "check", "passed", "value", "threshold"])
            for r in results:
                w.writerow([r.suite, r.name, int(r.passed), f"{r.value:.6e}", r.threshold])
    failed = [r for r in results if not r.passed]
    if failed:
        sys.stderr.write(json.dumps({"error": "verification", "failed": [f"{r.suite}.{r.name}" for r in failed]}) + "\n")
        return EXIT_VERIFY
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            return _verify(args)
        if args.command == "studies":
            for name in sorted(STUDIES):
                print(f"{name:16s} {STUDIES[name]['kind']}")
            return 0
        return _run(args)
    except (ConfigurationError, InvalidArgument, OutOfDomain) as exc:
        return _error("configuration", exc, EXIT_CONFIG)
    except (NumericalFailure, FitFailure) as exc:
        return _error("numerical", exc, EXIT_NUMERICAL)
    except OSError as exc:
        return _error("io", exc, EXIT_IO)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable record
        if args.verbose:
            traceback.print_exc()
        return _error("internal", exc, EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
