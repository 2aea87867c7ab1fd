"""Command-line front end.

    sdasmooth generate CONFIG --out data.csv
    sdasmooth fit DATA CONFIG --out tracks.csv
    sdasmooth rate-study CONFIG --out runs.csv
    sdasmooth grad-check CONFIG [--out report.json]
    sdasmooth gamma-check CONFIG [--out runs.csv]

Exit status: 0 success, 2 bad input (config, data, assumptions), 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import InputError, NumericalError
from .experiments import (GAMMA_COLUMNS, RATE_COLUMNS, resolve_threads, run_fit,
                          run_gamma_check, run_generate, run_grad_check, run_rate_study)
from .solver import read_dataset_csv, write_dataset_csv
from .trajectory import write_trajectories_csv

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("sdasmooth")


def sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def dump_json(obj, path: Path | None = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if path is not None:
        path.write_text(text, encoding="utf-8")
    return text


def write_rows(rows: list, columns, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def _cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return value


def _config(args):
    return load_config(args.config, strict=args.strict).with_seed(args.seed)


def cmd_generate(args) -> int:
    cfg = _config(args)
    data, labels, meta = run_generate(cfg)
    out = Path(args.out)
    write_dataset_csv(data, out, labels)
    dump_json(meta, sidecar(out, ".meta.json"))
    log.info("wrote %d observations to %s", data.n, out)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    data, labels = read_dataset_csv(args.data)
    tset, report = run_fit(data, cfg, labels)
    out = Path(args.out)
    write_trajectories_csv(tset, out)
    report_path = Path(args.report) if args.report else sidecar(out, ".report.json")
    dump_json(report, report_path)
    log.info("f_n = %.10g after %d iterations; min gap %.4g (%s)", report["objective"],
             report["iterations"], report["min_gap"],
             "separated" if report["separation_ok"] else "separation violated")
    return EXIT_OK


def cmd_rate_study(args) -> int:
    cfg = _config(args)
    rows, summary = run_rate_study(cfg, resolve_threads(args.threads))
    out = Path(args.out)
    write_rows(rows, RATE_COLUMNS, out)
    dump_json(summary, sidecar(out, ".summary.json"))
    if summary["separation_failures"]:
        log.warning("%d runs failed the separation check (flagged in %s)",
                    summary["separation_failures"], out)
    log.info("slope %.4f +- %.4f", summary["slope"], summary["slope_stderr"])
    return EXIT_OK


def cmd_grad_check(args) -> int:
    cfg = _config(args)
    report = run_grad_check(cfg)
    text = dump_json(report, Path(args.out) if args.out else None)
    if not args.out:
        sys.stdout.write(text)
    log.info("max relative error %.3g", report["max_relative_error"])
    return EXIT_OK


def cmd_gamma_check(args) -> int:
    cfg = _config(args)
    rows, summary = run_gamma_check(cfg, resolve_threads(args.threads))
    if args.out:
        out = Path(args.out)
        write_rows(rows, GAMMA_COLUMNS, out)
        dump_json(summary, sidecar(out, ".summary.json"))
    else:
        sys.stdout.write(dump_json(summary))
    log.info("slope %.4f +- %.4f", summary["slope"], summary["slope_stderr"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdasmooth", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                        help="reject unknown config keys (default); --no-strict only warns")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="sample a labeled dataset")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="dataset CSV; metadata goes to OUT.meta.json")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", parents=[common], help="fit k trajectories to a dataset")
    p.add_argument("data")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="trajectory CSV")
    p.add_argument("--report", default=None, help="report path (default OUT.report.json)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rate-study", parents=[common], help="error decay with sample size")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="per-run CSV; summary goes to OUT.summary.json")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default $SDASMOOTH_THREADS or 1)")
    p.set_defaults(func=cmd_rate_study)

    p = sub.add_parser("grad-check", parents=[common],
                       help="analytic derivative against finite differences")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="report JSON (default: stdout)")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("gamma-check", parents=[common],
                       help="empirical against population objective at fixed trajectories")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="per-run CSV; summary goes to OUT.summary.json")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default $SDASMOOTH_THREADS or 1)")
    p.set_defaults(func=cmd_gamma_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
