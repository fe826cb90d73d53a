"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2 as well; keep the message format uniform
        self.print_usage(sys.stderr)
        print(f"config error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixview", description="Real/synthetic view-mixing SSL experiments at desk scale.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="pretrain, probe and evaluate one configuration")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path)
    run.add_argument("--seed", type=_u64)

    sw = sub.add_parser("sweep", help="run one experiment grid")
    sw.add_argument("kind", help="regimes | guidance | fraction | augmentation | cropmix")
    sw.add_argument("--config", required=True, type=Path)
    sw.add_argument("--out", type=Path)
    sw.add_argument("--seed", type=_u64)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--seeds", type=int, default=1, help="consecutive seeds per grid point")

    rep = sub.add_parser("report", help="summarise a run or sweep directory")
    rep.add_argument("path", type=Path)
    rep.add_argument("--out", type=Path, help="long-format CSV path (default: <path>/report_long.csv)")

    dump = sub.add_parser("dump-data", help="export sample images as PPM")
    dump.add_argument("--config", required=True, type=Path)
    dump.add_argument("--out", required=True, type=Path)
    dump.add_argument("--seed", type=_u64)
    dump.add_argument("--per-class", type=int, default=2)

    gc = sub.add_parser("grad-check", help="finite-difference check of every loss gradient")
    gc.add_argument("--trials", type=int, default=50)
    gc.add_argument("--seed", type=_u64, default=0)
    gc.add_argument("--tol", type=float, default=1e-4)
    return p


def _out_dir(arg: Path | None, cfg, default: str) -> Path:
    if arg is not None:
        return arg
    return Path(cfg.out) if cfg.out else Path(default) / cfg.run_id


def cmd_run(args) -> int:
    from .experiment import run_experiment

    cfg = load_config(args.config, args.seed)
    out = _out_dir(args.out, cfg, "runs")
    report = run_experiment(cfg, out)
    print(f"{report['run_id']}: in-dist {report['accuracy']['test']:.6g}  "
          f"mean-shift {report['mean_shift']:.6g}  overall {report['overall']:.6g}  -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiment import SWEEPS, run_sweep

    if args.kind not in SWEEPS:
        raise ConfigError("kind", f"unknown sweep {args.kind!r}; expected one of {sorted(SWEEPS)}")
    if args.jobs < 1:
        raise ConfigError("jobs", "must be at least 1")
    if args.seeds < 1:
        raise ConfigError("seeds", "must be at least 1")
    cfg = load_config(args.config, args.seed)
    out = args.out or Path("sweeps") / f"{args.kind}-{cfg.config_hash[:10]}"
    reports = run_sweep(args.kind, cfg, out, args.jobs, args.seeds)
    print(f"{len(reports)} runs -> {out / 'comparison.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .experiment import collect_reports, format_table, write_long_csv

    if not args.path.is_dir():
        raise ConfigError("path", f"{args.path} is not a directory")
    col = collect_reports(args.path)
    if not col.reports and not col.missing:
        print("no runs found")
        return EXIT_OK
    print(format_table(col.reports, col.missing))
    if col.reports:
        path = write_long_csv(col.reports, args.out or args.path / "report_long.csv")
        print(f"\nlong-format CSV: {path}")
    return EXIT_OK


def cmd_dump(args) -> int:
    from .dataset import dump_dataset, make_dataset

    cfg = load_config(args.config, args.seed)
    manifest = dump_dataset(make_dataset(cfg.dataset), args.out, args.per_class)
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .losscheck import loss_gradient_suite

    worst = loss_gradient_suite(args.trials, args.seed)
    ok = True
    for name, err in worst.items():
        status = "PASS" if err < args.tol else "FAIL"
        ok &= status == "PASS"
        print(f"{status} {name:<14} max relative error {err:.3e} over {args.trials} trials")
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "report": cmd_report, "dump-data": cmd_dump, "grad-check": cmd_gradcheck}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any other failure is a runtime failure
        logging.getLogger("mixview").debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
