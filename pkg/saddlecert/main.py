"""
Command-line entry point: ``saddlecert run|verify|sweep <config>``.

Exit codes: 0 every certificate passed, 1 a certificate failed,
2 configuration error, 3 a module error aborted the run (a partial CSV is
written first).
"""
import argparse
import logging
import sys
from typing import List, Optional, Sequence

from saddlecert.config import LOG_LEVEL, OUTPUT_DIR
from saddlecert.exceptions import ConfigError, ConfigIssue, ExperimentError, IoError
from saddlecert.models.config import ExperimentConfig
from saddlecert.services.experiment import ExperimentService
from saddlecert.services.reporting import ReportService
from saddlecert.storage import init_output_dir, write_frame

EXIT_OK = 0
EXIT_CERTIFICATE_FAILED = 1
EXIT_CONFIG = 2
EXIT_MODULE = 3


def _out_dir(args: argparse.Namespace, config: ExperimentConfig) -> str:
    return args.out or config.run.output_dir or OUTPUT_DIR


def _print_config_errors(issues: Sequence[ConfigIssue]) -> None:
    print(f"Config has {len(issues)} problem(s):", file=sys.stderr)
    for issue in issues:
        print(f"  {issue}", file=sys.stderr)


def _cmd_experiment(args: argparse.Namespace, certificates_only: bool) -> int:
    config = ExperimentService.load_config(args.config, args.override)
    out_dir = _out_dir(args, config)
    stem = f"{config.fingerprint}.verify" if certificates_only else config.fingerprint
    try:
        outcome = ExperimentService.run_experiment(config, certificates_only=certificates_only)
    except ExperimentError as exc:
        print(f"Run aborted: {exc}", file=sys.stderr)
        partial = ReportService.emit_report(
            ExperimentService.sort_rows(exc.rows), "csv", out_dir, stem=f"{stem}.partial", allow_empty=True
        )
        print(f"Partial results: {partial}", file=sys.stderr)
        return EXIT_MODULE

    rows = ExperimentService.sort_rows(outcome.rows)
    csv_path = ReportService.emit_report(rows, "csv", out_dir, stem=stem)
    md_path = ReportService.emit_report(rows, "markdown", out_dir, stem=stem)

    print(f"{outcome.label} with {outcome.pair_label}")
    print(f"  delta={outcome.spectral.delta:.6g}  gamma={outcome.spectral.gamma:.6g}  "
          f"gamma_bar={outcome.spectral.gamma_bar:.6g}")
    for row in rows:
        mark = "PASS" if row.certificate_ok else "FAIL"
        print(f"  {row.method:<13} {mark}  {row.notes}")
    print(f"  table: {csv_path}")
    print(f"  certificate: {md_path}")
    return EXIT_OK if outcome.all_ok else EXIT_CERTIFICATE_FAILED


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = ExperimentService.load_config(args.config, args.override)
    frame = ExperimentService.sweep(args.grid)
    out = init_output_dir(_out_dir(args, config))
    path = write_frame(frame, out / f"{config.fingerprint}.landscape.csv", list(frame.columns))
    print(f"Landscape: {len(frame)} points, max rho1 = {frame['rho1'].max():.6g}")
    print(f"  table: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saddlecert",
        description="Certify convergence bounds of inexact Uzawa iterations and block preconditioners",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="Experiment config (INI-style text)")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="Override one config value; repeatable",
        )
        p.add_argument("--out", default=None, help="Output directory (default: config, then SADDLECERT_OUTPUT_DIR)")

    common(sub.add_parser("run", help="Certificates plus every requested method"))
    common(sub.add_parser("verify", help="Certificates only"))
    sweep = sub.add_parser("sweep", help="Closed-form rate landscape; no matrices")
    common(sweep)
    sweep.add_argument(
        "--grid",
        default="delta=0:0.6:50,gamma=0:0.99:50",
        help="Grid as delta=start:stop:count,gamma=start:stop:count",
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_experiment(args, certificates_only=args.command == "verify")
    except ConfigError as exc:
        _print_config_errors(exc.issues)
        return EXIT_CONFIG
    except ConfigIssue as exc:
        _print_config_errors([exc])
        return EXIT_CONFIG
    except (IoError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_MODULE


if __name__ == "__main__":
    sys.exit(main())
