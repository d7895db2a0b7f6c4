# cli.py - Command-line front end: sweeps, scaling verdicts, estimator runs, plot scripts
"""Quantum thermometry limits from the command line.

  thermolimit sweep --config <json> [--out <path>]
  thermolimit classify --in <csv> --t-max <x> [--t-min <x>] [--gap <x>] [--column <name>]
  thermolimit simulate --model <json> --nu <int> --trials <int> --seed <int>
  thermolimit plotscript --in <csv> [--out <path>]

Payloads go to stdout (or --out), logs to stderr. Exit codes: 0 success,
1 computation failure, 2 usage error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import pydantic
import structlog

from config import __version__, configure_logging
from errors import EXIT_OK, EXIT_USAGE, UsageError, ValidationError, exit_code_for
from estimator import MIN_TRIALS, crb_report, outcome_model_from_config
from scaling import classify
from sweep import SweepResult, load_sweep_config, read_sweep_csv, run_sweep, write_result

logger = structlog.get_logger(__name__)

# ============================================================================
# INPUT HELPERS
# ============================================================================


def _usage(message: str, exc: Exception) -> UsageError:
    return UsageError(f"{message}: {exc}")


def _read_sweep(path: str) -> SweepResult:
    try:
        return read_sweep_csv(path)
    except (OSError, ValidationError) as exc:
        raise _usage("cannot read sweep table", exc) from exc


def _load_model_json(value: str) -> dict:
    """Inline JSON object or path to a JSON file"""
    try:
        text = value if value.lstrip().startswith("{") else Path(value).read_text(encoding="utf-8")
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise _usage("cannot read model", exc) from exc
    if not isinstance(data, dict):
        raise UsageError("model must be a JSON object")
    return data


# ============================================================================
# COMMANDS
# ============================================================================


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        config = load_sweep_config(args.config)
    except (OSError, ValidationError, pydantic.ValidationError) as exc:
        raise _usage("invalid sweep config", exc) from exc

    result = run_sweep(config)
    out = args.out or config.output
    payload = write_result(result, out, config.format)
    if out is None:
        sys.stdout.write(payload)
    logger.info("sweep written", rows=len(result.table), out=out or "stdout")
    return EXIT_OK


def cmd_classify(args: argparse.Namespace) -> int:
    result = _read_sweep(args.input)
    column = args.column or next((c for c in ("qfi", "fisher") if c in result.table.columns), None)
    if column is None or column not in result.table.columns or "T" not in result.table.columns:
        raise UsageError("classify needs a T column and a qfi or fisher column")

    T = result.table["T"].to_numpy()
    t_min = args.t_min if args.t_min is not None else float(T.min())
    if args.t_max <= t_min or args.t_max < T.min() or t_min > T.max():
        raise UsageError(f"window [{t_min}, {args.t_max}] lies outside the data")
    mask = (T >= t_min) & (T <= args.t_max)

    gap = args.gap
    if gap is None and "gap" in result.metadata:
        gap = float(result.metadata["gap"])
    verdict = classify(T[mask], result.table[column].to_numpy()[mask], gap_proxy=gap, override=args.override)
    out = verdict.to_dict()
    out["column"] = column
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.nu < 1:
        raise UsageError("--nu must be at least 1")
    if args.trials < MIN_TRIALS:
        raise UsageError(f"--trials must be at least {MIN_TRIALS}")
    if args.seed < 0:
        raise UsageError("--seed must be nonnegative")
    data = _load_model_json(args.model)
    try:
        om = outcome_model_from_config(data)
    except (ValidationError, pydantic.ValidationError) as exc:
        raise _usage("invalid model", exc) from exc

    report = crb_report(om, args.nu, args.trials, args.seed)
    sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


def plot_script(result: SweepResult, source: str) -> str:
    """matplotlib script drawing every quantity column of a sweep table"""
    columns = result.quantity_columns
    if not columns:
        raise UsageError("sweep table has no quantity columns")
    x = result.x_column
    stem = Path(source).stem
    lines = [
        f"# plot script generated by thermolimit {__version__} from {Path(source).name}",
        "import matplotlib.pyplot as plt",
        "import pandas as pd",
        "",
        f"data = pd.read_csv({source!r}, comment='#')",
        "",
        "fig, ax = plt.subplots()",
    ]
    for column in columns:
        lines.append(f"ax.plot(data[{x!r}], data[{column!r}], label={column!r})")
    if x == "T":
        lines.append("ax.set(xscale='log', yscale='log', xlabel='T', ylabel='value')")
    else:
        lines.append(f"ax.set(xlabel={x!r}, ylabel='value')")
    lines += [
        "ax.legend()",
        "fig.tight_layout()",
        f"fig.savefig({stem + '.png'!r}, dpi=200)",
        "",
    ]
    return "\n".join(lines)


def cmd_plotscript(args: argparse.Namespace) -> int:
    script = plot_script(_read_sweep(args.input), args.input)
    if args.out:
        try:
            Path(args.out).write_text(script, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise ValidationError("cannot write plot script", path=args.out, error=str(exc)) from exc
    else:
        sys.stdout.write(script)
    return EXIT_OK


# ============================================================================
# ENTRY POINT
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermolimit",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="evaluate quantities over a temperature grid")
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--out", help="output path (overrides the config; stdout if neither)")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("classify", help="exponential vs polynomial low-temperature verdict")
    p.add_argument("--in", dest="input", required=True, help="sweep CSV")
    p.add_argument("--t-max", type=float, required=True, help="upper end of the fit window")
    p.add_argument("--t-min", type=float, help="lower end of the fit window")
    p.add_argument("--gap", type=float, help="gap proxy for the window check (default: CSV metadata)")
    p.add_argument("--column", help="column to classify (default: qfi, then fisher)")
    p.add_argument("--override", action="store_true", help="skip the window check")
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("simulate", help="maximum-likelihood trials against the Cramer-Rao bound")
    p.add_argument("--model", required=True,
                   help='outcome model JSON (inline or file): {"model": ..., "params": ..., "T": ...}')
    p.add_argument("--nu", type=int, required=True, help="measurement rounds per trial")
    p.add_argument("--trials", type=int, required=True, help="number of trials")
    p.add_argument("--seed", type=int, required=True, help="base seed")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("plotscript", help="emit a matplotlib script for a sweep CSV")
    p.add_argument("--in", dest="input", required=True, help="sweep CSV")
    p.add_argument("--out", help="script path (stdout if omitted)")
    p.set_defaults(handler=cmd_plotscript)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    configure_logging()
    try:
        return args.handler(args)
    except Exception as exc:
        code = exit_code_for(exc)
        if code is None:
            raise
        logger.error("command failed", command=args.command, error=str(exc), kind=type(exc).__name__)
        print(f"thermolimit {args.command}: {exc}", file=sys.stderr)
        return code
