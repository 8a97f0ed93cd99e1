"""Command-line entry point.

Exit codes: 0 on success, 2 when QoS thresholds cannot be met, 1 on any
other error. Results go to files (and stdout for `bounds`/`report`);
diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import pandas as pd

from app.core.config import get_settings
from app.core.errors import InfeasibleProblemError, IsacError
from app.services.config_loader import apply_overrides, build_scenario, load_config, provenance, serialize_config
from app.services.export_service import FLOAT_FORMAT, ResultBundle, write_bundle
from app.services.notification_service import run_monitor
from app.services.orchestrator import SWEEP_PARAMETERS
from app.services.run_service import DEFAULT_RHOS, describe_bundle, run_bounds, run_qos, run_sweep, run_track, run_weighted
from app.services.run_store import list_runs, record_run

logger = logging.getLogger("app.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON run configuration (defaults when omitted)")
    parser.add_argument("--seed", type=int, default=None, help="master seed, overrides run.seed")
    parser.add_argument("--out", type=Path, default=None, help="output directory (default: OUTPUT_DIR setting)")
    parser.add_argument("--rho", type=float, default=None, help="rate weight in [0, 1]")
    parser.add_argument("--dmax-lambda", type=float, default=None, help="region length in wavelengths")
    parser.add_argument("--slots", type=int, default=None, help="number of tracking slots")
    parser.add_argument("--format", choices=("csv", "json"), default=None, help="table format")
    parser.add_argument("--no-ledger", action="store_true", help="do not record the run in the SQLite ledger")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ma-isac",
        description="Movable-antenna ISAC beamforming for V2I: bounds, optimisation and tracking runs.",
    )
    parser.add_argument("--log-level", default=None, help="logging level (default: LOG_LEVEL setting)")
    commands = parser.add_subparsers(dest="command", required=True)

    bounds = commands.add_parser("bounds", help="LCRLB/LPCRLB per vehicle and bound sweeps over M_rx, N, Q")
    _common(bounds)
    bounds.set_defaults(handler=_bounds)

    weighted = commands.add_parser("optimize-weighted", help="alternating weighted-sum optimisation")
    _common(weighted)
    weighted.add_argument("--baseline", action="store_true", help="also run the half-wavelength ULA baseline")
    weighted.set_defaults(handler=_weighted)

    qos = commands.add_parser("optimize-qos", help="two-stage QoS-constrained tracking loop")
    _common(qos)
    qos.add_argument("--baseline", action="store_true", help="also run the half-wavelength ULA baseline")
    qos.add_argument("--timings", action="store_true", help="record wall-clock runtime per slot")
    qos.set_defaults(handler=_qos)

    track = commands.add_parser("track", help="tracking log of the two-stage loop")
    _common(track)
    track.add_argument("--timings", action="store_true", help="record wall-clock runtime per slot")
    track.set_defaults(handler=_track)

    sweep = commands.add_parser("sweep", help="rate/sensing trade-off over rho, or sum-rate over a parameter")
    _common(sweep)
    sweep.add_argument("--rhos", type=_float_list, default=None, help="comma-separated rho values")
    sweep.add_argument("--parameter", choices=SWEEP_PARAMETERS, default=None)
    sweep.add_argument("--values", type=_float_list, default=None, help="comma-separated parameter values")
    sweep.set_defaults(handler=_sweep)

    report = commands.add_parser("report", help="list the run ledger and summarise a result bundle")
    report.add_argument("--bundle", type=Path, default=None, help="result directory to summarise")
    report.add_argument("--limit", type=int, default=20)
    report.add_argument("--no-ledger", action="store_true", help="skip the ledger listing")
    report.set_defaults(handler=_report)
    return parser


# ----------------------------------------------------------------------
# Handlers
def _execute(args: argparse.Namespace, command: str, driver: Callable[..., ResultBundle]) -> tuple[int, ResultBundle, Path]:
    settings = get_settings()
    config = apply_overrides(
        load_config(args.config),
        seed=args.seed,
        rho=args.rho,
        dmax_lambda=args.dmax_lambda,
        slots=args.slots,
    )
    scenario = build_scenario(config)
    out_dir = Path(args.out or config.output.directory or settings.output_dir)
    fmt = args.format or config.output.format
    slotted = command in ("optimize-qos", "track")
    entry_id = run_monitor.start(command=command, total_steps=scenario.horizon if slotted else None)
    try:
        bundle = driver(scenario, provenance=provenance(config), progress=run_monitor.reporter(entry_id))
    except IsacError as exc:
        run_monitor.fail(entry_id, exc)
        if not args.no_ledger:
            status = "infeasible" if isinstance(exc, InfeasibleProblemError) else "failed"
            record_run(command, status=status, seed=scenario.seed, config_hash=scenario.config_hash, message=str(exc))
        raise
    run_monitor.complete(entry_id)

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(serialize_config(config) + "\n", encoding="utf-8")
    paths = write_bundle(bundle, out_dir, fmt)
    for line in describe_bundle(bundle):
        logger.info(line)
    if not args.no_ledger:
        record_run(
            command,
            status="infeasible" if bundle.infeasible else "completed",
            seed=scenario.seed,
            config_hash=scenario.config_hash,
            sum_rate=bundle.sum_rate,
            objective=bundle.objective,
            iterations=bundle.iterations,
            output_path=str(out_dir),
        )
    for path in paths:
        print(path)
    return (EXIT_INFEASIBLE if bundle.infeasible else EXIT_OK), bundle, out_dir


def _bounds(args: argparse.Namespace) -> int:
    code, bundle, _ = _execute(args, "bounds", lambda scenario, provenance, progress: run_bounds(scenario, provenance=provenance))
    bundle.tables["bounds"].to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT)
    return code


def _weighted(args: argparse.Namespace) -> int:
    return _execute(
        args, "optimize-weighted",
        lambda scenario, provenance, progress: run_weighted(
            scenario, baseline=args.baseline, provenance=provenance, progress=progress
        ),
    )[0]


def _qos(args: argparse.Namespace) -> int:
    return _execute(
        args, "optimize-qos",
        lambda scenario, provenance, progress: run_qos(
            scenario, baseline=args.baseline, record_timings=args.timings, provenance=provenance, progress=progress
        ),
    )[0]


def _track(args: argparse.Namespace) -> int:
    return _execute(
        args, "track",
        lambda scenario, provenance, progress: run_track(
            scenario, record_timings=args.timings, provenance=provenance, progress=progress
        ),
    )[0]


def _sweep(args: argparse.Namespace) -> int:
    if (args.parameter is None) != (args.values is None):
        raise IsacError("--parameter and --values must be given together.")
    return _execute(
        args, "sweep",
        lambda scenario, provenance, progress: run_sweep(
            scenario,
            rhos=args.rhos or DEFAULT_RHOS,
            parameter=args.parameter,
            values=args.values,
            provenance=provenance,
            progress=progress,
        ),
    )[0]


def summarise_bundle(directory: Path) -> List[str]:
    if not directory.is_dir():
        raise IsacError(f"Result directory {directory} does not exist.")
    lines = []
    for path in sorted(directory.glob("*_metadata.json")):
        metadata = json.loads(path.read_text(encoding="utf-8"))
        lines.append(
            f"{metadata.get('command')}: seed={metadata.get('seed')} config_hash={metadata.get('config_hash')}"
        )
    for path in sorted(directory.glob("*.csv")):
        frame = pd.read_csv(path)
        lines.append(f"{path.name}: {len(frame)} rows x {len(frame.columns)} columns")
        if "sum_rate_bits" in frame.columns and len(frame):
            lines.append(f"  mean sum-rate {frame['sum_rate_bits'].mean():.6g} bits")
    return lines


def _report(args: argparse.Namespace) -> int:
    if not args.no_ledger:
        rows = [row.model_dump() for row in list_runs(args.limit)]
        if rows:
            columns = ["id", "created_at", "command", "status", "seed", "config_hash", "sum_rate", "output_path"]
            print(pd.DataFrame(rows)[columns].to_string(index=False))
        else:
            print("No runs recorded.")
    if args.bundle is not None:
        for line in summarise_bundle(args.bundle):
            print(line)
    return EXIT_OK


# ----------------------------------------------------------------------
def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = args.log_level or get_settings().log_level
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="[%(asctime)s] %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except InfeasibleProblemError as exc:
        logger.error("Infeasible: %s", exc)
        return EXIT_INFEASIBLE
    except (IsacError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
