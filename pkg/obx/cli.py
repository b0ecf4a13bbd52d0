"""Command-line front end: ``analyze``, ``march`` and ``order-study``.

Exit codes: 0 success, 1 order study with a failed slope check, 2 input or
structural error.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import configure_logging
from .analysis.pencil import (
    check_regularity,
    decomposition_to_json,
    generalized_eigenvalues,
    nilpotency_ranks,
    weierstrass,
)
from .analysis.steady_state import ac_solve, phasor_to_json
from .coefficients import make_scheme, stability_class
from .errors import ConfigError, ObxError
from .integrator import initial_state_from_steady_state, march, trajectory_errors, trajectory_to_csv
from .lab.manager import StudyManager
from .lab.order_study import (
    DEFAULT_POINTS,
    MIN_FIT_SAMPLES,
    SLOPE_TOLERANCE,
    default_h_values,
    report_to_json,
    samples_to_csv,
)
from .model.benchmarks import KINDS, builtin_system
from .model.dae import LinearDae, load_dae
from .model.netlist import load_netlist, stamp

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STUDY_FAILED = 1
EXIT_INPUT_ERROR = 2

COMMANDS = ("analyze", "march", "order-study")


@dataclass
class RunConfig:
    command: str
    netlist: Optional[str] = None
    json: Optional[str] = None
    builtin: Optional[str] = None
    seed: int = 42
    l: int = 1
    m: int = 2
    h: float = 1e-2
    steps: int = 100
    h_min: Optional[float] = None
    h_max: Optional[float] = None
    points: int = DEFAULT_POINTS
    tolerance: float = SLOPE_TOLERANCE
    output: Optional[str] = None
    json_report: Optional[str] = None
    db: Optional[str] = None
    ac: bool = False
    derivatives: bool = False
    verbose: bool = False

    @property
    def input_label(self) -> str:
        if self.builtin:
            return f"builtin:{self.builtin} seed={self.seed}"
        return f"netlist:{self.netlist}" if self.netlist else f"json:{self.json}"


CONFIG_FIELDS = tuple(f.name for f in fields(RunConfig) if f.name != "command")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_argument_group("input (exactly one)")
    source.add_argument("--netlist", default=None, help="SPICE-like netlist file")
    source.add_argument("--json", default=None, help="system in JSON format {N, C, G, b_c, b_s, omega}")
    source.add_argument("--builtin", default=None, choices=KINDS, help="builtin benchmark system")
    common.add_argument("--seed", type=int, default=None, help="seed of the builtin conjugation (default 42)")
    common.add_argument("--config", default=None, help="JSON file with RunConfig fields")
    common.add_argument("--output", default=None, help="output file (default stdout)")
    common.add_argument("--verbose", action="store_true", default=None, help="debug logging")

    scheme = argparse.ArgumentParser(add_help=False)
    scheme.add_argument("--l", type=int, default=None, help="past-point derivative count (default 1)")
    scheme.add_argument("--m", type=int, default=None, help="current-point derivative count (default 2)")

    parser = argparse.ArgumentParser(
        prog="obx",
        description="Obreshkov multi-derivative integration of linear DAEs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", parents=[common], help="regularity, Weierstrass split and index")
    analyze.add_argument("--ac", action="store_true", default=None, help="add the AC steady-state phasor")

    march_p = sub.add_parser("march", parents=[common, scheme], help="fixed-step trajectory as CSV")
    march_p.add_argument("--h", type=float, default=None, help="step size (default 1e-2)")
    march_p.add_argument("--steps", type=int, default=None, help="number of steps (default 100)")
    march_p.add_argument("--derivatives", action="store_true", default=None,
                         help="add the scaled derivative columns")

    study = sub.add_parser("order-study", parents=[common, scheme], help="one-step convergence study")
    study.add_argument("--h-min", type=float, default=None, help="smallest step size")
    study.add_argument("--h-max", type=float, default=None, help="largest step size")
    study.add_argument("--points", type=int, default=None, help=f"number of step sizes (default {DEFAULT_POINTS})")
    study.add_argument("--tolerance", type=float, default=None, help="allowed |slope - predicted order|")
    study.add_argument("--json-report", default=None, help="JSON report file")
    study.add_argument("--db", default=None, help="SQLite study log to append to")
    return parser


def _load_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: configuration must be a JSON object")
    unknown = sorted(set(data) - set(CONFIG_FIELDS))
    if unknown:
        raise ConfigError(f"{path}: unknown configuration key(s): {', '.join(unknown)}")
    return data


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the --config file, then explicit flags.

    Raises:
        ConfigError: On an invalid combination or value.
    """
    state = asdict(RunConfig(command=args.command))
    config_path = getattr(args, "config", None)
    if config_path:
        state.update(_load_config_file(config_path))
        logger.debug(f"Loaded configuration from {config_path}")
    for name in CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            state[name] = value
    try:
        config = RunConfig(**state)
    except TypeError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    validate_config(config)
    return config


def validate_config(config: RunConfig) -> None:
    inputs = [x for x in (config.netlist, config.json, config.builtin) if x]
    if len(inputs) != 1:
        raise ConfigError("exactly one of --netlist, --json or --builtin is required")
    if config.builtin and config.builtin not in KINDS:
        raise ConfigError(f"unknown builtin system '{config.builtin}'. Available: {', '.join(KINDS)}")
    if config.command == "analyze":
        return
    make_scheme(config.l, config.m)
    if config.command == "march":
        if not isinstance(config.steps, int) or config.steps < 1:
            raise ConfigError(f"--steps must be at least 1, got {config.steps!r}")
        if not config.h > 0:
            raise ConfigError(f"--h must be positive, got {config.h!r}")
        if config.l > config.m and config.steps > 1:
            raise ConfigError(
                f"march with l={config.l} > m={config.m} can only take one step: "
                f"each step keeps {config.m + 1} derivative blocks and the next needs {config.l + 1}"
            )
    if config.command == "order-study":
        if not isinstance(config.points, int) or config.points < MIN_FIT_SAMPLES:
            raise ConfigError(f"--points must be at least {MIN_FIT_SAMPLES}, got {config.points!r}")
        if not config.tolerance > 0:
            raise ConfigError(f"--tolerance must be positive, got {config.tolerance!r}")


def load_system(config: RunConfig) -> LinearDae:
    if config.builtin:
        return builtin_system(config.builtin, config.seed).dae
    if config.netlist:
        return stamp(load_netlist(config.netlist))
    return load_dae(config.json)


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w") as f:
        f.write(text)
    logger.info(f"Wrote {path}")


def _dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def cmd_analyze(config: RunConfig) -> int:
    dae = check_regularity(load_system(config))
    decomp = weierstrass(dae.C, dae.G)
    rank_k, rank_k1 = nilpotency_ranks(decomp)
    eigenvalues = generalized_eigenvalues(decomp)
    logger.info(f"Decomposition: r={decomp.r}, s={decomp.s}, k={decomp.index_k}")

    lines = [
        f"system: {config.input_label} (N={dae.dim}, omega={dae.omega:.6g})",
        "regular: true",
        f"r = {decomp.r}, s = {decomp.s}",
        f"index k = {decomp.index_k}",
        f"reconstruction residual = {decomp.residual:.3e}",
        f"rank N^k = {rank_k}, rank N^(k-1) = {rank_k1}",
        "finite eigenvalues: " + (", ".join(f"{z.real:.6g}{z.imag:+.6g}j" for z in eigenvalues) or "none"),
    ]
    report: dict[str, Any] = {
        "system": config.input_label,
        "N": dae.dim,
        "regular": True,
        "residual": decomp.residual,
        "eigenvalues": [[float(z.real), float(z.imag)] for z in eigenvalues],
        "decomposition": decomposition_to_json(decomp),
    }
    if config.ac:
        phasor = ac_solve(dae)
        lines += [
            f"AC omega = {phasor.omega:.6g}, residual = {phasor.residual:.3e}",
            "X_c = " + np.array2string(phasor.X_c, precision=6),
            "X_s = " + np.array2string(phasor.X_s, precision=6),
        ]
        report["ac"] = phasor_to_json(phasor)

    if config.output:
        _write(config.output, _dumps(report))
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_march(config: RunConfig) -> int:
    dae = check_regularity(load_system(config))
    scheme = make_scheme(config.l, config.m)
    phasor = ac_solve(dae)
    initial = initial_state_from_steady_state(dae, phasor, scheme, config.h)
    states = march(dae, scheme, initial, config.h, config.steps)
    deviation = trajectory_errors(states, phasor)
    logger.info(f"Max deviation from the steady state: {deviation.max():.3e}")
    _write(config.output, trajectory_to_csv([initial, *states], derivatives=config.derivatives))
    return EXIT_OK


async def _run_study(config: RunConfig, dae: LinearDae):
    scheme = make_scheme(config.l, config.m)
    # An explicit window is sampled as given; the default one may widen.
    h_values = None
    if config.h_min is not None or config.h_max is not None:
        h_values = default_h_values(dae.omega, config.points, config.h_min, config.h_max)
    async with StudyManager(db_path=config.db) as manager:
        return await manager.run_study(
            dae, scheme, h_values=h_values, points=config.points, tolerance=config.tolerance,
            label=config.input_label,
        )


def cmd_order_study(config: RunConfig) -> int:
    dae = load_system(config)
    klass = stability_class(config.l, config.m)
    if klass == "unclassified":
        logger.info(f"Scheme (l={config.l}, m={config.m}) lies outside the A/L-stable band m-2 <= l <= m")
    report = asyncio.run(_run_study(config, dae))

    _write(config.output, samples_to_csv(report))
    json_path = config.json_report
    if json_path is None and config.output not in (None, "-"):
        json_path = str(Path(config.output).with_suffix(".json"))
    if json_path is not None:
        _write(json_path, _dumps(report_to_json(report)))

    for r in report.results:
        slope = "n/a" if r.slope is None else f"{r.slope:.3f}"
        status = "unresolved" if r.passed is None else ("pass" if r.passed else "FAIL")
        print(f"i={r.i}: slope {slope}, predicted {r.predicted}, {status}", file=sys.stderr)
    return EXIT_OK if report.all_passed else EXIT_STUDY_FAILED


HANDLERS = {
    "analyze": cmd_analyze,
    "march": cmd_march,
    "order-study": cmd_order_study,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(logging.DEBUG if args.verbose else logging.INFO)
    try:
        config = load_run_config(args)
        if config.verbose and not args.verbose:
            # --config may turn on debug logging too
            configure_logging(logging.DEBUG)
        logger.info(f"Running {config.command} on {config.input_label}")
        return HANDLERS[config.command](config)
    except (ObxError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
