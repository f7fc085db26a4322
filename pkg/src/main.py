"""
Command-line front end for the RFMR toolkit.

Parameters are layered preset < --config JSON file < explicit flags and
validated by the pydantic command models before anything runs. Every
command computes all of its outputs first and writes them only on success.
"""
import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from src.analysis import equilibrium_sweep, solve_equilibrium
from src.asep import compare_mean_field, fundamental_diagram, profile_frame, simulate_replicas
from src.config import LOG_LEVEL, METRICS_FILE, PRESETS, SERVICE_NAME, ExitCode, IntegrationMethod, Preset
from src.consensus import consensus_horizon, lyapunov_frame, rate_line, simulate_consensus
from src.correlation import make_run_id, run_context, setup_logging_with_run_id
from src.entrainment import (
    detect_entrainment,
    example4_schedule,
    example5_schedule,
    limit_cycle_frame,
    periodic_limit_n2,
)
from src.errors import ConfigurationError, NumericalError
from src.export import write_csv, write_json
from src.formation import positions, simulate_formation
from src.integrator import integrate
from src.metrics import command_duration, write_metrics
from src.models import (
    AsepConfig,
    ConsensusConfig,
    EntrainConfig,
    EquilibriumConfig,
    FormationConfig,
    FormationState,
    IntegrationConfig,
    LatticeState,
    RateSchedule,
    SimulateConfig,
)
from src.tracing import get_tracer, init_tracing

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    """One-line summary plus the files to write, in order."""

    summary: str
    outputs: List[Tuple[str, Any]] = field(default_factory=list)


def _canonical(config: BaseModel) -> Dict[str, Any]:
    """Configuration without the output location, so results do not depend on it."""
    return config.model_dump(mode="json", exclude={"out_dir"})


def _report(command: str, run_id: str, config: BaseModel, **fields) -> Dict[str, Any]:
    report = {"command": command, "run_id": run_id, "config": _canonical(config)}
    report.update(fields)
    return report


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_simulate(config: SimulateConfig, run_id: str) -> CommandResult:
    """Integrate the ring with constant rates and export the trajectory."""
    trajectory = integrate(config.x0, config.rates, config.integration())
    report = _report(
        "simulate", run_id, config,
        n=trajectory.n,
        samples=len(trajectory.times),
        terminal=trajectory.terminal.tolist(),
        total=float(trajectory.totals()[0]),
        conservation_drift=trajectory.conservation_drift(),
    )
    summary = (
        f"simulate n={trajectory.n} t_end={trajectory.times[-1]:g} "
        f"terminal={np.array2string(trajectory.terminal, precision=6)} "
        f"drift={report['conservation_drift']:.2e}"
    )
    return CommandResult(summary, [
        ("trajectory.csv", trajectory.to_frame()),
        ("trajectory.json", trajectory.to_dict()),
        ("simulate.json", report),
    ])


def cmd_equilibrium(config: EquilibriumConfig, run_id: str) -> CommandResult:
    """Single equilibrium for --s, or the whole curve for --sweep-s."""
    outputs = []
    parts = []
    if config.s is not None:
        point = solve_equilibrium(config.rates, config.s, tol=config.tol)
        outputs.append(("equilibrium.json", _report("equilibrium", run_id, config, equilibrium=point)))
        parts.append(f"e={np.array2string(point.array(), precision=4)} r={point.r:.6g}")
    if config.sweep_s is not None:
        sweep = equilibrium_sweep(config.rates, config.sweep_s, tol=config.tol)
        n = len(config.rates)
        frame = pd.DataFrame(
            [[p.s, *p.e, p.r] for p in sweep],
            columns=["s", *[f"e{i + 1}" for i in range(n)], "r"],
        )
        outputs.append(("equilibrium_sweep.csv", frame))
        outputs.append(("equilibrium_sweep.json", _report("equilibrium", run_id, config, points=sweep)))
        parts.append(f"sweep of {len(sweep)} points, max r={frame['r'].max():.6g}")
    return CommandResult("equilibrium " + "; ".join(parts), outputs)


def _entrain_schedule(config: EntrainConfig) -> Tuple[Any, Optional[float]]:
    if config.rate_schedule is not None:
        return config.rate_schedule, config.period
    if config.schedule == "example4":
        return example4_schedule(), config.period
    if config.schedule == "example5":
        return example5_schedule(), config.period
    return RateSchedule.constant(config.rates), config.period


def cmd_entrain(config: EntrainConfig, run_id: str) -> CommandResult:
    """Period-to-period convergence check and the sampled limit cycle."""
    schedule, period = _entrain_schedule(config)
    verdict = detect_entrainment(config.x0, schedule, tol=config.tol,
                                 max_cycles=config.max_cycles, period=period)
    extra = {}
    if config.schedule == "example5" and config.rate_schedule is None:
        limit = periodic_limit_n2(float(sum(config.x0)))
        extra["analytic_limit"] = limit.tolist()
        extra["analytic_limit_error"] = float(np.max(np.abs(verdict.cycle_array() - limit)))
    report = _report(
        "entrain", run_id, config,
        verdict=verdict.model_dump(mode="json", exclude={"limit_cycle_samples", "phases"}),
        **extra,
    )
    summary = (
        f"entrain converged={verdict.converged} cycles={verdict.cycles_used} "
        f"residual={verdict.period_residual:.2e}"
    )
    return CommandResult(summary, [("limit_cycle.csv", limit_cycle_frame(verdict)), ("entrain.json", report)])


def cmd_consensus(config: ConsensusConfig, run_id: str) -> CommandResult:
    """Homogeneous-ring consensus run with its Lyapunov trace and rate line."""
    n = len(config.x0)
    t_end = config.tend or consensus_horizon(n, config.rate)
    cfg = IntegrationConfig(t_end=t_end, sample_interval=config.sample_interval)
    result, trajectory = simulate_consensus(config.x0, config.rate, cfg, config.eps)
    report = _report(
        "consensus", run_id, config,
        report=result.model_dump(mode="json", exclude={"lyapunov_times", "lyapunov_trace"}),
    )
    settle = "none" if result.settle_time is None else f"{result.settle_time:.4g}"
    summary = (
        f"consensus n={n} average={result.initial_average:.6g} "
        f"error={result.consensus_error:.2e} settle_time={settle}"
    )
    return CommandResult(summary, [
        ("trajectory.csv", trajectory.to_frame()),
        ("lyapunov.csv", lyapunov_frame(result)),
        ("rate_line.csv", rate_line(trajectory)),
        ("consensus.json", report),
    ])


def cmd_formation(config: FormationConfig, run_id: str) -> CommandResult:
    """Circular formation run; angles, positions and the balance verdict."""
    initial = FormationState(thetas=config.thetas, radius=config.radius, v=config.v)
    cfg = IntegrationConfig(t_end=config.tend, sample_interval=config.sample_interval)
    trajectory, verdict = simulate_formation(initial, cfg)
    report = _report("formation", run_id, config, verdict=verdict)
    summary = (
        f"formation n={initial.n} balanced={verdict.balanced} "
        f"gap_error={verdict.max_gap_error:.2e} "
        f"thetas/pi={np.array2string(np.asarray(verdict.terminal_thetas) / math.pi, precision=4)}"
    )
    return CommandResult(summary, [
        ("angles.csv", trajectory.to_frame()),
        ("positions.csv", positions(trajectory)),
        ("formation.json", report),
    ])


def cmd_asep(config: AsepConfig, run_id: str) -> CommandResult:
    """Monte Carlo profile, mean-field comparison and optional sweeps."""
    lattice = LatticeState.from_count(config.n, config.particles)
    mc = config.mc()
    frame, result, equilibrium = compare_mean_field(lattice, mc)
    outputs = [
        ("profile.csv", profile_frame(result.density_profile)),
        ("comparison.csv", frame),
    ]
    fields = {"result": result, "mean_field": equilibrium}
    if config.replicas > 1:
        fields["ensemble"] = simulate_replicas(lattice, mc, config.replicas)
    if config.density_sweep is not None:
        densities = np.linspace(0.0, 1.0, config.density_sweep + 2)[1:-1]
        diagram = fundamental_diagram(config.n, config.rate, densities, mc)
        outputs.append(("fundamental_diagram.csv", diagram))
    outputs.append(("asep.json", _report("asep", run_id, config, **fields)))
    summary = (
        f"asep n={config.n} particles={result.particle_count} "
        f"flux={result.flux_estimate:.5g} mean_field={equilibrium.r:.5g} events={result.events}"
    )
    return CommandResult(summary, outputs)


COMMANDS: Dict[str, Tuple[type, Callable[[Any, str], CommandResult]]] = {
    "simulate": (SimulateConfig, cmd_simulate),
    "equilibrium": (EquilibriumConfig, cmd_equilibrium),
    "entrain": (EntrainConfig, cmd_entrain),
    "consensus": (ConsensusConfig, cmd_consensus),
    "formation": (FormationConfig, cmd_formation),
    "asep": (AsepConfig, cmd_asep),
}


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add(parser: argparse.ArgumentParser, *flags: str, **kwargs) -> None:
    parser.add_argument(*flags, default=argparse.SUPPRESS, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _add(common, "--preset", choices=[p.value for p in Preset], help="worked example preset")
    _add(common, "--config", help="JSON file with command parameters")
    _add(common, "--out-dir", dest="out_dir", help="output directory")
    _add(common, "--metrics-file", dest="metrics_file", help="write Prometheus metrics here")
    _add(common, "--log-level", dest="log_level", help="logging level")
    _add(common, "--n", type=int, help="number of sites")

    parser = argparse.ArgumentParser(
        prog="rfmr",
        description="Ribosome flow model on a ring: simulation and analysis",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", parents=[common], help="integrate the ring")
    _add(p, "--rates", type=_floats)
    _add(p, "--x0", type=_floats)
    _add(p, "--tend", type=float)
    _add(p, "--method", choices=[m.value for m in IntegrationMethod])
    _add(p, "--step", type=float)
    _add(p, "--rtol", type=float)
    _add(p, "--atol", type=float)
    _add(p, "--sample-interval", dest="sample_interval", type=float)

    p = sub.add_parser("equilibrium", parents=[common], help="equilibrium on a level set")
    _add(p, "--rates", type=_floats)
    _add(p, "--s", type=float)
    _add(p, "--sweep-s", dest="sweep_s", type=int)
    _add(p, "--tol", type=float)

    p = sub.add_parser("entrain", parents=[common], help="entrainment to periodic rates")
    _add(p, "--schedule", choices=["example4", "example5"])
    _add(p, "--rates", type=_floats)
    _add(p, "--period", type=float)
    _add(p, "--x0", type=_floats)
    _add(p, "--tol", type=float)
    _add(p, "--max-cycles", dest="max_cycles", type=int)

    p = sub.add_parser("consensus", parents=[common], help="homogeneous-ring consensus")
    _add(p, "--x0", type=_floats)
    _add(p, "--rate", type=float)
    _add(p, "--tend", type=float)
    _add(p, "--eps", type=float)
    _add(p, "--sample-interval", dest="sample_interval", type=float)

    p = sub.add_parser("formation", parents=[common], help="circular formation control")
    _add(p, "--thetas", type=_floats)
    _add(p, "--v", type=float)
    _add(p, "--radius", type=float)
    _add(p, "--tend", type=float)
    _add(p, "--sample-interval", dest="sample_interval", type=float)

    p = sub.add_parser("asep", parents=[common], help="exclusion-process Monte Carlo")
    _add(p, "--particles", type=int)
    _add(p, "--rates", type=_floats)
    _add(p, "--rate", type=float)
    _add(p, "--seed", type=int)
    _add(p, "--sweeps", type=float)
    _add(p, "--burn-in", dest="burn_in", type=float)
    _add(p, "--density-sweep", dest="density_sweep", type=int)
    _add(p, "--replicas", type=int)

    return parser


def _load_config_file(path: str) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return data


def resolve(args: argparse.Namespace) -> Tuple[str, BaseModel]:
    """Merge preset, config file and flags into a validated command config."""
    flags = dict(vars(args))
    command = flags.pop("command", None)
    preset = flags.pop("preset", None)
    config_path = flags.pop("config", None)
    for key in ("metrics_file", "log_level"):
        flags.pop(key, None)

    params: Dict[str, Any] = {}
    if preset is not None:
        entry = PRESETS[Preset(preset)]
        if command is not None and command != entry["command"]:
            raise ConfigurationError(f"preset {preset} belongs to '{entry['command']}', not '{command}'")
        command = entry["command"]
        params.update(entry["params"])

    if config_path is not None:
        data = _load_config_file(config_path)
        file_command = data.pop("command", None)
        if file_command is not None:
            if command is not None and command != file_command:
                raise ConfigurationError(f"config file is for '{file_command}', not '{command}'")
            command = file_command
        params.update(data.pop("params", data))

    if command is None:
        raise ConfigurationError("no command given")
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")

    params.update(flags)
    model, _ = COMMANDS[command]
    return command, model.model_validate(params)


def _write_outputs(out_dir: Path, outputs: Sequence[Tuple[str, Any]]) -> None:
    for name, payload in outputs:
        if isinstance(payload, pd.DataFrame):
            write_csv(payload, out_dir / name)
        else:
            write_json(payload, out_dir / name)


def _usage_error(parser: argparse.ArgumentParser, message: str) -> int:
    parser.print_usage(sys.stderr)
    print(f"rfmr: error: {message}", file=sys.stderr)
    return ExitCode.USAGE.value


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging_with_run_id(getattr(args, "log_level", LOG_LEVEL))
    init_tracing(service_name=SERVICE_NAME)
    metrics_file = getattr(args, "metrics_file", None) or METRICS_FILE

    try:
        command, config = resolve(args)
    except ValidationError as e:
        return _usage_error(parser, f"invalid parameters: {e}")
    except ConfigurationError as e:
        return _usage_error(parser, str(e))

    run_id = make_run_id(command, _canonical(config))
    _, handler = COMMANDS[command]
    code = ExitCode.OK
    with run_context(run_id), get_tracer().start_as_current_span(f"cmd_{command}") as span:
        span.set_attribute("rfmr.run_id", run_id)
        logger.info(f"Running {command}")
        try:
            with command_duration.labels(command=command).time():
                result = handler(config, run_id)
            _write_outputs(Path(config.out_dir), result.outputs)
            print(result.summary)
        except (ConfigurationError, ValidationError) as e:
            logger.error(f"{command} rejected its inputs: {e}")
            print(f"rfmr: error: {e}", file=sys.stderr)
            code = ExitCode.USAGE
        except NumericalError as e:
            logger.error(f"{command} failed: {e}")
            print(f"rfmr: numerical failure: {e}", file=sys.stderr)
            code = ExitCode.NUMERICAL_FAILURE

    if metrics_file:
        write_metrics(metrics_file)
    return code.value


if __name__ == "__main__":
    sys.exit(main())
