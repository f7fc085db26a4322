"""
The homogeneous ring as a nonlinear average-consensus protocol.
"""
import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from src.analysis import linearized_rate
from src.config import CONSENSUS_EPS, CUBE_TOLERANCE
from src.errors import ConfigurationError, IntegrationError
from src.integrator import Trajectory, check_conservation, solve
from src.metrics import record_integration_failure
from src.models import ConsensusReport, IntegrationConfig, RateSchedule, clamp_to_cube
from src.rfmr import as_state, vector_field

logger = logging.getLogger(__name__)

# Horizon in units of the slowest linearized time constant
HORIZON_TIME_CONSTANTS = 20.0

# Absolute tolerance on the deviation from the average
DEVIATION_ATOL = 1e-14


def consensus_horizon(n: int, rate: float) -> float:
    """20 / (|linearized_rate(n)| * rate)."""
    return HORIZON_TIME_CONSTANTS / (abs(linearized_rate(n)) * rate)


def lyapunov_V(x) -> float:
    """max_i x_i - min_i x_i; zero exactly at consensus."""
    state = as_state(x)
    return float(state.max() - state.min())


def _spread(states: np.ndarray) -> np.ndarray:
    return states.max(axis=1) - states.min(axis=1)


def deviation_rhs(average: float, rate: float):
    """
    Homogeneous ring field in y = x - average 1_n.

    y_i' = rate ((1 - c) y_{i-1} - y_i + c y_{i+1} - y_{i-1} y_i + y_i y_{i+1})
    with c the average.
    """
    c = average

    def f(t: float, y: np.ndarray) -> np.ndarray:
        prev, nxt = np.roll(y, 1), np.roll(y, -1)
        return rate * ((1.0 - c) * prev - y + c * nxt - prev * y + y * nxt)

    return f


def simulate_consensus(
    a,
    rate: float,
    cfg: Optional[IntegrationConfig] = None,
    eps: float = CONSENSUS_EPS,
) -> Tuple[ConsensusReport, Trajectory]:
    """
    Run the homogeneous ring from a and summarize the approach to Ave(a) 1_n.

    The ODE is solved for the deviation from the average, so the solver's
    relative tolerance applies to V itself rather than to the occupancies.
    The default horizon is consensus_horizon(n, rate).

    Raises:
        IntegrationError: solver failure or a state outside the cube.
        ConservationError: total occupancy drifted beyond 1e-9 per site.
    """
    if rate <= 0:
        raise ConfigurationError("the common rate must be positive")
    x0 = as_state(a)
    n = x0.size
    cfg = cfg or IntegrationConfig(t_end=consensus_horizon(n, rate))
    cfg = cfg.model_copy(update={"atol": min(cfg.atol, DEVIATION_ATOL)})
    schedule = RateSchedule.homogeneous(n, rate)

    average = float(x0.mean())
    try:
        times, deviations = solve(deviation_rhs(average, rate), x0 - average, cfg)
    except IntegrationError as e:
        times, deviations = e.partial
        e.partial = Trajectory(times, average + deviations, schedule, cfg)
        raise
    try:
        states = clamp_to_cube(average + deviations, CUBE_TOLERANCE + cfg.atol)
    except ValueError as e:
        record_integration_failure("cube")
        raise IntegrationError(str(e), partial=Trajectory(times, average + deviations, schedule, cfg)) from e
    trajectory = Trajectory(times=times, states=states, rates=schedule, config=cfg)
    check_conservation(trajectory, float(x0.sum()))

    spread = _spread(deviations)
    settled = np.nonzero(spread <= eps)[0]
    settle_time = float(trajectory.times[settled[0]]) if settled.size else None
    error = float(np.max(np.abs(deviations[-1])))

    if settle_time is None:
        logger.warning(f"V still {spread[-1]:.2e} > {eps:.1e} at t={cfg.t_end:g}")
    else:
        logger.info(f"Consensus on {average:.6g} reached at t={settle_time:.4g}")

    report = ConsensusReport(
        rate=rate,
        initial_average=average,
        terminal_state=trajectory.terminal.tolist(),
        consensus_error=error,
        settle_time=settle_time,
        steady_flow=rate * average * (1.0 - average),
        t_end=float(trajectory.times[-1]),
        lyapunov_times=trajectory.times.tolist(),
        lyapunov_trace=spread.tolist(),
    )
    return report, trajectory


def run_consensus(
    a,
    rate: float,
    cfg: Optional[IntegrationConfig] = None,
    eps: float = CONSENSUS_EPS,
) -> ConsensusReport:
    report, _ = simulate_consensus(a, rate, cfg, eps)
    return report


def extremal_derivative_check(x, rate: float = 1.0) -> Tuple[int, int]:
    """
    Signs of the field at the extremal coordinates.

    Returns:
        (largest sign over all argmax indices, smallest sign over all argmin
        indices); (0, 0) for a constant state. Along the homogeneous ring
        the first is never positive and the second never negative.
    """
    state = as_state(x)
    if state.max() == state.min():
        return 0, 0
    dx = vector_field(state, RateSchedule.homogeneous(state.size, rate))
    signs = np.sign(dx).astype(int)
    at_max = signs[state == state.max()]
    at_min = signs[state == state.min()]
    return int(at_max.max()), int(at_min.min())


def lyapunov_frame(report: ConsensusReport) -> pd.DataFrame:
    return pd.DataFrame({"t": report.lyapunov_times, "V": report.lyapunov_trace})


def rate_line(trajectory: Trajectory) -> pd.DataFrame:
    """
    Measured log distance to consensus next to the linearized estimate.

    Columns: t, log_distance, estimate where
    estimate = rate * linearized_rate(n) * t + log |x(0) - Ave 1_n|_2.
    """
    states = trajectory.states
    rate = float(trajectory.rates.rates_at(0.0)[0])
    average = states[0].mean()
    dist = np.linalg.norm(states - average, axis=1)
    log_distance = np.where(dist > 0, np.log(np.where(dist > 0, dist, 1.0)), np.nan)
    slope = rate * linearized_rate(trajectory.n)
    return pd.DataFrame({
        "t": trajectory.times,
        "log_distance": log_distance,
        "estimate": slope * trajectory.times + log_distance[0],
    })
