"""
Numerical integration of the RFMR and its periodic variant.

Conservation of total occupancy is monitored, never enforced: there is no
projection step, so drift doubles as an integration-quality diagnostic.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from src.config import CONSERVATION_TOL, CUBE_TOLERANCE, SETTLE_TOL, IntegrationMethod
from src.errors import ConfigurationError, ConservationError, IntegrationError, SettleTimeoutError
from src.metrics import record_integration, record_integration_failure
from src.models import IntegrationConfig, RateSchedule, clamp_to_cube
from src.rfmr import Rates, RateProvider, as_schedule, as_state, rhs

logger = logging.getLogger(__name__)

OdeRhs = Callable[[float, np.ndarray], np.ndarray]

# Length of the chunks integrate_to_equilibrium advances by between settle checks
SETTLE_WINDOW = 10.0


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of one integration run."""

    times: np.ndarray
    states: np.ndarray
    rates: RateProvider
    config: IntegrationConfig

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def totals(self) -> np.ndarray:
        return self.states.sum(axis=1)

    def conservation_drift(self) -> float:
        totals = self.totals()
        return float(np.max(np.abs(totals - totals[0])))

    def to_frame(self, prefix: str = "x") -> pd.DataFrame:
        columns = {"t": self.times}
        for i in range(self.n):
            columns[f"{prefix}{i + 1}"] = self.states[:, i]
        return pd.DataFrame(columns)

    def to_dict(self) -> dict:
        rates = self.rates.model_dump(mode="json") if isinstance(self.rates, RateSchedule) else None
        return {
            "times": self.times.tolist(),
            "states": self.states.tolist(),
            "rates": rates,
            "config": self.config.model_dump(mode="json"),
        }


def _sample_grid(t_start: float, t_stop: float, interval: float) -> np.ndarray:
    count = max(1, int(round((t_stop - t_start) / interval)))
    return np.linspace(t_start, t_stop, count + 1)


def _rk4(f: OdeRhs, y0: np.ndarray, t_start: float, t_stop: float,
         cfg: IntegrationConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Classical fixed-step RK4; stores every stride-th step and the last one."""
    steps = max(1, math.ceil((t_stop - t_start) / cfg.step - 1e-9))
    h = (t_stop - t_start) / steps
    stride = max(1, int(round(cfg.sample_interval / h)))

    y = np.array(y0, dtype=float)
    times, states = [t_start], [y.copy()]
    for k in range(1, steps + 1):
        t = t_start + (k - 1) * h
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k % stride == 0 or k == steps:
            times.append(t_start + k * h)
            states.append(y.copy())
    record_integration(cfg.method.value, 4 * steps)
    return np.asarray(times), np.asarray(states)


def solve(f: OdeRhs, y0, cfg: IntegrationConfig, t_start: float = 0.0,
          t_stop: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate y' = f(t, y) from t_start to t_stop (default: t_start + cfg.t_end).

    Returns:
        (times, states) sampled every cfg.sample_interval, endpoints included.

    Raises:
        IntegrationError: adaptive step size underflow; ``partial`` holds the
            (times, states) reached so far.
    """
    t_stop = t_start + cfg.t_end if t_stop is None else t_stop
    y0 = np.asarray(y0, dtype=float)

    if cfg.method == IntegrationMethod.RK4:
        return _rk4(f, y0, t_start, t_stop, cfg)

    grid = _sample_grid(t_start, t_stop, cfg.sample_interval)
    sol = solve_ivp(
        f, (t_start, t_stop), y0, method="RK45", t_eval=grid,
        rtol=cfg.rtol, atol=cfg.atol,
    )
    record_integration(cfg.method.value, sol.nfev)
    if sol.status != 0:
        record_integration_failure("step_size")
        logger.error(f"Integration stopped at t={sol.t[-1] if sol.t.size else t_start:.6g}: {sol.message}")
        raise IntegrationError(
            f"integration failed: {sol.message}",
            partial=(sol.t, sol.y.T),
        )
    return sol.t, sol.y.T


def _check_cube(times: np.ndarray, states: np.ndarray, schedule: RateProvider,
                cfg: IntegrationConfig) -> np.ndarray:
    try:
        return clamp_to_cube(states, CUBE_TOLERANCE + cfg.atol)
    except ValueError as e:
        record_integration_failure("cube")
        raise IntegrationError(str(e), partial=Trajectory(times, states, schedule, cfg)) from e


def check_conservation(trajectory: Trajectory, h0: float) -> None:
    limit = CONSERVATION_TOL * trajectory.n
    drift = float(np.max(np.abs(trajectory.totals() - h0)))
    if drift > limit:
        record_integration_failure("conservation")
        logger.error(f"Conservation drift {drift:.3e} exceeds {limit:.3e}")
        raise ConservationError(
            f"total occupancy drifted by {drift:.3e} (limit {limit:.3e})",
            partial=trajectory,
        )


def integrate_segment(x0: np.ndarray, schedule: RateProvider, cfg: IntegrationConfig,
                      t_start: float, t_stop: float, h0: Optional[float] = None) -> Trajectory:
    """Integrate a validated state over [t_start, t_stop] with cube and conservation checks."""
    try:
        times, states = solve(rhs(schedule), x0, cfg, t_start=t_start, t_stop=t_stop)
    except IntegrationError as e:
        times, states = e.partial
        e.partial = Trajectory(times, states, schedule, cfg)
        raise

    states = _check_cube(times, states, schedule, cfg)
    trajectory = Trajectory(times=times, states=states, rates=schedule, config=cfg)
    check_conservation(trajectory, float(np.sum(x0)) if h0 is None else h0)
    return trajectory


def integrate(a, rates: Rates, cfg: Optional[IntegrationConfig] = None) -> Trajectory:
    """
    Integrate the RFMR (or PRFMR) from a over the configured horizon.

    Raises:
        ConfigurationError: a outside the cube or dimension mismatch.
        IntegrationError: solver failure, with a partial trajectory attached.
        ConservationError: total occupancy drifted beyond 1e-9 per site.
    """
    cfg = cfg or IntegrationConfig()
    schedule = as_schedule(rates)
    x0 = as_state(a, schedule.n)

    trajectory = integrate_segment(x0, schedule, cfg, 0.0, cfg.t_end)
    times = trajectory.times
    logger.debug(f"Integrated n={schedule.n} to t={times[-1]:.6g} in {len(times)} samples")
    return trajectory


def integrate_to_equilibrium(
    a,
    rates: Rates,
    cfg: Optional[IntegrationConfig] = None,
    settle_tol: float = SETTLE_TOL,
) -> Tuple[np.ndarray, float]:
    """
    Integrate until the sup-norm of the vector field drops below settle_tol.

    Returns:
        (state, elapsed) for the first sampled state that settles.

    Raises:
        SettleTimeoutError: horizon exhausted; carries the best state seen.
    """
    cfg = cfg or IntegrationConfig(t_end=200.0)
    schedule = as_schedule(rates)
    if isinstance(schedule, RateSchedule) and not schedule.is_constant:
        raise ConfigurationError("integrate_to_equilibrium needs constant rates")
    x = as_state(a, schedule.n)
    h0 = float(np.sum(x))
    f = rhs(schedule)

    norm = float(np.max(np.abs(f(0.0, x))))
    if norm < settle_tol:
        return x, 0.0
    best_state, best_norm, best_time = x, norm, 0.0

    t = 0.0
    while t < cfg.t_end:
        t_next = min(t + SETTLE_WINDOW, cfg.t_end)
        segment = integrate_segment(x, schedule, cfg, t, t_next, h0=h0)
        times, states = segment.times, segment.states

        norms = np.array([np.max(np.abs(f(tk, xk))) for tk, xk in zip(times, states)])
        settled = np.nonzero(norms[1:] < settle_tol)[0]
        if settled.size:
            k = int(settled[0]) + 1
            logger.debug(f"Settled at t={times[k]:.6g} with |f|={norms[k]:.2e}")
            return states[k], float(times[k])

        k = int(np.argmin(norms))
        if norms[k] < best_norm:
            best_state, best_norm, best_time = states[k], float(norms[k]), float(times[k])
        x, t = states[-1], t_next

    record_integration_failure("settle_timeout")
    raise SettleTimeoutError(
        f"vector field norm {best_norm:.3e} still above {settle_tol:.1e} at t={cfg.t_end:g}",
        best_state=best_state,
        elapsed=best_time,
        field_norm=best_norm,
    )
