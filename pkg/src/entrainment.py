"""
Entrainment of the ring to periodic transition rates.

A run is integrated one period at a time and the samples of each period are
compared with those of the period before it; the schedule declares the
period, nothing is inferred from the data.
"""
import logging
import math
from typing import Optional

import numpy as np
import pandas as pd

from src.config import ENTRAINMENT_TOL, MAX_CYCLES, SAMPLES_PER_PERIOD, IntegrationMethod
from src.errors import ConfigurationError, DomainError
from src.integrator import integrate_segment
from src.models import IntegrationConfig, PeriodicVerdict, RateSchedule
from src.rfmr import Rates, as_schedule, as_state

logger = logging.getLogger(__name__)


def example4_schedule() -> RateSchedule:
    """
    Three sites, period 2 pi:
    lambda1 = 3, lambda2 = 3 + 2 sin(t + 1/2), lambda3 = 4 - 2 cos(2t).
    """
    return RateSchedule.sinusoidal(
        offsets=[3.0, 3.0, 4.0],
        amplitudes=[0.0, 2.0, 2.0],
        frequencies=[0.0, 1.0, 2.0],
        phases=[0.0, 0.5, -0.5 * math.pi],
        period=2.0 * math.pi,
    )


def example5_schedule(offset: float = 2.0, amplitude: float = 1.0) -> RateSchedule:
    """Two sites with lambda1 = 3q/2, lambda2 = q/2 and q(t) = offset + amplitude sin t."""
    if offset <= abs(amplitude):
        raise ConfigurationError("q(t) must stay positive: need offset > |amplitude|")
    return RateSchedule.sinusoidal(
        offsets=[1.5 * offset, 0.5 * offset],
        amplitudes=[1.5 * amplitude, 0.5 * amplitude],
        frequencies=[1.0, 1.0],
        phases=[0.0, 0.0],
        period=2.0 * math.pi,
    )


def _period_config(cfg: IntegrationConfig, period: float) -> IntegrationConfig:
    interval = period / SAMPLES_PER_PERIOD
    update = {"sample_interval": interval, "t_end": period}
    if cfg.method == IntegrationMethod.RK4:
        # whole number of steps per sample keeps samples on the phase grid
        update["step"] = interval / math.ceil(interval / cfg.step - 1e-9)
    return cfg.model_copy(update=update)


def detect_entrainment(
    a,
    rates: Rates,
    tol: float = ENTRAINMENT_TOL,
    max_cycles: int = MAX_CYCLES,
    period: Optional[float] = None,
    cfg: Optional[IntegrationConfig] = None,
) -> PeriodicVerdict:
    """
    Integrate period by period until two consecutive periods agree.

    The residual is the largest sup-norm difference between samples one
    period apart, over SAMPLES_PER_PERIOD equispaced phases of the last
    period. Exhausting max_cycles yields converged = False, not an error.

    Args:
        a: Initial state.
        rates: Periodic schedule, or constant rates together with ``period``.
        tol: Residual at which the run counts as entrained.
        max_cycles: Periods to integrate at most.
        period: Overrides the schedule's period; required for constant rates.
        cfg: Integration method and tolerances; horizon and sampling are
            set per period.
    """
    schedule = as_schedule(rates)
    if period is None:
        period = getattr(schedule, "period", None)
    if period is None or period <= 0:
        raise ConfigurationError("entrainment needs a positive period")
    if max_cycles < 2:
        raise ConfigurationError("max_cycles must be at least 2")

    x = as_state(a, schedule.n)
    h0 = float(np.sum(x))
    per = _period_config(cfg or IntegrationConfig(), period)

    previous = None
    residual = math.inf
    cycles = 0
    samples = None
    for cycles in range(1, max_cycles + 1):
        t0 = (cycles - 1) * period
        segment = integrate_segment(x, schedule, per, t0, t0 + period, h0=h0)
        samples = segment.states[:-1]
        x = segment.states[-1]
        if previous is not None:
            residual = float(np.max(np.abs(samples - previous)))
            if residual <= tol:
                break
        previous = samples

    converged = residual <= tol
    if converged:
        logger.info(f"Entrained after {cycles} cycles, residual {residual:.2e}")
    else:
        logger.warning(f"No entrainment within {max_cycles} cycles, residual {residual:.2e}")

    return PeriodicVerdict(
        converged=converged,
        period_residual=residual,
        cycles_used=cycles,
        period=period,
        tol=tol,
        phases=(np.arange(SAMPLES_PER_PERIOD) * period / SAMPLES_PER_PERIOD).tolist(),
        limit_cycle_samples=samples.tolist(),
    )


def limit_cycle_frame(verdict: PeriodicVerdict) -> pd.DataFrame:
    """Columns phase, x1..xn for one period of the limit cycle."""
    cycle = verdict.cycle_array()
    columns = {"phase": verdict.phases}
    for i in range(cycle.shape[1]):
        columns[f"x{i + 1}"] = cycle[:, i]
    return pd.DataFrame(columns)


def analytic_periodic_n2(a, t, offset: float = 2.0, amplitude: float = 1.0) -> np.ndarray:
    """
    Closed-form solution for lambda1 = 3q/2, lambda2 = q/2, q(t) = offset + amplitude sin t.

    With z = sqrt(3 + (s-1)^2)/2 and u = x1 - s/2 + 1 the dynamics reduce to
    u' = q (z^2 - u^2), so u(t) = z tanh(k + z Q(t)) with Q the integral of q.
    The tanh addition formula is used so the expression also covers initial
    states with |u(0)| > z, where k is not real and the coth form applies.

    Raises:
        DomainError: n != 2 or x1(0)^2 >= s/2.
    """
    state = as_state(a)
    if state.size != 2:
        raise DomainError("the closed form needs n = 2")
    if offset <= abs(amplitude):
        raise ConfigurationError("q(t) must stay positive: need offset > |amplitude|")
    s = float(state.sum())
    if not state[0] ** 2 < s / 2.0:
        raise DomainError(f"need x1(0)^2 < s/2, got {state[0] ** 2:g} >= {s / 2.0:g}")

    t = np.asarray(t, dtype=float)
    z = math.sqrt(3.0 + (s - 1.0) ** 2) / 2.0
    y = (state[0] + 1.0 - s / 2.0) / z
    tau = np.tanh(z * (offset * t + amplitude * (1.0 - np.cos(t))))
    x1 = s / 2.0 - 1.0 + z * (y + tau) / (1.0 + y * tau)
    return np.stack([x1, s - x1], axis=-1)


def periodic_limit_n2(s: float) -> np.ndarray:
    """The constant limit ((s/2) - 1 + z, (s/2) + 1 - z) of the two-site example."""
    z = math.sqrt(3.0 + (s - 1.0) ** 2) / 2.0
    return np.array([s / 2.0 - 1.0 + z, s / 2.0 + 1.0 - z])
