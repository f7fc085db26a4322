"""
Ribosome flow model on a ring: vector field, first integral and Jacobian.

Sites are 0-based here and 1-based in every file format. All indices wrap
modulo n.
"""
import logging
from typing import Callable, Protocol, Sequence, Union, runtime_checkable

import numpy as np

from src.errors import ConfigurationError
from src.models import RateSchedule, clamp_to_cube

logger = logging.getLogger(__name__)


@runtime_checkable
class RateProvider(Protocol):
    """Anything that yields the n transition rates at time t."""

    @property
    def n(self) -> int: ...

    def rates_at(self, t: float) -> np.ndarray: ...


Rates = Union[RateProvider, Sequence[float], np.ndarray]


def as_schedule(rates: Rates) -> RateProvider:
    """Accept a schedule, any rate provider, or a plain sequence of constants."""
    if isinstance(rates, RateProvider):
        return rates
    try:
        return RateSchedule.constant(rates)
    except ValueError as e:
        raise ConfigurationError(f"invalid rates: {e}") from e


def as_state(x, n: int = None) -> np.ndarray:
    """Validate a state against the cube (clamping round-off) and its dimension."""
    try:
        state = clamp_to_cube(x)
    except ValueError as e:
        raise ConfigurationError(str(e)) from e
    if state.ndim != 1 or state.size < 2:
        raise ConfigurationError("a state needs at least two sites")
    if n is not None and state.size != n:
        raise ConfigurationError(f"state has {state.size} sites, rates have {n}")
    return state


def _flows(x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    # r_{i,i+1} = lambda_i x_i (1 - x_{i+1})
    return lam * x * (1.0 - np.roll(x, -1))


def _field(x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    flows = _flows(x, lam)
    return np.roll(flows, 1) - flows


def vector_field(x, rates: Rates, t: float = 0.0) -> np.ndarray:
    """
    Evaluate x' = lambda_{i-1} x_{i-1} (1 - x_i) - lambda_i x_i (1 - x_{i+1}).

    Raises:
        ConfigurationError: if x leaves the cube or its length differs from
            the number of rates.
    """
    schedule = as_schedule(rates)
    state = as_state(x, schedule.n)
    return _field(state, schedule.rates_at(t))


def total_occupancy(x) -> float:
    """The conserved first integral H(x) = sum_i x_i."""
    return float(np.sum(as_state(x)))


def flow_profile(x, rates: Rates, t: float = 0.0) -> np.ndarray:
    """Per-edge fluxes r_{i,i+1}; entry i is the flow from site i to site i+1."""
    schedule = as_schedule(rates)
    state = as_state(x, schedule.n)
    return _flows(state, schedule.rates_at(t))


def jacobian(x, rates: Rates, t: float = 0.0) -> np.ndarray:
    """
    Jacobian of the vector field.

    Tridiagonal with wrap-around corners; off-diagonal entries are
    nonnegative on the cube and every column sums to zero. For n = 2 the
    sub- and super-diagonal coincide and their contributions add up.
    """
    schedule = as_schedule(rates)
    state = as_state(x, schedule.n)
    lam = np.asarray(schedule.rates_at(t), dtype=float)
    n = state.size
    idx = np.arange(n)
    prv = (idx - 1) % n
    nxt = (idx + 1) % n

    J = np.zeros((n, n))
    np.add.at(J, (idx, prv), lam[prv] * (1.0 - state))
    np.add.at(J, (idx, idx), -lam[prv] * state[prv] - lam * (1.0 - state[nxt]))
    np.add.at(J, (idx, nxt), lam * state)
    return J


def rhs(rates: Rates) -> Callable[[float, np.ndarray], np.ndarray]:
    """Right-hand side f(t, x) for ODE drivers; skips per-call validation."""
    schedule = as_schedule(rates)

    def f(t: float, x: np.ndarray) -> np.ndarray:
        return _field(x, schedule.rates_at(t))

    return f
