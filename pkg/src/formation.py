"""
Agents on a circle driven to the balanced configuration.

Agent k only sees its two neighbours: u_k = x_k (x_{k+1} - 1) + v with the
normalized gaps x_k = (theta_k - theta_{k-1}) / 2pi. The gaps then follow the
homogeneous ring with rate 1/(2pi).
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.errors import DomainError
from src.integrator import solve
from src.models import TWO_PI, BalanceVerdict, FormationState, IntegrationConfig

logger = logging.getLogger(__name__)

GAP_RATE = 1.0 / TWO_PI

# Slack on the gap range before the agent order counts as broken
ORDER_TOL = 1e-9


def _gaps(thetas: np.ndarray) -> np.ndarray:
    """Gap map on (possibly unwrapped) angles; works row-wise on 2-D input."""
    thetas = np.asarray(thetas, dtype=float)
    gaps = (thetas - np.roll(thetas, 1, axis=-1)) / TWO_PI
    gaps[..., 0] += 1.0
    return gaps


def gaps_from_angles(thetas) -> np.ndarray:
    """
    Normalized gaps of an ordered angle set.

    Raises:
        DomainError: angles not ordered in [0, 2pi).
    """
    try:
        FormationState(thetas=list(thetas))
    except ValidationError as e:
        raise DomainError(f"invalid angle set: {e.errors()[0]['msg']}") from e
    gaps = _gaps(np.asarray(thetas, dtype=float))
    gaps[0] = 1.0 - gaps[1:].sum()
    return gaps


def _control(thetas: np.ndarray, v: float) -> np.ndarray:
    x = _gaps(thetas)
    return x * (np.roll(x, -1) - 1.0) + v


def control_law(thetas, v: float = 0.0) -> np.ndarray:
    """u_k = x_k (x_{k+1} - 1) + v for an ordered angle set."""
    x = gaps_from_angles(thetas)
    return x * (np.roll(x, -1) - 1.0) + v


def balanced_velocity(n: int, v: float = 0.0) -> float:
    """Common angular velocity at balance: (1/n - 1)/n + v."""
    return (1.0 / n - 1.0) / n + v


@dataclass(frozen=True)
class FormationTrajectory:
    """Unwrapped angles sampled over time."""

    times: np.ndarray
    thetas: np.ndarray
    radius: float
    v: float

    @property
    def n(self) -> int:
        return self.thetas.shape[1]

    def gaps(self) -> np.ndarray:
        return _gaps(self.thetas)

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.times}
        for k in range(self.n):
            columns[f"theta{k + 1}"] = self.thetas[:, k]
        return pd.DataFrame(columns)


def positions(trajectory: FormationTrajectory) -> pd.DataFrame:
    """Planar positions (R cos theta, R sin theta); columns t, px1, py1, ..."""
    wrapped = np.mod(trajectory.thetas, TWO_PI)
    columns = {"t": trajectory.times}
    for k in range(trajectory.n):
        columns[f"px{k + 1}"] = trajectory.radius * np.cos(wrapped[:, k])
        columns[f"py{k + 1}"] = trajectory.radius * np.sin(wrapped[:, k])
    return pd.DataFrame(columns)


def simulate_formation(
    initial: FormationState,
    cfg: Optional[IntegrationConfig] = None,
    tol: Optional[float] = None,
) -> Tuple[FormationTrajectory, BalanceVerdict]:
    """
    Integrate theta' = u(theta) with unwrapped angles.

    Args:
        initial: Ordered starting angles, radius and velocity offset.
        cfg: Integration settings; horizon defaults to 150.
        tol: Balance tolerance on the angular gaps, default 1e-6 * 2pi.
    """
    cfg = cfg or IntegrationConfig(t_end=150.0)
    tol = 1e-6 * TWO_PI if tol is None else tol
    n = initial.n
    v = initial.v

    def f(t: float, thetas: np.ndarray) -> np.ndarray:
        return _control(thetas, v)

    times, thetas = solve(f, np.asarray(initial.thetas, dtype=float), cfg)
    trajectory = FormationTrajectory(times=times, thetas=thetas, radius=initial.radius, v=v)

    gaps = trajectory.gaps()
    order_preserved = bool(np.all(gaps >= -ORDER_TOL) and np.all(gaps <= 1.0 + ORDER_TOL))
    if not order_preserved:
        logger.warning("Agent order changed during the run")

    gap_error = float(np.max(np.abs(TWO_PI * gaps[-1] - TWO_PI / n)))
    verdict = BalanceVerdict(
        max_gap_error=gap_error,
        balanced=gap_error <= tol,
        order_preserved=order_preserved,
        tol=tol,
        expected_velocity=balanced_velocity(n, v),
        terminal_velocity=_control(thetas[-1], v).tolist(),
        terminal_thetas=np.mod(thetas[-1], TWO_PI).tolist(),
    )
    logger.info(f"Formation run to t={times[-1]:g}: gap error {gap_error:.2e}")
    return trajectory, verdict
