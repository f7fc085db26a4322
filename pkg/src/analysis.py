"""
Equilibria on level sets, closed forms for n = 2, contraction diagnostics
and the linearization of the homogeneous ring.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from src.config import NEWTON_MAX_HALVINGS, NEWTON_MAX_ITER, SETTLE_TOL
from src.errors import (
    ConfigurationError,
    DomainError,
    EquilibriumSolverError,
    SettleTimeoutError,
)
from src.integrator import integrate_to_equilibrium
from src.metrics import record_newton
from src.models import EquilibriumPoint, IntegrationConfig, RateSchedule, Riccati2Params
from src.rfmr import Rates, as_schedule, as_state
from src.tracing import get_tracer

logger = logging.getLogger(__name__)

# Settle tolerance of the warm-start integration
WARM_START_TOL = 1e-6
WARM_START_HORIZON = 200.0
FALLBACK_HORIZON = 2000.0

# |alpha2| below this fraction of lambda1 + lambda2 counts as equal rates
EQUAL_RATES_TOL = 1e-12


# --------------------------------------------------------------------------
# Equilibria
# --------------------------------------------------------------------------

def _constant_rates(rates: Rates) -> np.ndarray:
    schedule = as_schedule(rates)
    if isinstance(schedule, RateSchedule) and not schedule.is_constant:
        raise ConfigurationError("equilibria need a constant rate schedule")
    return np.asarray(schedule.rates_at(0.0), dtype=float)


def _check_level(s: float, n: int) -> float:
    if not -1e-12 <= s <= n + 1e-12:
        raise ConfigurationError(f"level s={s:g} outside [0, {n}]")
    return min(max(float(s), 0.0), float(n))


def _residual(e: np.ndarray, lam: np.ndarray, s: float) -> np.ndarray:
    flows = lam * e * (1.0 - np.roll(e, -1))
    F = np.empty_like(e)
    F[:-1] = flows[:-1] - flows[1:]
    F[-1] = e.sum() - s
    return F


def _residual_jacobian(e: np.ndarray, lam: np.ndarray) -> np.ndarray:
    n = e.size
    idx = np.arange(n)
    nxt = (idx + 1) % n
    # G[i, :] is the gradient of the flow r_{i,i+1}
    G = np.zeros((n, n))
    np.add.at(G, (idx, idx), lam * (1.0 - e[nxt]))
    np.add.at(G, (idx, nxt), -lam * e)
    M = np.empty((n, n))
    M[:-1] = G[:-1] - G[1:]
    M[-1] = 1.0
    return M


def _newton(e: np.ndarray, lam: np.ndarray, s: float, tol: float) -> Tuple[np.ndarray, float, int, bool]:
    """Damped Newton; returns (e, residual, iterations, converged)."""
    F = _residual(e, lam, s)
    res = float(np.max(np.abs(F)))
    for it in range(1, NEWTON_MAX_ITER + 1):
        if res <= tol:
            return e, res, it - 1, True
        try:
            step = np.linalg.solve(_residual_jacobian(e, lam), -F)
        except np.linalg.LinAlgError:
            logger.warning(f"Singular Newton matrix at iteration {it}")
            return e, res, it, False

        damping = 1.0
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            trial = e + damping * step
            if np.all(trial >= 0.0) and np.all(trial <= 1.0):
                F_trial = _residual(trial, lam, s)
                res_trial = float(np.max(np.abs(F_trial)))
                if res_trial < res:
                    break
            damping *= 0.5
        else:
            logger.debug(f"Newton stalled at iteration {it} with residual {res:.3e}")
            return e, res, it, False
        e, F, res = trial, F_trial, res_trial
    return e, res, NEWTON_MAX_ITER, res <= tol


def _warm_start(lam: np.ndarray, s: float, settle_tol: float, horizon: float) -> np.ndarray:
    start = np.full(lam.size, s / lam.size)
    try:
        state, _ = integrate_to_equilibrium(
            start, lam, IntegrationConfig(t_end=horizon), settle_tol=settle_tol
        )
    except SettleTimeoutError as e:
        logger.debug(f"Warm start stopped at |f|={e.field_norm:.2e}")
        state = np.asarray(e.best_state, dtype=float)
    return state


def _point(lam: np.ndarray, s: float, e: np.ndarray, residual: float, iterations: int) -> EquilibriumPoint:
    flows = lam * e * (1.0 - np.roll(e, -1))
    return EquilibriumPoint(
        rates=lam.tolist(),
        s=s,
        e=e.tolist(),
        r=float(np.mean(flows)),
        residual=residual,
        iterations=iterations,
    )


def solve_equilibrium(
    rates: Rates,
    s: float,
    tol: float = 1e-12,
    initial_guess=None,
) -> EquilibriumPoint:
    """
    Compute the unique equilibrium of the level set {x : sum(x) = s}.

    A short integration from the uniform state (s/n) 1_n provides a warm
    start for damped Newton on the residual of the common-flow conditions
    plus the level constraint. If Newton stalls, a long integration to a
    tight settle tolerance replaces the warm start and Newton runs again.

    Args:
        rates: Constant transition rates.
        s: Level in [0, n].
        tol: Sup-norm residual target.
        initial_guess: Replaces the warm-start integration when given.

    Raises:
        ConfigurationError: periodic rates or s outside [0, n].
        EquilibriumSolverError: Newton failed after the fallback.
    """
    lam = _constant_rates(rates)
    n = lam.size
    s = _check_level(s, n)

    if s == 0.0 or s == float(n):
        e = np.full(n, s / n)
        return _point(lam, s, e, 0.0, 0)

    with get_tracer().start_as_current_span("solve_equilibrium") as span:
        span.set_attribute("rfmr.n", n)
        span.set_attribute("rfmr.s", s)

        if initial_guess is not None:
            start = as_state(initial_guess, n)
        else:
            start = _warm_start(lam, s, WARM_START_TOL, WARM_START_HORIZON)

        e, residual, iterations, converged = _newton(start, lam, s, tol)
        total = iterations
        if not converged:
            logger.warning(
                f"Newton did not converge (residual {residual:.3e}); "
                f"falling back to extended integration"
            )
            start = _warm_start(lam, s, SETTLE_TOL, FALLBACK_HORIZON)
            e, residual, iterations, converged = _newton(start, lam, s, tol)
            total += iterations

        record_newton(total)
        span.set_attribute("rfmr.newton_iterations", total)
        if not converged:
            logger.error(f"Equilibrium solve failed for s={s:g}: residual {residual:.3e}")
            raise EquilibriumSolverError(
                f"Newton did not reach residual {tol:.1e} (got {residual:.3e})",
                residual=residual,
                iterations=total,
            )

    logger.debug(f"Equilibrium for s={s:g} in {total} Newton iterations, residual {residual:.2e}")
    return _point(lam, s, e, residual, total)


def equilibrium_ordering_check(rates: Rates, s: float, p: float, tol: float = 1e-12) -> bool:
    """True iff e(s) is below e(p) in every coordinate by more than tol."""
    lam = _constant_rates(rates)
    if not 0.0 <= s < p <= lam.size:
        raise ConfigurationError(f"need 0 <= s < p <= {lam.size}, got s={s:g}, p={p:g}")
    low = solve_equilibrium(lam, s).array()
    high = solve_equilibrium(lam, p).array()
    return bool(np.all(high - low > tol))


def equilibrium_sweep(rates: Rates, points: int, tol: float = 1e-12) -> List[EquilibriumPoint]:
    """Equilibria for `points` equispaced levels covering [0, n]."""
    lam = _constant_rates(rates)
    if points < 2:
        raise ConfigurationError("a sweep needs at least two points")
    n = lam.size
    levels = np.linspace(0.0, n, points)
    sweep = []
    previous = None
    for s in levels:
        guess = None
        if previous is not None and 0.0 < s < n and 0.0 < previous.s < n:
            # shift the neighbouring equilibrium onto the new level
            guess = np.clip(previous.array() + (s - previous.s) / n, 0.0, 1.0)
        try:
            point = solve_equilibrium(lam, s, tol=tol, initial_guess=guess)
        except EquilibriumSolverError:
            if guess is None:
                raise
            point = solve_equilibrium(lam, s, tol=tol)
        sweep.append(point)
        previous = point
    return sweep


# --------------------------------------------------------------------------
# n = 2 closed forms
# --------------------------------------------------------------------------

def _pair(a) -> np.ndarray:
    state = as_state(a)
    if state.size != 2:
        raise ConfigurationError("closed forms need n = 2")
    return state


def _check_not_corner(state: np.ndarray) -> None:
    if np.all(state == 0.0) or np.all(state == 1.0):
        raise DomainError(f"{state.tolist()} is an equilibrium corner of the cube")


def _coefficients(lam1: float, lam2: float, s: float) -> Tuple[float, float, float, float]:
    if lam1 <= 0 or lam2 <= 0:
        raise ConfigurationError("rates must be positive")
    alpha2 = lam2 - lam1
    alpha1 = (lam1 - lam2) * s - lam1 - lam2
    alpha0 = s * lam2
    delta = alpha1 * alpha1 - 4.0 * alpha2 * alpha0
    return alpha2, alpha1, alpha0, delta


def _equal_rates(alpha2: float, lam1: float, lam2: float) -> bool:
    return abs(alpha2) < EQUAL_RATES_TOL * (lam1 + lam2)


def riccati_params(a, lam1: float, lam2: float) -> Riccati2Params:
    """
    Coefficients of x1' = alpha2 x1^2 + alpha1 x1 + alpha0 on the level of a.

    ``t0`` is the constant of the coth form of the solution. It is finite
    when the initial value lies beyond both roots, -inf at the stable root,
    and None when the solution follows the tanh branch instead.
    """
    state = _pair(a)
    s = float(state.sum())
    alpha2, alpha1, alpha0, delta = _coefficients(lam1, lam2, s)
    t0 = None
    if not _equal_rates(alpha2, lam1, lam2):
        root = math.sqrt(delta)
        y = (2.0 * alpha2 * state[0] + alpha1) / root
        if abs(y) > 1.0:
            t0 = 2.0 * math.atanh(1.0 / y) / root
        elif y == -1.0:
            t0 = -math.inf
    return Riccati2Params(alpha2=alpha2, alpha1=alpha1, alpha0=alpha0, delta=delta, t0=t0, s=s)


def closed_form_n2(a, lam1: float, lam2: float, t) -> np.ndarray:
    """
    Exact solution of the two-site ring at time(s) t.

    The Riccati flow is the projective action of the linear pair
    u' = (alpha1/2) u + alpha0 v, v' = -alpha2 u - (alpha1/2) v, x1 = u/v.
    Its matrix squares to (delta/4) I, so with r = sqrt(delta) and
    tau = tanh(r t / 2):

        x1 = (a1 + tau (alpha1 a1 + 2 alpha0) / r) / (1 - tau (2 alpha2 a1 + alpha1) / r)

    This equals the coth form on every branch, stays finite as t -> t0 and
    never divides by alpha2, so nearly equal rates lose no precision.

    Returns:
        shape (2,) for scalar t, (len(t), 2) for an array of times.

    Raises:
        DomainError: a is 0_2 or 1_2, or t < 0.
    """
    state = _pair(a)
    _check_not_corner(state)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("closed form is defined for t >= 0")

    s = float(state.sum())
    a1 = state[0]
    alpha2, alpha1, alpha0, delta = _coefficients(lam1, lam2, s)

    root = math.sqrt(delta)
    tau = np.tanh(0.5 * root * t)
    numerator = a1 + tau * (alpha1 * a1 + 2.0 * alpha0) / root
    denominator = 1.0 - tau * (2.0 * alpha2 * a1 + alpha1) / root
    x1 = numerator / denominator

    x1 = np.clip(x1, max(0.0, s - 1.0), min(1.0, s))
    return np.stack([x1, s - x1], axis=-1)


def limit_n2(lam1: float, lam2: float, s: float) -> np.ndarray:
    """Equilibrium of the two-site ring on level s."""
    s = _check_level(s, 2)
    alpha2, alpha1, _, delta = _coefficients(lam1, lam2, s)
    if _equal_rates(alpha2, lam1, lam2):
        x1 = 0.5 * s
    else:
        x1 = (-alpha1 - math.sqrt(delta)) / (2.0 * alpha2)
    x1 = min(max(x1, max(0.0, s - 1.0)), min(1.0, s))
    return np.array([x1, s - x1])


def equilibrium_polynomial_n2(lam1: float, lam2: float, s: float) -> np.ndarray:
    """
    Coefficients (highest degree first) of P_s(z) = alpha2 z^2 + alpha1 z + alpha0.

    The equilibrium coordinate e_1 is the root of P_s in (0, 1):
    P_s(0) = s lambda2 > 0 and P_s(1) = lambda1 (s - 2) < 0 for s in (0, 2).
    """
    alpha2, alpha1, alpha0, _ = _coefficients(lam1, lam2, _check_level(s, 2))
    return np.array([alpha2, alpha1, alpha0])


def pair_distance_n2(a, b, lam1: float, lam2: float, t: float) -> float:
    """
    L1 distance at time t between the solutions from a and b (same level).

    With q = (2 alpha2 z1 + alpha1) / sqrt(delta), d(t) = d(0) / |gamma(t)| where
    gamma(t) = e^{rt}(qa qb + 1 - qa - qb)/4 + e^{-rt}(qa qb + 1 + qa + qb)/4 + (1 - qa qb)/2
    and r = sqrt(delta).
    """
    xa, xb = _pair(a), _pair(b)
    for state in (xa, xb):
        _check_not_corner(state)
    if abs(xa.sum() - xb.sum()) > 1e-12:
        raise DomainError(f"states lie on different levels ({xa.sum():g} vs {xb.sum():g})")
    if t < 0:
        raise DomainError("distance is defined for t >= 0")

    d0 = 2.0 * abs(xa[0] - xb[0])
    if d0 == 0.0:
        return 0.0
    s = float(xa.sum())
    alpha2, alpha1, _, delta = _coefficients(lam1, lam2, s)
    if _equal_rates(alpha2, lam1, lam2):
        return d0 * math.exp(-2.0 * lam1 * t)

    root = math.sqrt(delta)
    qa = (2.0 * alpha2 * xa[0] + alpha1) / root
    qb = (2.0 * alpha2 * xb[0] + alpha1) / root
    # scaled by e^{-rt} so large t does not overflow
    decay = math.exp(-root * t)
    gamma_scaled = (
        0.25 * (qa * qb + 1.0 - qa - qb)
        + 0.25 * decay * decay * (qa * qb + 1.0 + qa + qb)
        + 0.5 * decay * (1.0 - qa * qb)
    )
    return d0 * decay / abs(gamma_scaled)


# --------------------------------------------------------------------------
# Contraction and linearization
# --------------------------------------------------------------------------

def hrfmr_linearization(n: int, c: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Linearization Q of the homogeneous ring (unit rate) around c 1_n.

    Q is circulant with -1 on the diagonal, c above it and 1 - c below it,
    both wrapping around. Eigenvalues follow the circulant formula
    -1 + c w^(l-1) + (1-c) w^((l-1)(n-1)) with w = exp(2 pi i / n), l = 1..n.
    """
    if n < 2:
        raise ConfigurationError("n must be at least 2")
    if not 0.0 <= c <= 1.0:
        raise ConfigurationError(f"c={c:g} outside [0, 1]")
    idx = np.arange(n)
    Q = np.zeros((n, n))
    np.add.at(Q, (idx, idx), -1.0)
    np.add.at(Q, (idx, (idx + 1) % n), c)
    np.add.at(Q, (idx, (idx - 1) % n), 1.0 - c)

    w = np.exp(2j * np.pi / n)
    ell = np.arange(n)
    eigenvalues = -1.0 + c * w ** ell + (1.0 - c) * w ** (ell * (n - 1))
    return Q, eigenvalues


def linearized_rate(n: int) -> float:
    """Real part of the slowest nonzero eigenvalue: cos(2 pi (n-1)/n) - 1."""
    if n < 2:
        raise ConfigurationError("n must be at least 2")
    return math.cos(2.0 * math.pi * (n - 1) / n) - 1.0


def l1_matrix_measure(M) -> float:
    """mu_1(M) = max_j (M_jj + sum_{i != j} |M_ij|)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigurationError("matrix measure needs a square matrix")
    diag = np.diag(M)
    off = np.abs(M).sum(axis=0) - np.abs(diag)
    return float(np.max(diag + off))


def decay_exponent(times, states, target, t_min: Optional[float] = None,
                   t_max: Optional[float] = None) -> float:
    """Least-squares slope of log |x(t) - target|_2 over [t_min, t_max]."""
    times = np.asarray(times, dtype=float)
    dist = np.linalg.norm(np.asarray(states, dtype=float) - np.asarray(target, dtype=float), axis=1)
    mask = dist > 0
    if t_min is not None:
        mask &= times >= t_min
    if t_max is not None:
        mask &= times <= t_max
    if np.count_nonzero(mask) < 2:
        raise ConfigurationError("need at least two samples with nonzero distance")
    slope, _ = np.polyfit(times[mask], np.log(dist[mask]), 1)
    return float(slope)
