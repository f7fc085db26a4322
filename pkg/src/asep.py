"""
Totally asymmetric exclusion process on a ring (continuous time).

Each occupied site i whose successor is empty fires at rate lambda_i and
moves its particle one site forward. Events are drawn with the Gillespie
method; one sweep is one unit of model time.
"""
import logging
from typing import Iterable, List, Tuple

import numpy as np
import pandas as pd

from src.analysis import solve_equilibrium
from src.errors import ConfigurationError, NumericalError
from src.metrics import record_asep_events
from src.models import AsepEnsemble, AsepResult, EquilibriumPoint, LatticeState, MCConfig

logger = logging.getLogger(__name__)

BIT_GENERATORS = ("PCG64", "PCG64DXSM", "Philox", "SFC64", "MT19937")


def _generator(seed, algorithm: str) -> np.random.Generator:
    if algorithm not in BIT_GENERATORS:
        raise ConfigurationError(f"unknown RNG algorithm {algorithm!r}")
    return np.random.Generator(getattr(np.random, algorithm)(seed))


def _check(initial: LatticeState, cfg: MCConfig) -> None:
    if len(cfg.hop_rates) != initial.n:
        raise ConfigurationError(
            f"{len(cfg.hop_rates)} hop rates for a lattice of {initial.n} sites"
        )


def _run(initial: LatticeState, cfg: MCConfig, rng: np.random.Generator, seed: int) -> AsepResult:
    n = initial.n
    lam = np.asarray(cfg.hop_rates, dtype=float)
    occ = np.asarray(initial.occupancy, dtype=bool).copy()
    count = int(occ.sum())
    t_end, burn_in = float(cfg.sweeps), float(cfg.burn_in)
    measured = t_end - burn_in

    def overlap(start: float, stop: float) -> float:
        return max(0.0, min(stop, t_end) - max(start, burn_in))

    def propensity(i: int) -> float:
        return lam[i] if occ[i] and not occ[(i + 1) % n] else 0.0

    prop = np.where(occ & ~np.roll(occ, -1), lam, 0.0)
    occupied_time = np.zeros(n)
    since = np.zeros(n)
    hops = 0
    events = 0

    t = 0.0
    while True:
        cumulative = np.cumsum(prop)
        total = cumulative[-1]
        if total <= 0.0:
            break
        t_next = t + rng.exponential(1.0 / total)
        if t_next > t_end:
            break
        k = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
        k = min(k, n - 1)
        j = (k + 1) % n

        occ[k], occ[j] = False, True
        occupied_time[k] += overlap(since[k], t_next)
        since[j] = t_next
        for i in ((k - 1) % n, k, j):
            prop[i] = propensity(i)

        events += 1
        if t_next > burn_in:
            hops += 1
        t = t_next

    for i in np.nonzero(occ)[0]:
        occupied_time[i] += overlap(since[i], t_end)

    if int(occ.sum()) != count:
        raise NumericalError(f"particle count changed from {count} to {int(occ.sum())}")

    record_asep_events(events)
    return AsepResult(
        density_profile=(occupied_time / measured).tolist(),
        flux_estimate=hops / (n * measured),
        particle_count=count,
        events=events,
        measured_time=measured,
        seed=seed,
        rng_algorithm=cfg.rng_algorithm,
        hop_rates=lam.tolist(),
    )


def simulate_asep(initial: LatticeState, cfg: MCConfig) -> AsepResult:
    """
    Time-averaged density profile and flux after burn-in.

    The flux is the number of hops per site per unit time. A fixed seed
    reproduces the run exactly.
    """
    _check(initial, cfg)
    rng = _generator(cfg.seed, cfg.rng_algorithm)
    result = _run(initial, cfg, rng, cfg.seed)
    logger.debug(
        f"ASEP n={initial.n}, N={result.particle_count}: {result.events} hops, "
        f"flux {result.flux_estimate:.4g}"
    )
    return result


def simulate_replicas(initial: LatticeState, cfg: MCConfig, replicas: int) -> AsepEnsemble:
    """Independent replicas seeded from SeedSequence(cfg.seed).spawn(replicas)."""
    if replicas < 1:
        raise ConfigurationError("need at least one replica")
    _check(initial, cfg)
    children = np.random.SeedSequence(cfg.seed).spawn(replicas)
    results = [
        _run(initial, cfg, _generator(child, cfg.rng_algorithm), cfg.seed)
        for child in children
    ]
    profiles = np.array([r.density_profile for r in results])
    fluxes = np.array([r.flux_estimate for r in results])

    density_stderr = flux_stderr = None
    if replicas > 1:
        density_stderr = (profiles.std(axis=0, ddof=1) / np.sqrt(replicas)).tolist()
        flux_stderr = float(fluxes.std(ddof=1) / np.sqrt(replicas))

    logger.info(f"Ran {replicas} replicas, mean flux {fluxes.mean():.4g}")
    return AsepEnsemble(
        replicas=replicas,
        density_mean=profiles.mean(axis=0).tolist(),
        density_stderr=density_stderr,
        flux_mean=float(fluxes.mean()),
        flux_stderr=flux_stderr,
        seed=cfg.seed,
        rng_algorithm=cfg.rng_algorithm,
        hop_rates=list(cfg.hop_rates),
    )


def fundamental_diagram(n: int, rate: float, densities: Iterable[float], cfg: MCConfig) -> pd.DataFrame:
    """
    Monte Carlo flux against the mean-field flux rate * rho (1 - rho).

    Each density point gets its own child seed; ``cfg.hop_rates`` is
    replaced by n copies of ``rate``.

    Returns:
        Columns density, particles, mc_flux, mean_field_flux.
    """
    densities = list(densities)
    point_cfg = cfg.model_copy(update={"hop_rates": [float(rate)] * n})
    children = np.random.SeedSequence(cfg.seed).spawn(len(densities))

    rows: List[Tuple[float, int, float, float]] = []
    for rho, child in zip(densities, children):
        if not 0.0 <= rho <= 1.0:
            raise ConfigurationError(f"density {rho:g} outside [0, 1]")
        particles = int(round(rho * n))
        lattice = LatticeState.from_count(n, particles)
        result = _run(lattice, point_cfg, _generator(child, cfg.rng_algorithm), cfg.seed)
        density = particles / n
        rows.append((density, particles, result.flux_estimate, rate * density * (1.0 - density)))
    return pd.DataFrame(rows, columns=["density", "particles", "mc_flux", "mean_field_flux"])


def compare_mean_field(
    initial: LatticeState,
    cfg: MCConfig,
) -> Tuple[pd.DataFrame, AsepResult, EquilibriumPoint]:
    """
    Monte Carlo profile next to the ring equilibrium with the same rates and
    level s = particle count.

    Returns:
        (frame with columns site, density, mean_field; MC result; equilibrium)
    """
    result = simulate_asep(initial, cfg)
    equilibrium = solve_equilibrium(cfg.hop_rates, float(result.particle_count))
    frame = pd.DataFrame({
        "site": np.arange(1, initial.n + 1),
        "density": result.density_profile,
        "mean_field": equilibrium.e,
    })
    return frame, result, equilibrium


def profile_frame(density_profile) -> pd.DataFrame:
    """Columns site (1-based), density."""
    return pd.DataFrame({
        "site": np.arange(1, len(density_profile) + 1),
        "density": density_profile,
    })
