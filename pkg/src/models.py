"""
Serializable domain types and command configurations.
"""
import math
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    computed_field,
    field_validator,
    model_validator,
)

from src.config import (
    ATOL,
    CONSENSUS_EPS,
    CUBE_TOLERANCE,
    ENTRAINMENT_TOL,
    MAX_CYCLES,
    OUT_DIR,
    RTOL,
    SAMPLE_INTERVAL,
    STEP,
    IntegrationMethod,
    ScheduleKind,
)

TWO_PI = 2.0 * math.pi


def clamp_to_cube(values, tolerance: float = CUBE_TOLERANCE) -> np.ndarray:
    """
    Clamp round-off excursions outside the unit cube.

    Entries in [-tolerance, 1 + tolerance] are clipped to [0, 1]; anything
    further out raises ``ValueError``.
    """
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("state contains non-finite entries")
    if np.any(arr < -tolerance) or np.any(arr > 1.0 + tolerance):
        raise ValueError(
            f"state leaves the unit cube beyond tolerance {tolerance:g}: "
            f"min={arr.min():.3e}, max={arr.max():.3e}"
        )
    return np.clip(arr, 0.0, 1.0)


class OccupancyState(BaseModel):
    """Point of the closed unit cube: normalized occupancy per site."""

    values: List[float] = Field(..., min_length=2, description="Occupancy x_i per site")

    @field_validator("values")
    @classmethod
    def _in_cube(cls, v: List[float]) -> List[float]:
        return clamp_to_cube(v).tolist()

    @property
    def n(self) -> int:
        return len(self.values)

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


# --------------------------------------------------------------------------
# Rate schedules
# --------------------------------------------------------------------------

class SinusoidRate(BaseModel):
    """lambda(t) = offset + amplitude * sin(frequency * t + phase)."""

    kind: Literal["sinusoid"] = "sinusoid"
    offset: float = Field(..., gt=0)
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def value(self, t: float, period: Optional[float] = None) -> float:
        return self.offset + self.amplitude * math.sin(self.frequency * t + self.phase)

    def bounds(self) -> Tuple[float, float]:
        return self.offset - abs(self.amplitude), self.offset + abs(self.amplitude)

    def is_periodic(self, period: float) -> bool:
        if self.amplitude == 0.0 or self.frequency == 0.0:
            return True
        cycles = abs(self.frequency) * period / TWO_PI
        return abs(cycles - round(cycles)) < 1e-9 and round(cycles) >= 1


class PiecewiseRate(BaseModel):
    """Piecewise-constant table repeated with the schedule period."""

    kind: Literal["piecewise"] = "piecewise"
    breakpoints: List[float] = Field(..., min_length=1, description="Segment start times in [0, T)")
    values: List[float] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_table(self) -> "PiecewiseRate":
        if len(self.breakpoints) != len(self.values):
            raise ValueError("breakpoints and values must have the same length")
        if self.breakpoints[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        return self

    def value(self, t: float, period: Optional[float] = None) -> float:
        phase = t % period if period else t
        idx = int(np.searchsorted(self.breakpoints, phase, side="right")) - 1
        return self.values[max(idx, 0)]

    def bounds(self) -> Tuple[float, float]:
        return min(self.values), max(self.values)

    def is_periodic(self, period: float) -> bool:
        return self.breakpoints[-1] < period


RateComponent = Annotated[Union[SinusoidRate, PiecewiseRate], Field(discriminator="kind")]


class RateSchedule(BaseModel):
    """The n transition rates: constants or T-periodic functions of time."""

    kind: ScheduleKind = ScheduleKind.CONSTANT
    rates: Optional[List[float]] = Field(default=None, description="Constant rates")
    period: Optional[float] = Field(default=None, gt=0, description="Common period T")
    components: Optional[List[RateComponent]] = None

    _constant: Optional[np.ndarray] = PrivateAttr(default=None)
    _sin: Optional[Tuple[np.ndarray, ...]] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_schedule(self) -> "RateSchedule":
        if self.kind == ScheduleKind.CONSTANT:
            if not self.rates or len(self.rates) < 2:
                raise ValueError("constant schedule needs at least two rates")
            if any(r <= 0 or not math.isfinite(r) for r in self.rates):
                raise ValueError("all transition rates must be positive")
        else:
            if self.period is None:
                raise ValueError("periodic schedule needs a period")
            if not self.components or len(self.components) < 2:
                raise ValueError("periodic schedule needs at least two components")
            for i, comp in enumerate(self.components, start=1):
                if not comp.is_periodic(self.period):
                    raise ValueError(f"rate {i} is not {self.period:g}-periodic")
            low, _ = self.bounds()
            if low <= 0:
                raise ValueError(f"rates must stay positive, lower bound is {low:g}")
        return self

    def model_post_init(self, __context) -> None:
        if self.kind == ScheduleKind.CONSTANT:
            self._constant = np.asarray(self.rates, dtype=float)
        elif all(isinstance(c, SinusoidRate) for c in self.components):
            self._sin = tuple(
                np.array([getattr(c, name) for c in self.components], dtype=float)
                for name in ("offset", "amplitude", "frequency", "phase")
            )

    @classmethod
    def constant(cls, rates) -> "RateSchedule":
        return cls(kind=ScheduleKind.CONSTANT, rates=[float(r) for r in rates])

    @classmethod
    def homogeneous(cls, n: int, rate: float) -> "RateSchedule":
        return cls.constant([rate] * n)

    @classmethod
    def sinusoidal(cls, offsets, amplitudes, frequencies, phases, period: float) -> "RateSchedule":
        comps = [
            SinusoidRate(offset=a, amplitude=b, frequency=w, phase=p)
            for a, b, w, p in zip(offsets, amplitudes, frequencies, phases)
        ]
        return cls(kind=ScheduleKind.PERIODIC, period=period, components=comps)

    @property
    def n(self) -> int:
        return len(self.rates) if self.kind == ScheduleKind.CONSTANT else len(self.components)

    @property
    def is_constant(self) -> bool:
        return self.kind == ScheduleKind.CONSTANT

    def bounds(self) -> Tuple[float, float]:
        """(delta1, delta2) with delta1 <= lambda_i(t) <= delta2."""
        if self.kind == ScheduleKind.CONSTANT:
            return min(self.rates), max(self.rates)
        lows, highs = zip(*(c.bounds() for c in self.components))
        return min(lows), max(highs)

    def rates_at(self, t: float) -> np.ndarray:
        if self._constant is not None:
            return self._constant
        if self._sin is not None:
            offset, amplitude, frequency, phase = self._sin
            return offset + amplitude * np.sin(frequency * t + phase)
        return np.array([c.value(t, self.period) for c in self.components])


# --------------------------------------------------------------------------
# Integration and Monte Carlo configuration
# --------------------------------------------------------------------------

class IntegrationConfig(BaseModel):
    """How to integrate: method, tolerances, horizon and sampling."""

    method: IntegrationMethod = IntegrationMethod.RK45
    step: float = Field(default=STEP, gt=0, description="Fixed RK4 step")
    rtol: float = Field(default=RTOL, gt=0)
    atol: float = Field(default=ATOL, gt=0)
    t_end: float = Field(default=10.0, gt=0, description="Horizon")
    sample_interval: float = Field(default=SAMPLE_INTERVAL, gt=0, description="Time between stored samples")


class MCConfig(BaseModel):
    """Monte Carlo run parameters. One sweep is one unit of model time."""

    seed: int = Field(default=0, ge=0)
    sweeps: float = Field(default=1000.0, gt=0)
    burn_in: float = Field(default=100.0, ge=0)
    hop_rates: List[float] = Field(..., min_length=2)
    rng_algorithm: str = "PCG64"

    @field_validator("hop_rates")
    @classmethod
    def _positive(cls, v: List[float]) -> List[float]:
        if any(r <= 0 for r in v):
            raise ValueError("hop rates must be positive")
        return v

    @model_validator(mode="after")
    def _burn_in_shorter(self) -> "MCConfig":
        if not self.sweeps > self.burn_in:
            raise ValueError("sweeps must exceed burn_in")
        return self


# --------------------------------------------------------------------------
# Results
# --------------------------------------------------------------------------

class EquilibriumPoint(BaseModel):
    """Equilibrium e on the level set L_s with its steady-state flow r."""

    rates: List[float]
    s: float
    e: List[float]
    r: float
    residual: float = 0.0
    iterations: int = 0

    @computed_field
    @property
    def n(self) -> int:
        return len(self.e)

    def array(self) -> np.ndarray:
        return np.asarray(self.e, dtype=float)


class Riccati2Params(BaseModel):
    """Coefficients of the n=2 Riccati reduction x1' = a2 x1^2 + a1 x1 + a0."""

    alpha2: float
    alpha1: float
    alpha0: float
    delta: float = Field(..., gt=0)
    t0: Optional[float] = Field(default=None, description="None on the tanh branch")
    s: float


class PeriodicVerdict(BaseModel):
    """Outcome of period-to-period comparison of a PRFMR run."""

    converged: bool
    period_residual: float = Field(..., ge=0)
    cycles_used: int
    period: float
    tol: float
    phases: List[float]
    limit_cycle_samples: List[List[float]]

    @model_validator(mode="after")
    def _verdict_matches_residual(self) -> "PeriodicVerdict":
        if self.converged != (self.period_residual <= self.tol):
            raise ValueError("converged must equal period_residual <= tol")
        return self

    def cycle_array(self) -> np.ndarray:
        return np.asarray(self.limit_cycle_samples, dtype=float)


class ConsensusReport(BaseModel):
    """HRFMR consensus run summary."""

    rate: float
    initial_average: float
    terminal_state: List[float]
    consensus_error: float = Field(..., ge=0)
    settle_time: Optional[float] = None
    steady_flow: float
    t_end: float
    lyapunov_times: List[float]
    lyapunov_trace: List[float]


class FormationState(BaseModel):
    """Agents on a circle: angles, radius and common velocity offset."""

    thetas: List[float] = Field(..., min_length=2, description="Angles in radians")
    radius: float = Field(default=1.0, gt=0)
    v: float = 0.0

    @field_validator("thetas")
    @classmethod
    def _ordered(cls, v: List[float]) -> List[float]:
        if v[0] < 0 or v[-1] >= TWO_PI:
            raise ValueError("angles must lie in [0, 2*pi)")
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("angles must be non-decreasing")
        return v

    @property
    def n(self) -> int:
        return len(self.thetas)


class BalanceVerdict(BaseModel):
    """How close a formation run ended to the balanced configuration."""

    max_gap_error: float
    balanced: bool
    order_preserved: bool
    tol: float
    expected_velocity: float
    terminal_velocity: List[float]
    terminal_thetas: List[float]


class LatticeState(BaseModel):
    """Exclusion-process lattice on a ring."""

    occupancy: List[bool] = Field(..., min_length=2)

    @computed_field
    @property
    def particle_count(self) -> int:
        return int(sum(self.occupancy))

    @property
    def n(self) -> int:
        return len(self.occupancy)

    @classmethod
    def from_count(cls, n: int, particles: int) -> "LatticeState":
        """Particles spread as evenly as possible around the ring."""
        if not 0 <= particles <= n:
            raise ValueError(f"particle count {particles} outside [0, {n}]")
        occ = [False] * n
        for k in range(particles):
            occ[(k * n) // particles] = True
        return cls(occupancy=occ)


class AsepResult(BaseModel):
    """Time-averaged Monte Carlo observables."""

    density_profile: List[float]
    flux_estimate: float
    particle_count: int
    events: int
    measured_time: float
    seed: int
    rng_algorithm: str
    hop_rates: List[float]


class AsepEnsemble(BaseModel):
    """Replica averages; standard errors need at least two replicas."""

    replicas: int = Field(..., ge=1)
    density_mean: List[float]
    density_stderr: Optional[List[float]] = None
    flux_mean: float
    flux_stderr: Optional[float] = None
    seed: int
    rng_algorithm: str
    hop_rates: List[float]


# --------------------------------------------------------------------------
# Command configurations
# --------------------------------------------------------------------------

class CommandConfig(BaseModel):
    """Fields shared by every CLI command."""

    model_config = ConfigDict(extra="forbid")

    n: Optional[int] = Field(default=None, ge=2)
    out_dir: str = OUT_DIR


def _check_n(n: Optional[int], *lengths: int) -> None:
    for length in lengths:
        if n is not None and length != n:
            raise ValueError(f"--n {n} does not match a vector of length {length}")


class SimulateConfig(CommandConfig):
    rates: List[float] = Field(..., min_length=2)
    x0: List[float] = Field(..., min_length=2)
    tend: float = Field(default=10.0, gt=0)
    method: IntegrationMethod = IntegrationMethod.RK45
    step: float = Field(default=STEP, gt=0)
    rtol: float = Field(default=RTOL, gt=0)
    atol: float = Field(default=ATOL, gt=0)
    sample_interval: float = Field(default=SAMPLE_INTERVAL, gt=0)

    @model_validator(mode="after")
    def _dimensions(self) -> "SimulateConfig":
        if len(self.rates) != len(self.x0):
            raise ValueError("rates and x0 must have the same length")
        _check_n(self.n, len(self.rates))
        clamp_to_cube(self.x0)
        RateSchedule.constant(self.rates)
        return self

    def integration(self) -> IntegrationConfig:
        return IntegrationConfig(
            method=self.method, step=self.step, rtol=self.rtol, atol=self.atol,
            t_end=self.tend, sample_interval=self.sample_interval,
        )


class EquilibriumConfig(CommandConfig):
    rates: List[float] = Field(..., min_length=2)
    s: Optional[float] = Field(default=None, ge=0)
    sweep_s: Optional[int] = Field(default=None, ge=2)
    tol: float = Field(default=1e-12, gt=0)

    @model_validator(mode="after")
    def _target(self) -> "EquilibriumConfig":
        _check_n(self.n, len(self.rates))
        RateSchedule.constant(self.rates)
        if self.s is None and self.sweep_s is None:
            raise ValueError("either s or sweep_s is required")
        if self.s is not None and self.s > len(self.rates):
            raise ValueError(f"s must lie in [0, {len(self.rates)}]")
        return self


class EntrainConfig(CommandConfig):
    schedule: Optional[Literal["example4", "example5"]] = None
    rate_schedule: Optional[RateSchedule] = None
    rates: Optional[List[float]] = None
    period: Optional[float] = Field(default=None, gt=0)
    x0: List[float] = Field(..., min_length=2)
    tol: float = Field(default=ENTRAINMENT_TOL, gt=0)
    max_cycles: int = Field(default=MAX_CYCLES, ge=2)

    @model_validator(mode="after")
    def _schedule_source(self) -> "EntrainConfig":
        clamp_to_cube(self.x0)
        _check_n(self.n, len(self.x0))
        if self.rate_schedule is None and self.schedule is None:
            if self.rates is None or self.period is None:
                raise ValueError("give a schedule name, a rate_schedule, or rates with a period")
            if len(self.rates) != len(self.x0):
                raise ValueError("rates and x0 must have the same length")
            RateSchedule.constant(self.rates)
        return self


class ConsensusConfig(CommandConfig):
    x0: List[float] = Field(..., min_length=2)
    rate: float = Field(default=1.0, gt=0)
    tend: Optional[float] = Field(default=None, gt=0)
    eps: float = Field(default=CONSENSUS_EPS, gt=0)
    sample_interval: float = Field(default=SAMPLE_INTERVAL, gt=0)

    @model_validator(mode="after")
    def _state(self) -> "ConsensusConfig":
        clamp_to_cube(self.x0)
        _check_n(self.n, len(self.x0))
        return self


class FormationConfig(CommandConfig):
    thetas: List[float] = Field(..., min_length=2)
    v: float = 0.0
    radius: float = Field(default=1.0, gt=0)
    tend: float = Field(default=150.0, gt=0)
    sample_interval: float = Field(default=0.05, gt=0)

    @model_validator(mode="after")
    def _ordering(self) -> "FormationConfig":
        FormationState(thetas=self.thetas, radius=self.radius, v=self.v)
        _check_n(self.n, len(self.thetas))
        return self


class AsepConfig(CommandConfig):
    n: int = Field(default=100, ge=2)
    particles: int = Field(default=50, ge=0)
    rates: Optional[List[float]] = None
    rate: float = Field(default=1.0, gt=0)
    seed: int = Field(default=0, ge=0)
    sweeps: float = Field(default=1000.0, gt=0)
    burn_in: float = Field(default=100.0, ge=0)
    density_sweep: Optional[int] = Field(default=None, ge=2)
    replicas: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _lattice(self) -> "AsepConfig":
        if self.particles > self.n:
            raise ValueError(f"particles must lie in [0, {self.n}]")
        if self.rates is not None and len(self.rates) != self.n:
            raise ValueError("rates must have one entry per site")
        MCConfig(seed=self.seed, sweeps=self.sweeps, burn_in=self.burn_in, hop_rates=self.hop_rates())
        return self

    def hop_rates(self) -> List[float]:
        return list(self.rates) if self.rates is not None else [self.rate] * self.n

    def mc(self, seed: Optional[int] = None) -> MCConfig:
        return MCConfig(
            seed=self.seed if seed is None else seed,
            sweeps=self.sweeps, burn_in=self.burn_in, hop_rates=self.hop_rates(),
        )
