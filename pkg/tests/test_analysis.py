"""
Tests for equilibria, closed forms and spectral/contraction diagnostics.
"""
import math

import numpy as np
import pytest

from src.analysis import (
    closed_form_n2,
    decay_exponent,
    equilibrium_ordering_check,
    equilibrium_polynomial_n2,
    equilibrium_sweep,
    hrfmr_linearization,
    l1_matrix_measure,
    limit_n2,
    linearized_rate,
    pair_distance_n2,
    riccati_params,
    solve_equilibrium,
)
from src.entrainment import example4_schedule
from src.errors import ConfigurationError, DomainError
from src.integrator import integrate
from src.metrics import get_registry
from src.models import IntegrationConfig, RateSchedule
from src.rfmr import flow_profile, jacobian

FIG3_RATES = [2.0, 3.0, 1.0]


# Equilibria

def test_fig3_equilibrium():
    """Test n=3, lambda=(2,3,1), s=2 gives the known equilibrium."""
    point = solve_equilibrium(FIG3_RATES, 2.0)
    assert point.e == pytest.approx([0.5380, 0.6528, 0.8091], abs=1e-3)
    assert sum(point.e) == pytest.approx(2.0, abs=1e-10)
    assert flow_profile(point.e, FIG3_RATES) == pytest.approx([point.r] * 3, abs=1e-10)
    assert point.residual <= 1e-12
    assert point.n == 3


def test_corner_levels_are_analytic():
    """Test s=0 and s=n return the corners with zero flow."""
    empty = solve_equilibrium(FIG3_RATES, 0.0)
    full = solve_equilibrium(FIG3_RATES, 3.0)
    assert empty.e == [0.0, 0.0, 0.0] and empty.r == 0.0 and empty.iterations == 0
    assert full.e == [1.0, 1.0, 1.0] and full.r == 0.0


def test_homogeneous_equilibrium_is_uniform():
    """Test equal rates give (s/n) 1_n with r = lambda (s/n)(1 - s/n)."""
    point = solve_equilibrium(RateSchedule.homogeneous(5, 1.5), 2.0)
    assert point.e == pytest.approx([0.4] * 5, abs=1e-12)
    assert point.r == pytest.approx(1.5 * 0.4 * 0.6, abs=1e-12)


def test_equilibrium_from_random_guesses_is_unique():
    """Test Newton from 20 random starts lands on the same point."""
    rng = np.random.default_rng(7)
    reference = solve_equilibrium(FIG3_RATES, 1.3).array()
    for _ in range(20):
        point = solve_equilibrium(FIG3_RATES, 1.3, initial_guess=rng.random(3))
        assert np.max(np.abs(point.array() - reference)) < 1e-8


def test_level_outside_range_rejected():
    """Test s must lie in [0, n]."""
    with pytest.raises(ConfigurationError):
        solve_equilibrium(FIG3_RATES, 3.5)
    with pytest.raises(ConfigurationError):
        solve_equilibrium(FIG3_RATES, -0.1)


def test_periodic_rates_have_no_equilibrium_solver():
    """Test periodic schedules are rejected."""
    with pytest.raises(ConfigurationError):
        solve_equilibrium(example4_schedule(), 1.0)


def test_newton_iterations_recorded():
    """Test the Newton histogram observes each solve."""
    registry = get_registry()
    before = registry.get_sample_value("rfmr_newton_iterations_count") or 0.0
    solve_equilibrium([1.0, 2.0], 0.7)
    assert registry.get_sample_value("rfmr_newton_iterations_count") == before + 1


@pytest.mark.parametrize("rates, s, p", [
    ([1.0, 1.0, 1.0, 1.0], 1.0, 3.0),
    ([2.0, 2.0], 0.5, 1.5),
    (FIG3_RATES, 1.0, 2.0),
])
def test_equilibrium_ordering(rates, s, p):
    """Test e(s) << e(p) for s < p."""
    assert equilibrium_ordering_check(rates, s, p)


def test_ordering_needs_s_below_p():
    """Test the ordering check rejects s >= p."""
    with pytest.raises(ConfigurationError):
        equilibrium_ordering_check(FIG3_RATES, 2.0, 1.0)


def test_equilibrium_sweep_is_monotone():
    """Test the equilibrium curve increases componentwise in s."""
    sweep = equilibrium_sweep(FIG3_RATES, 11)
    assert len(sweep) == 11
    assert sweep[0].e == [0.0, 0.0, 0.0]
    assert sweep[-1].e == [1.0, 1.0, 1.0]
    levels = np.array([p.e for p in sweep])
    assert np.all(np.diff(levels, axis=0) > 0)
    for point in sweep:
        assert sum(point.e) == pytest.approx(point.s, abs=1e-10)


# Two-site closed forms

def test_riccati_params():
    """Test Riccati coefficients and the real integration constant."""
    params = riccati_params([1.0, 0.0], 2.0, 1.0)
    assert (params.alpha2, params.alpha1, params.alpha0) == (-1.0, -2.0, 1.0)
    assert params.delta == pytest.approx(8.0)
    assert params.delta == pytest.approx(params.alpha1 ** 2 - 4 * params.alpha2 * params.alpha0)
    assert params.t0 == pytest.approx(2.0 * math.atanh(-1.0 / math.sqrt(2.0)) / math.sqrt(8.0))
    assert riccati_params([1.0, 0.0], 1.0, 1.0).t0 is None


def test_closed_form_initial_condition():
    """Test the closed form returns a at t = 0 for both branches."""
    for lam in ((1.0, 1.0), (2.0, 1.0), (0.5, 3.0)):
        assert closed_form_n2([0.7, 0.2], *lam, 0.0) == pytest.approx([0.7, 0.2], abs=1e-12)


def test_closed_form_equal_rates_limit():
    """Test lambda1 = lambda2 converges to the average."""
    assert closed_form_n2([1.0, 0.0], 1.0, 1.0, 50.0) == pytest.approx([0.5, 0.5], abs=1e-12)


@pytest.mark.parametrize("gap", [1e-8, 1e-10, 1e-11])
def test_closed_form_nearly_equal_rates(gap):
    """Test rates a hair apart stay within the perturbation of the equal-rate solution."""
    t = np.linspace(0.0, 10.0, 101)
    decay = np.exp(-2.0 * t)
    equal_rates = 0.5 * (1.0 - decay) + decay
    x = closed_form_n2([1.0, 0.0], 1.0, 1.0 + gap, t)
    assert np.max(np.abs(x[:, 0] - equal_rates)) <= gap + 1e-13
    assert x.sum(axis=1) == pytest.approx(np.ones_like(t), abs=1e-15)


@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_closed_form_matches_integration(t):
    """Test the Riccati form against numeric integration."""
    traj = integrate([1.0, 0.0], [2.0, 1.0], IntegrationConfig(t_end=t, sample_interval=t / 10))
    assert closed_form_n2([1.0, 0.0], 2.0, 1.0, t) == pytest.approx(traj.terminal, abs=1e-7)


def test_closed_form_tanh_branch():
    """Test an initial value between the roots also matches integration."""
    a = [0.1, 0.3]
    params = riccati_params(a, 2.0, 1.0)
    assert params.t0 is None
    traj = integrate(a, [2.0, 1.0], IntegrationConfig(t_end=3.0))
    assert closed_form_n2(a, 2.0, 1.0, 3.0) == pytest.approx(traj.terminal, abs=1e-7)


def test_closed_form_domain():
    """Test corners and negative times are outside the closed form's domain."""
    with pytest.raises(DomainError):
        closed_form_n2([0.0, 0.0], 2.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        closed_form_n2([1.0, 1.0], 2.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        closed_form_n2([0.5, 0.5], 2.0, 1.0, -1.0)


def test_limit_n2_matches_solver():
    """Test the closed-form limit equals the Newton equilibrium."""
    assert limit_n2(2.0, 1.0, 1.0) == pytest.approx([math.sqrt(2.0) - 1.0, 2.0 - math.sqrt(2.0)])
    for s in (0.3, 1.0, 1.7):
        assert limit_n2(2.0, 1.0, s) == pytest.approx(solve_equilibrium([2.0, 1.0], s).e, abs=1e-9)


@pytest.mark.parametrize("s", [0.2, 1.0, 1.9])
def test_equilibrium_polynomial_brackets_root(s):
    """Test P_s(0) > 0 > P_s(1) and the equilibrium is its root in (0, 1)."""
    lam1, lam2 = 2.0, 1.0
    coeffs = equilibrium_polynomial_n2(lam1, lam2, s)
    assert np.polyval(coeffs, 0.0) == pytest.approx(s * lam2)
    assert np.polyval(coeffs, 1.0) == pytest.approx(lam1 * (s - 2.0))
    assert np.polyval(coeffs, 0.0) > 0 > np.polyval(coeffs, 1.0)
    e1 = limit_n2(lam1, lam2, s)[0]
    assert 0.0 < e1 < 1.0
    assert np.polyval(coeffs, e1) == pytest.approx(0.0, abs=1e-12)


def test_pair_distance_equal_states():
    """Test identical starts stay at distance zero."""
    assert pair_distance_n2([0.4, 0.3], [0.4, 0.3], 2.0, 1.0, 3.0) == 0.0


def test_pair_distance_equal_rates():
    """Test d(t) = 2|a1 - b1| exp(-2 lambda1 t)."""
    d = pair_distance_n2([0.8, 0.2], [0.3, 0.7], 1.0, 1.0, 1.0)
    assert d == pytest.approx(math.exp(-2.0), abs=1e-12)
    assert d == pytest.approx(0.13534, abs=1e-5)


def test_pair_distance_matches_integration():
    """Test the gamma formula against two numeric trajectories."""
    cfg = IntegrationConfig(t_end=1.0)
    xa = integrate([0.9, 0.1], [2.0, 1.0], cfg).terminal
    xb = integrate([0.2, 0.8], [2.0, 1.0], cfg).terminal
    d = pair_distance_n2([0.9, 0.1], [0.2, 0.8], 2.0, 1.0, 1.0)
    assert d == pytest.approx(np.abs(xa - xb).sum(), abs=1e-6)
    assert d <= 2 * 0.7


def test_pair_distance_level_mismatch():
    """Test states on different level sets are rejected."""
    with pytest.raises(DomainError):
        pair_distance_n2([0.9, 0.1], [0.2, 0.7], 2.0, 1.0, 1.0)


# Linearization and contraction

def test_linearization_zero_eigenvalue():
    """Test lambda_1 = 0 with eigenvector 1_n."""
    for n in (2, 5, 9):
        for c in (0.0, 0.3, 1.0):
            Q, eigenvalues = hrfmr_linearization(n, c)
            assert abs(eigenvalues[0]) < 1e-14
            assert np.allclose(Q @ np.ones(n), 0.0)


@pytest.mark.parametrize("n, expected", [(2, -2.0), (4, -1.0)])
def test_second_eigenvalue_real_part(n, expected):
    """Test Re(lambda_2) for n = 2 and n = 4."""
    _, eigenvalues = hrfmr_linearization(n, 0.25)
    assert eigenvalues[1].real == pytest.approx(expected, abs=1e-12)


def test_second_eigenvalue_n10():
    """Test Re(lambda_2) is about -0.191 for n = 10."""
    _, eigenvalues = hrfmr_linearization(10, 0.5)
    assert eigenvalues[1].real == pytest.approx(-0.191, abs=1e-3)


@pytest.mark.parametrize("n", range(2, 13))
@pytest.mark.parametrize("c", [0.0, 0.25, 0.5, 1.0])
def test_eigenvalue_formula_matches_eigensolver(n, c):
    """Test the circulant formula against numpy's eigensolver."""
    Q, eigenvalues = hrfmr_linearization(n, c)
    numeric = np.linalg.eigvals(Q)
    for value in eigenvalues:
        assert np.min(np.abs(numeric - value)) < 1e-10
    assert np.all(eigenvalues.real <= 1e-12)


def test_linearization_is_the_jacobian_at_consensus():
    """Test Q equals the homogeneous Jacobian (unit rate) at c 1_n."""
    for n in (2, 3, 6):
        Q, _ = hrfmr_linearization(n, 0.3)
        J = jacobian(np.full(n, 0.3), RateSchedule.homogeneous(n, 1.0))
        assert np.allclose(Q, J, atol=1e-15)


def test_linearized_rate():
    """Test the n = 2, 4, 10 rates and their monotone decay towards zero."""
    assert linearized_rate(2) == pytest.approx(-2.0)
    assert linearized_rate(4) == pytest.approx(-1.0)
    assert linearized_rate(10) == pytest.approx(-0.19098, abs=1e-5)
    rates = [linearized_rate(n) for n in range(2, 40)]
    assert all(r < 0 for r in rates)
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_l1_matrix_measure():
    """Test mu_1 on small matrices."""
    assert l1_matrix_measure(np.zeros((3, 3))) == 0.0
    assert l1_matrix_measure([[-1.0, 2.0], [0.5, -3.0]]) == pytest.approx(-0.5)
    with pytest.raises(ConfigurationError):
        l1_matrix_measure(np.zeros((2, 3)))


def test_l1_measure_of_jacobian_vanishes():
    """Test mu_1(J(x)) = 0 on the cube."""
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        J = jacobian(rng.random(n), rng.uniform(0.1, 5.0, n))
        assert abs(l1_matrix_measure(J)) < 1e-12


def test_decay_exponent_of_exponential():
    """Test the fitted slope of a pure exponential."""
    times = np.linspace(0.0, 5.0, 51)
    states = np.exp(-2.0 * times)[:, None] * np.array([1.0, -1.0])
    assert decay_exponent(times, states, [0.0, 0.0], 1.0, 4.0) == pytest.approx(-2.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
