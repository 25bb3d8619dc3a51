import math

import numpy as np
import pytest

from periodnorm import liecalc as lc
from periodnorm.errors import AmbiguousReturnError, NotPeriodicError
from periodnorm.fields import ExprVectorField, builtin_system
from periodnorm.flow import beta_along, find_cycle, integrate, quadrature_along

HARMONIC = builtin_system("harmonic")


def test_harmonic_rotation_endpoint():
    traj = integrate(HARMONIC.V, (1.0, 0.0), 2 * math.pi)
    assert traj.t[-1] == 2 * math.pi
    assert np.allclose(traj.end, (1.0, 0.0), atol=1e-9)


def test_harmonic_energy_drift_over_100_periods():
    traj = integrate(HARMONIC.V, (1.0, 0.0), 200 * math.pi)
    energy = 0.5 * (traj.z[:, 0] ** 2 + traj.z[:, 1] ** 2)
    assert np.max(np.abs(energy - 0.5)) <= 1e-7


def test_constant_field():
    traj = integrate(ExprVectorField("1", "0"), (0.0, 0.0), 1.0)
    assert traj.end == pytest.approx((1.0, 0.0), abs=1e-15)


def test_dense_output_tracks_exact_solution():
    traj = integrate(HARMONIC.V, (1.0, 0.0), 3.0)
    for t in np.linspace(0.0, 3.0, 37):
        assert traj(t) == pytest.approx((math.cos(t), -math.sin(t)), abs=1e-9)
    assert np.array_equal(traj(traj.t[3]), traj.z[3])


def test_local_error_respects_tolerance():
    traj = integrate(HARMONIC.V, (1.0, 0.0), 10.0, tol=(1e-6, 1e-8))
    assert np.all(traj.errors <= 1.0)
    assert traj.end == pytest.approx((math.cos(10), -math.sin(10)), abs=1e-4)


@pytest.mark.parametrize("z0", [(1.0, 0.0), (0.0, 0.3), (-1.2, 0.9)])
def test_harmonic_period(z0):
    cyc = find_cycle(HARMONIC.V, z0)
    assert cyc.T == pytest.approx(2 * math.pi, abs=1e-8)
    assert cyc.closure_error <= 1e-8


def test_rotational_period():
    sys = builtin_system("rotational:2+(x^2+y^2)")
    assert find_cycle(sys.V, (1.0, 0.0)).T == pytest.approx(2 * math.pi / 3, abs=1e-8)


def test_twowell_outer_cycle():
    sys = builtin_system("twowell")
    cyc = find_cycle(sys.V, (0.0, 2.0), H=sys.H)
    assert cyc.closure_error <= 1e-8
    assert cyc.level == 5.0
    assert cyc.level_drift <= 1e-8
    assert cyc.T == pytest.approx(1.99713481551697, rel=1e-9)


def test_cycle_samples_stop_at_period():
    cyc = find_cycle(HARMONIC.V, (1.0, 0.0))
    assert cyc.samples.t[-1] == cyc.T
    assert len(cyc.samples.sample(16)) == 16


def test_translation_is_not_periodic():
    with pytest.raises(NotPeriodicError):
        find_cycle(ExprVectorField("1", "0"), (0.0, 0.0), t_max=50.0)


def test_focus_returns_far_from_start():
    focus = ExprVectorField("y - 0.1*x", "-x - 0.1*y")
    with pytest.raises(AmbiguousReturnError) as info:
        find_cycle(focus, (1.0, 0.0), t_max=50.0)
    assert info.value.candidates


def test_equilibrium_start():
    with pytest.raises(NotPeriodicError):
        find_cycle(HARMONIC.V, (0.0, 0.0))


def test_quadrature():
    cyc = find_cycle(HARMONIC.V, (0.8, 0.0))
    assert quadrature_along(cyc, lambda p: 1.0) == pytest.approx(cyc.T, rel=1e-12)
    assert quadrature_along(cyc, lambda p: lc.mu_hamiltonian(HARMONIC.H, p)) == pytest.approx(0.0, abs=1e-9)
    # d_V x along the orbit is the exact derivative of x(t)
    assert quadrature_along(cyc, lambda p: HARMONIC.V(p)[0]) == pytest.approx(0.0, abs=1e-8)


def test_quadrature_runs_the_guard():
    sys = builtin_system("twowell")
    cyc = find_cycle(sys.V, (0.0, 2.0), H=sys.H)
    N = lc.normalizer_separable(*sys.separable)
    with pytest.raises(lc.GuardViolation):
        quadrature_along(cyc, N.mu, guard=N.check_path)


def test_beta_for_zero_nu():
    cyc = find_cycle(HARMONIC.V, (1.0, 0.0))
    prof = beta_along(cyc, lambda p: 0.0, beta0=2.5)
    assert np.all(prof.beta == 2.5)
    assert prof.holonomy == 1.0


def test_beta_for_normalizer_is_constant():
    sys = builtin_system("quartic")
    cyc = find_cycle(sys.V, (1.0, 0.0))
    W = lc.normalizer_gradient(sys.H).W
    prof = beta_along(cyc, lambda p: lc.nu(sys.V, W, p))
    assert np.max(np.abs(prof.beta - 1.0)) <= 1e-9


def test_beta_holonomy_for_transversal_non_normalizer():
    # W = (1 + 0.3x)(x, y) is transversal to the rotation but [V, W] has a W-component
    W = ExprVectorField("(1 + 0.3*x)*x", "(1 + 0.3*x)*y")
    cyc = find_cycle(HARMONIC.V, (1.0, 0.0))
    prof = beta_along(cyc, lambda p: lc.nu(HARMONIC.V, W, p))
    assert np.ptp(prof.beta) > 0.1
    assert prof.holonomy == pytest.approx(1.0, abs=1e-6)
