import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isolab.classical import (
    INDETERMINATE, ISOCHRONOUS, NOT_ISOCHRONOUS, PhaseState, closed_orbit_check, commensurability,
    energy, find_turning_points, integrate_trajectory, isochrony_scan, locate_well,
    period_by_flight, period_quadrature,
)
from isolab.errors import DomainError
from isolab.expr import parse
from isolab.families import harmonic, isotonic, quartic

GOLDEN = 0.5 * (1.0 + math.sqrt(5.0))


def quartic_t1() -> float:
    # the endpoint singularity needs extra working precision
    with mpmath.workdps(30):
        return float(4 / mpmath.sqrt(2) * mpmath.quad(lambda u: 1 / mpmath.sqrt(1 - u ** 4), [0, 1]))


def iso_roots(E, a=0.5, b=1.0):
    # a y^2 - E y + b = 0 with y = x^2
    disc = math.sqrt(E * E - 4 * a * b)
    return math.sqrt((E - disc) / (2 * a)), math.sqrt((E + disc) / (2 * a))


# ---------------------------------------------------------------- turning points and wells

def test_turning_point_examples(harm, iso, quart):
    assert find_turning_points(harm, 2.0) == pytest.approx((-2.0, 2.0), abs=1e-13)
    left, right = find_turning_points(iso, 3.0)
    assert (left, right) == pytest.approx(iso_roots(3.0), abs=1e-13)
    assert right == pytest.approx(math.sqrt(3 + math.sqrt(7)), abs=1e-13)
    assert find_turning_points(quart, 1.0) == pytest.approx((-1.0, 1.0), abs=1e-13)


def test_well_of_isotonic(iso):
    w = locate_well(iso)
    assert w.x_min == pytest.approx(2 ** 0.25, abs=1e-10)
    assert w.v_min == pytest.approx(math.sqrt(2.0), abs=1e-13)
    assert w.escape_energy == math.inf


def test_turning_point_errors(harm):
    with pytest.raises(DomainError):
        find_turning_points(harm, -1.0)
    bump = parse("x^2/(1 + x^2)")
    assert locate_well(bump).escape_energy == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(DomainError, match="unbounded"):
        find_turning_points(bump, 2.0)


def test_anchor_selects_well():
    double = parse("(x^2 - 1)^2")
    assert locate_well(double, anchor=0.8).x_min == pytest.approx(1.0, abs=1e-9)
    assert locate_well(double, anchor=-0.8).x_min == pytest.approx(-1.0, abs=1e-9)
    assert locate_well(double, anchor=0.8).escape_energy == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.5, 80.0))
def test_isotonic_turning_points_match_quadratic(E):
    iso = isotonic(0.5, 1.0)
    assert find_turning_points(iso, E) == pytest.approx(iso_roots(E), rel=1e-12)


# ---------------------------------------------------------------- periods

@pytest.mark.parametrize("E", [0.01, 0.5, 1.0, 7.0, 100.0])
def test_harmonic_period(harm, E):
    assert period_quadrature(harm, E) == pytest.approx(2 * math.pi, rel=1e-12)


@pytest.mark.parametrize("E", [1.5, 3.0, 5.0, 50.0, 500.0])
def test_isotonic_period(iso, E):
    assert period_quadrature(iso, E) == pytest.approx(math.pi, rel=1e-12)


def test_quartic_period_against_adaptive_quadrature(quart):
    assert quartic_t1() == pytest.approx(3.7081, abs=1e-4)
    # closed form 2 sqrt(2) Gamma(1/4)^2 / (4 sqrt(2 pi)) as a second oracle
    closed = 2 * math.sqrt(2) * math.gamma(0.25) ** 2 / (4 * math.sqrt(2 * math.pi))
    assert quartic_t1() == pytest.approx(closed, rel=1e-14)
    assert period_quadrature(quart, 1.0) == pytest.approx(quartic_t1(), rel=1e-12)


def test_flight_examples(harm, iso, quart):
    assert period_by_flight(harm, 1.0) == pytest.approx(2 * math.pi, abs=1e-6)
    assert period_by_flight(iso, 5.0) == pytest.approx(math.pi, abs=1e-6)
    assert period_by_flight(quart, 16.0) == pytest.approx(quartic_t1() / 2, abs=1e-4)


@pytest.mark.parametrize("name", ["harmonic", "isotonic", "quartic", "morse", "pendulum"])
def test_oracle_equivalence(name):
    pots = {
        "harmonic": (harmonic(), (0.05, 20.0)),
        "isotonic": (isotonic(0.5, 1.0), (1.5, 40.0)),
        "quartic": (quartic(), (0.05, 20.0)),
        "morse": (parse("(1 - exp(-x))^2"), (0.05, 0.9)),
        "pendulum": (parse("1 - cos(x)"), (0.05, 1.9)),
    }
    pot, (lo, hi) = pots[name]
    rng = np.random.default_rng(hash(name) % 2 ** 32)
    for E in rng.uniform(lo, hi, 10):
        T = period_quadrature(pot, float(E))
        assert abs(T - period_by_flight(pot, float(E))) <= 1e-5 * T


def test_pendulum_period_against_elliptic_integral():
    # V = 1 - cos x: T = 4 K(k^2) with k = sin(amplitude / 2)
    pend = parse("1 - cos(x)")
    for E in (0.1, 1.0, 1.9):
        k2 = E / 2.0
        assert period_quadrature(pend, E) == pytest.approx(float(4 * mpmath.ellipk(k2)), rel=1e-11)


# ---------------------------------------------------------------- isochrony scans

def test_isochrony_examples(harm, iso, quart):
    h = isochrony_scan(harm, (0.1, 10.0), 20, 1e-6)
    assert h.verdict == ISOCHRONOUS
    np.testing.assert_allclose(h.periods, 2 * math.pi, rtol=1e-12)
    i = isochrony_scan(iso, (3.0, 50.0), 20, 1e-6)
    assert i.verdict == ISOCHRONOUS
    np.testing.assert_allclose(i.periods, math.pi, rtol=1e-12)
    q = isochrony_scan(quart, (0.5, 8.0), 10, 1e-6)
    assert q.verdict == NOT_ISOCHRONOUS
    np.testing.assert_allclose(q.periods, quartic_t1() * q.energies ** -0.25, rtol=1e-10)


def test_isochrony_scan_invariants(quart):
    prof = isochrony_scan(quart, (0.5, 8.0), 10, 1e-6)
    assert np.all(prof.periods > 0) and np.all(np.isfinite(prof.periods))
    assert np.all(prof.energies > 0)


def test_isochrony_scan_errors(harm):
    with pytest.raises(DomainError):
        isochrony_scan(harm, (-1.0, 2.0), 10, 1e-6)
    with pytest.raises(ValueError):
        isochrony_scan(harm, (1.0, 2.0), 2, 1e-6)
    with pytest.raises(ValueError):
        isochrony_scan(harm, (1.0, 2.0), 10, 0.0)


def test_indeterminate_when_a_sample_fails(monkeypatch, harm):
    from isolab import classical
    from isolab.errors import ConvergenceError
    real = classical.Orbit.half_period

    def flaky(self, *args, **kwargs):
        if abs(self.E - 5.05) < 1e-9:
            raise ConvergenceError("synthetic failure", achieved=1.0)
        return real(self, *args, **kwargs)

    monkeypatch.setattr(classical.Orbit, "half_period", flaky)
    prof = isochrony_scan(harm, (0.1, 10.0), 3, 1e-6)
    assert prof.verdict == INDETERMINATE
    assert len(prof.periods) == 2 and len(prof.failures) == 1


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(["harmonic", "isotonic"]), st.integers(3, 30))
def test_verdict_stable_under_resampling(name, n):
    pot, rng = (harmonic(), (0.1, 10.0)) if name == "harmonic" else (isotonic(0.5, 1.0), (3.0, 50.0))
    a = isochrony_scan(pot, rng, n, 1e-6).verdict
    b = isochrony_scan(pot, rng, 2 * n, 1e-6).verdict
    assert a == b == ISOCHRONOUS


# ---------------------------------------------------------------- commensurability

def test_commensurability_examples():
    assert commensurability(2 * math.pi, math.pi) == (2, 1)
    assert commensurability(2 * math.pi, 2 * math.pi) == (1, 1)
    assert commensurability(2 * math.pi, 2 * math.pi * GOLDEN, max_den=50, tol=1e-9) is None


def test_golden_ratio_has_no_close_convergent():
    # oracle: Fibonacci ratios are the best approximations of the golden ratio
    fib = [1, 1]
    while fib[-1] <= 50:
        fib.append(fib[-1] + fib[-2])
    errs = [abs(math.log(GOLDEN * fib[i] / fib[i + 1])) for i in range(len(fib) - 2)]
    assert min(errs) > 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.floats(0.1, 100.0), st.floats(-1e-11, 1e-11))
def test_commensurability_symmetry(m, n, scale, noise):
    ta, tb = scale * m / n * (1 + noise), scale
    got = commensurability(ta, tb)
    g = math.gcd(m, n)
    assert got == (m // g, n // g)
    assert commensurability(tb, ta) == (n // g, m // g)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 100.0), st.floats(0.01, 100.0))
def test_commensurability_swap(ta, tb):
    got = commensurability(ta, tb)
    back = commensurability(tb, ta)
    assert (got is None) == (back is None)
    if got is not None:
        assert back == (got[1], got[0])


# ---------------------------------------------------------------- trajectories

def test_harmonic_returns(harm):
    tr = integrate_trajectory(harm, None, (1.0, 0.0), 2 * math.pi, 1e-3)
    assert math.dist(tr.state(-1), (1.0, 0.0)) < 1e-5
    tr2 = integrate_trajectory(harm, harm, ((1.0, 0.0), (0.0, 1.0)), 2 * math.pi, 1e-3)
    a, b = tr2.state(-1)
    assert math.dist(a, (1.0, 0.0)) < 1e-5 and math.dist(b, (0.0, 1.0)) < 1e-5


def test_isotonic_returns(iso):
    xr = find_turning_points(iso, 3.0)[1]
    tr = integrate_trajectory(iso, None, (xr, 0.0), math.pi, 1e-3)
    assert math.dist(tr.state(-1), (xr, 0.0)) < 1e-4


def test_trajectory_invariants(iso):
    tr = integrate_trajectory(iso, None, (1.5, 0.3), 5.0, 1e-3, stride=10)
    assert np.all(np.diff(tr.times) > 0)
    assert tr.times[-1] == pytest.approx(5.0)
    e0 = energy(iso, PhaseState(1.5, 0.3))
    assert np.max(np.abs(tr.energies - e0)) <= tr.energy_drift + 1e-15
    assert tr.drift_constant == pytest.approx(tr.energy_drift / tr.dt ** 2)


@pytest.mark.parametrize("name", ["harmonic", "isotonic", "quartic"])
def test_drift_is_second_order(name):
    pot = {"harmonic": harmonic(), "isotonic": isotonic(0.5, 1.0), "quartic": quartic()}[name]
    s0 = (1.0, 0.7)
    d1 = integrate_trajectory(pot, None, s0, 4.0, 2e-3).energy_drift
    d2 = integrate_trajectory(pot, None, s0, 4.0, 1e-3).energy_drift
    assert 3.5 <= d1 / d2 <= 4.5


def test_pole_guard():
    pot = parse("x^2 - 1/x^2", domain=(0, math.inf))
    with pytest.raises(DomainError):
        integrate_trajectory(pot, None, (0.5, -1.0), 1.0, 1e-3)


def test_step_across_interior_pole_is_caught():
    pot = parse("x^2 - 1/(x-1)^2")
    with pytest.raises(DomainError, match="pole"):
        integrate_trajectory(pot, None, (0.5, 3.0), 1.0, 1e-2)


def test_trajectory_argument_errors(harm):
    with pytest.raises(ValueError):
        integrate_trajectory(harm, None, (1.0, 0.0), 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate_trajectory(harm, harm, (1.0, 0.0), 1.0, 1e-2)


def test_closed_orbit_examples(harm, iso):
    tr = integrate_trajectory(harm, harm, ((1.0, 0.0), (0.0, 1.0)), 10.0, 1e-3, stride=10)
    assert closed_orbit_check(tr, 1e-3) == pytest.approx(2 * math.pi, abs=1e-3)
    tr = integrate_trajectory(harm, iso, ((1.0, 0.0), (2.0, 0.1)), 10.0, 1e-3, stride=10)
    assert closed_orbit_check(tr, 1e-3) == pytest.approx(2 * math.pi, abs=1e-3)


def test_quasi_periodic_orbit_does_not_close(harm):
    fast = harmonic(GOLDEN)
    tr = integrate_trajectory(harm, fast, ((1.0, 0.0), (1.0, 0.0)), 200.0, 1e-3, stride=20)
    assert closed_orbit_check(tr, 1e-3) is None
    # oracle on the exact flow: minimum recurrence distance after leaving the start
    t = tr.times[tr.times > 1.0]
    d = np.sqrt((np.cos(t) - 1) ** 2 + np.sin(t) ** 2 + (np.cos(GOLDEN * t) - 1) ** 2
                + np.sin(GOLDEN * t) ** 2)
    assert d.min() > 1e-3
