import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isolab.dressing import q17_build
from isolab.errors import ConvergenceError, DomainError
from isolab.expr import parse
from isolab.families import harmonic, isotonic
from isolab.quantum import (
    EQUIDISTANT, MINUS, PAIRED, PLAIN_HARMONIC, PLUS, Grid, GridOperator, LadderOperator,
    analyze_ladder_structure, build_hamiltonian, commutator_residual, eigensolve,
    harmonic_ladder, inner, isotonic_nu, isotonic_spectrum_formula, ladder_apply, make_ladder,
    norm, overlap, pole_strength,
)


def harmonic_error(k: int, h: float) -> float:
    # first-order perturbation by the stencil error -(h**2/24) d4 of -d2/2 for V = x**2/2:
    # dE = -(h**2/24) <(x**2 - (2k + 1))**2> = -(h**2/24) <x**4>
    # since <x**2> = k + 1/2; <x**4> = 3 (2k**2 + 2k + 1) / 4
    return -(h * h / 24.0) * 0.75 * (2 * k * k + 2 * k + 1)


@pytest.fixture(scope="module")
def iso_op():
    return build_hamiltonian(isotonic(0.5, 1.0), Grid(0.0, 12.0, 3000))


@pytest.fixture(scope="module")
def iso_eig(iso_op):
    return eigensolve(iso_op, 10)


# ---------------------------------------------------------------- grids and operators

def test_grid_basics():
    g = Grid(-1.0, 1.0, 101)
    assert g.h == pytest.approx(0.02)
    assert len(g.x) == 99 and g.x[0] == pytest.approx(-0.98)
    assert g.refine().n == 201 and g.refine().h == pytest.approx(0.01)
    with pytest.raises(ValueError):
        Grid(0.0, 1.0, 63)
    with pytest.raises(ValueError):
        Grid(1.0, 0.0, 100)


def test_operator_is_symmetric_tridiagonal(iso_op):
    n = len(iso_op.diagonal)
    assert iso_op.off.shape == (n - 1,)
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=n), rng.normal(size=n)
    assert np.dot(u, iso_op.symmetric_matvec(v)) == pytest.approx(np.dot(v, iso_op.symmetric_matvec(u)))
    f, g = rng.normal(size=n), rng.normal(size=n)
    assert iso_op.inner(f, iso_op.matvec(g)) == pytest.approx(iso_op.inner(g, iso_op.matvec(f)), rel=1e-9)


def test_matvec_is_second_order():
    pot = harmonic()
    errs = []
    for n in (501, 1001, 2001):
        g = Grid(-10.0, 10.0, n)
        x = g.x
        f = np.exp(-(x - 0.3) ** 2) * np.cos(x)
        exact = -0.5 * np.exp(-(x - 0.3) ** 2) * (
            (4 * (x - 0.3) ** 2 - 2) * np.cos(x) + 4 * (x - 0.3) * np.sin(x) - np.cos(x)) + 0.5 * x * x * f
        H = build_hamiltonian(pot, g)
        errs.append(np.max(np.abs(H.matvec(f) - exact)))
    assert 3.8 < errs[0] / errs[1] < 4.2 and 3.8 < errs[1] / errs[2] < 4.2


# ---------------------------------------------------------------- harmonic oscillator

def test_harmonic_ground_state_error_is_predicted():
    g = Grid(-10.0, 10.0, 2000)
    E0 = eigensolve(build_hamiltonian(harmonic(), g), 1).eigenvalues[0]
    assert E0 - 0.5 == pytest.approx(harmonic_error(0, g.h), rel=0.02)


def test_harmonic_ground_state_accuracy():
    E0 = eigensolve(build_hamiltonian(harmonic(), Grid(-10.0, 10.0, 4000)), 1).eigenvalues[0]
    assert abs(E0 - 0.5) < 1e-6


def test_harmonic_levels():
    g = Grid(-10.0, 10.0, 8001)
    vals = eigensolve(build_hamiltonian(harmonic(), g), 5).eigenvalues
    np.testing.assert_allclose(vals, [0.5, 1.5, 2.5, 3.5, 4.5], atol=1e-5)
    for k, v in enumerate(vals):
        assert v - (k + 0.5) == pytest.approx(harmonic_error(k, g.h), rel=0.05)


def test_hbar_and_frequency_scaling():
    pot = parse("w^2*x^2/2", {"w": 2.0}, hbar=0.5)
    vals = eigensolve(build_hamiltonian(pot, Grid(-6.0, 6.0, 4000)), 3).eigenvalues
    np.testing.assert_allclose(vals, 0.5 * 2.0 * (np.arange(3) + 0.5), atol=1e-4)


def test_eigensolve_invariants(iso_eig):
    assert np.all(np.diff(iso_eig.eigenvalues) > 0)
    assert np.all(iso_eig.residuals <= 1e-8)
    for i in range(4):
        for j in range(4):
            assert inner(iso_eig, iso_eig.vector(i), iso_eig.vector(j)) == pytest.approx(float(i == j), abs=1e-10)


def test_eigensolve_is_deterministic(iso_op):
    a, b = eigensolve(iso_op, 5), eigensolve(iso_op, 5)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


def test_eigensolve_errors(iso_op):
    with pytest.raises(ValueError):
        eigensolve(iso_op, 21)
    with pytest.raises(ValueError):
        eigensolve(iso_op, 0)
    with pytest.raises(ConvergenceError):
        eigensolve(iso_op, 3, tol=1e-30)


# ---------------------------------------------------------------- isotonic oscillator

def test_isotonic_levels(iso_eig):
    np.testing.assert_allclose(iso_eig.eigenvalues[:5], [2.5, 4.5, 6.5, 8.5, 10.5], atol=1e-3)


def test_isotonic_against_doubled_resolution(iso_op, iso_eig):
    fine = eigensolve(build_hamiltonian(isotonic(0.5, 1.0), iso_op.grid.refine()), 5)
    assert np.max(np.abs(fine.eigenvalues - iso_eig.eigenvalues[:5])) < 4e-3
    # the error falls as h**2 towards the closed form
    exact = np.array([2.5, 4.5, 6.5, 8.5, 10.5])
    ratio = np.abs(iso_eig.eigenvalues[:5] - exact) / np.abs(fine.eigenvalues - exact)
    assert np.all((ratio > 3.5) & (ratio < 4.5))


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
def test_formula_agreement(a, b):
    box = 12.0 * (2 * a) ** -0.25
    spec = eigensolve(build_hamiltonian(isotonic(a, b), Grid(0.0, box, 3000)), 5)
    form = isotonic_spectrum_formula(a, b)
    np.testing.assert_allclose(spec.eigenvalues, form.plus[:5], rtol=1e-3)


def test_formula_examples():
    f = isotonic_spectrum_formula(0.5, 1.0)
    assert f.nu == 1.5 and f.regime == EQUIDISTANT
    assert f.plus[:3] == pytest.approx((2.5, 4.5, 6.5))
    p = isotonic_spectrum_formula(0.5, 3 / 16)
    assert p.nu == pytest.approx(math.sqrt(2.5) / 2) and p.regime == PAIRED
    assert p.minus[:2] == pytest.approx((1 - p.nu, 3 - p.nu))
    assert p.plus[:2] == pytest.approx((1 + p.nu, 3 + p.nu))
    z = isotonic_spectrum_formula(0.5, 0.0)
    assert z.nu == 0.5 and z.regime == PLAIN_HARMONIC
    np.testing.assert_allclose(z.merged()[:6], np.arange(6) + 0.5)
    assert isotonic_spectrum_formula(0.5, 3 / 8).regime == EQUIDISTANT


def test_formula_invariants():
    for a, b, hb in ((0.5, 1.0, 1.0), (2.0, 0.1, 0.7), (1.3, -0.05, 1.0)):
        f = isotonic_spectrum_formula(a, b, hb)
        assert np.allclose(np.diff(f.plus), 2 * math.sqrt(2 * a) * hb)
        assert np.allclose(np.diff(f.minus), 2 * math.sqrt(2 * a) * hb)
        assert f.pair_gap == pytest.approx(2 * math.sqrt(2 * a) * f.nu * hb)
    with pytest.raises(DomainError):
        isotonic_spectrum_formula(0.5, -0.2)
    with pytest.raises(DomainError):
        isotonic_spectrum_formula(-1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.124, 10.0))
def test_nu_does_not_depend_on_hbar(c):
    nus = [isotonic_nu(c * hb * hb, hb) for hb in (0.5, 1.0, 2.0)]
    assert max(nus) - min(nus) <= 1e-12


@pytest.mark.parametrize("branch", [PLUS, MINUS])
def test_paired_regime_both_branches(branch):
    b = 3 / 16
    f = isotonic_spectrum_formula(0.5, b)
    spec = eigensolve(build_hamiltonian(isotonic(0.5, b), Grid(0.0, 12.0, 3000), branch=branch), 4)
    np.testing.assert_allclose(spec.eigenvalues, f.levels(branch)[:4], atol=1e-3)


def test_wall_eigenvectors_are_orthonormal():
    spec = eigensolve(build_hamiltonian(isotonic(0.5, 3 / 16), Grid(0.0, 12.0, 2000), branch=MINUS), 4)
    gram = np.array([[inner(spec, spec.vector(i), spec.vector(j)) for j in range(4)] for i in range(4)])
    np.testing.assert_allclose(gram, np.eye(4), atol=1e-10)


def test_grid_convergence(iso_op, iso_eig):
    fine = eigensolve(build_hamiltonian(isotonic(0.5, 1.0), iso_op.grid.refine()), 5).eigenvalues
    assert np.all(np.abs(fine - iso_eig.eigenvalues[:5]) <= 4 * 1e-3)


def test_hamiltonian_errors():
    q = q17_build(1.0).potential
    with pytest.raises(DomainError, match="crosses"):
        build_hamiltonian(q, Grid(-3.0, 3.0, 500))
    attractive = parse("x^2 - 0.1/x^2", domain=(0, math.inf))
    with pytest.raises(DomainError, match="attractive"):
        build_hamiltonian(attractive, Grid(0.0, 5.0, 500))
    with pytest.raises(DomainError, match="not square integrable"):
        build_hamiltonian(isotonic(0.5, 1.0), Grid(0.0, 12.0, 500), branch=MINUS)
    with pytest.raises(DomainError):
        build_hamiltonian(isotonic(0.5, 1.0), Grid(-1.0, 5.0, 500))


def test_smooth_q17_needs_no_exclusion():
    qs = q17_build(-1.0)
    H = build_hamiltonian(qs.potential, Grid(-14.0, 14.0, 2001))
    assert np.all(np.isfinite(H.diagonal))


def test_pole_strength():
    assert pole_strength(isotonic(0.5, 1.0), 0.0) == pytest.approx(1.0, abs=1e-10)
    assert pole_strength(q17_build(2.0, 0.5).potential, math.sqrt(2.0)) == pytest.approx(0.25, abs=1e-10)
    with pytest.raises(DomainError):
        pole_strength(parse("1/x"), 0.0)


# ---------------------------------------------------------------- ladders

def test_make_ladder_eigenvalues():
    assert abs(make_ladder(0.5, 1.0).lam) == pytest.approx(2.0)
    assert abs(make_ladder(2.0, 1.0).lam) == pytest.approx(4.0)
    assert abs(make_ladder(0.5, 0.5).lam) == pytest.approx(1.0)
    assert make_ladder(0.5, raising=False).lam == pytest.approx(-2.0)
    with pytest.raises(DomainError):
        make_ladder(0.0)


@pytest.fixture(scope="module")
def harm_op():
    return build_hamiltonian(harmonic(), Grid(-10.0, 10.0, 4000))


def test_commutator_harmonic(harm_op):
    up = commutator_residual(harm_op, harmonic_ladder(raising=True))
    down = commutator_residual(harm_op, harmonic_ladder(raising=False))
    assert up.lambda_fit == pytest.approx(1.0, abs=1e-3) and up.residual < 1e-3
    assert down.lambda_fit == pytest.approx(-1.0, abs=1e-3) and down.residual < 1e-3


def test_commutator_isotonic_two_resolutions(iso_op, iso_eig):
    A = make_ladder(0.5, 1.0, b=1.0)
    coarse = commutator_residual(iso_op, A, spectrum=iso_eig)
    fine = commutator_residual(build_hamiltonian(isotonic(0.5, 1.0), iso_op.grid.refine()), A)
    assert coarse.residual < 1e-2 and fine.residual < 1e-2
    assert coarse.lambda_fit == pytest.approx(2.0, abs=1e-3)
    assert abs(fine.lambda_fit - 2.0) < abs(coarse.lambda_fit - 2.0)


def test_commutator_identity(harm_op):
    fit = commutator_residual(harm_op, LadderOperator(0.0, 0.0, 1.0, 0.0, "identity"))
    assert abs(fit.lambda_fit) < 1e-6 and fit.residual < 1e-6


def test_commutator_degenerate(harm_op):
    with pytest.raises(DomainError, match="degenerate"):
        commutator_residual(harm_op, LadderOperator(0.0, 0.0, 0.0, 0.0))


def test_ladder_apply_examples(harm_op):
    spec = eigensolve(harm_op, 3)
    up = ladder_apply(harmonic_ladder(raising=True), spec.vector(0), harm_op)
    assert overlap(spec, up, spec.vector(1)) > 0.999
    down = ladder_apply(harmonic_ladder(raising=False), spec.vector(0), harm_op)
    assert norm(spec, down) / norm(spec, spec.vector(0)) < 1e-3


def test_isotonic_ladder_skips_a_level():
    b = 3 / 16
    f = isotonic_spectrum_formula(0.5, b)
    H = build_hamiltonian(isotonic(0.5, b), Grid(0.0, 12.0, 3000), branch=MINUS)
    spec = eigensolve(H, 4)
    up = ladder_apply(make_ladder(0.5, b=b), spec.vector(spec.nearest(1 - f.nu)), H)
    assert overlap(spec, up, spec.vector(spec.nearest(3 - f.nu))) > 0.99


@pytest.mark.parametrize("raising", [True, False])
def test_ladder_consistency(iso_op, iso_eig, raising):
    A = make_ladder(0.5, 1.0, b=1.0, raising=raising)
    fit = commutator_residual(iso_op, A, spectrum=iso_eig)
    images = [ladder_apply(A, iso_eig.vector(j), iso_op) for j in range(8)]
    biggest = max(norm(iso_eig, u) for u in images)
    checked = 0
    for j, u in enumerate(images):
        target = iso_eig.eigenvalues[j] + fit.lambda_fit
        if norm(iso_eig, u) < 1e-3 * biggest or target > iso_eig.eigenvalues[-1]:
            continue
        k = iso_eig.nearest(target)
        assert abs(iso_eig.eigenvalues[k] - target) < 1e-2
        assert overlap(iso_eig, u, iso_eig.vector(k)) > 0.99
        checked += 1
    assert checked >= 6


def test_structure_examples():
    harm_levels = np.arange(8) + 0.5
    s = analyze_ladder_structure(harm_levels, 1.0)
    assert s.seeds == (0.5,) and s.orphans == ()
    f = isotonic_spectrum_formula(0.5, 3 / 16)
    s = analyze_ladder_structure(f.merged()[:10], f.branch_gap)
    assert s.seeds == pytest.approx((1 - f.nu, 1 + f.nu))
    s = analyze_ladder_structure([0.0, 1.5, 2.0, 2.5, 3.0], 0.5)
    assert s.seeds == (1.5,) and s.orphans == (0.0,)
    assert s.chains[0] == (1.5, 2.0, 2.5, 3.0)


def test_structure_of_computed_spectrum(iso_eig):
    s = analyze_ladder_structure(iso_eig, 2.0, tol=1e-2)
    assert len(s.chains) == 1 and s.seeds[0] == pytest.approx(2.5, abs=1e-3)
