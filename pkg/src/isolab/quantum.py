"""Finite-difference 1D Schrodinger operators, the isotonic spectrum, and ladders.

Hamiltonians are H = -(hbar**2/2) d2/dx2 + V(x) on the interior nodes of a
uniform grid with Dirichlet walls, assembled as a symmetric tridiagonal
matrix and diagonalised with LAPACK's bisection + inverse iteration.

Grid functions live on the interior nodes; the wall values are zero. Inner
products use the trapezoidal rule, h * sum, except next to an inverse-square
wall, where the operator carries its own quadrature weights (see
``build_hamiltonian``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConvergenceError, DomainError
from .expr import Potential1D

PLUS, MINUS = "+", "-"
EQUIDISTANT = "equidistant"
PAIRED = "paired"
PLAIN_HARMONIC = "plain-harmonic"


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 64:
            raise ValueError(f"grid needs at least 64 nodes, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.n)

    @property
    def x(self) -> np.ndarray:
        """Interior nodes, where the unknowns live."""
        return self.nodes[1:-1]

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.x_min, self.x_max, factor * (self.n - 1) + 1)


def _pad(psi) -> np.ndarray:
    return np.concatenate(([0.0], np.asarray(psi, dtype=float), [0.0]))


def d1(psi, h: float) -> np.ndarray:
    """Centred first derivative of an interior grid function (zero walls)."""
    u = _pad(psi)
    return (u[2:] - u[:-2]) / (2.0 * h)


def d2(psi, h: float) -> np.ndarray:
    u = _pad(psi)
    return (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)


# --------------------------------------------------------------------------
# Inverse-square walls
# --------------------------------------------------------------------------

def pole_strength(p: Potential1D, pole: float, delta: Optional[float] = None, levels: int = 5) -> float:
    """Coefficient c of (x - pole)**-2 in V near ``pole``.

    The even part of d**2 V(pole + d) is extrapolated to d -> 0 with a
    Richardson table in d**2. The odd part must die out and the table must
    settle, otherwise the pole is not of second order.
    """
    if delta is None:
        delta = 1e-2 * max(1.0, abs(pole))
    ds = delta * 0.5 ** np.arange(levels)
    f_plus = np.array([d * d * float(p(pole + d)) for d in ds])
    f_minus = np.array([d * d * float(p(pole - d)) for d in ds])
    if not (np.all(np.isfinite(f_plus)) and np.all(np.isfinite(f_minus))):
        raise DomainError(f"potential is not finite next to x={pole:g}")
    even = 0.5 * (f_plus + f_minus)
    odd = 0.5 * (f_plus - f_minus)
    table = [even]
    for j in range(1, levels):
        prev = table[-1]
        q = 4.0 ** j
        table.append((q * prev[1:] - prev[:-1]) / (q - 1.0))
    c = float(table[-1][0])
    settle = abs(float(table[-2][-1]) - c)
    scale = max(abs(c), 1e-300)
    if abs(c) < 1e-12 or abs(odd[-1]) > 0.1 * scale or settle > 1e-6 * scale:
        raise DomainError(f"x={pole:g} is not a second-order pole (limit fit failed)")
    return c


def exponents_from_strength(c: float, hbar: float) -> tuple[float, float]:
    """Roots of (hbar**2/2) s (s - 1) = c, larger first."""
    disc = 0.25 + 2.0 * c / (hbar * hbar)
    if disc < 0:
        raise DomainError(f"pole strength {c:g} is below -hbar**2/8: complex exponents")
    r = math.sqrt(disc)
    return 0.5 + r, 0.5 - r


def _branch_exponent(c: float, hbar: float, branch: str) -> float:
    s_plus, s_minus = exponents_from_strength(c, hbar)
    if branch == PLUS:
        return s_plus
    if branch == MINUS:
        if s_minus <= -0.5:
            raise DomainError(
                f"the '-' branch (exponent {s_minus:.4g}) is not square integrable at the wall")
        return s_minus
    raise ValueError(f"branch must be '+' or '-', got {branch!r}")


def _power_integral(lo, hi, q: float):
    """int_lo^hi y**q dy for q > -1, lo >= 0."""
    return (np.power(hi, q + 1.0) - np.power(lo, q + 1.0)) / (q + 1.0)


# --------------------------------------------------------------------------
# Operators and spectra
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridOperator:
    """Symmetric tridiagonal S acting on v, with psi = scale * v.

    On a plain grid scale = 1/sqrt(h) and S is the usual three-point matrix.
    Next to an inverse-square wall ``exponent`` holds the Frobenius exponent
    used to factor psi = (x - x_wall)**exponent * u (see build_hamiltonian).
    """

    grid: Grid
    potential: np.ndarray
    diagonal: np.ndarray
    off: np.ndarray
    hbar: float
    scale: np.ndarray
    exponent: Optional[float] = None

    @classmethod
    def from_values(cls, grid: Grid, values, hbar: float = 1.0) -> "GridOperator":
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n - 2,):
            raise ValueError("potential values must live on the interior nodes")
        if not np.all(np.isfinite(values)):
            raise DomainError("potential is not finite on the grid")
        kin = hbar * hbar / (grid.h * grid.h)
        off = np.full(grid.n - 3, -0.5 * kin)
        scale = np.full(grid.n - 2, 1.0 / math.sqrt(grid.h))
        return cls(grid, values, values + kin, off, float(hbar), scale)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights for integrals of products of grid functions."""
        return 1.0 / self.scale ** 2

    def symmetric_matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = self.diagonal * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out

    def matvec(self, psi) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        return self.scale * self.symmetric_matvec(psi / self.scale)

    __matmul__ = matvec

    def inner(self, f, g) -> float:
        return float(np.dot(self.weights * np.asarray(f), g))

    def rayleigh(self, psi) -> float:
        return self.inner(psi, self.matvec(psi)) / self.inner(psi, psi)


def _weights(on) -> np.ndarray | float:
    if isinstance(on, Grid):
        return on.h
    if isinstance(on, GridOperator):
        return on.weights
    if isinstance(on, Spectrum):
        return on.weights
    return np.asarray(on, dtype=float)


def inner(on, f, g) -> float:
    """Discrete L2 product; ``on`` is a Grid, GridOperator, Spectrum or weights."""
    return float(np.sum(_weights(on) * np.asarray(f, dtype=float) * np.asarray(g, dtype=float)))


def norm(on, f) -> float:
    return math.sqrt(inner(on, f, f))


def overlap(on, f, g) -> float:
    """|<f, g>| / (|f| |g|)."""
    nf, ng = norm(on, f), norm(on, g)
    if nf == 0.0 or ng == 0.0:
        return 0.0
    return abs(inner(on, f, g)) / (nf * ng)


def _wall_operator(values_regular, g: Grid, hbar: float, s: float) -> GridOperator:
    """Hamiltonian next to a wall at g.x_min where V ~ c/(x - x_min)**2.

    With psi = y**s u (y = x - x_min) the equation becomes the weighted
    Sturm-Liouville problem

        -(hbar**2/2) (y**2s u')' + y**2s W u = E y**2s u,   W = V - c/y**2,

    whose solutions u are smooth with u'(0) = 0. It is discretised with
    linear elements whose weight integrals are exact, a lumped mass, and the
    first cell widened to [0, 3h/2] so the wall node drops out (zero flux).
    The symmetric form acts on v = sqrt(mass) u.
    """
    h = g.h
    y = h * np.arange(1, g.n - 1)
    q = 2.0 * s
    stiff = 0.5 * hbar * hbar * _power_integral(y, y + h, q) / (h * h)
    mass = _power_integral(y - 0.5 * h, y + 0.5 * h, q)
    mass[0] = _power_integral(0.0, 1.5 * h, q)
    diag_k = stiff.copy()
    diag_k[1:] += stiff[:-1]
    diagonal = diag_k / mass + values_regular
    off = -stiff[:-1] / np.sqrt(mass[:-1] * mass[1:])
    scale = np.power(y, s) / np.sqrt(mass)
    return GridOperator(g, values_regular, diagonal, off, float(hbar), scale, float(s))


def build_hamiltonian(p: Potential1D, g: Grid, hbar: Optional[float] = None,
                      branch: str = PLUS) -> GridOperator:
    """Three-point Hamiltonian of ``p`` on ``g`` with Dirichlet walls.

    If the left wall sits on a second-order pole c/(x - x_min)**2 the local
    behaviour psi ~ (x - x_min)**s is built into the discretisation; ``branch``
    selects the larger ('+', regular) or smaller ('-') Frobenius exponent.
    The '-' branch is only square integrable when -hbar**2/8 < c < 3 hbar**2/8.
    """
    hbar = p.hbar if hbar is None else float(hbar)
    lo, hi = p.domain
    x = g.x
    if x[0] <= lo or x[-1] >= hi:
        raise DomainError(f"grid [{g.x_min:g}, {g.x_max:g}] leaves the domain ({lo:g}, {hi:g})")
    wall = None
    for s in p.singularities:
        if abs(s - g.x_min) <= 1e-12 * max(1.0, abs(s)):
            wall = s
        elif abs(s - g.x_max) <= 1e-12 * max(1.0, abs(s)):
            raise DomainError("place an inverse-square wall at the left end of the grid")
        elif g.x_min < s < g.x_max:
            raise DomainError(f"grid crosses the pole at x={s:g}")
    if wall is None:
        return GridOperator.from_values(g, p(x), hbar)
    c = pole_strength(p, wall)
    if c < 0:
        raise DomainError(
            "attractive inverse-square wall: the boundary condition is not fixed, "
            "only the closed-form levels are available")
    s = _branch_exponent(c, hbar, branch)
    y = x - g.x_min
    regular = np.asarray(p(x), dtype=float) - c / (y * y)
    return _wall_operator(regular, g, hbar, s)


@dataclass(frozen=True, eq=False)
class Spectrum:
    grid: Grid
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray      # shape (k, n - 2), unit norm under ``weights``
    residuals: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)

    def vector(self, j: int) -> np.ndarray:
        return self.eigenvectors[j]

    def nearest(self, E: float) -> int:
        return int(np.argmin(np.abs(self.eigenvalues - E)))


def eigensolve(H: GridOperator, k: int, tol: float = 1e-8) -> Spectrum:
    """Lowest ``k`` eigenpairs; each residual |H psi - E psi| / |psi| is checked."""
    if not 1 <= k <= 20:
        raise ValueError("k must be between 1 and 20")
    vals, vecs = eigh_tridiagonal(H.diagonal, H.off, select="i", select_range=(0, k - 1))
    vecs = vecs.T.copy()
    res = np.empty(len(vals))
    for j in range(len(vals)):
        v = vecs[j] / np.linalg.norm(vecs[j])
        lead = np.flatnonzero(np.abs(v) > 1e-3 * np.max(np.abs(v)))[0]
        if v[lead] < 0:
            v = -v
        res[j] = np.linalg.norm(H.symmetric_matvec(v) - vals[j] * v)
        vecs[j] = H.scale * v
    if np.any(res > tol):
        raise ConvergenceError("eigenpair residual above tolerance", achieved=float(res.max()))
    return Spectrum(H.grid, vals, vecs, res, H.weights)


# --------------------------------------------------------------------------
# Isotonic oscillator V = a x**2 + b / x**2
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IsotonicSpectrum:
    a: float
    b: float
    hbar: float
    nu: float
    regime: str
    plus: tuple[float, ...]
    minus: tuple[float, ...]
    branch_gap: float          # between consecutive levels of one branch
    pair_gap: float            # between the two branches at equal k

    @property
    def omega(self) -> float:
        return math.sqrt(2.0 * self.a)

    def levels(self, branch: str = PLUS) -> tuple[float, ...]:
        return self.plus if branch == PLUS else self.minus

    def merged(self) -> np.ndarray:
        """Both branches sorted, for regimes where both are physical."""
        if self.regime == EQUIDISTANT:
            return np.array(self.plus)
        return np.sort(np.array(self.plus + self.minus))


def isotonic_nu(b: float, hbar: float) -> float:
    disc = 1.0 + 8.0 * b / (hbar * hbar)
    if not disc > 0:
        raise DomainError(f"b={b:g} <= -hbar**2/8 makes the exponent complex")
    return 0.5 * math.sqrt(disc)


def isotonic_spectrum_formula(a: float, b: float, hbar: float = 1.0, k_max: int = 10) -> IsotonicSpectrum:
    """Closed-form levels sqrt(2a) (2k + 1 +- nu) hbar for k = 0..k_max."""
    if not a > 0:
        raise DomainError("a must be positive")
    nu = isotonic_nu(b, hbar)
    w = math.sqrt(2.0 * a)
    if b == 0.0:
        regime = PLAIN_HARMONIC
    elif b >= 3.0 * hbar * hbar / 8.0:
        regime = EQUIDISTANT
    else:
        regime = PAIRED
    ks = range(k_max + 1)
    plus = tuple(w * (2 * k + 1 + nu) * hbar for k in ks)
    minus = tuple(w * (2 * k + 1 - nu) * hbar for k in ks)
    return IsotonicSpectrum(a, b, hbar, nu, regime, plus, minus, 2.0 * w * hbar, 2.0 * w * nu * hbar)


# --------------------------------------------------------------------------
# Ladder operators  A = a2 d2/dx2 + a1(x) d/dx + a0(x)
# --------------------------------------------------------------------------

Coefficient = Union[float, Callable[[np.ndarray], np.ndarray]]


def _coeff(c: Coefficient, x: np.ndarray) -> np.ndarray:
    if callable(c):
        return np.asarray(c(x), dtype=float) * np.ones_like(x)
    return np.full_like(x, float(c))


@dataclass(frozen=True, eq=False)
class LadderOperator:
    a2: Coefficient
    a1: Coefficient
    a0: Coefficient
    lam: float
    label: str = ""

    def coefficients(self, grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = grid.x
        return _coeff(self.a2, x), _coeff(self.a1, x), _coeff(self.a0, x)


def ladder_apply(A: LadderOperator, psi, on) -> np.ndarray:
    """Centred-difference action of ``A``; no normalisation.

    ``on`` is the Grid, or the GridOperator whose representation ``psi`` uses.
    Next to an inverse-square wall A acts on the smooth factor u of
    psi = y**s u through its conjugated coefficients, with u'(0) = 0 imposed
    by a one-sided quadratic at the wall.
    """
    grid = on.grid if isinstance(on, GridOperator) else on
    s = on.exponent if isinstance(on, GridOperator) else None
    c2, c1, c0 = A.coefficients(grid)
    psi = np.asarray(psi, dtype=float)
    h = grid.h
    if s is None:
        out = c0 * psi
        if np.any(c1 != 0):
            out = out + c1 * d1(psi, h)
        if np.any(c2 != 0):
            out = out + c2 * d2(psi, h)
        return out
    y = grid.x - grid.x_min
    ys = np.power(y, s)
    u = psi / ys
    u_wall = (4.0 * u[0] - u[1]) / 3.0
    full = np.concatenate(([u_wall], u, [0.0]))
    du = (full[2:] - full[:-2]) / (2.0 * h)
    ddu = (full[2:] - 2.0 * full[1:-1] + full[:-2]) / (h * h)
    b1 = c1 + 2.0 * s * c2 / y
    b0 = c0 + s * c1 / y + s * (s - 1.0) * c2 / (y * y)
    return ys * (c2 * ddu + b1 * du + b0 * u)


def harmonic_ladder(omega: float = 1.0, hbar: float = 1.0, raising: bool = True) -> LadderOperator:
    """First-order (x sqrt(omega/hbar) -+ sqrt(hbar/omega) d/dx) / sqrt(2)."""
    k = math.sqrt(omega / hbar)
    sign = -1.0 if raising else 1.0
    return LadderOperator(0.0, sign / (k * math.sqrt(2.0)), lambda x: k * x / math.sqrt(2.0),
                          (1.0 if raising else -1.0) * hbar * omega,
                          "harmonic raising" if raising else "harmonic lowering")


def make_ladder(a: float, hbar: float = 1.0, b: float = 0.0, raising: bool = True) -> LadderOperator:
    """Second-order ladder of the isotonic oscillator a x**2 + b / x**2.

    In the scaled variable y = k x, k = sqrt(w / hbar), w = sqrt(2a), it reads
    (y -+ d/dy)**2 / 2 - (b / hbar**2) / y**2: the square of the oscillator
    ladder plus the term that cancels the inverse-square commutator. Its
    eigenvalue is +-2 w hbar.
    """
    if not a > 0:
        raise DomainError("a must be positive")
    w = math.sqrt(2.0 * a)
    k2 = w / hbar
    sign = -1.0 if raising else 1.0
    g = b / (hbar * hbar)

    def a0(x):
        x = np.asarray(x, dtype=float)
        out = 0.5 * k2 * x * x + 0.5 * sign
        if g != 0.0:
            out = out - g / (k2 * x * x)
        return out

    return LadderOperator(0.5 / k2, lambda x: sign * np.asarray(x, dtype=float), a0,
                          (1.0 if raising else -1.0) * 2.0 * w * hbar,
                          "isotonic raising" if raising else "isotonic lowering")


@dataclass(frozen=True)
class CommutatorFit:
    lambda_fit: float
    residual: float
    per_probe: tuple[float, ...]


def commutator_residual(H: GridOperator, A: LadderOperator, probes: int = 8,
                        margin: float = 0.1, spectrum: Optional[Spectrum] = None) -> CommutatorFit:
    """Fit [H, A] psi = lambda A psi over the lowest eigenvectors of ``H``.

    Both sides are compared on the interior with ``margin`` of the box cut at
    each end. Probes whose image under A is negligible carry no information
    about lambda and are skipped (below 1e-3 of the largest image).
    """
    g = H.grid
    eig = spectrum if spectrum is not None else eigensolve(H, probes)
    n = len(g.x)
    cut = int(math.ceil(margin * n))
    keep = slice(cut, n - cut)
    images, comms = [], []
    for j in range(min(probes, len(eig))):
        psi = eig.vector(j)
        u = ladder_apply(A, psi, H)
        c = H.matvec(u) - ladder_apply(A, H.matvec(psi), H)
        images.append(u[keep])
        comms.append(c[keep])
    sizes = np.array([np.linalg.norm(u) for u in images])
    if sizes.max() == 0.0:
        raise DomainError("degenerate fit: A annihilates every probe")
    use = [j for j in range(len(images)) if sizes[j] > 1e-3 * sizes.max()]
    num = sum(float(np.dot(comms[j], images[j])) for j in use)
    den = sum(float(np.dot(images[j], images[j])) for j in use)
    lam = num / den
    per = tuple(float(np.linalg.norm(comms[j] - lam * images[j]) / sizes[j]) for j in use)
    return CommutatorFit(lam, max(per), per)


@dataclass(frozen=True)
class LadderStructure:
    chains: tuple[tuple[float, ...], ...]
    seeds: tuple[float, ...]
    orphans: tuple[float, ...]
    spacing: float


def analyze_ladder_structure(levels, lam: float, tol: float = 1e-3) -> LadderStructure:
    """Greedy split of ``levels`` into arithmetic chains of step |lam|.

    Each unassigned level, lowest first, seeds a chain that is extended while
    a free level sits within ``tol`` of the next rung. Chains of length one
    are reported as orphans.
    """
    if isinstance(levels, Spectrum):
        levels = levels.eigenvalues
    vals = np.sort(np.asarray(levels, dtype=float))
    if len(vals) < 3:
        raise ValueError("need at least three levels")
    step = abs(lam)
    free = np.ones(len(vals), dtype=bool)
    chains = []
    for i in range(len(vals)):
        if not free[i]:
            continue
        free[i] = False
        chain = [float(vals[i])]
        while step > 0:
            target = chain[-1] + step
            cand = np.flatnonzero(free & (np.abs(vals - target) <= tol))
            if cand.size == 0:
                break
            j = int(cand[np.argmin(np.abs(vals[cand] - target))])
            free[j] = False
            chain.append(float(vals[j]))
        chains.append(tuple(chain))
    long = tuple(c for c in chains if len(c) > 1)
    orphans = tuple(c[0] for c in chains if len(c) == 1)
    return LadderStructure(long, tuple(c[0] for c in long), orphans, step)
