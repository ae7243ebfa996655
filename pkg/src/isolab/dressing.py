"""Factorised Hamiltonian pairs, dressing chains, and the rational Q.17 potential.

With a = (hbar d/dx + W) / sqrt(2) and a^+ = (-hbar d/dx + W) / sqrt(2),

    a^+ a = p**2/2 + (W**2 - hbar W') / 2      (the "minus" partner)
    a a^+ = p**2/2 + (W**2 + hbar W') / 2      (the "plus" partner)

A dressing chain is a sequence W_1..W_N with a_n a_n^+ = a_{n+1}^+ a_{n+1} + C_n.
Operators act on grid functions by centred differences along axis 0, so the
same code handles 1D probes and 2D probes (x along axis 0, y along axis 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.special import erf

from .errors import DomainError
from .expr import Potential1D, parse
from .quantum import Grid, GridOperator, exponents_from_strength, pole_strength

Action = Callable[[np.ndarray], np.ndarray]

SQUARE_INTEGRABLE = "square-integrable"
DIVERGENT = "divergent"
UNDECIDED = "indeterminate"


# --------------------------------------------------------------------------
# Finite differences along axis 0 (zero walls)
# --------------------------------------------------------------------------

def _pad0(psi: np.ndarray) -> np.ndarray:
    width = [(1, 1)] + [(0, 0)] * (psi.ndim - 1)
    return np.pad(psi, width)


def _dx(psi: np.ndarray, h: float) -> np.ndarray:
    u = _pad0(np.asarray(psi, dtype=float))
    return (u[2:] - u[:-2]) / (2.0 * h)


def _dxx(psi: np.ndarray, h: float) -> np.ndarray:
    u = _pad0(np.asarray(psi, dtype=float))
    return (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)


def _along0(values: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return values.reshape(values.shape + (1,) * (psi.ndim - 1))


# --------------------------------------------------------------------------
# Superpotentials and factorised pairs
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Superpotential:
    w: Callable[[np.ndarray], np.ndarray]
    dw: Callable[[np.ndarray], np.ndarray]
    hbar: float = 1.0
    poles: tuple[float, ...] = ()
    source: str = ""

    @classmethod
    def from_potential(cls, expr: Potential1D, hbar: Optional[float] = None) -> "Superpotential":
        return cls(expr.__call__, expr.d, expr.hbar if hbar is None else float(hbar),
                   tuple(expr.singularities), expr.source)

    @classmethod
    def parse(cls, source: str, params=None, hbar: float = 1.0) -> "Superpotential":
        return cls.from_potential(parse(source, params, hbar=hbar), hbar)

    @classmethod
    def from_ground_state(cls, psi, grid: Grid, hbar: float = 1.0, floor: float = 1e-8) -> "Superpotential":
        """W = -hbar psi'/psi from a nodeless grid function, splined.

        Only nodes where |psi| exceeds ``floor`` times its maximum are used;
        outside that range the spline extrapolates and should not be trusted.
        """
        psi = np.asarray(psi, dtype=float)
        if psi[np.argmax(np.abs(psi))] < 0:
            psi = -psi
        ok = psi > floor * psi.max()
        dpsi = _dx(psi, grid.h)
        x = grid.x[ok]
        spline = CubicSpline(x, -hbar * dpsi[ok] / psi[ok])
        deriv = spline.derivative()
        return cls(lambda t: spline(t), lambda t: deriv(t), float(hbar), (),
                   f"ground-state superpotential on [{x[0]:.4g}, {x[-1]:.4g}]")

    def __call__(self, x):
        return np.asarray(self.w(np.asarray(x, dtype=float)), dtype=float)

    def derivative(self, x):
        return np.asarray(self.dw(np.asarray(x, dtype=float)), dtype=float)

    def minus_potential(self, x):
        return 0.5 * (self(x) ** 2 - self.hbar * self.derivative(x))

    def plus_potential(self, x):
        return 0.5 * (self(x) ** 2 + self.hbar * self.derivative(x))


def _check_grid(W: Superpotential, g: Grid) -> None:
    for s in W.poles:
        if g.x_min <= s <= g.x_max:
            raise DomainError(f"the superpotential has a pole at x={s:g} on the grid")


@dataclass(frozen=True, eq=False)
class Factors:
    """Grid actions of a, a^+ and the two partners for one superpotential."""

    W: Superpotential
    grid: Grid

    def __post_init__(self):
        _check_grid(self.W, self.grid)

    @property
    def _w(self) -> np.ndarray:
        return self.W(self.grid.x)

    def a(self, psi):
        psi = np.asarray(psi, dtype=float)
        return (self.W.hbar * _dx(psi, self.grid.h) + _along0(self._w, psi) * psi) / math.sqrt(2.0)

    def adag(self, psi):
        psi = np.asarray(psi, dtype=float)
        return (-self.W.hbar * _dx(psi, self.grid.h) + _along0(self._w, psi) * psi) / math.sqrt(2.0)

    def _schrodinger(self, values, psi):
        psi = np.asarray(psi, dtype=float)
        return -0.5 * self.W.hbar ** 2 * _dxx(psi, self.grid.h) + _along0(values, psi) * psi

    def h_minus(self, psi):
        return self._schrodinger(self.W.minus_potential(self.grid.x), psi)

    def h_plus(self, psi):
        return self._schrodinger(self.W.plus_potential(self.grid.x), psi)


def _fit_shift(values: np.ndarray, reference) -> tuple[float, float]:
    """Least-squares constant c with values ~ reference + c, and the misfit."""
    diff = values - reference
    c = float(np.mean(diff))
    return c, float(np.max(np.abs(diff - c)))


@dataclass(frozen=True, eq=False)
class DressingPair:
    W: Superpotential
    grid: Grid
    H_minus: GridOperator
    H_plus: GridOperator
    c_minus: Optional[float] = None
    c_plus: Optional[float] = None
    misfit: dict = field(default_factory=dict)

    @property
    def factors(self) -> Factors:
        return Factors(self.W, self.grid)


def build_pair(W: Superpotential, g: Grid, ref_minus=None, ref_plus=None) -> DressingPair:
    """Assemble H_- = a^+ a and H_+ = a a^+ on ``g``.

    When reference potentials (callables of x) are given, the constant
    shifts c with V_pair = V_ref + c are fitted by least squares; the
    maximal deviation from a pure shift is kept in ``misfit``.
    """
    _check_grid(W, g)
    x = g.x
    vm, vp = W.minus_potential(x), W.plus_potential(x)
    c_minus = c_plus = None
    misfit = {}
    if ref_minus is not None:
        c_minus, misfit["minus"] = _fit_shift(vm, np.asarray(ref_minus(x), dtype=float))
    if ref_plus is not None:
        c_plus, misfit["plus"] = _fit_shift(vp, np.asarray(ref_plus(x), dtype=float))
    return DressingPair(W, g, GridOperator.from_values(g, vm, W.hbar),
                        GridOperator.from_values(g, vp, W.hbar), c_minus, c_plus, misfit)


def _bump(x, centre: float, radius: float) -> np.ndarray:
    r = (np.asarray(x, dtype=float) - centre) / radius
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def probe_functions(g: Grid, count: int = 8, margin: float = 0.15) -> list[np.ndarray]:
    """Smooth compactly supported bumps spread over the middle of the grid."""
    if count < 1:
        raise ValueError("need at least one probe")
    lo = g.x_min + margin * (g.x_max - g.x_min)
    hi = g.x_max - margin * (g.x_max - g.x_min)
    radius = 0.5 * (hi - lo) / max(1, count - 1) + 0.1 * (hi - lo)
    radius = min(radius, 0.5 * (hi - lo))
    centres = np.linspace(lo + radius, hi - radius, count) if count > 1 else [0.5 * (lo + hi)]
    return [_bump(g.x, c, radius) for c in centres]


def _rel(diff, ref) -> float:
    d, r = np.linalg.norm(diff), np.linalg.norm(ref)
    return float(d / r) if r > 0 else float(d)


def factorization_residual(dp: DressingPair, probes: int = 8) -> float:
    """max over probes of |a^+ a phi - H_- phi| / |H_- phi| (and the plus side)."""
    if probes < 4:
        raise ValueError("use at least four probes")
    f = dp.factors
    worst = 0.0
    for phi in probe_functions(dp.grid, probes):
        hm, hp = dp.H_minus.matvec(phi), dp.H_plus.matvec(phi)
        worst = max(worst, _rel(f.adag(f.a(phi)) - hm, hm), _rel(f.a(f.adag(phi)) - hp, hp))
    return worst


# --------------------------------------------------------------------------
# Dressing chains
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Chain:
    links: tuple[Superpotential, ...]
    constants: tuple[float, ...]
    periodic: bool = False

    def __post_init__(self):
        need = len(self.links) if self.periodic else len(self.links) - 1
        if len(self.constants) < need:
            raise ValueError(f"a chain of {len(self.links)} links needs {need} constants")


@dataclass(frozen=True)
class ChainReport:
    link_residuals: tuple[float, ...]
    periodicity_defect: Optional[float]
    potential_defects: tuple[float, ...]

    @property
    def worst(self) -> float:
        vals = list(self.link_residuals)
        if self.periodicity_defect is not None:
            vals.append(self.periodicity_defect)
        return max(vals)


def chain_verify(c: Chain, g: Grid, probes: int = 8) -> ChainReport:
    """Check a_n a_n^+ = a_{n+1}^+ a_{n+1} + C_n on probes for every link.

    Residuals are |(a_n a_n^+ - a_{n+1}^+ a_{n+1} - C_n) phi| / |phi| in energy
    units, so a wrong constant shows up directly. For a periodic chain the
    last relation wraps to the first link and is reported as the periodicity
    defect.
    """
    factors = [Factors(W, g) for W in c.links]
    n = len(factors)
    pairs = [(k, k + 1) for k in range(n - 1)]
    if c.periodic:
        pairs.append((n - 1, 0))
    phis = probe_functions(g, probes)
    res, pot = [], []
    x = g.x
    for k, j in pairs:
        fk, fj, ck = factors[k], factors[j], c.constants[k]
        worst = 0.0
        for phi in phis:
            diff = fk.a(fk.adag(phi)) - fj.adag(fj.a(phi)) - ck * phi
            worst = max(worst, float(np.linalg.norm(diff) / np.linalg.norm(phi)))
        res.append(worst)
        inner = slice(len(x) // 10, len(x) - len(x) // 10)
        gap = c.links[k].plus_potential(x) - c.links[j].minus_potential(x) - ck
        pot.append(float(np.max(np.abs(gap[inner]))))
    defect = res.pop() if c.periodic else None
    return ChainReport(tuple(res), defect, tuple(pot))


@dataclass(frozen=True, eq=False)
class Intertwined:
    action: Action
    input_residual: float
    output_residual: float


def _commutator_residual(h: Action, q: Action, probes) -> float:
    worst = 0.0
    for phi in probes:
        hq, qh = h(q(phi)), q(h(phi))
        scale = np.linalg.norm(hq) + np.linalg.norm(qh)
        worst = max(worst, float(np.linalg.norm(hq - qh) / scale) if scale > 0 else 0.0)
    return worst


def intertwine_integral(Q: Action, H_n: Action, a_next: Superpotential, g: Grid,
                        h_prime: Optional[Action] = None, probes=None,
                        tol: float = 1e-4) -> Intertwined:
    """Map an integral Q of H_n (+ H') to a_{n+1} Q a_{n+1}^+, one of H_{n+1} (+ H').

    ``H_n`` acts on grid functions; ``h_prime`` optionally acts on a second
    axis (probes then have shape (n-2, m)). The input commutator is checked
    first; the residuals are relative to |HQ phi| + |QH phi|.
    """
    fa = Factors(a_next, g)
    if probes is None:
        probes = probe_functions(g, 8)

    def with_prime(op):
        if h_prime is None:
            return op
        return lambda psi: op(psi) + h_prime(psi)

    before = _commutator_residual(with_prime(H_n), Q, probes)
    if before > tol:
        raise DomainError(f"Q does not commute with the Hamiltonian (residual {before:.3e} > {tol:g})")

    def action(psi):
        return fa.a(Q(fa.adag(psi)))

    after = _commutator_residual(with_prime(fa.h_plus), action, probes)
    return Intertwined(action, before, after)


# --------------------------------------------------------------------------
# The rational Q.17 potential
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ZeroMode:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    poles: tuple[float, ...] = ()

    def __call__(self, x):
        with np.errstate(all="ignore"):
            return self.f(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class Q17:
    alpha_sq: float
    hbar: float
    potential: Potential1D        # the plus partner up to the shift c_plus
    W: Superpotential
    zero_modes: tuple[ZeroMode, ...]
    oscillator: Potential1D       # hbar**2 x**2 / (8 alpha**4), the minus partner up to c_minus
    c_minus: float                # closed-form shifts of the two partners
    c_plus: float

    @property
    def omega(self) -> float:
        return self.hbar / (2.0 * abs(self.alpha_sq))

    @property
    def smooth(self) -> bool:
        return self.alpha_sq < 0


def q17_build(alpha_sq: float, hbar: float = 1.0) -> Q17:
    """The rational potential with W = hbar (x / (2A) - 2x / (x**2 - A)), A = alpha**2.

    For A > 0 the potential has second-order poles at +-sqrt(A); for A < 0
    (alpha imaginary) the same real expression is smooth on the whole line.
    The partners are H_- = hbar**2 x**2/(8 A**2) - 5 hbar**2/(4A) and
    H_+ = V - 3 hbar**2/(4A).
    """
    A = float(alpha_sq)
    if A == 0.0:
        raise DomainError("alpha_sq must be nonzero")
    hb = float(hbar)
    prm = {"h": hb, "A": A}
    if A > 0:
        prm["al"] = math.sqrt(A)
        src = "h^2*x^2/(8*A^2) + h^2/(x-al)^2 + h^2/(x+al)^2"
    else:
        src = "h^2*x^2/(8*A^2) + 2*h^2*(x^2+A)/(x^2-A)^2"
    pot = parse(src, prm, hbar=hb)
    osc = parse("h^2*x^2/(8*A^2)", {"h": hb, "A": A}, hbar=hb)
    W = Superpotential.parse("h*(x/(2*A) - 2*x/(x^2-A))", {"h": hb, "A": A}, hbar=hb)
    if A > 0:
        al = math.sqrt(A)
        poles = (-al, al)
        kernel = ZeroMode("exp(x^2/(4 alpha^2))/(x^2-alpha^2)",
                          lambda x: np.exp(x * x / (4.0 * A)) / (x * x - A), poles)
        c = math.sqrt(2.0 * math.pi) * al ** 3
        second = ZeroMode(
            "erf mode",
            lambda x: (x * (x * x + A) * np.exp(-x * x / (4.0 * A))
                       - c * np.exp(x * x / (4.0 * A)) * erf(x / (math.sqrt(2.0) * al))) / (x * x - A),
            poles)
        modes = (kernel, second)
    else:
        modes = (ZeroMode("exp(-x^2/(4 beta^2))/(x^2+beta^2)",
                          lambda x: np.exp(x * x / (4.0 * A)) / (x * x - A)),)
    return Q17(A, hb, pot, W, modes, osc, -5.0 * hb * hb / (4.0 * A), -3.0 * hb * hb / (4.0 * A))


# --------------------------------------------------------------------------
# Local analysis at poles and normalisability
# --------------------------------------------------------------------------

def indicial_exponents(p: Potential1D, pole: float, hbar: Optional[float] = None) -> tuple[float, float]:
    """Frobenius exponents s of (x - pole)**s at a second-order pole, larger first."""
    hb = p.hbar if hbar is None else float(hbar)
    return exponents_from_strength(pole_strength(p, pole), hb)


@dataclass(frozen=True)
class NormReport:
    verdict: str
    at_infinity: str
    at_poles: Optional[str]
    table: tuple[tuple[float, float, float], ...]      # (L, eps, integral) per level
    infinity_integrals: tuple[float, ...]
    pole_integrals: tuple[float, ...]


def _classify(values: Sequence[float]) -> str:
    """Divergent if the sequence keeps growing without its increments shrinking.

    An integral that diverges like 1/eps doubles its increment when eps is
    halved; a convergent one has shrinking increments. Convergence needs the
    last increment below 1e-6 of the value.
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)) or v[-1] == np.inf:
        return DIVERGENT
    d = np.diff(v)
    if abs(d[-1]) < 1e-6 * abs(v[-1]):
        return SQUARE_INTEGRABLE
    if np.all(d > 0) and (np.all(d[1:] >= d[:-1]) or np.all(v[1:] >= 2.0 * v[:-1])):
        return DIVERGENT
    return UNDECIDED


def _integral(f, pieces) -> float:
    total = 0.0
    for a, b in pieces:
        val, _ = integrate.quad(lambda t: float(f(np.array([t]))[0]) ** 2, a, b, limit=400,
                                epsabs=0.0, epsrel=1e-12)
        total += val
    return total


def _pieces(L: float, poles: Sequence[float], eps: float) -> list[tuple[float, float]]:
    cuts = sorted(p for p in poles if -L < p < L)
    out, start = [], -L
    for p in cuts:
        out.append((start, p - eps))
        start = p + eps
    out.append((start, L))
    return [(a, b) for a, b in out if b > a]


def normalizability_check(psi, windows: Sequence[float] = (4.0, 6.0, 8.0),
                          poles: Optional[Sequence[float]] = None,
                          eps: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
                          scale: Optional[float] = None) -> NormReport:
    """Decide whether |psi|**2 is integrable from its growth under refinement.

    Level j integrates over [-L_j, L_j] with holes of half-width eps_j * scale
    around the poles. The behaviour at infinity (L refined, smallest hole)
    and at the poles (holes refined, smallest window) are classified
    separately; the function is square integrable only if both converge.
    """
    if len(windows) != len(eps):
        raise ValueError("windows and eps need the same number of levels")
    if poles is None:
        poles = getattr(psi, "poles", ())
    poles = tuple(poles)
    if scale is None:
        scale = max([1.0] + [abs(p) for p in poles])
    holes = [e * scale for e in eps]
    table = []
    try:
        for L, e in zip(windows, holes):
            table.append((float(L), float(e), _integral(psi, _pieces(L, poles, e))))
        inf_vals = [_integral(psi, _pieces(L, poles, holes[0])) for L in windows]
        pole_vals = []
        if poles:
            near = [(p - 0.5, p + 0.5) for p in poles]
            for e in holes:
                pole_vals.append(sum(_integral(psi, [(a, p - e), (p + e, b)])
                                     for p, (a, b) in zip(poles, near)))
    except (ValueError, FloatingPointError, ZeroDivisionError) as exc:
        raise DomainError(f"could not evaluate the wave function: {exc}") from exc
    at_inf = _classify(inf_vals)
    at_poles = _classify(pole_vals) if poles else None
    verdicts = [at_inf] + ([at_poles] if poles else [])
    if DIVERGENT in verdicts:
        verdict = DIVERGENT
    elif all(v == SQUARE_INTEGRABLE for v in verdicts):
        verdict = SQUARE_INTEGRABLE
    else:
        verdict = UNDECIDED
    return NormReport(verdict, at_inf, at_poles, tuple(table), tuple(inf_vals), tuple(pole_vals))
