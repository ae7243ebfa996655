"""Classical 1D motion: wells, turning points, periods, and symplectic flows.

Mass is fixed to 1, so H = p**2/2 + V(x) on every axis. A bounded orbit is
described by its two turning points; the period integral

    T(E) = 2 * int_{x_l}^{x_r} dx / sqrt(2 (E - V(x)))

is evaluated after the substitution x = c + h cos(phi), which turns the
inverse-square-root endpoint singularities into a smooth periodic integrand
(midpoint rule in phi, i.e. Gauss-Chebyshev nodes in x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, DomainError
from .expr import Potential1D

ISOCHRONOUS = "isochronous"
NOT_ISOCHRONOUS = "not-isochronous"
INDETERMINATE = "indeterminate"

_FAR = 1.0e3


class PhaseState(NamedTuple):
    x: float
    p: float


def energy(p: Potential1D, s: PhaseState) -> float:
    return 0.5 * s.p * s.p + p.scalar(s.x)


# --------------------------------------------------------------------------
# Wells and turning points
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Well:
    x_min: float
    v_min: float
    left: float
    right: float
    escape_energy: float
    left_barrier: float = -math.inf     # where each side reaches its escape level
    right_barrier: float = math.inf


def _segment(p: Potential1D, x: float) -> tuple[float, float]:
    lo, hi = p.domain
    cuts = [lo] + [s for s in p.interior_poles] + [hi]
    for a, b in zip(cuts[:-1], cuts[1:]):
        if a < x < b:
            return a, b
    raise DomainError(f"anchor {x} is not inside the domain or sits on a pole")


def _segment_samples(a: float, b: float, n: int = 4001) -> np.ndarray:
    lo = a if math.isfinite(a) else -50.0
    hi = b if math.isfinite(b) else 50.0
    if math.isfinite(a) and not math.isfinite(b):
        hi = max(a + 50.0, 50.0)
    if math.isfinite(b) and not math.isfinite(a):
        lo = min(b - 50.0, -50.0)
    xs = np.linspace(lo, hi, n)
    return xs[(xs > a) & (xs < b)]


def _side_escape(p: Potential1D, x_min: float, v_min: float, bound: float) -> tuple[float, float]:
    """Escape level on one side of the well and the barrier top that sets it.

    The barrier position is infinite when the level comes from the domain
    edge, a pole or the far field rather than from a local maximum.
    """
    direction = 1.0 if bound > x_min else -1.0
    if math.isfinite(bound):
        span = abs(bound - x_min)
        offs = np.concatenate([np.linspace(0.0, span, 4001)[1:-1],
                               span * (1.0 - np.logspace(-3, -12, 40))])
    else:
        offs = np.concatenate([np.linspace(0.0, 50.0, 4001)[1:], np.geomspace(50.0, _FAR, 200)[1:]])
    offs = np.unique(offs)
    vals = p(x_min + direction * offs)
    vals = np.where(np.isfinite(vals), vals, np.inf)
    # first strict local maximum going outward
    with np.errstate(invalid="ignore"):
        drops = np.flatnonzero(np.diff(vals) < 0)
    if drops.size:
        k = drops[0]
        if vals[k] > v_min:
            return float(vals[k]), float(x_min + direction * offs[k])
    if math.isfinite(bound):
        return (math.inf if bound in p.singularities else float(vals[-1])), direction * math.inf
    # a potential that levels off far away escapes at its plateau
    half = int(np.searchsorted(offs, 0.5 * _FAR))
    if math.isfinite(vals[-1]) and vals[-1] - vals[half] <= 1e-3 * (vals[-1] - v_min):
        return float(vals[-1]), direction * math.inf
    return math.inf, direction * math.inf


def locate_well(p: Potential1D, anchor: Optional[float] = None) -> Well:
    """The well holding ``anchor`` (default: the sampled global minimum)."""
    if anchor is None:
        best = None
        lo, hi = p.domain
        cuts = [lo] + list(p.interior_poles) + [hi]
        for a, b in zip(cuts[:-1], cuts[1:]):
            xs = _segment_samples(a, b)
            if xs.size == 0:
                continue
            vs = p(xs)
            vs = np.where(np.isfinite(vs), vs, np.inf)
            k = int(np.argmin(vs))
            if best is None or vs[k] < best[1]:
                best = (float(xs[k]), float(vs[k]), xs)
        if best is None:
            raise DomainError("could not sample the potential")
        anchor = best[0]
    a, b = _segment(p, anchor)
    f = p.scalar
    # local descent from the anchor
    step = 1e-2 * max(1.0, abs(anchor))
    x0 = anchor
    lo_b, hi_b = x0 - step, x0 + step
    for _ in range(200):
        lo_b = max(lo_b, a + 1e-12 * max(1.0, abs(a))) if math.isfinite(a) else lo_b
        hi_b = min(hi_b, b - 1e-12 * max(1.0, abs(b))) if math.isfinite(b) else hi_b
        res = optimize.minimize_scalar(f, bounds=(lo_b, hi_b), method="bounded",
                                       options={"xatol": 1e-12})
        x0 = float(res.x)
        if x0 - lo_b > 1e-3 * step and hi_b - x0 > 1e-3 * step:
            break
        step *= 2.0
        lo_b, hi_b = x0 - step, x0 + step
    else:
        raise DomainError("potential has no local minimum near the anchor")
    # polish with Newton on V'
    df = p.scalar_derivative
    try:
        xn = optimize.newton(df, x0, tol=1e-15, maxiter=20)
        if a < xn < b and f(xn) <= f(x0) + 1e-14 * max(1.0, abs(f(x0))) and abs(xn - x0) < step:
            x0 = float(xn)
    except (RuntimeError, ArithmeticError, ValueError):
        pass
    v_min = f(x0)
    (e_left, x_left), (e_right, x_right) = _side_escape(p, x0, v_min, a), _side_escape(p, x0, v_min, b)
    return Well(x_min=x0, v_min=v_min, left=a, right=b, escape_energy=min(e_left, e_right),
                left_barrier=x_left, right_barrier=x_right)


def _outward_offsets(x0: float, bound: float, direction: int):
    d = 1e-3 * max(1.0, abs(x0))
    if not math.isfinite(bound):
        while d < 1e3 * _FAR:
            yield d
            d *= 2.0
        return
    gap = abs(bound - x0)
    while d < 0.5 * gap:
        yield d
        d *= 2.0
    for j in range(1, 52):
        yield gap * (1.0 - 2.0 ** -j)


def _outward_root(p: Potential1D, well: Well, E: float, direction: int) -> float:
    f = p.scalar
    g = lambda x: f(x) - E  # noqa: E731
    x0 = well.x_min
    barrier = well.right_barrier if direction > 0 else well.left_barrier
    if math.isfinite(barrier) and math.isfinite(f(barrier)) and g(barrier) > 0.0:
        # V rises monotonically (at sampling resolution) up to the barrier
        lo, hi = (x0, barrier) if direction > 0 else (barrier, x0)
        root = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        return _newton_polish(p, root, E)
    bound = well.right if direction > 0 else well.left
    inner = x0
    for off in _outward_offsets(x0, bound, direction):
        x = x0 + direction * off
        try:
            val = g(x)
        except (ValueError, ZeroDivisionError, OverflowError):
            val = math.inf
        if val >= 0.0:
            outer = x
            # pole or overflow at the probe: bisect until V is finite again
            for _ in range(200):
                if math.isfinite(val):
                    break
                mid = 0.5 * (inner + outer)
                try:
                    val = g(mid)
                except (ValueError, ZeroDivisionError, OverflowError):
                    val = math.inf
                if val < 0.0:
                    inner, val = mid, math.inf
                else:
                    outer = mid
            lo, hi = (inner, outer) if direction > 0 else (outer, inner)
            root = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
            return _newton_polish(p, root, E)
        inner = x
    raise DomainError(f"motion is unbounded at E={E:g}")


def _newton_polish(p: Potential1D, x: float, E: float) -> float:
    f, df = p.scalar, p.scalar_derivative
    for _ in range(3):
        slope = df(x)
        if slope == 0.0:
            break
        step = (f(x) - E) / slope
        if abs(step) > 1e-8 * max(1.0, abs(x)):
            break
        x_new = x - step
        if abs(f(x_new) - E) >= abs(f(x) - E):
            break
        x = x_new
    return x


def find_turning_points(p: Potential1D, E: float, anchor: Optional[float] = None,
                        well: Optional[Well] = None) -> tuple[float, float]:
    """Both roots of V(x) = E bracketing the well minimum."""
    well = well or locate_well(p, anchor)
    if not E > well.v_min:
        raise DomainError(f"E={E:g} is not above the well minimum {well.v_min:g}")
    if not E < well.escape_energy:
        raise DomainError(f"motion is unbounded at E={E:g} (escape at {well.escape_energy:g})")
    return _outward_root(p, well, E, -1), _outward_root(p, well, E, +1)


# --------------------------------------------------------------------------
# Orbits and period quadrature
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


class Orbit:
    """A bounded orbit at fixed energy, parametrised by x = c + h cos(phi).

    phi = 0 is the right turning point and phi = pi the left one; the elapsed
    time from the right turning point is tau(phi) = int_0^phi G.
    """

    def __init__(self, p: Potential1D, E: float, well: Optional[Well] = None,
                 anchor: Optional[float] = None):
        self.potential = p
        self.well = well or locate_well(p, anchor)
        self.E = float(E)
        self.x_left, self.x_right = find_turning_points(p, E, well=self.well)
        self.center = 0.5 * (self.x_left + self.x_right)
        self.half_width = 0.5 * (self.x_right - self.x_left)
        self._half_period = None

    def integrand(self, phi):
        """G(phi) = h sin(phi) / sqrt(2 (E - V(x(phi)))), smooth on [0, pi].

        Close to a turning point E - V is rebuilt as the distance to it times
        the mean slope of V, which avoids cancellation in E - V(x). The
        turning points are treated as exact roots there; the ~1 ulp residual
        E - V(x_turn) would otherwise dominate at the nodes nearest the ends.
        """
        phi = np.asarray(phi, dtype=float)
        h = self.half_width
        v = self.potential
        s2 = np.sin(0.5 * phi) ** 2
        c2 = np.cos(0.5 * phi) ** 2
        d_r = 2.0 * h * s2
        d_l = 2.0 * h * c2
        right = phi < 0.5 * np.pi
        x = np.where(right, self.x_right - d_r, self.x_left + d_l)
        gap = self.E - v(x)
        nodes, weights = _gauss_legendre(8)
        frac = 0.5 * (nodes + 1.0)
        # direct subtraction is only ill-conditioned where E - V is tiny
        cancel = ~(gap > 1e-3 * (abs(self.E) + np.abs(v(x))))
        near_r = cancel & right
        if np.any(near_r):
            d = d_r[near_r]
            slope = 0.5 * (v.d(self.x_right - np.outer(d, frac)) @ weights)
            gap[near_r] = d * slope
        near_l = cancel & ~right
        if np.any(near_l):
            d = d_l[near_l]
            slope = 0.5 * (v.d(self.x_left + np.outer(d, frac)) @ weights)
            gap[near_l] = -d * slope
        return h * np.sin(phi) / np.sqrt(2.0 * gap)

    def half_period(self, rtol: float = 1e-13, max_nodes: int = 1 << 16) -> float:
        if self._half_period is not None:
            return self._half_period
        prev = None
        n = 16
        while n <= max_nodes:
            phi = (np.arange(n) + 0.5) * (np.pi / n)
            val = float(np.sum(self.integrand(phi)) * (np.pi / n))
            if prev is not None and abs(val - prev) <= rtol * abs(val):
                self._half_period = val
                return val
            prev = val
            n *= 2
        raise ConvergenceError("period quadrature did not converge", achieved=abs(val - prev) / abs(val))

    @property
    def period(self) -> float:
        return 2.0 * self.half_period()

    def phi_of(self, x: float) -> float:
        """Angle variable of a position on the orbit, stable near both ends."""
        h = self.half_width
        u = min(max((self.x_right - x) / (2.0 * h), 0.0), 1.0)
        return 2.0 * math.asin(math.sqrt(u))

    def tau(self, phi: float, rtol: float = 1e-13) -> float:
        """Time to travel from the right turning point to angle ``phi`` (p <= 0 leg)."""
        if phi <= 0.0:
            return 0.0
        if phi >= math.pi:
            return self.half_period()
        prev = None
        n = 16
        while n <= 2048:
            nodes, weights = _gauss_legendre(n)
            t = 0.5 * phi * (nodes + 1.0)
            g = self.integrand(t)
            val = 0.5 * phi * float(np.dot(weights, g))
            floor = 8 * np.finfo(float).eps * phi * float(np.max(np.abs(g)))
            if prev is not None and abs(val - prev) <= rtol * abs(val) + floor:
                return val
            prev = val
            n *= 2
        raise ConvergenceError("partial period quadrature did not converge",
                               achieved=abs(val - prev) / max(abs(val), 1e-300))

    def time_from_right(self, x: float) -> float:
        return self.tau(self.phi_of(x))

    def state_at_phi(self, phi: float, leg: int = -1) -> PhaseState:
        x = self.center + self.half_width * math.cos(phi)
        gap = 2.0 * (self.E - self.potential.scalar(x))
        speed = math.sqrt(gap) if gap > 0.0 else 0.0
        return PhaseState(x, leg * speed)


def period_quadrature(p: Potential1D, E: float, anchor: Optional[float] = None,
                      rtol: float = 1e-13) -> float:
    """Oscillation period T(E) of the well around ``anchor``."""
    return 2.0 * Orbit(p, E, anchor=anchor).half_period(rtol=rtol)


def period_by_flight(p: Potential1D, E: float, anchor: Optional[float] = None,
                     rtol: float = 1e-12) -> float:
    """Independent period oracle: time of flight from (x_r, 0) back to (x_r, 0).

    The flight is split at the left turning point so that each leg starts at
    p = 0 and ends on a p = 0 crossing of the opposite direction.
    """
    orbit = Orbit(p, E, anchor=anchor)
    estimate = orbit.period
    df = p.scalar_derivative

    def rhs(t, y):
        return (y[1], -df(y[0]))

    def upward(t, y):
        return y[1]
    upward.terminal = True
    upward.direction = 1.0

    def downward(t, y):
        return y[1]
    downward.terminal = True
    downward.direction = -1.0

    total = 0.0
    y0 = (orbit.x_right, 0.0)
    for event in (upward, downward):
        sol = solve_ivp(rhs, (0.0, 10.0 * estimate - total), y0, method="DOP853",
                        rtol=rtol, atol=rtol * max(1.0, abs(orbit.x_right)), events=event)
        if sol.t_events[0].size == 0:
            raise ConvergenceError("no return to the starting turning point within 10 periods")
        total += float(sol.t_events[0][0])
        y0 = (float(sol.y_events[0][0][0]), 0.0)
    return total


# --------------------------------------------------------------------------
# Isochrony scan
# --------------------------------------------------------------------------

@dataclass
class PeriodProfile:
    energies: np.ndarray
    periods: np.ndarray
    spread: float
    verdict: str
    tol: float
    failures: tuple = ()

    @property
    def median_period(self) -> float:
        return float(np.median(self.periods)) if self.periods.size else math.nan


def isochrony_scan(p: Potential1D, e_range: Sequence[float], n_samples: int, tol: float,
                   anchor: Optional[float] = None) -> PeriodProfile:
    """Sample T(E) on a linear energy grid and decide whether it is constant.

    The verdict is ``isochronous`` iff max(T) - min(T) <= tol * median(T).
    """
    if n_samples < 3:
        raise ValueError("isochrony_scan needs at least 3 samples")
    if not tol > 0:
        raise ValueError("tol must be positive")
    well = locate_well(p, anchor)
    e_lo, e_hi = float(e_range[0]), float(e_range[1])
    if not (well.v_min < e_lo <= e_hi < well.escape_energy):
        raise DomainError(
            f"energy range [{e_lo:g}, {e_hi:g}] is not inside the bounded band "
            f"({well.v_min:g}, {well.escape_energy:g})")
    energies = np.linspace(e_lo, e_hi, n_samples)
    good_e, periods, failures = [], [], []
    for E in energies:
        try:
            T = 2.0 * Orbit(p, float(E), well=well).half_period()
        except (ConvergenceError, DomainError) as exc:
            failures.append((float(E), str(exc)))
            continue
        if not (math.isfinite(T) and T > 0):
            failures.append((float(E), "non-finite period"))
            continue
        good_e.append(float(E))
        periods.append(T)
    periods = np.asarray(periods)
    spread = float(periods.max() - periods.min()) if periods.size else math.nan
    if failures:
        verdict = INDETERMINATE
    elif spread <= tol * float(np.median(periods)):
        verdict = ISOCHRONOUS
    else:
        verdict = NOT_ISOCHRONOUS
    return PeriodProfile(np.asarray(good_e), periods, spread, verdict, float(tol), tuple(failures))


# --------------------------------------------------------------------------
# Commensurability
# --------------------------------------------------------------------------

def _convergents(value: float, limit: int):
    """Continued-fraction convergents of a positive real, up to ``limit`` terms."""
    h0, h1 = 0, 1
    k0, k1 = 1, 0
    v = value
    for _ in range(limit):
        a = math.floor(v)
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        yield h1, k1
        frac = v - a
        if frac < 1e-15:
            return
        v = 1.0 / frac


def commensurability(ta: float, tb: float, max_den: int = 50, tol: float = 1e-9):
    """Coprime (m, n) with Ta/Tb ~= m/n, or None.

    The mismatch is measured as |log(Ta*n / (Tb*m))| and both m and n must be
    at most ``max_den``; that makes the test exactly symmetric under swapping
    the two periods.
    """
    if not (ta > 0 and tb > 0):
        raise ValueError("periods must be positive")
    ratio = ta / tb
    for m, n in _convergents(ratio, 64):
        if m == 0:
            continue
        if max(m, n) > max_den:
            return None
        if abs(math.log(ratio * n / m)) <= tol:
            frac = Fraction(m, n)
            return frac.numerator, frac.denominator
    return None


# --------------------------------------------------------------------------
# Symplectic integration
# --------------------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # shape (N, 2) for 1D, (N, 4) for 2D
    energies: np.ndarray
    energy_drift: float
    drift_constant: float       # energy_drift / dt**2
    dt: float

    @property
    def dim(self) -> int:
        return self.states.shape[1] // 2

    def state(self, k: int):
        row = self.states[k]
        if self.dim == 1:
            return PhaseState(float(row[0]), float(row[1]))
        return (PhaseState(float(row[0]), float(row[1])), PhaseState(float(row[2]), float(row[3])))


def _guard_distance(p: Potential1D) -> float:
    scale = max([1.0] + [abs(s) for s in p.singularities])
    return 1e-6 * scale


def _verlet_axis(p: Potential1D, x: float, v: float, dt: float, n_steps: int, stride: int):
    force = p.scalar_derivative
    guard = _guard_distance(p)
    poles = p.singularities
    lo, hi = p.domain
    half = 0.5 * dt
    xs = [x]
    ps = [v]
    a = force(x)
    for k in range(1, n_steps + 1):
        v -= half * a
        x_old = x
        x += dt * v
        for s in poles:
            if abs(x - s) < guard or (x_old - s) * (x - s) < 0.0:
                raise DomainError(f"trajectory came within {guard:g} of the pole at {s:g}")
        if not lo < x < hi:
            raise DomainError(f"trajectory left the domain at x={x:g}")
        a = force(x)
        v -= half * a
        if not (math.isfinite(x) and math.isfinite(v)):
            raise DomainError("non-finite state during integration")
        if k % stride == 0:
            xs.append(x)
            ps.append(v)
    return np.array(xs), np.array(ps)


def _as_states(s0):
    if isinstance(s0, PhaseState):
        return [s0]
    s0 = list(s0)
    if len(s0) == 2 and all(isinstance(s, (tuple, list, PhaseState)) for s in s0):
        return [PhaseState(*s0[0]), PhaseState(*s0[1])]
    if len(s0) == 2:
        return [PhaseState(float(s0[0]), float(s0[1]))]
    if len(s0) == 4:
        return [PhaseState(float(s0[0]), float(s0[1])), PhaseState(float(s0[2]), float(s0[3]))]
    raise ValueError("state must be (x, p) or (x1, p1, x2, p2)")


def integrate_trajectory(va: Potential1D, vb: Optional[Potential1D], s0, t_end: float,
                         dt: float, stride: int = 1) -> Trajectory:
    """Stormer-Verlet (velocity form) for the separable Hamiltonian Ha + Hb.

    ``dt`` is shrunk slightly so that an integer number of steps lands exactly
    on ``t_end``. The two axes of a separable system evolve independently, so
    each axis is stepped on its own with the same step sequence.
    """
    if not dt > 0 or not t_end > 0:
        raise ValueError("dt and t_end must be positive")
    states = _as_states(s0)
    pots = [va] if vb is None else [va, vb]
    if len(states) != len(pots):
        raise ValueError("state dimension does not match the number of potentials")
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    h = t_end / n_steps
    cols = []
    energies = 0.0
    for pot, s in zip(pots, states):
        pot.eval(s.x)
        xs, ps = _verlet_axis(pot, float(s.x), float(s.p), h, n_steps, stride)
        cols += [xs, ps]
        energies = energies + 0.5 * ps * ps + pot(xs)
    times = np.arange(len(cols[0])) * (h * stride)
    drift = float(np.max(np.abs(energies - energies[0])))
    return Trajectory(times, np.column_stack(cols), np.asarray(energies), drift, drift / h ** 2, h)


def closed_orbit_check(tr: Trajectory, tol: float, scale: Optional[Sequence[float]] = None):
    """Earliest return time to the initial phase-space point, or None.

    Distances are Euclidean after dividing each component by ``scale``
    (default: its maximum magnitude along the trajectory). The first local
    minimum of the distance that falls below ``tol`` after the orbit has moved
    away, with the parabola through the neighbouring samples used both to judge
    the minimum and to refine its time.
    """
    st = tr.states
    if scale is None:
        scale = np.max(np.abs(st), axis=0)
    scale = np.where(np.asarray(scale, dtype=float) > 0, scale, 1.0)
    d2 = np.sum(((st - st[0]) / scale) ** 2, axis=1)
    left = np.flatnonzero(d2 > (2.0 * tol) ** 2)
    if left.size == 0:
        return None
    start = int(left[0])
    tol2 = tol * tol
    for k in range(max(start, 1), len(d2) - 1):
        if not (d2[k] <= d2[k - 1] and d2[k] <= d2[k + 1]):
            continue
        # the squared distance is locally quadratic in t: judge its refined minimum
        denom = d2[k - 1] - 2.0 * d2[k] + d2[k + 1]
        shift = 0.5 * (d2[k - 1] - d2[k + 1]) / denom if denom > 0 else 0.0
        low = d2[k] - 0.125 * (d2[k - 1] - d2[k + 1]) ** 2 / denom if denom > 0 else d2[k]
        if low < tol2:
            dt = tr.times[k] - tr.times[k - 1]
            return float(tr.times[k] + shift * dt)
    return None
