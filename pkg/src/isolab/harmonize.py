"""Harmonization of isochronous wells and the pulled-back oscillator integrals.

A bounded state (x, p) of an isochronous well is labelled by the right turning
point r (measured from the well minimum) and the time t elapsed since the
particle left (x_min + r, 0). The pair is then sent to

    X = r cos(w t),    P = -r w sin(w t),    w = 2 pi / T,

so that dX/dt = P and dP/dt = -w**2 X hold exactly along the flow and the
unit harmonic oscillator is mapped to itself. The origin of (X, P) is the
well minimum and is excluded.

Given two such maps with commensurable frequencies w_a : w_b = m : n the
complex amplitudes A_j = P_j + i w_j X_j give the integrals

    Q1 = |A1|**2 / 2,  Q2 = |A2|**2 / 2,  Q3 + i Q4 = A1**n * conj(A2)**m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .classical import (
    ISOCHRONOUS, Orbit, PeriodProfile, PhaseState, Well, _as_states, commensurability,
    integrate_trajectory, isochrony_scan, locate_well,
)
from .errors import DomainError
from .expr import Potential1D


@dataclass(frozen=True, eq=False)
class HarmonizationMap:
    potential: Potential1D
    period: float
    omega: float
    well: Well
    iso_tol: float
    profile: Optional[PeriodProfile] = field(default=None, repr=False)

    def shifted_potential(self, rho):
        """V(x_min + rho) - V(x_min): the well moved to the origin."""
        return self.potential(self.well.x_min + np.asarray(rho)) - self.well.v_min

    def orbit(self, E: float) -> Orbit:
        return Orbit(self.potential, E, well=self.well)


def build_map(p: Potential1D, e_range: Optional[Sequence[float]] = None, n_samples: int = 20,
              tol: float = 1e-6, anchor: Optional[float] = None, period: Optional[float] = None,
              require_isochronous: bool = True) -> HarmonizationMap:
    """Construct the harmonization map of the well around ``anchor``.

    The common period comes from an isochrony scan over ``e_range`` (default:
    0.1 to 10 above the well bottom) unless ``period`` is given. A fixed
    ``period`` with ``require_isochronous=False`` builds a would-be map for a
    non-isochronous well, which is only useful as a negative control.
    """
    well = locate_well(p, anchor)
    profile = None
    if period is None or require_isochronous:
        if e_range is None:
            top = min(well.v_min + 10.0, 0.5 * (well.v_min + well.escape_energy))
            e_range = (well.v_min + 0.1, top)
        profile = isochrony_scan(p, e_range, n_samples, tol, anchor=well.x_min)
        if require_isochronous and profile.verdict != ISOCHRONOUS:
            raise DomainError(
                f"potential is {profile.verdict} on [{e_range[0]:g}, {e_range[1]:g}] "
                f"(spread {profile.spread:.3e})")
        if period is None:
            period = profile.median_period
    return HarmonizationMap(p, float(period), 2.0 * math.pi / float(period), well, float(tol), profile)


def _orbit_for(hm: HarmonizationMap, s: PhaseState) -> Orbit:
    E = 0.5 * s.p * s.p + hm.potential.scalar(s.x)
    if E - hm.well.v_min <= 1e-14 * max(1.0, abs(hm.well.v_min)):
        raise DomainError("the well minimum (origin of the map) is excluded")
    if not E < hm.well.escape_energy:
        raise DomainError(f"state energy {E:g} is above the bounded band")
    return hm.orbit(E)


def elapsed_time(hm: HarmonizationMap, s: PhaseState) -> tuple[float, Orbit]:
    """Time from the right turning point to ``s`` along its own orbit."""
    orbit = _orbit_for(hm, s)
    tau = orbit.time_from_right(s.x)
    if s.p <= 0.0:
        return tau, orbit
    t = orbit.period - tau
    return (0.0 if t >= orbit.period else t), orbit


def forward_map(hm: HarmonizationMap, s) -> tuple[float, float, float, float]:
    """(x, p) -> (r, t, X, P)."""
    s = PhaseState(*s)
    t, orbit = elapsed_time(hm, s)
    r = orbit.x_right - hm.well.x_min
    theta = hm.omega * t
    return r, t, r * math.cos(theta), -r * hm.omega * math.sin(theta)


def flow_state(hm: HarmonizationMap, r: float, t: float) -> PhaseState:
    """State reached after time ``t`` from the turning point ``x_min + r``."""
    if not r > 0:
        raise DomainError("r must be positive")
    x_r = hm.well.x_min + r
    if not x_r < hm.well.right:
        raise DomainError("turning point outside the well")
    E = hm.potential.scalar(x_r)
    if not E < hm.well.escape_energy:
        raise DomainError(f"r={r:g} is outside the bounded band")
    orbit = hm.orbit(E)
    half = orbit.half_period()
    t = math.fmod(t, 2.0 * half)
    if t < 0:
        t += 2.0 * half
    leg = -1
    if t > half:
        t, leg = 2.0 * half - t, 1
    if t <= 0.0:
        return PhaseState(orbit.x_right, 0.0)
    if t >= half:
        return PhaseState(orbit.x_left, 0.0)
    phi = optimize.brentq(lambda f: orbit.tau(f) - t, 0.0, math.pi, xtol=1e-15, rtol=1e-15)
    return orbit.state_at_phi(phi, leg)


def inverse_map(hm: HarmonizationMap, X: float, P: float) -> PhaseState:
    """(X, P) -> (x, p); the origin is excluded."""
    w = hm.omega
    r = math.hypot(X, P / w)
    if r == 0.0:
        raise DomainError("the origin of the (X, P) plane has no preimage")
    theta = math.atan2(-P / w, X) % (2.0 * math.pi)
    return flow_state(hm, r, theta / w)


def jacobian(hm: HarmonizationMap, r: float, t: float, step: Optional[float] = None) -> float:
    """det d(x, p)/d(r, t) along the flow, with d/dr by central differences."""
    v = step if step is not None else 1e-5 * max(1.0, r)
    if r - v <= 0:
        raise DomainError("perturbation reaches the well minimum")
    s = flow_state(hm, r, t)
    plus = flow_state(hm, r + v, t)
    minus = flow_state(hm, r - v, t)
    x_r = (plus.x - minus.x) / (2.0 * v)
    p_r = (plus.p - minus.p) / (2.0 * v)
    x_t, p_t = s.p, -hm.potential.scalar_derivative(s.x)
    return x_r * p_t - x_t * p_r


def jacobian_residual(hm: HarmonizationMap, r: float, t: float, step: Optional[float] = None) -> float:
    """|J + V'(r)|, with V' taken on the well shifted to the origin."""
    dv = hm.potential.scalar_derivative(hm.well.x_min + r)
    return abs(jacobian(hm, r, t, step) + dv)


# --------------------------------------------------------------------------
# Integrals of the anisotropic oscillator
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IntegralSet:
    map_a: HarmonizationMap
    map_b: HarmonizationMap
    m: int
    n: int

    def amplitudes(self, state) -> tuple[complex, complex]:
        sa, sb = _as_states(state)
        _, _, xa, pa = forward_map(self.map_a, sa)
        _, _, xb, pb = forward_map(self.map_b, sb)
        return complex(pa, self.map_a.omega * xa), complex(pb, self.map_b.omega * xb)

    def __call__(self, state) -> np.ndarray:
        a1, a2 = self.amplitudes(state)
        z = a1 ** self.n * a2.conjugate() ** self.m
        return np.array([0.5 * abs(a1) ** 2, 0.5 * abs(a2) ** 2, z.real, z.imag])


def build_integral_set(hma: HarmonizationMap, hmb: HarmonizationMap, m: Optional[int] = None,
                       n: Optional[int] = None, tol: float = 1e-6, max_den: int = 50) -> IntegralSet:
    """Integrals for frequencies w_a : w_b = m : n (inferred when omitted)."""
    if m is None or n is None:
        found = commensurability(hma.omega, hmb.omega, max_den=max_den, tol=tol)
        if found is None:
            raise DomainError(
                f"ratio mismatch: w_a/w_b = {hma.omega / hmb.omega:.12g} has no rational "
                f"approximation with terms <= {max_den} within {tol:g}")
        m, n = found
    m, n = int(m), int(n)
    if m <= 0 or n <= 0 or math.gcd(m, n) != 1:
        raise ValueError(f"{m}:{n} is not a coprime pair of positive integers")
    ratio = hma.omega / hmb.omega
    if abs(ratio / (m / n) - 1.0) > tol:
        raise DomainError(f"ratio mismatch: w_a/w_b = {ratio:.12g} but {m}:{n} was requested")
    return IntegralSet(hma, hmb, m, n)


@dataclass
class AuditReport:
    times: np.ndarray
    values: np.ndarray           # shape (K, 4)
    max_abs_drift: np.ndarray    # per integral
    rel_drift: np.ndarray        # per integral, see conservation_audit
    reference: np.ndarray        # normalisation used for rel_drift (0 means absolute)
    energy_drift: float

    @property
    def worst(self) -> float:
        return float(np.max(self.rel_drift))


def conservation_audit(iset: IntegralSet, va: Potential1D, vb: Potential1D, s0, t_end: float,
                       dt: float, checkpoints: int = 2000) -> AuditReport:
    """Integrate the separable flow and track the drift of Q1..Q4.

    Q1 and Q2 are normalised by their initial values, Q3 and Q4 by the initial
    modulus |Q3 + i Q4| (their own initial values can vanish by phase alone).
    Any normalisation below 1e-9 falls back to absolute drift.
    """
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    stride = max(1, n_steps // max(1, checkpoints))
    tr = integrate_trajectory(va, vb, s0, t_end, dt, stride=stride)
    values = np.array([iset(tr.state(k)) for k in range(len(tr.times))])
    drift = np.max(np.abs(values - values[0]), axis=0)
    modulus = math.hypot(values[0, 2], values[0, 3])
    ref = np.array([abs(values[0, 0]), abs(values[0, 1]), modulus, modulus])
    ref = np.where(ref < 1e-9, 0.0, ref)
    rel = np.where(ref > 0, drift / np.where(ref > 0, ref, 1.0), drift)
    return AuditReport(tr.times, values, drift, rel, ref, tr.energy_drift)
