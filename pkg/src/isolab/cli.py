"""Command-line front end: ``isolab <subcommand> [options]``.

Every run writes one machine-readable report (JSON object with ``meta`` and
``data`` keys, or CSV with ``#`` metadata lines and a header row). Exit
status is 0 on success, 1 on a domain or convergence error and 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .classical import (
    PhaseState, closed_orbit_check, integrate_trajectory, isochrony_scan, period_by_flight,
    period_quadrature,
)
from .dressing import (
    Chain, Superpotential, build_pair, chain_verify, factorization_residual, indicial_exponents,
    normalizability_check, q17_build,
)
from .errors import ConfigError, ConvergenceError, DomainError, IsolabError, ParseError
from .expr import Potential1D, parse
from .families import FAMILIES, NAMES, Q17_NAMES, default_box, family
from .harmonize import (
    build_integral_set, build_map, conservation_audit, forward_map, inverse_map, jacobian_residual,
)
from .quantum import (
    Grid, GridOperator, analyze_ladder_structure, build_hamiltonian, commutator_residual, eigensolve,
    harmonic_ladder, isotonic_spectrum_formula, ladder_apply, make_ladder, overlap,
)

TABULAR = ("period", "simulate")


@dataclass
class Report:
    data: dict
    tolerances: dict
    table: Optional[tuple[list[str], list[list[Any]]]] = None


# --------------------------------------------------------------------------
# Option parsing helpers
# --------------------------------------------------------------------------

def parse_energies(text: str) -> np.ndarray:
    """``start:stop:count`` with inclusive ends and linear spacing."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise ConfigError(f"energy range must look like start:stop:count, got {text!r}") from None
    if n < 1 or (n > 1 and not b > a):
        raise ConfigError(f"bad energy range {text!r}")
    return np.linspace(a, b, n)


def parse_ratio(text: str) -> tuple[int, int]:
    try:
        m, n = (int(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"ratio must look like m:n, got {text!r}") from None
    if m <= 0 or n <= 0:
        raise ConfigError("ratio terms must be positive")
    return m, n


def parse_state(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"state must be x,p or x1,p1,x2,p2, got {text!r}") from None
    if len(vals) not in (2, 4):
        raise ConfigError("state must have 2 or 4 components")
    return vals


def parse_params(items: Optional[Sequence[str]]) -> dict:
    out = {}
    for item in items or []:
        for part in item.split(","):
            part = part.strip()
            if not part:
                continue
            key, sep, val = part.partition("=")
            if not sep:
                raise ConfigError(f"parameter must look like name=value, got {part!r}")
            try:
                out[key.strip()] = float(val)
            except ValueError:
                raise ConfigError(f"parameter {key.strip()!r} is not a number") from None
    return out


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, repeated keys accumulate."""
    out: dict[str, Any] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{num}: expected key = value")
        key = key.strip().lstrip("-").replace("-", "_")
        val = val.strip()
        if key in ("param", "param2"):
            out.setdefault(key, []).append(val)
        else:
            out[key] = val
    return out


# --------------------------------------------------------------------------
# Shared resolution
# --------------------------------------------------------------------------

def _potential(args, second: bool = False) -> tuple[Potential1D, Optional[str]]:
    source = args.potential2 if second else args.potential
    fam = args.family2 if second else args.family
    params = parse_params(args.param2 if second else args.param)
    if source and fam:
        raise ConfigError("give either a potential expression or a family, not both")
    if source:
        return parse(source, params, hbar=args.hbar), None
    if fam:
        if fam in Q17_NAMES and args.alpha2 is not None:
            params.setdefault("alpha2", args.alpha2)
        return family(fam, params, hbar=args.hbar), fam
    raise ConfigError("a potential is required (--potential or --family)"
                      + (" for the second axis" if second else ""))


def _grid(args, fam: Optional[str]) -> Grid:
    box = default_box(fam, args.alpha2)
    lo = args.xmin if args.xmin is not None else (box[0] if box else None)
    hi = args.xmax if args.xmax is not None else (box[1] if box else None)
    if lo is None or hi is None:
        raise ConfigError("--xmin and --xmax are required for a custom potential")
    return Grid(lo, hi, args.grid)


def _tol(args, default: float) -> float:
    return default if args.tol is None else args.tol


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_period(args) -> Report:
    pot, _ = _potential(args)
    energies = parse_energies(args.energies or "0.1:10:20")
    rows = []
    for E in energies:
        row = [float(E), period_quadrature(pot, float(E))]
        if args.flight:
            row.append(period_by_flight(pot, float(E)))
        rows.append(row)
    cols = ["energy", "period"] + (["period_flight"] if args.flight else [])
    return Report({"potential": pot.source, "rows": len(rows)},
                  {"quadrature_rtol": 1e-13, "flight_rtol": 1e-12}, (cols, rows))


def cmd_isochrony(args) -> Report:
    pot, _ = _potential(args)
    energies = parse_energies(args.energies or "0.1:10:20")
    tol = _tol(args, 1e-6)
    prof = isochrony_scan(pot, (energies[0], energies[-1]), len(energies), tol)
    data = {
        "potential": pot.source,
        "verdict": prof.verdict,
        "spread": prof.spread,
        "median_period": prof.median_period if len(prof.periods) else None,
        "energies": list(prof.energies),
        "periods": list(prof.periods),
        "failures": list(prof.failures),
    }
    return Report(data, {"tol": tol})


def cmd_simulate(args) -> Report:
    pot, _ = _potential(args)
    state = parse_state(args.state or "1,0")
    pots = [pot]
    if len(state) == 4:
        pots.append(_potential(args, second=True)[0])
    t_end = args.t_end if args.t_end is not None else 2.0 * math.pi
    dt = args.dt if args.dt is not None else 1e-3
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    stride = max(1, n_steps // max(1, args.samples))
    tr = integrate_trajectory(pots[0], pots[1] if len(pots) == 2 else None, state, t_end, dt, stride=stride)
    closed = closed_orbit_check(tr, _tol(args, 1e-3))
    cols = ["t", "x", "p"] + (["x2", "p2"] if tr.dim == 2 else []) + ["energy"]
    rows = [[float(t)] + [float(v) for v in st] + [float(e)]
            for t, st, e in zip(tr.times, tr.states, tr.energies)]
    data = {"energy_drift": tr.energy_drift, "drift_constant": tr.drift_constant, "dt": tr.dt,
            "closed_orbit_time": closed}
    return Report(data, {"closure_tol": _tol(args, 1e-3), "guard": 1e-6}, (cols, rows))


def cmd_harmonize(args) -> Report:
    pot, _ = _potential(args)
    tol = _tol(args, 1e-6)
    energies = parse_energies(args.energies) if args.energies else None
    hm = build_map(pot, e_range=None if energies is None else (energies[0], energies[-1]), tol=tol)
    data: dict[str, Any] = {"potential": pot.source, "period": hm.period, "omega": hm.omega,
                            "well_minimum": hm.well.x_min}
    if args.state:
        s = parse_state(args.state)[:2]
        r, t, X, P = forward_map(hm, s)
        back = inverse_map(hm, X, P)
        data["state"] = {"x": s[0], "p": s[1], "r": r, "t": t, "X": X, "P": P,
                         "round_trip_error": math.hypot(back.x - s[0], back.p - s[1])}
    r_hi = hm.orbit(hm.profile.energies[-1]).x_right - hm.well.x_min if hm.profile else 1.0
    rows = []
    for r in np.linspace(0.1, r_hi, 10):
        for t in np.linspace(0.0, hm.period, 10, endpoint=False):
            rows.append([float(r), float(t), jacobian_residual(hm, float(r), float(t))])
    data["jacobian"] = {"max_residual": max(row[2] for row in rows), "columns": ["r", "t", "residual"],
                        "rows": rows}
    return Report(data, {"isochrony_tol": tol})


def cmd_integrals(args) -> Report:
    va, _ = _potential(args)
    vb, _ = _potential(args, second=True)
    state = parse_state(args.state or "1,0.3,1.5,0.4")
    if len(state) != 4:
        raise ConfigError("integrals need a 2D state x1,p1,x2,p2")
    tol = _tol(args, 1e-6)
    ha, hb = build_map(va, tol=tol), build_map(vb, tol=tol)
    m, n = parse_ratio(args.ratio) if args.ratio else (None, None)
    iset = build_integral_set(ha, hb, m, n, tol=tol)
    t_end = args.t_end if args.t_end is not None else 50.0 * max(ha.period, hb.period)
    dt = args.dt if args.dt is not None else 1e-3
    rep = conservation_audit(iset, va, vb, state, t_end, dt, checkpoints=args.samples)
    names = ["Q1", "Q2", "Q3", "Q4"]
    data = {
        "ratio": f"{iset.m}:{iset.n}",
        "periods": [ha.period, hb.period],
        "initial": dict(zip(names, map(float, rep.values[0]))),
        "max_abs_drift": dict(zip(names, map(float, rep.max_abs_drift))),
        "rel_drift": dict(zip(names, map(float, rep.rel_drift))),
        "energy_drift": rep.energy_drift,
        "columns": ["t"] + names,
        "rows": [[float(t)] + [float(v) for v in row] for t, row in zip(rep.times, rep.values)],
    }
    return Report(data, {"isochrony_tol": tol, "ratio_tol": tol, "dt": dt})


def _shifted_q17(args, pot_family):
    q = q17_build(args.alpha2 if args.alpha2 is not None else (1.0 if pot_family == "q17" else -1.0),
                  args.hbar)
    return q


def cmd_spectrum(args) -> Report:
    pot, fam = _potential(args)
    g = _grid(args, fam)
    k = args.levels
    data: dict[str, Any] = {"potential": pot.source, "grid": [g.x_min, g.x_max, g.n]}
    if fam in Q17_NAMES:
        q = _shifted_q17(args, fam)
        H = build_hamiltonian(q.potential, g)
        H = GridOperator(H.grid, H.potential + q.c_plus, H.diagonal + q.c_plus, H.off, H.hbar,
                         H.scale, H.exponent)
        data["operator"] = "a a^+ = p^2/2 + V + c_plus"
        data["c_plus"] = q.c_plus
    else:
        H = build_hamiltonian(pot, g, branch=args.branch)
        data["branch"] = args.branch if H.exponent is not None else None
    eig = eigensolve(H, k)
    data["eigenvalues"] = [float(v) for v in eig.eigenvalues]
    data["residuals"] = [float(v) for v in eig.residuals]
    if fam == "isotonic":
        prm = {**FAMILIES["isotonic"].defaults, **parse_params(args.param)}
        f = isotonic_spectrum_formula(prm["a"], prm["b"], args.hbar, k)
        data["formula"] = {"nu": f.nu, "regime": f.regime, "levels": list(f.levels(args.branch)[:k])}
    return Report(data, {"eigen_residual": 1e-8})


def cmd_ladder(args) -> Report:
    pot, fam = _potential(args)
    if fam not in ("harmonic", "isotonic"):
        raise ConfigError("ladder supports the harmonic and isotonic families")
    g = _grid(args, fam)
    H = build_hamiltonian(pot, g, branch=args.branch)
    eig = eigensolve(H, max(args.levels, 8))
    prm = {**FAMILIES[fam].defaults, **parse_params(args.param)}
    if fam == "harmonic":
        A = harmonic_ladder(prm["w"], args.hbar)
    else:
        A = make_ladder(prm["a"], args.hbar, prm["b"])
    fit = commutator_residual(H, A, spectrum=eig)
    tol = _tol(args, 1e-2)
    structure = analyze_ladder_structure(eig.eigenvalues[:args.levels], A.lam, tol)
    rows = []
    for j in range(len(eig) - 1):
        target = eig.eigenvalues[j] + fit.lambda_fit
        i = eig.nearest(target)
        image = ladder_apply(A, eig.vector(j), H)
        rows.append([j, float(eig.eigenvalues[j]), float(eig.eigenvalues[i]),
                     overlap(H, image, eig.vector(i))])
    data = {
        "operator": A.label, "lambda": A.lam, "lambda_fit": fit.lambda_fit, "residual": fit.residual,
        "eigenvalues": [float(v) for v in eig.eigenvalues],
        "chains": [list(c) for c in structure.chains], "orphans": list(structure.orphans),
        "columns": ["from", "energy", "target_energy", "overlap"], "rows": rows,
    }
    return Report(data, {"chain_tol": tol, "margin": 0.1})


def cmd_chain(args) -> Report:
    fam = args.family or "harmonic"
    hb = args.hbar
    if fam == "harmonic":
        links = (Superpotential.parse("x", hbar=hb),)
        chain = Chain(links, (hb,), periodic=True)
        g = _grid(args, "harmonic")
        kind = "N=1 periodic oscillator chain, W = x, C = hbar"
    elif fam == "isotonic":
        prm = {**FAMILIES["isotonic"].defaults, **parse_params(args.param)}
        pot = family("isotonic", prm, hbar=hb)
        base = eigensolve(build_hamiltonian(pot, Grid(0.0, 12.0, max(args.grid, 3000))), 1)
        w2 = Superpotential.from_ground_state(base.vector(0), base.grid, hb)
        e0 = float(base.eigenvalues[0])
        w = math.sqrt(2.0 * prm["a"])
        if abs(prm["b"] / (hb * hb) - 1.0) > 1e-12 or abs(w - 1.0) > 1e-12:
            raise ConfigError("the two-link isotonic chain is set up for a = 1/2, b = hbar^2")
        links = (Superpotential.parse("x - h/x", {"h": hb}, hbar=hb), w2)
        chain = Chain(links, (2.0 * hb,), periodic=False)
        g = Grid(args.xmin if args.xmin is not None else 0.5,
                 args.xmax if args.xmax is not None else 6.5, args.grid)
        kind = f"oscillator -> isotonic, second link from the grid ground state (E0 = {e0:.10g})"
    else:
        raise ConfigError("chain supports the harmonic and isotonic families")
    rep = chain_verify(chain, g)
    data = {"chain": kind, "link_residuals": list(rep.link_residuals),
            "periodicity_defect": rep.periodicity_defect, "potential_defects": list(rep.potential_defects),
            "constants": list(chain.constants)}
    return Report(data, {"probes": 8})


def cmd_q17(args) -> Report:
    A = args.alpha2 if args.alpha2 is not None else 1.0
    hb = args.hbar
    q = q17_build(A, hb)
    beta = math.sqrt(abs(A))
    data: dict[str, Any] = {"alpha2": A, "hbar": hb, "potential": q.potential.source,
                            "poles": list(q.potential.singularities)}
    if A > 0:
        g = Grid(beta * 1.2, beta * 9.0, args.grid)
    else:
        g = Grid(-14.0 * beta, 14.0 * beta, args.grid)
    res = []
    for grid in (g, g.refine(2)):
        dp = build_pair(q.W, grid, q.oscillator, q.potential)
        res.append(factorization_residual(dp))
    data["c_minus"] = dp.c_minus
    data["c_plus"] = dp.c_plus
    data["c_minus_closed_form"] = q.c_minus
    data["c_plus_closed_form"] = q.c_plus
    data["c_minus_note"] = ("the expansion of a^+ a gives -5 hbar^2/(4 alpha^2); "
                            "the form -5 hbar^2/alpha^2 is off by a factor 4")
    data["factorization_residuals"] = res
    data["factorization_order"] = math.log2(res[0] / res[1]) if res[1] > 0 else None
    if A > 0:
        data["indicial_exponents"] = {f"{p:.17g}": list(indicial_exponents(q.potential, p, hb))
                                      for p in q.potential.singularities}
    modes = {}
    for mode in q.zero_modes:
        windows = (4.0 * beta, 6.0 * beta, 8.0 * beta) if A > 0 else (8.0 * beta, 10.0 * beta, 12.0 * beta)
        rep = normalizability_check(mode, windows)
        modes[mode.name] = {"verdict": rep.verdict, "at_infinity": rep.at_infinity,
                            "at_poles": rep.at_poles, "integrals": [row[2] for row in rep.table]}
    data["zero_modes"] = modes
    if A < 0:
        hp = GridOperator.from_values(g, q.potential(g.x) + q.c_plus, hb)
        hm = GridOperator.from_values(g, q.oscillator(g.x) + q.c_minus, hb)
        sp, sm = eigensolve(hp, args.levels), eigensolve(hm, args.levels)
        fine = Grid(g.x_min, g.x_max, max(20001, g.n))
        hp_fine = GridOperator.from_values(fine, q.potential(fine.x) + q.c_plus, hb)
        data["omega"] = q.omega
        data["spectrum_plus"] = [float(v) for v in sp.eigenvalues]
        data["spectrum_minus"] = [float(v) for v in sm.eigenvalues]
        st = analyze_ladder_structure(sp.eigenvalues, hb * q.omega, _tol(args, 1e-3))
        data["chains"] = [list(c) for c in st.chains]
        data["orphans"] = list(st.orphans)
        data["kernel_rayleigh"] = hp_fine.rayleigh(q.zero_modes[0](fine.x))
        gap_tol = _tol(args, 1e-3)
        data["absent_rungs"] = {name: bool(np.all(np.abs(sp.eigenvalues - m * hb * q.omega) > gap_tol))
                                for name, m in (("hbar_omega", 1), ("two_hbar_omega", 2))}
    return Report(data, {"probes": 8, "levels_tol": _tol(args, 1e-3)})


COMMANDS = {
    "period": (cmd_period, "Oscillation period T(E) by the turning-point quadrature."),
    "isochrony": (cmd_isochrony, "Isochrony test: do all bounded orbits share one period?"),
    "simulate": (cmd_simulate, "Stormer-Verlet trajectory of a 1D or separable 2D Hamiltonian, "
                               "with the closed-orbit check."),
    "harmonize": (cmd_harmonize, "Harmonization map (x,p) -> (r,t) -> (X,P) and its Jacobian identity "
                                 "J = -V'(r)."),
    "integrals": (cmd_integrals, "Pulled-back oscillator integrals Q1..Q4 of a separable pair and their "
                                 "conservation audit."),
    "spectrum": (cmd_spectrum, "Finite-difference Schrodinger spectrum (isotonic closed-form levels, "
                               "smooth Q.17 partner)."),
    "ladder": (cmd_ladder, "Ladder operators [H,A] = lambda A and the level-skipping chain structure."),
    "chain": (cmd_chain, "Dressing-chain factorization a_n a_n^+ = a_{n+1}^+ a_{n+1} + C_n."),
    "q17": (cmd_q17, "Q.17 rational potential: partner shifts, pole exponents, zero modes, smooth-case "
                     "spectrum."),
}


def _options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key = value file; command-line flags override it")
    p.add_argument("--potential", help="potential expression in x, e.g. 'a*x^2 + b/x^2'")
    p.add_argument("--param", action="append", help="parameter binding name=value (repeatable)")
    p.add_argument("--family", choices=NAMES, help="built-in potential family")
    p.add_argument("--potential2", help="second-axis potential expression")
    p.add_argument("--param2", action="append", help="second-axis parameter binding")
    p.add_argument("--family2", choices=NAMES, help="second-axis family")
    p.add_argument("--alpha2", type=float, help="alpha^2 of the Q.17 potential (negative: smooth case)")
    p.add_argument("--hbar", type=float, default=1.0)
    p.add_argument("--energies", help="start:stop:count, inclusive, linear")
    p.add_argument("--tol", type=float, help="main tolerance of the subcommand")
    p.add_argument("--grid", type=int, default=2000, help="number of grid nodes")
    p.add_argument("--xmin", type=float)
    p.add_argument("--xmax", type=float)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--branch", choices=("+", "-"), default="+",
                   help="Frobenius branch at an inverse-square wall")
    p.add_argument("--ratio", help="frequency ratio m:n")
    p.add_argument("--state", help="x,p or x1,p1,x2,p2")
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--samples", type=int, default=1000, help="rows kept from a trajectory")
    p.add_argument("--flight", action="store_true", help="also report the flight-time period")
    p.add_argument("--out", help="output file (default: standard output)")
    p.add_argument("--format", choices=("csv", "json"))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isolab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"isolab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _options()
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _validate(args) -> None:
    if args.tol is not None and not args.tol > 0:
        raise ConfigError("--tol must be positive")
    if args.grid < 64:
        raise ConfigError("--grid must be at least 64")
    if args.levels < 1 or args.levels > 20:
        raise ConfigError("--levels must be between 1 and 20")
    if args.samples < 1:
        raise ConfigError("--samples must be positive")
    if args.dt is not None and not args.dt > 0:
        raise ConfigError("--dt must be positive")
    if args.t_end is not None and not args.t_end > 0:
        raise ConfigError("--t-end must be positive")
    if not args.hbar > 0:
        raise ConfigError("--hbar must be positive")


def resolve(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, val in values.items():
            if key not in known or key in ("config", "help"):
                raise ConfigError(f"unknown config key {key!r}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = val.lower() in ("1", "true", "yes", "on")
            elif isinstance(action, argparse._AppendAction):
                defaults[key] = list(val)
            else:
                try:
                    defaults[key] = action.type(val) if action.type else val
                except ValueError:
                    raise ConfigError(f"config key {key!r}: bad value {val!r}") from None
                if action.choices and defaults[key] not in action.choices:
                    raise ConfigError(f"config key {key!r}: {val!r} is not one of {list(action.choices)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.format is None:
        args.format = "csv" if args.command in TABULAR else "json"
    _validate(args)
    return args


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _json(obj) -> str:
    """JSON with fixed key order and floats at 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(json.dumps(k) + ": " + _json(v) for k, v in obj.items()) + "}"
    if isinstance(obj, list):
        return "[" + ", ".join(_json(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(obj)


def _cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def render(args, report: Report) -> str:
    config = {k: v for k, v in sorted(vars(args).items())}
    meta = {"tool": "isolab", "version": __version__, "command": args.command,
            "config": _plain(config), "tolerances": _plain(report.tolerances)}
    if args.format == "json":
        data = dict(report.data)
        if report.table is not None:
            data["columns"], data["rows"] = report.table
        return _json({"meta": meta, "data": _plain(data)}) + "\n"
    buf = io.StringIO()
    buf.write("# " + _json(meta) + "\n")
    if report.table is not None:
        buf.write("# " + _json(_plain(report.data)) + "\n")
        cols, rows = report.table
    elif "rows" in report.data and "columns" in report.data:
        rest = {k: v for k, v in report.data.items() if k not in ("rows", "columns")}
        buf.write("# " + _json(_plain(rest)) + "\n")
        cols, rows = report.data["columns"], report.data["rows"]
    else:
        cols = ["key", "value"]
        rows = [[k, _json(_plain(v))] for k, v in report.data.items()]
    buf.write(",".join(cols) + "\n")
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return buf.getvalue()


def dispatch(args) -> str:
    handler = COMMANDS[args.command][0]
    return render(args, handler(args))


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = resolve(argv)
        text = dispatch(args)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    except (ConfigError, ParseError) as exc:
        print(f"isolab: configuration error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ConvergenceError, IsolabError) as exc:
        print(f"isolab: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"isolab: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
