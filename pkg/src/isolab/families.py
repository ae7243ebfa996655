"""Built-in potential families with their default parameters and boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import ConfigError
from .expr import Potential1D, parse


@dataclass(frozen=True)
class Family:
    name: str
    source: str
    defaults: Mapping[str, float]
    domain: tuple[float, float]
    box: tuple[float, float]


FAMILIES = {
    "harmonic": Family("harmonic", "w^2*x^2/2", {"w": 1.0}, (-math.inf, math.inf), (-10.0, 10.0)),
    "isotonic": Family("isotonic", "a*x^2 + b/x^2", {"a": 0.5, "b": 1.0}, (0.0, math.inf), (0.0, 12.0)),
    "quartic": Family("quartic", "k*x^4", {"k": 1.0}, (-math.inf, math.inf), (-6.0, 6.0)),
}
Q17_NAMES = ("q17", "q17-smooth")
NAMES = tuple(FAMILIES) + Q17_NAMES


def harmonic(omega: float = 1.0, hbar: float = 1.0) -> Potential1D:
    return family("harmonic", {"w": omega}, hbar=hbar)


def isotonic(a: float = 0.5, b: float = 1.0, hbar: float = 1.0) -> Potential1D:
    return family("isotonic", {"a": a, "b": b}, hbar=hbar)


def quartic(k: float = 1.0) -> Potential1D:
    return family("quartic", {"k": k})


def family(name: str, params: Optional[Mapping[str, float]] = None, hbar: float = 1.0,
           alpha_sq: Optional[float] = None) -> Potential1D:
    """Potential of a named family; unknown parameter names are rejected."""
    params = dict(params or {})
    if name in Q17_NAMES:
        from .dressing import q17_build
        if alpha_sq is None:
            alpha_sq = params.pop("alpha2", 1.0 if name == "q17" else -1.0)
        if params:
            raise ConfigError(f"family {name} takes no parameters besides alpha2 (got {sorted(params)})")
        if (name == "q17") != (alpha_sq > 0):
            raise ConfigError(f"family {name} needs alpha2 {'> 0' if name == 'q17' else '< 0'}")
        return q17_build(alpha_sq, hbar).potential
    try:
        fam = FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown family {name!r}; choose from {', '.join(NAMES)}") from None
    unknown = set(params) - set(fam.defaults)
    if unknown:
        raise ConfigError(f"family {name} has no parameter(s) {sorted(unknown)}")
    merged = {**fam.defaults, **params}
    return parse(fam.source, merged, domain=fam.domain, hbar=hbar)


def default_box(name: Optional[str], alpha_sq: Optional[float] = None) -> Optional[tuple[float, float]]:
    if name in FAMILIES:
        return FAMILIES[name].box
    if name == "q17-smooth":
        beta = math.sqrt(abs(alpha_sq if alpha_sq is not None else -1.0))
        return (-14.0 * beta, 14.0 * beta)
    if name == "q17":
        al = math.sqrt(alpha_sq if alpha_sq is not None else 1.0)
        return (al, al + 12.0 * al)
    return None
