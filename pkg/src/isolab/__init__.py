"""Numerical laboratory for isochronous potentials and 2D superintegrability."""

__version__ = "0.1.0"
