"""Numerical lab for area-constrained Willmore-type surfaces in curved 3-manifolds."""

__version__ = "0.1.0"
