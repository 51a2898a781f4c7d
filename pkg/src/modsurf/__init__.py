"""Conformal moduli, uniformizing maps and reciprocality audits on metric grids."""

__version__ = "0.1.0"
