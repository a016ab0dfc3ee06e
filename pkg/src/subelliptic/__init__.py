"""Subellipticity certificates for L = d/dt + i (d phi/dt) d/dx with quasihomogeneous phi."""
from .kernels import BACKEND

__version__ = "0.1.0"
