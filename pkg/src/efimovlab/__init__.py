"""Spectral analysis of ``H = H0 - (T1 + T2)`` with partial integral operators.

Discretizes the model on breakpoint-aligned Gauss-Legendre grids, computes
the essential-spectrum edge by fiber sweeps, counts eigenvalues below it and
checks the finiteness and sufficiency criteria for infinitely many of them.
"""

__version__ = "0.1.0"
