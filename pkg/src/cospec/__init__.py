"""Closed-orbit recurrence spectroscopy for hydrogen in a magnetic field.

Computes semiclassical eigenvalues of the scaling parameter and quantum
transition matrix elements purely from classical closed-orbit data:
closed-orbit search, cross-correlated recurrence signals, and a
filter-diagonalization harmonic-inversion engine.
"""

__version__ = "0.1.0"
