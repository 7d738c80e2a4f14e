"""Numerical laboratory for weighted Dirichlet eigenpairs on a dumbbell
domain: limit profiles at the tube junctions, channel mode algebra, Almgren
frequency diagnostics, and verification of the asymptotic normalization
cascade."""

__version__ = "0.1.0"
