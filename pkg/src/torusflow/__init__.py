"""Simulator and verification harness for decay of periodic viscous flows.

Subpackages:
    spectral      periodic-box geometry, Fourier operators, Leray projection
    cns           compressible (barotropic) Navier-Stokes time integration
    ins           inhomogeneous incompressible Navier-Stokes time integration
    linear        closed-form linearized mode theory (decay-rate oracle)
    diagnostics   energy/flux functionals, time series, exponential fits
    inequalities  Poincare/Gagliardo-Nirenberg/energy-equivalence witnesses
    harness       run configuration, scenario presets, sweeps, reports
"""

from .spectral import TorusGrid, ScalarField, VectorField, make_grid

__all__ = ["TorusGrid", "ScalarField", "VectorField", "make_grid"]

__version__ = "0.1.0"
