"""Thermodynamic-limit Lanczos functions of extensive many-body systems.

Given a cumulant generating function F(t), the package computes the limiting
Lanczos functions alpha(s), beta^2(s) by three cross-validating routes
(coupled integral equations, Taylor series, Toda marching), the associated
equilibrium measure and spectral diagnostics, all checked against an exact
finite-N moment reference.
"""

from . import models, finite_ref, series, tl_solver, spectral

__version__ = "0.1.0"

__all__ = ["models", "finite_ref", "series", "tl_solver", "spectral", "__version__"]
