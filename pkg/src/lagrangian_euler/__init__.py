"""Incompressible Euler in the Lagrangian gauge on the periodic box.

Submodules:

fields      grid fields, spectral calculus, form algebra, snapshots
norms       weighted Sobolev norms and the small-displacement ball
elliptic    the elliptic operators and the Neumann-series velocity solver
dynamics    RK4 time stepping, diagnostics, re-labelling, flow maps, symmetries
reference   perturbations around a prescribed reference flow
selfsim     certificate checkers for self-similar flows
specfun     linearly independent replacement for x^(alpha m + n)
cli         command-line entry point
"""

from ._kernels import HAS_NUMBA

__version__ = "0.1.0"

__all__ = ["HAS_NUMBA", "__version__"]
