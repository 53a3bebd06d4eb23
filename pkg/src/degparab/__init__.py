"""Fully implicit Newton-GMRES-multigrid solvers for degenerate parabolic problems.

Modules
-------
linalg      banded matrices, dense LU and GMRES
multigrid   Galerkin V-cycles and smoothers
newton      Newton iteration with Krylov inner solves
porous      porous-medium type equation and Barenblatt reference solutions
sulfation   two-field marble sulfation model on staggered grids
harness     experiment configuration, studies and CLI
"""

from .records import RunRecord

__version__ = "0.1.0"
