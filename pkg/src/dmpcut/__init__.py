"""Enforce discrete maximum principles by an a-posteriori cutoff.

Solve scalar reaction-diffusion, vector Laplace, and p-Laplace model problems
with conforming P1/P2 elements, truncate (or convex-project) the discrete
solution so it satisfies the discrete maximum principle, and certify that the
post-process never increases the natural energy-norm error.
"""

from .mesh import Mesh, MeshFamily, generate
from .fespace import FESpace, FEFunction, interpolate, quadrature

__all__ = [
    "Mesh", "MeshFamily", "generate",
    "FESpace", "FEFunction", "interpolate", "quadrature",
]

__version__ = "0.1.0"
