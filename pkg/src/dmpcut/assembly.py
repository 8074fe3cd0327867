"""Assemble and solve the discrete reaction-diffusion problem with Dirichlet data.

The weak problem is: find u with u = g on the boundary such that

    integral( grad(u).grad(v) + c*u*v ) = integral( f*v )

for all test functions v vanishing on the boundary, with c >= 0 and f <= 0.
Dirichlet conditions are imposed by symmetric elimination, which preserves the
SPD structure and keeps boundary traces exact.  A dense factorization oracle
is provided for verification on small problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, ConfigurationError, SignConditionError, SolverError
from .fespace import FEFunction, FESpace, quadrature
from .utils import sample_scalar

DENSE_ORACLE_MAX_DOFS = 500


def constant(value: float) -> Callable:
    """Coefficient function that is identically `value`."""
    v = float(value)
    return lambda x, y: np.full(np.shape(x), v) if np.ndim(x) else v


@dataclass
class ProblemSpec:
    """Reaction coefficient c >= 0, source density f <= 0, Dirichlet data g.

    The exponent p is only consulted by the p-Laplace pipeline; the linear
    problem here corresponds to p = 2.
    """

    c: Callable = field(default_factory=lambda: constant(0.0))
    f: Callable = field(default_factory=lambda: constant(0.0))
    g: Callable = field(default_factory=lambda: constant(0.0))
    p: float = 2.0


class SparseSystem:
    """Eliminated SPD system over the free dofs, plus the raw assembled operator."""

    def __init__(self, space, matrix, rhs, free_dofs, constrained_dofs,
                 constrained_values, full_matrix, full_load):
        self.space = space
        self.matrix = matrix                      # csr over free dofs
        self.rhs = rhs                            # free-dof load incl. boundary lift
        self.free_dofs = free_dofs
        self.constrained_dofs = constrained_dofs
        self.constrained_values = constrained_values
        self.full_matrix = full_matrix            # all dofs, before elimination
        self.full_load = full_load                # all-dof source vector (no lift)

    def expand(self, free_values) -> FEFunction:
        coeffs = np.zeros(self.space.dof_count)
        coeffs[self.free_dofs] = free_values
        coeffs[self.constrained_dofs] = self.constrained_values
        return FEFunction(self.space, coeffs)


def _check_signs(c_vals, f_vals, pts):
    bad_c = np.nonzero(c_vals < 0.0)[0]
    if bad_c.size:
        x, y = pts[bad_c[0]]
        raise SignConditionError(f"reaction coefficient c = {c_vals[bad_c[0]]:.6g} < 0 "
                                 f"at quadrature point ({x:.6g}, {y:.6g})")
    bad_f = np.nonzero(f_vals > 0.0)[0]
    if bad_f.size:
        x, y = pts[bad_f[0]]
        raise SignConditionError(f"source density f = {f_vals[bad_f[0]]:.6g} > 0 "
                                 f"at quadrature point ({x:.6g}, {y:.6g})")


def assemble_operator(space: FESpace, c, f, quad_degree: int,
                      diffusion_weight=None, check_signs=True):
    """Raw stiffness+mass matrix and load vector over all dofs.

    `diffusion_weight(tri_indices, bary, xy)` optionally scales the diffusive
    term per quadrature point (used by the reweighted p-Laplace iteration).
    """
    rule = quadrature(quad_degree)
    mesh = space.mesh
    T = mesh.num_triangles
    nl = space.local_dofs
    tri_idx = np.arange(T, dtype=np.int64)
    two_area = 2.0 * space.areas

    Ke = np.zeros((T, nl, nl))
    Fe = np.zeros((T, nl))
    verts = mesh.vertices[mesh.triangles]

    for q in range(len(rule.weights)):
        lam = rule.points[q]
        w = rule.weights[q]
        basis = space._basis_values(lam[None, :])[0]                    # (nl,)
        dlam = space._basis_bary_derivs(lam[None, :])[0]                # (nl, 3)
        gbasis = np.einsum("lk,tkd->tld", dlam, space.bary_gradients)   # (T, nl, 2)
        xy = np.einsum("k,tkd->td", lam, verts)                         # (T, 2)

        c_vals = sample_scalar(c, xy, name="reaction coefficient") if c is not None else None
        f_vals = sample_scalar(f, xy, name="source density") if f is not None else None
        if check_signs:
            _check_signs(c_vals if c_vals is not None else np.zeros(T),
                         f_vals if f_vals is not None else np.zeros(T), xy)

        wq = w * two_area                                               # (T,)
        diff = wq
        if diffusion_weight is not None:
            bary_pts = np.tile(lam, (T, 1))
            diff = wq * diffusion_weight(tri_idx, bary_pts, xy)
        Ke += diff[:, None, None] * np.einsum("tld,tmd->tlm", gbasis, gbasis)
        if c_vals is not None:
            Ke += (wq * c_vals)[:, None, None] * np.outer(basis, basis)[None, :, :]
        if f_vals is not None:
            Fe += (wq * f_vals)[:, None] * basis[None, :]

    rows = np.repeat(space.dof_map, nl, axis=1).ravel()
    cols = np.tile(space.dof_map, (1, nl)).ravel()
    full = sp.coo_matrix((Ke.ravel(), (rows, cols)),
                         shape=(space.dof_count, space.dof_count)).tocsr()
    load = np.zeros(space.dof_count)
    np.add.at(load, space.dof_map.ravel(), Fe.ravel())
    return full, load


def assemble(space: FESpace, spec: ProblemSpec, *, diffusion_weight=None,
             quad_degree=None) -> SparseSystem:
    """Assembled, symmetrically eliminated system for the given problem."""
    qd = quad_degree if quad_degree is not None else 2 * space.degree + 2
    full, load = assemble_operator(space, spec.c, spec.f, qd,
                                   diffusion_weight=diffusion_weight)

    bdofs = space.boundary_dofs()
    gvals = sample_scalar(spec.g, space.dof_coords[bdofs], name="boundary data")
    mask = np.ones(space.dof_count, dtype=bool)
    mask[bdofs] = False
    free = np.nonzero(mask)[0]

    A_ff = full[free][:, free].tocsr()
    rhs = load[free] - full[free][:, bdofs] @ gvals
    return SparseSystem(space, A_ff, rhs, free, bdofs, gvals, full, load)


def _jacobi_pcg(A, b, tol, max_iter):
    """Jacobi-preconditioned conjugate gradients; relative-residual stopping."""
    n = len(b)
    x = np.zeros(n)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0 or n == 0:
        return x
    diag = A.diagonal()
    r = b.copy()
    z = r / diag
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * norm_b:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            raise SolverError("conjugate gradients hit a non-positive curvature direction "
                              "(matrix not SPD?)")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = r / diag
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol * norm_b:
        return x
    raise SolverError(f"CG did not reach relative residual {tol:.3g} in {max_iter} iterations")


def solve(system: SparseSystem, tol: float) -> FEFunction:
    """Jacobi-PCG solution; boundary dofs carry the prescribed data exactly."""
    if not 0.0 < tol <= 1e-4:
        raise ConfigurationError("solver tolerance must lie in (0, 1e-4]")
    max_iter = 20 * system.space.dof_count
    free_vals = _jacobi_pcg(system.matrix, system.rhs, tol, max_iter)
    return system.expand(free_vals)


def dense_oracle(space: FESpace, spec: ProblemSpec) -> FEFunction:
    """Direct dense factorization of the same eliminated system (verification only)."""
    if space.dof_count > DENSE_ORACLE_MAX_DOFS:
        raise CapacityError(
            f"dense oracle refuses {space.dof_count} dofs (cap {DENSE_ORACLE_MAX_DOFS})"
        )
    system = assemble(space, spec)
    if len(system.free_dofs) == 0:
        return system.expand(np.zeros(0))
    free_vals = np.linalg.solve(system.matrix.toarray(), system.rhs)
    return system.expand(free_vals)


def solve_problem(space: FESpace, spec: ProblemSpec, tol: float = 1e-10) -> FEFunction:
    """Assemble-and-solve convenience wrapper."""
    return solve(assemble(space, spec), tol)
