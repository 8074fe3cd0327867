"""Lagrange P1/P2 spaces on triangles: dof maps, basis evaluation, quadrature.

Evaluation APIs are batched: `values_at(tri, bary)` takes an (N,) array of
triangle indices and an (N, 3) array of barycentric coordinates, which keeps
field evaluation and integration fully vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, MeshFormatError
from .mesh import Mesh
from .utils import fmt17, sample_scalar, sample_vector


# -- quadrature on the reference triangle (0,0), (1,0), (0,1) ----------------

@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights; weights sum to the reference area 1/2."""

    degree: int
    points: np.ndarray   # (nq, 3)
    weights: np.ndarray  # (nq,)


def _sym3(a):
    """The three cyclic placements of the barycentric pattern (a, b, b)."""
    b = (1.0 - a) / 2.0
    return [(a, b, b), (b, a, b), (b, b, a)]


def _sym6(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _table_rule(degree, groups):
    pts, wts = [], []
    for kind, w, args in groups:
        if kind == "centroid":
            new = [(1 / 3, 1 / 3, 1 / 3)]
        elif kind == "sym3":
            new = _sym3(*args)
        else:
            new = _sym6(*args)
        pts.extend(new)
        wts.extend([w] * len(new))
    points = np.array(pts)
    weights = 0.5 * np.array(wts)  # published weights sum to 1; reference area is 1/2
    return QuadratureRule(degree, points, weights)


def _collapsed_rule(degree):
    """Tensor Gauss-Legendre rule on the collapsed square; positive weights, any degree."""
    mx = (degree + 3) // 2
    my = (degree + 2) // 2
    tx, wx = np.polynomial.legendre.leggauss(mx)
    ty, wy = np.polynomial.legendre.leggauss(my)
    tx, wx = (tx + 1.0) / 2.0, wx / 2.0
    ty, wy = (ty + 1.0) / 2.0, wy / 2.0
    xi, eta = np.meshgrid(tx, ty, indexing="ij")
    x = xi.ravel()
    y = (eta * (1.0 - xi)).ravel()
    w = (np.outer(wx * (1.0 - tx), wy)).ravel()
    points = np.stack([1.0 - x - y, x, y], axis=1)
    return QuadratureRule(degree, points, w)


_RULES = {
    1: _table_rule(1, [("centroid", 1.0, ())]),
    2: _table_rule(2, [("sym3", 1 / 3, (2 / 3,))]),
    4: _table_rule(4, [
        ("sym3", 0.223381589678011, (0.108103018168070,)),
        ("sym3", 0.109951743655322, (0.816847572980459,)),
    ]),
    5: _table_rule(5, [
        ("centroid", 0.225, ()),
        ("sym3", 0.132394152788506, (0.059715871789770,)),
        ("sym3", 0.125939180544827, (0.797426985353087,)),
    ]),
    6: _table_rule(6, [
        ("sym3", 0.050844906370207, (0.873821971016996,)),
        ("sym3", 0.116786275726379, (0.501426509658179,)),
        ("sym6", 0.082851075618374, (0.636502499121399, 0.310352451033785)),
    ]),
}
_RULES[3] = QuadratureRule(3, _RULES[4].points, _RULES[4].weights)  # positive-weight stand-in


def quadrature(degree: int) -> QuadratureRule:
    """Rule exact for polynomials up to `degree` on the reference triangle."""
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= 10:
        raise ConfigurationError("quadrature degree must be an integer in [1, 10]")
    rule = _RULES.get(int(degree))
    if rule is None:
        rule = _collapsed_rule(int(degree))
    return rule


# -- basis functions ----------------------------------------------------------

def _p1_values(bary):
    return np.asarray(bary, dtype=float)


def _p1_bary_derivs(bary):
    n = len(bary)
    d = np.zeros((n, 3, 3))
    d[:, 0, 0] = d[:, 1, 1] = d[:, 2, 2] = 1.0
    return d


def _p2_values(bary):
    lam = np.asarray(bary, dtype=float)
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    return np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ], axis=1)


def _p2_bary_derivs(bary):
    lam = np.asarray(bary, dtype=float)
    n = len(lam)
    d = np.zeros((n, 6, 3))
    for i in range(3):
        d[:, i, i] = 4 * lam[:, i] - 1
    # edge bubbles 4*la*lb for (a, b) = (0,1), (1,2), (2,0)
    for k, (a, b) in enumerate([(0, 1), (1, 2), (2, 0)]):
        d[:, 3 + k, a] = 4 * lam[:, b]
        d[:, 3 + k, b] = 4 * lam[:, a]
    return d


_BASIS = {1: (_p1_values, _p1_bary_derivs, 3), 2: (_p2_values, _p2_bary_derivs, 6)}


# -- spaces and fields --------------------------------------------------------

class FESpace:
    """Scalar Lagrange space of degree 1 or 2 on a triangulation.

    Vector fields use m identical copies of the scalar space, one per
    component, sharing this dof map.
    """

    def __init__(self, mesh: Mesh, degree: int):
        if degree not in (1, 2):
            raise ConfigurationError("only degrees 1 and 2 are supported")
        self.mesh = mesh
        self.degree = int(degree)
        nv = mesh.num_vertices

        if degree == 1:
            self.dof_map = mesh.triangles.copy()
            self.dof_coords = mesh.vertices.copy()
        else:
            edges = mesh.edges()  # sorted pairs, lexicographic: deterministic ids
            edge_id = {tuple(e): nv + k for k, e in enumerate(map(tuple, edges))}
            tri = mesh.triangles
            mid = np.array([
                [edge_id[tuple(sorted((t[0], t[1])))],
                 edge_id[tuple(sorted((t[1], t[2])))],
                 edge_id[tuple(sorted((t[2], t[0])))]]
                for t in tri
            ], dtype=np.int64)
            self.dof_map = np.concatenate([tri, mid], axis=1)
            midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            self.dof_coords = np.concatenate([mesh.vertices, midpoints], axis=0)
            self._edge_id = edge_id

        self.dof_count = len(self.dof_coords)
        self._basis_values, self._basis_bary_derivs, self.local_dofs = _BASIS[degree]

        # per-triangle geometry: barycentric gradients and areas
        p = mesh.vertices[mesh.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        grad = np.empty((mesh.num_triangles, 3, 2))
        grad[:, 1, 0] = d2[:, 1] / det
        grad[:, 1, 1] = -d2[:, 0] / det
        grad[:, 2, 0] = -d1[:, 1] / det
        grad[:, 2, 1] = d1[:, 0] / det
        grad[:, 0] = -grad[:, 1] - grad[:, 2]
        self.bary_gradients = grad
        self.areas = 0.5 * det

    def boundary_dofs(self):
        """Sorted dof indices on the boundary (vertices, plus midpoints for P2)."""
        bverts = self.mesh.boundary_vertices()
        if self.degree == 1:
            return bverts
        mids = [self._edge_id[tuple(sorted(map(int, e)))] for e in self.mesh.boundary_edges]
        return np.sort(np.concatenate([bverts, np.array(mids, dtype=np.int64)]))

    def boundary_edge_dofs(self):
        """Per boundary edge, the dofs of its trace: (i, j) for P1, (i, j, mid) for P2."""
        out = []
        for e in self.mesh.boundary_edges:
            i, j = int(e[0]), int(e[1])
            if self.degree == 1:
                out.append((i, j))
            else:
                out.append((i, j, self._edge_id[tuple(sorted((i, j)))]))
        return out

    def physical_points(self, tri, bary):
        """Map (triangle, barycentric) pairs to physical coordinates."""
        p = self.mesh.vertices[self.mesh.triangles[tri]]
        return np.einsum("nk,nkd->nd", bary, p)


class FEFunction:
    """Coefficient vector over an FESpace; scalar (m=1) or 2-vector valued."""

    def __init__(self, space: FESpace, coefficients):
        coeffs = np.asarray(coefficients, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if coeffs.shape[0] != space.dof_count or coeffs.shape[1] not in (1, 2):
            raise DataError(
                f"coefficients must be ({space.dof_count},) or ({space.dof_count}, m<=2)"
            )
        if not np.all(np.isfinite(coeffs)):
            raise DataError("non-finite coefficient")
        self.space = space
        self.coefficients = coeffs

    @property
    def m(self) -> int:
        return self.coefficients.shape[1]

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def copy_with(self, coefficients) -> "FEFunction":
        return FEFunction(self.space, coefficients)

    # -- batched evaluation ------------------------------------------------

    def values_at(self, tri, bary):
        """(N,) for scalar fields, (N, m) for vector fields."""
        tri = np.asarray(tri, dtype=np.int64)
        bary = np.atleast_2d(bary)
        basis = self.space._basis_values(bary)                     # (N, nl)
        coeffs = self.coefficients[self.space.dof_map[tri]]        # (N, nl, m)
        vals = np.einsum("nl,nlm->nm", basis, coeffs)
        return vals[:, 0] if self.m == 1 else vals

    def gradients_at(self, tri, bary):
        """(N, 2) for scalar fields, (N, m, 2) for vector fields."""
        tri = np.asarray(tri, dtype=np.int64)
        bary = np.atleast_2d(bary)
        dlam = self.space._basis_bary_derivs(bary)                 # (N, nl, 3)
        glam = self.space.bary_gradients[tri]                      # (N, 3, 2)
        gbasis = np.einsum("nlk,nkd->nld", dlam, glam)             # (N, nl, 2)
        coeffs = self.coefficients[self.space.dof_map[tri]]        # (N, nl, m)
        grads = np.einsum("nlm,nld->nmd", coeffs, gbasis)
        return grads[:, 0, :] if self.m == 1 else grads

    def eval_at_points(self, xy):
        tri, bary = self.mesh.locate_points(xy)
        return self.values_at(tri, bary)

    def gradients_at_points(self, xy):
        tri, bary = self.mesh.locate_points(xy)
        return self.gradients_at(tri, bary)

    # -- serialization -------------------------------------------------------

    def to_text(self) -> str:
        lines = ["fef v1", str(self.space.degree), str(self.m)]
        for row in self.coefficients:
            lines.append(" ".join(fmt17(v) for v in row))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, space: FESpace, path) -> "FEFunction":
        with open(path, "r", encoding="ascii") as fh:
            rows = []
            for ln, raw in enumerate(fh.read().splitlines(), start=1):
                body = raw.split("#", 1)[0].strip()
                if body:
                    rows.append((ln, body))
        if not rows or rows[0][1] != "fef v1":
            raise MeshFormatError("line 1: expected header 'fef v1'")
        if len(rows) < 3:
            raise MeshFormatError("unexpected end of file in field header")
        try:
            degree = int(rows[1][1])
            m = int(rows[2][1])
        except ValueError:
            raise MeshFormatError(f"line {rows[1][0]}: bad degree/components header") from None
        if degree != space.degree:
            raise MeshFormatError(f"field degree {degree} does not match space degree {space.degree}")
        if m not in (1, 2):
            raise MeshFormatError(f"unsupported component count {m}")
        data = rows[3:]
        if len(data) != space.dof_count:
            raise MeshFormatError(
                f"expected {space.dof_count} coefficient lines, found {len(data)}"
            )
        coeffs = np.zeros((space.dof_count, m))
        for r, (ln, body) in enumerate(data):
            toks = body.split()
            if len(toks) != m:
                raise MeshFormatError(f"line {ln}: expected {m} values")
            try:
                coeffs[r] = [float(t) for t in toks]
            except ValueError:
                raise MeshFormatError(f"line {ln}: bad coefficient") from None
        return cls(space, coeffs if m > 1 else coeffs[:, 0])


# -- module-level operations ---------------------------------------------------

def _check_bary(barycentric):
    bary = np.asarray(barycentric, dtype=float)
    if bary.shape != (3,) or np.any(bary < -1e-12) or abs(bary.sum() - 1.0) > 1e-12:
        raise ConfigurationError("barycentric coordinates must be nonnegative and sum to 1")
    return bary


def eval(f: FEFunction, triangle: int, barycentric):  # noqa: A001 - domain term
    """Value of the field at one point given by (triangle, barycentric coords)."""
    if not 0 <= triangle < f.mesh.num_triangles:
        raise ConfigurationError(f"triangle index {triangle} out of range")
    bary = _check_bary(barycentric)
    out = f.values_at(np.array([triangle]), bary[None, :])
    return float(out[0]) if f.m == 1 else out[0]


def eval_gradient(f: FEFunction, triangle: int, barycentric):
    """Spatial gradient at one point: (2,) for scalar fields, (m, 2) otherwise."""
    if not 0 <= triangle < f.mesh.num_triangles:
        raise ConfigurationError(f"triangle index {triangle} out of range")
    bary = _check_bary(barycentric)
    out = f.gradients_at(np.array([triangle]), bary[None, :])
    return out[0]


def interpolate(space: FESpace, g, m: int = 1) -> FEFunction:
    """Nodal interpolant: coefficients are g evaluated at the dof coordinates."""
    if m == 1:
        vals = sample_scalar(g, space.dof_coords, name="interpolation data")
    elif m == 2:
        vals = sample_vector(g, space.dof_coords, 2, name="interpolation data")
    else:
        raise ConfigurationError("only m in {1, 2} supported")
    return FEFunction(space, vals)
