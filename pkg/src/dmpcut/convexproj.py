"""Vector-valued post-process: convex hull of boundary values and closest-point projection.

For a 2-vector P1 field the image of the continuous boundary trace is exactly
the polygon spanned by the boundary vertex values (edge traces are straight
segments), so the hull of the vertex values is the exact hull of the trace.
The projected field Pi_K(U) satisfies the discrete convex hull property by
construction and, since the closest-point projection onto a convex set is
1-Lipschitz, never has a larger Dirichlet energy than U.

Degenerate hulls collapse to segment or point form; degree-2 vector fields are
rejected because their boundary trace is curved and the vertex hull would be
silently inexact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UnsupportedFieldError
from .fespace import FEFunction, FESpace, quadrature
from .cutoff import Decomposition, _rule_on_triangles, _uniform_children

FORMS = ("point", "segment", "polygon")

# feature codes returned by the classifying projection
_INSIDE, _EDGE, _VERTEX = 0, 1, 2


@dataclass(frozen=True)
class ConvexRegion:
    """Convex hull as an ordered CCW vertex list, with degenerate forms."""

    form: str
    vertices: np.ndarray  # (k, 2); k = 1 (point), 2 (segment), >= 3 (polygon)

    @property
    def diameter(self) -> float:
        if len(self.vertices) == 1:
            return 0.0
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diff ** 2).sum(axis=2)).max())

    def contains(self, points, tol: float = 0.0):
        """Boolean mask: which points lie in the region (within tol of it)."""
        pts = np.atleast_2d(points)
        if self.form == "point":
            return np.linalg.norm(pts - self.vertices[0], axis=1) <= tol
        if self.form == "segment":
            proj, _, _ = _project_classify(self, pts)
            return np.linalg.norm(pts - proj, axis=1) <= tol
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        edge = b - a
        rel = pts[:, None, :] - a[None, :, :]
        cross = edge[None, :, 0] * rel[:, :, 1] - edge[None, :, 1] * rel[:, :, 0]
        return np.all(cross >= -tol * max(1.0, self.diameter), axis=1)


def _hull_ccw(points):
    """Monotone-chain convex hull; collinear points are dropped.

    The collinearity tolerance is 1e-12 relative to the point-set diameter, so
    nearly-flat point sets collapse to 2 (segment) or 1 (point) hull vertices.
    """
    pts = np.unique(np.atleast_2d(points), axis=0)  # lexicographic sort included
    if len(pts) == 1:
        return pts
    span = pts.max(axis=0) - pts.min(axis=0)
    diam = float(np.hypot(span[0], span[1]))
    if diam == 0.0:
        return pts[:1]
    tol = 1e-12 * diam * diam

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                cross = ((out[-1][0] - out[-2][0]) * (p[1] - out[-2][1])
                         - (out[-1][1] - out[-2][1]) * (p[0] - out[-2][0]))
                if cross <= tol:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    return hull if len(hull) >= 1 else pts[:1]


def boundary_hull(U: FEFunction, include_origin: bool = False) -> ConvexRegion:
    """Convex hull of the boundary-vertex values of a P1 2-vector field.

    With `include_origin` the origin joins the generating set, which makes the
    projection norm-decreasing (needed when a reactive term is present).
    """
    if U.m != 2:
        raise UnsupportedFieldError("boundary_hull needs a 2-vector field")
    if U.space.degree != 1:
        raise UnsupportedFieldError(
            "degree-2 vector fields are unsupported: the boundary trace is curved "
            "and the vertex hull would be inexact"
        )
    bverts = U.mesh.boundary_vertices()
    if len(bverts) == 0:
        raise ConfigurationError("mesh has no boundary")
    values = U.coefficients[bverts]
    if include_origin:
        values = np.concatenate([values, np.zeros((1, 2))], axis=0)
    hull = _hull_ccw(values)
    form = "point" if len(hull) == 1 else ("segment" if len(hull) == 2 else "polygon")
    return ConvexRegion(form, hull)


def _project_classify(region: ConvexRegion, points):
    """Projection plus feature classification for chain-rule gradients.

    Returns (proj (N,2), kind (N,), edge_dir (N,2)) where kind is 0 when the
    point keeps its value (inside), 1 when it lands on an edge interior whose
    unit direction is edge_dir, and 2 when it lands on a hull vertex.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    verts = region.vertices
    keep_tol = 1e-14 * max(1.0, region.diameter)

    if region.form == "point":
        proj = np.tile(verts[0], (n, 1))
        return proj, np.full(n, _VERTEX), np.zeros((n, 2))

    a = verts
    b = verts[1:2] if region.form == "segment" else np.roll(verts, -1, axis=0)
    if region.form == "segment":
        a = verts[0:1]
    edge = b - a                                            # (E, 2)
    elen2 = np.sum(edge * edge, axis=1)
    rel = pts[:, None, :] - a[None, :, :]                   # (N, E, 2)
    t = np.clip(np.einsum("ned,ed->ne", rel, edge) / elen2, 0.0, 1.0)
    cand = a[None, :, :] + t[:, :, None] * edge[None, :, :]
    dist2 = np.sum((pts[:, None, :] - cand) ** 2, axis=2)
    best = dist2.argmin(axis=1)
    rows = np.arange(n)
    proj = cand[rows, best]
    t_best = t[rows, best]

    kind = np.where((t_best <= 0.0) | (t_best >= 1.0), _VERTEX, _EDGE)
    edge_dir = edge[best] / np.sqrt(elen2[best])[:, None]

    dist = np.sqrt(dist2[rows, best])
    unchanged = dist <= keep_tol
    if region.form == "polygon":
        cross = edge[None, :, 0] * rel[:, :, 1] - edge[None, :, 1] * rel[:, :, 0]
        unchanged |= np.all(cross >= 0.0, axis=1)
    if region.form == "segment":
        # values exactly on the segment keep their (tangential) gradient
        kind = np.where(unchanged, _EDGE, kind)
        proj = np.where(unchanged[:, None], pts, proj)
        return proj, kind, edge_dir
    proj = np.where(unchanged[:, None], pts, proj)
    kind = np.where(unchanged, _INSIDE, kind)
    return proj, kind, edge_dir


def project(region: ConvexRegion, point):
    """Closest point of the region; total and idempotent.

    Interior points map to themselves (bitwise), exterior points to the foot
    on the nearest edge or to the nearest hull vertex.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    proj, _, _ = _project_classify(region, pts)
    return proj[0] if single else proj


class ProjectedField:
    """Lazily evaluated composition Pi_K(U) of a 2-vector field with a projection."""

    def __init__(self, base: FEFunction, region: ConvexRegion):
        if base.m != 2:
            raise UnsupportedFieldError("projected fields require a 2-vector base")
        self.base = base
        self.region = region

    @property
    def space(self) -> FESpace:
        return self.base.space

    @property
    def mesh(self):
        return self.base.mesh

    @property
    def m(self) -> int:
        return 2

    def values_at(self, tri, bary):
        proj, _, _ = _project_classify(self.region, self.base.values_at(tri, bary))
        return proj

    def gradients_at(self, tri, bary):
        """Chain rule: identity inside, tangential part on an edge, zero at a vertex."""
        vals = self.base.values_at(tri, bary)
        grads = self.base.gradients_at(tri, bary)             # (N, 2, 2)
        _, kind, edge_dir = _project_classify(self.region, vals)
        out = grads.copy()
        on_edge = kind == _EDGE
        if np.any(on_edge):
            d = edge_dir[on_edge]                              # (k, 2)
            comp = np.einsum("km,kmd->kd", d, grads[on_edge])  # tangential component
            out[on_edge] = d[:, :, None] * comp[:, None, :]
        out[kind == _VERTEX] = 0.0
        return out

    def eval_at_points(self, xy):
        tri, bary = self.mesh.locate_points(xy)
        return self.values_at(tri, bary)


def make_projected(U: FEFunction, include_origin: bool = False) -> ProjectedField:
    """Project U pointwise onto the hull of its boundary values."""
    return ProjectedField(U, boundary_hull(U, include_origin=include_origin))


def projected_decomposition(field: ProjectedField, depth: int = 5,
                            rule_degree: int = 6) -> Decomposition:
    """Quadrature resolving the projection locus.

    A P1 triangle whose three value-space corners lie in the region maps
    entirely inside it (its image is their convex hull), so the projection is
    the identity there and a single-level rule is exact; all other triangles
    are uniformly subdivided.
    """
    if not 2 <= depth <= 10:
        raise ConfigurationError("subdivision depth must lie in [2, 10]")
    space = field.space
    mesh = space.mesh
    rule = quadrature(rule_degree)
    corner_vals = field.base.coefficients[mesh.triangles]      # (T, 3, 2)
    inside = field.region.contains(corner_vals.reshape(-1, 2)).reshape(-1, 3).all(axis=1)
    plain = np.nonzero(inside)[0]
    active = np.nonzero(~inside)[0]
    parts = [_rule_on_triangles(rule, plain, space.areas[plain])]
    if active.size:
        children = _uniform_children(depth)
        sub_bary = np.einsum("qk,skj->sqj", rule.points, children).reshape(-1, 3)
        sub_w = np.tile(rule.weights, len(children)) * (4.0 ** -depth)
        tri = np.repeat(active, len(sub_bary))
        bary = np.tile(sub_bary, (len(active), 1))
        weights = (2.0 * space.areas[active][:, None] * sub_w[None, :]).ravel()
        parts.append((tri, bary, weights))
    return Decomposition(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
    )


def _proj_kind_values(field, decomp, kind):
    if kind == "dirichlet_energy":
        g = field.gradients_at(decomp.tri, decomp.bary)
        return np.sum(g * g, axis=(1, 2))
    if kind == "l2_sq":
        v = field.values_at(decomp.tri, decomp.bary)
        return np.sum(v * v, axis=1)
    raise ConfigurationError(f"unknown integrand kind '{kind}'")


def integrate_projected(field: ProjectedField, kind: str, *, depth: int = 5,
                        with_estimate: bool = False):
    """Integral of |grad Pi_K(U)|^2 or |Pi_K(U)|^2 with a two-level error estimate."""
    decomp = projected_decomposition(field, depth=depth)
    value = decomp.integrate(_proj_kind_values(field, decomp, kind))
    if not with_estimate:
        return value
    coarse = projected_decomposition(field, depth=depth - 1)
    value_coarse = coarse.integrate(_proj_kind_values(field, coarse, kind))
    return value, abs(value - value_coarse)


def integrate_projected_pair(field: ProjectedField, kind: str, *, depth: int = 5):
    """Projected and raw integrals on one shared decomposition (exact ordering)."""
    decomp = projected_decomposition(field, depth=depth)
    proj_value = decomp.integrate(_proj_kind_values(field, decomp, kind))
    base_value = decomp.integrate(_proj_kind_values(field.base, decomp, kind))
    coarse = projected_decomposition(field, depth=depth - 1)
    proj_coarse = coarse.integrate(_proj_kind_values(field, coarse, kind))
    return proj_value, base_value, abs(proj_value - proj_coarse)
