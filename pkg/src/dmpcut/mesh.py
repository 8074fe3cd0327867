"""2D conforming triangulations of the unit square, including adversarial obtuse variants.

Three reproducible families are provided:

* ``structured``:  n x n grid of cells, each split along the (i,j)->(i+1,j+1)
  diagonal into two right triangles (all angles <= 90 degrees).
* ``perturbed``:   structured mesh whose interior vertices are jittered; the
  boundary stays exactly on the square so traces are unaffected.
* ``obtuse_band``: structured mesh with one interior row of vertices sheared
  sideways and optionally compressed downward, creating strongly obtuse
  triangles.  Obtuse meshes are the classical trigger for maximum-principle
  failures of piecewise-linear elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, MeshFormatError, MeshValidationError
from .utils import fmt17

KINDS = ("structured", "perturbed", "obtuse_band")

# side markers for boundary edges of the unit square
SIDE_BOTTOM, SIDE_RIGHT, SIDE_TOP, SIDE_LEFT = 0, 1, 2, 3

_AREA_REL_TOL = 1e-14


@dataclass(frozen=True)
class MeshFamily:
    """Parameters that reproducibly identify one generated mesh."""

    kind: str
    n: int
    perturbation: float = 0.0
    seed: int = 0


class Mesh:
    """Immutable conforming triangulation with boundary-edge markers.

    vertices:          (V, 2) float64 coordinates
    triangles:         (T, 3) vertex indices, counterclockwise
    boundary_edges:    (B, 2) vertex-index pairs, exactly the edges incident
                       to a single triangle
    boundary_markers:  (B,) integer markers (side ids for generated meshes)
    """

    def __init__(self, vertices, triangles, boundary_edges=None, boundary_markers=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshValidationError("vertices must be an (V, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshValidationError("triangles must be a (T, 3) array")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise MeshValidationError("triangle vertex index out of range")

        self._validate_areas()
        computed = self._boundary_from_incidence()
        if boundary_edges is None:
            self.boundary_edges = computed
            self.boundary_markers = np.zeros(len(computed), dtype=np.int64)
        else:
            given = np.ascontiguousarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
            if _edge_set(given) != _edge_set(computed):
                raise MeshValidationError(
                    "boundary edges do not match the edges incident to exactly one triangle"
                )
            self.boundary_edges = given
            if boundary_markers is None:
                self.boundary_markers = np.zeros(len(given), dtype=np.int64)
            else:
                self.boundary_markers = np.ascontiguousarray(boundary_markers, dtype=np.int64)
                if self.boundary_markers.shape != (len(given),):
                    raise MeshValidationError("one marker per boundary edge required")

        self._structured_n = None  # fast point-location hint, set by generate()
        self._areas = None

    # -- basic queries ----------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def areas(self):
        if self._areas is None:
            self._areas = self.signed_areas()
        return self._areas

    def edges(self):
        """All unique edges as sorted index pairs, lexicographically ordered."""
        e = np.sort(
            np.concatenate(
                [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
            ),
            axis=1,
        )
        return np.unique(e, axis=0)

    def boundary_vertices(self):
        """Sorted, deduplicated indices of all vertices on boundary edges."""
        return np.unique(self.boundary_edges)

    def max_interior_angle(self) -> float:
        p = self.vertices[self.triangles]
        worst = 0.0
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(a * b, axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            worst = max(worst, float(np.arccos(np.clip(cosang, -1.0, 1.0)).max()))
        return worst

    # -- validation -------------------------------------------------------

    def _validate_areas(self):
        if not np.all(np.isfinite(self.vertices)):
            raise MeshValidationError("non-finite vertex coordinate")
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        bbox_area = float(span[0] * span[1])
        if bbox_area <= 0.0:
            raise MeshValidationError("degenerate bounding box")
        bad = np.nonzero(self.signed_areas() <= _AREA_REL_TOL * bbox_area)[0]
        if bad.size:
            raise MeshValidationError(
                f"triangle {bad[0]} has non-positive area (vertices must be CCW)"
            )

    def _boundary_from_incidence(self):
        e = np.sort(
            np.concatenate(
                [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
            ),
            axis=1,
        )
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            i, j = uniq[np.argmax(counts > 2)]
            raise MeshValidationError(
                f"nonconforming mesh: edge ({i}, {j}) shared by {counts.max()} triangles"
            )
        return uniq[counts == 1]

    # -- point location ---------------------------------------------------

    def locate_points(self, xy):
        """Containing triangle and barycentric coordinates for each query point.

        Returns (tri (N,), bary (N, 3)).  Points marginally outside (roundoff)
        are snapped onto the nearest triangle in the barycentric sense.
        """
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if self._structured_n is not None:
            return self._locate_structured(xy)
        return self._locate_generic(xy)

    def _locate_structured(self, xy):
        n = self._structured_n
        ij = np.clip(np.floor(xy * n).astype(np.int64), 0, n - 1)
        local = xy * n - ij
        lower = local[:, 0] >= local[:, 1]  # cell diagonal (0,0)->(1,1)
        cell = ij[:, 1] * n + ij[:, 0]
        tri = 2 * cell + np.where(lower, 0, 1)
        p = self.vertices[self.triangles[tri]]
        bary = _barycentric(p, xy)
        return tri, bary

    def _locate_generic(self, xy):
        n = len(xy)
        tri = np.zeros(n, dtype=np.int64)
        bary = np.zeros((n, 3))
        best = np.full(n, -np.inf)
        p = self.vertices[self.triangles]
        chunk = max(1, int(2_000_000 / max(1, self.num_triangles)))
        for start in range(0, n, chunk):
            sl = slice(start, min(n, start + chunk))
            pts = xy[sl]
            # (T, k, 3) barycentric coordinates of every point in every triangle
            lam = _barycentric_all(p, pts)
            score = lam.min(axis=2)  # most-interior triangle wins
            t_best = score.argmax(axis=0)
            k = np.arange(pts.shape[0])
            tri[sl] = t_best
            bary[sl] = lam[t_best, k]
            best[sl] = score[t_best, k]
        if np.any(best < -1e-9):
            worst = xy[np.argmin(best)]
            raise MeshValidationError(
                f"point ({worst[0]:.6g}, {worst[1]:.6g}) lies outside the mesh"
            )
        np.clip(bary, 0.0, None, out=bary)
        bary /= bary.sum(axis=1, keepdims=True)
        return tri, bary

    # -- serialization ------------------------------------------------------

    def to_text(self) -> str:
        lines = ["mesh2d v1", f"vertices {self.num_vertices}"]
        lines.extend(f"{fmt17(x)} {fmt17(y)}" for x, y in self.vertices)
        lines.append(f"triangles {self.num_triangles}")
        lines.extend(f"{i} {j} {k}" for i, j, k in self.triangles)
        lines.append(f"boundary {len(self.boundary_edges)}")
        lines.extend(
            f"{i} {j} {m}" for (i, j), m in zip(self.boundary_edges, self.boundary_markers)
        )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Mesh":
        rows = []
        for ln, raw in enumerate(text.splitlines(), start=1):
            body = raw.split("#", 1)[0].strip()
            if body:
                rows.append((ln, body.split()))
        pos = 0

        def take(what, count=None):
            nonlocal pos
            if pos >= len(rows):
                raise MeshFormatError(f"line {rows[-1][0] if rows else 0}: unexpected end of file while reading {what}")
            ln, toks = rows[pos]
            pos += 1
            if count is not None and len(toks) != count:
                raise MeshFormatError(f"line {ln}: expected {count} fields for {what}, got {len(toks)}")
            return ln, toks

        ln, toks = take("header")
        if toks != ["mesh2d", "v1"]:
            raise MeshFormatError(f"line {ln}: expected header 'mesh2d v1'")

        def section(name):
            ln, toks = take(f"'{name}' section header", 2)
            if toks[0] != name:
                raise MeshFormatError(f"line {ln}: expected section '{name}', got '{toks[0]}'")
            try:
                n = int(toks[1])
            except ValueError:
                raise MeshFormatError(f"line {ln}: bad count in section '{name}'") from None
            if n < 0:
                raise MeshFormatError(f"line {ln}: negative count in section '{name}'")
            return n

        nv = section("vertices")
        verts = np.zeros((nv, 2))
        for r in range(nv):
            ln, toks = take("vertex coordinates", 2)
            try:
                verts[r] = [float(toks[0]), float(toks[1])]
            except ValueError:
                raise MeshFormatError(f"line {ln}: bad vertex coordinate") from None

        nt = section("triangles")
        tris = np.zeros((nt, 3), dtype=np.int64)
        for r in range(nt):
            ln, toks = take("triangle indices", 3)
            try:
                tris[r] = [int(t) for t in toks]
            except ValueError:
                raise MeshFormatError(f"line {ln}: bad triangle index") from None

        nb = section("boundary")
        edges = np.zeros((nb, 2), dtype=np.int64)
        marks = np.zeros(nb, dtype=np.int64)
        for r in range(nb):
            ln, toks = take("boundary edge", 3)
            try:
                edges[r] = [int(toks[0]), int(toks[1])]
                marks[r] = int(toks[2])
            except ValueError:
                raise MeshFormatError(f"line {ln}: bad boundary edge") from None
        if pos != len(rows):
            raise MeshFormatError(f"line {rows[pos][0]}: trailing content after boundary section")
        return cls(verts, tris, edges, marks)

    @classmethod
    def load(cls, path) -> "Mesh":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_text(fh.read())


def _edge_set(edges):
    return {tuple(sorted(map(int, e))) for e in edges}


def _barycentric(p, xy):
    """Barycentric coordinates of xy[k] w.r.t. triangle p[k] (k, 3, 2)."""
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    r = xy - p[:, 0]
    l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


def _barycentric_all(p, xy):
    """Barycentric coords of each point in each triangle: (T, k, 3)."""
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])[:, None]
    r = xy[None, :, :] - p[:, None, 0, :]
    l1 = (r[..., 0] * d2[:, None, 1] - r[..., 1] * d2[:, None, 0]) / det
    l2 = (d1[:, None, 0] * r[..., 1] - d1[:, None, 1] * r[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=2)


# -- generation ------------------------------------------------------------


def generate(family: MeshFamily) -> Mesh:
    """Build the mesh identified by `family` on the unit square.

    Equal families yield bit-identical meshes.  The obtuse_band construction
    guarantees at least one interior angle above pi/2 + 0.1.
    """
    if family.kind not in KINDS:
        raise ConfigurationError(f"unknown mesh kind '{family.kind}' (expected one of {KINDS})")
    if family.n < 1:
        raise ConfigurationError("mesh resolution n must be >= 1")
    if not (0.0 <= family.perturbation < 0.5):
        raise ConfigurationError("perturbation must lie in [0, 0.5)")
    if family.kind == "obtuse_band" and family.n < 2:
        raise ConfigurationError("obtuse_band needs n >= 2 (no interior vertex row at n = 1)")

    n = family.n
    verts, tris, edges, marks = _structured_grid(n)

    if family.kind == "perturbed" and family.perturbation > 0.0:
        rng = np.random.default_rng(family.seed)
        h = 1.0 / n
        interior = _interior_vertex_indices(n)
        verts[interior] += rng.uniform(-family.perturbation * h, family.perturbation * h,
                                       size=(len(interior), 2))
    elif family.kind == "obtuse_band":
        _shear_band(verts, n, family.perturbation, family.seed)

    mesh = Mesh(verts, tris, edges, marks)
    if family.kind == "structured":
        mesh._structured_n = n
    if family.kind == "obtuse_band" and mesh.max_interior_angle() <= np.pi / 2 + 0.1:
        raise MeshValidationError("obtuse_band construction failed to produce an obtuse angle")
    return mesh


def _structured_grid(n):
    idx = lambda i, j: j * (n + 1) + i
    xs = np.arange(n + 1) / n
    verts = np.stack(np.meshgrid(xs, xs, indexing="xy"), axis=-1).reshape(-1, 2)
    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10 = idx(i, j), idx(i + 1, j)
            v01, v11 = idx(i, j + 1), idx(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    edges, marks = [], []
    for i in range(n):
        edges.append((idx(i, 0), idx(i + 1, 0)))
        marks.append(SIDE_BOTTOM)
    for j in range(n):
        edges.append((idx(n, j), idx(n, j + 1)))
        marks.append(SIDE_RIGHT)
    for i in range(n):
        edges.append((idx(i, n), idx(i + 1, n)))
        marks.append(SIDE_TOP)
    for j in range(n):
        edges.append((idx(0, j), idx(0, j + 1)))
        marks.append(SIDE_LEFT)
    return verts, np.array(tris, dtype=np.int64), np.array(edges, dtype=np.int64), np.array(marks, dtype=np.int64)


def _interior_vertex_indices(n):
    ii, jj = np.meshgrid(np.arange(1, n), np.arange(1, n), indexing="xy")
    return (jj * (n + 1) + ii).ravel()


def _shear_band(verts, n, perturbation, seed):
    """Shift one interior row of vertices sideways (and down) in place.

    Boundary vertices are never moved, so the boundary trace stays the exact
    unit square and boundary vertex positions nest across resolutions.  The
    shear magnitude is kept in [0.3, 0.8] cells and the downward compression
    (2 * perturbation cells) is capped so every triangle keeps positive area.
    """
    rng = np.random.default_rng(seed)
    h = 1.0 / n
    row = int(rng.integers(1, n))  # interior vertex row
    sign = 1.0 if rng.random() < 0.5 else -1.0
    shear = rng.uniform(0.3, 0.8)
    jitter = rng.uniform(-0.05, 0.05, size=n - 1)
    # keep sigma + kappa < 1 so the triangles against the side walls stay valid
    kappa = min(2.0 * perturbation, 0.9 - (shear + 0.05))
    kappa = max(kappa, 0.0)
    for i in range(1, n):
        v = row * (n + 1) + i
        verts[v, 0] += sign * (shear + jitter[i - 1]) * h
        verts[v, 1] -= kappa * h


def boundary_vertices(mesh: Mesh):
    """Sorted, deduplicated indices of vertices on the boundary."""
    return mesh.boundary_vertices()


def load(path) -> Mesh:
    return Mesh.load(path)


def save(mesh: Mesh, path) -> None:
    mesh.save(path)
