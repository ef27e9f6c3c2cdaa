"""Conforming triangular meshes: generation, storage, and geometric queries.

A :class:`Mesh` is immutable after construction.  Edges carry a global
orientation from the lower to the higher vertex index, so every quantity
attached to an edge is a pure function of the connectivity and survives a
save/load round trip.
"""

import math

import numpy as np

__all__ = [
    "Mesh",
    "MeshError",
    "generate_unit_square_mesh",
    "generate_disk_mesh",
    "save_mesh",
    "load_mesh",
    "PointLocator",
]

DISK_CENTER = (0.5, 0.5)
DISK_RADIUS = 0.5


class MeshError(ValueError):
    """Raised for invalid mesh data, generation failures, or bad mesh files."""


class Mesh:
    """Conforming triangulation of a simply connected planar domain.

    Attributes
    ----------
    vertices : (V, 2) float array
    triangles : (T, 3) int array, counterclockwise vertex triples
    edges : (E, 2) int array, each row (lo, hi) with lo < hi
    triangle_edges : (T, 3) int array, global edge index of the local edge
        opposite each local vertex
    triangle_edge_signs : (T, 3) int array, +1 where the counterclockwise
        traversal of the triangle runs lo -> hi along that edge
    boundary_edges : (B,) int array of edge indices on the boundary
    h_max : float, longest edge length
    """

    def __init__(self, vertices, triangles, validate: bool = True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (V, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (T, 3) array")
        if len(self.vertices) == 0:
            raise MeshError("no vertices")
        if len(self.triangles):
            out = ((self.triangles < 0)
                   | (self.triangles >= len(self.vertices))).any(axis=1)
            if out.any():
                t = int(np.flatnonzero(out)[0])
                raise MeshError(
                    f"triangle {t} references a vertex out of range")
        self._build_connectivity()
        self._build_geometry()
        if validate:
            self._validate()
        for arr in (self.vertices, self.triangles, self.edges,
                    self.triangle_edges, self.triangle_edge_signs,
                    self.boundary_edges, self.areas, self.edge_lengths,
                    self.edge_normals):
            arr.setflags(write=False)

    # -- construction ---------------------------------------------------

    def _build_connectivity(self):
        tris = self.triangles
        n_tri = len(tris)
        # local edge a is opposite local vertex a: (a+1, a+2) mod 3
        va = np.stack([tris[:, 1], tris[:, 2], tris[:, 0]], axis=1)
        vb = np.stack([tris[:, 2], tris[:, 0], tris[:, 1]], axis=1)
        lo = np.minimum(va, vb)
        hi = np.maximum(va, vb)
        pairs = np.stack([lo.ravel(), hi.ravel()], axis=1)
        self.edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        self.triangle_edges = inverse.reshape(n_tri, 3).astype(np.int64)
        self.triangle_edge_signs = np.where(va < vb, 1, -1).astype(np.int64)
        counts = np.bincount(self.triangle_edges.ravel(),
                             minlength=len(self.edges))
        self._edge_counts = counts
        self.boundary_edges = np.flatnonzero(counts == 1).astype(np.int64)

    def _build_geometry(self):
        p = self.vertices[self.triangles]           # (T, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        ev = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        self.edge_lengths = np.hypot(ev[:, 0], ev[:, 1])
        # global normal: the lo->hi tangent rotated clockwise
        self.edge_normals = (np.column_stack([ev[:, 1], -ev[:, 0]])
                             / self.edge_lengths[:, None])
        self.h_max = float(self.edge_lengths.max()) if len(self.edges) else 0.0

    # -- queries ----------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def boundary_outward_signs(self) -> np.ndarray:
        """Sign s per boundary edge so that s * edge_normal points outward."""
        signs = np.zeros(len(self.boundary_edges), dtype=np.int64)
        pos = {int(e): i for i, e in enumerate(self.boundary_edges)}
        mask = np.isin(self.triangle_edges, self.boundary_edges)
        for t, a in zip(*np.nonzero(mask)):
            signs[pos[int(self.triangle_edges[t, a])]] = \
                self.triangle_edge_signs[t, a]
        return signs

    def total_area(self) -> float:
        return float(self.areas.sum())

    # -- validation -------------------------------------------------------

    def _validate(self):
        bad = np.flatnonzero(self.areas <= 0.0)
        if len(bad):
            raise MeshError(
                f"triangle {bad[0]} has non-positive signed area "
                f"{self.areas[bad[0]]:.3e}")
        bad = np.flatnonzero(self._edge_counts > 2)
        if len(bad):
            raise MeshError(
                f"edge {bad[0]} is shared by {self._edge_counts[bad[0]]} "
                "triangles; mesh is not conforming")
        # interior edges must be traversed once in each direction
        sign_sum = np.zeros(self.n_edges, dtype=np.int64)
        np.add.at(sign_sum, self.triangle_edges.ravel(),
                  self.triangle_edge_signs.ravel())
        bad = np.flatnonzero((self._edge_counts == 2) & (sign_sum != 0))
        if len(bad):
            raise MeshError(
                f"edge {bad[0]} has inconsistent orientation between its two "
                "triangles (overlapping elements?)")
        euler = self.n_vertices - self.n_edges + self.n_triangles
        if euler != 1:
            raise MeshError(
                f"Euler relation violated: V - E + T = {euler}, expected 1")
        self._check_hanging_vertices()

    def _check_hanging_vertices(self):
        # a vertex strictly inside another triangle's edge breaks conformity
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        idx = np.flatnonzero(used)
        pts = self.vertices[idx]
        a = self.vertices[self.edges[:, 0]]
        b = self.vertices[self.edges[:, 1]]
        tol = 1e-12 * max(self.h_max, 1.0)
        locator = _SegmentGrid(a, b, self.h_max)
        for k, p in zip(idx, pts):
            for e in locator.candidates(p):
                if k == self.edges[e, 0] or k == self.edges[e, 1]:
                    continue
                pa = p - a[e]
                ba = b[e] - a[e]
                L2 = ba @ ba
                s = (pa @ ba) / L2
                if tol < s * math.sqrt(L2) and s < 1.0 - tol / math.sqrt(L2):
                    dist = abs(pa[0] * ba[1] - pa[1] * ba[0]) / math.sqrt(L2)
                    if dist < tol:
                        raise MeshError(
                            f"vertex {k} lies inside edge {e}; "
                            "mesh is not conforming")


class _SegmentGrid:
    """Uniform bucket grid over edge bounding boxes (conformity check only)."""

    def __init__(self, a, b, h):
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        self.origin = lo.min(axis=0)
        extent = np.maximum(hi.max(axis=0) - self.origin, 1e-30)
        self.n = max(1, int(math.sqrt(len(a))))
        self.cell = extent / self.n
        self.buckets = {}
        ilo = self._cell_of(lo)
        ihi = self._cell_of(hi)
        for e in range(len(a)):
            for i in range(ilo[e, 0], ihi[e, 0] + 1):
                for j in range(ilo[e, 1], ihi[e, 1] + 1):
                    self.buckets.setdefault((i, j), []).append(e)

    def _cell_of(self, p):
        c = np.floor((p - self.origin) / self.cell).astype(int)
        return np.clip(c, 0, self.n - 1)

    def candidates(self, p):
        i, j = self._cell_of(p[None, :])[0]
        return self.buckets.get((i, j), ())


# -- generators -------------------------------------------------------------

def generate_unit_square_mesh(M: int) -> Mesh:
    """Uniform triangulation of the unit square with M cells per side.

    Every grid cell is split along the same bottom-left to top-right
    diagonal, giving (M+1)^2 vertices and 2 M^2 triangles with
    h_max = sqrt(2)/M.
    """
    if M < 1:
        raise MeshError(f"subdivision count must be >= 1, got {M}")
    side = np.arange(M + 1) / M
    xx, yy = np.meshgrid(side, side, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    i, j = np.meshgrid(np.arange(M), np.arange(M), indexing="xy")
    v00 = (j * (M + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + M + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.empty((2 * M * M, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(vertices, triangles)


def generate_disk_mesh(M_boundary: int, smoothing_sweeps: int = 30) -> Mesh:
    """Unstructured triangulation of the disk of radius 0.5 about (0.5, 0.5).

    Places exactly ``M_boundary`` equally spaced vertices on the circle and
    fills the interior with concentric rings at the matching target edge
    length; Laplacian smoothing with Delaunay retriangulation evens out the
    element quality.  The boundary is the polygon through the circle points.
    """
    if M_boundary < 8:
        raise MeshError(f"need at least 8 boundary points, got {M_boundary}")
    from scipy.spatial import Delaunay

    cx, cy = DISK_CENTER
    radius = DISK_RADIUS
    n_rings = max(1, round(M_boundary / (2.0 * math.pi)))

    points = [np.array([[cx, cy]])]
    for k in range(1, n_rings + 1):
        r = radius * k / n_rings
        n_k = M_boundary if k == n_rings else max(6, round(M_boundary * k / n_rings))
        offset = 0.5 * ((n_rings - k) % 2)  # stagger alternate rings
        theta = 2.0 * math.pi * (np.arange(n_k) + offset) / n_k
        points.append(np.column_stack([cx + r * np.cos(theta),
                                       cy + r * np.sin(theta)]))
    pts = np.vstack(points)
    n_interior = len(pts) - M_boundary  # boundary ring appended last

    tri = Delaunay(pts)
    for _ in range(smoothing_sweeps):
        neighbor_sum = np.zeros_like(pts)
        neighbor_cnt = np.zeros(len(pts))
        simp = tri.simplices
        for a in range(3):
            for b in range(3):
                if a == b:
                    continue
                np.add.at(neighbor_sum, simp[:, a], pts[simp[:, b]])
                np.add.at(neighbor_cnt, simp[:, a], 1.0)
        moved = neighbor_sum / neighbor_cnt[:, None]
        moved[n_interior:] = pts[n_interior:]  # boundary ring stays put
        pts = moved
        tri = Delaunay(pts)

    triangles = tri.simplices.astype(np.int64)
    p = pts[triangles]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = cross < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    if np.any(np.abs(cross) < 2e-14):
        t = int(np.argmin(np.abs(cross)))
        raise MeshError(
            f"disk mesher produced a degenerate triangle {t} "
            f"(area {abs(cross[t]) / 2:.2e})")
    return Mesh(pts, triangles)


# -- plain-text storage -------------------------------------------------------

def save_mesh(mesh: Mesh, path) -> None:
    """Write a mesh as whitespace-separated text with a bit-exact round trip."""
    lines = ["#vertices"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append("#triangles")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append("#boundary")
    lines += [f"{mesh.edges[e, 0]} {mesh.edges[e, 1]}"
              for e in mesh.boundary_edges]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Read a mesh written by :func:`save_mesh`, validating all invariants."""
    sections = {"#vertices": [], "#triangles": [], "#boundary": []}
    current = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line not in sections:
                    raise MeshError(f"line {lineno}: unknown section {line!r}")
                current = line
                continue
            if current is None:
                raise MeshError(f"line {lineno}: data before any section header")
            sections[current].append((lineno, line))

    if not sections["#vertices"]:
        raise MeshError("no vertices")

    vertices = np.empty((len(sections["#vertices"]), 2))
    for i, (lineno, line) in enumerate(sections["#vertices"]):
        parts = line.split()
        if len(parts) != 2:
            raise MeshError(f"line {lineno}: vertex needs 2 coordinates")
        try:
            vertices[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshError(f"line {lineno}: bad vertex coordinate") from None
        if not np.isfinite(vertices[i]).all():
            raise MeshError(f"line {lineno}: non-finite vertex coordinate")

    triangles = np.empty((len(sections["#triangles"]), 3), dtype=np.int64)
    for i, (lineno, line) in enumerate(sections["#triangles"]):
        parts = line.split()
        if len(parts) != 3:
            raise MeshError(f"line {lineno}: triangle needs 3 vertex indices")
        try:
            triangles[i] = [int(p) for p in parts]
        except ValueError:
            raise MeshError(f"line {lineno}: bad vertex index") from None
        if triangles[i].min() < 0 or triangles[i].max() >= len(vertices):
            raise MeshError(
                f"line {lineno}: triangle {i} references vertex "
                f"{triangles[i].max()} out of range (have {len(vertices)})")

    mesh = Mesh(vertices, triangles)

    stored = set()
    for lineno, line in sections["#boundary"]:
        parts = line.split()
        if len(parts) != 2:
            raise MeshError(f"line {lineno}: boundary edge needs 2 indices")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise MeshError(f"line {lineno}: bad boundary index") from None
        stored.add((min(a, b), max(a, b)))
    derived = {tuple(mesh.edges[e]) for e in mesh.boundary_edges}
    if stored != derived:
        offending = sorted(stored ^ derived)[0]
        raise MeshError(
            f"stored boundary does not match mesh connectivity at edge "
            f"{offending}")
    return mesh


# -- point location -----------------------------------------------------------

class PointLocator:
    """Locate points in a mesh via a uniform bucket grid over triangles."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        p = mesh.vertices[mesh.triangles]
        lo = p.min(axis=1)
        hi = p.max(axis=1)
        self.origin = lo.min(axis=0)
        extent = np.maximum(hi.max(axis=0) - self.origin, 1e-30)
        self.n = max(1, int(math.sqrt(mesh.n_triangles)))
        self.cell = extent / self.n
        ilo = np.clip(((lo - self.origin) / self.cell).astype(int), 0, self.n - 1)
        ihi = np.clip(((hi - self.origin) / self.cell).astype(int), 0, self.n - 1)
        buckets = {}
        for t in range(mesh.n_triangles):
            for i in range(ilo[t, 0], ihi[t, 0] + 1):
                for j in range(ilo[t, 1], ihi[t, 1] + 1):
                    buckets.setdefault(i * self.n + j, []).append(t)
        self.buckets = {k: np.array(v) for k, v in buckets.items()}

    def locate(self, points: np.ndarray, tol: float = 1e-10):
        """Return (triangle indices, barycentric coords) for each point.

        Ties on shared edges resolve to the lowest triangle index.  Raises
        MeshError for points farther than ``tol`` outside every triangle.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = np.clip(((points - self.origin) / self.cell).astype(int),
                        0, self.n - 1)
        keys = cells[:, 0] * self.n + cells[:, 1]
        tri_idx = np.full(len(points), -1, dtype=np.int64)
        bary = np.zeros((len(points), 3))
        order = np.argsort(keys, kind="stable")
        verts = self.mesh.vertices
        tris = self.mesh.triangles
        areas2 = 2.0 * self.mesh.areas
        start = 0
        while start < len(order):
            stop = start
            key = keys[order[start]]
            while stop < len(order) and keys[order[stop]] == key:
                stop += 1
            sel = order[start:stop]
            cand = self.buckets.get(int(key))
            start = stop
            if cand is None:
                continue
            pts = points[sel]                              # (m, 2)
            p0 = verts[tris[cand, 0]]                      # (c, 2)
            p1 = verts[tris[cand, 1]]
            p2 = verts[tris[cand, 2]]
            d = pts[:, None, :]                            # (m, 1, 2)
            l0 = ((p1[:, 0] - d[..., 0]) * (p2[:, 1] - d[..., 1])
                  - (p2[:, 0] - d[..., 0]) * (p1[:, 1] - d[..., 1]))
            l1 = ((p2[:, 0] - d[..., 0]) * (p0[:, 1] - d[..., 1])
                  - (p0[:, 0] - d[..., 0]) * (p2[:, 1] - d[..., 1]))
            l2 = ((p0[:, 0] - d[..., 0]) * (p1[:, 1] - d[..., 1])
                  - (p1[:, 0] - d[..., 0]) * (p0[:, 1] - d[..., 1]))
            lam = np.stack([l0, l1, l2], axis=-1) / areas2[cand][None, :, None]
            inside = (lam >= -tol).all(axis=-1)            # (m, c)
            first = np.argmax(inside, axis=1)
            found = inside[np.arange(len(sel)), first]
            tri_idx[sel[found]] = cand[first[found]]
            bary[sel[found]] = lam[np.arange(len(sel)), first][found]
        missing = np.flatnonzero(tri_idx < 0)
        if len(missing):
            x, y = points[missing[0]]
            raise MeshError(f"point ({x:.6g}, {y:.6g}) is outside the mesh")
        return tri_idx, bary
