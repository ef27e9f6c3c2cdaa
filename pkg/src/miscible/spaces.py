"""Discrete spaces, degree-of-freedom maps, fields, and projections.

Three families are provided:

* continuous piecewise-linear scalars (concentration),
* discontinuous elementwise polynomials of degree 0 and 1 (pressure and
  diagnostics), the degree-1 variant carrying the global zero-mean constraint,
* the degree-1 Raviart-Thomas H(div) space for the Darcy velocity, with two
  normal moments per edge and two interior moments per triangle.

Velocity degrees of freedom are global functionals: coefficient ``e`` is the
signed flux ∫_e u·n_e ds, coefficient ``n_edges + e`` the first normal moment
∫_e u·n_e (s - 1/2) ds with s running from the lower- to the higher-indexed
vertex, and the trailing block holds elementwise mean moments.  Because every
functional is defined through the global edge orientation, fields survive
mesh save/load round trips unchanged.
"""

import numpy as np

from .mesh import Mesh, MeshError, PointLocator
from .quadrature import TriangleRule, edge_rule, triangle_rule

__all__ = [
    "DofMapP1", "DofMapP0", "DofMapP1dc", "DofMapHdiv",
    "FieldP1", "FieldP0", "FieldP1dc", "FieldHdiv",
    "p1_gradients",
    "interpolate_p1", "interpolate_hdiv",
    "l2_project_p0", "l2_project_p1dc", "elliptic_project_p1", "hdiv_project",
]

_N_MONO = 8  # monomial vector fields spanning the local degree-1 RT space


def p1_gradients(mesh: Mesh) -> np.ndarray:
    """Constant gradients of the three barycentric basis functions, (T, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    out = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        d = p[:, (i + 1) % 3] - p[:, (i + 2) % 3]
        out[:, i, 0] = d[:, 1]
        out[:, i, 1] = -d[:, 0]
    out /= (2.0 * mesh.areas)[:, None, None]
    return out


# -- dof maps -----------------------------------------------------------------

class DofMapP1:
    """Vertex dofs of the continuous piecewise-linear space."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.n_dofs = mesh.n_vertices


class DofMapP0:
    """One dof per triangle; ``zero_mean`` marks the mean-free subspace."""

    def __init__(self, mesh: Mesh, zero_mean: bool = False):
        self.mesh = mesh
        self.zero_mean = zero_mean
        self.n_dofs = mesh.n_triangles


class DofMapP1dc:
    """Discontinuous linears: dof 3*t + i is the value at vertex i of triangle t."""

    def __init__(self, mesh: Mesh, zero_mean: bool = False):
        self.mesh = mesh
        self.zero_mean = zero_mean
        self.n_dofs = 3 * mesh.n_triangles

    def integral_vector(self) -> np.ndarray:
        """Weights m with m·coeffs = ∫ field dx (|T|/3 per local vertex)."""
        return np.repeat(self.mesh.areas / 3.0, 3)


def _mono_values(xi: np.ndarray) -> np.ndarray:
    """Monomial vector fields at scaled points xi (..., 2) -> (..., 8, 2)."""
    X = xi[..., 0]
    Y = xi[..., 1]
    O = np.ones_like(X)
    Z = np.zeros_like(X)
    comps = [
        (O, Z), (X, Z), (Y, Z),
        (Z, O), (Z, X), (Z, Y),
        (X * X, X * Y), (X * Y, Y * Y),
    ]
    return np.stack([np.stack(c, axis=-1) for c in comps], axis=-2)


class DofMapHdiv:
    """Degree-1 Raviart-Thomas dofs with globally oriented functionals.

    Layout: ``[0, E)`` edge fluxes, ``[E, 2E)`` first edge moments,
    ``[2E, 2E + 2T)`` interleaved elementwise mean moments (x then y).
    The dual basis is constructed per element by inverting the 8x8 matrix of
    dof functionals applied to centered, scaled monomial fields, which keeps
    the local conditioning mesh-independent and bakes every orientation sign
    into the basis itself.
    """

    def __init__(self, mesh: Mesh, rule: TriangleRule = None,
                 edge_points: int = 3):
        self.mesh = mesh
        E, T = mesh.n_edges, mesh.n_triangles
        self.n_dofs = 2 * E + 2 * T
        self.boundary_dofs = np.concatenate(
            [mesh.boundary_edges, E + mesh.boundary_edges])
        self.rule = rule or triangle_rule(5)
        self.edge_points = edge_points

        tri_pts = mesh.vertices[mesh.triangles]
        self.centers = tri_pts.mean(axis=1)
        self.scales = np.sqrt(mesh.areas)

        self.local_dofs = np.empty((T, 8), dtype=np.int64)
        for a in range(3):
            self.local_dofs[:, a] = mesh.triangle_edges[:, a]
            self.local_dofs[:, 3 + a] = E + mesh.triangle_edges[:, a]
        self.local_dofs[:, 6] = 2 * E + 2 * np.arange(T)
        self.local_dofs[:, 7] = 2 * E + 2 * np.arange(T) + 1

        self._build_dual_basis()

    def _build_dual_basis(self):
        mesh = self.mesh
        T = mesh.n_triangles
        s_q, s_w = edge_rule(self.edge_points)
        A = np.empty((T, 8, _N_MONO))
        for a in range(3):
            e = mesh.triangle_edges[:, a]
            lo = mesh.vertices[mesh.edges[e, 0]]
            hi = mesh.vertices[mesh.edges[e, 1]]
            nrm = mesh.edge_normals[e]
            pts = lo[:, None, :] + s_q[None, :, None] * (hi - lo)[:, None, :]
            xi = (pts - self.centers[:, None, :]) / self.scales[:, None, None]
            mvn = np.einsum("tqmd,td->tqm", _mono_values(xi), nrm)
            # rows are length-normalized; true dofs carry the factor L
            A[:, a, :] = np.einsum("q,tqm->tm", s_w, mvn)
            A[:, 3 + a, :] = np.einsum("q,tqm->tm", s_w * (s_q - 0.5), mvn)
        qp = self.rule.physical_points(mesh.vertices[mesh.triangles])
        xi = (qp - self.centers[:, None, :]) / self.scales[:, None, None]
        mono_q = _mono_values(xi)
        A[:, 6, :] = np.einsum("q,tqm->tm", self.rule.weights, mono_q[..., 0])
        A[:, 7, :] = np.einsum("q,tqm->tm", self.rule.weights, mono_q[..., 1])
        self._mono_at_rule = mono_q

        inv = np.linalg.inv(A)
        # undo the row normalization: dof_edge = L * row, dof_int = area * row
        colscale = np.empty((T, 8))
        for a in range(3):
            L = mesh.edge_lengths[mesh.triangle_edges[:, a]]
            colscale[:, a] = 1.0 / L
            colscale[:, 3 + a] = 1.0 / L
        colscale[:, 6] = 1.0 / mesh.areas
        colscale[:, 7] = 1.0 / mesh.areas
        self.basis_coef = inv * colscale[:, None, :]   # (T, mono, local dof)

    # -- evaluation helpers ------------------------------------------------

    def local_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        """Monomial coefficients of the represented field per triangle, (T, 8)."""
        return np.einsum("tmj,tj->tm", self.basis_coef,
                         coeffs[self.local_dofs])

    def basis_at_rule_points(self) -> np.ndarray:
        """Values of the 8 local basis fields at the rule points, (T, Q, 8, 2)."""
        return np.einsum("tqmd,tmj->tqjd", self._mono_at_rule, self.basis_coef)

    def div_coefficients(self) -> np.ndarray:
        """Per-basis divergence as linear data: (T, 8, 3) for 1, xi, eta terms."""
        T = self.mesh.n_triangles
        div = np.zeros((T, _N_MONO, 3))
        div[:, 1, 0] = 1.0
        div[:, 5, 0] = 1.0
        div[:, 6, 1] = 3.0
        div[:, 7, 2] = 3.0
        div /= self.scales[:, None, None]
        return np.einsum("tmc,tmj->tjc", div, self.basis_coef)

    def scaled_points(self, tri, pts) -> np.ndarray:
        return (pts - self.centers[tri]) / self.scales[tri][..., None]


# -- fields -------------------------------------------------------------------

class _FieldBase:
    def __init__(self, dofmap, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (dofmap.n_dofs,):
            raise ValueError(
                f"coefficient vector has length {coeffs.shape}, space has "
                f"{dofmap.n_dofs} dofs")
        self.dofmap = dofmap
        self.coeffs = coeffs

    @property
    def mesh(self) -> Mesh:
        return self.dofmap.mesh


class FieldP1(_FieldBase):
    """Continuous piecewise-linear scalar field (one coefficient per vertex)."""

    def eval_bary(self, tri, bary) -> np.ndarray:
        nodal = self.coeffs[self.mesh.triangles[tri]]
        return np.einsum("...k,...k->...", bary, nodal)

    def eval_at_points(self, points, locator: PointLocator = None):
        locator = locator or PointLocator(self.mesh)
        tri, bary = locator.locate(points)
        return self.eval_bary(tri, bary)

    def gradients(self) -> np.ndarray:
        """Per-triangle constant gradient, (T, 2)."""
        grads = p1_gradients(self.mesh)
        return np.einsum("tk,tkd->td", self.coeffs[self.mesh.triangles], grads)


class FieldP0(_FieldBase):
    """Elementwise-constant field."""

    def eval(self, tri) -> np.ndarray:
        return self.coeffs[tri]

    def weighted_mean(self) -> float:
        areas = self.mesh.areas
        return float(areas @ self.coeffs / areas.sum())


class FieldP1dc(_FieldBase):
    """Discontinuous piecewise-linear field (pressure space)."""

    def eval_bary(self, tri, bary) -> np.ndarray:
        vals = self.coeffs.reshape(-1, 3)[tri]
        return np.einsum("...k,...k->...", bary, vals)

    def eval_at_points(self, points, locator: PointLocator = None):
        locator = locator or PointLocator(self.mesh)
        tri, bary = locator.locate(points)
        return self.eval_bary(tri, bary)

    def integral(self) -> float:
        return float(self.dofmap.integral_vector() @ self.coeffs)

    def weighted_mean(self) -> float:
        return self.integral() / self.mesh.areas.sum()


class FieldHdiv(_FieldBase):
    """Degree-1 H(div) vector field; ``coeffs[:n_edges]`` are the edge fluxes."""

    def __init__(self, dofmap: DofMapHdiv, coeffs):
        super().__init__(dofmap, coeffs)
        self._mono = None

    def _mono_coeffs(self) -> np.ndarray:
        if self._mono is None:
            self._mono = self.dofmap.local_coefficients(self.coeffs)
        return self._mono

    @property
    def edge_fluxes(self) -> np.ndarray:
        return self.coeffs[: self.mesh.n_edges]

    def eval(self, tri, pts) -> np.ndarray:
        """Values at physical points lying in the given triangles, (n, 2)."""
        xi = self.dofmap.scaled_points(tri, pts)
        return np.einsum("...md,...m->...d", _mono_values(xi),
                         self._mono_coeffs()[tri])

    def eval_at_points(self, points, locator: PointLocator = None):
        locator = locator or PointLocator(self.mesh)
        tri, _ = locator.locate(points)
        return self.eval(tri, np.atleast_2d(np.asarray(points, dtype=float)))

    def divergence_means(self) -> np.ndarray:
        """Elementwise mean of the (linear) divergence, (T,)."""
        mc = self._mono_coeffs()
        # scaled coordinates are centered at the centroid, so xi averages to 0
        return (mc[:, 1] + mc[:, 5]) / self.dofmap.scales

    def divergence_at(self, tri, pts) -> np.ndarray:
        mc = self._mono_coeffs()[tri]
        xi = self.dofmap.scaled_points(tri, pts)
        return (mc[..., 1] + mc[..., 5]
                + 3.0 * (mc[..., 6] * xi[..., 0] + mc[..., 7] * xi[..., 1])
                ) / self.dofmap.scales[tri]


# -- interpolation ------------------------------------------------------------

def interpolate_p1(f, mesh: Mesh) -> FieldP1:
    """Vertex interpolant of a scalar function f((n, 2) points) -> (n,)."""
    values = np.asarray(f(mesh.vertices), dtype=float)
    if values.shape != (mesh.n_vertices,):
        raise ValueError("interpolated function must return one value per vertex")
    bad = np.flatnonzero(~np.isfinite(values))
    if len(bad):
        v = bad[0]
        x, y = mesh.vertices[v]
        raise ValueError(
            f"non-finite value {values[v]!r} at vertex {v} ({x:.6g}, {y:.6g})")
    return FieldP1(DofMapP1(mesh), values)


def _edge_moments(u, mesh: Mesh, edges, t=None, n_points: int = 3):
    """Flux and first moment of u·n over the given edges (3-point Gauss)."""
    s_q, s_w = edge_rule(n_points)
    lo = mesh.vertices[mesh.edges[edges, 0]]
    hi = mesh.vertices[mesh.edges[edges, 1]]
    pts = lo[:, None, :] + s_q[None, :, None] * (hi - lo)[:, None, :]
    flat = pts.reshape(-1, 2)
    vals = np.asarray(u(flat) if t is None else u(flat, t), dtype=float)
    un = np.einsum("eqd,ed->eq", vals.reshape(pts.shape), mesh.edge_normals[edges])
    L = mesh.edge_lengths[edges]
    flux = L * np.einsum("q,eq->e", s_w, un)
    moment = L * np.einsum("q,eq->e", s_w * (s_q - 0.5), un)
    return flux, moment


def interpolate_hdiv(u, mesh: Mesh, dofmap: DofMapHdiv = None) -> FieldHdiv:
    """Canonical degree-1 H(div) interpolant of u((n, 2) points) -> (n, 2).

    Edge moments use a 3-point Gauss rule per edge; interior moments use the
    dof map's triangle rule.  The interpolant commutes with the elementwise
    L2 projection of the divergence.
    """
    dofmap = dofmap or DofMapHdiv(mesh)
    E = mesh.n_edges
    coeffs = np.empty(dofmap.n_dofs)
    all_edges = np.arange(E)
    coeffs[:E], coeffs[E:2 * E] = _edge_moments(
        u, mesh, all_edges, n_points=dofmap.edge_points)
    rule = dofmap.rule
    qp = rule.physical_points(mesh.vertices[mesh.triangles])
    vals = np.asarray(u(qp.reshape(-1, 2)), dtype=float).reshape(qp.shape)
    means = np.einsum("q,tqd->td", rule.weights, vals) * mesh.areas[:, None]
    coeffs[2 * E::2] = means[:, 0]
    coeffs[2 * E + 1::2] = means[:, 1]
    if not np.isfinite(coeffs).all():
        raise ValueError("vector function produced non-finite moments")
    return FieldHdiv(dofmap, coeffs)


def hdiv_project(w, mesh: Mesh, dofmap: DofMapHdiv = None) -> FieldHdiv:
    """Divergence-compatible projection into the H(div) space.

    Realized by the canonical interpolant, so the elementwise divergence of
    the result is the elementwise linear L2 projection of div w; in
    particular element means of the divergence are reproduced exactly.
    """
    return interpolate_hdiv(w, mesh, dofmap)


# -- L2 and elliptic projections ------------------------------------------------

def l2_project_p0(phi, mesh: Mesh, rule: TriangleRule = None) -> FieldP0:
    """Cell averages (1/|T|) ∫_T phi dx via the module quadrature rule."""
    rule = rule or triangle_rule(5)
    qp = rule.physical_points(mesh.vertices[mesh.triangles])
    vals = np.asarray(phi(qp.reshape(-1, 2)), dtype=float).reshape(qp.shape[:2])
    return FieldP0(DofMapP0(mesh), np.einsum("q,tq->t", rule.weights, vals))


def l2_project_p1dc(phi, mesh: Mesh, rule: TriangleRule = None,
                    zero_mean: bool = False) -> FieldP1dc:
    """Elementwise L2 projection onto discontinuous linears."""
    rule = rule or triangle_rule(5)
    qp = rule.physical_points(mesh.vertices[mesh.triangles])
    vals = np.asarray(phi(qp.reshape(-1, 2)), dtype=float).reshape(qp.shape[:2])
    rhs = np.einsum("q,qk,tq->tk", rule.weights, rule.points, vals)
    mass = (np.full((3, 3), 1.0) + np.eye(3)) / 12.0   # unit-area local mass
    coeffs = np.linalg.solve(mass, rhs.T).T.reshape(-1)
    dofmap = DofMapP1dc(mesh, zero_mean=zero_mean)
    if zero_mean:
        m = dofmap.integral_vector()
        coeffs = coeffs - (m @ coeffs) / mesh.areas.sum()
    return FieldP1dc(dofmap, coeffs)


def elliptic_project_p1(v, d_tensor, mesh: Mesh, grad_v=None,
                        rule: TriangleRule = None, solver: str = "direct",
                        tol: float = 1e-10) -> FieldP1:
    """Weighted-stiffness projection onto continuous linears.

    Returns w_h with (D grad(v - w_h), grad phi_h) = 0 for every P1 basis
    function and ∫(v - w_h) dx = 0; the constant nullspace is closed by a
    Lagrange multiplier.  ``d_tensor`` is a (tri, pts) -> (n, 2, 2) callable
    or a constant 2x2 array; ``grad_v`` defaults to central differences.
    """
    from . import assemble  # deferred; assemble builds on the types above
    from . import linalg

    rule = rule or triangle_rule(5)
    asm = assemble.Assembler(mesh, rule)
    tensors = asm.tensor_at_quadrature(d_tensor)
    K = asm.p1_stiffness(tensors)

    if grad_v is None:
        h = 1e-6

        def grad_v(pts):
            out = np.empty_like(pts)
            for d in range(2):
                step = np.zeros(2)
                step[d] = h
                out[:, d] = (np.asarray(v(pts + step), dtype=float)
                             - np.asarray(v(pts - step), dtype=float)) / (2 * h)
            return out

    gv = np.asarray(grad_v(asm.quad_points.reshape(-1, 2)), dtype=float)
    gv = gv.reshape(asm.quad_points.shape)
    load = asm.p1_gradient_load(np.einsum("tqde,tqe->tqd", tensors, gv))

    m = asm.p1_integral_vector()
    v_int = asm.integrate(asm.scalar_at_quadrature(v))

    n = mesh.n_vertices
    rows, cols, vals = linalg.coo_of(K)
    rows = np.concatenate([rows, np.full(n, n), np.arange(n)])
    cols = np.concatenate([cols, np.arange(n), np.full(n, n)])
    vals = np.concatenate([vals, m, m])
    bordered = linalg.SparseMatrix.from_coo(rows, cols, vals, (n + 1, n + 1))
    rhs = np.concatenate([load, [v_int]])
    sol = linalg.solve(linalg.LinearSystem(bordered, rhs, symmetric=True,
                                           tol=tol), method=solver)
    return FieldP1(DofMapP1(mesh), sol[:n])
