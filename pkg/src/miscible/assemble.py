"""Vectorized element integrals and global matrix assembly on a fixed mesh."""

import numpy as np

from .linalg import SparseMatrix
from .mesh import Mesh
from .quadrature import TriangleRule, edge_rule, triangle_rule
from .spaces import DofMapHdiv, p1_gradients

__all__ = ["Assembler"]


class Assembler:
    """Caches geometry and basis values at quadrature points for one mesh.

    Scalar/tensor coefficient arguments are arrays sampled at the rule
    points, shape (T, Q) or (T, Q, 2, 2); use :meth:`scalar_at_quadrature`
    and friends to produce them from callables.
    """

    def __init__(self, mesh: Mesh, rule: TriangleRule = None,
                 edge_points: int = 3):
        self.mesh = mesh
        self.rule = rule or triangle_rule(5)
        self.edge_points = edge_points
        self.areas = mesh.areas
        self.quad_points = self.rule.physical_points(
            mesh.vertices[mesh.triangles])          # (T, Q, 2)
        self.quad_weights = self.rule.weights
        self.bary = self.rule.points                # (Q, 3)
        self.grads = p1_gradients(mesh)             # (T, 3, 2)
        self._hdiv = None
        self._hdiv_basis = None

    # -- coefficient sampling ------------------------------------------------

    @property
    def hdiv(self) -> DofMapHdiv:
        if self._hdiv is None:
            self._hdiv = DofMapHdiv(self.mesh, self.rule, self.edge_points)
        return self._hdiv

    def _hdiv_basis_values(self) -> np.ndarray:
        if self._hdiv_basis is None:
            self._hdiv_basis = self.hdiv.basis_at_rule_points()  # (T,Q,8,2)
        return self._hdiv_basis

    def scalar_at_quadrature(self, fn, t: float = None) -> np.ndarray:
        """Sample fn(points[, t]) at the rule points, (T, Q)."""
        flat = self.quad_points.reshape(-1, 2)
        vals = fn(flat) if t is None else fn(flat, t)
        return np.asarray(vals, dtype=float).reshape(self.quad_points.shape[:2])

    def tensor_at_quadrature(self, d_tensor) -> np.ndarray:
        """Sample a (tri, pts) -> (n, 2, 2) callable or constant, (T, Q, 2, 2)."""
        T, Q = self.quad_points.shape[:2]
        if callable(d_tensor):
            tri = np.repeat(np.arange(T), Q)
            vals = d_tensor(tri, self.quad_points.reshape(-1, 2))
            return np.asarray(vals, dtype=float).reshape(T, Q, 2, 2)
        const = np.asarray(d_tensor, dtype=float)
        return np.broadcast_to(const, (T, Q, 2, 2))

    def p1_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Continuous-P1 field values at the rule points, (T, Q)."""
        return np.einsum("qk,tk->tq", self.bary,
                         coeffs[self.mesh.triangles])

    def hdiv_values(self, coeffs: np.ndarray) -> np.ndarray:
        """H(div) field values at the rule points, (T, Q, 2)."""
        local = coeffs[self.hdiv.local_dofs]
        return np.einsum("tqjd,tj->tqd", self._hdiv_basis_values(), local)

    def integrate(self, values: np.ndarray) -> float:
        """Domain integral of values sampled at the rule points."""
        return float(np.einsum("t,q,tq->", self.areas, self.quad_weights,
                               values))

    # -- scalar P1 forms -------------------------------------------------------

    def _p1_scatter(self, local: np.ndarray) -> SparseMatrix:
        tris = self.mesh.triangles
        n = self.mesh.n_vertices
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        return SparseMatrix.from_coo(rows, cols, local.reshape(len(tris), 9)
                                     .ravel(), (n, n))

    def p1_mass(self, weight=None) -> SparseMatrix:
        w = self.quad_weights[None, :] * self.areas[:, None]
        if weight is not None:
            w = w * weight
        local = np.einsum("tq,qi,qj->tij", w, self.bary, self.bary)
        return self._p1_scatter(local)

    def p1_stiffness(self, tensors: np.ndarray) -> SparseMatrix:
        """(D grad u, grad v) with a tensor coefficient at the rule points."""
        w = self.quad_weights[None, :] * self.areas[:, None]
        local = np.einsum("tq,tqde,tje,tid->tij", w, tensors,
                          self.grads, self.grads)
        return self._p1_scatter(local)

    def p1_convection(self, velocity: np.ndarray) -> SparseMatrix:
        """(b·grad u, v) with b sampled at the rule points, (T, Q, 2)."""
        w = self.quad_weights[None, :] * self.areas[:, None]
        local = np.einsum("tq,qi,tqd,tjd->tij", w, self.bary, velocity,
                          self.grads)
        return self._p1_scatter(local)

    def p1_load(self, values: np.ndarray) -> np.ndarray:
        w = self.quad_weights[None, :] * self.areas[:, None]
        local = np.einsum("tq,qi->ti", w * values, self.bary)
        out = np.zeros(self.mesh.n_vertices)
        np.add.at(out, self.mesh.triangles.ravel(), local.ravel())
        return out

    def p1_gradient_load(self, vectors: np.ndarray) -> np.ndarray:
        """Loads ∫ g·grad(phi_i) for g sampled at the rule points, (T, Q, 2)."""
        w = self.quad_weights[None, :] * self.areas[:, None]
        local = np.einsum("tq,tqd,tid->ti", w, vectors, self.grads)
        out = np.zeros(self.mesh.n_vertices)
        np.add.at(out, self.mesh.triangles.ravel(), local.ravel())
        return out

    def p1_integral_vector(self) -> np.ndarray:
        """∫ phi_i dx for every continuous-P1 basis function."""
        out = np.zeros(self.mesh.n_vertices)
        np.add.at(out, self.mesh.triangles.ravel(),
                  np.repeat(self.areas / 3.0, 3))
        return out

    # -- elementwise loads ------------------------------------------------------

    def p0_load(self, values: np.ndarray) -> np.ndarray:
        """∫_T values per triangle, (T,)."""
        return self.areas * np.einsum("q,tq->t", self.quad_weights, values)

    def p1dc_load(self, values: np.ndarray) -> np.ndarray:
        """Moments ∫_T values · lambda_i per discontinuous-linear dof, (3T,)."""
        local = np.einsum("t,q,qi,tq->ti", self.areas, self.quad_weights,
                          self.bary, values)
        return local.reshape(-1)

    # -- H(div) forms -----------------------------------------------------------

    def hdiv_mass(self, weight=None) -> SparseMatrix:
        """Weighted velocity mass matrix (w u, v) over the H(div) space."""
        psi = self._hdiv_basis_values()
        w = self.quad_weights[None, :] * self.areas[:, None]
        if weight is not None:
            w = w * weight
        local = np.einsum("tq,tqjd,tqkd->tjk", w, psi, psi)
        dofs = self.hdiv.local_dofs
        rows = np.repeat(dofs, 8, axis=1).ravel()
        cols = np.tile(dofs, (1, 8)).ravel()
        n = self.hdiv.n_dofs
        return SparseMatrix.from_coo(rows, cols, local.ravel(), (n, n))

    def hdiv_divergence_p1dc(self) -> SparseMatrix:
        """Coupling (div u, lambda) between velocity and pressure dofs, (3T, n_u)."""
        div_c = self.hdiv.div_coefficients()        # (T, 8, 3): 1, xi, eta
        xi = (self.quad_points - self.hdiv.centers[:, None, :]) \
            / self.hdiv.scales[:, None, None]
        div_q = (div_c[:, None, :, 0]
                 + div_c[:, None, :, 1] * xi[:, :, None, 0]
                 + div_c[:, None, :, 2] * xi[:, :, None, 1])   # (T, Q, 8)
        local = np.einsum("t,q,qi,tqj->tij", self.areas, self.quad_weights,
                          self.bary, div_q)
        T = self.mesh.n_triangles
        rows = np.repeat(3 * np.arange(T)[:, None] + np.arange(3), 8,
                         axis=1).ravel()
        cols = np.tile(self.hdiv.local_dofs, (1, 3)).ravel()
        return SparseMatrix.from_coo(rows, cols, local.ravel(),
                                     (3 * T, self.hdiv.n_dofs))

    # -- boundary terms -----------------------------------------------------------

    def boundary_quadrature(self):
        """Points, outward normals, and weights on the boundary edges.

        Returns (edges, points (B, q, 2), normals (B, 2), weights (B, q))
        where the weights already include the edge lengths.
        """
        mesh = self.mesh
        edges = mesh.boundary_edges
        s_q, s_w = edge_rule(self.edge_points)
        lo = mesh.vertices[mesh.edges[edges, 0]]
        hi = mesh.vertices[mesh.edges[edges, 1]]
        pts = lo[:, None, :] + s_q[None, :, None] * (hi - lo)[:, None, :]
        normals = mesh.edge_normals[edges] \
            * mesh.boundary_outward_signs()[:, None]
        weights = mesh.edge_lengths[edges][:, None] * s_w[None, :]
        return edges, pts, normals, weights

    def boundary_p1_load(self, boundary_values: np.ndarray) -> np.ndarray:
        """∮ data · phi_i ds from values sampled on the boundary quadrature."""
        mesh = self.mesh
        edges = mesh.boundary_edges
        s_q, _ = edge_rule(self.edge_points)
        _, _, _, weights = self.boundary_quadrature()
        out = np.zeros(mesh.n_vertices)
        lo_load = np.einsum("bq,q->b", weights * boundary_values, 1.0 - s_q)
        hi_load = np.einsum("bq,q->b", weights * boundary_values, s_q)
        np.add.at(out, mesh.edges[edges, 0], lo_load)
        np.add.at(out, mesh.edges[edges, 1], hi_load)
        return out
