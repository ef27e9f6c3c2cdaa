"""Sparse storage and linear solvers with an explicit accuracy contract.

Factorizations are delegated to scipy (SuperLU); every solve is checked
against the residual contract afterwards, so a quietly inaccurate
factorization surfaces as :class:`SingularSystem` instead of polluting
downstream results.  Direct solves are deterministic for identical inputs.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SparseMatrix", "LinearSystem", "SingularSystem", "ConstraintViolation",
    "solve", "solve_saddle", "coo_of",
]


class SingularSystem(RuntimeError):
    """Factorization broke down or the iteration stalled above tolerance."""

    def __init__(self, message: str, residual: float = None):
        if residual is not None:
            message = f"{message} (achieved relative residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class ConstraintViolation(RuntimeError):
    """A constrained solve returned a solution violating its constraint."""


@dataclass(frozen=True)
class SparseMatrix:
    """Compressed sparse row matrix with sorted, unique column indices."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple

    @classmethod
    def from_coo(cls, rows, cols, values, shape) -> "SparseMatrix":
        """Build from triplets, summing duplicates; rejects NaN/Inf entries."""
        m = sp.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        if not np.isfinite(m.data).all():
            raise ValueError("sparse matrix contains non-finite entries")
        return cls(m.indptr, m.indices, m.data, m.shape)

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = m.tocsr()
        m.sum_duplicates()
        m.sort_indices()
        if not np.isfinite(m.data).all():
            raise ValueError("sparse matrix contains non-finite entries")
        return cls(m.indptr, m.indices, m.data, m.shape)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr),
                             shape=self.shape)

    @property
    def nnz(self) -> int:
        return len(self.data)

    def __matmul__(self, x):
        return self.to_scipy() @ x

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().T)


def coo_of(matrix: SparseMatrix):
    """Triplet view (rows, cols, values) of a CSR matrix."""
    m = matrix.to_scipy().tocoo()
    return m.row, m.col, m.data


@dataclass
class LinearSystem:
    matrix: SparseMatrix
    rhs: np.ndarray
    symmetric: bool = False
    tol: float = 1e-10
    max_iterations: int = field(default=20000)

    def __post_init__(self):
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {self.matrix.shape}")
        if self.rhs.shape != (n,):
            raise ValueError("right-hand side length does not match matrix")


def _relative_residual(A, x, b) -> float:
    r = np.linalg.norm(A @ x - b)
    nb = np.linalg.norm(b)
    return r / nb if nb > 0 else r


def _check(system: LinearSystem, x, context: str) -> np.ndarray:
    A = system.matrix.to_scipy()
    nb = np.linalg.norm(system.rhs)
    resid = np.linalg.norm(A @ x - system.rhs)
    ok = resid <= system.tol * nb if nb > 0 else resid <= 1e-12
    if not np.isfinite(x).all() or not ok:
        raise SingularSystem(f"{context} failed to meet the residual contract",
                             residual=resid / nb if nb > 0 else resid)
    return x


def solve(system: LinearSystem, method: str = "direct") -> np.ndarray:
    """Solve to the system's residual contract or raise SingularSystem."""
    A = system.matrix.to_scipy()
    if method == "direct":
        try:
            lu = spla.splu(A.tocsc())
            x = lu.solve(system.rhs)
        except RuntimeError as exc:
            raise SingularSystem(f"sparse factorization failed: {exc}") from exc
        return _check(system, x, "direct solve")
    if method == "iterative":
        n = system.matrix.shape[0]
        diag = np.abs(A.diagonal())
        diag[diag < 1e-30] = 1.0
        precond = spla.LinearOperator((n, n), matvec=lambda v: v / diag)
        # minres tolerates the indefinite saddle blocks; gmres covers the rest
        runner = spla.minres if system.symmetric else spla.gmres
        kwargs = {"rtol": min(system.tol * 1e-2, 1e-12), "maxiter":
                  system.max_iterations, "M": precond}
        if runner is spla.gmres:
            kwargs["restart"] = 200
        x, info = runner(A, system.rhs, **kwargs)
        if info != 0:
            raise SingularSystem(
                f"iteration stalled (info={info})",
                residual=_relative_residual(A, x, system.rhs))
        return _check(system, x, "iterative solve")
    raise ValueError(f"unknown solver method {method!r}")


def solve_saddle(m_block: SparseMatrix, b_block: SparseMatrix,
                 rhs_u: np.ndarray, rhs_p: np.ndarray,
                 mean_vector: np.ndarray, method: str = "direct",
                 tol: float = 1e-10):
    """Solve [[M, Bᵀ, 0], [B, 0, m], [0, mᵀ, 0]] · (u, p, λ) = (rhs_u, rhs_p, 0).

    M must be symmetric positive definite on the velocity dofs, B the
    pressure/velocity coupling, and ``mean_vector`` the weights whose zero
    pairing with p removes the constant pressure nullspace.  Checks the
    residual contract of the bordered system and that the returned pressure
    mean vanishes.
    """
    n_u = len(rhs_u)
    n_p = len(rhs_p)
    if m_block.shape != (n_u, n_u) or b_block.shape != (n_p, n_u):
        raise ValueError("saddle block shapes are inconsistent")
    if mean_vector.shape != (n_p,):
        raise ValueError("mean constraint length does not match pressure block")
    B = b_block.to_scipy()
    m = sp.csr_matrix(mean_vector[:, None])
    K = sp.bmat([[m_block.to_scipy(), B.T, None],
                 [B, None, m],
                 [None, m.T, None]], format="csr")
    rhs = np.concatenate([rhs_u, rhs_p, [0.0]])
    sol = solve(LinearSystem(SparseMatrix.from_scipy(K), rhs, symmetric=True,
                             tol=tol), method=method)
    u = sol[:n_u]
    p = sol[n_u:n_u + n_p]
    mean = abs(mean_vector @ p)
    if mean > 1e-8 * max(1.0, float(np.abs(p).max(initial=0.0))):
        raise ConstraintViolation(
            f"pressure mean constraint violated: |m·p| = {mean:.3e}")
    return u, p
