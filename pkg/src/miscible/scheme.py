"""Linearized semi-implicit Euler stepper for the coupled flow/transport system.

Each step first solves the Darcy saddle-point system for velocity and
pressure with the viscosity lagged at the previous concentration, then the
transport system implicitly with the fresh velocity; both solves are linear,
which is the whole point of the lagging.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import linalg
from .assemble import Assembler
from .mesh import Mesh
from .problem import Coefficients, eval_D
from .quadrature import triangle_rule
from .spaces import (DofMapP1, DofMapP1dc, FieldHdiv, FieldP1, FieldP1dc,
                     interpolate_p1)

__all__ = ["RunConfig", "DiscreteState", "StepDiagnostics", "Operators",
           "init_state", "step_pressure_velocity", "step_concentration",
           "run", "build_operators"]

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Everything one time-stepping run needs."""

    mesh: Mesh
    coefficients: Coefficients
    tau: float
    t_final: float
    initial_c: Callable                      # pts -> (n,)
    concentration_source: Optional[Callable] = None   # (pts, t) -> (n,)
    boundary: Optional[Callable] = None      # t -> BoundaryData; None = no-flow
    solver: str = "direct"
    solver_tol: float = 1e-10
    quad_degree: int = 5
    log_every: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"time step must be positive, got {self.tau}")
        if self.t_final <= 0:
            raise ValueError("final time must be positive")
        if round(self.t_final / self.tau) < 1:
            raise ValueError(
                f"time step {self.tau} exceeds the final time {self.t_final}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.tau))


@dataclass
class DiscreteState:
    """Solution triple after step n; the velocity/pressure pair of step 0 is
    never formed because the first step solves for it from the initial
    concentration."""

    n: int
    t: float
    C: FieldP1
    U: Optional[FieldHdiv] = None
    P: Optional[FieldP1dc] = None


@dataclass
class StepDiagnostics:
    step: int
    t: float
    max_abs_c: float
    div_balance_residual: float


class Operators:
    """Per-run cache: assembler, constant matrices, boundary bookkeeping."""

    def __init__(self, config: RunConfig):
        mesh = config.mesh
        self.config = config
        self.rule = triangle_rule(config.quad_degree)
        self.asm = Assembler(mesh, self.rule)
        self.hdiv = self.asm.hdiv
        self.pressure_map = DofMapP1dc(mesh, zero_mean=True)
        self.mean_vector = self.pressure_map.integral_vector()
        self.divergence = self.asm.hdiv_divergence_p1dc()
        self._div_csr = self.divergence.to_scipy()
        self.p1_mass = self.asm.p1_mass()
        self._p1_mass_csr = self.p1_mass.to_scipy()
        self.permeability_q = self.asm.scalar_at_quadrature(
            config.coefficients.permeability)

        n_u = self.hdiv.n_dofs
        self.boundary_dofs = self.hdiv.boundary_dofs
        mask = np.ones(n_u, dtype=bool)
        mask[self.boundary_dofs] = False
        self.interior_dofs = np.flatnonzero(mask)
        self._B_int = self._div_csr[:, self.interior_dofs].tocsr()
        self._B_bnd = self._div_csr[:, self.boundary_dofs].tocsr()
        self.last_div_residual = np.nan

    def boundary_velocity_dofs(self, t: float) -> np.ndarray:
        """Essential velocity dof values (flux, then moment, per boundary edge)."""
        cfg = self.config
        if cfg.boundary is None:
            return np.zeros(len(self.boundary_dofs))
        data = cfg.boundary(t)
        mesh = cfg.mesh
        edges, pts, normals, weights = self.asm.boundary_quadrature()
        vals = data.flux_n(pts.reshape(-1, 2),
                           np.repeat(normals, pts.shape[1], axis=0))
        vals = np.asarray(vals, dtype=float).reshape(pts.shape[:2])
        # dofs are taken against the global edge normal and lo->hi parameter
        signs = mesh.boundary_outward_signs()
        from .quadrature import edge_rule
        s_q, _ = edge_rule(self.asm.edge_points)
        flux = signs * np.einsum("bq,bq->b", weights, vals)
        moment = signs * np.einsum("bq,bq->b",
                                   weights * (s_q - 0.5)[None, :], vals)
        return np.concatenate([flux, moment])


def build_operators(config: RunConfig) -> Operators:
    return Operators(config)


def init_state(config: RunConfig) -> DiscreteState:
    """Initial state: nodal interpolation of the starting concentration."""
    return DiscreteState(n=0, t=0.0, C=interpolate_p1(config.initial_c,
                                                      config.mesh))


def _source_vector(ops: Operators, t: float) -> np.ndarray:
    """Pressure-equation source moments (q_injection - q_production, lambda)."""
    cfg = ops.config
    co = cfg.coefficients
    vals = np.zeros(ops.asm.quad_points.shape[:2])
    if co.q_injection is not None:
        vals = vals + ops.asm.scalar_at_quadrature(co.q_injection, t)
    if co.q_production is not None:
        vals = vals - ops.asm.scalar_at_quadrature(co.q_production, t)
    return ops.asm.p1dc_load(vals)


def step_pressure_velocity(C_n: FieldP1, t_next: float, config: RunConfig,
                           ops: Operators = None):
    """Darcy solve with viscosity lagged at C_n; returns (U, P) at t_next."""
    ops = ops or Operators(config)
    co = config.coefficients
    mu_q = co.viscosity(ops.asm.p1_values(C_n.coeffs))
    mass = ops.asm.hdiv_mass(mu_q / ops.permeability_q)
    mass_csr = mass.to_scipy()

    u_bnd = ops.boundary_velocity_dofs(t_next)
    rhs_u = np.zeros(len(ops.interior_dofs))
    source = _source_vector(ops, t_next)
    if len(ops.boundary_dofs):
        rhs_u -= mass_csr[ops.interior_dofs][:, ops.boundary_dofs] @ u_bnd
        source = source - ops._B_bnd @ u_bnd
    # enforce the discrete compatibility the continuous model assumes
    m = ops.mean_vector
    source = source - m * (source.sum() / m.sum())

    M_int = linalg.SparseMatrix.from_scipy(
        mass_csr[ops.interior_dofs][:, ops.interior_dofs])
    B_int = linalg.SparseMatrix.from_scipy(ops._B_int)
    u_int, p_neg = linalg.solve_saddle(M_int, B_int, rhs_u, source, m,
                                       method=config.solver,
                                       tol=config.solver_tol)

    coeffs = np.zeros(ops.hdiv.n_dofs)
    coeffs[ops.interior_dofs] = u_int
    coeffs[ops.boundary_dofs] = u_bnd
    U = FieldHdiv(ops.hdiv, coeffs)
    # the saddle system determines the negative pressure; flip so P tracks +p
    P = FieldP1dc(ops.pressure_map, -p_neg)

    balance = ops._div_csr @ coeffs - (source + (ops._B_bnd @ u_bnd
                                                 if len(u_bnd) else 0.0))
    per_element = np.abs(balance.reshape(-1, 3).sum(axis=1)) / config.mesh.areas
    ops.last_div_residual = float(per_element.max())
    return U, P


def step_concentration(C_n: FieldP1, U_next: FieldHdiv, t_next: float,
                       config: RunConfig, ops: Operators = None) -> FieldP1:
    """Implicit transport solve using the freshly computed velocity."""
    ops = ops or Operators(config)
    co = config.coefficients
    asm = ops.asm
    u_q = asm.hdiv_values(U_next.coeffs)
    tensors = eval_D(u_q, co)

    phi_over_tau = co.porosity / config.tau
    system = (phi_over_tau * ops._p1_mass_csr
              + asm.p1_stiffness(tensors).to_scipy()
              + asm.p1_convection(u_q).to_scipy())
    rhs = phi_over_tau * (ops._p1_mass_csr @ C_n.coeffs)

    if co.q_production is not None:
        qp_vals = asm.scalar_at_quadrature(co.q_production, t_next)
        system = system + asm.p1_mass(qp_vals).to_scipy()
    if co.q_injection is not None and co.injected_concentration is not None:
        qi = asm.scalar_at_quadrature(co.q_injection, t_next)
        ch = asm.scalar_at_quadrature(co.injected_concentration, t_next)
        rhs += asm.p1_load(ch * qi)
    if config.concentration_source is not None:
        rhs += asm.p1_load(asm.scalar_at_quadrature(
            config.concentration_source, t_next))
    if config.boundary is not None:
        data = config.boundary(t_next)
        edges, pts, normals, _ = asm.boundary_quadrature()
        vals = data.conc_flux_n(pts.reshape(-1, 2),
                                np.repeat(normals, pts.shape[1], axis=0))
        vals = np.asarray(vals, dtype=float).reshape(pts.shape[:2])
        if np.any(vals):
            rhs += asm.boundary_p1_load(vals)

    sol = linalg.solve(
        linalg.LinearSystem(linalg.SparseMatrix.from_scipy(system), rhs,
                            symmetric=False, tol=config.solver_tol),
        method=config.solver)
    return FieldP1(DofMapP1(config.mesh), sol)


def run(config: RunConfig, on_step: Callable = None) -> DiscreteState:
    """March the scheme from t=0 to t_final; returns the final state.

    ``on_step(state, diagnostics)`` is invoked after every completed step and
    is the hook for trajectory recording or per-step error tracking.
    """
    ops = Operators(config)
    state = init_state(config)
    for n in range(config.n_steps):
        t_next = (n + 1) * config.tau
        try:
            U, P = step_pressure_velocity(state.C, t_next, config, ops)
            C = step_concentration(state.C, U, t_next, config, ops)
        except linalg.SingularSystem as exc:
            raise linalg.SingularSystem(
                f"step {n + 1} (t={t_next:g}): {exc}") from exc
        state = DiscreteState(n=n + 1, t=t_next, C=C, U=U, P=P)
        diag = StepDiagnostics(step=n + 1, t=t_next,
                               max_abs_c=float(np.abs(C.coeffs).max()),
                               div_balance_residual=ops.last_div_residual)
        if config.log_every and (n + 1) % config.log_every == 0:
            log.info("step %d/%d t=%.4g max|C|=%.4g div-residual=%.2e",
                     n + 1, config.n_steps, t_next, diag.max_abs_c,
                     diag.div_balance_residual)
        if on_step is not None:
            on_step(state, diag)
    return state
