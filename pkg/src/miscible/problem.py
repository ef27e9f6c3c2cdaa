"""Physical data for the coupled flow/transport model.

All coefficient callables are vectorized: spatial functions take an (n, 2)
point array, velocity-dependent ones an (..., 2) array, and return matching
scalar arrays.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Coefficients",
    "BoundaryData",
    "zero_flux_boundary",
    "eval_D",
    "eval_mu",
    "diffusion_tensor_field",
    "source_compatibility_defect",
]


@dataclass(frozen=True)
class Coefficients:
    """Evaluatable model data: permeability, viscosity, dispersion, sources.

    The dispersion tensor is D(u) = porosity * d_m * I + d1(u) I
    + d2(u) (u ⊗ u); ``diffusion_override`` replaces the whole tensor with a
    scalar multiple of the identity when set (as the benchmark problems do).
    Sources are functions of (points, t); ``None`` means identically zero.
    """

    permeability: Callable = lambda pts: np.ones(len(pts))
    viscosity: Callable = lambda c: np.ones_like(np.asarray(c, dtype=float))
    porosity: float = 1.0
    molecular_diffusion: float = 1.0
    dispersion_d1: Optional[Callable] = None
    dispersion_d2: Optional[Callable] = None
    q_injection: Optional[Callable] = None
    q_production: Optional[Callable] = None
    injected_concentration: Optional[Callable] = None
    diffusion_override: Optional[Callable] = None


@dataclass(frozen=True)
class BoundaryData:
    """Prescribed normal data on the boundary at one time level.

    Both callables take boundary points (n, 2) and outward unit normals
    (n, 2): ``flux_n`` gives u·n, ``conc_flux_n`` gives (D(u) grad c)·n.
    """

    flux_n: Callable
    conc_flux_n: Callable


def zero_flux_boundary() -> BoundaryData:
    """Homogeneous data: no normal flow and no normal dispersive flux."""
    zero = lambda pts, normals: np.zeros(len(pts))
    return BoundaryData(flux_n=zero, conc_flux_n=zero)


def eval_mu(c, coeffs: Coefficients):
    """Concentration-dependent viscosity mu(c)."""
    return coeffs.viscosity(np.asarray(c, dtype=float))


def eval_D(u, coeffs: Coefficients) -> np.ndarray:
    """Dispersion tensor at velocities ``u`` with shape (..., 2) -> (..., 2, 2)."""
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    if single:
        u = u[None, :]
    eye = np.eye(2)
    if coeffs.diffusion_override is not None:
        scalar = np.asarray(coeffs.diffusion_override(u), dtype=float)
        out = scalar[..., None, None] * eye
    else:
        scalar = np.full(u.shape[:-1],
                         coeffs.porosity * coeffs.molecular_diffusion)
        if coeffs.dispersion_d1 is not None:
            scalar = scalar + coeffs.dispersion_d1(u)
        out = scalar[..., None, None] * eye
        if coeffs.dispersion_d2 is not None:
            d2 = np.asarray(coeffs.dispersion_d2(u), dtype=float)
            out = out + d2[..., None, None] * (u[..., :, None] * u[..., None, :])
    return out[0] if single else out


def diffusion_tensor_field(coeffs: Coefficients, velocity):
    """Adapt a velocity field to a (tri, pts) -> (n, 2, 2) tensor callable.

    ``velocity`` needs an ``eval(tri_indices, points)`` method returning
    (n, 2) vectors, as the H(div) fields provide.
    """
    def tensors(tri, pts):
        return eval_D(velocity.eval(tri, pts), coeffs)
    return tensors


def source_compatibility_defect(coeffs: Coefficients, mesh, t: float,
                                rule=None) -> float:
    """Quadrature value of ∫(q_injection - q_production) dx at time t.

    The continuous model is well posed only when this vanishes; returns 0
    when either source is absent.
    """
    if coeffs.q_injection is None or coeffs.q_production is None:
        return 0.0
    from .quadrature import triangle_rule
    rule = rule or triangle_rule(5)
    pts = rule.physical_points(mesh.vertices[mesh.triangles])
    diff = (coeffs.q_injection(pts.reshape(-1, 2), t)
            - coeffs.q_production(pts.reshape(-1, 2), t)).reshape(pts.shape[:2])
    return float(np.einsum("t,q,tq->", mesh.areas, rule.weights, diff))
