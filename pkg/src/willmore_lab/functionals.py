"""Willmore energy and companions, multipliers, first variations.

Variations are normal: the surface moves with velocity ``f nu``.  With the
outward normal, ``dArea = int H f`` and ``dW = -int (Lap H + H|A0|^2 +
H Ric(nu,nu)) f``, so a surface of Willmore type with multiplier ``lambda``
has ``dW = lambda * dArea`` for every ``f``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .ambient import MetricModel, _metric_unchecked
from .surface import ShapeError, SurfaceGeometry


def _ein(*operands):
    return np.einsum(*operands, optimize=True)


class HypothesisError(ValueError):
    """Mean curvature is not positive where the theory requires H > 0."""


@dataclass
class FunctionalReport:
    W: float
    U: float
    V: float
    area: float
    genus: int
    splitting_residual: float
    lambda_id: float | None
    lambda_lsq: float
    el_residual: float
    hawking: float
    volE: float
    vol: float
    RE: float
    aE: tuple
    roundness_H: float
    roundness_A: float
    ricci_avg: float
    grad_log_H_sq: float | None
    min_H: float

    def as_dict(self) -> dict:
        d = asdict(self)
        d["aE"] = [float(v) for v in self.aE]
        return d


@dataclass
class VariationField:
    values: np.ndarray
    b: np.ndarray | None = None


def el_operator(geom: SurfaceGeometry) -> np.ndarray:
    """Lap H + H |A0|^2 + H Ric(nu, nu) at the nodes (Willmore gradient density)."""
    return geom.lapH + geom.H * geom.Aring_sq + geom.H * geom.ric_nn


def willmore(geom: SurfaceGeometry) -> float:
    return 0.5 * geom.integrate(geom.H ** 2)


def hawking_mass(area: float, W: float) -> float:
    return math.sqrt(area) / (16.0 * math.pi) ** 1.5 * (16.0 * math.pi - 2.0 * W)


def lambda_least_squares(geom: SurfaceGeometry) -> tuple[float, float]:
    """Multiplier minimising the L2 norm of the Euler-Lagrange residual.

    Returns ``(lambda, ||EL + lambda H||_{L2(dmu)})``.
    """
    E = el_operator(geom)
    H = geom.H
    lam = -geom.integrate(E * H) / geom.integrate(H * H)
    res = math.sqrt(max(geom.integrate((E + lam * H) ** 2), 0.0))
    return lam, res


def lambda_identity(geom: SurfaceGeometry) -> float | None:
    """Multiplier from the integrated identity obtained by dividing by H.

    ``None`` when ``min H <= 0`` (the identity needs H > 0).
    """
    if geom.H.min() <= 0:
        return None
    logH = np.log(geom.H)
    integrand = geom.grad_norm_sq(logH) + geom.Aring_sq + geom.ric_nn
    return -geom.integrate(integrand) / geom.area


def ricci_average(geom: SurfaceGeometry, model: MetricModel | None = None) -> float:
    """(1/|Sigma|) int Ric(nu, nu) dmu."""
    return geom.integrate(geom.ric_nn) / geom.area


def center_of_gravity(geom: SurfaceGeometry) -> np.ndarray:
    return _ein("n,ni->i", geom.dmuE, geom.F) / geom.areaE


def sphere_fit(geom: SurfaceGeometry) -> tuple[float, np.ndarray, float, float]:
    """Euclidean area radius, centre of gravity and the two roundness norms.

    Returns ``(RE, aE, ||H_E - 2/RE||, ||A0_E||)`` with L2 norms in dmu_E.
    """
    RE = math.sqrt(geom.areaE / (4.0 * math.pi))
    aE = center_of_gravity(geom)
    nH = math.sqrt(geom.integrateE((geom.H_E - 2.0 / RE) ** 2))
    nA = math.sqrt(geom.integrateE(geom.AringE_sq))
    return RE, aE, nH, nA


_GL16 = np.polynomial.legendre.leggauss(16)


def enclosed_volume(geom: SurfaceGeometry, model: MetricModel | None = None):
    """Euclidean and g-volume of the region bounded by the surface.

    The g-volume adds ``int_Omega (sqrt det g - 1) dV_E``, integrated along
    rays from the Euclidean centre of gravity with a 16-point Gauss rule.
    Requires the surface to be star-shaped about that centre.
    """
    model = geom.model if model is None else model
    aE = center_of_gravity(geom)
    X = geom.F - aE
    flux = _ein("ni,ni->n", X, geom.nuE)
    volE = geom.integrateE(flux) / 3.0
    if model.kind == "flat":
        return volE, volE
    if np.any(flux <= 0):
        raise ValueError("enclosed_volume: surface is not star-shaped about its centre")
    t, w = _GL16
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    pts = aE + t[:, None, None] * X[None]  # (16, N, 3)
    g = _metric_unchecked(model, pts.reshape(-1, 3))[0]
    excess = (np.sqrt(np.linalg.det(g)) - 1.0).reshape(t.size, -1)
    radial = _ein("q,q,qn->n", w, t ** 2, excess)
    return volE, volE + geom.integrateE(radial * flux)


def evaluate(geom: SurfaceGeometry, model: MetricModel | None = None) -> FunctionalReport:
    model = geom.model if model is None else model
    W = willmore(geom)
    U = geom.integrate(geom.Aring_sq)
    GNN = _ein("ni,nij,nj->n", geom.nu, geom.einstein, geom.nu)
    V = 2.0 * geom.integrate(GNN)
    area = geom.area
    lam_lsq, res = lambda_least_squares(geom)
    lam_id = lambda_identity(geom)
    glh = None
    if geom.H.min() > 0:
        glh = geom.integrate(geom.grad_norm_sq(np.log(geom.H)))
    RE, aE, nH, nA = sphere_fit(geom)
    volE, vol = enclosed_volume(geom, model)
    return FunctionalReport(
        W=W, U=U, V=V, area=area, genus=0,
        splitting_residual=W - 8.0 * math.pi - U - V,
        lambda_id=lam_id, lambda_lsq=lam_lsq, el_residual=res,
        hawking=hawking_mass(area, W), volE=volE, vol=vol, RE=RE, aE=tuple(aE),
        roundness_H=nH, roundness_A=nA, ricci_avg=ricci_average(geom),
        grad_log_H_sq=glh, min_H=float(geom.H.min()))


def gauss_residual(geom: SurfaceGeometry) -> np.ndarray:
    """Nodewise ``Scal_Sigma - (Scal - 2 Ric(nu,nu) + H^2/2 - |A0|^2)``."""
    return geom.sigma_scal - (geom.scal - 2.0 * geom.ric_nn
                              + 0.5 * geom.H ** 2 - geom.Aring_sq)


def variation_field_from_b(geom: SurfaceGeometry, b) -> VariationField:
    """f = g(b, nu) / H for a constant coordinate vector b."""
    b = np.asarray(b, dtype=float)
    if geom.H.min() <= 0:
        raise HypothesisError(f"min H = {geom.H.min():.6g} <= 0; f = g(b,nu)/H undefined")
    gbn = _ein("i,nij,nj->n", b, geom.g, geom.nu)
    return VariationField(gbn / geom.H, b)


def normal_speed(geom: SurfaceGeometry, V: np.ndarray) -> VariationField:
    """Normal component f = g(V, nu) of a nodal coordinate displacement V."""
    return VariationField(_ein("ni,nij,nj->n", V, geom.g, geom.nu))


def first_variations(geom: SurfaceGeometry, f, model: MetricModel | None = None):
    """(dW, dU, dV, dArea) for the normal variation with speed ``f``."""
    fv = f.values if isinstance(f, VariationField) else np.asarray(f, dtype=float)
    if fv.shape != (geom.size,):
        raise ShapeError(f"variation has shape {fv.shape}, expected ({geom.size},)")
    H = geom.H
    dArea = geom.integrate(H * fv)
    dW = -geom.integrate(el_operator(geom) * fv)
    hess_f = geom.hessian(fv)
    ricT = geom.tangential(geom.ric)
    GT = geom.tangential(geom.einstein)
    A0 = geom.Aring
    dU = -geom.integrate(2.0 * geom.inner(A0, hess_f) + 2.0 * fv * geom.inner(A0, ricT)
                         + fv * H * geom.Aring_sq)
    GNN = _ein("ni,nij,nj->n", geom.nu, geom.einstein, geom.nu)
    df = geom.gradient(fv)
    omega_df = _ein("nab,na,nb->n", geom.gamma_inv, geom.omega, df)
    dV = geom.integrate(-fv * H * GNN - 0.5 * fv * H * geom.scal
                        + 2.0 * fv * geom.inner(A0, GT) - 2.0 * omega_df)
    return dW, dU, dV, dArea
