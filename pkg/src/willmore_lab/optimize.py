"""Area-constrained critical points of W over spherical-harmonic coefficients.

The augmented Lagrangian ``W + lam (|S| - a) + (mu/2)(|S| - a)^2`` is
minimised by BFGS with Armijo backtracking in a reduced coordinate space:
coefficient directions whose normal speed ``g(dF/dc, nu)`` vanishes (pure
reparameterisations) are removed by an SVD of the weighted normal-speed
matrix, recomputed at the start of every outer round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import functionals as fn
from . import sh
from .ambient import DomainError, MetricModel
from .functionals import FunctionalReport, HypothesisError
from .surface import ImmersionError, SphereParam, SurfaceGeometry, geometry


class GradientCheckError(RuntimeError):
    """Analytic shape gradient disagrees with finite differences."""


@dataclass
class OptimizeOptions:
    area_target: float
    max_outer: int = 12
    max_inner: int = 150
    el_tol: float = 1e-6
    area_tol: float = 1e-9
    penalty0: float = 10.0
    step0: float = 1.0
    freeze_center: bool = False
    seed: int = 0
    check_gradient: bool = True

    def __post_init__(self):
        for name in ("area_target", "el_tol", "area_tol", "penalty0", "step0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"optimizer.{name} must be positive, got {getattr(self, name)!r}")
        for name in ("max_outer", "max_inner"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"optimizer.{name} must be >= 1")


@dataclass
class SolveResult:
    surface: SphereParam
    lam: float
    report: FunctionalReport
    converged: bool
    history: list = field(default_factory=list)  # (iter, W, area, el_residual, lambda)
    scaled_residual: float = math.inf
    kappa: np.ndarray | None = None  # translation multiplier when the centre is frozen
    gradient_check: float | None = None
    message: str = ""


class MultiplierEstimate(NamedTuple):
    lam: float
    residual: float
    lam_identity: float | None


def extract_multiplier(geom: SurfaceGeometry, model: MetricModel | None = None) -> MultiplierEstimate:
    """Least-squares multiplier, its EL residual, and the integrated-identity value."""
    if geom.H.min() <= 0:
        raise HypothesisError(f"min H = {geom.H.min():.6g} <= 0")
    lam, res = fn.lambda_least_squares(geom)
    return MultiplierEstimate(lam, res, fn.lambda_identity(geom))


def scaled_residual(geom: SurfaceGeometry) -> float:
    """Dimensionless criticality measure ||EL + lambda_lsq H||_{L2} * area."""
    return fn.lambda_least_squares(geom)[1] * geom.area


def center_force(geom: SurfaceGeometry) -> tuple[float, np.ndarray, float]:
    """Fit EL + lam H + kappa . g(e_j, nu) = 0 in L2(dmu).

    A surface critical under fixed area *and* fixed centre satisfies this
    with a translation multiplier ``kappa``.  Returns ``(lam, kappa, scaled
    residual)``.
    """
    E = fn.el_operator(geom)
    X = np.column_stack([geom.H, np.einsum("nij,nj->ni", geom.g, geom.nu)])
    w = np.sqrt(geom.dmu)
    coef = np.linalg.lstsq(X * w[:, None], -E * w, rcond=None)[0]
    res = math.sqrt(max(geom.integrate((E + X @ coef) ** 2), 0.0))
    return float(coef[0]), coef[1:], res * geom.area


_BASIS: dict = {}


def _basis_values(param: SphereParam) -> np.ndarray:
    # Y_i at the nodes, shape (size, n_coeffs)
    key = (param.n_theta, param.n_phi, param.band_limit)
    if key not in _BASIS:
        nc = param.coeffs.shape[1]
        _BASIS[key] = param.grid.synthesize(np.eye(nc), param.band_limit)
    return _BASIS[key]


def _coefficient_gradient(geom: SurfaceGeometry, density: np.ndarray) -> np.ndarray:
    """d/dc_{j,i} of a functional whose normal first-variation density is ``density``."""
    B = _basis_values(geom.param)
    gnu = np.einsum("nij,nj->ni", geom.g, geom.nu)
    return ((geom.dmu * density)[:, None] * gnu).T @ B


def _normal_basis(geom: SurfaceGeometry, freeze_center: bool) -> np.ndarray:
    """Coefficient directions (3*nc, k) that move the surface normally.

    On a round sphere the normal speeds of degree-L coefficient changes span
    exactly the harmonics of degree <= L+1, so the leading (L+2)^2 singular
    directions are kept and the rest (reparameterisations) dropped.  The SVD
    is taken in the coefficient norm weighted by ``1 + l(l+1)``, so each
    normal speed is realised by its smoothest coefficient change (a
    translation by the degree-0 coefficients, not by degree-2 ones).
    With ``freeze_center`` only directions whose normal speed is
    L2(dmu)-orthogonal to the rigid translations g(e_j, nu) are kept.
    """
    B = _basis_values(geom.param)
    nc = B.shape[1]
    L = geom.param.band_limit
    ell = sh.lm_pairs(L)[:, 0]
    scale = np.tile(1.0 / np.sqrt(1.0 + ell * (ell + 1.0)), 3)
    gnu = np.einsum("nij,nj->ni", geom.g, geom.nu)
    w = np.sqrt(geom.dmu)
    N = (w[:, None, None] * gnu[:, :, None] * B[:, None, :]).reshape(geom.size, 3 * nc)
    _, _, vt = np.linalg.svd(N * scale, full_matrices=False)
    V = scale[:, None] * vt[:min((L + 2) ** 2, 3 * nc)].T
    if freeze_center:
        C = (N @ V).T @ (w[:, None] * gnu)
        Q = np.linalg.qr(C, mode="complete")[0]
        V = V @ Q[:, 3:]
    return V


def _bending_metric(geom: SurfaceGeometry, V: np.ndarray, r: float) -> np.ndarray:
    """Model Hessian of W on the reduced directions.

    Uses the round-sphere spectrum of the Willmore operator: a normal speed of
    degree l costs about l(l+1)(l(l+1)-2)/(2 r^2), floored at the l = 2 value
    so that translations and dilations stay well conditioned.
    """
    B = _basis_values(geom.param)
    gnu = np.einsum("nij,nj->ni", geom.g, geom.nu)
    U = (gnu[:, :, None] * B[:, None, :]).reshape(geom.size, -1) @ V
    C = geom.grid.analyze(U)  # (k, n_coeffs)
    ell = sh.lm_pairs(geom.grid.lmax)[:, 0].astype(float)
    w = np.maximum(ell * (ell + 1) * (ell * (ell + 1) - 2), 24.0) / (r * r)
    return (C * w) @ C.T


class _Objective:
    """Augmented Lagrangian and its reduced gradient at z, around base coefficients."""

    def __init__(self, model, param, base, V, a, lam_hat, mu):
        self.model, self.param, self.base, self.V = model, param, base, V
        self.a, self.lam_hat, self.mu = a, lam_hat, mu

    def geometry(self, z):
        c = self.base + (self.V @ z).reshape(self.base.shape)
        return geometry(self.param.with_coeffs(c), self.model)

    def value(self, geom):
        d = geom.area - self.a
        return fn.willmore(geom) + self.lam_hat * d + 0.5 * self.mu * d * d

    def gradient(self, geom):
        lam_eff = self.lam_hat + self.mu * (geom.area - self.a)
        density = -fn.el_operator(geom) + lam_eff * geom.H
        return self.V.T @ _coefficient_gradient(geom, density).ravel()

    def trial(self, z):
        """(value, geom) or None when the shape leaves the admissible set."""
        try:
            geom = self.geometry(z)
        except (ImmersionError, DomainError):
            return None
        if not np.all(np.isfinite(geom.H)) or geom.H.min() <= 0:
            return None
        return self.value(geom), geom


def _check_gradient(obj: _Objective, geom, g, rng, scale) -> float:
    d = rng.standard_normal(g.size)
    d += g / (np.linalg.norm(g) + 1e-300) * np.linalg.norm(d)
    d /= np.linalg.norm(d)
    eps = 1e-4 * scale
    plus = obj.trial(eps * d)
    minus = obj.trial(-eps * d)
    if plus is None or minus is None:
        raise GradientCheckError("finite-difference probe left the admissible set")
    fd = (plus[0] - minus[0]) / (2 * eps)
    an = float(g @ d)
    return abs(fd - an) / max(abs(fd), abs(an), 1e-300)


def _criticality(geom: SurfaceGeometry, freeze_center: bool):
    if freeze_center:
        lam, kappa, res = center_force(geom)
        return lam, res, kappa
    lam, res = fn.lambda_least_squares(geom)
    return lam, res * geom.area, None


def solve(model: MetricModel, init: SphereParam, opts: OptimizeOptions) -> SolveResult:
    """Augmented-Lagrangian search for a surface of Willmore type with area a.

    Convergence means scaled residual ``||EL + lam H||_{L2} * area <= el_tol``,
    relative area error ``<= area_tol`` and ``H > 0``.  With ``freeze_center``
    the residual also absorbs the translation multiplier (see
    :func:`center_force`).
    """
    a = opts.area_target
    r = math.sqrt(a / (4 * math.pi))
    if r >= model.rho / 2:
        raise ValueError(f"area_target {a} too large for rho = {model.rho}")
    geom = geometry(init, model)
    if geom.H.min() <= 0:
        raise HypothesisError(f"initial surface has min H = {geom.H.min():.6g} <= 0")
    if not 0.25 <= geom.area / a <= 4.0:
        raise ValueError(f"initial area {geom.area:.6g} not within a factor 4 of {a}")

    rng = np.random.default_rng(opts.seed)
    lam_hat = fn.lambda_least_squares(geom)[0]
    mu = opts.penalty0 / a ** 2
    coeffs = np.array(init.coeffs, dtype=float)
    history = []
    it = 0
    grad_err = None
    converged = False
    message = "max_outer reached"
    prev_violation = abs(geom.area - a)

    def record(geom):
        lam, res = fn.lambda_least_squares(geom)
        history.append((it, fn.willmore(geom), geom.area, res, lam))

    record(geom)
    for outer in range(opts.max_outer):
        V = _normal_basis(geom, opts.freeze_center)
        obj = _Objective(model, init, coeffs, V, a, lam_hat, mu)
        z = np.zeros(V.shape[1])
        f = obj.value(geom)
        g = obj.gradient(geom)
        if opts.check_gradient and grad_err is None:
            grad_err = _check_gradient(obj, geom, g, rng, r)
            if grad_err > 1e-4:
                raise GradientCheckError(f"shape gradient mismatch {grad_err:.3e} > 1e-4")
        gA = V.T @ _coefficient_gradient(geom, geom.H).ravel()
        H0 = np.linalg.inv(_bending_metric(geom, V, r) + mu * np.outer(gA, gA)) * opts.step0
        Hinv = H0.copy()
        for _ in range(opts.max_inner):
            if np.linalg.norm(g) * r <= 1e-3 * opts.el_tol:
                break
            p = -Hinv @ g
            slope = float(g @ p)
            if slope >= 0:
                Hinv = H0.copy()
                p = -Hinv @ g
                slope = float(g @ p)
            # cap the largest nodal displacement of a trial step at r/20
            move = np.abs(_basis_values(init) @ (V @ p).reshape(3, -1).T).max()
            if move > 0.05 * r:
                p *= 0.05 * r / move
                slope = float(g @ p)
            # Armijo, relaxed by the rounding level of f so that the last
            # Newton-like steps are not rejected for noise
            noise = 16 * np.finfo(float).eps * abs(f)
            step = 1.0
            accepted = None
            for _ in range(30):
                t = obj.trial(z + step * p)
                if t is not None and t[0] <= f + 1e-4 * step * slope + noise:
                    accepted = t
                    break
                step *= 0.5
            if accepted is None:
                break
            z_new = z + step * p
            f_new, geom = accepted
            g_new = obj.gradient(geom)
            s, y = z_new - z, g_new - g
            sy = float(s @ y)
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                rho_ = 1.0 / sy
                Hy = Hinv @ y
                Hinv = (Hinv - rho_ * (np.outer(s, Hy) + np.outer(Hy, s))
                        + (rho_ * rho_ * float(y @ Hy) + rho_) * np.outer(s, s))
            z, f, g = z_new, f_new, g_new
            it += 1
            record(geom)
            # the normal basis is only trusted near the surface it was built on
            if np.abs(_basis_values(init) @ (V @ z).reshape(3, -1).T).max() > 0.25 * r:
                break
        coeffs = obj.base + (V @ z).reshape(coeffs.shape)
        violation = abs(geom.area - a)
        lam_hat += mu * (geom.area - a)
        if violation > opts.area_tol * a and violation > 0.25 * prev_violation:
            mu *= 10.0
        prev_violation = violation
        sres = _criticality(geom, opts.freeze_center)[1]
        if sres <= opts.el_tol and violation <= opts.area_tol * a and geom.H.min() > 0:
            converged = True
            message = f"converged after {outer + 1} outer rounds"
            break

    surface = init.with_coeffs(coeffs)
    lam, sres, kappa = _criticality(geom, opts.freeze_center)
    return SolveResult(surface=surface, lam=lam, report=fn.evaluate(geom, model),
                       converged=converged, history=history, scaled_residual=sres,
                       kappa=kappa, gradient_check=grad_err, message=message)
