"""Band-limited spherical-harmonic spheres and their geometry in g and g_E.

Sign conventions: ``nu`` is the outward unit normal and the second
fundamental form is ``A(X, Y) = g(nabla_X nu, Y) = -g(nabla_X Y, nu)``, so a
Euclidean round sphere of radius ``r`` has ``H = 2/r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sh
from .ambient import DomainError, MetricModel, _metric_unchecked, _ricci_scal, check_domain


def _ein(*operands):
    return np.einsum(*operands, optimize=True)


class ImmersionError(ValueError):
    """The parameterisation degenerates (det gamma <= 0) at some node."""


class ShapeError(ValueError):
    """A nodal field does not match the geometry's grid."""


@dataclass
class SphereParam:
    band_limit: int
    coeffs: np.ndarray  # shape (3, (L+1)^2)
    n_theta: int
    n_phi: int

    def __post_init__(self):
        self.coeffs = np.array(self.coeffs, dtype=float)
        L = int(self.band_limit)
        if L < 1:
            raise ValueError(f"band_limit: must be >= 1, got {L}")
        if self.coeffs.shape != (3, sh.n_coeffs(L)):
            raise ValueError(f"coeffs: expected shape (3, {sh.n_coeffs(L)}), "
                             f"got {self.coeffs.shape}")
        if self.n_phi < 2 * L + 2:
            raise ValueError(f"n_phi: must be >= 2L+2 = {2 * L + 2}, got {self.n_phi}")
        if self.n_theta < L + 1:
            raise ValueError(f"n_theta: must be >= L+1 = {L + 1}, got {self.n_theta}")

    @property
    def grid(self) -> sh.SphereGrid:
        return sh.grid(self.n_theta, self.n_phi)

    def positions(self) -> np.ndarray:
        return self.grid.synthesize(self.coeffs, self.band_limit)

    def with_coeffs(self, coeffs: np.ndarray) -> "SphereParam":
        return SphereParam(self.band_limit, coeffs, self.n_theta, self.n_phi)

    def with_grid(self, n_theta: int, n_phi: int) -> "SphereParam":
        return SphereParam(self.band_limit, self.coeffs.copy(), n_theta, n_phi)

    def with_band_limit(self, L: int) -> "SphereParam":
        """Zero-padded (or truncated) copy with a new band limit."""
        c = np.zeros((3, sh.n_coeffs(L)))
        n = min(sh.n_coeffs(L), self.coeffs.shape[1])
        c[:, :n] = self.coeffs[:, :n]
        return SphereParam(L, c, self.n_theta, self.n_phi)

    def translated(self, t) -> "SphereParam":
        c = self.coeffs.copy()
        c[:, 0] += np.asarray(t, dtype=float) * np.sqrt(4.0 * np.pi)
        return self.with_coeffs(c)

    def evaluate_at(self, theta, phi) -> np.ndarray:
        return sh.evaluate(self.coeffs, self.band_limit, theta, phi)


def round_sphere_coeffs(center, radius: float, L: int) -> np.ndarray:
    c = np.zeros((3, sh.n_coeffs(L)))
    c[:, 0] = np.asarray(center, dtype=float) * np.sqrt(4.0 * np.pi)
    a = radius * np.sqrt(4.0 * np.pi / 3.0)
    c[0, sh.lm_index(1, 1)] = a
    c[1, sh.lm_index(1, -1)] = a
    c[2, sh.lm_index(1, 0)] = a
    return c


def build_round_sphere(center, radius: float, L: int, n_theta: int, n_phi: int,
                       model: MetricModel | None = None) -> SphereParam:
    """Coordinate sphere of the given centre and radius."""
    if not radius > 0:
        raise ValueError(f"radius: must be positive, got {radius}")
    center = np.asarray(center, dtype=float)
    if model is not None and np.linalg.norm(center) + radius >= model.rho:
        raise DomainError(f"sphere |center| + radius = {np.linalg.norm(center) + radius:.6g} "
                          f"exits B_rho (rho = {model.rho})")
    return SphereParam(L, round_sphere_coeffs(center, radius, L), n_theta, n_phi)


def build_ellipsoid(center, semiaxes, L: int, n_theta: int, n_phi: int) -> SphereParam:
    """Axis-aligned ellipsoid; exactly representable with L >= 1."""
    c = round_sphere_coeffs(center, 1.0, L)
    a = np.asarray(semiaxes, dtype=float)
    c[0, sh.lm_index(1, 1)] *= a[0]
    c[1, sh.lm_index(1, -1)] *= a[1]
    c[2, sh.lm_index(1, 0)] *= a[2]
    return SphereParam(L, c, n_theta, n_phi)


def perturbed_sphere(rng: np.random.Generator, center, radius: float, L: int,
                     n_theta: int, n_phi: int, amplitude: float = 0.05) -> SphereParam:
    """Round sphere plus a random band-limited displacement.

    Mode amplitudes decay like ``l^-2`` so the surface stays convex-ish for
    small ``amplitude`` (relative to ``radius``).
    """
    c = round_sphere_coeffs(center, radius, L)
    pairs = sh.lm_pairs(L)
    decay = np.where(pairs[:, 0] >= 2, 1.0 / np.maximum(pairs[:, 0], 1) ** 2, 0.0)
    c += amplitude * radius * rng.normal(size=c.shape) * decay
    return SphereParam(L, c, n_theta, n_phi)


_ORDERS3 = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
            (3, 0), (2, 1), (1, 2), (0, 3)]


def _embedding_derivatives(param: SphereParam):
    grid = param.grid
    d = {o: grid.synthesize(param.coeffs, param.band_limit, *o) for o in _ORDERS3}
    N = grid.size
    F = d[(0, 0)]
    Fa = np.stack([d[(1, 0)], d[(0, 1)]], axis=1)  # (N, 2, 3)
    Fab = np.empty((N, 2, 2, 3))
    Fab[:, 0, 0] = d[(2, 0)]
    Fab[:, 0, 1] = Fab[:, 1, 0] = d[(1, 1)]
    Fab[:, 1, 1] = d[(0, 2)]
    Fabc = np.empty((N, 2, 2, 2, 3))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                n_phi = a + b + c
                Fabc[:, a, b, c] = d[(3 - n_phi, n_phi)]
    return F, Fa, Fab, Fabc


@dataclass
class SurfaceGeometry:
    """Nodal geometry of a parameterised sphere in both metrics.

    Tensor components are with respect to the coordinate frame
    ``(F_theta, F_phi)``; quadrature weights include the area element.
    """

    param: SphereParam
    model: MetricModel
    F: np.ndarray
    Fa: np.ndarray
    Fab: np.ndarray
    gamma: np.ndarray
    gamma_inv: np.ndarray
    dgamma: np.ndarray  # d_c gamma_ab, index [n, a, b, c]
    gammaE: np.ndarray
    nu: np.ndarray
    nuE: np.ndarray
    A: np.ndarray
    H: np.ndarray
    Aring: np.ndarray
    Aring_sq: np.ndarray
    AE: np.ndarray
    H_E: np.ndarray
    AringE: np.ndarray
    AringE_sq: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    ambient_gamma: np.ndarray
    ric: np.ndarray
    scal: np.ndarray
    einstein: np.ndarray
    ric_nn: np.ndarray
    omega: np.ndarray
    dmu: np.ndarray
    dmuE: np.ndarray
    sqrt_det: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> sh.SphereGrid:
        return self.param.grid

    @property
    def size(self) -> int:
        return self.F.shape[0]

    @property
    def area(self) -> float:
        return float(np.sum(self.dmu))

    @property
    def areaE(self) -> float:
        return float(np.sum(self.dmuE))

    def integrate(self, values) -> float:
        return float(np.dot(self.dmu, values))

    def integrateE(self, values) -> float:
        return float(np.dot(self.dmuE, values))

    @property
    def surface_christoffel(self) -> np.ndarray:
        """Christoffel symbols of gamma, index [n, c, a, b] = Gamma^c_ab."""
        if "chris" not in self._cache:
            dg = self.dgamma
            lower = _ein("nbda->nabd", dg) + _ein("nadb->nabd", dg) - dg
            self._cache["chris"] = 0.5 * _ein("ncd,nabd->ncab", self.gamma_inv, lower)
        return self._cache["chris"]

    @property
    def lapH(self) -> np.ndarray:
        if "lapH" not in self._cache:
            self._cache["lapH"] = laplace_beltrami(self, self.H)
        return self._cache["lapH"]

    @property
    def sigma_scal(self) -> np.ndarray:
        if "sigma_scal" not in self._cache:
            self._cache["sigma_scal"] = intrinsic_scalar_curvature(self)
        return self._cache["sigma_scal"]

    def tangential(self, T: np.ndarray) -> np.ndarray:
        """Pull back an ambient (N,3,3) covariant 2-tensor to the frame F_a."""
        return _ein("nai,nij,nbj->nab", self.Fa, T, self.Fa)

    def inner(self, S: np.ndarray, T: np.ndarray) -> np.ndarray:
        """<S, T>_gamma for surface 2-tensors."""
        gi = self.gamma_inv
        return _ein("nac,nbd,nab,ncd->n", gi, gi, S, T)

    def surface_derivatives(self, f: np.ndarray):
        """Spectral first and second parameter derivatives of a nodal field."""
        f = self._check(f)
        d = self.grid.derivatives(f, [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
        df = np.stack([d[0], d[1]], axis=1)
        ddf = np.empty((self.size, 2, 2))
        ddf[:, 0, 0] = d[2]
        ddf[:, 0, 1] = ddf[:, 1, 0] = d[3]
        ddf[:, 1, 1] = d[4]
        return df, ddf

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Covariant components d_a f."""
        f = self._check(f)
        d = self.grid.derivatives(f, [(1, 0), (0, 1)])
        return np.stack(d, axis=1)

    def hessian(self, f: np.ndarray) -> np.ndarray:
        """Covariant Hessian nabla^2_ab f."""
        df, ddf = self.surface_derivatives(f)
        return ddf - _ein("ncab,nc->nab", self.surface_christoffel, df)

    def grad_norm_sq(self, f: np.ndarray) -> np.ndarray:
        df = self.gradient(f)
        return _ein("nab,na,nb->n", self.gamma_inv, df, df)

    def _check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.size,):
            raise ShapeError(f"field has shape {f.shape}, expected ({self.size},)")
        return f


def _surface_metric_derivs(Fa, Fab, g, dg):
    """gamma_ab = g(F_a, F_b) and its first parameter derivatives."""
    gam = _ein("nai,nij,nbj->nab", Fa, g, Fa)
    # derivative of g along the surface: D_c g_ij = dg_ijk F^k_c
    Dg = _ein("nijk,nck->nijc", dg, Fa)
    dgam = (_ein("nijc,nai,nbj->nabc", Dg, Fa, Fa)
            + _ein("nij,naci,nbj->nabc", g, Fab, Fa)
            + _ein("nij,nai,nbcj->nabc", g, Fa, Fab))
    return gam, dgam


def _surface_metric_second(Fa, Fab, Fabc, g, dg, d2g):
    """Second parameter derivatives d_c d_d gamma_ab, index [n, a, b, c, d]."""
    Dg = _ein("nijk,nck->nijc", dg, Fa)
    # D_d D_c g_ij = d2g_ijkl F^k_c F^l_d + dg_ijk F^k_cd
    DDg = (_ein("nijkl,nck,ndl->nijcd", d2g, Fa, Fa)
           + _ein("nijk,ncdk->nijcd", dg, Fab))
    d2gam = (_ein("nijcd,nai,nbj->nabcd", DDg, Fa, Fa)
             + _ein("nijc,nadi,nbj->nabcd", Dg, Fab, Fa)
             + _ein("nijc,nai,nbdj->nabcd", Dg, Fa, Fab)
             + _ein("nijd,naci,nbj->nabcd", Dg, Fab, Fa)
             + _ein("nij,nacdi,nbj->nabcd", g, Fabc, Fa)
             + _ein("nij,naci,nbdj->nabcd", g, Fab, Fab)
             + _ein("nijd,nai,nbcj->nabcd", Dg, Fa, Fab)
             + _ein("nij,nadi,nbcj->nabcd", g, Fab, Fab)
             + _ein("nij,nai,nbcdj->nabcd", g, Fa, Fabc))
    return d2gam


def geometry(param: SphereParam, model: MetricModel) -> SurfaceGeometry:
    """Full nodal geometry of ``param`` in the ambient metric of ``model``."""
    F, Fa, Fab, Fabc = _embedding_derivatives(param)
    check_domain(model, F)
    g, g_inv, dg, d2g, chris, ric, scal = _ricci_scal(F, model)
    grid = param.grid
    gam, dgam = _surface_metric_derivs(Fa, Fab, g, dg)
    det = gam[:, 0, 0] * gam[:, 1, 1] - gam[:, 0, 1] ** 2
    if np.any(det <= 0):
        raise ImmersionError(f"det gamma <= 0 at {int(np.sum(det <= 0))} node(s)")
    gam_inv = np.empty_like(gam)
    gam_inv[:, 0, 0] = gam[:, 1, 1] / det
    gam_inv[:, 1, 1] = gam[:, 0, 0] / det
    gam_inv[:, 0, 1] = gam_inv[:, 1, 0] = -gam[:, 0, 1] / det

    n = np.cross(Fa[:, 0], Fa[:, 1])
    nE_norm = np.linalg.norm(n, axis=1)
    if np.any(nE_norm <= 0):
        raise ImmersionError("Euclidean tangent vectors are parallel at some node")
    nuE = n / nE_norm[:, None]
    # g-normal: g(g^-1 n, F_a) = n . F_a = 0
    v = _ein("nij,nj->ni", g_inv, n)
    nu = v / np.sqrt(_ein("ni,ni->n", n, v))[:, None]

    # A_ab = -g(F_ab + Gamma(F_a, F_b), nu)
    cov = Fab + _ein("nkij,nai,nbj->nabk", chris, Fa, Fa)
    gnu = _ein("nij,nj->ni", g, nu)
    A = -_ein("nabk,nk->nab", cov, gnu)
    H = _ein("nab,nab->n", gam_inv, A)
    Aring = A - 0.5 * H[:, None, None] * gam
    Aring_sq = _ein("nac,nbd,nab,ncd->n", gam_inv, gam_inv, Aring, Aring)

    gamE = _ein("nai,nbi->nab", Fa, Fa)
    detE = gamE[:, 0, 0] * gamE[:, 1, 1] - gamE[:, 0, 1] ** 2
    gamE_inv = np.empty_like(gamE)
    gamE_inv[:, 0, 0] = gamE[:, 1, 1] / detE
    gamE_inv[:, 1, 1] = gamE[:, 0, 0] / detE
    gamE_inv[:, 0, 1] = gamE_inv[:, 1, 0] = -gamE[:, 0, 1] / detE
    AE = -_ein("nabk,nk->nab", Fab, nuE)
    H_E = _ein("nab,nab->n", gamE_inv, AE)
    AringE = AE - 0.5 * H_E[:, None, None] * gamE
    AringE_sq = _ein("nac,nbd,nab,ncd->n", gamE_inv, gamE_inv, AringE, AringE)

    sin_t = np.repeat(grid.sin_theta, grid.n_phi)
    sqrt_det = np.sqrt(det)
    base = grid.weights / sin_t
    dmu = base * sqrt_det
    dmuE = base * np.sqrt(detE)

    G = ric - 0.5 * scal[:, None, None] * g
    ric_nn = _ein("ni,nij,nj->n", nu, ric, nu)
    omega = _ein("ni,nij,naj->na", nu, ric, Fa)

    geom = SurfaceGeometry(
        param=param, model=model, F=F, Fa=Fa, Fab=Fab, gamma=gam, gamma_inv=gam_inv,
        dgamma=dgam, gammaE=gamE, nu=nu, nuE=nuE, A=A, H=H, Aring=Aring,
        Aring_sq=Aring_sq, AE=AE, H_E=H_E, AringE=AringE, AringE_sq=AringE_sq,
        g=g, g_inv=g_inv, ambient_gamma=chris, ric=ric, scal=scal, einstein=G,
        ric_nn=ric_nn, omega=omega, dmu=dmu, dmuE=dmuE, sqrt_det=sqrt_det)
    geom._cache["second_inputs"] = (Fabc, dg, d2g)
    return geom


def laplace_beltrami(geom: SurfaceGeometry, f) -> np.ndarray:
    """Laplace-Beltrami operator gamma^ab (d_ab f - Gamma^c_ab d_c f)."""
    return _ein("nab,nab->n", geom.gamma_inv, geom.hessian(f))


def intrinsic_scalar_curvature(geom: SurfaceGeometry) -> np.ndarray:
    """Scalar curvature 2K of gamma from the Brioschi formula.

    Uses only gamma and its parameter derivatives, never the second
    fundamental form.
    """
    g = geom.gamma
    dg = geom.dgamma
    if "d2gamma" not in geom._cache:
        Fabc, dg3, d2g = geom._cache["second_inputs"]
        geom._cache["d2gamma"] = _surface_metric_second(geom.Fa, geom.Fab, Fabc, geom.g, dg3, d2g)
    d2 = geom._cache["d2gamma"]
    E, Fm, G = g[:, 0, 0], g[:, 0, 1], g[:, 1, 1]
    Eu, Ev = dg[:, 0, 0, 0], dg[:, 0, 0, 1]
    Fu, Fv = dg[:, 0, 1, 0], dg[:, 0, 1, 1]
    Gu, Gv = dg[:, 1, 1, 0], dg[:, 1, 1, 1]
    Evv = d2[:, 0, 0, 1, 1]
    Guu = d2[:, 1, 1, 0, 0]
    Fuv = d2[:, 0, 1, 0, 1]
    M1 = np.empty((geom.size, 3, 3))
    M1[:, 0] = np.stack([-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev], axis=1)
    M1[:, 1] = np.stack([Fv - 0.5 * Gu, E, Fm], axis=1)
    M1[:, 2] = np.stack([0.5 * Gv, Fm, G], axis=1)
    M2 = np.empty((geom.size, 3, 3))
    M2[:, 0] = np.stack([np.zeros_like(E), 0.5 * Ev, 0.5 * Gu], axis=1)
    M2[:, 1] = np.stack([0.5 * Ev, E, Fm], axis=1)
    M2[:, 2] = np.stack([0.5 * Gu, Fm, G], axis=1)
    K = (np.linalg.det(M1) - np.linalg.det(M2)) / (E * G - Fm ** 2) ** 2
    return 2.0 * K


def position_field(x: np.ndarray):
    """X = x with Jacobian the identity."""
    x = np.atleast_2d(x)
    return x.copy(), np.broadcast_to(np.eye(3), (x.shape[0], 3, 3))


def constant_field(b):
    b = np.asarray(b, dtype=float)

    def field(x: np.ndarray):
        x = np.atleast_2d(x)
        return np.broadcast_to(b, x.shape).copy(), np.zeros((x.shape[0], 3, 3))

    return field


def tangential_divergence(geom: SurfaceGeometry, X) -> np.ndarray:
    """div_Sigma X = gamma^ab g(nabla_{F_a} X, F_b) for a coordinate field X.

    ``X(points) -> (values (N,3), jacobian (N,3,3) with [n, i, j] = d_j X^i)``.
    """
    val, jac = X(geom.F)
    DX = (_ein("nij,naj->nai", jac, geom.Fa)
          + _ein("nkij,nai,nj->nak", geom.ambient_gamma, geom.Fa, val))
    M = _ein("nak,nkl,nbl->nab", DX, geom.g, geom.Fa)
    return _ein("nab,nab->n", geom.gamma_inv, M)


def tangential_divergence_check(geom: SurfaceGeometry, X) -> float:
    """|int div_Sigma X dmu - int H g(X, nu) dmu| (vanishes on closed surfaces)."""
    val, _ = X(geom.F)
    lhs = geom.integrate(tangential_divergence(geom, X))
    rhs = geom.integrate(geom.H * _ein("ni,nij,nj->n", val, geom.g, geom.nu))
    return abs(lhs - rhs)


def export_obj(param: SphereParam, path) -> None:
    """Write the evaluated node grid (plus both poles) as a Wavefront OBJ mesh."""
    grid = param.grid
    P = param.positions().reshape(grid.n_theta, grid.n_phi, 3)
    poles = param.evaluate_at(np.array([0.0, np.pi]), np.array([0.0, 0.0]))
    nt, nph = grid.n_theta, grid.n_phi
    lines = ["# spherical-harmonic surface, band_limit=%d" % param.band_limit]
    for p in P.reshape(-1, 3):
        lines.append("v %r %r %r" % tuple(float(v) for v in p))
    lines.append("v %r %r %r" % tuple(float(v) for v in poles[0]))
    lines.append("v %r %r %r" % tuple(float(v) for v in poles[1]))
    north, south = nt * nph + 1, nt * nph + 2
    vid = lambda i, j: i * nph + (j % nph) + 1
    for j in range(nph):
        lines.append(f"f {north} {vid(0, j)} {vid(0, j + 1)}")
    for i in range(nt - 1):
        for j in range(nph):
            lines.append(f"f {vid(i, j)} {vid(i + 1, j)} {vid(i + 1, j + 1)} {vid(i, j + 1)}")
    for j in range(nph):
        lines.append(f"f {south} {vid(nt - 1, j + 1)} {vid(nt - 1, j)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
