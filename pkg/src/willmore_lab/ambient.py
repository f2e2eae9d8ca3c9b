"""Analytic ambient metrics g = g_E + h in geodesic normal coordinates.

Three families are supported:

* ``flat``      -- the Euclidean metric.
* ``spaceform`` -- constant sectional curvature ``k`` written in normal
  coordinates, ``g_ij = q(|x|^2) delta_ij + w(|x|^2) x_i x_j``.
* ``quadratic`` -- the normal-coordinate Taylor expansion truncated after the
  cubic term, realising a prescribed ``Ric(0)`` and ``grad Scal(0)``.

All evaluators are vectorised over a leading axis of points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _ein(*operands):
    return np.einsum(*operands, optimize=True)

KINDS = ("flat", "spaceform", "quadratic")

_SERIES_TERMS = 60
# q(y) = sin^2(sqrt y)/y and t(y) = (1 - q(y))/y as power series in y
_Q_COEF = np.array([(-1) ** n * 2.0 ** (2 * n + 1) / math.factorial(2 * n + 2)
                    for n in range(_SERIES_TERMS)])
_T_COEF = np.array([(-1) ** n * 2.0 ** (2 * n + 3) / math.factorial(2 * n + 4)
                    for n in range(_SERIES_TERMS)])


class DomainError(ValueError):
    """A point or surface lies outside the coordinate ball B_rho."""


class ValidationError(ValueError):
    """Malformed model parameters."""


def _poly(coef: np.ndarray, y: np.ndarray, deriv: int = 0) -> np.ndarray:
    c = np.polynomial.polynomial.polyder(coef, deriv) if deriv else coef
    return np.polynomial.polynomial.polyval(y, c)


def riemann_from_ricci(ric: np.ndarray, scal: float | None = None) -> np.ndarray:
    """Riemann tensor R_ikjl of a 3-manifold at a point where g = identity.

    Valid because the Weyl tensor vanishes in dimension three.  The index
    convention is such that contracting the first and third slots returns
    ``ric``.
    """
    ric = np.asarray(ric, dtype=float)
    if scal is None:
        scal = float(np.trace(ric))
    d = np.eye(3)
    return (_ein("ij,kl->ikjl", d, ric) + _ein("kl,ij->ikjl", d, ric)
            - _ein("il,kj->ikjl", d, ric) - _ein("kj,il->ikjl", d, ric)
            - 0.5 * scal * (_ein("ij,kl->ikjl", d, d)
                            - _ein("il,kj->ikjl", d, d)))


def bianchi_coefficients() -> tuple[float, float]:
    """(alpha, beta) in grad_m Ric_ij = alpha s_m d_ij + beta (s_i d_jm + s_j d_im).

    Fixed by trace(grad_m Ric) = s_m and div Ric = s / 2.
    """
    M = np.array([[3.0, 2.0], [1.0, 4.0]])
    alpha, beta = np.linalg.solve(M, np.array([1.0, 0.5]))
    return float(alpha), float(beta)


@dataclass(frozen=True)
class MetricModel:
    kind: str = "flat"
    k: float = 0.0
    ric0: tuple = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    scal_grad0: tuple = (0.0, 0.0, 0.0)
    rho: float = 1.0
    h0: float | None = None
    _quad: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind: expected one of {KINDS}, got {self.kind!r}")
        if not self.rho > 0:
            raise ValidationError(f"rho: must be positive, got {self.rho}")
        ric0 = np.asarray(self.ric0, dtype=float)
        if ric0.shape != (3, 3):
            raise ValidationError("ric0: expected 9 entries (3x3 row-major)")
        if not np.allclose(ric0, ric0.T, rtol=0, atol=1e-14 * (1 + np.abs(ric0).max())):
            raise ValidationError("ric0: matrix is not symmetric")
        s = np.asarray(self.scal_grad0, dtype=float)
        if s.shape != (3,):
            raise ValidationError("scal_grad0: expected 3 entries")
        object.__setattr__(self, "ric0", tuple(map(tuple, ric0)))
        object.__setattr__(self, "scal_grad0", tuple(s))
        if self.kind == "spaceform":
            y = self.k * self.rho ** 2
            if self.k > 0 and math.sqrt(y) >= math.pi:
                raise ValidationError("rho: sqrt(k)*rho must stay below pi (conjugate point)")
            if abs(y) > 25.0:
                raise ValidationError("k: |k| rho^2 > 25 is outside the supported range")
        if self.kind == "quadratic":
            object.__setattr__(self, "_quad", _quadratic_tensors(ric0, s))
        if self.h0 is None:
            object.__setattr__(self, "h0", measure_h0(self))

    # convenience constructors
    @classmethod
    def flat(cls, rho: float = 1.0) -> "MetricModel":
        return cls("flat", rho=rho)

    @classmethod
    def spaceform(cls, k: float, rho: float = 1.0) -> "MetricModel":
        return cls("spaceform", k=float(k), rho=rho)

    @classmethod
    def quadratic(cls, ric0, scal_grad0=(0.0, 0.0, 0.0), rho: float = 1.0) -> "MetricModel":
        return cls("quadratic", ric0=np.asarray(ric0, dtype=float),
                   scal_grad0=np.asarray(scal_grad0, dtype=float), rho=rho)

    @property
    def scal0(self) -> float:
        """Scalar curvature at the origin."""
        if self.kind == "spaceform":
            return 6.0 * self.k
        if self.kind == "quadratic":
            return float(np.trace(np.asarray(self.ric0)))
        return 0.0

    @property
    def ricci0(self) -> np.ndarray:
        if self.kind == "spaceform":
            return 2.0 * self.k * np.eye(3)
        if self.kind == "quadratic":
            return np.array(self.ric0)
        return np.zeros((3, 3))

    @property
    def grad_scal0(self) -> np.ndarray:
        if self.kind == "quadratic":
            return np.array(self.scal_grad0)
        return np.zeros(3)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "rho": self.rho}
        if self.kind == "spaceform":
            d["k"] = self.k
        if self.kind == "quadratic":
            d["ric0"] = [float(v) for v in np.ravel(self.ric0)]
            d["scal_grad0"] = [float(v) for v in self.scal_grad0]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricModel":
        known = {"kind", "k", "ric0", "scal_grad0", "rho"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"metric: unknown key {sorted(extra)[0]!r}")
        kind = d.get("kind", "flat")
        rho = float(d.get("rho", 1.0))
        if kind == "flat":
            return cls.flat(rho)
        if kind == "spaceform":
            if "k" not in d:
                raise ValidationError("metric.k: required for kind = 'spaceform'")
            return cls.spaceform(float(d["k"]), rho)
        if kind == "quadratic":
            ric0 = np.asarray(d.get("ric0", [0.0] * 9), dtype=float)
            if ric0.size != 9:
                raise ValidationError("metric.ric0: expected 9 reals (row-major)")
            sg = np.asarray(d.get("scal_grad0", [0.0] * 3), dtype=float)
            if sg.size != 3:
                raise ValidationError("metric.scal_grad0: expected 3 reals")
            return cls.quadratic(ric0.reshape(3, 3), sg, rho)
        raise ValidationError(f"metric.kind: unknown kind {kind!r}")


def _quadratic_tensors(ric0: np.ndarray, s: np.ndarray):
    R = riemann_from_ricci(ric0)
    alpha, beta = bianchi_coefficients()
    d = np.eye(3)
    # dRic[m, i, j] = grad_m Ric_ij(0)
    dRic = (alpha * _ein("m,ij->mij", s, d)
            + beta * (_ein("i,jm->mij", s, d) + _ein("j,im->mij", s, d)))
    dR = np.stack([riemann_from_ricci(dRic[m], s[m]) for m in range(3)])
    # quadratic: Q[i,j,k,l] x_k x_l, symmetric in (k,l)
    Q = -R / 3.0
    Q = _ein("ikjl->ijkl", Q)
    Q = 0.5 * (Q + np.swapaxes(Q, 2, 3))
    # cubic: C[i,j,k,l,m] x_k x_l x_m, fully symmetrised in (k,l,m)
    C = -_ein("mikjl->ijklm", dR) / 6.0
    C = (C + _ein("ijklm->ijlmk", C) + _ein("ijklm->ijmkl", C)
         + _ein("ijklm->ijkml", C) + _ein("ijklm->ijlkm", C)
         + _ein("ijklm->ijmlk", C)) / 6.0
    return Q, C


def _as_points(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def check_domain(model: MetricModel, x: np.ndarray) -> None:
    r = np.linalg.norm(np.atleast_2d(x), axis=-1)
    if np.any(r >= model.rho):
        raise DomainError(f"point with |x| = {r.max():.6g} outside B_rho (rho = {model.rho})")


def _metric_unchecked(model: MetricModel, x: np.ndarray):
    n = x.shape[0]
    eye = np.eye(3)
    if model.kind == "flat":
        return (np.broadcast_to(eye, (n, 3, 3)).copy(), np.zeros((n, 3, 3, 3)),
                np.zeros((n, 3, 3, 3, 3)))
    if model.kind == "quadratic":
        Q, C = model._quad
        g = (eye + _ein("ijkl,nk,nl->nij", Q, x, x)
             + _ein("ijklm,nk,nl,nm->nij", C, x, x, x))
        dg = (2.0 * _ein("ijpl,nl->nijp", Q, x)
              + 3.0 * _ein("ijpkl,nk,nl->nijp", C, x, x))
        d2g = (2.0 * np.broadcast_to(Q, (n, 3, 3, 3, 3))
               + 6.0 * _ein("ijpqk,nk->nijpq", C, x))
        return g, dg, d2g
    # spaceform: g = q(t) I + w(t) x x^T, t = |x|^2, y = k t
    k = model.k
    t = _ein("ni,ni->n", x, x)
    y = k * t
    q = _poly(_Q_COEF, y)
    qt = k * _poly(_Q_COEF, y, 1)
    qtt = k * k * _poly(_Q_COEF, y, 2)
    w = k * _poly(_T_COEF, y)
    wt = k * k * _poly(_T_COEF, y, 1)
    wtt = k ** 3 * _poly(_T_COEF, y, 2)
    xx = _ein("ni,nj->nij", x, x)
    g = q[:, None, None] * eye + w[:, None, None] * xx
    # d_p(x_i x_j) = d_ip x_j + d_jp x_i
    dxx = _ein("ip,nj->nijp", eye, x) + _ein("jp,ni->nijp", eye, x)
    dg = (2.0 * qt[:, None, None, None] * _ein("ij,np->nijp", eye, x)
          + 2.0 * wt[:, None, None, None] * _ein("nij,np->nijp", xx, x)
          + w[:, None, None, None] * dxx)
    xpxq = _ein("np,nq->npq", x, x)
    ddxx = _ein("ip,jq->ijpq", eye, eye) + _ein("jp,iq->ijpq", eye, eye)
    d2g = (_ein("ij,npq->nijpq", eye,
                     2.0 * qt[:, None, None] * eye + 4.0 * qtt[:, None, None] * xpxq)
           + _ein("nij,npq->nijpq", xx,
                       2.0 * wt[:, None, None] * eye + 4.0 * wtt[:, None, None] * xpxq)
           + 2.0 * wt[:, None, None, None, None] * (_ein("np,nijq->nijpq", x, dxx)
                                                    + _ein("nq,nijp->nijpq", x, dxx))
           + w[:, None, None, None, None] * ddxx)
    return g, dg, d2g


def metric_at(model: MetricModel, x):
    """Metric and its first two coordinate derivatives.

    Returns ``g[..., i, j]``, ``dg[..., i, j, k] = d_k g_ij`` and
    ``d2g[..., i, j, k, l] = d_k d_l g_ij``.
    """
    pts, single = _as_points(x)
    check_domain(model, pts)
    out = _metric_unchecked(model, pts)
    return tuple(a[0] for a in out) if single else out


@dataclass
class CurvatureBundle:
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray
    gamma: np.ndarray  # gamma[..., k, i, j] = Gamma^k_ij
    ric: np.ndarray
    scal: np.ndarray
    einstein: np.ndarray
    grad_scal: np.ndarray | None


def _christoffel(g_inv, dg):
    # Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)
    lower = _ein("njli->nijl", dg) + _ein("nilj->nijl", dg) - dg
    return 0.5 * _ein("nkl,nijl->nkij", g_inv, lower)


def _ricci_scal(pts: np.ndarray, model: MetricModel):
    g, dg, d2g = _metric_unchecked(model, pts)
    g_inv = np.linalg.inv(g)
    gam = _christoffel(g_inv, dg)
    lower = (_ein("njli->nijl", dg) + _ein("nilj->nijl", dg) - dg)
    dlower = _ein("njlim->nijlm", d2g) + _ein("niljm->nijlm", d2g) - d2g
    dginv = -_ein("nka,nabm,nbl->nklm", g_inv, dg, g_inv)
    # the two contractions of d_m Gamma^k_ij that Ricci needs
    div_gam = 0.5 * (_ein("nala,ndbl->ndb", dginv, lower)
                     + _ein("nal,ndbla->ndb", g_inv, dlower))
    trace_gam = 0.5 * (_ein("nald,nabl->nbd", dginv, lower)
                       + _ein("nal,nabld->nbd", g_inv, dlower))
    # Ric_bd = d_a G^a_db - d_d G^a_ab + G^a_ae G^e_db - G^a_de G^e_ab
    ric = (div_gam - trace_gam
           + _ein("naae,nedb->nbd", gam, gam) - _ein("nade,neab->nbd", gam, gam))
    ric = 0.5 * (ric + np.swapaxes(ric, 1, 2))
    scal = _ein("nij,nij->n", g_inv, ric)
    return g, g_inv, dg, d2g, gam, ric, scal


def curvature_at(model: MetricModel, x, with_grad: bool = True) -> CurvatureBundle:
    """Christoffels, Ricci, scalar and Einstein curvature at point(s) ``x``.

    ``grad_scal`` (contravariant) uses central differences of the scalar
    curvature with step ``1e-5 * rho``.
    """
    pts, single = _as_points(x)
    check_domain(model, pts)
    g, g_inv, dg, d2g, gam, ric, scal = _ricci_scal(pts, model)
    G = ric - 0.5 * scal[:, None, None] * g
    grad = None
    if with_grad:
        if model.kind == "flat":
            grad = np.zeros_like(pts)
        else:
            h = 1e-5 * model.rho
            d = np.empty_like(pts)
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                sp = _ricci_scal(pts + e, model)[-1]
                sm = _ricci_scal(pts - e, model)[-1]
                d[:, i] = (sp - sm) / (2.0 * h)
            grad = _ein("nij,nj->ni", g_inv, d)
    b = CurvatureBundle(pts, g, g_inv, dg, d2g, gam, ric, scal, G, grad)
    if single:
        for name in ("point", "g", "g_inv", "dg", "d2g", "gamma", "ric", "scal",
                     "einstein", "grad_scal"):
            v = getattr(b, name)
            if v is not None:
                setattr(b, name, v[0] if np.ndim(v) > 0 else v)
        b.scal = float(b.scal)
    return b


def einstein_divergence(model: MetricModel, x, step: float | None = None) -> np.ndarray:
    """Covariant divergence (div_g G)_j = g^{ik} nabla_k G_ij, finite differences."""
    pts, single = _as_points(x)
    check_domain(model, pts)
    h = 1e-4 * model.rho if step is None else step
    g, g_inv, dg, d2g, gam, ric, scal = _ricci_scal(pts, model)
    G = ric - 0.5 * scal[:, None, None] * g
    dG = np.empty(G.shape + (3,))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out = []
        for sgn in (1.0, -1.0):
            gg, _, _, _, _, rr, ss = _ricci_scal(pts + sgn * e, model)
            out.append(rr - 0.5 * ss[:, None, None] * gg)
        dG[..., k] = (out[0] - out[1]) / (2.0 * h)
    # nabla_k G_ij = d_k G_ij - Gamma^a_ki G_aj - Gamma^a_kj G_ia
    cov = (dG - _ein("naki,naj->nijk", gam, G) - _ein("nakj,nia->nijk", gam, G))
    div = _ein("nik,nijk->nj", g_inv, cov)
    return div[0] if single else div


def h0_quotients(model: MetricModel, x) -> np.ndarray:
    """|x|^-2 |h| + |x|^-1 |dh| + |d^2 h| at points (Frobenius norms)."""
    pts, _ = _as_points(x)
    g, dg, d2g = _metric_unchecked(model, pts)
    h = g - np.eye(3)
    r = np.linalg.norm(pts, axis=1)
    fro = lambda a: np.sqrt(np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1))
    return fro(h) / r ** 2 + fro(dg) / r + fro(d2g)


def measure_h0(model: MetricModel, n: int = 1000, seed: int = 0) -> float:
    """Sampled value of the normal-coordinate bound constant over B_{rho/2}."""
    if model.kind == "flat":
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    r = 0.5 * model.rho * rng.uniform(1e-3, 1.0, size=n) ** (1.0 / 3.0)
    return float(h0_quotients(model, v * r[:, None]).max())


def sn(k: float, s):
    """Generalised sine: sin(sqrt(k) s)/sqrt(k), s, or sinh(sqrt(-k) s)/sqrt(-k)."""
    s = np.asarray(s, dtype=float)
    if k > 0:
        return np.sin(math.sqrt(k) * s) / math.sqrt(k)
    if k < 0:
        return np.sinh(math.sqrt(-k) * s) / math.sqrt(-k)
    return s
