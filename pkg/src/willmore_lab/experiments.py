"""Radius sweeps that turn the small-sphere asymptotics into fitted orders.

Every deficit column ``D_*`` comes with a ``floor_D_*`` column: the change of
the deficit when the quadrature grid is doubled, or a rounding floor,
whichever is larger.  Slopes are least-squares fits of log D against log r
over the rows whose deficit exceeds 100 times its floor.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .ambient import MetricModel
from .optimize import OptimizeOptions, SolveResult, solve
from .surface import SphereParam, build_round_sphere, geometry

MODES = ("geodesic_spheres", "minimizers")
FLOOR_FACTOR = 100.0
SLOPE_STABILITY = 0.3
_EPS = np.finfo(float).eps

SWEEP_ORDERS = {"D_W": 3.0, "D_lambda": 1.0, "D_ric": 1.0, "D_vol_rel": 2.0,
                "D_lambda_family": 1.0}


@dataclass
class SlopeFit:
    column: str
    slope: float | None
    intercept: float | None
    n_used: int
    rms: float | None
    floor_limited: bool  # every row sits within FLOOR_FACTOR of its floor
    refinement_shift: float | None = None  # |slope change| under grid doubling
    unstable: bool = False  # slope moved by more than SLOPE_STABILITY; not trusted

    def passes(self, order: float) -> bool:
        """Fitted order reaches ``order``, or the deficit is zero to within its floor."""
        if self.slope is not None:
            return self.slope >= order
        return self.floor_limited and not self.unstable

    def describe(self) -> str:
        if self.slope is not None:
            return f"slope {self.slope:.3f} over {self.n_used} rows (rms {self.rms:.2e})"
        if self.unstable:
            return f"slope unstable under grid doubling (shift {self.refinement_shift})"
        if self.floor_limited:
            return "at quadrature floor on every row"
        return f"only {self.n_used} usable rows"


@dataclass
class ConvergenceTable:
    columns: list
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([row.get(name, np.nan) for row in self.rows], dtype=float)

    def passes(self) -> dict:
        return {c: self.slopes[c].passes(order) for c, order in self.expected.items()
                if c in self.slopes}

    def summary(self) -> dict:
        out = dict(self.meta)
        for c, fit in self.slopes.items():
            out[f"slope_{c}"] = fit.slope
            out[f"n_fit_{c}"] = fit.n_used
            out[f"floor_limited_{c}"] = fit.floor_limited
        for c, ok in self.passes().items():
            out[f"pass_{c}"] = ok
        return out


def fit_slope(r, d, floor, usable=None, column: str = "") -> SlopeFit:
    """Least-squares log-log slope using rows with d > FLOOR_FACTOR * floor."""
    r, d, floor = (np.asarray(v, dtype=float) for v in (r, d, floor))
    ok = np.isfinite(d) & (d > FLOOR_FACTOR * floor)
    if usable is not None:
        ok &= np.asarray(usable, dtype=bool)
    n = int(ok.sum())
    if n < 2:
        at_floor = bool(np.all(d[np.isfinite(d)] <= FLOOR_FACTOR * floor[np.isfinite(d)]))
        return SlopeFit(column, None, None, n, None, at_floor and n == 0)
    x, y = np.log(r[ok]), np.log(d[ok])
    (slope, icpt), res = np.polyfit(x, y, 1, full=True)[:2]
    rms = math.sqrt(float(res[0]) / n) if len(res) else 0.0
    return SlopeFit(column, float(slope), float(icpt), n, rms, False)


@dataclass
class SweepSpec:
    model: MetricModel
    radii: list
    mode: str = "geodesic_spheres"
    band_limit: int = 6
    n_theta: int | None = None
    n_phi: int | None = None
    optimizer: dict = field(default_factory=dict)
    center: tuple = (0.0, 0.0, 0.0)
    freeze_center: bool = False
    min_radii: int = 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"sweep.mode must be one of {MODES}, got {self.mode!r}")
        self.radii = [float(r) for r in self.radii]
        if len(self.radii) < self.min_radii:
            raise ValueError(f"sweep.radii: need at least {self.min_radii} radii for slope fits")
        if any(r <= 0 for r in self.radii):
            raise ValueError("sweep.radii must be positive")
        if any(b >= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("sweep.radii must be strictly descending")
        if max(self.radii) + float(np.linalg.norm(self.center)) >= self.model.rho / 2:
            raise ValueError(f"sweep.radii: largest sphere must stay inside rho/2 = {self.model.rho / 2}")
        if self.n_theta is None:
            self.n_theta = 4 * self.band_limit
        if self.n_phi is None:
            self.n_phi = 2 * self.n_theta

    def grid(self, scale: int = 1) -> tuple:
        return self.n_theta * scale, self.n_phi * scale


def family_multiplier(model: MetricModel, r: float, center=(0.0, 0.0, 0.0),
                      n_theta: int = 16, n_phi: int = 32, L: int = 1) -> tuple[float, float]:
    """W'(r)/A'(r) along the coordinate spheres S_r(center).

    Richardson-extrapolated central differences; returns ``(lambda, error
    estimate)``.  In a space form the exact value is -2k.
    """
    def wa(rr):
        geom = geometry(build_round_sphere(center, rr, L, n_theta, n_phi), model)
        return fn.willmore(geom), geom.area

    def ratio(h):
        wp, ap = wa(r + h)
        wm, am = wa(r - h)
        return (wp - wm) / (ap - am)

    h = 1e-2 * r
    coarse, fine = ratio(h), ratio(h / 2)
    lam = (4.0 * fine - coarse) / 3.0
    err = abs(fine - coarse) / 3.0 + 1e3 * _EPS * 16 * math.pi / (4 * math.pi * r * r)
    return lam, err


def _deficits(geom, model: MetricModel, lam: float, lam_family: float) -> dict:
    rep = fn.evaluate(geom, model)
    s0 = model.scal0
    a32 = rep.area ** 1.5
    vol_ref = a32 / (6.0 * math.sqrt(math.pi))
    return {
        "area": rep.area, "W": rep.W, "U": rep.U, "V": rep.V, "lambda": lam,
        "lambda_family": lam_family, "lambda_id": rep.lambda_id,
        "hawking": rep.hawking, "vol": rep.vol, "min_H": rep.min_H,
        "el_residual": rep.el_residual,
        "eps": max(0.0, -lam * rep.area),
        "D_W": abs(rep.W - 8 * math.pi + rep.area / 3.0 * s0),
        "D_lambda": abs(lam + s0 / 3.0),
        "D_lambda_family": abs(lam_family + s0 / 3.0),
        "D_ric": abs(rep.ricci_avg - s0 / 3.0),
        "D_vol": abs(rep.vol - vol_ref),
        "D_vol_rel": abs(rep.vol - vol_ref) / a32,
    }


def _rounding_floor(name: str, row: dict) -> float:
    r2 = row["area"] / (4 * math.pi)
    scale = {"D_W": 8 * math.pi, "D_lambda": 4.0 / r2, "D_lambda_family": 4.0 / r2,
             "D_ric": 4.0 / r2, "D_vol_rel": 1.0, "D_vol": row["area"] ** 1.5}
    return 1e3 * _EPS * scale.get(name, 1.0)


SWEEP_COLUMNS = ["r", "area", "W", "U", "V", "lambda", "lambda_family", "lambda_id",
                 "hawking", "vol", "min_H", "el_residual", "eps", "converged",
                 "D_W", "D_lambda", "D_lambda_family", "D_ric", "D_vol", "D_vol_rel",
                 "floor_D_W", "floor_D_lambda", "floor_D_lambda_family", "floor_D_ric",
                 "floor_D_vol_rel", "D_W_2x", "D_lambda_2x", "D_ric_2x", "D_vol_rel_2x",
                 "hyp_ok", "failure"]


def _rescaled(param: SphereParam, center, factor: float) -> SphereParam:
    c = np.array(param.coeffs)
    c0 = np.asarray(center, dtype=float) * math.sqrt(4 * math.pi)
    c[:, 0] = c0 + factor * (c[:, 0] - c0)
    c[:, 1:] *= factor
    return param.with_coeffs(c)


def _options(spec: SweepSpec, area: float) -> OptimizeOptions:
    kw = dict(spec.optimizer)
    kw.setdefault("freeze_center", spec.freeze_center)
    kw["area_target"] = area
    return OptimizeOptions(**kw)


def _sweep_row(spec: SweepSpec, r: float, init: SphereParam | None) -> tuple[dict, SolveResult | None]:
    model = spec.model
    base = build_round_sphere(spec.center, r, spec.band_limit, *spec.grid(), model)
    lam_fam, fam_err = family_multiplier(model, r, spec.center, *spec.grid())
    row = {"r": r, "converged": True}
    res = None
    if spec.mode == "geodesic_spheres":
        param = base
        geom = geometry(param, model)
        lam = fn.lambda_least_squares(geom)[0]
        lam_floor = 0.0
    else:
        try:
            res = solve(model, base if init is None else init, _options(spec, 4 * math.pi * r * r))
        except (ValueError, RuntimeError) as exc:  # partial table with a failure marker
            row.update(converged=False, hyp_ok=False, failure=str(exc))
            return row, None
        param = res.surface
        geom = geometry(param, model)
        lam = res.lam
        row["converged"] = res.converged
        # lambda moves by at most ||EL + lam H|| / ||H|| off criticality
        lam_floor = res.scaled_residual / (geom.area ** 1.5 * abs(float(np.mean(geom.H))))
    row.update(_deficits(geom, model, lam, lam_fam))
    fine = geometry(param.with_grid(*spec.grid(2)), model)
    lam_fine = lam if spec.mode == "minimizers" else fn.lambda_least_squares(fine)[0]
    row2 = _deficits(fine, model, lam_fine, lam_fam)
    for c in ("D_W", "D_lambda", "D_ric", "D_vol_rel"):
        row[c + "_2x"] = row2[c]
        row["floor_" + c] = max(abs(row[c] - row2[c]), _rounding_floor(c, row))
    row["floor_D_lambda"] = max(row["floor_D_lambda"], lam_floor)
    row["floor_D_lambda_family"] = max(fam_err, _rounding_floor("D_lambda_family", row))
    row["hyp_ok"] = bool(row["min_H"] > 0 and row["converged"])
    return row, res


def sweep(spec: SweepSpec, threads: int = 1) -> ConvergenceTable:
    """One row per radius; minimizers are warm-started down the radius ladder.

    Geodesic-sphere rows are independent and may run on ``threads`` workers;
    rows are assembled in radius order, so output does not depend on it.
    """
    model = spec.model
    table = ConvergenceTable(columns=list(SWEEP_COLUMNS), expected=dict(SWEEP_ORDERS),
                             meta={"mode": spec.mode, "model": model.kind,
                                   "scal0": model.scal0, "band_limit": spec.band_limit,
                                   "n_theta": spec.n_theta, "n_phi": spec.n_phi})
    if spec.mode == "geodesic_spheres":
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            table.rows = [row for row, _ in pool.map(lambda r: _sweep_row(spec, r, None), spec.radii)]
    else:
        prev, prev_r = None, None
        for r in spec.radii:
            init = None if prev is None else _rescaled(prev.surface, spec.center, r / prev_r)
            row, res = _sweep_row(spec, r, init)
            if res is not None:
                prev, prev_r = res, r
            table.rows.append(row)
    _fit_all(table, SWEEP_ORDERS)
    return table


def _fit_all(table: ConvergenceTable, orders: dict) -> None:
    ok = [bool(row.get("hyp_ok", True)) and "failure" not in row for row in table.rows]
    r = table.column("r")
    for c in orders:
        floor = table.column("floor_" + c)
        fit = fit_slope(r, table.column(c), floor, ok, c)
        if fit.slope is not None and any(c + "_2x" in row for row in table.rows):
            fine = fit_slope(r, table.column(c + "_2x"), floor, ok, c)
            fit.refinement_shift = None if fine.slope is None else abs(fine.slope - fit.slope)
            if fit.refinement_shift is None or fit.refinement_shift > SLOPE_STABILITY:
                fit.slope, fit.unstable = None, True
        table.slopes[c] = fit


# -- gradient obstruction ---------------------------------------------------

GRADIENT_COLUMNS = ["r", "area", "vol", "dV", "lead", "E", "ratio", "dV_perp",
                    "C_perp", "C_perp_2x", "ratio_2x", "min_H", "converged", "floor_ratio",
                    "hyp_ok"]


def _perpendicular(b: np.ndarray) -> np.ndarray:
    e = np.eye(3)[int(np.argmin(np.abs(b)))]
    p = np.cross(b, e)
    return p / np.linalg.norm(p)


def _gradient_row(geom, model, b, b_perp) -> dict:
    s = model.grad_scal0
    volE, vol = fn.enclosed_volume(geom, model)
    dV = fn.first_variations(geom, fn.variation_field_from_b(geom, b), model)[2]
    dV_perp = fn.first_variations(geom, fn.variation_field_from_b(geom, b_perp), model)[2]
    lead = 0.5 * vol * float(b @ s)
    E = abs(dV + lead)
    norm = 0.5 * vol * float(np.linalg.norm(s))
    r = math.sqrt(geom.area / (4 * math.pi))
    return {"area": geom.area, "vol": vol, "dV": dV, "lead": lead, "E": E,
            "ratio": E / norm if norm > 0 else E,
            "dV_perp": dV_perp, "C_perp": abs(dV_perp) / (r * geom.area ** 1.5),
            "min_H": float(geom.H.min())}


def gradient_experiment(model: MetricModel, radii, mode: str = "geodesic_spheres",
                        band_limit: int = 6, n_theta: int | None = None,
                        n_phi: int | None = None, optimizer: dict | None = None,
                        b=None) -> ConvergenceTable:
    """E(r) = |delta_f V + (1/2) Vol g^E(b, grad Scal(0))| with f = g(b, nu)/H.

    ``b`` defaults to the unit vector along grad Scal(0); a control column
    uses a unit vector perpendicular to it.  Minimizers are solved with the
    centre frozen (there is no free critical point when grad Scal(0) != 0).
    """
    s = model.grad_scal0
    if b is None:
        if not np.linalg.norm(s) > 0:
            raise ValueError("gradient_experiment: model has grad Scal(0) = 0; pass b explicitly")
        b = s / np.linalg.norm(s)
    b = np.asarray(b, dtype=float)
    b_perp = _perpendicular(b)
    n_theta = n_theta or 4 * band_limit
    n_phi = n_phi or 2 * n_theta
    table = ConvergenceTable(columns=list(GRADIENT_COLUMNS), expected={"ratio": 0.8},
                             meta={"mode": mode, "model": model.kind, "b": b.tolist(),
                                   "b_perp": b_perp.tolist()})
    prev, prev_r = None, None
    for r in radii:
        base = build_round_sphere((0, 0, 0), r, band_limit, n_theta, n_phi, model)
        row = {"r": float(r), "converged": True}
        if mode == "minimizers":
            init = base if prev is None else _rescaled(prev.surface, (0, 0, 0), r / prev_r)
            kw = dict(optimizer or {})
            kw.update(area_target=4 * math.pi * r * r, freeze_center=True)
            res = solve(model, init, OptimizeOptions(**kw))
            prev, prev_r = res, r
            param = res.surface
            row["converged"] = res.converged
        else:
            param = base
        geom = geometry(param, model)
        row.update(_gradient_row(geom, model, b, b_perp))
        fine = _gradient_row(geometry(param.with_grid(2 * n_theta, 2 * n_phi), model),
                             model, b, b_perp)
        row["C_perp_2x"] = fine["C_perp"]
        row["ratio_2x"] = fine["ratio"]
        row["floor_ratio"] = max(abs(row["ratio"] - fine["ratio"]), 1e3 * _EPS)
        row["hyp_ok"] = bool(row["min_H"] > 0 and row["converged"])
        table.rows.append(row)
    _fit_all(table, {"ratio": 0.8})
    c = table.column("C_perp")
    c2 = table.column("C_perp_2x")
    table.meta["C_perp_max"] = float(np.max(c))
    table.meta["C_perp_refinement_change"] = float(np.max(np.abs(c - c2) / np.maximum(c, 1e-300)))
    return table


# -- Hawking mass -----------------------------------------------------------

HAWKING_COLUMNS = ["r", "area", "W", "hawking", "vol", "ratio", "target", "D_H",
                   "floor_D_H", "D_H_2x", "min_H", "converged", "hyp_ok"]


def hawking_experiment(model: MetricModel, radii, mode: str = "geodesic_spheres",
                       band_limit: int = 6, n_theta: int | None = None,
                       n_phi: int | None = None, optimizer: dict | None = None) -> ConvergenceTable:
    """m_H / Vol against Scal(0)/(16 pi), with the order of the error."""
    n_theta = n_theta or 4 * band_limit
    n_phi = n_phi or 2 * n_theta
    target = model.scal0 / (16 * math.pi)
    table = ConvergenceTable(columns=list(HAWKING_COLUMNS), expected={"D_H": 1.0},
                             meta={"mode": mode, "model": model.kind, "target": target})
    prev, prev_r = None, None

    def measure(geom):
        rep = fn.evaluate(geom, model)
        return rep, rep.hawking / rep.vol

    for r in radii:
        base = build_round_sphere((0, 0, 0), r, band_limit, n_theta, n_phi, model)
        row = {"r": float(r), "converged": True}
        if mode == "minimizers":
            init = base if prev is None else _rescaled(prev.surface, (0, 0, 0), r / prev_r)
            kw = dict(optimizer or {})
            kw["area_target"] = 4 * math.pi * r * r
            res = solve(model, init, OptimizeOptions(**kw))
            prev, prev_r = res, r
            param = res.surface
            row["converged"] = res.converged
        else:
            param = base
        rep, ratio = measure(geometry(param, model))
        _, ratio2 = measure(geometry(param.with_grid(2 * n_theta, 2 * n_phi), model))
        D = abs(ratio - target)
        row.update(area=rep.area, W=rep.W, hawking=rep.hawking, vol=rep.vol, ratio=ratio,
                   target=target, D_H=D, min_H=rep.min_H,
                   D_H_2x=abs(ratio2 - target),
                   floor_D_H=max(abs(ratio - ratio2), 1e3 * _EPS * (abs(target) + 1.0)))
        row["hyp_ok"] = bool(rep.min_H > 0 and row["converged"])
        table.rows.append(row)
    _fit_all(table, {"D_H": 1.0})
    return table


# -- drift of the free minimizer ---------------------------------------------

def drift_experiment(model: MetricModel, r: float, band_limit: int = 6,
                     n_theta: int | None = None, n_phi: int | None = None,
                     optimizer: dict | None = None, free_outer: int = 2,
                     free_inner: int = 40) -> dict:
    """Frozen-centre minimizer versus a free run warm-started from it.

    The free run has a fixed budget; with grad Scal(0) != 0 it cannot
    converge and its centre of gravity moves.  Returns the drift vector and
    its cosine with grad Scal(0) (the sign is recorded, not asserted).
    """
    n_theta = n_theta or 4 * band_limit
    n_phi = n_phi or 2 * n_theta
    a = 4 * math.pi * r * r
    kw = dict(optimizer or {})
    kw["area_target"] = a
    init = build_round_sphere((0, 0, 0), r, band_limit, n_theta, n_phi, model)
    frozen = solve(model, init, OptimizeOptions(**{**kw, "freeze_center": True}))
    free = solve(model, frozen.surface,
                 OptimizeOptions(**{**kw, "freeze_center": False, "max_outer": free_outer,
                                    "max_inner": free_inner}))
    a0 = np.array(frozen.report.aE)
    a1 = np.array(free.report.aE)
    d = a1 - a0
    s = model.grad_scal0
    cos = float(d @ s / (np.linalg.norm(d) * np.linalg.norm(s))) if np.linalg.norm(d) * np.linalg.norm(s) > 0 else 0.0
    return {"r": r, "frozen_converged": frozen.converged, "frozen_lambda": frozen.lam,
            "frozen_kappa": None if frozen.kappa is None else frozen.kappa.tolist(),
            "frozen_aE": a0.tolist(), "free_aE": a1.tolist(), "drift": d.tolist(),
            "drift_norm": float(np.linalg.norm(d)), "cos_with_grad_scal": cos,
            "free_converged": free.converged, "W_frozen": frozen.report.W,
            "W_free": free.report.W}
