"""Invariant suites: splitting, Gauss, divergence and first-variation checks.

Each check returns ``Check(name, value, tol, ok)`` with ``value`` the
measured defect and ``tol`` its threshold.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import functionals as fn
from . import sh
from .ambient import MetricModel
from .surface import (SphereParam, constant_field, geometry, position_field,
                      tangential_divergence, tangential_divergence_check)


class Check(NamedTuple):
    name: str
    value: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)


def splitting_check(geom, model=None, rtol: float = 1e-6) -> Check:
    rep = fn.evaluate(geom, model)
    return Check("splitting", abs(rep.splitting_residual), rtol * (1.0 + abs(rep.W)))


def gauss_check(geom, rtol: float = 1e-6) -> Check:
    r2 = geom.area / (4 * math.pi)
    return Check("gauss", float(np.max(np.abs(fn.gauss_residual(geom)))), rtol / r2)


def divergence_checks(geom, rtol: float = 1e-8, b=(0.3, -0.5, 0.8)) -> list:
    out = []
    for name, X in (("divergence_x", position_field), ("divergence_b", constant_field(b))):
        val, _ = X(geom.F)
        scale = geom.integrate(np.abs(geom.H) * np.sqrt(np.einsum("ni,nij,nj->n", val, geom.g, val)))
        scale += geom.integrate(np.abs(tangential_divergence(geom, X)))
        out.append(Check(name, tangential_divergence_check(geom, X), rtol * scale))
    return out


def _functionals(param: SphereParam, model: MetricModel) -> np.ndarray:
    geom = geometry(param, model)
    rep = fn.evaluate(geom, model)
    return np.array([rep.W, rep.U, rep.V, rep.area])


def variation_checks(param: SphereParam, model: MetricModel, direction: np.ndarray,
                     rtol: float = 1e-4, h: float | None = None) -> list:
    """Analytic (dW, dU, dV, dArea) against central differences.

    ``direction`` is a coefficient array; its normal speed is the variation.
    Tangential parts of the displacement do not change the functionals.
    The comparison is relative to ``max(|fd|, 1e-3 * typical)`` where
    ``typical`` is the size of that variation for a unit-speed dilation.
    """
    geom = geometry(param, model)
    V = param.grid.synthesize(direction, param.band_limit)
    f = fn.normal_speed(geom, V)
    analytic = np.array(fn.first_variations(geom, f, model))
    r = math.sqrt(geom.area / (4 * math.pi))
    if h is None:
        h = 1e-4 * r / max(float(np.max(np.abs(V))), 1e-300)
    plus = _functionals(param.with_coeffs(param.coeffs + h * direction), model)
    minus = _functionals(param.with_coeffs(param.coeffs - h * direction), model)
    fd = (plus - minus) / (2 * h)
    speed = float(np.max(np.abs(f.values)))
    typical = speed * np.array([8 * math.pi / r, 8 * math.pi / r, 8 * math.pi / r, 8 * math.pi * r])
    out = []
    for name, a, d, t in zip(("dW", "dU", "dV", "dArea"), analytic, fd, typical):
        out.append(Check(f"variation_{name}", abs(a - d) / max(abs(d), 1e-3 * t), rtol))
    return out


def random_direction(rng: np.random.Generator, param: SphereParam) -> np.ndarray:
    """Random coefficient direction with l^-2 decay, no degree 0."""
    pairs = sh.lm_pairs(param.band_limit)
    decay = np.where(pairs[:, 0] >= 1, 1.0 / np.maximum(pairs[:, 0], 1) ** 2, 0.0)
    return rng.normal(size=param.coeffs.shape) * decay


def run_all(param: SphereParam, model: MetricModel, rng: np.random.Generator) -> list:
    geom = geometry(param, model)
    checks = [splitting_check(geom, model), gauss_check(geom)]
    checks += divergence_checks(geom)
    checks += variation_checks(param, model, random_direction(rng, param))
    return checks
