import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from willmore_lab import functionals as fn
from willmore_lab import sh
from willmore_lab.ambient import DomainError, MetricModel
from willmore_lab.surface import (ImmersionError, ShapeError, SphereParam, build_ellipsoid,
                                  build_round_sphere, constant_field, export_obj, geometry,
                                  intrinsic_scalar_curvature, laplace_beltrami,
                                  perturbed_sphere, position_field,
                                  tangential_divergence, tangential_divergence_check)


def spheroid_willmore_oracle(a, c, n=400):
    """0.5 * int H^2 dA for the spheroid (a, a, c) by 1D Gauss-Legendre in theta."""
    x, w = np.polynomial.legendre.leggauss(n)
    th = 0.5 * math.pi * (x + 1)
    w = 0.5 * math.pi * w
    D = a ** 2 * np.cos(th) ** 2 + c ** 2 * np.sin(th) ** 2
    k_mer = a * c / D ** 1.5
    k_par = c / (a * np.sqrt(D))
    dA = 2 * math.pi * a * np.sin(th) * np.sqrt(D)
    return 0.5 * float(np.sum(w * (k_mer + k_par) ** 2 * dA))


def test_round_sphere_builder():
    p = build_round_sphere((0, 0, 0), 0.1, 8, 24, 48)
    assert np.allclose(p.evaluate_at(np.array([0.0]), np.array([0.0]))[0], [0, 0, 0.1], atol=1e-14)
    nz = np.flatnonzero(np.abs(p.coeffs).sum(axis=0))
    assert set(nz) <= {0, 1, 2, 3}
    q = build_round_sphere((0.05, 0, 0), 0.1, 8, 24, 48)
    assert q.coeffs[0, 0] == pytest.approx(0.05 * math.sqrt(4 * math.pi), rel=1e-15)
    geom = geometry(p, MetricModel.flat())
    assert geom.areaE == pytest.approx(4 * math.pi * 0.01, rel=1e-13)


def test_round_sphere_outside_ball_is_domain_error():
    with pytest.raises(DomainError):
        build_round_sphere((0.6, 0, 0), 0.5, 4, 12, 24, MetricModel.flat())


def test_flat_round_sphere_is_umbilic(flat):
    geom = geometry(build_round_sphere((0.1, -0.2, 0.05), 0.1, 8, 24, 48), flat)
    assert np.allclose(geom.H, 20.0, atol=1e-9)
    assert np.sqrt(geom.Aring_sq).max() <= 1e-9


def test_spaceform_geodesic_sphere_mean_curvature(spaceform1):
    geom = geometry(build_round_sphere((0, 0, 0), 0.2, 6, 18, 36), spaceform1)
    assert np.allclose(geom.H, 2 / math.tan(0.2), atol=1e-6)
    assert np.sqrt(geom.Aring_sq).max() <= 1e-8


def test_ellipsoid_willmore_matches_quadrature_oracle(flat):
    geom = geometry(build_ellipsoid((0, 0, 0), (0.1, 0.1, 0.05), 1, 48, 96), flat)
    assert 0.5 * geom.integrate(geom.H ** 2) == pytest.approx(spheroid_willmore_oracle(0.1, 0.05), rel=1e-6)


def test_normal_and_trace_invariants(quadratic, rng):
    geom = geometry(perturbed_sphere(rng, (0.02, 0, 0), 0.1, 6, 24, 48, 0.05), quadratic)
    gnn = np.einsum("ni,nij,nj->n", geom.nu, geom.g, geom.nu)
    gna = np.einsum("ni,nij,naj->na", geom.nu, geom.g, geom.Fa)
    assert np.allclose(gnn, 1.0, atol=1e-10)
    assert np.abs(gna).max() <= 1e-10 * np.abs(geom.Fa).max()
    trace = np.einsum("nab,nab->n", geom.gamma_inv, geom.Aring)
    assert np.abs(trace).max() <= 1e-10 * np.abs(geom.H).max()
    # outward orientation on a convex surface
    assert np.all(np.einsum("ni,nij,nj->n", geom.F - [0.02, 0, 0], geom.g, geom.nu) > 0)


def test_laplace_beltrami_spectrum():
    flat = MetricModel.flat(rho=2.0)
    L = 8
    p = build_round_sphere((0, 0, 0), 1.0, L, 24, 48)
    geom = geometry(p, flat)
    assert np.abs(laplace_beltrami(geom, np.ones(geom.size))).max() <= 1e-10
    for l, m in [(1, 0), (2, 1), (3, -2), (4, 4)]:
        c = np.zeros(sh.n_coeffs(l))
        c[sh.lm_index(l, m)] = 1.0
        Y = p.grid.synthesize(c, l)
        assert np.allclose(laplace_beltrami(geom, Y), -l * (l + 1) * Y, atol=1e-8)
    r = 0.1
    geom = geometry(build_round_sphere((0, 0, 0), r, L, 24, 48), flat)
    z = geom.F[:, 2]
    assert np.allclose(laplace_beltrami(geom, z), -2 / r ** 2 * z, atol=1e-8 / r)


def test_laplace_beltrami_rejects_wrong_grid(flat):
    geom = geometry(build_round_sphere((0, 0, 0), 0.1, 4, 12, 24), flat)
    with pytest.raises(ShapeError):
        laplace_beltrami(geom, np.ones(10))


def test_intrinsic_scalar_curvature(flat, rng):
    r = 0.1
    geom = geometry(build_round_sphere((0, 0, 0), r, 6, 18, 36), flat)
    assert np.allclose(intrinsic_scalar_curvature(geom), 2 / r ** 2, rtol=1e-6)
    for model in (flat, MetricModel.spaceform(1.0)):
        geom = geometry(perturbed_sphere(rng, (0, 0, 0), r, 6, 24, 48, 0.05), model)
        assert geom.integrate(geom.sigma_scal) == pytest.approx(8 * math.pi, rel=1e-6)
    geom = geometry(perturbed_sphere(rng, (0, 0, 0), r, 6, 24, 48, 0.05), flat)
    resid = geom.sigma_scal - (0.5 * geom.H ** 2 - geom.Aring_sq)
    assert np.abs(resid).max() <= 1e-6


def test_tangential_divergence_examples(flat, spaceform1, rng):
    r = 0.1
    geom = geometry(build_round_sphere((0, 0, 0), r, 6, 18, 36), flat)
    assert geom.integrate(tangential_divergence(geom, position_field)) == pytest.approx(2 * geom.area, rel=1e-12)
    assert tangential_divergence_check(geom, position_field) <= 1e-8 * geom.area / r
    bumpy = geometry(perturbed_sphere(rng, (0, 0, 0), r, 6, 24, 48, 0.05), flat)
    assert tangential_divergence_check(bumpy, constant_field([0.3, -0.4, 1.0])) <= 1e-8
    geom = geometry(build_round_sphere((0, 0, 0), r, 6, 18, 36), spaceform1)
    assert tangential_divergence_check(geom, position_field) <= 1e-7
    div = geom.integrate(tangential_divergence(geom, position_field))
    assert abs(div / geom.area - 2) <= 10 * r ** 2


def test_resolution_doubling_is_stable(quadratic, rng):
    p = perturbed_sphere(rng, (0.01, 0, 0), 0.1, 6, 24, 48, 0.05)
    a = fn.evaluate(geometry(p, quadratic), quadratic)
    b = fn.evaluate(geometry(p.with_grid(48, 96), quadratic), quadratic)
    for name in ("area", "W", "U", "V"):
        x, y = getattr(a, name), getattr(b, name)
        assert abs(x - y) <= 1e-8 * max(abs(y), 1e-3 * b.W), name


def test_metric_change_constants_do_not_grow(quadratic, spaceform1):
    for model in (quadratic, spaceform1):
        quotients = []
        for r in (0.2, 0.1, 0.05, 0.02):
            geom = geometry(build_round_sphere((0, 0, 0), r, 4, 12, 24), model)
            x2 = np.sum(geom.F ** 2, axis=1)
            dgam = np.abs(geom.gamma - geom.gammaE).max(axis=(1, 2)) / np.abs(geom.gammaE).max(axis=(1, 2))
            dnu = np.linalg.norm(geom.nu - geom.nuE, axis=1)
            dmu = np.abs(geom.dmu - geom.dmuE) / geom.dmuE
            quotients.append(max((dgam / x2).max(), (dnu / x2).max(), (dmu / x2).max()))
        assert max(quotients) <= 1.5 * quotients[-1] + 1e-12
        assert max(quotients) < 10


def test_degenerate_parameterisation_raises(flat):
    c = np.zeros((3, sh.n_coeffs(2)))
    c[0, sh.lm_index(1, 1)] = 0.1  # a flat disc: z and y vanish
    with pytest.raises(ImmersionError):
        geometry(SphereParam(2, c, 8, 16), flat)


def test_param_validation():
    with pytest.raises(ValueError, match="n_phi"):
        SphereParam(4, np.zeros((3, 25)), 8, 8)
    with pytest.raises(ValueError, match="coeffs"):
        SphereParam(4, np.zeros((3, 24)), 8, 16)


@given(st.tuples(*[st.floats(-0.2, 0.2)] * 3), st.integers(0, 1000))
def test_flat_translation_invariance(t, seed):
    flat = MetricModel.flat()
    p = perturbed_sphere(np.random.default_rng(seed), (0, 0, 0), 0.1, 5, 18, 36, 0.05)
    a = fn.evaluate(geometry(p, flat), flat)
    b = fn.evaluate(geometry(p.translated(t), flat), flat)
    assert b.W == pytest.approx(a.W, abs=1e-10 * a.W)
    assert b.U == pytest.approx(a.U, abs=1e-10 * a.W)
    assert b.area == pytest.approx(a.area, rel=1e-10)
    assert np.allclose(np.array(b.aE) - np.array(a.aE), t, atol=1e-12)


def test_export_obj(tmp_path):
    p = build_round_sphere((0, 0, 0), 0.1, 3, 6, 12)
    path = tmp_path / "s.obj"
    export_obj(p, path)
    lines = path.read_text().splitlines()
    verts = [ln for ln in lines if ln.startswith("v ")]
    faces = [ln for ln in lines if ln.startswith("f ")]
    assert len(verts) == 6 * 12 + 2
    assert len(faces) == 12 * 2 + 5 * 12
    assert np.allclose(np.linalg.norm([list(map(float, v.split()[1:])) for v in verts], axis=1), 0.1)
