import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from willmore_lab.ambient import (DomainError, MetricModel, ValidationError,
                                  bianchi_coefficients, curvature_at, einstein_divergence,
                                  h0_quotients, metric_at, riemann_from_ricci)


def closed_form_spaceform(k, x):
    """g = P + (sn_k(s)/s)^2 (I - P), P = x x^T / s^2, with numpy trig."""
    s = np.linalg.norm(x)
    sk = math.sqrt(abs(k))
    sn = math.sin(sk * s) / sk if k > 0 else (math.sinh(sk * s) / sk if k < 0 else s)
    P = np.outer(x, x) / s ** 2
    return P + (sn / s) ** 2 * (np.eye(3) - P)


def test_flat_is_euclidean(flat):
    g, dg, d2g = metric_at(flat, [0.1, 0.0, 0.0])
    assert np.array_equal(g, np.eye(3))
    assert not dg.any() and not d2g.any()
    b = curvature_at(flat, [0.2, -0.1, 0.3])
    assert b.scal == 0 and not b.ric.any() and not b.grad_scal.any()


def test_spaceform_example_point():
    m = MetricModel.spaceform(1.0)
    g, _, _ = metric_at(m, [0.2, 0.0, 0.0])
    assert g[0, 0] == pytest.approx(1.0, abs=1e-14)
    assert g[1, 1] == pytest.approx(math.sin(0.2) ** 2 / 0.04, rel=1e-14)
    assert g[2, 2] == pytest.approx(math.sin(0.2) ** 2 / 0.04, rel=1e-14)


@pytest.mark.parametrize("k", [0.0, 1.0, -0.7, 3.0])
def test_spaceform_matches_closed_form_and_derivatives(k):
    m = MetricModel.spaceform(k)
    rng = np.random.default_rng(1)
    h = 1e-5
    for x in rng.uniform(-0.4, 0.4, size=(5, 3)):
        g, dg, d2g = metric_at(m, x)
        assert np.allclose(g, closed_form_spaceform(k, x), atol=1e-13)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (closed_form_spaceform(k, x + e) - closed_form_spaceform(k, x - e)) / (2 * h)
            assert np.allclose(dg[..., i], fd, atol=1e-8)
            fd2 = (metric_at(m, x + e)[1] - metric_at(m, x - e)[1]) / (2 * h)
            assert np.allclose(d2g[..., i], fd2, atol=1e-8)


def test_spaceform_origin_limit_and_radial_gauge():
    for k in (2.0, -1.5):
        m = MetricModel.spaceform(k)
        g, dg, _ = metric_at(m, np.zeros(3))
        assert np.allclose(g, np.eye(3), atol=1e-15) and np.allclose(dg, 0, atol=1e-15)
        x = np.array([0.3, -0.2, 0.25])
        assert np.allclose(metric_at(m, x)[0] @ x, x, atol=1e-12)


def test_spaceform_curvature_example(spaceform05):
    b = curvature_at(spaceform05, [0.05, 0.02, 0.0])
    assert b.scal == pytest.approx(3.0, abs=1e-6)
    assert np.allclose(b.ric, 1.0 * b.g, atol=1e-6)
    assert np.allclose(b.einstein, b.ric - 0.5 * b.scal * b.g, atol=0)


def test_scal_is_trace_of_ricci(quadratic):
    b = curvature_at(quadratic, [0.1, -0.2, 0.05])
    assert b.scal == pytest.approx(np.einsum("ij,ij->", b.g_inv, b.ric), rel=1e-10)
    assert np.allclose(b.ric, b.ric.T, atol=1e-15)


def test_quadratic_prescription(quadratic):
    b = curvature_at(quadratic, np.zeros(3))
    assert np.allclose(b.ric, np.diag([1.0, 2.0, 3.0]), atol=1e-8)
    # trace of diag(1,2,3) at g(0) = I
    assert b.scal == pytest.approx(6.0, abs=1e-8)
    assert np.allclose(b.grad_scal, [0.7, 0.0, 0.0], atol=1e-4)
    # independent finite differences of the scalar curvature
    h = 1e-4
    fd = [(curvature_at(quadratic, h * e, False).scal - curvature_at(quadratic, -h * e, False).scal)
          / (2 * h) for e in np.eye(3)]
    assert np.allclose(fd, [0.7, 0.0, 0.0], atol=1e-4)


def test_bianchi_coefficients_solve_the_constraints():
    # trace: 3a + 2b = 1; contracted Bianchi: a + 4b = 1/2
    ref = np.linalg.solve([[3.0, 2.0], [1.0, 4.0]], [1.0, 0.5])
    assert np.allclose(bianchi_coefficients(), ref, atol=1e-15)


def test_riemann_from_ricci_contracts_back():
    ric = np.array([[1.0, 0.3, 0.2], [0.3, 2.0, 0.1], [0.2, 0.1, 3.0]])
    R = riemann_from_ricci(ric)
    assert np.allclose(np.einsum("ikil->kl", R), ric, atol=1e-14)
    assert np.allclose(R, -np.swapaxes(R, 0, 1), atol=1e-14)
    assert np.allclose(R, np.transpose(R, (2, 3, 0, 1)), atol=1e-14)


def test_normal_coordinate_normalisation(quadratic, spaceform1):
    for m in (quadratic, spaceform1):
        g, dg, _ = metric_at(m, np.zeros(3))
        assert np.allclose(g, np.eye(3), atol=1e-15)
        assert np.allclose(dg, 0.0, atol=1e-15)


def test_einstein_divergence_vanishes_on_spaceform():
    for k in (0.5, -1.0):
        m = MetricModel.spaceform(k)
        rng = np.random.default_rng(2)
        pts = rng.uniform(-0.3, 0.3, size=(6, 3))
        div = einstein_divergence(m, pts)
        ric_norm = abs(2 * k) * math.sqrt(3)
        assert np.abs(div).max() <= 1e-4 * (1 + ric_norm / m.rho)


def test_h0_bound_holds_on_sample(quadratic, spaceform1):
    rng = np.random.default_rng(4)
    for m in (quadratic, spaceform1):
        v = rng.normal(size=(200, 3))
        v *= (0.5 * m.rho * rng.uniform(0.01, 1, 200) / np.linalg.norm(v, axis=1))[:, None]
        assert math.isfinite(m.h0)
        assert h0_quotients(m, v).max() <= m.h0 * 1.5


@given(st.tuples(*[st.floats(-0.45, 0.45)] * 3))
def test_metric_symmetric_positive_definite(x):
    for m in (MetricModel.spaceform(-2.0), MetricModel.quadratic(np.diag([1.0, 2.0, 3.0]), (0.7, 0, 0))):
        g = metric_at(m, np.array(x))[0]
        assert np.array_equal(g, g.T)
        assert np.linalg.eigvalsh(g).min() > 0


def test_domain_and_validation_errors():
    m = MetricModel.spaceform(1.0, rho=0.5)
    with pytest.raises(DomainError):
        metric_at(m, [0.6, 0.0, 0.0])
    with pytest.raises(ValidationError):
        MetricModel.quadratic([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    with pytest.raises(ValidationError, match="metric: unknown key"):
        MetricModel.from_dict({"kind": "flat", "kappa": 1})
    with pytest.raises(ValidationError):
        MetricModel.spaceform(20.0, rho=1.0)  # conjugate point inside the ball


def test_dict_round_trip(quadratic):
    for m in (MetricModel.flat(2.0), MetricModel.spaceform(-0.3), quadratic):
        again = MetricModel.from_dict(m.to_dict())
        assert again.to_dict() == m.to_dict()
        assert again == m
