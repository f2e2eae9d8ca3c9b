import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from willmore_lab import sh


def test_orthonormal_under_quadrature():
    g = sh.grid(16, 32)
    L = 10
    Y = g.synthesize(np.eye(sh.n_coeffs(L)), L)
    gram = (Y * g.weights[:, None]).T @ Y
    assert np.allclose(gram, np.eye(sh.n_coeffs(L)), atol=1e-12)


def test_low_degree_closed_forms():
    # Independent textbook formulas for the real harmonics.
    g = sh.grid(8, 16)
    th, ph = g.theta_nodes, g.phi_nodes
    cases = {
        (0, 0): np.full_like(th, 1 / math.sqrt(4 * math.pi)),
        (1, 0): math.sqrt(3 / (4 * math.pi)) * np.cos(th),
        (1, 1): math.sqrt(3 / (4 * math.pi)) * np.sin(th) * np.cos(ph),
        (1, -1): math.sqrt(3 / (4 * math.pi)) * np.sin(th) * np.sin(ph),
        (2, 0): math.sqrt(5 / (16 * math.pi)) * (3 * np.cos(th) ** 2 - 1),
        (2, 2): math.sqrt(15 / (16 * math.pi)) * np.sin(th) ** 2 * np.cos(2 * ph),
    }
    for (l, m), ref in cases.items():
        c = np.zeros(sh.n_coeffs(2))
        c[sh.lm_index(l, m)] = 1.0
        assert np.allclose(g.synthesize(c, 2), ref, atol=1e-14), (l, m)


def test_storage_order_is_lexicographic():
    pairs = sh.lm_pairs(4)
    assert [tuple(p) for p in pairs] == sorted(tuple(p) for p in pairs)
    assert sh.lm_index(3, -2) == 3 * 3 + 3 - 2


@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_analyze_inverts_synthesize(L, seed):
    g = sh.grid(L + 2, 2 * L + 4)
    c = np.random.default_rng(seed).normal(size=(3, sh.n_coeffs(L)))
    back = g.analyze(g.synthesize(c, L), L)
    assert np.allclose(back, c, atol=1e-12 * (1 + np.abs(c).max()))


@pytest.mark.parametrize("dt,dp", [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0)])
def test_parameter_derivatives_match_finite_differences(dt, dp):
    L = 6
    c = np.random.default_rng(3).normal(size=sh.n_coeffs(L))
    th = np.array([0.3, 1.1, 2.0])
    ph = np.array([0.2, 2.5, 4.4])
    h = 1e-4

    def f(t, p, a, b):
        return sh.evaluate(c, L, t, p, a, b)

    # one finite-difference step in the last remaining direction
    if dt > 0:
        ref = (f(th + h, ph, dt - 1, dp) - f(th - h, ph, dt - 1, dp)) / (2 * h)
    else:
        ref = (f(th, ph + h, dt, dp - 1) - f(th, ph - h, dt, dp - 1)) / (2 * h)
    assert np.allclose(f(th, ph, dt, dp), ref, rtol=1e-6, atol=1e-6)


def test_grid_integrates_polynomials_exactly():
    g = sh.grid(12, 24)
    x = np.sin(g.theta_nodes) * np.cos(g.phi_nodes)
    z = np.cos(g.theta_nodes)
    assert g.integrate(np.ones(g.size)) == pytest.approx(4 * math.pi, rel=1e-14)
    assert g.integrate(x ** 2 * z ** 4) == pytest.approx(4 * math.pi / 35, rel=1e-13)


def test_analyze_rejects_unresolved_degree():
    g = sh.grid(4, 8)
    with pytest.raises(ValueError):
        g.analyze(np.zeros(g.size), 6)
