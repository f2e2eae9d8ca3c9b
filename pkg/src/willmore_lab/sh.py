"""Real spherical harmonics on a Gauss-Legendre x uniform-longitude grid.

Convention: orthonormal real harmonics on the unit sphere (no Condon-Shortley
phase), indexed ``l*l + l + m`` for ``-l <= m <= l``::

    Y_lm = Theta_l|m|(theta) * sqrt(2) cos(m phi)     m > 0
    Y_l0 = Theta_l0(theta)
    Y_lm = Theta_l|m|(theta) * sqrt(2) sin(|m| phi)   m < 0

so that ``Y_00 = 1/sqrt(4 pi)`` and ``x = sqrt(4 pi / 3) Y_11`` on the unit
sphere.  Theta-derivatives of any order are exact: ``Theta_lm`` extended to
``theta in [0, 2 pi)`` is a trigonometric polynomial of degree ``l``, whose
Fourier coefficients we obtain once by FFT.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

CONVENTION = "real-orthonormal-no-condon-shortley"


def n_coeffs(lmax: int) -> int:
    return (lmax + 1) ** 2


def lm_index(l: int, m: int) -> int:
    return l * l + l + m


def lm_pairs(lmax: int) -> np.ndarray:
    """(n_coeffs, 2) array of (l, m) in storage order."""
    out = np.empty((n_coeffs(lmax), 2), dtype=int)
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            out[lm_index(l, m)] = (l, m)
    return out


def legendre_table(lmax: int, cos_t: np.ndarray, sin_t: np.ndarray) -> np.ndarray:
    """Normalized Theta_lm(theta) for 0 <= m <= l <= lmax.

    Uses the signed ``sin_t`` so that the result is a trigonometric
    polynomial on the full circle.  Returns shape ``(lmax+1, lmax+1, n)``
    indexed ``[l, m]``.
    """
    cos_t = np.asarray(cos_t, dtype=float)
    sin_t = np.asarray(sin_t, dtype=float)
    P = np.zeros((lmax + 1, lmax + 1) + cos_t.shape)
    P[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, lmax + 1):
        P[m, m] = np.sqrt((2 * m + 1) / (2.0 * m)) * sin_t * P[m - 1, m - 1]
    for m in range(0, lmax):
        P[m + 1, m] = np.sqrt(2 * m + 3.0) * cos_t * P[m, m]
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, m] = a * (cos_t * P[l - 1, m] - b * P[l - 2, m])
    return P


@lru_cache(maxsize=16)
def _theta_fourier(lmax: int) -> tuple[np.ndarray, np.ndarray]:
    # Fourier coefficients c_k of Theta_l|m|(theta), one row per storage index.
    M = 2 * lmax + 2
    th = 2.0 * np.pi * np.arange(M) / M
    P = legendre_table(lmax, np.cos(th), np.sin(th))
    pairs = lm_pairs(lmax)
    samples = P[pairs[:, 0], np.abs(pairs[:, 1])]
    coef = np.fft.fft(samples, axis=1) / M
    freqs = np.fft.fftfreq(M, d=1.0 / M)
    return coef, freqs


def theta_table(lmax: int, theta: np.ndarray, order: int) -> np.ndarray:
    """d^order Theta_l|m| / d theta^order at ``theta``; shape (n, n_coeffs)."""
    coef, freqs = _theta_fourier(lmax)
    theta = np.asarray(theta, dtype=float)
    phase = np.exp(1j * np.outer(theta, freqs))
    vals = phase @ (coef * (1j * freqs) ** order).T
    return vals.real


def phi_table(lmax: int, phi: np.ndarray, order: int) -> np.ndarray:
    """d^order/d phi^order of the longitudinal factors, shape (n, 2*lmax+1).

    Column ``m + lmax`` holds the factor for order ``m``.
    """
    phi = np.asarray(phi, dtype=float)
    out = np.zeros((phi.size, 2 * lmax + 1))
    shift = order * np.pi / 2.0
    if order == 0:
        out[:, lmax] = 1.0
    for m in range(1, lmax + 1):
        amp = np.sqrt(2.0) * float(m) ** order
        out[:, lmax + m] = amp * np.cos(m * phi + shift)
        out[:, lmax - m] = amp * np.sin(m * phi + shift)
    return out


def evaluate(coeffs: np.ndarray, lmax: int, theta: np.ndarray, phi: np.ndarray,
             d_theta: int = 0, d_phi: int = 0) -> np.ndarray:
    """Pointwise evaluation of an expansion (last axis = coefficients)."""
    pairs = lm_pairs(lmax)
    T = theta_table(lmax, theta, d_theta)
    Ph = phi_table(lmax, phi, d_phi)[:, pairs[:, 1] + lmax]
    return (T * Ph) @ np.asarray(coeffs).T


class SphereGrid:
    """Tensor grid: Gauss-Legendre nodes in cos(theta) times uniform phi.

    Node ``(i, j)`` is flattened to ``i * n_phi + j``.  Scalar fields are
    analysed up to degree ``lmax = min(n_theta, n_phi // 2) - 1``, for which
    the quadrature of the forward transform is exact.
    """

    def __init__(self, n_theta: int, n_phi: int):
        if n_theta < 2 or n_phi < 4:
            raise ValueError(f"grid too small: n_theta={n_theta}, n_phi={n_phi}")
        self.n_theta = int(n_theta)
        self.n_phi = int(n_phi)
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        # north pole first
        x, w = x[::-1], w[::-1]
        self.cos_theta = x
        self.theta = np.arccos(x)
        self.sin_theta = np.sqrt(1.0 - x * x)
        self.phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        self.dphi = 2.0 * np.pi / self.n_phi
        self.gl_weights = w
        self.lmax = min(self.n_theta, self.n_phi // 2) - 1
        # weights for \int f dOmega, flattened
        self.weights = np.repeat(w * self.dphi, self.n_phi)
        self.theta_nodes = np.repeat(self.theta, self.n_phi)
        self.phi_nodes = np.tile(self.phi, self.n_theta)
        self.size = self.n_theta * self.n_phi
        self._tables: dict[tuple[int, int], np.ndarray] = {}
        self._phis: dict[tuple[int, int], np.ndarray] = {}
        self._selectors: dict[int, np.ndarray] = {}

    def __repr__(self) -> str:
        return f"SphereGrid(n_theta={self.n_theta}, n_phi={self.n_phi})"

    def key(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    # cached separable tables -------------------------------------------
    def _theta(self, lmax: int, order: int) -> np.ndarray:
        k = (lmax, order)
        if k not in self._tables:
            self._tables[k] = theta_table(lmax, self.theta, order)
        return self._tables[k]

    def _phi(self, lmax: int, order: int) -> np.ndarray:
        k = (lmax, order)
        if k not in self._phis:
            self._phis[k] = phi_table(lmax, self.phi, order)
        return self._phis[k]

    def _selector(self, lmax: int) -> np.ndarray:
        if lmax not in self._selectors:
            pairs = lm_pairs(lmax)
            S = np.zeros((n_coeffs(lmax), 2 * lmax + 1))
            S[np.arange(n_coeffs(lmax)), pairs[:, 1] + lmax] = 1.0
            self._selectors[lmax] = S
        return self._selectors[lmax]

    # transforms ----------------------------------------------------------
    def synthesize(self, coeffs: np.ndarray, lmax: int, d_theta: int = 0,
                   d_phi: int = 0) -> np.ndarray:
        """Values (or parameter derivatives) at the flattened nodes.

        ``coeffs`` has the coefficient axis last; leading axes are batched.
        Output shape: ``(size,) + leading``.
        """
        c = np.asarray(coeffs, dtype=float)
        lead = c.shape[:-1]
        c2 = c.reshape(-1, c.shape[-1])
        T = self._theta(lmax, d_theta)
        S = self._selector(lmax)
        Ph = self._phi(lmax, d_phi)
        out = np.empty((self.size, c2.shape[0]))
        for b in range(c2.shape[0]):
            G = (T * c2[b]) @ S
            out[:, b] = (G @ Ph.T).ravel()
        return out.reshape((self.size,) + lead)

    def analyze(self, values: np.ndarray, lmax: int | None = None) -> np.ndarray:
        """Forward transform of nodal values (first axis = nodes)."""
        if lmax is None:
            lmax = self.lmax
        if lmax > self.lmax:
            raise ValueError(f"degree {lmax} not resolved by {self!r}")
        v = np.asarray(values, dtype=float)
        if v.shape[0] != self.size:
            raise ValueError(f"field has {v.shape[0]} nodes, grid has {self.size}")
        lead = v.shape[1:]
        v2 = v.reshape(self.size, -1)
        T = self._theta(lmax, 0)
        Ph = self._phi(lmax, 0)
        pairs = lm_pairs(lmax)
        out = np.empty((v2.shape[1], n_coeffs(lmax)))
        for b in range(v2.shape[1]):
            A = v2[:, b].reshape(self.n_theta, self.n_phi) @ Ph * self.dphi
            out[b] = np.einsum("i,ik,ik->k", self.gl_weights, T,
                               A[:, pairs[:, 1] + lmax])
        return out.reshape(lead + (n_coeffs(lmax),))

    def derivatives(self, values: np.ndarray, orders) -> list[np.ndarray]:
        """Spectral parameter derivatives of a scalar nodal field."""
        c = self.analyze(values)
        return [self.synthesize(c, self.lmax, a, b) for a, b in orders]

    def integrate(self, values: np.ndarray) -> float:
        """Integral over the unit sphere (dOmega) of a nodal field."""
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=32)
def grid(n_theta: int, n_phi: int) -> SphereGrid:
    return SphereGrid(n_theta, n_phi)
