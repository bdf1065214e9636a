"""Real Fourier basis on the circle used by the truncated Diff(S^1) model.

A band-limited periodic function with wavenumbers ``0 <= k <= N-1`` is stored
as a real coefficient vector of length ``2N - 1`` in the L2-orthonormal basis

    1/sqrt(2 pi),  cos(k x)/sqrt(pi),  sin(k x)/sqrt(pi),   k = 1 .. N-1

interleaved as ``[c0, a1, b1, a2, b2, ...]``.  With this choice the L2(S^1)
pairing of two fields is the Euclidean dot product of their coefficients.
All routines broadcast over leading axes.
"""
from __future__ import annotations

import numpy as np

_SQRT_PI = np.sqrt(np.pi)
_SQRT_2PI = np.sqrt(2.0 * np.pi)


class FourierBasis:
    """Coefficient <-> grid transforms, derivatives and dealiased products."""

    def __init__(self, n_modes: int):
        if n_modes < 2:
            raise ValueError("need at least two Fourier modes")
        self.n_modes = int(n_modes)
        self.dim = 2 * self.n_modes - 1
        self.n_grid = 2 * self.n_modes
        # 3N-point padded grid makes products of band N-1 fields exact after truncation
        self.n_pad = 3 * self.n_modes
        k = np.zeros(self.dim)
        k[1::2] = np.arange(1, self.n_modes)
        k[2::2] = np.arange(1, self.n_modes)
        self.wavenumbers = k
        self.grid = self.nodes(self.n_grid)
        self._kint = np.arange(self.n_modes)

    @staticmethod
    def nodes(m: int) -> np.ndarray:
        return 2.0 * np.pi * np.arange(m) / m

    # -- transforms -------------------------------------------------------
    def _to_rfft(self, c: np.ndarray, m: int) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        out = np.zeros(c.shape[:-1] + (m // 2 + 1,), dtype=complex)
        out[..., 0] = m * c[..., 0] / _SQRT_2PI
        out[..., 1:self.n_modes] = 0.5 * m * (c[..., 1::2] - 1j * c[..., 2::2]) / _SQRT_PI
        return out

    def to_grid(self, c: np.ndarray, m: int | None = None) -> np.ndarray:
        """Values of the field on the uniform ``m``-point grid (default ``2N``)."""
        m = self.n_grid if m is None else int(m)
        if m < self.dim:
            raise ValueError(f"grid of {m} points under-resolves {self.n_modes} modes")
        return np.fft.irfft(self._to_rfft(c, m), n=m, axis=-1)

    def from_grid(self, f: np.ndarray) -> np.ndarray:
        """Trigonometric interpolation of grid samples, truncated to N modes."""
        f = np.asarray(f, dtype=float)
        m = f.shape[-1]
        if m // 2 < self.n_modes - 1 or (m % 2 == 0 and m // 2 == self.n_modes - 1):
            raise ValueError(f"grid of {m} points cannot represent {self.n_modes} modes")
        F = np.fft.rfft(f, axis=-1)
        c = np.empty(f.shape[:-1] + (self.dim,))
        c[..., 0] = F[..., 0].real * _SQRT_2PI / m
        Fk = F[..., 1:self.n_modes]
        c[..., 1::2] = 2.0 * Fk.real * _SQRT_PI / m
        c[..., 2::2] = -2.0 * Fk.imag * _SQRT_PI / m
        return c

    def from_function(self, func, m: int | None = None) -> np.ndarray:
        """Project a callable ``func(x)`` by sampling on a fine grid."""
        m = 4 * self.n_modes if m is None else m
        return self.from_grid(func(self.nodes(m)))

    def constant(self, value: float) -> np.ndarray:
        c = np.zeros(self.dim)
        c[0] = value * _SQRT_2PI
        return c

    def mean(self, c: np.ndarray) -> np.ndarray:
        """Spatial average of the field (not the coefficient)."""
        return np.asarray(c)[..., 0] / _SQRT_2PI

    def mode(self, k: int, cos: float = 0.0, sin: float = 0.0) -> np.ndarray:
        """Coefficients of ``cos * cos(kx) + sin * sin(kx)`` (``k = 0`` -> constant ``cos``)."""
        if not 0 <= k < self.n_modes:
            raise ValueError(f"mode {k} outside the retained band")
        if k == 0:
            return self.constant(cos)
        c = np.zeros(self.dim)
        c[2 * k - 1] = cos * _SQRT_PI
        c[2 * k] = sin * _SQRT_PI
        return c

    # -- calculus ---------------------------------------------------------
    def deriv(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        d = np.zeros_like(c)
        kk = self.wavenumbers[2::2]
        d[..., 1::2] = kk * c[..., 2::2]
        d[..., 2::2] = -kk * c[..., 1::2]
        return d

    def product(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Projection of the pointwise product onto the retained band (alias-free)."""
        fa = self.to_grid(a, self.n_pad)
        fb = self.to_grid(b, self.n_pad)
        return self.from_grid(fa * fb)

    def evaluate(self, c: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Evaluate the trigonometric polynomial at arbitrary points ``y``.

        ``c`` has shape ``(..., dim)`` and ``y`` shape ``(..., P)``; leading axes
        broadcast.
        """
        c = np.asarray(c, dtype=float)
        y = np.asarray(y, dtype=float)
        e1 = np.exp(1j * y)
        # powers e^{iky} by cumulative product: much cheaper than K complex exps
        phase = np.cumprod(np.broadcast_to(e1[..., :, None], e1.shape + (self.n_modes - 1,)),
                           axis=-1)
        z = (c[..., 1::2] - 1j * c[..., 2::2]) / _SQRT_PI
        vals = np.matmul(phase, z[..., :, None])[..., 0].real
        return vals + (c[..., 0] / _SQRT_2PI)[..., None]

    def basis_matrix(self, y: np.ndarray) -> np.ndarray:
        """Basis functions at points ``y``: shape ``y.shape + (dim,)``."""
        y = np.asarray(y, dtype=float)
        e1 = np.exp(1j * y)
        phase = np.cumprod(np.broadcast_to(e1[..., None], e1.shape + (self.n_modes - 1,)), axis=-1)
        out = np.empty(y.shape + (self.dim,))
        out[..., 0] = 1.0 / _SQRT_2PI
        out[..., 1::2] = phase.real / _SQRT_PI
        out[..., 2::2] = phase.imag / _SQRT_PI
        return out

    def evaluate_deriv(self, c: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.evaluate(self.deriv(c), y)

    def sobolev_norm(self, c: np.ndarray, order: float) -> np.ndarray:
        """H^order norm with spectral weight (1 + k^2)^order."""
        w = (1.0 + self.wavenumbers**2) ** order
        return np.sqrt(np.sum(w * np.asarray(c) ** 2, axis=-1))
