"""Periodic box discretization on [0, 2pi)^dim.

Fields are plain arrays with the spatial axes last:

* scalar: ``(n,)*dim``
* vector: ``(dim, n, ..., n)``
* tensor: ``(5, n, ..., n)`` (see :mod:`qtflow.qtensor`)

Spectral arrays come from a real FFT over the spatial axes, so the last
spatial axis has ``n//2 + 1`` modes.  Gradients put the derivative
direction on a new leading axis.
"""
import math

import numpy as np
import scipy.fft

from . import qtensor


class Grid:
    """Uniform periodic grid with exact spectral operators.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    n : int
        Points per axis; even and at least 8.
    workers : int
        Thread count handed to :mod:`scipy.fft`.
    """

    def __init__(self, dim, n, workers=1):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        if n < 8 or n % 2:
            raise ValueError(f"n must be even and >= 8, got {n}")
        self.dim = int(dim)
        self.n = int(n)
        self.workers = int(workers)
        self.length = 2 * math.pi
        self.h = self.length / n
        self.shape = (n,) * dim
        self.axes = tuple(range(-dim, 0))
        self.cell_volume = self.h ** dim
        self.volume = self.length ** dim

        x1 = np.arange(n) * self.h
        self.x = np.meshgrid(*([x1] * dim), indexing="ij")

        kfull = np.fft.fftfreq(n, 1.0 / n)
        khalf = np.fft.rfftfreq(n, 1.0 / n)
        k1d = [kfull] * (dim - 1) + [khalf]
        self.k = np.meshgrid(*k1d, indexing="ij")
        self.spectral_shape = self.k[0].shape
        self.k2 = sum(ki ** 2 for ki in self.k)
        self.k2_safe = np.where(self.k2 == 0, 1.0, self.k2)
        # first derivatives drop the Nyquist mode, which has no real derivative
        nyq = n // 2
        self.ik = [np.where(np.abs(ki) == nyq, 0.0, 1j * ki) for ki in self.k]
        # the projector uses the same effective wavenumbers so that
        # divergence(leray_project(v)) vanishes to round-off
        self.kd = [ika.imag for ika in self.ik]
        kd2 = sum(kd ** 2 for kd in self.kd)
        self.kd2_safe = np.where(kd2 == 0, 1.0, kd2)
        cut = n / 3.0
        self.dealias_mask = np.ones(self.spectral_shape, dtype=bool)
        for ki in self.k:
            self.dealias_mask &= np.abs(ki) <= cut
        self.nyquist_mask = np.zeros(self.spectral_shape, dtype=bool)
        for ki in self.k:
            self.nyquist_mask |= np.abs(ki) == nyq

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.dim, self.n) == (other.dim, other.n)

    def __hash__(self):
        return hash((self.dim, self.n))

    # -- transforms -------------------------------------------------------

    def _check(self, f):
        if tuple(f.shape[-self.dim:]) != self.shape:
            raise ValueError(
                f"field shape {f.shape} does not end with grid shape {self.shape}")

    def fft(self, f):
        f = np.asarray(f, dtype=float)
        self._check(f)
        return scipy.fft.rfftn(f, axes=self.axes, workers=self.workers)

    def ifft(self, fh):
        return scipy.fft.irfftn(fh, s=self.shape, axes=self.axes,
                                workers=self.workers)

    # -- spectral operators ----------------------------------------------

    def dealias(self, fh):
        """Zero every mode with some ``|k_a| > n/3``."""
        return fh * self.dealias_mask

    def gradient_hat(self, fh):
        return np.stack([ika * fh for ika in self.ik])

    def gradient(self, f):
        """``(dim, *f.shape)`` array of partial derivatives."""
        return self.ifft(self.gradient_hat(self.fft(f)))

    def jacobian(self, u):
        """Velocity gradient ``J[a, b] = d_b u_a``."""
        return np.moveaxis(self.gradient(u), 0, 1)

    def divergence_hat(self, vh, axis=0):
        vh = np.moveaxis(vh, axis, 0)
        if vh.shape[0] != self.dim:
            raise ValueError(f"divergence axis has length {vh.shape[0]}, expected {self.dim}")
        return sum(self.ik[a] * vh[a] for a in range(self.dim))

    def divergence(self, v, axis=0):
        """Contract ``d_a`` with the component axis ``axis`` of ``v``."""
        return self.ifft(self.divergence_hat(self.fft(v), axis=axis))

    def laplacian(self, f):
        return self.ifft(-self.k2 * self.fft(f))

    def leray_hat(self, vh):
        kv = sum(self.kd[a] * vh[a] for a in range(self.dim))
        return np.stack([vh[a] - self.kd[a] * kv / self.kd2_safe
                         for a in range(self.dim)])

    def leray_project(self, v):
        """Orthogonal projection onto divergence-free fields (mean kept)."""
        return self.ifft(self.leray_hat(self.fft(v)))

    def heat_semigroup(self, f, s):
        """Apply ``exp(s * Laplacian)``."""
        if s < 0:
            raise ValueError(f"heat semigroup time must be >= 0, got {s}")
        if s == 0:
            return np.array(f, dtype=float, copy=True)
        return self.ifft(np.exp(-s * self.k2) * self.fft(f))

    def inverse_laplacian_hat(self, fh):
        """Solve ``Lap g = f`` modewise with the mean of ``g`` set to zero."""
        gh = -fh / self.k2_safe
        gh[(Ellipsis,) + (0,) * self.dim] = 0.0
        return gh

    def mean(self, f):
        return np.mean(f, axis=self.axes)

    # -- pointwise magnitudes and norms ----------------------------------

    def magnitude(self, f):
        """Pointwise |f|: absolute value, Euclidean length, or Frobenius
        norm, chosen from the shape of ``f``.

        Arrays with more than one leading axis are treated as stacks; a
        trailing leading axis of length 5 is read as tensor components.
        """
        f = np.asarray(f, dtype=float)
        self._check(f)
        lead = f.shape[:-self.dim]
        if not lead:
            return np.abs(f)
        if lead[-1] == 5:
            sq = qtensor.norm_sq(np.moveaxis(f, -self.dim - 1, 0))
        else:
            sq = np.sum(f * f, axis=-self.dim - 1)
        while sq.ndim > self.dim:
            sq = np.sum(sq, axis=0)
        return np.sqrt(sq)

    def integrate(self, f):
        return float(np.sum(f) * self.cell_volume)

    def lq_norm(self, f, q):
        """Quadrature L^q norm; ``q = inf`` gives the grid maximum."""
        if q < 1:
            raise ValueError(f"L^q norm needs q >= 1, got {q}")
        m = self.magnitude(f)
        if math.isinf(q):
            return float(np.max(m))
        if q == 2:
            return math.sqrt(self.integrate(m * m))
        return self.integrate(m ** q) ** (1.0 / q)

    def l2_norm(self, f):
        return self.lq_norm(f, 2)

    def grad_l2(self, f):
        return self.l2_norm(self.gradient(f))

    def h1_norm(self, f):
        return math.sqrt(self.l2_norm(f) ** 2 + self.grad_l2(f) ** 2)

    def inner(self, f, g):
        """L^2 inner product, Frobenius for 5-component tensors."""
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        lead = f.shape[:-self.dim]
        if lead and lead[-1] == 5:
            fg = qtensor.tensor_dot(np.moveaxis(f, -self.dim - 1, 0),
                                    np.moveaxis(g, -self.dim - 1, 0))
        else:
            fg = f * g
        return self.integrate(fg)

    def spectral_l2_sq(self, fh):
        """Squared L^2 norm from rfft coefficients (Parseval)."""
        w = np.full(self.spectral_shape[-1], 2.0)
        w[0] = 1.0
        if self.n % 2 == 0:
            w[-1] = 1.0
        p = np.abs(fh) ** 2 * w
        total = float(np.sum(p))
        return total * self.volume / self.n ** (2 * self.dim)

    def band_limit(self, f, kmax):
        """Keep only modes with every ``|k_a| <= kmax``."""
        mask = np.ones(self.spectral_shape, dtype=bool)
        for ki in self.k:
            mask &= np.abs(ki) <= kmax
        return self.ifft(self.fft(f) * mask)
