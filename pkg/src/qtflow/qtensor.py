"""Pointwise algebra on symmetric traceless 3x3 tensors.

Tensors are stored by their five independent components
``(q11, q12, q13, q22, q23)`` along the leading axis; ``q33`` is
reconstructed as ``-q11 - q22``.  Every function here is vectorized, so a
component array of shape ``(5, ...)`` is treated as a field of tensors.
Full matrices use the shape ``(3, 3, ...)``.
"""
from dataclasses import dataclass, field
import math

import numpy as np

SQRT6 = math.sqrt(6.0)

#: Uniaxial unit tensor diag(2, -1, -1)/sqrt(6); the extremizer of tr(Q^3).
UNIAXIAL = np.array([2.0, 0.0, 0.0, -1.0, 0.0]) / SQRT6

_IDX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2))


@dataclass(frozen=True)
class TracelessSym3:
    """A single symmetric traceless 3x3 tensor."""

    comp: np.ndarray

    def __post_init__(self):
        c = np.array(self.comp, dtype=float).reshape(5)
        c.setflags(write=False)
        object.__setattr__(self, "comp", c)

    @classmethod
    def from_matrix(cls, a):
        return cls(project_traceless(np.asarray(a, dtype=float)))

    @classmethod
    def zero(cls):
        return cls(np.zeros(5))

    @property
    def matrix(self):
        return to_matrix(self.comp)

    @property
    def norm(self):
        return float(frobenius(self.comp))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.comp, dtype=dtype)

    def __add__(self, other):
        return TracelessSym3(self.comp + _comp(other))

    def __sub__(self, other):
        return TracelessSym3(self.comp - _comp(other))

    def __mul__(self, s):
        return TracelessSym3(self.comp * float(s))

    __rmul__ = __mul__


def _comp(q):
    if isinstance(q, TracelessSym3):
        return q.comp
    return np.asarray(q, dtype=float)


def _like(q, out):
    return TracelessSym3(out) if isinstance(q, TracelessSym3) else out


def to_matrix(q):
    """Expand 5 components ``(5, ...)`` to full matrices ``(3, 3, ...)``."""
    q = _comp(q)
    q11, q12, q13, q22, q23 = q
    q33 = -(q11 + q22)
    return np.array([[q11, q12, q13],
                     [q12, q22, q23],
                     [q13, q23, q33]])


def project_traceless(a):
    """Symmetrize and remove the trace of ``a`` with shape ``(3, 3, ...)``.

    Returns the 5-component representation of ``L[A] = A - tr(A)/3 Id``
    applied to ``(A + A^T)/2``.
    """
    a = np.asarray(a, dtype=float)
    tr = (a[0, 0] + a[1, 1]) + a[2, 2]
    return np.array([
        a[0, 0] - tr / 3.0,
        0.5 * (a[0, 1] + a[1, 0]),
        0.5 * (a[0, 2] + a[2, 0]),
        a[1, 1] - tr / 3.0,
        0.5 * (a[1, 2] + a[2, 1]),
    ])


def tensor_dot(p, q):
    """Frobenius contraction ``P:Q`` of two component arrays."""
    p, q = _comp(p), _comp(q)
    return (p[0] * q[0] + p[3] * q[3] + (p[0] + p[3]) * (q[0] + q[3])
            + 2.0 * (p[1] * q[1] + p[2] * q[2] + p[4] * q[4]))


def norm_sq(q):
    return tensor_dot(q, q)


def frobenius(q):
    return np.sqrt(norm_sq(q))


def matmul(a, b):
    """Pointwise product of two ``(3, 3, ...)`` matrix fields."""
    return np.einsum("ij...,jk...->ik...", a, b)


def commutator(a, b):
    """Return ``AB - BA`` for ``(3, 3, ...)`` arrays."""
    return matmul(a, b) - matmul(b, a)


def trace_cubed(q):
    """tr(Q^3) computed from the explicit matrix product."""
    m = to_matrix(q)
    m2 = matmul(m, m)
    return np.einsum("ij...,ji...->...", m2, m)


def square_traceless(q):
    """Components of ``Q^2 - tr(Q^2)/3 Id``."""
    m = to_matrix(q)
    return project_traceless(matmul(m, m))


@dataclass(frozen=True)
class PotentialParams:
    """Landau-de Gennes coefficients and the constants of the safe ball.

    Inside ``|Q| < r`` the potential satisfies ``dF(Q):Q >= c1 |Q|^2`` and
    ``F(Q) >= lam |Q|^2``.  Use :func:`derive_constants` to obtain a
    consistent set.
    """

    a: float
    b: float
    c: float
    r: float = field(default=math.inf)
    c1: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"a must be >= 0, got {self.a}")
        if self.c < 0:
            raise ValueError(f"c must be >= 0, got {self.c}")

    def as_dict(self):
        return {"a": self.a, "b": self.b, "c": self.c,
                "r": self.r, "c1": self.c1, "lam": self.lam}


def derive_constants(a, b, c, r_max=10.0):
    """Safe-ball radius and coercivity constants for F.

    Uses ``|tr Q^3| <= |Q|^3/sqrt(6)``.  For ``b != 0`` the radius is
    ``sqrt(6) a / (2|b|)``, which gives ``c1 = a/2`` and ``lam = a/3``.
    For ``b == 0`` the bounds are exact and the radius is capped at
    ``r_max``.
    """
    if a <= 0:
        raise ValueError(f"derive_constants needs a > 0, got a={a}")
    if c <= 0:
        raise ValueError(f"derive_constants needs c > 0, got c={c}")
    if b == 0:
        r = float(r_max)
    else:
        r = min(SQRT6 * a / (2.0 * abs(b)), float(r_max))
    c1 = a - abs(b) * r / SQRT6
    lam = 0.5 * a - abs(b) * r / (3.0 * SQRT6)
    return PotentialParams(float(a), float(b), float(c), r, c1, lam)


def potential_value(q, p):
    """F(Q) = a/2 |Q|^2 - b/3 tr(Q^3) + c/4 |Q|^4."""
    n2 = norm_sq(q)
    return 0.5 * p.a * n2 - p.b / 3.0 * trace_cubed(q) + 0.25 * p.c * n2 * n2


def potential_gradient(q, p):
    """Traceless projection of dF: ``aQ - b(Q^2 - tr(Q^2)/3 Id) + c|Q|^2 Q``."""
    qc = _comp(q)
    out = (p.a + p.c * norm_sq(qc)) * qc - p.b * square_traceless(qc)
    return _like(q, out)


def potential_contraction(q, p):
    """dF(Q):Q = a|Q|^2 - b tr(Q^3) + c|Q|^4."""
    n2 = norm_sq(q)
    return p.a * n2 - p.b * trace_cubed(q) + p.c * n2 * n2


def random_traceless(rng, size, max_norm=None):
    """Random tensors ``(5, size)``; if ``max_norm`` is set they are drawn
    uniformly in the ball ``|Q| <= max_norm`` of the 5-d tensor space."""
    a = rng.standard_normal((3, 3, size))
    q = project_traceless(a)
    if max_norm is None:
        return q
    nrm = frobenius(q)
    radius = max_norm * rng.random(size) ** (1.0 / 5.0)
    return q * (radius / nrm)
