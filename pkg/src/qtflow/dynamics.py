"""Right-hand sides of the coupled Q-tensor / Navier-Stokes system.

With xi = 0 the system on the periodic box reads::

    Q_t = -(u.grad)Q + wQ - Qw + Gamma (Lap Q - L[dF(Q)])
    u_t = P_div[ -(u.grad)u + nu Lap u - div(gradQ (x) gradQ) + div(Q LapQ - LapQ Q) ]

where ``w`` is the antisymmetric velocity gradient and ``P_div`` the Leray
projector.  The stepper treats ``Gamma (Lap - a)`` and ``nu Lap`` implicitly
and everything returned by :func:`nonlinear_hat` explicitly.

In two dimensions the velocity has two components and the fields do not
depend on x3; Q is still a full 3x3 tensor.
"""
from dataclasses import dataclass, field

import numpy as np

from . import qtensor
from .qtensor import PotentialParams


@dataclass(frozen=True)
class Model:
    """Physical coefficients of the system.

    ``elastic_sign`` multiplies ``div(gradQ (x) gradQ)`` in the momentum
    equation.  The energy-consistent value is -1; +1 is kept only so tests
    can show that it breaks the energy law.
    """

    potential: PotentialParams
    viscosity: float = 1.0
    relaxation: float = 1.0
    elastic_sign: float = -1.0
    dealias: bool = True
    freeze_velocity: bool = False


@dataclass
class Rhs:
    dq: np.ndarray
    du: np.ndarray
    pressure: np.ndarray = field(default=None)


def _dealias(grid, fh, model):
    return grid.dealias(fh) if model.dealias else fh


def _embed3(grid, m):
    """Pad a ``(dim, dim, ...)`` array to ``(3, 3, ...)`` with zeros."""
    if grid.dim == 3:
        return m
    out = np.zeros((3, 3) + m.shape[2:])
    out[:2, :2] = m
    return out


def vorticity_tensor(grid, u):
    """``w[a, b] = (d_b u_a - d_a u_b)/2`` as a ``(3, 3, ...)`` field."""
    j = grid.jacobian(u)
    return _embed3(grid, 0.5 * (j - np.swapaxes(j, 0, 1)))


def elastic_stress(grid, dq):
    """``(gradQ (x) gradQ)[a, b] = d_a Q : d_b Q`` from ``dq`` of shape
    ``(dim, 5, ...)``."""
    d = grid.dim
    m = np.empty((d, d) + dq.shape[2:])
    for a in range(d):
        for b in range(a, d):
            m[a, b] = qtensor.tensor_dot(dq[a], dq[b])
            m[b, a] = m[a, b]
    return m


def bulk_nonlinear(q, p):
    """Nonlinear part of ``-L[dF(Q)]``: ``b(Q^2 - |Q|^2/3 Id) - c|Q|^2 Q``."""
    return p.b * qtensor.square_traceless(q) - p.c * qtensor.norm_sq(q) * q


def nonlinear_hat(grid, uh, qh, model):
    """Explicit parts of both equations, in spectral space.

    Returns ``(nu_hat, nq_hat)``; ``nu_hat`` is Leray-projected with a zero
    mean mode, and both are dealiased when ``model.dealias`` is set.
    """
    d = grid.dim
    p = model.potential
    u = grid.ifft(uh)
    q = grid.ifft(qh)
    dq = grid.ifft(grid.gradient_hat(qh))            # (dim, 5, ...)
    j = np.moveaxis(grid.ifft(grid.gradient_hat(uh)), 0, 1)  # j[a,b] = d_b u_a
    w = _embed3(grid, 0.5 * (j - np.swapaxes(j, 0, 1)))

    qm = qtensor.to_matrix(q)
    adv_q = sum(u[g] * dq[g] for g in range(d))
    rot = qtensor.project_traceless(qtensor.commutator(w, qm))
    nq = -adv_q + rot + model.relaxation * bulk_nonlinear(q, p)
    nq_hat = _dealias(grid, grid.fft(nq), model)

    if model.freeze_velocity:
        return np.zeros_like(uh), nq_hat

    lap_q = grid.ifft(-grid.k2 * qh)
    adv_u = np.stack([sum(u[b] * j[a, b] for b in range(d)) for a in range(d)])
    rot_stress = qtensor.commutator(qm, qtensor.to_matrix(lap_q))[:d, :d]
    stress = model.elastic_sign * elastic_stress(grid, dq) + rot_stress
    stress_hat = _dealias(grid, grid.fft(stress), model)
    nu_hat = (-_dealias(grid, grid.fft(adv_u), model)
              + grid.divergence_hat(stress_hat, axis=1))
    nu_hat = grid.leray_hat(nu_hat)
    nu_hat[(Ellipsis,) + (0,) * d] = 0.0
    return nu_hat, nq_hat


def linear_symbols(grid, model):
    """Diagonal implicit operators ``(L_u, L_q)`` acting on spectral modes."""
    lu = -model.viscosity * grid.k2
    lq = -model.relaxation * (grid.k2 + model.potential.a)
    if model.freeze_velocity:
        lu = np.zeros_like(lu)
    return lu, lq


def rhs_hat(grid, uh, qh, model):
    nu_hat, nq_hat = nonlinear_hat(grid, uh, qh, model)
    lu, lq = linear_symbols(grid, model)
    return lu * uh + nu_hat, lq * qh + nq_hat


def q_rhs(grid, u, q, model):
    """``dQ/dt`` as a tensor field."""
    _, dq_hat = rhs_hat(grid, grid.fft(u), grid.fft(q), model)
    return grid.ifft(dq_hat)


def u_rhs(grid, u, q, model):
    """``du/dt`` (already Leray-projected) as a vector field."""
    du_hat, _ = rhs_hat(grid, grid.fft(u), grid.fft(q), model)
    return grid.ifft(du_hat)


def rhs(grid, u, q, model, with_pressure=False):
    du_hat, dq_hat = rhs_hat(grid, grid.fft(u), grid.fft(q), model)
    pressure = pressure_solve(grid, u, q) if with_pressure else None
    return Rhs(grid.ifft(dq_hat), grid.ifft(du_hat), pressure)


def molecular_field(grid, q, p):
    """``H = Lap Q - L[dF(Q)]``."""
    return grid.laplacian(q) - qtensor.potential_gradient(q, p)


def pressure_solve(grid, u, q, elastic_sign=-1.0):
    """Zero-mean pressure from ``-Lap P = div div (u (x) u + gradQ (x) gradQ)``.

    The rotational stress ``Q LapQ - LapQ Q`` is antisymmetric and drops out
    of the double divergence.
    """
    d = grid.dim
    dq = grid.gradient(q)
    s = -elastic_sign * elastic_stress(grid, dq)
    for a in range(d):
        for b in range(d):
            s[a, b] += u[a] * u[b]
    sh = grid.fft(s)
    dd = sum(grid.k[a] * grid.k[b] * sh[a, b] for a in range(d) for b in range(d))
    # -Lap P = -k_a k_b S_ab  =>  |k|^2 P = -k_a k_b S_ab
    ph = -dd / grid.k2_safe
    ph[(Ellipsis,) + (0,) * d] = 0.0
    return grid.ifft(ph)


def double_divergence(grid, m):
    """``d_a d_b M_ab`` of a ``(dim, dim, ...)`` field."""
    d = grid.dim
    mh = grid.fft(m)
    return grid.ifft(-sum(grid.k[a] * grid.k[b] * mh[a, b]
                          for a in range(d) for b in range(d)))
