"""Cylinder quantities for partial-regularity diagnostics.

Space-time integrals live on parabolic cylinders
``Q_r(x0, t0) = B_r(x0) x [t0 - r^2, t0]``.  Balls are always three
dimensional; a two-dimensional trajectory is treated as independent of
``x3``, so its fields are sampled at the in-plane coordinates of the ball
nodes.

Spatial integrals use a spherical product rule (Gauss-Legendre in radius
and ``cos(theta)``, trapezoid in azimuth).  Field values at the nodes come
from an exact trigonometric evaluation on a fine local patch followed by
multilinear interpolation.  Time integrals use the trapezoid rule on the
stored snapshots, with linear interpolation at window ends.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.ndimage import map_coordinates

from . import qtensor
from .dynamics import pressure_solve


# -- Besov monitor --------------------------------------------------------

def besov_scales(grid, s_min=None, s_max=1.0, ratio=2.0):
    """Geometric grid ``s_min * ratio**j`` capped at ``s_max``."""
    if s_min is None:
        s_min = grid.h ** 2
    if ratio <= 1:
        raise ValueError(f"ratio must be > 1, got {ratio}")
    count = int(math.floor(math.log(s_max / s_min) / math.log(ratio) * (1 + 1e-12))) + 1
    return s_min * ratio ** np.arange(max(count, 1))


def besov_proxy(grid, f, s_min=None, s_max=1.0, ratio=2.0):
    """``max_s sqrt(s) ||exp(s Lap) f||_inf`` over :func:`besov_scales`.

    A computable stand-in for the homogeneous ``B^{-1}_{inf,inf}`` norm;
    ``f`` should have zero mean.
    """
    fh = grid.fft(f)
    best = 0.0
    for s in besov_scales(grid, s_min, s_max, ratio):
        v = grid.ifft(np.exp(-s * grid.k2) * fh)
        best = max(best, math.sqrt(s) * float(np.max(grid.magnitude(v))))
    return best


def besov_monitor(grid, state, **kw):
    """``B(u) + B(grad Q)`` for one snapshot."""
    return besov_proxy(grid, state.u, **kw) + besov_proxy(grid, grid.gradient(state.q), **kw)


# -- quadrature and field sampling ----------------------------------------

@dataclass(frozen=True)
class BallQuadrature:
    """Product rule on a 3-D ball split into radial shells.

    ``edges`` are the shell radii, e.g. ``(0, r)`` or ``(0, r, 2r)``.
    ``points`` has shape ``(3, N)`` (offsets from the centre).
    """

    points: np.ndarray
    weights: np.ndarray
    radius: np.ndarray

    @classmethod
    def build(cls, edges, n_radial=12, n_polar=12, n_azimuth=24):
        xr, wr = np.polynomial.legendre.leggauss(n_radial)
        xm, wm = np.polynomial.legendre.leggauss(n_polar)
        phi = 2 * math.pi * np.arange(n_azimuth) / n_azimuth
        wphi = np.full(n_azimuth, 2 * math.pi / n_azimuth)
        rho, wrho = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            rr = lo + half * (xr + 1)
            rho.append(rr)
            wrho.append(half * wr * rr ** 2)
        rho = np.concatenate(rho)
        wrho = np.concatenate(wrho)
        R, M, P = np.meshgrid(rho, xm, phi, indexing="ij")
        W = wrho[:, None, None] * wm[None, :, None] * wphi[None, None, :]
        s = np.sqrt(1 - M ** 2)
        pts = np.stack([R * s * np.cos(P), R * s * np.sin(P), R * M])
        return cls(pts.reshape(3, -1), W.ravel(), R.ravel())

    def integrate(self, values):
        return float(np.dot(values, self.weights))


class PatchSampler:
    """Evaluate periodic grid fields at scattered points near ``center``.

    The trigonometric interpolant is summed exactly on a local lattice of
    spacing ``h/upsample`` (separable partial DFT) and then interpolated
    multilinearly (``order=1``) to the points.
    """

    def __init__(self, grid, center, points, upsample=8, order=1):
        d = grid.dim
        self.grid = grid
        self.order = order
        center = np.asarray(center, dtype=float)[:d]
        offs = np.asarray(points)[:d]
        hp = grid.h / upsample
        lo = offs.min(axis=1) - 2 * hp
        hi = offs.max(axis=1) + 2 * hp
        m = np.ceil((hi - lo) / hp).astype(int) + 1
        k = np.fft.fftfreq(grid.n, 1.0 / grid.n)
        self.phase = []
        for a in range(d):
            xs = center[a] + lo[a] + hp * np.arange(m[a])
            self.phase.append(np.exp(1j * np.outer(k, xs)))
        self.coords = (offs - lo[:, None]) / hp

    def __call__(self, fields):
        """``fields`` of shape ``(C, *grid.shape)`` -> ``(C, N)``."""
        g = self.grid
        d = g.dim
        fields = np.asarray(fields, dtype=float)
        c = np.fft.fftn(fields, axes=tuple(range(1, d + 1))) / g.n ** d
        for a in range(d):
            # contract the first remaining spectral axis; the patch axis
            # is appended at the end, so the order cycles back
            c = np.tensordot(c, self.phase[a], axes=([1], [0]))
        patch = c.real
        out = np.empty((fields.shape[0], self.coords.shape[1]))
        for i in range(fields.shape[0]):
            out[i] = map_coordinates(patch[i], self.coords, order=self.order,
                                     mode="nearest")
        return out


# -- time integration helpers ----------------------------------------------

def _interp_series(ts, vals, t):
    return np.interp(t, ts, vals)


def time_integral(ts, vals, ta, tb):
    """Integral over ``[ta, tb]`` of the piecewise-linear interpolant."""
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    inner = (ts > ta) & (ts < tb)
    tt = np.concatenate([[ta], ts[inner], [tb]])
    vv = np.concatenate([[_interp_series(ts, vals, ta)], vals[inner],
                         [_interp_series(ts, vals, tb)]])
    return float(np.sum(0.5 * (vv[1:] + vv[:-1]) * np.diff(tt)))


def time_sup(ts, vals, ta, tb):
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    inner = (ts >= ta) & (ts <= tb)
    cand = [_interp_series(ts, vals, ta), _interp_series(ts, vals, tb)]
    cand.extend(vals[inner])
    return float(max(cand))


def _check_window(grid, traj, pressures, t0, r, reach):
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    if 4 * r >= math.pi:
        raise ValueError(f"radius {r} too large: need 4r < pi to avoid wrap-around")
    if pressures is None:
        raise ValueError("pressure series is required")
    if len(pressures) != len(traj):
        raise ValueError("pressure series and trajectory differ in length")
    if len(traj) < 2:
        raise ValueError("trajectory window needs at least two snapshots")
    ts = np.array([s.t for s in traj])
    if np.any(np.diff(ts) <= 0):
        raise ValueError("snapshot times must increase")
    tol = 1e-9 * max(1.0, abs(t0))
    if ts[0] > t0 - reach + tol or ts[-1] < t0 - tol:
        raise ValueError(
            f"window [{ts[0]:.6g}, {ts[-1]:.6g}] does not cover "
            f"[{t0 - reach:.6g}, {t0:.6g}]")
    return ts


def trajectory_pressures(grid, traj, elastic_sign=-1.0):
    """Zero-mean pressure for every snapshot."""
    return [pressure_solve(grid, s.u, s.q, elastic_sign) for s in traj]


def _grid_fields(grid, state, pressure, hessian):
    """Stack of the linear fields sampled at the nodes.

    Layout: u (d), J (d*d, J[a,b] = d_b u_a), Q (5), dQ (d*5), LapQ (5),
    P (1) and optionally the Hessian of Q (d*d*5).
    """
    d = grid.dim
    uh = grid.fft(state.u)
    qh = grid.fft(state.q)
    parts = [state.u,
             grid.ifft(np.stack([[grid.ik[b] * uh[a] for b in range(d)]
                                 for a in range(d)])).reshape(d * d, *grid.shape),
             state.q,
             grid.ifft(grid.gradient_hat(qh)).reshape(d * 5, *grid.shape),
             grid.ifft(-grid.k2 * qh),
             pressure[None]]
    if hessian:
        hh = np.stack([[grid.ik[a] * grid.ik[b] * qh for b in range(d)]
                       for a in range(d)])
        parts.append(grid.ifft(hh).reshape(d * d * 5, *grid.shape))
    return np.concatenate(parts)


def _unpack(grid, vals, hessian):
    d = grid.dim
    out = {}
    i = 0
    for name, shape in (("u", (d,)), ("J", (d, d)), ("Q", (5,)),
                        ("dQ", (d, 5)), ("LQ", (5,)), ("P", ())):
        size = int(np.prod(shape)) if shape else 1
        block = vals[i:i + size]
        out[name] = block.reshape(shape + vals.shape[1:]) if shape else block[0]
        i += size
    if hessian:
        out["HQ"] = vals[i:i + d * d * 5].reshape((d, d, 5) + vals.shape[1:])
    return out


# -- CKN quantities --------------------------------------------------------

@dataclass
class CknReport:
    center: tuple
    t0: float
    r: float
    E: float
    E_star: float
    E3: float
    P32: float
    F1: float
    M: float
    small: bool

    def as_dict(self):
        return {"center": list(self.center), "t0": self.t0, "r": self.r,
                "E": self.E, "E_star": self.E_star, "E3": self.E3,
                "P32": self.P32, "F1": self.F1, "M": self.M,
                "small": self.small}


def ckn_quantities(grid, traj, pressures, center, t0, r, eps1=0.1, theta=0.5,
                   quad=None, upsample=8, besov=True):
    """Dimensionless quantities on ``Q_r(center, t0)``.

    ``traj`` is a list of states and ``pressures`` the matching list of
    pressure fields.  The trajectory must cover ``[t0 - (4r)^2, t0]``.
    """
    ts = _check_window(grid, traj, pressures, t0, r, (4 * r) ** 2)
    quad = quad or BallQuadrature.build((0.0, r))
    sampler = PatchSampler(grid, center, quad.points, upsample=upsample)
    ta = t0 - r * r
    lo = np.searchsorted(ts, ta, side="right") - 1
    hi = np.searchsorted(ts, t0, side="left")
    idx = range(max(lo, 0), min(hi + 1, len(ts)))
    rows = {k: [] for k in ("u2", "gq2", "du2", "hq2", "u3", "gq3", "p32", "M")}
    sel_t = []
    for i in idx:
        s = traj[i]
        f = _unpack(grid, sampler(_grid_fields(grid, s, pressures[i], True)), True)
        u2 = np.sum(f["u"] ** 2, axis=0)
        gq2 = np.sum(qtensor.norm_sq(np.moveaxis(f["dQ"], 1, 0)), axis=0)
        du2 = np.sum(f["J"] ** 2, axis=(0, 1))
        hq2 = np.sum(qtensor.norm_sq(np.moveaxis(f["HQ"], 2, 0)), axis=(0, 1))
        I = quad.integrate
        rows["u2"].append(I(u2))
        rows["gq2"].append(I(gq2))
        rows["du2"].append(I(du2))
        rows["hq2"].append(I(hq2))
        rows["u3"].append(I(u2 ** 1.5))
        rows["gq3"].append(I(gq2 ** 1.5))
        rows["p32"].append(I(np.abs(f["P"]) ** 1.5))
        rows["M"].append(besov_monitor(grid, s) if besov else 0.0)
        sel_t.append(s.t)
    st = np.array(sel_t)

    def integral(name):
        return time_integral(st, rows[name], ta, t0)

    e = (time_sup(st, rows["u2"], ta, t0) + time_sup(st, rows["gq2"], ta, t0)) / r
    e_star = (integral("du2") + integral("hq2")) / r
    e3 = (integral("u3") + integral("gq3")) / r ** 2
    p32 = integral("p32") / r ** 2
    f1 = e + e_star + p32
    return CknReport(center=tuple(float(c) for c in center), t0=float(t0), r=float(r),
                     E=e, E_star=e_star, E3=e3, P32=p32, F1=f1,
                     M=float(max(rows["M"])), small=bool(f1 <= eps1 ** 2 * theta ** 2))


# -- cutoff and local energy inequality ------------------------------------

def _smootherstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 4 * (35 - 84 * x + 70 * x ** 2 - 20 * x ** 3)


def _smootherstep_d1(x):
    inside = (x > 0) & (x < 1)
    return np.where(inside, 140 * x ** 3 * (1 - x) ** 3, 0.0)


def _smootherstep_d2(x):
    inside = (x > 0) & (x < 1)
    return np.where(inside, 420 * x ** 2 * (1 - x) ** 2 * (1 - 2 * x), 0.0)


#: Largest slope of the transition profile.
PROFILE_MAX_SLOPE = 35.0 / 16.0


@dataclass(frozen=True)
class CutoffSpec:
    """Space-time bump ``phi`` with ``phi = 1`` on ``Q_r`` and support in
    ``Q_2r``.

    Radially, ``phi`` drops from 1 to 0 across ``r <= |x - x0| <= 2r`` along
    a C^3 polynomial profile.  In time, it rises from 0 at ``t0 - 4r^2`` to
    1 at ``t0 - r^2``.
    """

    center: tuple
    t0: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("cutoff radius must be positive")

    def spatial(self, pts):
        """``(S, dS, d2S)`` of the radial factor at offsets ``pts`` (3, N):
        values, gradient (3, N) and Hessian (3, 3, N)."""
        r = self.r
        rho = np.sqrt(np.sum(pts ** 2, axis=0))
        x = (rho - r) / r
        s = 1.0 - _smootherstep(x)
        s1 = -_smootherstep_d1(x) / r
        s2 = -_smootherstep_d2(x) / r ** 2
        safe = np.where(rho > 0, rho, 1.0)
        e = pts / safe
        grad = s1 * e
        eye = np.eye(3)[:, :, None]
        ee = e[:, None] * e[None, :]
        hess = s2 * ee + (s1 / safe) * (eye - ee)
        return s, grad, hess

    def temporal(self, t):
        r2 = self.r ** 2
        x = (t - (self.t0 - 4 * r2)) / (3 * r2)
        return float(_smootherstep(x)), float(_smootherstep_d1(x) / (3 * r2))

    def sampled_bounds(self, n=4001):
        """Sampled ``max|grad phi|``, ``max|Hess phi|`` and ``max|phi_t|``."""
        rho = np.linspace(0, 2.5 * self.r, n)
        pts = np.stack([rho, np.zeros_like(rho), np.zeros_like(rho)])
        _, g, h = self.spatial(pts)
        ts = np.linspace(self.t0 - 5 * self.r ** 2, self.t0, n)
        dt = max(abs(self.temporal(t)[1]) for t in ts)
        return {"grad": float(np.max(np.linalg.norm(g, axis=0))),
                "hess": float(np.max(np.linalg.norm(h, axis=(0, 1)))),
                "dt": dt}


@dataclass
class LocalEnergyResult:
    residual: float
    scale: float
    terms: dict = field(default_factory=dict)

    @property
    def relative(self):
        return self.residual / self.scale if self.scale > 0 else 0.0


def local_energy_residual(grid, traj, pressures, cutoff, model, quad_sizes=(12, 12, 24),
                          upsample=8):
    """Signed ``LHS - RHS`` of the local energy balance tested with
    ``phi = cutoff**2``.

    For smooth solutions the balance is an identity, so the residual
    measures discretization error; suitable weak solutions require it to
    be ``<= 0``.  Dissipation of ``Q`` is written with ``|Lap Q|^2``, which
    brings in the ``(gradQ (x) gradQ - |gradQ|^2 I) : Hess(phi)`` term.
    """
    r = cutoff.r
    t0 = cutoff.t0
    ts = _check_window(grid, traj, pressures, t0, r, 4 * r * r)
    if not np.all(np.isfinite(cutoff.center)):
        raise ValueError("unsupported cutoff centre")
    d = grid.dim
    p = model.potential
    nu, gam = model.viscosity, model.relaxation
    quad = BallQuadrature.build((0.0, r, 2 * r), *quad_sizes)
    sampler = PatchSampler(grid, cutoff.center, quad.points, upsample=upsample)
    s_val, s_grad, s_hess = cutoff.spatial(quad.points)
    ta = t0 - 4 * r * r
    names = ("final", "diss", "heat", "flux", "elastic", "hess", "comm", "rot", "bulk")
    series = {k: [] for k in names}
    sel_t = []
    for i, s in enumerate(traj):
        if s.t < ta - 1e-12 and (i + 1 < len(traj) and traj[i + 1].t <= ta):
            continue
        if s.t > t0 + 1e-12 and (i > 0 and traj[i - 1].t >= t0):
            continue
        tf, tf_t = cutoff.temporal(s.t)
        phi = s_val * tf
        gphi = s_grad * tf
        hphi = s_hess * tf
        # phi_test = phi^2 and its derivatives
        w0 = phi * phi
        w1 = 2 * phi * gphi
        w2 = 2 * (gphi[:, None] * gphi[None, :]) + 2 * phi * hphi
        wt = 2 * phi * s_val * tf_t
        wlap = np.trace(w2)

        f = _unpack(grid, sampler(_grid_fields(grid, s, pressures[i], False)), False)
        u, J, q, dq, lq, pr = f["u"], f["J"], f["Q"], f["dQ"], f["LQ"], f["P"]
        u2 = np.sum(u ** 2, axis=0)
        gq2 = np.sum(qtensor.norm_sq(np.moveaxis(dq, 1, 0)), axis=0)
        du2 = np.sum(J ** 2, axis=(0, 1))
        lq2 = qtensor.norm_sq(lq)
        w1d = w1[:d]
        u_dot = np.sum(u * w1d, axis=0)
        m = np.empty((3, 3) + u2.shape)
        m[:] = 0.0
        for a in range(d):
            for b in range(d):
                m[a, b] = qtensor.tensor_dot(dq[a], dq[b])
        qm = qtensor.to_matrix(q)
        comm = qtensor.commutator(qm, qtensor.to_matrix(lq))
        wmat = np.zeros((3, 3) + u2.shape)
        wmat[:d, :d] = 0.5 * (J - np.swapaxes(J, 0, 1))
        wq = qtensor.project_traceless(qtensor.commutator(wmat, qm))
        rot = sum(w1[g] * qtensor.tensor_dot(wq, dq[g]) for g in range(d))
        qdq_all = 0.0
        for g in range(d):
            dqm = qtensor.to_matrix(dq[g])
            qdq = qtensor.tensor_dot(q, dq[g])
            sym = qtensor.project_traceless(qtensor.matmul(qm, dqm) + qtensor.matmul(dqm, qm))
            dl = (p.a * dq[g] - p.b * sym
                  + p.c * (2 * qdq * q + qtensor.norm_sq(q) * dq[g]))
            qdq_all = qdq_all + qtensor.tensor_dot(dl, dq[g])
        hess_term = np.einsum("ab...,ab...->...", m, w2) - gq2 * wlap

        I = quad.integrate
        series["final"].append(I((u2 + gq2) * w0))
        series["diss"].append(2 * I((nu * du2 + gam * lq2) * w0))
        series["heat"].append(I((u2 + gq2) * wt + (nu * u2 + gam * gq2) * wlap))
        series["flux"].append(I((u2 + gq2 + 2 * pr) * u_dot))
        series["elastic"].append(2 * I(np.einsum("a...,ab...,b...->...", u, m[:d, :d], w1d)))
        series["hess"].append(2 * gam * I(hess_term))
        series["comm"].append(-2 * I(np.einsum("a...,ab...,b...->...", u, comm[:d, :d], w1d)))
        series["rot"].append(-2 * I(rot))
        series["bulk"].append(-2 * gam * I(qdq_all * w0))
        sel_t.append(s.t)
    st = np.array(sel_t)
    terms = {"final": float(np.interp(t0, st, series["final"]))}
    for k in names[1:]:
        terms[k] = time_integral(st, series[k], ta, t0)
    lhs = terms["final"] + terms["diss"]
    rhs = sum(terms[k] for k in names[2:])
    scale = sum(abs(v) for v in terms.values())
    return LocalEnergyResult(residual=lhs - rhs, scale=scale, terms=terms)


# -- iteration criterion ---------------------------------------------------

@dataclass
class CriterionVerdict:
    k: int | None
    profile: list
    nonincreasing_after_first: bool
    threshold: float

    @property
    def small(self):
        return self.k is not None

    def as_dict(self):
        return {"k": self.k, "profile": list(self.profile),
                "nonincreasing_after_first": self.nonincreasing_after_first,
                "threshold": self.threshold}


def criterion_iteration(reports, eps1=0.1, theta=0.5):
    """First ``k`` with ``F1(theta^k rho) <= eps1^2 theta^2`` and the
    monotonicity of ``F1`` along the radii.

    ``reports`` holds :class:`CknReport` objects or plain ``F1`` values in
    order of decreasing radius.
    """
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    f1 = [float(rep.F1) if hasattr(rep, "F1") else float(rep) for rep in reports]
    if len(f1) < 2:
        raise ValueError("criterion iteration needs at least two radii")
    thr = eps1 ** 2 * theta ** 2
    k = next((i for i, v in enumerate(f1) if v <= thr), None)
    tail = f1[1:]
    mono = all(b <= a * (1 + 1e-12) for a, b in zip(tail[:-1], tail[1:]))
    return CriterionVerdict(k=k, profile=f1, nonincreasing_after_first=mono, threshold=thr)
