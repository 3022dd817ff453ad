"""Per-snapshot diagnostics, decay fits and continuous-dependence metrics."""
from dataclasses import dataclass, field, asdict
import csv
import io
import json
import math

import numpy as np

from . import dynamics, qtensor

CSV_FIELDS = ("t", "u_l2", "q_l1", "q_l2", "q_l4", "q_linf", "gradq_l2",
              "q_h1", "energy", "dissipation", "margin", "ebal_residual")

DEFAULT_Q_LIST = (1, 2, 4, math.inf)


def energy(grid, state, p):
    """``int 1/2 |u|^2 + 1/2 |gradQ|^2 + F(Q)``."""
    dq = grid.gradient(state.q)
    dens = (0.5 * np.sum(state.u ** 2, axis=0)
            + 0.5 * np.sum(qtensor.norm_sq(np.moveaxis(dq, 1, 0)), axis=0)
            + qtensor.potential_value(state.q, p))
    return grid.integrate(dens)


def energy_spectral(grid, state, p):
    """Same functional with the quadratic terms evaluated by Parseval."""
    uh = grid.fft(state.u)
    kin = sum(grid.spectral_l2_sq(uh[a]) for a in range(grid.dim))
    qh = grid.fft(state.q)
    el = 0.0
    for g in range(grid.dim):
        dqh = grid.ik[g] * qh
        el += sum(grid.spectral_l2_sq(dqh[i]) for i in (0, 3)) \
            + grid.spectral_l2_sq(dqh[0] + dqh[3]) \
            + 2 * sum(grid.spectral_l2_sq(dqh[i]) for i in (1, 2, 4))
    return 0.5 * kin + 0.5 * el + grid.integrate(qtensor.potential_value(state.q, p))


def dissipation(grid, state, p, viscosity=1.0, relaxation=1.0):
    """``int nu |grad u|^2 + Gamma |H|^2`` with ``H = LapQ - L[dF(Q)]``."""
    du = grid.gradient(state.u)
    h = dynamics.molecular_field(grid, state.q, p)
    dens = viscosity * np.sum(du ** 2, axis=(0, 1)) + relaxation * qtensor.norm_sq(h)
    return grid.integrate(dens)


def energy_rate(grid, state, model):
    """dE/dt by the chain rule on the assembled right-hand side."""
    p = model.potential
    r = dynamics.rhs(grid, state.u, state.q, model)
    dfdq = -grid.laplacian(state.q) + qtensor.potential_gradient(state.q, p)
    return grid.inner(state.u, r.du) + grid.inner(dfdq, r.dq)


def balance_residual(grid, state, model):
    """``dE/dt + D`` for the semi-discrete system; zero for an exact
    energy law."""
    d = dissipation(grid, state, model.potential, model.viscosity, model.relaxation)
    return energy_rate(grid, state, model) + d


def discrete_balance_residual(t, e, d):
    """``(E_{n+1}-E_n)/dt + (D_n + D_{n+1})/2`` along a record series."""
    t, e, d = (np.asarray(x, dtype=float) for x in (t, e, d))
    return np.diff(e) / np.diff(t) + 0.5 * (d[1:] + d[:-1])


@dataclass
class DiagnosticsRecord:
    t: float
    u_l2: float
    q_norms: dict
    gradq_l2: float
    q_h1: float
    energy: float
    dissipation: float
    margin: float
    ebal_residual: float

    def row(self):
        qn = self.q_norms
        return {"t": self.t, "u_l2": self.u_l2, "q_l1": qn.get(1, math.nan),
                "q_l2": qn.get(2, math.nan), "q_l4": qn.get(4, math.nan),
                "q_linf": qn.get(math.inf, math.nan), "gradq_l2": self.gradq_l2,
                "q_h1": self.q_h1, "energy": self.energy,
                "dissipation": self.dissipation, "margin": self.margin,
                "ebal_residual": self.ebal_residual}

    def to_json(self):
        d = asdict(self)
        d["q_norms"] = {("inf" if math.isinf(k) else str(k)): v
                        for k, v in self.q_norms.items()}
        return json.dumps(d, sort_keys=True)


class Recorder:
    """Callable building a :class:`DiagnosticsRecord` from a state.

    The max-principle margin is measured against ``q0_linf``, the initial
    sup norm.  ``balance=False`` skips the chain-rule residual, which costs
    one extra right-hand-side evaluation.
    """

    def __init__(self, grid, model, q0_linf, q_list=DEFAULT_Q_LIST, balance=True):
        self.grid = grid
        self.model = model
        self.q0_linf = float(q0_linf)
        self.q_list = tuple(sorted(set(DEFAULT_Q_LIST) | set(q_list)))
        self.balance = balance

    def __call__(self, state):
        g = self.grid
        m = self.model
        p = m.potential
        qn = {q: g.lq_norm(state.q, q) for q in self.q_list}
        gq = g.grad_l2(state.q)
        res = balance_residual(g, state, m) if self.balance else math.nan
        return DiagnosticsRecord(
            t=float(state.t), u_l2=g.l2_norm(state.u), q_norms=qn, gradq_l2=gq,
            q_h1=math.hypot(qn[2], gq), energy=energy(g, state, p),
            dissipation=dissipation(g, state, p, m.viscosity, m.relaxation),
            margin=self.q0_linf - qn[math.inf], ebal_residual=res)


class CsvSink:
    def __init__(self, stream):
        self.writer = csv.DictWriter(stream, fieldnames=CSV_FIELDS)
        self.writer.writeheader()

    def emit(self, rec):
        self.writer.writerow({k: repr(float(v)) for k, v in rec.row().items()})


class JsonLinesSink:
    def __init__(self, stream):
        self.stream = stream

    def emit(self, rec):
        self.stream.write(rec.to_json() + "\n")


def records_to_csv(records):
    buf = io.StringIO()
    sink = CsvSink(buf)
    for r in records:
        sink.emit(r)
    return buf.getvalue()


def series(records, name):
    """Column ``name`` (as in :data:`CSV_FIELDS`) of a record list."""
    return np.array([r.row()[name] for r in records], dtype=float)


def max_principle_margin(records, q0_linf=None):
    """``||Q0||_inf - ||Q(t)||_inf`` along a record stream."""
    linf = series(records, "q_linf")
    ref = linf[0] if q0_linf is None else q0_linf
    return ref - linf


def g_weighted_balance(grid, s_pre, s_post, q, p):
    """Residual of the ``G(z) = z^q`` balance between two close states.

    Returns ``d/dt int |Q|^{2q} + int[2q|Q|^{2(q-1)}|gradQ|^2
    + q(q-1)|Q|^{2(q-2)} |grad|Q|^2|^2] + 2q int |Q|^{2(q-1)} dF(Q):Q``
    with the time derivative taken as a finite difference and the other
    integrals averaged over both states.
    """
    if q < 2:
        raise ValueError("g_weighted_balance needs q >= 2")
    dt = s_post.t - s_pre.t
    if dt <= 0:
        raise ValueError("states must be ordered in time")

    def terms(s):
        z = qtensor.norm_sq(s.q)
        dq = grid.gradient(s.q)
        gq2 = np.sum(qtensor.norm_sq(np.moveaxis(dq, 1, 0)), axis=0)
        dz = np.stack([2 * qtensor.tensor_dot(s.q, dq[g]) for g in range(grid.dim)])
        dz2 = np.sum(dz ** 2, axis=0)
        diss = 2 * q * z ** (q - 1) * gq2 + q * (q - 1) * z ** (q - 2) * dz2
        pot = 2 * q * z ** (q - 1) * qtensor.potential_contraction(s.q, p)
        return grid.integrate(z ** q), grid.integrate(diss + pot)

    g0, r0 = terms(s_pre)
    g1, r1 = terms(s_post)
    return (g1 - g0) / dt + 0.5 * (r0 + r1)


@dataclass
class DecayFit:
    rate: float
    amplitude: float
    residual: float


def decay_fit(t, v, skip=0.2):
    """Least-squares fit ``v ~ amplitude * exp(-rate t)`` on the samples
    after the first ``skip`` fraction of the time span."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.size < 10:
        raise ValueError(f"decay_fit needs at least 10 samples, got {t.size}")
    if np.any(v <= 0):
        raise ValueError("decay_fit needs strictly positive values")
    t_cut = t[0] + skip * (t[-1] - t[0])
    sel = t >= t_cut
    if np.count_nonzero(sel) < 2:
        raise ValueError("fit window holds fewer than 2 samples")
    ts, lv = t[sel], np.log(v[sel])
    slope, intercept = np.polyfit(ts, lv, 1)
    resid = lv - (slope * ts + intercept)
    return DecayFit(rate=float(-slope), amplitude=float(math.exp(intercept)),
                    residual=float(math.sqrt(np.mean(resid ** 2))))


@dataclass
class DependenceReport:
    t: np.ndarray
    e_n: np.ndarray
    a_n: np.ndarray
    bound: np.ndarray
    c_abs: float

    @property
    def sup_ratio(self):
        if self.e_n[0] == 0:
            return 0.0 if np.all(self.e_n == 0) else math.inf
        return float(np.max(self.e_n / self.e_n[0]))

    @property
    def within_bound(self):
        return bool(np.all(self.e_n <= self.bound * (1 + 1e-12)))


def perturbation_energy(grid, sa, sb):
    """``||dQ||^2 + ||Lap dQ||^2 + ||du||^2`` for two states."""
    dq = sb.q - sa.q
    du = sb.u - sa.u
    return (grid.l2_norm(dq) ** 2 + grid.l2_norm(grid.laplacian(dq)) ** 2
            + grid.l2_norm(du) ** 2)


def growth_rate_bound(grid, sa, sb):
    """The sum ``J1 + ... + J5`` built from norms of the base run ``sa``
    and the perturbed run ``sb`` (sup norms are grid maxima)."""
    g = grid
    inf = math.inf
    dq = g.gradient(sa.q)
    du = g.gradient(sa.u)
    u_inf = g.lq_norm(sa.u, inf)
    du_inf = float(np.max(g.magnitude(du)))
    q_inf = g.lq_norm(sa.q, inf)
    dq_inf = float(np.max(g.magnitude(dq)))
    lq_inf = g.lq_norm(g.laplacian(sa.q), inf)
    q2, q4 = g.lq_norm(sa.q, 2), g.lq_norm(sa.q, 4)
    qn2, qn4, qn8 = g.lq_norm(sb.q, 2), g.lq_norm(sb.q, 4), g.lq_norm(sb.q, 8)
    j1 = dq_inf ** 2 + du_inf ** 2
    j2 = u_inf ** 2 + dq_inf ** 2
    j3 = 1.0 + du_inf ** 2 + q_inf ** 2 + lq_inf ** 2
    j4 = qn4 ** 2 + qn2 + q2 + qn8 ** 4
    j5 = q_inf * (qn2 + q2 + q_inf * (qn4 ** 2 + q4 ** 2))
    return j1 + j2 + j3 + j4 + j5


def dependence_metrics(grid, run_a, run_b, c_abs=1.0):
    """Compare two snapshot sequences sampled at the same times."""
    if len(run_a) != len(run_b):
        raise ValueError("runs have different numbers of snapshots")
    for sa, sb in zip(run_a, run_b):
        if abs(sa.t - sb.t) > 1e-12 * max(1.0, abs(sa.t)):
            raise ValueError(f"time stamps differ: {sa.t} vs {sb.t}")
        if sa.q.shape != sb.q.shape or sa.u.shape != sb.u.shape:
            raise ValueError("runs live on different grids")
        if sa.q.shape[1:] != grid.shape:
            raise ValueError("snapshots do not match the grid")
    t = np.array([s.t for s in run_a])
    e = np.array([perturbation_energy(grid, sa, sb) for sa, sb in zip(run_a, run_b)])
    a = np.array([growth_rate_bound(grid, sa, sb) for sa, sb in zip(run_a, run_b)])
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (a[1:] + a[:-1]) * np.diff(t))])
    bound = e[0] * np.exp(c_abs * integral)
    return DependenceReport(t=t, e_n=e, a_n=a, bound=bound, c_abs=c_abs)
