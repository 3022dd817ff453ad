"""Quick built-in checks of every module, run by ``qtf selftest``."""
import math

import numpy as np

from . import diagnostics as dg, dynamics, qtensor, regularity as rg, timestepper as ts
from .grid import Grid
from .qtensor import PotentialParams, derive_constants
from .timestepper import State


def _algebra():
    rng = np.random.default_rng(0)
    q = qtensor.random_traceless(rng, 10000, max_norm=3.0)
    m = qtensor.to_matrix(q)
    a = rng.standard_normal((3, 3, 10000))
    w = 0.5 * (a - np.swapaxes(a, 0, 1))
    rot = qtensor.project_traceless(qtensor.commutator(w, m))
    p = derive_constants(1.0, 1.0, 1.0)
    lhs = qtensor.tensor_dot(qtensor.potential_gradient(q, p), q)
    yield "rotation is orthogonal to Q", float(np.max(np.abs(qtensor.tensor_dot(rot, q)))) <= 1e-12
    yield "projected gradient contracts to dF:Q", float(
        np.max(np.abs(lhs - qtensor.potential_contraction(q, p)) / (1 + np.abs(lhs)))) <= 1e-12
    yield "trace bound", bool(np.all(np.abs(qtensor.trace_cubed(q))
                                     <= qtensor.frobenius(q) ** 3 / qtensor.SQRT6 + 1e-12))
    yield "safe-ball constants", math.isclose(p.r, math.sqrt(6) / 2) and p.c1 == 0.5


def _grid():
    g = Grid(2, 32)
    f = np.sin(g.x[0])
    yield "spectral derivative", float(np.max(np.abs(g.gradient(f)[0] - np.cos(g.x[0])))) <= 1e-12
    rng = np.random.default_rng(1)
    v = g.leray_project(rng.standard_normal((2, 32, 32)))
    yield "Leray projection", float(np.max(np.abs(g.divergence(v)))) <= 1e-10
    yield "L2 of constant", math.isclose(g.l2_norm(np.ones(g.shape)), 2 * math.pi)


def _stepping():
    g = Grid(2, 32)
    p = PotentialParams(1.0, 0.0, 0.0)
    q0 = np.multiply.outer(qtensor.UNIAXIAL, np.sin(g.x[0]))
    s0 = State(0.0, np.zeros((2,) + g.shape), q0)
    exact = ts.linear_relaxation_exact(g, q0, 1.0, 1.0)
    for scheme, tol in (("IMEX1", 2e-3), ("IMEX2", 1e-5)):
        res = ts.run(g, s0, ts.SolverConfig(1e-3, 1.0, p, scheme=scheme))
        yield f"linear oracle {scheme}", ts.relative_error(res.state.q, exact) <= tol


def _energy():
    g = Grid(2, 32)
    p = derive_constants(1.0, 1.0, 1.0)
    rng = np.random.default_rng(2)
    u = g.leray_project(g.band_limit(rng.standard_normal((2,) + g.shape), 3))
    u -= g.mean(u)[:, None, None]
    q = 0.3 * g.band_limit(rng.standard_normal((5,) + g.shape), 3)
    s = State(0.0, u, q)
    d = dg.dissipation(g, s, p)
    yield "energy law", abs(dg.balance_residual(g, s, dynamics.Model(p))) <= 1e-6 * d
    u1 = np.stack([np.zeros(g.shape), np.sin(g.x[0])])
    s1 = State(0.0, u1, np.zeros((5,) + g.shape))
    yield "kinetic energy oracle", math.isclose(dg.energy(g, s1, p), math.pi ** 2)
    t = np.linspace(0, 5, 50)
    fit = dg.decay_fit(t, 3 * np.exp(-0.5 * t))
    yield "decay fit", abs(fit.rate - 0.5) < 1e-10 and abs(fit.amplitude - 3) < 1e-10


def _regularity():
    g = Grid(2, 64)
    f = np.stack([np.zeros(g.shape), np.sin(g.x[0])])
    b = rg.besov_proxy(g, f, ratio=2 ** 0.125)
    yield "Besov proxy oracle", abs(b / (math.exp(-0.5) / math.sqrt(2)) - 1) <= 0.01
    g3 = Grid(3, 16)
    U = np.array([0.3, -0.2, 0.5])
    u = U[:, None, None, None] * np.ones((3,) + g3.shape)
    traj = [State(t, u, np.zeros((5,) + g3.shape)) for t in np.linspace(0, 1, 5)]
    rep = rg.ckn_quantities(g3, traj, [np.zeros(g3.shape)] * 5, (1, 1, 1), 1.0, 0.2,
                            besov=False)
    exact = 4 * math.pi / 3 * np.linalg.norm(U) ** 3 * 0.2 ** 3
    yield "constant-field E3", abs(rep.E3 / exact - 1) <= 1e-4
    v = rg.criterion_iteration([1.0, 1.0, 1.0], eps1=0.1)
    yield "criterion threshold logic", v.k is None


SUITES = (_algebra, _grid, _stepping, _energy, _regularity)


def run_selftest(echo=print):
    ok = True
    for suite in SUITES:
        for name, passed in suite():
            echo(f"{'PASS' if passed else 'FAIL'} {name}")
            ok &= bool(passed)
    return ok
