import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtflow import diagnostics as dg, dynamics as dyn, qtensor as qt
from qtflow.grid import Grid
from qtflow.qtensor import PotentialParams, derive_constants
from qtflow.timestepper import State

P = derive_constants(1.0, 1.0, 1.0)
seeds = st.integers(0, 2 ** 32 - 1)


@pytest.fixture(scope="module")
def g():
    return Grid(2, 32)


def band_state(grid, seed, band=3, qamp=0.3, uamp=1.0):
    rng = np.random.default_rng(seed)
    u = grid.leray_project(grid.band_limit(rng.standard_normal((grid.dim,) + grid.shape), band))
    u = uamp * (u - grid.mean(u).reshape((grid.dim,) + (1,) * grid.dim))
    q = qamp * grid.band_limit(rng.standard_normal((5,) + grid.shape), band)
    return u, q


def zeros(grid):
    return np.zeros((grid.dim,) + grid.shape), np.zeros((5,) + grid.shape)


def test_vorticity_examples(g):
    u = g.gradient(np.cos(g.x[0]))
    assert np.max(np.abs(dyn.vorticity_tensor(g, u))) < 1e-13
    u = np.stack([np.sin(g.x[1]), np.zeros(g.shape)])
    w = dyn.vorticity_tensor(g, u)
    assert np.allclose(w[0, 1], 0.5 * np.cos(g.x[1]), atol=1e-13)
    assert np.allclose(w[1, 0], -0.5 * np.cos(g.x[1]), atol=1e-13)
    w[0, 1] = w[1, 0] = 0
    assert np.max(np.abs(w)) < 1e-13


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_vorticity_antisymmetric(seed):
    g3 = Grid(3, 16)
    u = np.random.default_rng(seed).standard_normal((3,) + g3.shape)
    w = dyn.vorticity_tensor(g3, u)
    assert np.max(np.abs(w + np.swapaxes(w, 0, 1))) == 0


def test_q_rhs_examples(g):
    m = dyn.Model(P)
    u, q = zeros(g)
    assert np.all(dyn.q_rhs(g, u, q, m) == 0)
    qbar = np.multiply.outer(qt.UNIAXIAL, np.ones(g.shape))
    p = PotentialParams(0.8, 0.6, 1.2)
    expect = -(0.8 - 0.6 / math.sqrt(6) + 1.2) * qbar
    assert np.allclose(dyn.q_rhs(g, u, qbar, dyn.Model(p)), expect, atol=1e-13)
    plin = PotentialParams(0.7, 0.0, 0.0)
    qs = np.multiply.outer(qt.UNIAXIAL, np.sin(g.x[0]))
    assert np.allclose(dyn.q_rhs(g, u, qs, dyn.Model(plin)), -(1.7) * qs, atol=1e-13)


def test_u_rhs_examples(g):
    m = dyn.Model(P)
    u, q = zeros(g)
    assert np.all(dyn.u_rhs(g, u, q, m) == 0)
    u1 = np.stack([np.zeros(g.shape), np.sin(g.x[0])])
    assert np.allclose(dyn.u_rhs(g, u1, q, m), -u1, atol=1e-13)
    qbar = np.multiply.outer(qt.UNIAXIAL, np.ones(g.shape))
    assert np.max(np.abs(dyn.u_rhs(g, u, qbar, m))) < 1e-13


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_rhs_divergence_free(seed):
    g = Grid(2, 32)
    u, q = band_state(g, seed, band=6)
    du = dyn.u_rhs(g, u, q, dyn.Model(P))
    assert np.max(np.abs(g.divergence(du))) <= 1e-11
    assert np.max(np.abs(g.mean(du))) <= 1e-12


def test_pressure_examples(g):
    u, q = zeros(g)
    assert np.all(dyn.pressure_solve(g, u, q) == 0)
    # manufactured: -Lap P = cos x1 through the inverse Laplacian
    ph = g.inverse_laplacian_hat(-g.fft(np.cos(g.x[0])))
    assert np.allclose(g.ifft(ph), np.cos(g.x[0]), atol=1e-13)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_pressure_poisson_residual(seed):
    g = Grid(2, 32)
    u, q = band_state(g, seed)
    pr = dyn.pressure_solve(g, u, q)
    dq = g.gradient(q)
    s = dyn.elastic_stress(g, dq) + np.einsum("a...,b...->ab...", u, u)
    res = g.laplacian(pr) + dyn.double_divergence(g, s)
    assert g.l2_norm(res) <= 1e-10
    assert abs(g.mean(pr)) < 1e-14


def test_pressure_3d_zero_mean():
    g3 = Grid(3, 16)
    u, q = band_state(g3, 1)
    pr = dyn.pressure_solve(g3, u, q)
    assert abs(g3.mean(pr)) < 1e-14


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_rotational_stress_neutral(seed):
    g = Grid(2, 32)
    u, q = band_state(g, seed)
    qm = qt.to_matrix(q)
    lq = g.laplacian(q)
    a = qt.commutator(qm, qt.to_matrix(lq))[:2, :2]
    a_div = g.divergence(a, axis=1)
    w = dyn.vorticity_tensor(g, u)
    rot = qt.project_traceless(qt.commutator(w, qm))
    t1 = g.inner(a_div, u)
    t2 = g.inner(rot, -lq)
    scale = abs(t1) + abs(t2)
    assert abs(t1 + t2) <= 1e-9 * scale


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_transport_neutral(seed):
    g = Grid(2, 32)
    u, q = band_state(g, seed)
    dq = g.gradient(q)
    adv = sum(u[k] * dq[k] for k in range(2))
    assert abs(g.inner(adv, q)) <= 1e-9 * g.l2_norm(adv) * g.l2_norm(q)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_commutator_double_divergence_vanishes(seed):
    g = Grid(3, 16)
    u, q = band_state(g, seed)
    h = dyn.molecular_field(g, q, P)
    c = qt.commutator(qt.to_matrix(q), qt.to_matrix(h))
    dd = dyn.double_divergence(g, c)
    assert g.l2_norm(dd) <= 1e-9 * g.l2_norm(q) * g.l2_norm(h)


@settings(max_examples=10, deadline=None)
@given(seeds, st.sampled_from([2, 3]))
def test_energy_law_band_limited(seed, dim):
    g = Grid(dim, 32 if dim == 2 else 16)
    u, q = band_state(g, seed, band=3 if dim == 2 else 2)
    s = State(0.0, u, q)
    m = dyn.Model(P)
    d = dg.dissipation(g, s, P)
    assert abs(dg.balance_residual(g, s, m)) <= 1e-6 * d


def test_printed_sign_breaks_energy_law(g):
    u, q = band_state(g, 3)
    s = State(0.0, u, q)
    d = dg.dissipation(g, s, P)
    bad = dg.balance_residual(g, s, dyn.Model(P, elastic_sign=+1.0))
    assert abs(bad) > 1e-3 * d


def test_rhs_traceless_storage(g):
    u, q = band_state(g, 4)
    r = dyn.rhs(g, u, q, dyn.Model(P), with_pressure=True)
    m = qt.to_matrix(r.dq)
    assert np.array_equal(m, np.swapaxes(m, 0, 1))
    assert np.max(np.abs(np.trace(m))) < 1e-15
    assert r.pressure.shape == g.shape
