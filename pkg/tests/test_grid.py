import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtflow.grid import Grid

seeds = st.integers(0, 2 ** 32 - 1)


@pytest.fixture(scope="module")
def g2():
    return Grid(2, 32)


def test_constructor_validation():
    for dim, n in ((1, 32), (4, 16), (2, 6), (2, 31)):
        with pytest.raises(ValueError):
            Grid(dim, n)


def test_shape_mismatch_rejected(g2):
    with pytest.raises(ValueError):
        g2.gradient(np.zeros((16, 16)))


def test_gradient_examples(g2):
    assert np.max(np.abs(g2.gradient(np.full(g2.shape, 3.0)))) < 1e-14
    d = g2.gradient(np.sin(g2.x[0]))
    assert np.max(np.abs(d[0] - np.cos(g2.x[0]))) <= 1e-12
    assert np.max(np.abs(d[1])) <= 1e-12
    f = np.sin(g2.x[0]) * np.cos(g2.x[1])
    assert np.max(np.abs(g2.laplacian(f) + 2 * f)) <= 1e-12


def test_jacobian_convention(g2):
    u = np.stack([np.sin(g2.x[1]), np.zeros(g2.shape)])
    j = g2.jacobian(u)
    assert np.allclose(j[0, 1], np.cos(g2.x[1]), atol=1e-12)
    assert np.allclose(j[1, 0], 0, atol=1e-12)


def test_dealias_examples():
    g = Grid(2, 24)
    rng = np.random.default_rng(0)
    f = g.band_limit(rng.standard_normal(g.shape), 8)
    assert np.allclose(g.ifft(g.dealias(g.fft(f))), f, atol=1e-13)
    nyq = np.cos(12 * g.x[0])
    assert np.max(np.abs(g.ifft(g.dealias(g.fft(nyq))))) < 1e-14


def test_dealiased_product_matches_convolution():
    # modes k = n/4 multiply into 2k = n/2; truncation keeps only |k| <= n/3
    n = 16
    g = Grid(2, n)
    a = np.cos(4 * g.x[0]) + np.sin(3 * g.x[1])
    b = np.cos(4 * g.x[0] + g.x[1])
    prod_h = g.dealias(g.fft(a * b))
    # exact product via a fine grid, then the same mode truncation
    gf = Grid(2, 4 * n)
    af = np.cos(4 * gf.x[0]) + np.sin(3 * gf.x[1])
    bf = np.cos(4 * gf.x[0] + gf.x[1])
    ph = np.fft.fft2(af * bf) / (4 * n) ** 2
    kf = np.fft.fftfreq(4 * n, 1 / (4 * n))
    keep = (np.abs(kf)[:, None] <= n / 3) & (np.abs(kf)[None, :] <= n / 3)
    exact = np.real(np.fft.ifft2(ph * keep)) * (4 * n) ** 2
    assert np.max(np.abs(g.ifft(prod_h) - exact[::4, ::4])) < 1e-13


def test_leray_examples(g2):
    phi_grad = g2.gradient(np.cos(g2.x[0]))
    assert np.max(np.abs(g2.leray_project(phi_grad))) < 1e-13
    v = np.stack([np.zeros(g2.shape), np.sin(g2.x[0])])
    assert np.max(np.abs(g2.leray_project(v) - v)) <= 1e-12
    v = np.stack([np.sin(g2.x[1]) + np.cos(g2.x[0]), np.zeros(g2.shape)])
    ref = np.stack([np.sin(g2.x[1]), np.zeros(g2.shape)])
    assert np.max(np.abs(g2.leray_project(v) - ref)) <= 1e-12
    c = np.stack([np.full(g2.shape, 2.0), np.full(g2.shape, -1.0)])
    assert np.allclose(g2.leray_project(c), c)


@settings(max_examples=25, deadline=None)
@given(seeds, st.sampled_from([2, 3]))
def test_leray_divergence_free(seed, dim):
    g = Grid(dim, 16)
    v = np.random.default_rng(seed).standard_normal((dim,) + g.shape)
    assert np.max(np.abs(g.divergence(g.leray_project(v)))) <= 1e-11


def test_heat_examples(g2):
    f = np.cos(g2.x[1])
    assert np.array_equal(g2.heat_semigroup(f, 0.0), f)
    assert np.allclose(g2.heat_semigroup(f, 1.0), math.exp(-1) * f, atol=1e-14)
    with pytest.raises(ValueError):
        g2.heat_semigroup(f, -0.1)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0, 2), st.floats(0, 2))
def test_heat_semigroup_law_and_contraction(seed, s1, s2):
    g = Grid(2, 16)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    both = g.heat_semigroup(g.heat_semigroup(f, s1), s2)
    assert np.allclose(both, g.heat_semigroup(f, s1 + s2), atol=1e-12)
    assert g.l2_norm(g.heat_semigroup(f, s1)) <= g.l2_norm(f) * (1 + 1e-13)


def test_norm_examples(g2):
    z = np.zeros(g2.shape)
    for q in (1, 2, 3.5, math.inf):
        assert g2.lq_norm(z, q) == 0
    one = np.ones(g2.shape)
    for q in (1, 2, 4):
        assert math.isclose(g2.lq_norm(one, q), (4 * math.pi ** 2) ** (1 / q))
    assert g2.lq_norm(one, math.inf) == 1
    assert math.isclose(g2.l2_norm(np.sin(g2.x[0])), math.sqrt(2) * math.pi)
    with pytest.raises(ValueError):
        g2.lq_norm(one, 0.5)
    s = np.sin(g2.x[0])
    assert math.isclose(g2.h1_norm(s), math.sqrt(2 * math.pi ** 2 * 2))


def test_tensor_magnitude_is_frobenius(g2):
    q = np.zeros((5,) + g2.shape)
    q[0] = 1.0
    assert np.allclose(g2.magnitude(q), math.sqrt(2))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_round_trip_and_parseval(seed):
    g = Grid(3, 16)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(g.shape)
    assert np.max(np.abs(g.ifft(g.fft(f)) - f)) <= 1e-13 * np.max(np.abs(f))
    fb = g.band_limit(f, 5)
    assert math.isclose(g.l2_norm(fb) ** 2, g.spectral_l2_sq(g.fft(fb)), rel_tol=1e-10)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_gradient_divergence_adjoint(seed):
    g = Grid(2, 32)
    rng = np.random.default_rng(seed)
    f = g.band_limit(rng.standard_normal(g.shape), 10)
    v = g.band_limit(rng.standard_normal((2,) + g.shape), 10)
    lhs = g.inner(g.gradient(f), v)
    rhs = -g.inner(f, g.divergence(v))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
