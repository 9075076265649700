import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twistcal.errors import DomainError, InsufficientData, ShapeMismatch
from twistcal.geometry import KahlerPotential, TorusGrid
from twistcal.norms import (
    c4_norm,
    c4_surrogate,
    fit_decay_rate,
    l2_norm_measure,
    parabolic_holder_norm,
    scaling_check,
    weighted_norm,
)
from twistcal.spacetime import SpaceTimeField

from conftest import cos_x, random_field, random_potential


def slab(seed, nt=6, n=16, T=0.1):
    g = TorusGrid(n)
    rng = np.random.default_rng(seed)
    base = [random_field(g, int(rng.integers(1 << 30)), max_mode=2) for _ in range(2)]
    ts = np.linspace(0, T, nt)
    vals = np.stack([np.cos(3 * t) * base[0] + np.sin(5 * t) * base[1] for t in ts])
    return SpaceTimeField(g, ts, vals)


def test_constant_field():
    g = TorusGrid(16)
    u = SpaceTimeField(g, np.linspace(0, 1, 4), np.full((4, 16, 16), -2.5))
    rep = parabolic_holder_norm(u)
    assert rep.sup_terms["u"] == 2.5
    assert rep.space_seminorm == 0.0 and rep.time_seminorm == 0.0
    # k = 4 goes through a finite-difference u_t, exact only up to rounding
    rep4 = parabolic_holder_norm(u, k=4)
    assert rep4.space_seminorm == 0.0 and rep4.time_seminorm < 1e-12


def test_static_field_has_no_time_seminorm():
    g = TorusGrid(16)
    u = SpaceTimeField.from_function(g, np.linspace(0, 1, 5), lambda X, Y, t: np.cos(2 * np.pi * X))
    rep = parabolic_holder_norm(u)
    assert rep.time_seminorm == 0.0 and rep.space_seminorm > 0


def test_unsupported_arguments():
    u = slab(0)
    with pytest.raises(DomainError):
        parabolic_holder_norm(u, k=2)
    with pytest.raises(DomainError):
        parabolic_holder_norm(u, gamma=1.0)
    with pytest.raises(DomainError):
        weighted_norm(u, -1.0)
    long = SpaceTimeField(u.grid, u.times * 1e4, u.values)
    with pytest.raises(DomainError):
        weighted_norm(long, 1.0)


@pytest.mark.parametrize("k", [0, 4])
def test_pair_budget_monotone_and_deterministic(k):
    u = slab(1)
    prev = None
    for budget in (0, 100, 1000, 3000):
        rep = parabolic_holder_norm(u, k, 0.5, budget, seed=7)
        again = parabolic_holder_norm(u, k, 0.5, budget, seed=7)
        assert rep.to_dict() == again.to_dict()
        if prev is not None:
            assert rep.space_seminorm >= prev.space_seminorm
            assert rep.time_seminorm >= prev.time_seminorm
        prev = rep


@given(seed=st.integers(0, 10_000), lam=st.floats(-10, 10))
def test_homogeneity(seed, lam):
    u = slab(seed)
    for k in (0, 4):
        a = parabolic_holder_norm(u * lam, k, 0.5, 256, 1).total
        b = abs(lam) * parabolic_holder_norm(u, k, 0.5, 256, 1).total
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


@given(seed=st.integers(0, 10_000))
def test_triangle(seed):
    u, v = slab(seed), slab(seed + 1)
    for k in (0, 4):
        n = lambda f: parabolic_holder_norm(f, k, 0.5, 256, 3).total
        assert n(u + v) <= (n(u) + n(v)) * (1 + 1e-12)


def test_weighted_reduces_at_zero_eta():
    u = slab(2)
    assert weighted_norm(u, 0.0, 4).to_dict() == parabolic_holder_norm(u, 4).to_dict()


def test_weighted_sup_cancels_decay():
    g = TorusGrid(16)
    eta = 7.0
    u = SpaceTimeField.from_function(g, np.linspace(0, 1, 11), lambda X, Y, t: np.exp(-eta * t) * np.cos(2 * np.pi * X))
    assert weighted_norm(u, eta).sup_terms["u"] == pytest.approx(1.0, abs=1e-14)


def test_weighted_norm_grows_with_T_for_slow_decay():
    g = TorusGrid(16)
    norms = []
    for T in (0.5, 1.0, 2.0):
        u = SpaceTimeField.from_function(g, np.linspace(0, T, 11), lambda X, Y, t: np.exp(-t) * np.cos(2 * np.pi * X))
        norms.append(weighted_norm(u, 3.0).sup_terms["u"])
    assert norms[0] < norms[1] < norms[2]


@pytest.mark.parametrize("s", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("k", [0, 4])
def test_scaling_sandwich(s, k):
    for seed in range(3):
        lhs, mid, rhs, ok = scaling_check(slab(seed), s, 0.5, k)
        assert ok and lhs <= mid <= rhs * (1 + 1e-12)


def test_scaling_trivial_and_linear_example():
    u = slab(4)
    lhs, mid, rhs, ok = scaling_check(u, 1.0)
    assert lhs == mid == rhs and ok
    g = TorusGrid(16)
    v = SpaceTimeField.from_function(g, np.linspace(0, 1, 9), lambda X, Y, t: t * np.cos(2 * np.pi * X))
    lhs, mid, rhs, ok = scaling_check(v, 0.5, 0.5, 0)
    assert ok and mid / lhs <= 2 ** (0.5 / 4) * (1 + 1e-12)
    with pytest.raises(DomainError):
        scaling_check(v, 0.0)


def test_fit_exact_exponential():
    t = np.linspace(0, 2, 50)
    fit = fit_decay_rate((t, 0.4 * np.exp(-3 * t)))
    assert fit.eta == pytest.approx(3.0, abs=1e-6) and fit.r_squared > 0.999999 and fit.decaying


@given(seed=st.integers(0, 10_000), eta=st.floats(0.5, 50))
def test_fit_noisy_recovery(seed, eta):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 5 / eta, 200)
    y = np.exp(-eta * t) * (1 + 0.01 * rng.uniform(-1, 1, t.size))
    assert fit_decay_rate((t, y)).eta == pytest.approx(eta, rel=0.01)


def test_fit_ignores_roundoff_plateau():
    t = np.linspace(0, 1, 100)
    y = np.maximum(np.exp(-40 * t), 1e-19)
    assert fit_decay_rate((t, y)).eta == pytest.approx(40, rel=1e-6)


def test_fit_reports_growth_and_needs_samples():
    t = np.linspace(0, 1, 30)
    fit = fit_decay_rate((t, np.exp(t)), window=(0, 1))
    assert fit.eta < 0 and not fit.decaying
    with pytest.raises(InsufficientData):
        fit_decay_rate((t[:5], np.exp(-t[:5])))


def test_l2_measure_examples(grid32):
    assert l2_norm_measure(cos_x(grid32), KahlerPotential.zero(grid32)) == pytest.approx(np.sqrt(0.5), abs=1e-14)
    assert l2_norm_measure(np.zeros(grid32.shape), KahlerPotential.zero(grid32)) == 0.0
    phi = random_potential(grid32, 4e-3, 3)
    assert phi.density.min() >= 0.5
    u = random_field(grid32, 5)
    flat = np.sqrt(grid32.integrate(u * u))
    assert l2_norm_measure(u, phi) >= flat / np.sqrt(2)


def test_l2_measure_shape_mismatch(grid32):
    with pytest.raises(ShapeMismatch):
        l2_norm_measure(np.zeros((8, 8)), KahlerPotential.zero(grid32))


def test_c4_norms(grid32):
    u = cos_x(grid32)
    # sum over |p| <= 4 of sup|D^p cos(2 pi x)| = sum_{m=0}^4 (2 pi)^m
    assert c4_norm(grid32, u) == pytest.approx(sum((2 * np.pi) ** m for m in range(5)), rel=1e-12)
    f = SpaceTimeField.from_function(grid32, np.linspace(0, 1, 5), lambda X, Y, t: t * np.cos(2 * np.pi * X))
    assert c4_surrogate(f) == pytest.approx((2 * np.pi) ** 4, rel=1e-12)
