import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twistcal.errors import DegenerateInput, DomainError, ResidualTooLarge
from twistcal.flow import flow_operator
from twistcal.geometry import KahlerPotential, TorusGrid, integrate_measure
from twistcal.linearization import (
    apply_DLs,
    apply_projected_DLs,
    frechet_errors,
    invert_DLs,
    lipschitz_probe,
    projection_constant,
    rescale_time,
    spatial_DLs,
    twist_coefficient,
)
from twistcal.linearization import linear_residual
from twistcal.spacetime import BackgroundPath, SpaceTimeField

from conftest import cos_x, random_field, random_potential

PI2, PI4 = np.pi**2, np.pi**4


@pytest.mark.parametrize("s", [0.0, 0.3, 1.0])
def test_flat_oracle(grid32, s):
    u = cos_x(grid32)
    out = apply_DLs(KahlerPotential.zero(grid32), u, 0.0, s)
    assert np.abs(out - (s * PI4 + (1 - s) * PI2) * u).max() < 1e-10 * PI4


@given(kx=st.integers(-5, 5), ky=st.integers(-5, 5), s=st.floats(0, 1))
def test_flat_diagonal_property(kx, ky, s):
    g = TorusGrid(32)
    X, Y = g.coords()
    u = np.cos(2 * np.pi * (kx * X + ky * Y))
    k2 = kx * kx + ky * ky
    eig = s * PI4 * k2**2 + (1 - s) * PI2 * k2
    out = spatial_DLs(KahlerPotential.zero(g), u, s)
    assert np.abs(out - eig * u).max() <= 1e-10 * max(1.0, eig)


@given(seed=st.integers(0, 10_000), c=st.floats(-5, 5), s=st.floats(0, 1))
def test_constants_in_kernel(seed, c, s):
    g = TorusGrid(16)
    phi = random_potential(g, 3e-3, seed)
    assert np.abs(apply_DLs(phi, np.full(g.shape, c), 0.0, s)).max() < 1e-11 * max(1.0, abs(c))


def test_twist_coefficient_flat_and_formula(grid32):
    assert np.allclose(twist_coefficient(KahlerPotential.zero(grid32), 0.3), 0.7)
    phi = random_potential(grid32, 3e-3, 1)
    w = phi.density
    s = 0.4
    assert np.allclose(twist_coefficient(phi, s), ((1 - s) - s * phi.ricci) / w**2, rtol=0, atol=1e-14)


@pytest.mark.parametrize("s", [0.0, 0.5, 1.0])
def test_frechet_slope(grid32, s):
    phi = random_potential(grid32, 5e-3, 3)
    v = random_field(grid32, 4)
    eps = np.array([1e-3, 3e-4, 1e-4, 3e-5, 1e-5])
    errs = frechet_errors(phi, v, s, eps)
    slope = np.polyfit(np.log(eps), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_rescale_time_examples(grid32):
    ts = np.linspace(0, 1, 5)
    u = SpaceTimeField.from_function(grid32, ts, lambda X, Y, t: t + 0 * X)
    assert rescale_time(u, 1.0) is u
    w = rescale_time(u, 0.5)
    assert np.allclose(w.values[:, 0, 0], 2 * w.times)
    back = rescale_time(w, 0.5, "inverse")
    assert np.array_equal(back.times, u.times) and np.array_equal(back.values, u.values)
    with pytest.raises(DomainError):
        rescale_time(u, 0.0)
    with pytest.raises(DomainError):
        rescale_time(u, 0.5, "sideways")


def test_invert_zero_forcing(grid32):
    path = BackgroundPath.constant(random_potential(grid32, 3e-3, 2), 0.1)
    f = SpaceTimeField(grid32, np.linspace(0, 0.1, 11), np.zeros((11, 32, 32)))
    assert not np.any(invert_DLs(path, f, 0.5).values)


def test_invert_scalar_ode_oracle():
    g = TorusGrid(16)
    ts = np.linspace(0, 0.02, 2001)
    f = SpaceTimeField.from_function(g, ts, lambda X, Y, t: np.cos(2 * np.pi * X))
    path = BackgroundPath.constant(KahlerPotential.zero(g), 0.02)
    u = invert_DLs(path, f, 1.0)
    exact = ((1 - np.exp(-PI4 * ts)) / PI4)[:, None, None] * np.cos(2 * np.pi * g.coords()[0])
    assert np.abs(u.values - exact).max() <= 1e-6
    assert np.all(u.values[0] == 0)


def test_invert_residual_check_needs_fine_slab():
    # the exact solution fails the centered-difference check on a coarse slab
    g = TorusGrid(16)
    ts = np.linspace(0, 0.05, 101)
    f = SpaceTimeField.from_function(g, ts, lambda X, Y, t: np.cos(2 * np.pi * X))
    path = BackgroundPath.constant(KahlerPotential.zero(g), 0.05)
    with pytest.raises(ResidualTooLarge) as info:
        invert_DLs(path, f, 1.0)
    assert info.value.solution is not None


@pytest.mark.parametrize("s", [0.2, 1.0])
def test_apply_invert_round_trip(s):
    g = TorusGrid(16)
    T = 0.05
    ts = np.linspace(0, T, 501)
    phi0 = random_potential(g, 1e-3, 7, max_mode=2)
    phi1 = random_potential(g, 1e-3, 8, max_mode=2)
    path = BackgroundPath(g, [0.0, T], np.stack([phi0.values, phi1.values]))
    shape = random_field(g, 9, max_mode=2)
    u = SpaceTimeField.from_function(g, ts, lambda X, Y, t: np.sin(20 * t) * shape)
    f = u.with_values(np.stack([apply_DLs(path.at(t), u.values[i], 20 * np.cos(20 * t) * shape, s)
                                for i, t in enumerate(ts)]))
    back = invert_DLs(path, f, s, check=False)
    assert np.abs(back.values - u.values).max() <= 1e-4 * max(1.0, u.sup())


def test_invert_rejects_bad_input(grid32):
    path = BackgroundPath.constant(KahlerPotential.zero(grid32), 1.0)
    f = SpaceTimeField(grid32, [0.0, 0.5, 1.0], np.zeros((3, 32, 32)))
    with pytest.raises(DomainError):
        invert_DLs(path, f, 0.0)
    g = SpaceTimeField(grid32, [0.1, 0.5, 1.0], np.ones((3, 32, 32)))
    with pytest.raises(DomainError):
        invert_DLs(path, g, 0.5)


@given(seed=st.integers(0, 10_000), s=st.floats(0.05, 1))
def test_projected_zero_mean(seed, s):
    g = TorusGrid(16)
    phi = random_potential(g, 4e-3, seed)
    path = BackgroundPath.constant(phi, 1.0)
    u = random_field(g, seed + 1)
    out = apply_projected_DLs(path, u, 0.3 * u, s)
    assert abs(integrate_measure(out, phi)) <= 1e-10 * max(1.0, np.abs(out).max())


def test_projected_examples(grid32):
    phi = random_potential(grid32, 4e-3, 3)
    path = BackgroundPath.constant(phi, 1.0)
    assert np.abs(apply_projected_DLs(path, np.full(grid32.shape, 2.0), 0.0, 0.5)).max() < 1e-11
    flat = BackgroundPath.constant(KahlerPotential.zero(grid32), 1.0)
    u = random_field(grid32, 4)
    full = apply_DLs(KahlerPotential.zero(grid32), u, 0.0, 0.5)
    assert np.allclose(apply_projected_DLs(flat, u, 0.0, 0.5), full - full.mean(), rtol=0, atol=1e-12)


def test_projection_constant_static_flat(grid32):
    flat = BackgroundPath.constant(KahlerPotential.zero(grid32), 1.0)
    u = cos_x(grid32)
    # flat background: a = 1 - s and u_zzbar integrates to zero
    assert abs(projection_constant(flat, u, 0.5)) < 1e-14


def test_lipschitz_examples(grid32):
    phi = random_potential(grid32, 3e-3, 5)
    shifted = KahlerPotential(grid32, phi.values + 0.5)
    v = random_field(grid32, 6)
    assert lipschitz_probe(shifted, phi, v, 0.5) == 0.0
    other = random_potential(grid32, 3e-3, 7)
    assert lipschitz_probe(other, phi, np.full(grid32.shape, 1.0), 0.5) == 0.0
    with pytest.raises(DegenerateInput):
        lipschitz_probe(phi, phi, v, 0.5)
    with pytest.raises(DegenerateInput):
        lipschitz_probe(other, phi, np.zeros(grid32.shape), 0.5)


def test_lipschitz_ratios_bounded(grid32):
    ratios = []
    for amp in (1e-3, 1e-2):
        for seed in range(4):
            p1 = random_potential(grid32, amp, 10 + seed, max_mode=2)
            p2 = random_potential(grid32, amp, 20 + seed, max_mode=2)
            v = random_field(grid32, 30 + seed)
            ratios.append(lipschitz_probe(p1, p2, v, 0.5))
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios)) and np.all(ratios >= 0)
    assert ratios.max() <= 10 * np.median(ratios)


@given(seed=st.integers(0, 10_000), s=st.floats(0, 1))
def test_l2_energy_non_increasing(seed, s):
    # d/dt int u^2 w = -2 int u DL_s'(u) w <= 0 for mean-free u on a static small background
    g = TorusGrid(16)
    phi = random_potential(g, 2e-3, seed)
    u = random_field(g, seed + 3)
    u = u - integrate_measure(u, phi) / integrate_measure(1.0, phi)
    assert integrate_measure(u * spatial_DLs(phi, u, s), phi) >= 0


def test_linear_residual_zero_for_zero(grid32):
    path = BackgroundPath.constant(KahlerPotential.zero(grid32), 1.0)
    z = SpaceTimeField(grid32, [0.0, 0.5, 1.0], np.zeros((3, 32, 32)))
    assert linear_residual(path, z, z, 0.5) == 0.0


def test_flow_operator_linear_part_matches(grid32):
    # at phi = 0 the operator's linear part is DL_s
    s = 0.6
    eps = 1e-7
    u = cos_x(grid32, 2)
    lin = apply_DLs(KahlerPotential.zero(grid32), u, 0.0, s)
    fd = flow_operator(KahlerPotential(grid32, eps * u), np.zeros(grid32.shape), s) / eps
    assert np.abs(fd - lin).max() < 1e-5 * np.abs(lin).max()
