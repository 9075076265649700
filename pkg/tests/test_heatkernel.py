import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twistcal.errors import DomainError
from twistcal.geometry import KahlerPotential, TorusGrid
from twistcal.heatkernel import (
    TAIL_TOL,
    KernelSpec,
    diagonal_table,
    duhamel_solve,
    gradient_decay,
    homogeneous_evolve,
    kernel_eval,
    kernel_gradient,
    on_diagonal_decay,
)
from twistcal.linearization import invert_DLs
from twistcal.spacetime import BackgroundPath, SpaceTimeField

from conftest import cos_x, random_field

MU1 = 16 * np.pi**4


@pytest.fixture(scope="module")
def spec():
    return KernelSpec(TorusGrid(32))


def test_unit_mass(spec):
    g = spec.grid
    X, Y = g.coords()
    pts = np.stack([X, Y], axis=-1).reshape(-1, 2)
    for t in (1e-4, 1e-3, 1e-2):
        vals = kernel_eval(spec, pts, np.array([0.3, 0.7]), t)
        assert np.mean(vals) * g.volume == pytest.approx(1.0, abs=1e-12)


@given(x=st.tuples(st.floats(0, 1), st.floats(0, 1)), y=st.tuples(st.floats(0, 1), st.floats(0, 1)),
       t=st.floats(1e-4, 1e-1))
def test_symmetry_and_translation(x, y, t):
    spec = KernelSpec(TorusGrid(32))
    x, y = np.array(x), np.array(y)
    a = kernel_eval(spec, x, y, t)
    assert a == pytest.approx(kernel_eval(spec, y, x, t), abs=1e-12 * max(1.0, abs(a)))
    shift = np.array([0.123, 0.456])
    assert a == pytest.approx(kernel_eval(spec, x + shift, y + shift, t), abs=1e-10 * max(1.0, abs(a)))


def test_time_domain(spec):
    with pytest.raises(DomainError):
        kernel_eval(spec, [0, 0], [0, 0], 0.0)
    with pytest.raises(DomainError):
        kernel_eval(spec, [0, 0], [0, 0], -1.0)
    tmin = spec.min_time()
    assert spec.tail_bound(tmin) < TAIL_TOL
    with pytest.raises(DomainError):
        kernel_eval(spec, [0, 0], [0, 0], 0.5 * tmin)
    assert spec.required_cutoff(1e-3) <= spec.mode_cutoff


def test_on_diagonal_slope(spec):
    slope, r2 = on_diagonal_decay(spec, np.logspace(-5, -3, 21))
    assert slope == pytest.approx(-0.5, abs=0.05)
    assert r2 > 0.99


def test_gradient_slope(spec):
    slope, _ = gradient_decay(spec, np.logspace(-5, -3, 11))
    assert slope == pytest.approx(-0.75, abs=0.07)


def test_gradient_matches_finite_difference(spec):
    x, y, t = np.array([0.1, 0.2]), np.array([0.4, 0.9]), 1e-3
    g = kernel_gradient(spec, x, y, t)
    h = 1e-6
    fd = [(kernel_eval(spec, x + h * e, y, t) - kernel_eval(spec, x - h * e, y, t)) / (2 * h)
          for e in np.eye(2)]
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_diagonal_table_shape(spec):
    tab = diagonal_table(spec, [1e-4, 1e-3])
    assert tab.shape == (2, 2) and np.all(np.diff(tab[:, 1]) < 0)


def test_evolve_mode_oracle():
    g = TorusGrid(32)
    out = homogeneous_evolve(cos_x(g), 1e-3, g)
    assert out.max() == pytest.approx(np.exp(-MU1 * 1e-3), rel=1e-12)
    assert out.max() == pytest.approx(0.2104, abs=5e-5)


def test_evolve_identity_constants_semigroup():
    g = TorusGrid(32)
    u = random_field(g, 1)
    z = homogeneous_evolve(u, 0.0, g)
    assert np.array_equal(z, u) and z is not u
    c = np.full(g.shape, 2.5)
    assert np.allclose(homogeneous_evolve(c, 0.3, g), c, rtol=0, atol=1e-14)
    two = homogeneous_evolve(homogeneous_evolve(u, 5e-4, g), 5e-4, g)
    assert np.abs(two - homogeneous_evolve(u, 1e-3, g)).max() <= 1e-12
    with pytest.raises(DomainError):
        homogeneous_evolve(u, -1.0, g)


@given(seed=st.integers(0, 10_000), t=st.floats(0, 1e-2))
def test_mass_conservation_and_l2_contraction(seed, t):
    g = TorusGrid(16)
    u = random_field(g, seed) + 0.3
    v = homogeneous_evolve(u, t, g)
    assert abs(v.mean() - u.mean()) <= 1e-12
    v2 = homogeneous_evolve(u, 2 * t, g)
    assert np.linalg.norm(v2) <= np.linalg.norm(v) + 1e-12 and np.linalg.norm(v) <= np.linalg.norm(u) + 1e-12


def test_duhamel_constant_forcing():
    g = TorusGrid(16)
    ts = np.linspace(0, 0.1, 11)
    V = duhamel_solve(SpaceTimeField(g, ts, np.full((11, 16, 16), 3.0)))
    assert np.allclose(V.values, 3.0 * ts[:, None, None], rtol=0, atol=1e-14)
    assert np.all(V.values[0] == 0)


def test_duhamel_scalar_ode():
    g = TorusGrid(16)
    ts = np.linspace(0, 2e-3, 21)
    f = SpaceTimeField.from_function(g, ts, lambda X, Y, t: np.cos(2 * np.pi * X))
    V = duhamel_solve(f)
    exact = ((1 - np.exp(-MU1 * ts)) / MU1)[:, None, None] * np.cos(2 * np.pi * g.coords()[0])
    assert np.abs(V.values - exact).max() <= 1e-10


def test_duhamel_truncation_to_T():
    g = TorusGrid(16)
    ts = np.linspace(0, 1, 11)
    V = duhamel_solve(SpaceTimeField(g, ts, np.ones((11, 16, 16))), T=0.5)
    assert V.times[-1] == pytest.approx(0.5) and V.nt == 6


@given(seed=st.integers(0, 10_000), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_duhamel_linearity(seed, a, b):
    g = TorusGrid(16)
    ts = np.linspace(0, 1e-2, 6)
    rng = np.random.default_rng(seed)
    f = SpaceTimeField(g, ts, rng.standard_normal((6, 16, 16)))
    h = SpaceTimeField(g, ts, rng.standard_normal((6, 16, 16)))
    lhs = duhamel_solve(f * a + h * b).values
    rhs = a * duhamel_solve(f).values + b * duhamel_solve(h).values
    assert np.abs(lhs - rhs).max() <= 1e-13 * max(1.0, np.abs(rhs).max())


def test_duhamel_matches_linear_inverse():
    g = TorusGrid(16)
    ts = np.linspace(0, 0.05, 51)
    f = SpaceTimeField.from_function(g, ts, lambda X, Y, t: np.cos(20 * t) * random_field(g, 3, max_mode=2))
    V = duhamel_solve(f, laplacian="dzdzbar")
    path = BackgroundPath.constant(KahlerPotential.zero(g), 0.05)
    u = invert_DLs(path, f, 1.0, check=False)
    assert np.abs(V.values - u.values).max() <= 1e-8


def test_bad_laplacian():
    with pytest.raises(DomainError):
        KernelSpec(TorusGrid(16), laplacian="weird")
    with pytest.raises(DomainError):
        KernelSpec(TorusGrid(16), mode_cutoff=100)
