"""Biharmonic heat kernel of the flat torus and the Duhamel solution operator.

On the torus of side ``L`` the kernel of ``d/dt + Delta^2`` is

    b(x, y; t) = L^{-2} sum_k exp(-mu_k t) cos(2 pi k.(x - y) / L)

with ``mu_k = 16 pi^4 |k|^4 / L^4`` for the real Laplacian.  The
``"dzdzbar"`` option uses ``Delta = d_z d_zbar`` (a quarter of the real
Laplacian), which is the operator the linearization module inverts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._etd import phi_functions
from .errors import DomainError
from .geometry import TorusGrid
from .spacetime import SpaceTimeField

TAIL_TOL = 1e-14
_SCALES = {"real": 16.0, "dzdzbar": 1.0}


def _mode_scale(laplacian: str, length: float) -> float:
    if laplacian not in _SCALES:
        raise DomainError(f"laplacian must be 'real' or 'dzdzbar', got {laplacian!r}")
    return _SCALES[laplacian] * np.pi**4 / length**4


@dataclass(frozen=True)
class KernelSpec:
    grid: TorusGrid
    mode_cutoff: int | None = None
    laplacian: str = "real"

    def __post_init__(self):
        cutoff = self.grid.n // 2 if self.mode_cutoff is None else self.mode_cutoff
        if int(cutoff) != cutoff or not 0 <= cutoff <= self.grid.n // 2:
            raise DomainError(f"mode_cutoff must be an integer in [0, {self.grid.n // 2}]")
        object.__setattr__(self, "mode_cutoff", int(cutoff))
        _mode_scale(self.laplacian, self.grid.length)

    @property
    def scale(self) -> float:
        return _mode_scale(self.laplacian, self.grid.length)

    def tail_bound(self, t: float, cutoff: int | None = None) -> float:
        """Bound on the dropped modes: ``L^-2 sum_{m > K} 8 m exp(-c m^4 t)`` (ring sizes)."""
        K = self.mode_cutoff if cutoff is None else cutoff
        m = np.arange(K + 1, K + 2000, dtype=float)
        return float(np.sum(8 * m * np.exp(-self.scale * m**4 * t))) / self.grid.volume

    def required_cutoff(self, t: float) -> int:
        """Smallest cutoff whose tail bound is below ``TAIL_TOL`` at time ``t``."""
        K = 0
        while self.tail_bound(t, K) >= TAIL_TOL:
            K += 1
            if K > 100000:
                break
        return K

    def min_time(self) -> float:
        """Smallest ``t`` resolvable with this cutoff (bisection on the tail bound)."""
        lo, hi = 0.0, 1.0
        while self.tail_bound(hi) >= TAIL_TOL:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if self.tail_bound(mid) < TAIL_TOL:
                hi = mid
            else:
                lo = mid
        return hi


def _check_time(spec: KernelSpec, t: float):
    if not t > 0:
        raise DomainError("the kernel is defined for t > 0")
    if spec.tail_bound(t) >= TAIL_TOL:
        raise DomainError(f"t={t:g} is below the resolvable threshold {spec.min_time():.3g} "
                          f"for mode_cutoff={spec.mode_cutoff}")


def _sum_modes(spec: KernelSpec, dx, dy, t: float, ax: int = 0, ay: int = 0) -> np.ndarray:
    """Evaluate ``d_x^ax d_y^ay`` of the kernel at displacements ``(dx, dy)``."""
    _check_time(spec, t)
    K = spec.mode_cutoff
    L = spec.grid.length
    k = np.arange(-K, K + 1, dtype=float)
    coef = np.exp(-spec.scale * (k[:, None] ** 2 + k[None, :] ** 2) ** 2 * t)  # [ky, kx]
    dx, dy = np.broadcast_arrays(np.asarray(dx, dtype=float), np.asarray(dy, dtype=float))
    shape = dx.shape
    wx = 2j * np.pi * k / L
    ex = (wx**ax) * np.exp(np.outer(dx.ravel(), wx))  # (P, 2K+1)
    ey = (wx**ay) * np.exp(np.outer(dy.ravel(), wx))
    # separable in the two axes; contract per point
    vals = np.einsum("pj,ji,pi->p", ey, coef, ex).real / spec.grid.volume
    return vals.reshape(shape)


def kernel_eval(spec: KernelSpec, x, y, t: float) -> float | np.ndarray:
    """``b(x, y; t)``; ``x`` and ``y`` are ``(..., 2)`` point arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    out = _sum_modes(spec, d[..., 0], d[..., 1], t)
    return float(out) if out.ndim == 0 else out


def kernel_gradient(spec: KernelSpec, x, y, t: float) -> np.ndarray:
    """Gradient of ``b(., y; t)`` at ``x``, last axis ``(d_x, d_y)``."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    gx = _sum_modes(spec, d[..., 0], d[..., 1], t, 1, 0)
    gy = _sum_modes(spec, d[..., 0], d[..., 1], t, 0, 1)
    return np.stack([np.reshape(gx, d.shape[:-1]), np.reshape(gy, d.shape[:-1])], axis=-1)


def _grid_for(u0, grid):
    if grid is not None:
        return grid
    return TorusGrid(np.shape(u0)[-1])


def homogeneous_evolve(u0, t: float, grid: TorusGrid | None = None, laplacian: str = "real") -> np.ndarray:
    """``e^{-t Delta^2} u0`` as a spectral multiplier; ``t = 0`` returns a copy."""
    grid = _grid_for(u0, grid)
    if t < 0:
        raise DomainError("evolution time must be non-negative")
    u0 = np.asarray(u0, dtype=float)
    if t == 0:
        return u0.copy()
    mu = _mode_scale(laplacian, grid.length) * grid.k2**2
    return grid.ifft(np.exp(-mu * t) * grid.fft(u0))


def duhamel_solve(f: SpaceTimeField, T: float | None = None, laplacian: str = "real") -> SpaceTimeField:
    """``V[f](t) = int_0^t e^{-(t - s) Delta^2} f(s) ds`` with ``f`` linear between samples.

    Each Fourier mode is integrated exactly, so the only error is the
    piecewise-linear reading of ``f``.
    """
    if T is not None:
        keep = f.times <= T * (1 + 1e-12)
        f = SpaceTimeField(f.grid, f.times[keep], f.values[keep])
    grid = f.grid
    mu = _mode_scale(laplacian, grid.length) * grid.k2**2
    fh = grid.fft(f.values)
    out = np.zeros_like(f.values)
    uh = np.zeros_like(fh[0])
    for n in range(f.nt - 1):
        h = f.times[n + 1] - f.times[n]
        e, p1, p2 = phi_functions(-mu * h)
        uh = e * uh + h * p1 * fh[n] + h * p2 * (fh[n + 1] - fh[n])
        out[n + 1] = grid.ifft(uh)
    return SpaceTimeField(grid, f.times, out)


def _loglog_fit(ts, ys):
    lt, ly = np.log(ts), np.log(ys)
    slope, intercept = np.polyfit(lt, ly, 1)
    pred = intercept + slope * lt
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def on_diagonal_decay(spec: KernelSpec, t_values=None):
    """Slope and r^2 of ``log b(x, x; t)`` against ``log t``."""
    if t_values is None:
        t_values = np.logspace(-5, -3, 21)
    ys = np.array([float(_sum_modes(spec, 0.0, 0.0, t)[()]) for t in t_values])
    return _loglog_fit(np.asarray(t_values), ys)


def gradient_sup(spec: KernelSpec, t: float, samples: int = 2048) -> float:
    """``sup_x |d_x b(x, 0; t)|`` sampled along the x axis (the kernel is even in y)."""
    xs = np.linspace(0.0, 0.5 * spec.grid.length, samples)
    return float(np.max(np.abs(_sum_modes(spec, xs, np.zeros_like(xs), t, 1, 0))))


def gradient_decay(spec: KernelSpec, t_values=None, samples: int = 2048):
    """Slope and r^2 of ``log sup |grad b|`` against ``log t``."""
    if t_values is None:
        t_values = np.logspace(-5, -3, 21)
    ys = np.array([gradient_sup(spec, t, samples) for t in t_values])
    return _loglog_fit(np.asarray(t_values), ys)


def diagonal_table(spec: KernelSpec, t_values) -> np.ndarray:
    """Rows ``(t, b(x, x; t))``."""
    return np.array([(t, float(_sum_modes(spec, 0.0, 0.0, t)[()])) for t in t_values])
