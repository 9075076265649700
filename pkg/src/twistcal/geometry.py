"""Discrete Kahler geometry on the flat torus C / (L Z + i L Z).

Fields are real ``(N, N)`` numpy arrays indexed ``[iy, ix]`` (x varies
fastest), sampled at ``(ix * h, iy * h)``.  Spectral operators act on the
last two axes, so stacks of fields such as ``(nt, N, N)`` slabs are handled
transparently.

The reference metric is flat with ``g_{z zbar} = 1``, so for a potential
``phi`` the metric density is ``w = 1 + phi_{z zbar}`` and
``phi_{z zbar} = (d_xx + d_yy) phi / 4``.  Nonlinear pointwise operations
(quotients, ``1/w``, ``log w``) are followed by the dealiasing filter.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .errors import DomainError, PositivityLoss, ShapeMismatch

W_FLOOR = 1e-6


@dataclass(frozen=True)
class TorusGrid:
    """Uniform ``n x n`` grid on the square torus of side ``length``."""

    n: int
    length: float = 1.0
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise DomainError(f"grid resolution must be an even integer >= 8, got {self.n}")
        if not self.length > 0:
            raise DomainError("side length must be positive")
        if not 0 < self.dealias_fraction <= 1:
            raise DomainError("dealias_fraction must lie in (0, 1]")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def volume(self) -> float:
        return self.length**2

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` coordinate arrays of shape ``(n, n)``."""
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(x, x, indexing="xy")

    # -- wavenumbers ---------------------------------------------------
    @cached_property
    def kx(self) -> np.ndarray:
        """Integer x-wavenumbers of the half spectrum, shape ``(1, n//2+1)``."""
        return np.arange(self.n // 2 + 1, dtype=float)[None, :]

    @cached_property
    def ky(self) -> np.ndarray:
        """Integer y-wavenumbers, shape ``(n, 1)``."""
        return (np.fft.fftfreq(self.n) * self.n)[:, None]

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 in integer units on the half spectrum."""
        return self.kx**2 + self.ky**2

    @cached_property
    def lam(self) -> np.ndarray:
        """Symbol of ``-d_z d_zbar``: pi^2 |k|^2 / L^2."""
        return (np.pi / self.length) ** 2 * self.k2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.dealias_fraction * self.n / 2
        keep = (np.abs(self.kx) <= cut) & (np.abs(self.ky) <= cut)
        return keep.astype(float)

    # -- transforms ------------------------------------------------------
    def fft(self, u: np.ndarray) -> np.ndarray:
        return sfft.rfft2(u, axes=(-2, -1))

    def ifft(self, uh: np.ndarray) -> np.ndarray:
        return sfft.irfft2(uh, s=self.shape, axes=(-2, -1))

    def dealias(self, u: np.ndarray) -> np.ndarray:
        if self.dealias_fraction >= 1:
            return u
        return self.ifft(self.fft(u) * self.dealias_mask)

    def dz_dzbar(self, u: np.ndarray) -> np.ndarray:
        """``u_{z zbar} = (u_xx + u_yy) / 4``, exact per Fourier mode."""
        return self.ifft(-self.lam * self.fft(u))

    def derivative(self, u: np.ndarray, ax: int, ay: int) -> np.ndarray:
        """Spectral partial derivative ``d_x^ax d_y^ay u``."""
        if ax == 0 and ay == 0:
            return np.array(u, dtype=float, copy=True)
        scale = 2 * np.pi / self.length
        kx = self.kx.copy()
        ky = self.ky.copy()
        # Nyquist mode has no well-defined odd derivative
        if ax % 2:
            kx[..., -1] = 0.0
        if ay % 2:
            ky[self.n // 2, ...] = 0.0
        sym = (1j * scale * kx) ** ax * (1j * scale * ky) ** ay
        return self.ifft(sym * self.fft(u))

    def mean(self, u: np.ndarray) -> np.ndarray | float:
        """Flat spatial mean over the last two axes."""
        return np.mean(u, axis=(-2, -1))

    def integrate(self, u: np.ndarray) -> np.ndarray | float:
        """Rectangle-rule integral over the torus (last two axes)."""
        return self.spacing**2 * np.sum(u, axis=(-2, -1))

    def check_field(self, u, name: str = "field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-2:] != self.shape:
            raise ShapeMismatch(f"{name} has shape {u.shape}, grid expects (..., {self.n}, {self.n})")
        if not np.all(np.isfinite(u)):
            raise ShapeMismatch(f"{name} contains non-finite values")
        return u


class KahlerPotential:
    """A potential ``phi`` with ``w = 1 + phi_{z zbar} >= w_floor`` everywhere.

    The values are copied and frozen.  Construction raises
    :class:`PositivityLoss` when the density invariant fails.
    """

    __slots__ = ("grid", "values", "w_floor", "_density", "_phizz", "_cache")

    def __init__(self, grid: TorusGrid, values, w_floor: float = W_FLOOR, t=None):
        values = np.array(grid.check_field(values, "potential"), dtype=float)
        if values.ndim != 2:
            raise ShapeMismatch("a potential is a single (n, n) field")
        values.setflags(write=False)
        phizz = grid.dz_dzbar(values)
        density = 1.0 + phizz
        wmin = float(density.min())
        if not wmin >= w_floor:
            raise PositivityLoss(wmin, w_floor, t)
        density.setflags(write=False)
        phizz.setflags(write=False)
        self._phizz = phizz
        self.grid = grid
        self.values = values
        self.w_floor = w_floor
        self._density = density
        self._cache = {}

    @classmethod
    def zero(cls, grid: TorusGrid) -> "KahlerPotential":
        return cls(grid, np.zeros(grid.shape))

    @property
    def density(self) -> np.ndarray:
        return self._density

    def _cached(self, key, fn):
        if key not in self._cache:
            out = fn()
            out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    @property
    def log_density(self) -> np.ndarray:
        """Dealiased ``log w``, via log1p so small potentials keep full precision."""
        return self._cached("logw", lambda: self.grid.dealias(np.log1p(self._phizz)))

    @property
    def ricci(self) -> np.ndarray:
        """``Ric_{z zbar} = -(log w)_{z zbar}``."""
        return self._cached("ric", lambda: -self.grid.dz_dzbar(self.log_density))

    def __repr__(self):
        return f"KahlerPotential(n={self.grid.n}, min_w={self._density.min():.4g})"


def as_potential(grid: TorusGrid, phi, w_floor: float = W_FLOOR) -> KahlerPotential:
    if isinstance(phi, KahlerPotential):
        if phi.grid != grid:
            raise ShapeMismatch("potential lives on a different grid")
        return phi
    return KahlerPotential(grid, phi, w_floor)


def dz_dzbar(grid: TorusGrid, u) -> np.ndarray:
    return grid.dz_dzbar(grid.check_field(u))


def metric_density(phi: KahlerPotential) -> np.ndarray:
    """Density ``w = 1 + phi_{z zbar}`` of omega_phi against the flat metric."""
    return phi.density


def trace_background(phi: KahlerPotential) -> np.ndarray:
    """``tr_phi omega_g``, which is ``1/w`` in complex dimension one."""
    return phi._cached("tr", lambda: phi.grid.dealias(1.0 / phi.density))


def laplacian_wrt(phi: KahlerPotential, u) -> np.ndarray:
    """``Delta_phi u = u_{z zbar} / w``."""
    grid = phi.grid
    return grid.dealias(grid.dz_dzbar(grid.check_field(u)) / phi.density)


def bilaplacian_wrt(phi: KahlerPotential, u) -> np.ndarray:
    return laplacian_wrt(phi, laplacian_wrt(phi, u))


def scalar_curvature(phi: KahlerPotential) -> np.ndarray:
    """``R(omega_phi) = -(log w)_{z zbar} / w``."""
    return phi._cached("R", lambda: -laplacian_wrt(phi, phi.log_density))


def integrate_measure(f, phi: KahlerPotential) -> float:
    """Rectangle-rule integral of ``f`` against ``omega_phi``."""
    grid = phi.grid
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        f = np.full(grid.shape, float(f))
    if f.shape != grid.shape:
        raise ShapeMismatch(f"integrand shape {f.shape} does not match grid {grid.shape}")
    return float(grid.integrate(f * phi.density))
