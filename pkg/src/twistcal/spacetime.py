"""Fields sampled on a time slab and piecewise-linear background paths."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeMismatch
from .geometry import W_FLOOR, KahlerPotential, TorusGrid


def time_derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Centered second-order differences along axis 0, one-sided at the ends."""
    if len(times) < 3:
        raise DomainError("need at least three time samples for a time derivative")
    return np.gradient(values, times, axis=0, edge_order=2)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Values ``u(x, t_i)`` stacked as an ``(nt, n, n)`` array."""

    grid: TorusGrid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or values.shape != (len(times),) + self.grid.shape:
            raise ShapeMismatch(
                f"values {values.shape} do not match {len(times)} times on a {self.grid.shape} grid"
            )
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise DomainError("times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ShapeMismatch("space-time field contains non-finite values")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: TorusGrid, times, fn) -> "SpaceTimeField":
        """Sample ``fn(X, Y, t)`` on the grid at each time."""
        X, Y = grid.coords()
        times = np.asarray(times, dtype=float)
        vals = np.stack([np.broadcast_to(fn(X, Y, t), grid.shape) for t in times])
        return cls(grid, times, vals)

    @classmethod
    def zeros_like(cls, other: "SpaceTimeField") -> "SpaceTimeField":
        return cls(other.grid, other.times, np.zeros_like(other.values))

    @property
    def nt(self) -> int:
        return len(self.times)

    def __len__(self):
        return self.nt

    def __getitem__(self, i) -> np.ndarray:
        return self.values[i]

    def time_derivative(self) -> np.ndarray:
        return time_derivative(self.values, self.times)

    def with_values(self, values) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times, values)

    def __add__(self, other):
        if isinstance(other, SpaceTimeField):
            _check_same_slab(self, other)
            other = other.values
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, SpaceTimeField):
            _check_same_slab(self, other)
            other = other.values
        return self.with_values(self.values - other)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _check_same_slab(a: SpaceTimeField, b: SpaceTimeField):
    if a.grid != b.grid or a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12 * max(1.0, abs(a.times[-1]))):
        raise ShapeMismatch("space-time fields live on different slabs")


class BackgroundPath:
    """Time-indexed potentials, linearly interpolated in t.

    Every stored slice must satisfy the positivity invariant.  ``at(t)``
    returns a :class:`KahlerPotential` for the interpolated slice and
    ``velocity(t)`` the piecewise-constant time derivative.
    """

    def __init__(self, grid: TorusGrid, times, values, w_floor: float = W_FLOOR):
        field = SpaceTimeField(grid, times, values)
        self.grid = grid
        self.times = field.times
        self.values = field.values
        self.w_floor = w_floor
        self._slices = [KahlerPotential(grid, v, w_floor, t=t) for t, v in zip(self.times, self.values)]

    @classmethod
    def constant(cls, phi: KahlerPotential, T: float, nt: int = 2) -> "BackgroundPath":
        times = np.linspace(0.0, T, nt)
        return cls(phi.grid, times, np.broadcast_to(phi.values, (nt,) + phi.grid.shape).copy(), phi.w_floor)

    @classmethod
    def from_field(cls, field: SpaceTimeField, w_floor: float = W_FLOOR) -> "BackgroundPath":
        return cls(field.grid, field.times, field.values, w_floor)

    def as_field(self) -> SpaceTimeField:
        return SpaceTimeField(self.grid, self.times, self.values)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def _locate(self, t: float) -> tuple[int, float]:
        times = self.times
        if len(times) == 1:
            return 0, 0.0
        span = times[-1] - times[0]
        if t < times[0] - 1e-12 * span or t > times[-1] + 1e-12 * span:
            raise DomainError(f"t={t} outside background path [{times[0]}, {times[-1]}]")
        i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        theta = (t - times[i]) / (times[i + 1] - times[i])
        return i, float(np.clip(theta, 0.0, 1.0))

    def at(self, t: float) -> KahlerPotential:
        i, theta = self._locate(t)
        if theta == 0.0:
            return self._slices[i]
        if theta == 1.0:
            return self._slices[i + 1]
        vals = (1 - theta) * self.values[i] + theta * self.values[i + 1]
        return KahlerPotential(self.grid, vals, self.w_floor, t=t)

    def velocity(self, t: float) -> np.ndarray:
        if len(self.times) == 1:
            return np.zeros(self.grid.shape)
        i, _ = self._locate(t)
        return (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i])

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i) -> KahlerPotential:
        return self._slices[i]
