"""Order-N approximate solutions in powers of s via truncated Taylor jets.

A jet of degree ``N`` stores Taylor coefficients ``c_0 .. c_N`` about
``s = 0`` (``c_j = f^{(j)}(0) / j!``) as a stacked array whose leading axis
indexes the coefficient.  Composing the curvature and trace formulas on jets
gives every s-derivative of ``L_s(phi_tilde)`` at once, which is all the
construction of the correctors ``u_j`` needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._etd import phi_functions
from .errors import DegenerateInput, DomainError, InsufficientData, NumericalBlowup, PositivityLoss
from .flow import rhs_twisted, solve_slab
from .geometry import W_FLOOR, KahlerPotential, TorusGrid
from .spacetime import SpaceTimeField, time_derivative

MAX_DEGREE = 4


class SJet:
    """Truncated power series in ``s`` with array-valued coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim < 1:
            raise DomainError("a jet needs at least one coefficient")
        if coeffs.shape[0] - 1 > MAX_DEGREE:
            raise DomainError(f"jet degree is capped at {MAX_DEGREE}")
        if not np.all(np.isfinite(coeffs)):
            raise DomainError("jet coefficients must be finite")
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value, degree: int) -> "SJet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((degree + 1,) + value.shape)
        c[0] = value
        return cls(c)

    @classmethod
    def variable(cls, degree: int, shape=()) -> "SJet":
        """The jet of ``s`` itself."""
        c = np.zeros((degree + 1,) + tuple(shape))
        if degree >= 1:
            c[1] = 1.0
        return cls(c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def __getitem__(self, j):
        return self.coeffs[j]

    def _coerce(self, other):
        if isinstance(other, SJet):
            if other.degree != self.degree:
                raise DomainError("jets of different degree")
            return other
        return SJet.constant(np.broadcast_to(other, self.coeffs.shape[1:]), self.degree)

    def __add__(self, other):
        return SJet(self.coeffs + self._coerce(other).coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        return SJet(self.coeffs - self._coerce(other).coeffs)

    def __rsub__(self, other):
        return SJet(self._coerce(other).coeffs - self.coeffs)

    def __neg__(self):
        return SJet(-self.coeffs)

    def __mul__(self, other):
        if not isinstance(other, SJet):
            other = np.asarray(other, dtype=float)
            return SJet(self.coeffs * other)
        if other.degree != self.degree:
            raise DomainError("jets of different degree")
        a, b = self.coeffs, other.coeffs
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for k in range(self.degree + 1):
            for j in range(k + 1):
                out[k] += a[j] * b[k - j]
        return SJet(out)

    __rmul__ = __mul__

    def shift(self) -> "SJet":
        """Multiply by ``s`` and truncate."""
        out = np.zeros_like(self.coeffs)
        out[1:] = self.coeffs[:-1]
        return SJet(out)

    def map(self, fn) -> "SJet":
        """Apply a linear map to every coefficient."""
        return SJet(np.stack([fn(c) for c in self.coeffs]))

    def _check_base(self, positive=False):
        c0 = self.coeffs[0]
        bad = (c0 <= 0) if positive else (c0 == 0)
        if np.any(bad) or np.any(np.abs(c0) < 1e-300):
            raise DegenerateInput("leading jet coefficient touches zero")

    def reciprocal(self) -> "SJet":
        self._check_base()
        x = self.coeffs
        y = np.zeros_like(x)
        y[0] = 1.0 / x[0]
        for k in range(1, self.degree + 1):
            acc = np.zeros_like(x[0])
            for j in range(1, k + 1):
                acc += x[j] * y[k - j]
            y[k] = -acc * y[0]
        return SJet(y)

    def log(self) -> "SJet":
        self._check_base(positive=True)
        x = self.coeffs
        y = np.zeros_like(x)
        y[0] = np.log(x[0])
        for k in range(1, self.degree + 1):
            acc = np.zeros_like(x[0])
            for j in range(1, k):
                acc += j * y[j] * x[k - j]
            y[k] = (x[k] - acc / k) / x[0]
        return SJet(y)

    def evaluate(self, s: float) -> np.ndarray:
        out = np.zeros_like(self.coeffs[0])
        for c in self.coeffs[::-1]:
            out = out * s + c
        return out


def jet_ops(a: SJet, b: SJet | None, op: str) -> SJet:
    """Binary/unary jet arithmetic: ``add``, ``mul``, ``reciprocal``, ``log``."""
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "reciprocal":
        return a.reciprocal()
    if op == "log":
        return a.log()
    raise DomainError(f"unknown jet operation {op!r}")


def residual_jet(grid: TorusGrid, phi_jet: SJet, phi_t_jet: SJet, w_floor: float = W_FLOOR) -> SJet:
    """Taylor coefficients in ``s`` of ``L_s(phi(s))`` for ``phi(s) = sum c_j s^j``.

    Mirrors the grid formulas exactly, dealiasing included, so coefficient
    ``j`` is ``(1/j!) d^j/ds^j L_s(phi(s))`` at ``s = 0`` for the discrete operator.
    """
    w = phi_jet.map(grid.dz_dzbar) + 1.0
    wmin = float(np.min(w[0]))
    if not wmin >= w_floor:
        raise PositivityLoss(wmin, w_floor)
    inv = w.reciprocal()
    trace = inv.map(grid.dealias)
    logw = w.log().map(grid.dealias)
    curvature = -(logw.map(grid.dz_dzbar) * inv).map(grid.dealias)
    j_part = 1.0 - trace
    # L_s = phi_t - s R - (1 - s)(n - tr)
    return phi_t_jet - curvature.shift() - j_part + j_part.shift()


@dataclass
class ApproxSolution:
    """J-flow path ``phi0`` plus correctors ``u_1..u_N`` on a shared time grid."""

    grid: TorusGrid
    times: np.ndarray
    phi0: np.ndarray  # (nt, n, n)
    u: list  # N arrays (nt, n, n)
    dt: float
    w_floor: float = W_FLOOR

    @property
    def N(self) -> int:
        return len(self.u)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def taylor_coefficients(self, degree: int | None = None) -> list:
        """``[phi0, u_1/1!, u_2/2!, ...]`` padded with zeros up to ``degree``."""
        degree = self.N if degree is None else degree
        cs = [self.phi0] + [uj / math.factorial(j + 1) for j, uj in enumerate(self.u)]
        cs = cs[: degree + 1]
        while len(cs) < degree + 1:
            cs.append(np.zeros_like(self.phi0))
        return cs

    def jet(self, degree: int | None = None) -> SJet:
        return SJet(np.stack(self.taylor_coefficients(degree)))

    def time_jet(self, degree: int | None = None) -> SJet:
        return self.jet(degree).map(lambda c: time_derivative(c, self.times))

    def equation_time_jet(self) -> SJet:
        """Time derivatives taken from the equations each path solves.

        Coefficient 0 is the J-flow right-hand side of ``phi0``; coefficient
        ``j`` is the corrector right-hand side ``dealias(c_{z zbar} / w0^2) - F_j``.
        Unlike :meth:`time_jet` this carries no finite-difference error.
        """
        grid = self.grid
        coeffs = self.taylor_coefficients()
        out = [np.stack([rhs_twisted(KahlerPotential(grid, p, self.w_floor), 0.0) for p in self.phi0])]
        b = (1.0 + grid.dz_dzbar(self.phi0)) ** -2.0
        for j in range(1, self.N + 1):
            out.append(grid.dealias(grid.dz_dzbar(coeffs[j]) * b) - corrector_forcing(self, j))
        return SJet(np.stack(out))

    def phi_tilde(self, s: float) -> SpaceTimeField:
        """``phi0 + sum_j s^j / j! u_j`` on the time grid."""
        return SpaceTimeField(self.grid, self.times, self.jet().evaluate(s))

    def phi0_field(self) -> SpaceTimeField:
        return SpaceTimeField(self.grid, self.times, self.phi0)


def corrector_forcing(approx: ApproxSolution, j: int) -> np.ndarray:
    """Coefficient ``j`` of the residual jet with ``u_j`` (and beyond) set to zero.

    Depends only on ``phi0, u_1 .. u_{j-1}``.
    """
    cs = approx.taylor_coefficients(j - 1) + [np.zeros_like(approx.phi0)]
    jet = SJet(np.stack(cs))
    zero_t = SJet(np.zeros_like(jet.coeffs))
    # time-derivative coefficients below j do not enter coefficient j
    return residual_jet(approx.grid, jet, zero_t, approx.w_floor)[j]


def _solve_corrector(grid: TorusGrid, times: np.ndarray, phi0: np.ndarray, forcing: np.ndarray) -> np.ndarray:
    """ETD2 solve of ``c_t = dealias(c_{z zbar} / w0^2) - F`` with ``c(0) = 0``."""
    lam = grid.lam
    mask = grid.dealias_mask
    w0 = 1.0 + grid.dz_dzbar(phi0)
    b = w0**-2.0

    def g(n, c):
        return grid.dealias(grid.dz_dzbar(c) * b[n]) - forcing[n]

    out = np.zeros_like(phi0)
    c = np.zeros(grid.shape)
    for n in range(len(times) - 1):
        h = times[n + 1] - times[n]
        sigma = mask * max(1.0, float(b[n].max())) * lam
        e, p1, p2 = phi_functions(-sigma * h)
        ch = grid.fft(c)
        n0 = grid.fft(g(n, c)) + sigma * ch
        ah = e * ch + h * p1 * n0
        a = grid.ifft(ah)
        n1 = grid.fft(g(n + 1, a)) + sigma * ah
        c = grid.ifft(ah + h * p2 * (n1 - n0))
        if not np.all(np.isfinite(c)):
            raise NumericalBlowup(f"corrector solve diverged at t={times[n + 1]:.6g}")
        out[n + 1] = c
    return out


def build_approximate(psi0: KahlerPotential, N: int, T: float, dt: float = 1e-3,
                      scheme: str = "etd2") -> ApproxSolution:
    """J-flow from ``psi0`` on ``[0, T]`` and correctors ``u_1..u_N``.

    Each ``u_j`` solves the second-order linear equation whose forcing is the
    ``j``-th residual coefficient with ``u_j`` frozen at zero; ``u_j(., 0) = 0``.
    """
    if not 0 <= N <= MAX_DEGREE:
        raise DomainError(f"N must lie in [0, {MAX_DEGREE}]")
    j_flow = solve_slab(psi0, 0.0, T, dt, scheme)
    approx = ApproxSolution(psi0.grid, j_flow.times, j_flow.values, [], T / (len(j_flow.times) - 1), psi0.w_floor)
    for j in range(1, N + 1):
        forcing = corrector_forcing(approx, j)
        c = _solve_corrector(psi0.grid, approx.times, approx.phi0, forcing)
        approx.u.append(math.factorial(j) * c)
    return approx


def slab_residual(grid: TorusGrid, phi: SpaceTimeField, s: float, w_floor: float = W_FLOOR) -> np.ndarray:
    """``L_s(phi)`` on every slice, time derivative by centered differences."""
    phit = phi.time_derivative()
    out = np.empty_like(phi.values)
    for n, t in enumerate(phi.times):
        p = KahlerPotential(grid, phi.values[n], w_floor, t=t)
        out[n] = phit[n] - rhs_twisted(p, s)
    return out


def residual_order_fit(approx: ApproxSolution, s_values, T: float | None = None):
    """Fit ``log sup |L_s(phi_tilde_{N,s})|`` against ``log s``.

    Returns ``(slope, intercept, per_s)`` where ``per_s`` maps each ``s`` to its
    residual, or to the :class:`PositivityLoss` that excluded it from the fit.
    """
    field = approx
    per_s = {}
    xs, ys = [], []
    keep = slice(None)
    if T is not None:
        keep = approx.times <= T * (1 + 1e-12)
    for s in s_values:
        phi = field.phi_tilde(s)
        try:
            res = slab_residual(approx.grid, phi, s, approx.w_floor)
        except PositivityLoss as exc:
            per_s[s] = exc
            continue
        r = float(np.max(np.abs(res[keep])))
        per_s[s] = r
        if r > 0:
            xs.append(math.log(s))
            ys.append(math.log(r))
    if len(xs) < 2:
        raise InsufficientData("need residuals at two or more s values to fit an order")
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(intercept), per_s
