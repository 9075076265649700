"""The linearized flow operator ``DL_s`` along a background path, and its inverse.

For complex dimension one, with ``w`` the density of the background and
``r = -(log w)_{z zbar}`` its Ricci form,

    DL_s(u) = u_t + s (Delta_phi^2 u + r u_{z zbar} / w^2) - (1 - s) u_{z zbar} / w^2.

The inverse is computed on the rescaled time ``tau = s t`` where the
equation reads ``w_tau + Delta^2 w = s^{-1} f + s^{-1} a w_{z zbar}``.
"""
from __future__ import annotations

import numpy as np

from ._etd import phi_functions
from .errors import DegenerateInput, DomainError, NumericalBlowup, ResidualTooLarge
from .flow import flow_operator
from .geometry import KahlerPotential, TorusGrid, bilaplacian_wrt, integrate_measure, laplacian_wrt
from .norms import c4_norm
from .spacetime import BackgroundPath, SpaceTimeField, time_derivative

__all__ = [
    "BackgroundPath",
    "SpaceTimeField",
    "apply_DLs",
    "spatial_DLs",
    "twist_coefficient",
    "rescale_time",
    "invert_DLs",
    "apply_projected_DLs",
    "projection_constant",
    "lipschitz_probe",
    "frechet_errors",
]


def spatial_DLs(phi: KahlerPotential, u: np.ndarray, s: float) -> np.ndarray:
    """The spatial part ``DL_s(u) - u_t``."""
    grid = phi.grid
    # constants are in the kernel; removing the mean keeps them exactly there
    u = u - np.mean(u)
    uzz = grid.dz_dzbar(u)
    w2 = phi.density**2
    out = -(1.0 - s) * grid.dealias(uzz / w2)
    if s != 0.0:
        out = out + s * (bilaplacian_wrt(phi, u) + grid.dealias(phi.ricci * uzz / w2))
    return out


def apply_DLs(phi: KahlerPotential, u, u_t, s: float) -> np.ndarray:
    """Pointwise value of the linearization of ``L_s`` at ``phi`` applied to ``u``."""
    grid = phi.grid
    u = grid.check_field(u, "u")
    u_t = np.broadcast_to(np.asarray(u_t, dtype=float), grid.shape)
    return u_t + spatial_DLs(phi, u, s)


def twist_coefficient(phi: KahlerPotential, s: float) -> np.ndarray:
    """Scalar ``a`` with ``a_{l kbar} w_{k lbar} = a * w_{z zbar}`` (indices raised by the background).

    Built from the decomposition ``(1-s) g^{k lbar} - (1-s) g^{i lbar} g^{k jbar} phi_{i jbar} - s Ric``.
    """
    w = phi.density
    phizz = w - 1.0
    return (1.0 - s) / w - (1.0 - s) * phizz / w**2 - s * phi.ricci / w**2


def rescale_time(u: SpaceTimeField, s: float, direction: str = "forward") -> SpaceTimeField:
    """Relabel the time axis: forward maps ``t -> s t``, inverse maps ``tau -> tau / s``."""
    if direction not in ("forward", "inverse"):
        raise DomainError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    if not s > 0:
        raise DomainError("time rescaling needs s > 0")
    if s == 1.0:
        return u
    times = u.times * s if direction == "forward" else u.times / s
    return SpaceTimeField(u.grid, times, u.values)


def _rescaled_path(path: BackgroundPath, s: float) -> BackgroundPath:
    if s == 1.0:
        return path
    out = BackgroundPath.__new__(BackgroundPath)
    out.grid = path.grid
    out.times = path.times * s
    out.values = path.values
    out.w_floor = path.w_floor
    out._slices = path._slices
    return out


def _interp(field: SpaceTimeField, t: float) -> np.ndarray:
    times = field.times
    i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
    theta = float(np.clip((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0))
    return (1 - theta) * field.values[i] + theta * field.values[i + 1]


def invert_DLs(path: BackgroundPath, f: SpaceTimeField, s: float, *, substeps: int = 1,
               lin_rtol: float = 1e-6, check: bool = True, stabilize: bool = True) -> SpaceTimeField:
    """Solve ``DL_s|_path (u) = f`` with ``u(., 0) = 0`` on the time grid of ``f``.

    Works in ``tau = s t`` with an ETD2 predictor-corrector; the forcing is
    linear between stored times.  With ``check`` the residual is measured by
    centered differences on the stored grid and :class:`ResidualTooLarge` is
    raised above ``lin_rtol * sup|f|``.
    """
    if not s > 0:
        raise DomainError("invert_DLs requires s > 0")
    grid = path.grid
    if f.grid != grid:
        raise DomainError("forcing and background live on different grids")
    if f.times[0] != 0.0 and abs(f.times[0]) > 1e-14:
        raise DomainError("forcing must start at t = 0")
    ftau = rescale_time(f, s, "forward") * (1.0 / s)
    bg = _rescaled_path(path, s)
    lam = grid.lam
    mask = grid.dealias_mask
    twist = (1.0 - s) / s

    def remainder(tau, wv, sigma):
        phi = bg.at(tau)
        a = twist_coefficient(phi, s)
        g = -bilaplacian_wrt(phi, wv) + grid.dealias(a * grid.dz_dzbar(wv)) / s
        return grid.fft(g + _interp(ftau, tau)) + sigma * grid.fft(wv)

    out = np.zeros_like(f.values)
    wv = np.zeros(grid.shape)
    taus = ftau.times
    for n in range(len(taus) - 1):
        sub = np.linspace(taus[n], taus[n + 1], substeps + 1)
        for k in range(substeps):
            t0, t1 = sub[k], sub[k + 1]
            h = t1 - t0
            phi0 = bg.at(t0)
            c = max(1.0, float(np.max(phi0.density ** -2.0))) if stabilize else 1.0
            sigma = mask * c * (lam**2 + twist * lam)
            e, p1, p2 = phi_functions(-sigma * h)
            wh = grid.fft(wv)
            n0 = remainder(t0, wv, sigma)
            ah = e * wh + h * p1 * n0
            a = grid.ifft(ah)
            n1 = remainder(t1, a, sigma)
            wv = grid.ifft(ah + h * p2 * (n1 - n0))
            if not np.all(np.isfinite(wv)):
                raise NumericalBlowup(f"invert_DLs diverged at t={t1 / s:.6g}")
        out[n + 1] = wv
    u = SpaceTimeField(grid, f.times, out)
    if check:
        res = linear_residual(path, u, f, s)
        scale = max(f.sup(), 1e-300)
        if res > lin_rtol * scale:
            raise ResidualTooLarge(res / scale, lin_rtol, solution=u)
    return u


def linear_residual(path: BackgroundPath, u: SpaceTimeField, f: SpaceTimeField, s: float) -> float:
    """``sup |DL_s(u) - f|`` with the time derivative from centered differences."""
    if not np.any(u.values) and not np.any(f.values):
        return 0.0
    ut = u.time_derivative()
    res = 0.0
    for n, t in enumerate(u.times):
        r = ut[n] + spatial_DLs(path.at(t), u.values[n], s) - f.values[n]
        res = max(res, float(np.max(np.abs(r))))
    return res


def apply_projected_DLs(path: BackgroundPath, u, u_t, s: float, t: float = 0.0) -> np.ndarray:
    """``DL_s(u)`` minus its mean against ``omega_phi`` at time ``t``.

    The image then lies in the zero-mean class used for exponentially decaying
    solutions.
    """
    phi = path.at(t)
    out = apply_DLs(phi, u, u_t, s)
    return out - integrate_measure(out, phi) / integrate_measure(1.0, phi)


def projection_constant(path: BackgroundPath, u, s: float, t: float = 0.0) -> float:
    """Average of ``a u_{z zbar} + u Delta_phi (d phi / dt)`` against ``omega_phi`` (t-units).

    For ``u`` that stays mean-free against the evolving measure, adding this
    constant to ``DL_s(u)`` gives the same projection as
    :func:`apply_projected_DLs`.
    """
    phi = path.at(t)
    grid = phi.grid
    u = grid.check_field(u)
    integrand = twist_coefficient(phi, s) * grid.dz_dzbar(u) + u * laplacian_wrt(phi, path.velocity(t))
    return integrate_measure(integrand, phi) / integrate_measure(1.0, phi)


def lipschitz_probe(phi1: KahlerPotential, phi2: KahlerPotential, v, s: float) -> float:
    """``|(DL_s|phi1 - DL_s|phi2) v|_sup / (|v|_C4 |phi1 - phi2|_C4)`` with mean-free distance."""
    grid = phi1.grid
    v = grid.check_field(v, "v")
    if np.array_equal(phi1.values, phi2.values):
        raise DegenerateInput("the two potentials coincide")
    if not np.any(v):
        raise DegenerateInput("probe direction is zero")
    diff = phi1.values - phi2.values
    diff = diff - diff.mean()
    scale = max(np.abs(phi1.values).max(), np.abs(phi2.values).max())
    if np.abs(diff).max() <= 8 * np.finfo(float).eps * scale:
        # differ by a constant up to rounding of the samples
        return 0.0
    num = float(np.max(np.abs(spatial_DLs(phi1, v, s) - spatial_DLs(phi2, v, s))))
    den = c4_norm(grid, v) * c4_norm(grid, diff)
    if den == 0.0 or num == 0.0:
        return 0.0
    return num / den


def frechet_errors(phi: KahlerPotential, v, s: float, eps_values) -> np.ndarray:
    """Sup error of the central difference of ``L_s`` against ``apply_DLs``, per step size."""
    grid = phi.grid
    exact = apply_DLs(phi, v, 0.0, s)
    zero = np.zeros(grid.shape)
    errs = []
    for eps in eps_values:
        lp = flow_operator(KahlerPotential(grid, phi.values + eps * v, phi.w_floor), zero, s)
        lm = flow_operator(KahlerPotential(grid, phi.values - eps * v, phi.w_floor), zero, s)
        errs.append(float(np.max(np.abs((lp - lm) / (2 * eps) - exact))))
    return np.array(errs)
