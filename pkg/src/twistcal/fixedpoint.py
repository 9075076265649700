"""Space-time chord iteration for ``L_s(phi) = v``.

The iteration is ``phi <- phi + (DL_s|_bg)^{-1} (v - L_s(phi))`` with the
linearization frozen at a background ``bg`` (the order-N approximate
solution).  In time, ``L_s`` is discretized by the trapezoidal rule on the
slab nodes, giving one residual per interval:

    r_{n+1/2} = (phi_{n+1} - phi_n) / h - (rhs(phi_n) + rhs(phi_{n+1})) / 2 - (v_n + v_{n+1}) / 2.

The linearized operator is discretized the same way and inverted exactly
(per step, one GMRES solve of ``(I + h/2 A_{n+1}) u_{n+1} = ...``), so the
iteration's fixed point has zero discrete residual.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .approx import ApproxSolution, build_approximate
from .errors import DomainError, MaxItersExceeded, NonContractive, NumericalBlowup
from .flow import rhs_twisted, reference_symbol
from .geometry import KahlerPotential
from .linearization import spatial_DLs
from .norms import c4_surrogate
from .spacetime import BackgroundPath, SpaceTimeField


def surrogate_floor(phi: SpaceTimeField) -> float:
    """Rounding level of :func:`c4_surrogate` for a correction to ``phi``.

    Fourth derivatives amplify relative rounding in the top modes by
    ``k_max^4``; corrections below this are noise and carry no ratio.
    """
    grid = phi.grid
    k_max = 2.0 * np.pi / grid.length * (grid.n // 2)
    return 16 * np.finfo(float).eps * float(np.max(np.abs(phi.values))) * k_max**4


@dataclass
class IterationReport:
    iterate_norms: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: bool = False
    k_final: int = 1
    fp_tol: float = 1e-6

    @property
    def contractive(self) -> bool:
        return all(r < 1 for r in self.ratios)

    @property
    def half_contractive(self) -> bool:
        return all(r < 0.5 for r in self.ratios)

    def to_dict(self) -> dict:
        return {
            "norms": self.iterate_norms,
            "ratios": self.ratios,
            "residuals": self.residuals,
            "converged": self.converged,
            "k_final": self.k_final,
            "fp_tol": self.fp_tol,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _midpoints(times):
    return 0.5 * (times[1:] + times[:-1])


def trapezoid_residual(phi: SpaceTimeField, s: float, v: SpaceTimeField | None = None,
                       w_floor: float = 1e-6) -> SpaceTimeField:
    """Trapezoidal discretization of ``L_s(phi) - v``, one value per interval."""
    grid = phi.grid
    rhs = np.stack([rhs_twisted(KahlerPotential(grid, p, w_floor, t=t), s) for t, p in zip(phi.times, phi.values)])
    h = np.diff(phi.times)[:, None, None]
    res = np.diff(phi.values, axis=0) / h - 0.5 * (rhs[1:] + rhs[:-1])
    if v is not None:
        res -= 0.5 * (v.values[1:] + v.values[:-1])
    return SpaceTimeField(grid, _midpoints(phi.times), res)


def apply_DLs_trapezoid(path: BackgroundPath, u: SpaceTimeField, s: float) -> SpaceTimeField:
    """Trapezoidal discretization of ``DL_s|_path (u)`` on the intervals of ``u``."""
    A = np.stack([spatial_DLs(path.at(t), un, s) for t, un in zip(u.times, u.values)])
    h = np.diff(u.times)[:, None, None]
    return SpaceTimeField(u.grid, _midpoints(u.times), np.diff(u.values, axis=0) / h + 0.5 * (A[1:] + A[:-1]))


def invert_DLs_trapezoid(path: BackgroundPath, r: SpaceTimeField, times: np.ndarray, s: float,
                         tol: float = 1e-12) -> SpaceTimeField:
    """Exact inverse of :func:`apply_DLs_trapezoid` with ``u(., 0) = 0``."""
    grid = path.grid
    n2 = grid.n * grid.n
    out = np.zeros((len(times),) + grid.shape)
    u = np.zeros(grid.shape)
    phi_prev = path.at(times[0])
    for n in range(len(times) - 1):
        h = times[n + 1] - times[n]
        phi_next = path.at(times[n + 1])
        b = u - 0.5 * h * spatial_DLs(phi_prev, u, s) + h * r.values[n]
        if not np.any(b):
            u = np.zeros(grid.shape)
        else:
            scale = float(np.mean(phi_next.density ** -2.0))
            precond = 1.0 / (1.0 + 0.5 * h * reference_symbol(grid, s, scale))

            def matvec(x, phi=phi_next, h=h):
                x = x.reshape(grid.shape)
                return (x + 0.5 * h * spatial_DLs(phi, x, s)).ravel()

            def psolve(x):
                return grid.ifft(precond * grid.fft(x.reshape(grid.shape))).ravel()

            op = LinearOperator((n2, n2), matvec=matvec, dtype=float)
            M = LinearOperator((n2, n2), matvec=psolve, dtype=float)
            x, info = gmres(op, b.ravel(), x0=u.ravel(), rtol=tol, atol=0.0, restart=40, maxiter=200, M=M)
            if info != 0:
                raise NumericalBlowup(f"GMRES failed (info={info}) at step {n}")
            u = x.reshape(grid.shape)
        out[n + 1] = u
        phi_prev = phi_next
    return SpaceTimeField(grid, times, out)


def psi_apply(phi: SpaceTimeField, path: BackgroundPath, v: SpaceTimeField | None, s: float,
              operator=None) -> SpaceTimeField:
    """One application of ``phi -> phi + (DL_s|_path)^{-1}(v - L_s(phi))``.

    ``operator(phi)`` may replace the discrete ``L_s(phi) - v`` (returning a
    midpoint :class:`SpaceTimeField`); the initial slice is left untouched.
    """
    if not s > 0:
        raise DomainError("the chord map needs s > 0")
    res = operator(phi) if operator is not None else trapezoid_residual(phi, s, v, path.w_floor)
    corr = invert_DLs_trapezoid(path, -res, phi.times, s)
    out = phi.values + corr.values
    out[0] = phi.values[0]
    return phi.with_values(out)


def solve_by_contraction(psi0: KahlerPotential, s: float, T: float, N: int = 1, dt: float = 1e-3,
                         fp_tol: float = 1e-6, max_iters: int = 25, relinearize: bool = False,
                         approx: ApproxSolution | None = None, v: SpaceTimeField | None = None):
    """Iterate the chord map from ``phi_tilde_{N,s}`` until ``sup|L_s(phi)| <= fp_tol``
    and the last correction is below ``fp_tol`` as well (or below the
    surrogate's rounding floor, whichever is larger).

    Returns ``(phi, report)``.  Raises :class:`MaxItersExceeded` (report
    attached) when the budget runs out and :class:`NonContractive` when the
    correction ratios climb back above one.
    """
    if approx is None:
        approx = build_approximate(psi0, N, T, dt)
    phi = approx.phi_tilde(s)
    path = BackgroundPath.from_field(phi, psi0.w_floor)
    phi = phi.with_values(np.array(phi.values))
    phi.values[0] = psi0.values
    report = IterationReport(fp_tol=fp_tol)
    below_one = False
    floor = surrogate_floor(phi)
    for k in range(1, max_iters + 1):
        res = trapezoid_residual(phi, s, v, psi0.w_floor)
        report.residuals.append(res.sup())
        report.k_final = k
        settled = not report.iterate_norms or report.iterate_norms[-1] <= max(fp_tol, floor)
        if res.sup() <= fp_tol and settled:
            report.converged = True
            return phi, report
        if relinearize and k > 1:
            path = BackgroundPath.from_field(phi, psi0.w_floor)
        corr = invert_DLs_trapezoid(path, -res, phi.times, s)
        new = phi.values + corr.values
        new[0] = psi0.values
        report.iterate_norms.append(c4_surrogate(corr))
        if len(report.iterate_norms) > 1 and report.iterate_norms[-2] > floor:
            prev = report.iterate_norms[-2]
            ratio = report.iterate_norms[-1] / prev if prev > 0 else 0.0
            report.ratios.append(ratio)
            if ratio < 1:
                below_one = True
            elif below_one:
                raise NonContractive(f"correction ratio rose to {ratio:.3g} at iterate {k}", report)
        phi = phi.with_values(new)
    raise MaxItersExceeded(f"no convergence to {fp_tol:g} in {max_iters} iterations", report)
