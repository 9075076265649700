"""Discrete parabolic Hölder norms, weighted norms and decay-rate fits.

Hölder seminorms are estimated from below by maximizing difference
quotients over a deterministic pair set: every nearest-neighbour pair in
space (at every time), every adjacent pair in time (at every point), and
``pair_budget`` random pairs drawn in fixed-size seeded chunks, so a larger
budget always contains the pairs of a smaller one.

For ``k = 4`` the norm is realized as

    sum_{|p|<=4} sup|D^p u| + sup|u_t| + [D^4 u]_space + [D^4 u]_time + [u_t]_space + [u_t]_time

with space exponent ``gamma`` and time exponent ``gamma / 4``; ``k = 0`` is
``sup|u| + [u]_space + [u]_time``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InsufficientData
from .geometry import KahlerPotential, TorusGrid, integrate_measure
from .spacetime import SpaceTimeField

CHUNK = 1024
MAX_EXPONENT = 700.0


@dataclass
class HolderReport:
    sup_terms: dict
    space_seminorm: float
    time_seminorm: float
    total: float
    gamma: float
    pair_budget: int
    k: int = 0
    space_terms: dict = field(default_factory=dict)
    time_terms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "gamma": self.gamma,
            "pair_budget": self.pair_budget,
            "sup_terms": self.sup_terms,
            "space_terms": self.space_terms,
            "time_terms": self.time_terms,
            "space_seminorm": self.space_seminorm,
            "time_seminorm": self.time_seminorm,
            "total": self.total,
        }


@dataclass
class RateFit:
    eta: float
    window: tuple
    r_squared: float
    norm_kind: str = "sup"
    n_samples: int = 0
    intercept: float = 0.0

    @property
    def decaying(self) -> bool:
        return self.eta > 0


# -- spatial norms ---------------------------------------------------------
def multi_indices(order: int):
    return [(a, m - a) for m in range(order + 1) for a in range(m, -1, -1)]


def c4_norm(grid: TorusGrid, u: np.ndarray) -> float:
    """Discrete ``C^4`` norm ``sum_{|p|<=4} sup |D^p u|`` by spectral derivatives."""
    return float(sum(np.max(np.abs(grid.derivative(u, a, b))) for a, b in multi_indices(4)))


def c4_surrogate(u: SpaceTimeField) -> float:
    """Max over the slab of ``|u_t|`` and of ``|D^p u|``, ``|p| <= 4``."""
    grid = u.grid
    best = 0.0
    if u.nt >= 3:
        best = float(np.max(np.abs(u.time_derivative())))
    for a, b in multi_indices(4):
        best = max(best, float(np.max(np.abs(grid.derivative(u.values, a, b)))))
    return best


def l2_norm_measure(u, phi: KahlerPotential) -> float:
    """``L^2(omega_phi)`` norm."""
    u = np.asarray(u, dtype=float)
    return math.sqrt(max(integrate_measure(u * u, phi), 0.0))


# -- pair sets -------------------------------------------------------------
def _random_pairs(nt: int, n: int, budget: int, seed: int) -> np.ndarray:
    """Rows ``(t1, iy1, ix1, t2, iy2, ix2)``; prefix-stable in ``budget``."""
    if budget <= 0:
        return np.zeros((0, 6), dtype=np.int64)
    chunks = []
    for c in range(-(-budget // CHUNK)):
        rng = np.random.default_rng([seed, c])
        chunks.append(rng.integers(0, [nt, n, n, nt, n, n], size=(CHUNK, 6)))
    return np.concatenate(chunks)[:budget]


def _torus_dist(grid: TorusGrid, di: np.ndarray) -> np.ndarray:
    di = np.abs(di) % grid.n
    return np.minimum(di, grid.n - di) * grid.spacing


def _space_seminorm(grid: TorusGrid, vals: np.ndarray, pairs: np.ndarray, alpha: float) -> float:
    h = grid.spacing
    best = 0.0
    for axis in (-1, -2):
        d = np.abs(vals - np.roll(vals, -1, axis=axis))
        best = max(best, float(d.max()) / h**alpha)
    if len(pairs):
        t, y1, x1, y2, x2 = pairs[:, 0], pairs[:, 1], pairs[:, 2], pairs[:, 4], pairs[:, 5]
        dist = np.hypot(_torus_dist(grid, y1 - y2), _torus_dist(grid, x1 - x2))
        ok = dist > 0
        if np.any(ok):
            q = np.abs(vals[t, y1, x1] - vals[t, y2, x2])[ok] / dist[ok] ** alpha
            best = max(best, float(q.max()))
    return best


def _time_seminorm(times: np.ndarray, vals: np.ndarray, pairs: np.ndarray, beta: float) -> float:
    if len(times) < 2:
        return 0.0
    dt = np.diff(times)[:, None, None]
    best = float((np.abs(np.diff(vals, axis=0)) / dt**beta).max())
    if len(pairs):
        t1, y, x, t2 = pairs[:, 0], pairs[:, 1], pairs[:, 2], pairs[:, 3]
        ok = t1 != t2
        if np.any(ok):
            q = np.abs(vals[t1, y, x] - vals[t2, y, x])[ok] / np.abs(times[t1] - times[t2])[ok] ** beta
            best = max(best, float(q.max()))
    return best


def parabolic_holder_norm(u: SpaceTimeField, k: int = 0, gamma: float = 0.5,
                          pair_budget: int = 4096, seed: int = 0) -> HolderReport:
    """Lower-bound estimate of the parabolic ``C^{k,[k/4],gamma}`` norm of ``u``."""
    if k not in (0, 4):
        raise DomainError(f"only k in {{0, 4}} is supported, got {k}")
    if not 0 < gamma < 1:
        raise DomainError("gamma must lie in (0, 1)")
    grid = u.grid
    pairs = _random_pairs(u.nt, grid.n, pair_budget, seed)
    beta = gamma / 4.0
    sup_terms: dict = {}
    space_terms: dict = {}
    time_terms: dict = {}
    if k == 0:
        sup_terms["u"] = float(np.max(np.abs(u.values)))
        holder_fields = {"u": u.values}
    else:
        for a, b in multi_indices(4):
            sup_terms[f"d{a}{b}"] = float(np.max(np.abs(grid.derivative(u.values, a, b))))
        ut = u.time_derivative()
        sup_terms["dt"] = float(np.max(np.abs(ut)))
        holder_fields = {f"d{a}{b}": grid.derivative(u.values, a, b) for a, b in multi_indices(4) if a + b == 4}
        holder_fields["dt"] = ut
    for name, vals in holder_fields.items():
        space_terms[name] = _space_seminorm(grid, vals, pairs, gamma)
        time_terms[name] = _time_seminorm(u.times, vals, pairs, beta)
    space = float(sum(space_terms.values()))
    time = float(sum(time_terms.values()))
    total = float(sum(sup_terms.values())) + space + time
    return HolderReport(sup_terms, space, time, total, gamma, pair_budget, k, space_terms, time_terms)


def weighted_norm(u: SpaceTimeField, eta: float, k: int = 0, gamma: float = 0.5,
                  pair_budget: int = 4096, seed: int = 0) -> HolderReport:
    """Parabolic Hölder norm of ``exp(eta t) u``."""
    if eta < 0:
        raise DomainError("eta must be non-negative")
    if eta == 0:
        return parabolic_holder_norm(u, k, gamma, pair_budget, seed)
    if eta * float(np.max(np.abs(u.times))) > MAX_EXPONENT:
        raise DomainError(f"eta * T exceeds {MAX_EXPONENT}; weight would overflow")
    weighted = u.with_values(np.exp(eta * u.times)[:, None, None] * u.values)
    return parabolic_holder_norm(weighted, k, gamma, pair_budget, seed)


def scaling_check(u: SpaceTimeField, s: float, gamma: float = 0.5, k: int = 0,
                  pair_budget: int = 1024, seed: int = 0, slack: float = 1e-12):
    """Compare the norm of ``u`` with that of ``w(x, tau) = u(x, tau / s)``.

    Returns ``(lhs, mid, rhs, passed)`` where ``lhs = |u|``, ``mid = |w|`` and
    ``rhs = s^{-1-gamma/4} |u|`` for ``k = 4`` or ``s^{-gamma/4} |u|`` for ``k = 0``.
    """
    if not 0 < s <= 1:
        raise DomainError("s must lie in (0, 1]")
    w = SpaceTimeField(u.grid, u.times * s, u.values)
    lhs = parabolic_holder_norm(u, k, gamma, pair_budget, seed).total
    mid = parabolic_holder_norm(w, k, gamma, pair_budget, seed).total
    power = (1.0 + gamma / 4.0) if k == 4 else gamma / 4.0
    rhs = s ** (-power) * lhs
    passed = lhs <= mid * (1 + slack) and mid <= rhs * (1 + slack)
    return lhs, mid, rhs, bool(passed)


# -- decay rates -----------------------------------------------------------
def _series(trace_or_series, norm_kind):
    if hasattr(trace_or_series, "column"):
        return trace_or_series.column("t"), trace_or_series.column(norm_kind)
    t, y = trace_or_series
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


ROUNDOFF_CUT = 1e-12


def fit_decay_rate(trace_or_series, window="auto", norm_kind: str = "sup",
                   floor: float = 0.0, min_samples: int = 10) -> RateFit:
    """Least-squares fit of ``log norm = c - eta t``.

    ``window="auto"`` drops the first 20% of samples or everything before the
    norm first halves, whichever is later, and stops at the first sample below
    ``1e-12`` of the peak (the roundoff plateau).  An explicit ``(t_a, t_b)`` window
    is also accepted.  Samples at or below ``floor`` are discarded.
    """
    t, y = _series(trace_or_series, norm_kind)
    if window == "auto":
        start = int(math.ceil(0.2 * len(t)))
        if len(y) and y[0] > 0:
            halved = np.nonzero(y <= 0.5 * y[0])[0]
            if len(halved):
                start = max(start, int(halved[0]))
            else:
                start = len(y)
        keep = np.zeros(len(t), dtype=bool)
        keep[start:] = True
        if len(y):
            flat = np.nonzero(y <= ROUNDOFF_CUT * np.nanmax(y))[0]
            if len(flat):
                keep[flat[0]:] = False
    else:
        ta, tb = window
        keep = (t >= ta) & (t <= tb)
    keep &= y > floor
    keep &= np.isfinite(y)
    if keep.sum() < min_samples:
        raise InsufficientData(f"only {int(keep.sum())} usable samples, need {min_samples}")
    tt, ly = t[keep], np.log(y[keep])
    slope, intercept = np.polyfit(tt, ly, 1)
    pred = intercept + slope * tt
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(-slope), (float(tt[0]), float(tt[-1])), float(min(max(r2, 0.0), 1.0)),
                   norm_kind, int(keep.sum()), float(intercept))
