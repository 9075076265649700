"""Exponential-integrator coefficients phi_1, phi_2 evaluated without cancellation."""
import numpy as np

_SMALL = 1e-2


def phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(exp(z), phi1(z), phi2(z))`` for real ``z <= 0``.

    ``phi1 = (e^z - 1)/z`` and ``phi2 = (e^z - 1 - z)/z^2``; a Taylor series
    is used for ``|z| < 1e-2``.
    """
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _SMALL
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    p1 = em1 / zs
    p2 = (em1 - zs) / zs**2
    # Horner form of sum z^k/(k+1)! and sum z^k/(k+2)!
    s1 = np.zeros_like(z)
    s2 = np.zeros_like(z)
    for k in range(8, -1, -1):
        s1 = s1 * z + 1.0 / _fact(k + 1)
        s2 = s2 * z + 1.0 / _fact(k + 2)
    return np.exp(z), np.where(small, s1, p1), np.where(small, s2, p2)


def _fact(k):
    out = 1.0
    for i in range(2, k + 1):
        out *= i
    return out
