"""Independent closed-form references used by the tests."""
from functools import lru_cache

import mpmath as mp
import numpy as np
from scipy.special import ive, k0, k1

EULER_GAMMA = 0.5772156649015329


@lru_cache(maxsize=None)
def _log_ratio(nmax):
    # ln( -K_n'(1) / I_n'(1) ), exact in extended precision
    out = np.empty(nmax + 1)
    for n in range(nmax + 1):
        dk = -0.5 * (mp.besselk(n - 1, 1) + mp.besselk(n + 1, 1))
        di = 0.5 * (mp.besseli(n - 1, 1) + mp.besseli(n + 1, 1))
        out[n] = float(mp.re(mp.log(-dk / di)))
    return out


def _log_In(n, x):
    x = np.asarray(x, float)
    with np.errstate(divide="ignore"):
        return np.log(ive(n, x)) + x


def disk_regular(x, zeta, nmax=300):
    """H(x, zeta) + 4 ln|x - zeta| ... i.e. G + 4 ln|x - zeta| for a = 1 on the unit
    disk, with G normalized by 8 pi delta (4 K0 plus a Bessel series)."""
    x = np.atleast_2d(np.asarray(x, float))
    zeta = np.asarray(zeta, float)
    rho = np.hypot(*zeta)
    th0 = np.arctan2(zeta[1], zeta[0])
    r = np.hypot(x[:, 0], x[:, 1])
    th = np.arctan2(x[:, 1], x[:, 0])
    n = np.arange(nmax + 1)
    eps = np.where(n == 0, 1.0, 2.0)
    lc = _log_ratio(nmax) + _log_In(n, rho)
    terms = np.exp(lc[None, :] + _log_In(n[None, :], r[:, None]))
    series = np.sum(eps * terms * np.cos(n[None, :] * (th - th0)[:, None]), 1)
    dist = np.linalg.norm(x - zeta, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sing = 4.0 * k0(dist) + 4.0 * np.log(dist)
    sing = np.where(dist > 0, sing, 4.0 * (np.log(2.0) - EULER_GAMMA))
    return sing + 4.0 * series


def disk_green(x, zeta, nmax=300):
    x = np.atleast_2d(np.asarray(x, float))
    return disk_regular(x, zeta, nmax) - 4.0 * np.log(np.linalg.norm(x - np.asarray(zeta), axis=1))


def disk_robin(rho, nmax=300):
    """H(zeta, zeta) for a = 1 on the unit disk, |zeta| = rho."""
    return float(disk_regular(np.array([[rho, 0.0]]), (rho, 0.0), nmax)[0])


def kernel_profile(r):
    """Exact radial profile K1(r) - 1/r."""
    return k1(r) - 1.0 / r
