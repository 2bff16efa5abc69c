"""Heat-kernel algebra: chain densities, power-scaling identity, simplex integrals.

Everything is evaluated in log scale; products of thousands of Gaussian
factors underflow doubles long before they stop mattering.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

LOG_2PI = math.log(2.0 * math.pi)


def log_rho(t, x, dimension: int):
    """log of the d-dimensional heat kernel (2 pi t)^{-d/2} exp(-|x|^2 / 2t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("heat kernel needs t > 0")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        if dimension != 1:
            raise ValueError("scalar x only valid in dimension 1")
        sq = x * x
    else:
        if x.shape[-1] != dimension:
            raise ValueError(f"x has last dimension {x.shape[-1]}, expected {dimension}")
        sq = np.sum(x * x, axis=-1)
    return -0.5 * dimension * (LOG_2PI + np.log(t)) - sq / (2.0 * t)


def rho(t, x, dimension: int):
    """The d-dimensional heat kernel itself."""
    return np.exp(log_rho(t, x, dimension))


def nu(p: float, dimension: int) -> float:
    """nu_p = 1 - (d/2)(p - 1); p = 1 + 2/d is the critical moment order."""
    return 1.0 - 0.5 * dimension * (p - 1.0)


def critical_p(dimension: int) -> float:
    return 1.0 + 2.0 / dimension


def theta(p: float, dimension: int) -> float:
    """Prefactor in the p-th power scaling of the kernel: (2 pi)^{nu_p - 1} p^{-d/2}."""
    return (2.0 * math.pi) ** (nu(p, dimension) - 1.0) * p ** (-0.5 * dimension)


def rho_power_identity(p: float, t: float, x, dimension: int):
    """Both sides of rho(t,x)^p = t^{nu_p - 1} theta(p) rho(t/p, x); a kernel self-test."""
    if t <= 0.0 or p <= 0.0:
        raise ValueError("need t > 0 and p > 0")
    lhs = rho(t, x, dimension) ** p
    rhs = t ** (nu(p, dimension) - 1.0) * theta(p, dimension) * rho(t / p, x, dimension)
    return lhs, rhs


def log_chain_density(s: float, x0, t: float, y, times, points, dimension: int) -> float:
    """log prod_i rho(dt_i, dx_i) through intermediate (times, points).

    Conventions: t_0 = s, x_0 = x0, t_{k+1} = t, x_{k+1} = y; `times` must be
    strictly increasing inside (s, t).
    """
    times = np.asarray(times, dtype=float)
    k = len(times)
    pts = np.asarray(points, dtype=float).reshape(k, dimension)
    x0 = np.asarray(x0, dtype=float).reshape(dimension)
    y = np.asarray(y, dtype=float).reshape(dimension)
    all_t = np.concatenate([[s], times, [t]])
    if np.any(np.diff(all_t) <= 0.0):
        raise ValueError("chain times must satisfy s < t_1 < ... < t_k < t")
    all_x = np.vstack([x0[None, :], pts, y[None, :]])
    dts = np.diff(all_t)
    dxs = np.diff(all_x, axis=0)
    return float(np.sum(log_rho(dts, dxs, dimension)))


def dirichlet_simplex_integral(zetas, t: float) -> float:
    """int over {0 < t_1 < ... < t_k < t} of prod (dt_i)^{zeta_i - 1}.

    Equals t^{sum(zeta) - 1} prod Gamma(zeta_i) / Gamma(sum(zeta)); evaluated
    through log-Gamma so large arguments neither overflow nor lose digits.
    The k = 0 convention gives t^{zeta_1 - 1}.
    """
    zetas = np.asarray(zetas, dtype=float)
    if np.any(zetas <= 0.0):
        raise ValueError("all exponents zeta_i must be positive")
    if t <= 0.0:
        raise ValueError("need t > 0")
    total = float(np.sum(zetas))
    log_val = (total - 1.0) * math.log(t) + float(np.sum(gammaln(zetas))) - gammaln(total)
    return math.exp(log_val)


def gamma_series(alpha: float, delta: float, gamma_exp: float, x: float) -> float:
    """sum_{m>=0} x^m / Gamma(alpha m + delta)^gamma_exp.

    Terms decay super-exponentially; summation stops once a term falls
    below 1e-16 of the running total (past the term-ratio peak).
    """
    if alpha <= 0.0 or delta <= 0.0 or gamma_exp <= 0.0:
        raise ValueError("need alpha, delta, gamma_exp > 0")
    if x < 0.0:
        raise ValueError("series is only used for x >= 0")
    if x == 0.0:
        return math.exp(-gamma_exp * gammaln(delta))
    log_x = math.log(x)
    total = 0.0
    m = 0
    while True:
        log_term = m * log_x - gamma_exp * gammaln(alpha * m + delta)
        term = math.exp(log_term)
        total += term
        # past the peak the ratio term_{m+1}/term_m < 1 and keeps shrinking
        log_next = (m + 1) * log_x - gamma_exp * gammaln(alpha * (m + 1) + delta)
        if log_next < log_term and term < 1e-16 * total:
            return total
        m += 1
        if m > 100_000:
            raise RuntimeError("gamma_series failed to converge (x too large?)")
