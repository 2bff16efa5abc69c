"""Exact partition functions on a fixed truncated environment.

For an atomic environment the chaos series is a finite sum over
time-increasing atom subsets; the O(N^2) forward recursion evaluates it
exactly.  The small-jump compensator enters as the explicit prefactor
exp(-beta kappa_a (t - s)); the only approximation relative to the
full-space object is the spatial sampling box, controlled by the
box_convergence diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import _dp
from .environment import Environment
from .kernel import log_rho

NEG_INF = -np.inf


class PartitionKind(str, Enum):
    POINT_TO_POINT = "point_to_point"
    FREE_END = "free_end"


@dataclass(frozen=True)
class PartitionValue:
    """A positive partition value stored in log scale."""

    log_value: float
    kind: PartitionKind
    s: float
    t: float
    x0: tuple[float, ...]
    y: tuple[float, ...] | None
    beta: float
    compensator_exponent: float  # -beta * kappa_a * (t - s), already applied

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


@dataclass(frozen=True)
class ChainWeights:
    """Per-atom forward log-weights log V_j for a fixed start point (s, x0)."""

    env: Environment
    beta: float
    s: float
    x0: np.ndarray
    indices: np.ndarray   # indices into env atoms with t > s
    log_v: np.ndarray
    log_z: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def prefix(self, t: float) -> slice:
        """Slice selecting atoms strictly before time t."""
        n = int(np.searchsorted(self.env.times[self.indices], t, side="left"))
        return slice(0, n)


def _as_point(x, dimension: int) -> np.ndarray:
    if x is None:
        return np.zeros(dimension)
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.size == 1 and dimension == 1:
        return arr
    if arr.size != dimension:
        raise ValueError(f"point has {arr.size} coordinates, expected {dimension}")
    return arr


def forward_weights(env: Environment, beta: float, s: float = 0.0, x0=None) -> ChainWeights:
    """Run the forward recursion over all atoms with t > s."""
    x0 = _as_point(x0, env.dimension)
    keep = np.where(env.times > s)[0]
    times = env.times[keep]
    xs = env.positions[keep]
    logz = np.log(env.jumps[keep]) if len(keep) else np.empty(0)
    log_v = _dp.forward_logv(times, xs, logz, beta, s, x0)
    return ChainWeights(env=env, beta=beta, s=s, x0=x0, indices=keep, log_v=log_v, log_z=logz)


def _compensator_exponent(env: Environment, beta: float, duration: float) -> float:
    return -beta * env.measure.compensator(env.truncation_a) * duration


def _check_horizon(env: Environment, s: float, t: float) -> None:
    if t <= s:
        raise ValueError(f"need t > s, got s={s}, t={t}")
    if t > env.window.horizon * (1.0 + 1e-12):
        raise ValueError(f"t={t} beyond environment horizon {env.window.horizon}")


def point_to_point(
    env: Environment,
    beta: float,
    t: float,
    y,
    s: float = 0.0,
    x0=None,
    weights: ChainWeights | None = None,
) -> PartitionValue:
    """Z(s, x0; t, y) = e^{-beta kappa_a (t-s)} [rho + beta sum_j z_j V_j rho(t - t_j, y - x_j)]."""
    _check_horizon(env, s, t)
    y = _as_point(y, env.dimension)
    if weights is None:
        weights = forward_weights(env, beta, s, x0)
    x0 = weights.x0
    pre = weights.prefix(t)
    idx = weights.indices[pre]
    logw = _dp.point_logw(
        env.times[idx], env.positions[idx], weights.log_z[pre], weights.log_v[pre],
        beta, s, x0, t, y,
    )
    comp = _compensator_exponent(env, beta, t - s)
    return PartitionValue(
        log_value=logw + comp, kind=PartitionKind.POINT_TO_POINT,
        s=s, t=t, x0=tuple(x0), y=tuple(y), beta=beta, compensator_exponent=comp,
    )


def free_end(
    env: Environment,
    beta: float,
    t: float,
    s: float = 0.0,
    x0=None,
    weights: ChainWeights | None = None,
) -> PartitionValue:
    """Z(s, x0; t, *) = e^{-beta kappa_a (t-s)} [1 + beta sum_j z_j V_j]."""
    _check_horizon(env, s, t)
    if weights is None:
        weights = forward_weights(env, beta, s, x0)
    pre = weights.prefix(t)
    idx = weights.indices[pre]
    logw = _dp.free_end_logw(env.times[idx], weights.log_z[pre], weights.log_v[pre], beta)
    comp = _compensator_exponent(env, beta, t - s)
    return PartitionValue(
        log_value=logw + comp, kind=PartitionKind.FREE_END,
        s=s, t=t, x0=tuple(weights.x0), y=None, beta=beta, compensator_exponent=comp,
    )


def normalized(value: PartitionValue, mu: float) -> PartitionValue:
    """Multiply by e^{-beta mu (t - s)}; mu = mu_{1,infty}(1) must be finite.

    The normalized free-end value has unit mean over environments; the
    normalized point-to-point value has mean rho(t - s, y - x0).
    """
    if not np.isfinite(mu):
        raise ValueError("normalization requires a finite first moment mu")
    shift = -value.beta * mu * (value.t - value.s)
    return PartitionValue(
        log_value=value.log_value + shift, kind=value.kind,
        s=value.s, t=value.t, x0=value.x0, y=value.y, beta=value.beta,
        compensator_exponent=value.compensator_exponent,
    )


def field(
    env: Environment,
    beta: float,
    t: float,
    grid,
    s: float = 0.0,
    x0=None,
    weights: ChainWeights | None = None,
) -> list[PartitionValue]:
    """Point-to-point values on a grid of endpoints, reusing one forward pass."""
    _check_horizon(env, s, t)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != env.dimension:
        raise ValueError(f"grid points have dimension {grid.shape[1]}, expected {env.dimension}")
    if weights is None:
        weights = forward_weights(env, beta, s, x0)
    x0 = weights.x0
    pre = weights.prefix(t)
    idx = weights.indices[pre]
    comp = _compensator_exponent(env, beta, t - s)
    times = env.times[idx]
    xs = env.positions[idx]
    # direct leg from the start plus one terminal leg per atom, vectorized over the grid
    log_direct = log_rho(t - s, grid - x0[None, :], env.dimension)
    out = []
    log_beta = math.log(beta) if beta > 0.0 else NEG_INF
    if len(idx):
        base = log_beta + weights.log_z[pre] + weights.log_v[pre]  # (n,)
        dts = t - times
        for g in range(grid.shape[0]):
            legs = log_rho(dts, grid[g][None, :] - xs, env.dimension)
            logw = np.logaddexp(log_direct[g], _logsumexp(base + legs))
            out.append(
                PartitionValue(
                    log_value=float(logw) + comp, kind=PartitionKind.POINT_TO_POINT,
                    s=s, t=t, x0=tuple(x0), y=tuple(grid[g]), beta=beta,
                    compensator_exponent=comp,
                )
            )
    else:
        for g in range(grid.shape[0]):
            out.append(
                PartitionValue(
                    log_value=float(log_direct[g]) + comp, kind=PartitionKind.POINT_TO_POINT,
                    s=s, t=t, x0=tuple(x0), y=tuple(grid[g]), beta=beta,
                    compensator_exponent=comp,
                )
            )
    return out


def _logsumexp(arr: np.ndarray) -> float:
    if len(arr) == 0:
        return NEG_INF
    m = float(np.max(arr))
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(float(np.sum(np.exp(arr - m))))


def brute_force_partition(
    env: Environment,
    beta: float,
    t: float,
    y=None,
    s: float = 0.0,
    x0=None,
    max_atoms: int = 20,
) -> float:
    """Chaos series by exhaustive enumeration of time-increasing atom subsets.

    Independent oracle for the dynamic program: sums beta^|S| prod z_i
    times the heat-kernel chain over every subset S (2^N of them), then
    applies the compensator prefactor.  y=None gives the free-end value.
    """
    _check_horizon(env, s, t)
    x0 = _as_point(x0, env.dimension)
    keep = np.where((env.times > s) & (env.times < t))[0]
    n = len(keep)
    if n > max_atoms:
        raise ValueError(f"{n} atoms exceed the 2^N enumeration budget ({max_atoms})")
    times = env.times[keep]
    xs = env.positions[keep]
    zs = env.jumps[keep]
    free = y is None
    y_arr = x0 if free else _as_point(y, env.dimension)

    # precompute every kernel leg; the enumeration itself is pure arithmetic
    k0 = beta * zs * np.exp(log_rho(times - s, xs - x0[None, :], env.dimension)) if n else np.empty(0)
    kmat = np.zeros((n, n))
    for i in range(n):
        if i + 1 < n:
            kmat[i, i + 1 :] = beta * zs[i + 1 :] * np.exp(
                log_rho(times[i + 1 :] - times[i], xs[i + 1 :] - xs[i], env.dimension)
            )
    term = np.exp(log_rho(t - times, y_arr[None, :] - xs, env.dimension)) if n else np.empty(0)
    t0term = math.exp(float(log_rho(t - s, y_arr - x0, env.dimension)))

    free_total, point_total = _dp.brute_enumerate(k0, kmat, term, t0term)
    comp = _compensator_exponent(env, beta, t - s)
    return (free_total if free else point_total) * math.exp(comp)


def backward_weights(env: Environment, beta: float, t: float, x):
    """Time-reversed chain weights toward the terminal point (t, x).

    V-bar_j = rho(t - t_j, x - x_j) + beta sum_{i: t_i > t_j} z_i V-bar_i rho(t_i - t_j, x_i - x_j),
    computed by running the forward recursion on the time-reflected,
    recentered atom cloud.  Returns (atom_indices, log_vbar, log_z) in the
    reflected (descending original time) order.
    """
    x = _as_point(x, env.dimension)
    keep = np.where(env.times < t)[0]
    rev = keep[::-1]
    times = t - env.times[rev]
    xs = env.positions[rev] - x[None, :]
    logz = np.log(env.jumps[rev]) if len(rev) else np.empty(0)
    log_vbar = _dp.forward_logv(times, xs, logz, beta, 0.0, np.zeros(env.dimension))
    return rev, log_vbar, logz


def mild_residual_free_end(
    env: Environment, beta: float, t: float, quadrature_points: int = 4096
) -> float:
    """Residual of the space-integrated mild equation.

    Computes |Z(t,*) - 1 - beta sum_{t_j < t} z_j Z(t_j, x_j)
    + beta kappa_a int_0^t Z(s,*) ds| with the time integral by composite
    Gauss-Legendre between consecutive atom times (Z(s,*) is smooth there
    and jumps exactly at atoms).  Vanishes up to quadrature error.
    """
    _check_horizon(env, 0.0, t)
    weights = forward_weights(env, beta, 0.0, None)
    pre = weights.prefix(t)
    idx = weights.indices[pre]
    times = env.times[idx]
    kappa = env.measure.compensator(env.truncation_a)

    z_total = free_end(env, beta, t, weights=weights).value
    # sum of z_j Z(t_j, x_j): Z at an atom excludes the atom itself, so it is
    # exactly e^{-beta kappa_a t_j} V_j
    log_terms = weights.log_z[pre] + weights.log_v[pre] - beta * kappa * times
    atom_sum = float(np.sum(np.exp(log_terms)))

    # prefix free-end values: W(s) = 1 + beta sum_{t_j < s} z_j V_j is piecewise constant
    log_beta = math.log(beta) if beta > 0.0 else NEG_INF
    incr = np.exp(log_beta + weights.log_z[pre] + weights.log_v[pre])
    w_steps = 1.0 + np.concatenate([[0.0], np.cumsum(incr)])  # W on each inter-atom segment

    edges = np.concatenate([[0.0], times, [t]])
    n_seg = len(edges) - 1
    order = max(2, int(quadrature_points) // max(n_seg, 1))
    nodes, wq = leggauss(order)
    integral = 0.0
    for k in range(n_seg):
        lo, hi = edges[k], edges[k + 1]
        if hi <= lo:
            continue
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        sq = mid + half * nodes
        integral += half * float(np.sum(wq * np.exp(-beta * kappa * sq))) * w_steps[k]
    return abs(z_total - 1.0 - beta * atom_sum + beta * kappa * integral)
