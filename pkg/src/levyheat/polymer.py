"""Exact path sampling from the directed polymer measure on a fixed environment.

The polymer measure weights each time-increasing atom subset S by
beta^|S| prod_{i in S} z_i times the heat-kernel chain through the pinned
atoms (free end), and conditionally on S the path is a concatenation of
Brownian bridges followed by free Brownian motion.  The pinned subset is
drawn exactly by a backward categorical walk on the forward chain
weights; all categorical ratios are formed in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import Environment
from .kernel import log_rho
from .partition import ChainWeights, field, forward_weights, free_end

NEG_INF = -np.inf


def _categorical_from_logw(logw: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index proportional to exp(logw), stably."""
    m = np.max(logw)
    if m == NEG_INF:
        raise ValueError("all categorical weights vanished")
    w = np.exp(logw - m)
    c = np.cumsum(w)
    u = rng.random() * c[-1]
    return int(np.searchsorted(c, u, side="right").clip(0, len(w) - 1))


def sample_pinned_subset(
    weights: ChainWeights, env: Environment, beta: float, horizon: float, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Draw the visited atom subset; returns (ascending atom indices, log P(subset)).

    Backward walk: the last pin is j with probability beta z_j V_j / W
    (empty subset with probability 1/W); given pin j, the previous pin is
    i < j with probability beta z_i V_i rho(t_j - t_i, x_j - x_i) / V_j,
    and the walk stops (leg from the origin) with probability
    rho(t_j, x_j) / V_j.
    """
    if beta == 0.0 or len(weights) == 0:
        return np.empty(0, dtype=np.int64), 0.0
    log_beta = math.log(beta)
    pre = weights.prefix(horizon)
    idx = weights.indices[pre]
    times = env.times[idx]
    xs = env.positions[idx]
    logzv = weights.log_z[pre] + weights.log_v[pre]
    n = len(idx)
    if n == 0:
        return np.empty(0, dtype=np.int64), 0.0

    # last pin or empty subset
    cand = np.concatenate([[0.0], log_beta + logzv])  # slot 0 = empty subset
    logw_total = _logsumexp(cand)
    pick = _categorical_from_logw(cand, rng)
    log_prob = cand[pick] - logw_total
    if pick == 0:
        return np.empty(0, dtype=np.int64), float(log_prob)

    chain = [pick - 1]
    j = pick - 1
    while True:
        legs = log_rho(times[j] - times[:j], xs[j][None, :] - xs[:j], env.dimension) if j else np.empty(0)
        stop = float(log_rho(times[j] - weights.s, xs[j] - weights.x0, env.dimension))
        cand = np.concatenate([[stop], log_beta + logzv[:j] + legs]) - weights.log_v[pre][j]
        pick = _categorical_from_logw(cand, rng)
        log_prob += cand[pick]
        if pick == 0:
            break
        j = pick - 1
        chain.append(j)
    chain.reverse()
    return idx[np.array(chain, dtype=np.int64)], float(log_prob)


def _logsumexp(arr) -> float:
    arr = np.asarray(arr, dtype=float)
    m = float(np.max(arr)) if len(arr) else NEG_INF
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(float(np.sum(np.exp(arr - m))))


@dataclass(frozen=True)
class PolymerPath:
    """One sampled polymer path evaluated on a time grid."""

    pinned: np.ndarray       # ascending env atom indices, possibly empty
    grid: np.ndarray         # (m,) times in [0, T]
    trajectory: np.ndarray   # (m, d)
    log_prob_pins: float     # log-probability of the pinned subset under the sampler


def sample_path(
    env: Environment,
    beta: float,
    horizon: float,
    time_grid,
    rng: np.random.Generator,
    weights: ChainWeights | None = None,
) -> PolymerPath:
    """Pin subset + Brownian bridge interpolation on the grid.

    Bridges fill between consecutive pins (and from the origin to the
    first pin); beyond the last pin the path continues as free Brownian
    motion, matching the free-end weight whose terminal kernel integrates
    to one.
    """
    grid = np.asarray(sorted(float(g) for g in time_grid), dtype=float)
    if len(grid) and (grid[0] < 0.0 or grid[-1] > horizon * (1 + 1e-12)):
        raise ValueError("time grid must lie inside [0, horizon]")
    if weights is None:
        weights = forward_weights(env, beta, 0.0, None)
    pins, log_prob = sample_pinned_subset(weights, env, beta, horizon, rng)

    d = env.dimension
    anchor_t = np.concatenate([[0.0], env.times[pins]])
    anchor_x = np.vstack([np.zeros(d), env.positions[pins]])

    traj = np.empty((len(grid), d))
    cur_t, cur_x = 0.0, np.zeros(d)
    seg = 0  # next anchor to hit
    for k, tau in enumerate(grid):
        # advance past anchors at or before tau
        while seg + 1 < len(anchor_t) and anchor_t[seg + 1] <= tau:
            cur_t, cur_x = anchor_t[seg + 1], anchor_x[seg + 1]
            seg += 1
        if tau <= cur_t:
            traj[k] = cur_x
            continue
        if seg + 1 < len(anchor_t):
            tb, xb = anchor_t[seg + 1], anchor_x[seg + 1]
            frac = (tau - cur_t) / (tb - cur_t)
            mean = cur_x + frac * (xb - cur_x)
            var = (tau - cur_t) * (tb - tau) / (tb - cur_t)
            cur_x = mean + math.sqrt(max(var, 0.0)) * rng.standard_normal(d)
        else:
            cur_x = cur_x + math.sqrt(tau - cur_t) * rng.standard_normal(d)
        cur_t = tau
        traj[k] = cur_x
    return PolymerPath(pinned=pins, grid=grid, trajectory=traj, log_prob_pins=log_prob)


@dataclass(frozen=True)
class EndpointDensity:
    """Discrete endpoint density Z(t,x) / Z(t,*) on a regular grid."""

    grid: np.ndarray          # (m, d) points
    density: np.ndarray       # (m,) values, integrates to ~1 against cell_volume
    cell_volume: float
    t: float
    beta: float

    def mass(self) -> float:
        return float(np.sum(self.density) * self.cell_volume)


def endpoint_measure(
    env: Environment,
    beta: float,
    t: float,
    grid,
    cell_volume: float,
    weights: ChainWeights | None = None,
    coverage_tol: float = 1e-4,
) -> EndpointDensity:
    """Normalized field values on a grid; the grid must capture the mass.

    Raises if the discretized mass differs from 1 by more than
    coverage_tol (insufficient grid coverage or spacing).
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if weights is None:
        weights = forward_weights(env, beta, 0.0, None)
    vals = field(env, beta, t, grid, weights=weights)
    log_num = np.array([v.log_value for v in vals])
    log_den = free_end(env, beta, t, weights=weights).log_value
    density = np.exp(log_num - log_den)
    out = EndpointDensity(grid=grid, density=density, cell_volume=cell_volume, t=t, beta=beta)
    if abs(out.mass() - 1.0) > coverage_tol:
        raise ValueError(
            f"endpoint grid captures mass {out.mass():.6f}; refine or widen the grid"
        )
    return out


def localization_statistic(density: EndpointDensity, k: int, radius: float) -> float:
    """Greedy mass captured by k balls of the given radius centered on grid points.

    A lower bound on max_{z_1..z_k} P(union of B(z_i, R)); greedy because
    the maximum over continuum centers is not computable.
    """
    if k <= 0:
        return 0.0
    pts = density.grid
    mass = density.density * density.cell_volume
    remaining = mass.copy()
    # pairwise ball membership: column j = points covered by a ball at point j
    diff = pts[:, None, :] - pts[None, :, :]
    cover = np.sqrt(np.sum(diff * diff, axis=-1)) <= radius
    captured = 0.0
    for _ in range(min(k, len(pts))):
        gains = cover.T @ remaining
        best = int(np.argmax(gains))
        captured += float(gains[best])
        remaining[cover[:, best]] = 0.0
        if not remaining.any():
            break
    return captured
