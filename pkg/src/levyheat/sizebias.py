"""Size-biased environments: Poisson spine on a Brownian path.

Reweighting the environment law by the normalized free-end partition
value is equivalent to superposing an independent Poisson cloud whose
(time, jump) pairs have intensity beta z dt lambda(dz) and whose spatial
positions ride a Brownian trajectory started at the origin.  This module
samples that spine, merges it into environments, and checks the
reweighting identity by Monte Carlo from both sides.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .environment import (
    Environment,
    Window,
    default_box_halfwidth,
    replica_rng,
    sample_environment,
)
from .measures import LevyMeasure
from .moments import sample_log_zbar

INF = float("inf")


@dataclass(frozen=True)
class SpineRealization:
    """Spine atoms (tau_i, B_tau_i, zeta_i) on [0, T] with zeta >= a."""

    times: np.ndarray       # (M,) increasing
    positions: np.ndarray   # (M, d) Brownian path evaluated at the times
    jumps: np.ndarray       # (M,), size-biased law
    dimension: int
    horizon: float
    truncation_a: float
    beta: float

    def __len__(self) -> int:
        return len(self.times)


def sample_spine(
    measure: LevyMeasure,
    dimension: int,
    beta: float,
    a: float,
    horizon: float,
    rng: np.random.Generator,
) -> SpineRealization:
    """Draw the spine: count ~ Poisson(beta mu_{a,inf}(1) T), jumps z-weighted,
    positions from one Brownian path via sequential Gaussian increments."""
    intensity = beta * measure.partial_moment(a, INF, 1.0)
    if not np.isfinite(intensity):
        raise ValueError("spine intensity beta*mu_{a,inf}(1) must be finite")
    m = int(rng.poisson(intensity * horizon)) if intensity > 0.0 else 0
    if m == 0:
        return SpineRealization(
            times=np.empty(0), positions=np.empty((0, dimension)), jumps=np.empty(0),
            dimension=dimension, horizon=horizon, truncation_a=a, beta=beta,
        )
    taus = np.sort(rng.random(m) * horizon)
    dts = np.diff(np.concatenate([[0.0], taus]))
    steps = rng.standard_normal((m, dimension)) * np.sqrt(dts)[:, None]
    positions = np.cumsum(steps, axis=0)
    zetas = np.asarray(measure.sample_size_biased(a, INF, rng, size=m), dtype=float)
    return SpineRealization(
        times=taus, positions=positions, jumps=zetas,
        dimension=dimension, horizon=horizon, truncation_a=a, beta=beta,
    )


def merge_environment(env: Environment, spine: SpineRealization) -> Environment:
    """Union cloud omega-hat = omega U omega-tilde, re-sorted by time.

    The window box is widened if the Brownian path exits it; the merged
    cloud is bookkeeping for functional evaluation, not a Poisson sample
    of the original law.
    """
    if spine.dimension != env.dimension:
        raise ValueError("spine and environment dimensions differ")
    if len(spine) == 0:
        return env
    all_t = np.concatenate([env.times, spine.times])
    order = np.argsort(all_t, kind="stable")
    times = all_t[order]
    while len(times) > 1 and np.any(np.diff(times) <= 0.0):
        idx = np.where(np.diff(times) <= 0.0)[0] + 1
        times = times.copy()
        times[idx] = np.nextafter(times[idx - 1], INF)
    positions = np.concatenate([env.positions, spine.positions])[order]
    jumps = np.concatenate([env.jumps, spine.jumps])[order]
    halfwidth = max(env.window.box_halfwidth, float(np.abs(positions).max()) * (1.0 + 1e-12))
    return Environment(
        times=times, positions=positions, jumps=jumps,
        dimension=env.dimension,
        window=Window(env.window.horizon, halfwidth, env.window.center),
        truncation_a=min(env.truncation_a, spine.truncation_a),
        measure=env.measure, seed=None,
    )


@dataclass(frozen=True)
class OneBodyStatistic:
    """Atom count in [0,T] x {||x||_inf <= R sqrt(T)} x [a_z, b_z) with its exact moments."""

    count: int
    mean_analytic: float
    var_analytic: float
    box_halfwidth: float
    jump_lo: float
    jump_hi: float
    horizon: float


def one_body_count(cloud, box_radius: float, horizon: float, jump_lo: float, jump_hi: float) -> int:
    """f = #{atoms: t in (0,T), ||x||_inf <= R sqrt(T), z in [a_z, b_z)}."""
    r = box_radius * math.sqrt(horizon)
    if len(cloud.times) == 0:
        return 0
    inside = (
        (cloud.times > 0.0)
        & (cloud.times < horizon)
        & (np.max(np.abs(cloud.positions), axis=1) <= r)
        & (cloud.jumps >= jump_lo)
        & (cloud.jumps < jump_hi)
    )
    return int(np.count_nonzero(inside))


def one_body_counts(
    env: Environment, box_radius: float, jump_lo: float, jump_hi: float, horizon: float
) -> OneBodyStatistic:
    """Observed count plus its Poisson mean = variance lambda([a_z,b_z)) (2R sqrt(T))^d T."""
    r = box_radius * math.sqrt(horizon)
    if r > env.window.box_halfwidth * (1.0 + 1e-12) or horizon > env.window.horizon * (1.0 + 1e-12):
        raise ValueError("counting box exceeds the sampled window")
    mean = env.measure.partial_moment(jump_lo, jump_hi, 0.0) * (2.0 * r) ** env.dimension * horizon
    return OneBodyStatistic(
        count=one_body_count(env, box_radius, horizon, jump_lo, jump_hi),
        mean_analytic=mean, var_analytic=mean,
        box_halfwidth=r, jump_lo=jump_lo, jump_hi=jump_hi, horizon=horizon,
    )


def spine_jump_count(spine: SpineRealization, jump_lo: float, jump_hi: float) -> int:
    """f-bar = #{spine atoms with z in [a_z, b_z)}, position unrestricted.

    Its mean under the spine law is beta mu_{a_z, b_z}(1) T (intersected
    with the spine truncation).
    """
    if len(spine) == 0:
        return 0
    return int(np.count_nonzero((spine.jumps >= jump_lo) & (spine.jumps < jump_hi)))


# -- bounded functionals usable on plain and merged clouds -------------------


def make_one_body_exp(box_radius: float, jump_lo: float, jump_hi: float, horizon: float):
    """g(omega) = exp(-f) with f the one-body count."""

    def g(cloud) -> float:
        return math.exp(-one_body_count(cloud, box_radius, horizon, jump_lo, jump_hi))

    return g


def make_window_indicator(box_radius: float, jump_lo: float, jump_hi: float, horizon: float):
    """g(omega) = 1{no atoms in the counting window}."""

    def g(cloud) -> float:
        return 1.0 if one_body_count(cloud, box_radius, horizon, jump_lo, jump_hi) == 0 else 0.0

    return g


def make_one_body_count(box_radius: float, jump_lo: float, jump_hi: float, horizon: float):
    """g(omega) = f itself (bounded in practice by the window)."""

    def g(cloud) -> float:
        return float(one_body_count(cloud, box_radius, horizon, jump_lo, jump_hi))

    return g


FUNCTIONALS = {
    "one_body_exp": make_one_body_exp,
    "window_indicator": make_window_indicator,
    "one_body_count": make_one_body_count,
}


def build_functional(name: str, box_radius: float, jump_lo: float, jump_hi: float, horizon: float):
    if name not in FUNCTIONALS:
        raise ValueError(f"unknown functional {name!r}; known: {sorted(FUNCTIONALS)}")
    return FUNCTIONALS[name](box_radius, jump_lo, jump_hi, horizon)


@dataclass(frozen=True)
class SizebiasReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    z_score: float
    n: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "lhs": self.lhs, "lhs_stderr": self.lhs_stderr,
                "rhs": self.rhs, "rhs_stderr": self.rhs_stderr,
                "z_score": self.z_score, "n": self.n, "seed": self.seed,
            },
            indent=2,
        )


def sizebias_identity_check(
    measure: LevyMeasure,
    dimension: int,
    beta: float,
    a: float,
    t: float,
    g,
    n: int,
    seed: int,
    window_policy="auto",
) -> SizebiasReport:
    """Monte Carlo both sides of E[Zbar(t,*) g(omega)] = E x E' x Q[g(omega U spine)].

    lhs: plain environments, each weighted by its normalized free-end value.
    rhs: independent (environment, spine) pairs, g evaluated on the union.
    """
    if isinstance(g, str):
        raise TypeError("pass a functional built by build_functional, not its name")
    if window_policy == "auto" or window_policy is None:
        window = Window(horizon=t, box_halfwidth=default_box_halfwidth(t))
    elif isinstance(window_policy, Window):
        window = window_policy
    else:
        window = Window(horizon=t, box_halfwidth=float(window_policy))

    # lhs: reuse the deterministic replica stream of the moment estimator so
    # that weights and functional values come from the same environments
    logzbar = sample_log_zbar(
        measure, dimension, beta, a, t, n, seed, kind="free_end", window_policy=window
    )
    lhs_vals = np.empty(n)
    for r in range(n):
        rng = replica_rng(seed, r)
        env = sample_environment(measure, dimension, window, a, rng)
        lhs_vals[r] = math.exp(logzbar[r]) * g(env)

    rhs_vals = np.empty(n)
    for r in range(n):
        rng = replica_rng(seed, n + r)
        env = sample_environment(measure, dimension, window, a, rng)
        spine = sample_spine(measure, dimension, beta, a, t, rng)
        rhs_vals[r] = g(merge_environment(env, spine))

    lhs, rhs = float(np.mean(lhs_vals)), float(np.mean(rhs_vals))
    lhs_se = float(np.std(lhs_vals, ddof=1) / math.sqrt(n))
    rhs_se = float(np.std(rhs_vals, ddof=1) / math.sqrt(n))
    denom = math.hypot(lhs_se, rhs_se)
    return SizebiasReport(
        lhs=lhs, lhs_stderr=lhs_se, rhs=rhs, rhs_stderr=rhs_se,
        z_score=(lhs - rhs) / denom if denom > 0 else 0.0, n=n, seed=seed,
    )
