"""Spine sampling and the reweighting identity."""

import math

import numpy as np
import pytest
from scipy.stats import kstest

from levyheat.environment import Window, replica_rng, sample_environment
from levyheat.measures import AlphaStable, Atom
from levyheat.sizebias import (
    build_functional,
    merge_environment,
    one_body_count,
    one_body_counts,
    sample_spine,
    sizebias_identity_check,
    spine_jump_count,
)

INF = float("inf")
ATOM = Atom(z0=1.0, mass=1.0)


class TestSpine:
    def test_beta_zero_empty(self):
        spine = sample_spine(ATOM, 1, 0.0, 0.5, 1.0, replica_rng(1, 0))
        assert len(spine) == 0

    def test_count_mean(self):
        # atom(z0=1, mass=1), a=0.5, beta=2, T=1 -> Poisson mean beta*z0*mass*T = 2
        rng = replica_rng(2, 0)
        counts = [len(sample_spine(ATOM, 1, 2.0, 0.5, 1.0, rng)) for _ in range(20_000)]
        mean = np.mean(counts)
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        assert abs(mean - 2.0) < 3 * se

    def test_size_biased_jump_law_ks(self):
        # alpha-stable(1.5) spine jumps on [1, inf): density ~ z^{-1.5}
        m = AlphaStable(alpha=1.5)
        rng = replica_rng(3, 0)
        draws = []
        while len(draws) < 20_000:
            draws.extend(sample_spine(m, 1, 1.0, 1.0, 1.0, rng).jumps.tolist())
        draws = np.array(draws[:20_000])
        total = m.partial_moment(1.0, INF, 1.0)
        cdf = lambda z: np.array(
            [m.partial_moment(1.0, v, 1.0) for v in np.atleast_1d(z)]
        ) / total
        assert kstest(draws, cdf).pvalue > 1e-3

    def test_brownian_increments_consistent(self):
        # spine positions are one path: increments scale with sqrt(dt)
        rng = replica_rng(4, 0)
        second_moments, dts = [], []
        for _ in range(4000):
            sp = sample_spine(ATOM, 1, 3.0, 0.5, 1.0, rng)
            if len(sp) >= 2:
                d = np.diff(sp.positions[:, 0])
                dt = np.diff(sp.times)
                second_moments.extend((d * d / dt).tolist())
        ratio = np.mean(second_moments)
        se = np.std(second_moments, ddof=1) / math.sqrt(len(second_moments))
        assert abs(ratio - 1.0) < 3 * se

    def test_superposition(self):
        """Union of independent spines at beta1, beta2 matches one spine at beta1+beta2."""
        rng = replica_rng(5, 0)
        n = 20_000
        union_counts = np.empty(n)
        single_counts = np.empty(n)
        for r in range(n):
            union_counts[r] = len(sample_spine(ATOM, 1, 0.7, 0.5, 1.0, rng)) + len(
                sample_spine(ATOM, 1, 1.1, 0.5, 1.0, rng)
            )
            single_counts[r] = len(sample_spine(ATOM, 1, 1.8, 0.5, 1.0, rng))
        gap = union_counts.mean() - single_counts.mean()
        se = math.hypot(
            union_counts.std(ddof=1) / math.sqrt(n), single_counts.std(ddof=1) / math.sqrt(n)
        )
        assert abs(gap) < 3 * se
        # variances too (Poisson: var == mean)
        vgap = union_counts.var(ddof=1) - single_counts.var(ddof=1)
        assert abs(vgap) < 6 * se  # crude but sufficient at this n

    def test_divergent_intensity(self):
        with pytest.raises((ValueError,)):
            sample_spine(AlphaStable(alpha=0.9), 1, 1.0, 0.5, 1.0, replica_rng(6, 0))


class TestMerge:
    def test_merge_preserves_order_and_atoms(self):
        win = Window(horizon=1.0, box_halfwidth=6.0)
        env = sample_environment(ATOM, 1, win, 0.5, 7)
        spine = sample_spine(ATOM, 1, 2.0, 0.5, 1.0, replica_rng(8, 0))
        merged = merge_environment(env, spine)
        assert len(merged) == len(env) + len(spine)
        assert np.all(np.diff(merged.times) > 0)
        assert set(env.times.tolist()) <= set(merged.times.tolist())


class TestOneBody:
    def test_empty_window_count(self):
        win = Window(horizon=1.0, box_halfwidth=6.0)
        env = sample_environment(ATOM, 1, win, 0.5, 9)
        stat = one_body_counts(env, 1.0, 5.0, 10.0, 1.0)
        assert stat.count == 0
        assert stat.mean_analytic == 0.0

    def test_env_moments(self):
        # atom(z0=0.5, mass=1), R=1, T=1, d=1, window [0.1,1): E[f] = Var(f) = 2
        m = Atom(z0=0.5, mass=1.0)
        win = Window(horizon=1.0, box_halfwidth=6.0)
        n = 20_000
        counts = np.empty(n)
        for r in range(n):
            env = sample_environment(m, 1, win, 0.1, replica_rng(10, r))
            stat = one_body_counts(env, 1.0, 0.1, 1.0, 1.0)
            counts[r] = stat.count
        assert stat.mean_analytic == pytest.approx(2.0)
        se = counts.std(ddof=1) / math.sqrt(n)
        assert abs(counts.mean() - 2.0) < 3 * se
        var_se = math.sqrt(2.0 / (n - 1)) * counts.var(ddof=1)
        assert abs(counts.var(ddof=1) - 2.0) < 3 * var_se

    def test_spine_mean(self):
        # spine count, atom(z0=0.5, mass=1), beta=2, T=1, window [0.1,1): E = beta mu_{0.1,1}(1) T = 1
        m = Atom(z0=0.5, mass=1.0)
        rng = replica_rng(11, 0)
        n = 20_000
        counts = np.array(
            [spine_jump_count(sample_spine(m, 1, 2.0, 0.1, 1.0, rng), 0.1, 1.0) for _ in range(n)]
        )
        se = counts.std(ddof=1) / math.sqrt(n)
        assert abs(counts.mean() - 1.0) < 3 * se

    def test_box_exceeds_window(self):
        win = Window(horizon=1.0, box_halfwidth=0.5)
        env = sample_environment(ATOM, 1, win, 0.5, 12)
        with pytest.raises(ValueError):
            one_body_counts(env, 1.0, 0.5, 2.0, 1.0)


class TestIdentity:
    def test_g_equal_one(self):
        g = lambda cloud: 1.0
        rep = sizebias_identity_check(ATOM, 1, 1.0, 0.5, 1.0, g, 8000, seed=13)
        assert abs(rep.lhs - 1.0) < 3 * rep.lhs_stderr
        assert rep.rhs == 1.0
        assert abs(rep.z_score) < 3

    def test_one_body_exp(self):
        g = build_functional("one_body_exp", 1.0, 0.5, 2.0, 1.0)
        rep = sizebias_identity_check(ATOM, 1, 1.0, 0.5, 1.0, g, 20_000, seed=14)
        assert abs(rep.z_score) < 3

    def test_window_indicator(self):
        g = build_functional("window_indicator", 1.0, 0.5, 2.0, 1.0)
        rep = sizebias_identity_check(ATOM, 1, 1.0, 0.5, 1.0, g, 20_000, seed=15)
        assert abs(rep.z_score) < 3

    def test_ga_measurable_truncated_weight(self):
        """g of coarse atoms only: identity holds at the coarse truncation.

        The measure carries mass below the truncation (never sampled) and
        inside (0,1) (active compensator); jumps are bounded so both MC
        sides have finite variance.  Heavy-tailed measures (stable alpha
        close to 1) satisfy the identity too but their weighted side
        converges far too slowly for a 3-sigma check at this n.
        """
        from levyheat.measures import PowerTail

        g = build_functional("one_body_exp", 1.0, 0.5, 2.0, 1.0)  # counts z in [0.5, 2)
        m = PowerTail(alpha=1.2, z_min=0.05, z_max=3.0)
        rep = sizebias_identity_check(m, 1, 0.8, 0.5, 1.0, g, 20_000, seed=16)
        assert abs(rep.z_score) < 3

    def test_functional_registry(self):
        with pytest.raises(ValueError):
            build_functional("nope", 1.0, 0.5, 2.0, 1.0)
        with pytest.raises(TypeError):
            sizebias_identity_check(ATOM, 1, 1.0, 0.5, 1.0, "one_body_exp", 100, seed=17)

    def test_report_json(self):
        import json

        g = lambda cloud: 1.0
        rep = sizebias_identity_check(ATOM, 1, 1.0, 0.5, 0.5, g, 2000, seed=18)
        blob = json.loads(rep.to_json())
        assert set(blob) == {"lhs", "lhs_stderr", "rhs", "rhs_stderr", "z_score", "n", "seed"}
