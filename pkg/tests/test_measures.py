"""Partial moments, tail masses, compensators and jump samplers."""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import kstest

from levyheat.measures import (
    AlphaStable,
    Atom,
    DivergentIntegralError,
    EmptySupportError,
    ExponentialTail,
    Mixture,
    PowerTail,
    measure_from_dict,
)

INF = float("inf")

CONTINUOUS = [
    AlphaStable(alpha=1.5),
    AlphaStable(alpha=0.8),
    PowerTail(alpha=1.8, z_min=1e-6, z_max=10.0),
    PowerTail(alpha=1.2, z_min=0.05, z_max=3.0),
    ExponentialTail(rate=2.0, scale=0.7),
]

ATOMIC = [
    Atom(z0=0.5, mass=1.0),
    Atom(z0=2.0, mass=0.25),
    Mixture(atoms=(Atom(0.5, 1.0), Atom(1.5, 0.5), Atom(3.0, 0.1))),
]


def quad_moment(measure, a, b, p):
    hi = b
    if b == INF:
        hi = max(50.0, 50.0 * getattr(measure, "scale", 1.0))
        if isinstance(measure, (AlphaStable, PowerTail)):
            hi = 1e9  # power tails need a huge cutoff; quad handles it with points
    val, _ = integrate.quad(
        lambda z: z**p * measure.density(z), a, hi, limit=400, points=None if b == INF else [a, b]
    )
    return val


class TestPartialMoments:
    def test_atom_examples(self):
        assert Atom(z0=0.5, mass=1.0).partial_moment(0, 1, 2) == pytest.approx(0.25, rel=1e-14)
        assert Atom(z0=0.5, mass=2.0).compensator(0.1) == pytest.approx(1.0, rel=1e-14)
        assert Atom(z0=0.5, mass=2.0).tail_mass(0.6) == 0.0
        assert Atom(z0=0.5, mass=2.0).tail_mass(0.1, 1.0) == pytest.approx(2.0)

    def test_alpha_stable_closed_forms(self):
        s = AlphaStable(alpha=1.5)
        # 1.5 * int_{0.01}^1 z^{-1.5} dz = 3 (0.01^{-1/2} - 1) = 27
        assert s.partial_moment(0.01, 1.0, 1.0) == pytest.approx(27.0, rel=1e-14)
        assert s.compensator(0.01) == pytest.approx(27.0, rel=1e-14)
        assert s.tail_mass(0.04) == pytest.approx(125.0, rel=1e-14)

    def test_empty_window(self):
        for m in CONTINUOUS + ATOMIC:
            assert m.partial_moment(0.7, 0.7, 1.3) == 0.0

    def test_compensator_at_one_vanishes(self):
        for m in CONTINUOUS + ATOMIC:
            assert m.compensator(1.0) == 0.0

    @pytest.mark.parametrize("m", CONTINUOUS, ids=lambda m: type(m).__name__ + str(id(m) % 97))
    @pytest.mark.parametrize("p", [0.0, 0.5, 1.0, 2.0])
    def test_against_quadrature(self, m, p):
        a, b = 0.02, 4.0
        got = m.partial_moment(a, b, p)
        want = quad_moment(m, a, b, p)
        assert got == pytest.approx(want, rel=1e-8, abs=1e-12)

    @pytest.mark.parametrize("m", CONTINUOUS + ATOMIC, ids=lambda m: type(m).__name__ + str(id(m) % 97))
    def test_chasles(self, m):
        a, b, c = 0.03, 0.7, 5.0
        for p in (0.0, 1.0, 1.7):
            whole = m.partial_moment(a, c, p)
            split = m.partial_moment(a, b, p) + m.partial_moment(b, c, p)
            assert split == pytest.approx(whole, rel=1e-12, abs=1e-300)

    def test_monotone_in_window(self):
        m = AlphaStable(alpha=1.3)
        vals_b = [m.partial_moment(0.1, b, 1.0) for b in (0.5, 1.0, 2.0, 8.0)]
        assert all(x <= y for x, y in zip(vals_b, vals_b[1:]))
        vals_a = [m.partial_moment(a, 2.0, 1.0) for a in (0.05, 0.1, 0.4)]
        assert all(x >= y for x, y in zip(vals_a, vals_a[1:]))

    def test_divergence_errors(self):
        s = AlphaStable(alpha=1.5)
        with pytest.raises(DivergentIntegralError):
            s.partial_moment(0.0, 1.0, 1.0)  # p <= alpha at zero
        with pytest.raises(DivergentIntegralError):
            s.partial_moment(1.0, INF, 2.0)  # p >= alpha at infinity
        with pytest.raises(DivergentIntegralError):
            s.tail_mass(0.0)

    def test_degenerate_flag_gate(self):
        with pytest.raises(ValueError, match="degenerate"):
            PowerTail(alpha=2.5, z_min=0.0, z_max=1.0)
        m = PowerTail(alpha=2.5, z_min=0.0, z_max=1.0, allow_degenerate=True)
        with pytest.raises(DivergentIntegralError):
            m.partial_moment(0.0, 1.0, 2.0)


class TestSamplers:
    def test_atom_degenerate_law(self, rng):
        m = Atom(z0=0.5, mass=1.0)
        assert m.sample_jump(0.1, 1.0, rng) == 0.5
        assert np.all(m.sample_jump(0.1, 1.0, rng, size=10) == 0.5)
        with pytest.raises(EmptySupportError):
            m.sample_jump(0.6, 1.0, rng)

    def test_inverse_cdf_monotone(self):
        s = AlphaStable(alpha=1.5)
        from levyheat.measures import _power_inverse_cdf

        u = np.linspace(0.001, 0.999, 101)
        z = _power_inverse_cdf(1.5, 0.04, INF, u)
        assert np.all(np.diff(z) > 0)

    def test_stable_conditional_mean(self, rng):
        # analytic oracle: mu_{0.04,inf}(1) / lambda([0.04,inf)) = 15/125 = 0.12
        s = AlphaStable(alpha=1.5)
        mean = s.partial_moment(0.04, INF, 1.0) / s.tail_mass(0.04)
        assert mean == pytest.approx(0.12, rel=1e-14)
        draws = s.sample_jump(0.04, INF, rng, size=1_000_000)
        se = draws.std(ddof=1) / math.sqrt(len(draws))
        assert abs(draws.mean() - mean) < 3 * se

    def test_bounded_window_conditional_mean(self, rng):
        s = AlphaStable(alpha=1.5)
        a, b = 0.04, 25.0
        mean = s.partial_moment(a, b, 1.0) / s.tail_mass(a, b)
        draws = s.sample_jump(a, b, rng, size=400_000)
        se = draws.std(ddof=1) / math.sqrt(len(draws))
        assert abs(draws.mean() - mean) < 3 * se

    @pytest.mark.parametrize(
        "m,a,b",
        [
            (AlphaStable(alpha=1.5), 0.04, INF),
            (AlphaStable(alpha=0.8), 0.3, 5.0),
            (PowerTail(alpha=1.2, z_min=0.05, z_max=3.0), 0.05, 3.0),
            (ExponentialTail(rate=2.0, scale=0.7), 0.2, 4.0),
        ],
    )
    def test_ks_against_conditional_cdf(self, m, a, b, rng):
        draws = np.asarray(m.sample_jump(a, b, rng, size=100_000))
        res = kstest(draws, lambda z: m.conditional_cdf(z, a, b))
        assert res.pvalue > 1e-3

    @pytest.mark.parametrize(
        "m,a,b",
        [
            (AlphaStable(alpha=1.5), 1.0, INF),
            (ExponentialTail(rate=1.0, scale=1.0), 0.3, 6.0),
        ],
    )
    def test_size_biased_ks(self, m, a, b, rng):
        # size-biased CDF: G(z) = mu_{a,z}(1) / mu_{a,b}(1)
        total = m.partial_moment(a, b, 1.0)
        draws = np.asarray(m.sample_size_biased(a, b, rng, size=50_000))
        res = kstest(draws, lambda z: np.array([m.partial_moment(a, v, 1.0) for v in np.atleast_1d(z)]) / total)
        assert res.pvalue > 1e-3

    def test_size_biased_atom_mixture(self, rng):
        m = Mixture(atoms=(Atom(0.5, 1.0), Atom(2.0, 1.0)))
        draws = np.asarray(m.sample_size_biased(0.1, INF, rng, size=200_000))
        # weights z0*mass: 0.5 vs 2.0 -> P(z=2) = 0.8
        assert abs((draws == 2.0).mean() - 0.8) < 0.005


class TestDescriptors:
    @pytest.mark.parametrize("m", CONTINUOUS + ATOMIC, ids=lambda m: type(m).__name__ + str(id(m) % 97))
    def test_round_trip(self, m):
        back = measure_from_dict(m.to_dict())
        assert back == m

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown measure kind"):
            measure_from_dict({"kind": "cauchy"})
        with pytest.raises(ValueError, match="kind"):
            measure_from_dict({"alpha": 1.0})
