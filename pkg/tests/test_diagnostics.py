"""Experiment reports: flat-field identities, scans, and reproducibility."""

import json
import math

import numpy as np
import pytest

from levyheat.diagnostics import (
    box_convergence,
    degeneracy_scan,
    flat_initial_field,
    intermittency_report,
    mass_concentration_report,
    truncation_convergence,
    write_report_csv,
    write_report_json,
)
from levyheat.environment import Environment, Window, replica_rng, sample_environment
from levyheat.measures import AlphaStable, Atom, PowerTail
from levyheat.moments import mc_moment

INF = float("inf")
ATOM = Atom(z0=1.0, mass=1.0)


def make_env(times, positions, jumps, measure, a, horizon=1.0, halfwidth=5.0, d=1):
    return Environment(
        times=np.asarray(times, dtype=float),
        positions=np.asarray(positions, dtype=float).reshape(len(times), d),
        jumps=np.asarray(jumps, dtype=float),
        dimension=d,
        window=Window(horizon=horizon, box_halfwidth=halfwidth),
        truncation_a=a,
        measure=measure,
        seed=None,
    )


class TestFlatField:
    def test_empty_env_value(self):
        m = PowerTail(alpha=1.2, z_min=0.05, z_max=3.0)
        env = make_env([], [], [], m, 0.3)
        beta, t = 1.1, 1.0
        kappa, mu = m.compensator(0.3), m.partial_moment(1.0, INF, 1.0)
        got = flat_initial_field(env, beta, t, [[0.0]])[0]
        assert got == pytest.approx(math.exp(-beta * (kappa + mu) * t), rel=1e-13)

    def test_beta_zero_everywhere_one(self, rng):
        env = sample_environment(ATOM, 1, Window(1.0, 4.0), 0.5, rng)
        vals = flat_initial_field(env, 0.0, 1.0, [[-1.0], [0.0], [2.0]])
        assert np.allclose(vals, 1.0, rtol=1e-13)

    def test_matches_free_end_distribution(self):
        """U-bar(t,x) and Zbar(t,*) share p in {1/2, 1} moments (same law)."""
        t, beta, n = 0.5, 1.0, 8000
        win = Window(horizon=t, box_halfwidth=6.0)
        ubar = np.empty(n)
        for r in range(n):
            env = sample_environment(ATOM, 1, win, 0.5, replica_rng(55, r))
            ubar[r] = flat_initial_field(env, beta, t, [[0.3]])[0]
        for p in (0.5, 1.0):
            fe = mc_moment(ATOM, 1, beta, 0.5, t, p, n, seed=56)
            um = float(np.mean(ubar**p))
            use = float(np.std(ubar**p, ddof=1) / math.sqrt(n))
            assert abs(um - fe.mean) < 3 * math.hypot(use, fe.stderr)


class TestMassConcentration:
    def test_beta_zero(self):
        rep = mass_concentration_report(ATOM, 1, 0.0, 0.5, 1.0, 0.1, 500, seed=60)
        assert rep.stats["mass_fraction_high_sites"] == 0.0
        assert rep.verdicts["average_is_one"]
        assert rep.verdicts["volume_fraction_below_markov"]

    def test_small_run_verdicts(self):
        rep = mass_concentration_report(ATOM, 1, 1.0, 0.5, 1.0, 0.2, 4000, seed=61)
        assert rep.verdicts["average_is_one"]
        assert rep.verdicts["volume_fraction_below_markov"]
        assert rep.stats["volume_fraction_high_sites"] <= rep.stats["markov_bound"] + 0.05


class TestIntermittency:
    def test_beta_zero_negative_verdict(self):
        rep = intermittency_report(ATOM, 1, 0.0, 0.5, [0.5, 1.0, 1.5], 200, seed=62)
        assert not rep.verdicts["strong_intermittency_signature"]
        assert rep.verdicts["normalization_control"]

    def test_small_signature(self):
        rep = intermittency_report(ATOM, 1, 1.5, 0.5, [1.0, 2.0, 4.0], 20_000, seed=63)
        assert rep.verdicts["normalization_control"]
        means = [r["mean_half"] for r in rep.stats["rows"]]
        assert means[0] > means[-1]


class TestDegeneracy:
    def test_beta_zero_constant_in_a(self):
        rep = degeneracy_scan(ATOM, 1, 0.0, 0.5, [0.1], [0.8, 0.6, 0.5], 300, seed=64)
        meds = [r["log_median"] for r in rep.stats["rows"]]
        assert max(meds) - min(meds) < 1e-12
        assert not rep.verdicts["medians_strictly_decreasing"]
        assert rep.verdicts["medians_stable"]

    def test_atom_budget_guard(self):
        with pytest.raises(ValueError, match="budget"):
            degeneracy_scan(
                AlphaStable(alpha=1.9), 3, 1.0, 1.0, None, [0.2, 0.01], 10, seed=65,
                atom_budget=1000,
            )

    def test_negative_control_d1(self):
        rep = degeneracy_scan(
            AlphaStable(alpha=1.5), 1, 1.0, 0.5, [0.0], [0.4, 0.2, 0.1], 400, seed=66
        )
        assert rep.verdicts["medians_stable"]


class TestTruncation:
    def test_single_level_zero_gaps(self):
        rep = truncation_convergence(AlphaStable(alpha=1.5), 1, 0.5, 0.5, [0.1], [0.4], 300, seed=67)
        assert rep.stats["rows"][0]["gap_moment"] == 0.0
        assert rep.verdicts["gaps_decreasing"]

    def test_mean_preservation(self):
        rep = truncation_convergence(
            AlphaStable(alpha=1.5), 1, 0.5, 0.5, [0.1], [0.4, 0.2, 0.1], 4000, seed=68
        )
        assert rep.verdicts["mean_preserved_all_levels"]


class TestBox:
    def test_beta_zero_no_dependence(self):
        rep = box_convergence(ATOM, 1, 0.0, 0.5, 1.0, [1.0, 2.0, 4.0], 200, seed=69)
        means = [r["mean"] for r in rep.stats["rows"]]
        assert max(means) == min(means) == 1.0
        assert rep.verdicts["plateau_reached"]

    def test_small_box_deficit_and_plateau(self):
        rep = box_convergence(ATOM, 1, 1.0, 0.5, 1.0, [0.5, 2.0, 4.0, 6.0, 8.0], 4000, seed=70)
        rows = rep.stats["rows"]
        assert rows[0]["mean"] < rows[-1]["mean"]  # visible deficit below sqrt(t) scale
        assert rep.verdicts["plateau_reached"]


class TestReportIO:
    def test_json_and_csv(self, tmp_path):
        rep = box_convergence(ATOM, 1, 0.0, 0.5, 1.0, [1.0, 2.0], 100, seed=71)
        jpath, cpath = tmp_path / "rep.json", tmp_path / "rep.csv"
        write_report_json(rep, jpath)
        write_report_csv(rep, cpath)
        blob = json.loads(jpath.read_text())
        assert blob["schema_version"] == 1
        assert blob["experiment"] == "box"
        assert blob["config"]["measure"] == {"kind": "atom", "z0": 1.0, "mass": 1.0}
        header = cpath.read_text().splitlines()[0]
        assert header.startswith("L,mean,stderr")

    def test_reproducible_from_echo(self):
        r1 = intermittency_report(ATOM, 1, 1.0, 0.5, [0.5, 1.0], 300, seed=72)
        cfg = r1.config
        r2 = intermittency_report(
            ATOM, cfg["dimension"], cfg["beta"], cfg["truncation_a"], cfg["t_list"],
            cfg["n"], seed=r1.seed,
        )
        assert r1.stats == r2.stats
