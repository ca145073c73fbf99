import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from blockmt import simulator as sim
from blockmt.errors import DomainError


def srw_oracle(delta, alpha, M, s0=1.0, s1=1.0):
    return norm.sf((s0 * norm.isf(alpha / M) - delta) / s1)


def partial_oracle(delta, alpha, m, b, k, s0=1.0, s1=1.0):
    f = k / b
    sk = math.sqrt(f * s1 ** 2 + (1 - f) * s0 ** 2 + delta ** 2 * f * (1 - f))
    return norm.sf((s0 * norm.isf(alpha / m) - f * delta * math.sqrt(b)) / sk)


def crossover_oracle(delta, alpha, m, b, M):
    target = srw_oracle(delta, alpha, M)
    ks = [k for k in range(1, b + 1) if partial_oracle(delta, alpha, m, b, k) >= target]
    return ks[0] / b if ks else None


class TestAnalytic:
    def test_srw_examples(self):
        assert sim.analytic_power_srw(0.0, 0.05, 1000) == pytest.approx(0.05 / 1000, rel=1e-12)
        c = norm.isf(0.05 / 1000)
        assert sim.analytic_power_srw(c, 0.05, 1000) == pytest.approx(0.5, abs=1e-12)
        assert sim.analytic_power_srw(3.0, 0.05, 1000) == pytest.approx(0.186, abs=0.001)

    def test_bwa_full_examples(self):
        assert sim.analytic_power_bwa_full(1.0, 0.05, 200, 5) == pytest.approx(0.107, abs=0.001)
        assert sim.analytic_power_bwa_full(2.3, 0.05, 1000, 1) == sim.analytic_power_srw(2.3, 0.05, 1000)
        d = norm.isf(0.05 / 200) / math.sqrt(5)
        assert sim.analytic_power_bwa_full(d, 0.05, 200, 5) == pytest.approx(0.5, abs=1e-12)

    def test_mixture_sigma(self):
        assert sim.mixture_sigma(2.0, 1.0, 1.0, 1, 2) == pytest.approx(math.sqrt(2), rel=1e-15)
        assert sim.mixture_sigma(3.0, 1.0, 1.7, 5, 5) == pytest.approx(1.7, rel=1e-15)
        assert sim.mixture_sigma(3.0, 0.6, 1.7, 0, 5) == pytest.approx(0.6, rel=1e-15)

    def test_partial_examples(self):
        assert sim.analytic_power_bwa_partial(3.0, 0.05, 50, 20, 2) == pytest.approx(0.097, abs=0.001)
        for b in (5, 20):
            assert sim.analytic_power_bwa_partial(2.0, 0.05, 1000 // b, b, b) == pytest.approx(
                sim.analytic_power_bwa_full(2.0, 0.05, 1000 // b, b), rel=1e-14)

    @pytest.mark.parametrize("delta", [1.0, 2.0, 3.0])
    @pytest.mark.parametrize("b", [5, 20])
    def test_partial_increasing_in_k(self, delta, b):
        powers = [sim.analytic_power_bwa_partial(delta, 0.05, 1000 // b, b, k) for k in range(1, b + 1)]
        assert np.all(np.diff(powers) > 0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 6.0), st.floats(0.001, 0.2), st.sampled_from([2, 4, 5, 10, 20]),
           st.integers(1, 20))
    def test_match_oracles(self, delta, alpha, b, k):
        k = min(k, b)
        M = 1000
        assert sim.analytic_power_srw(delta, alpha, M) == pytest.approx(srw_oracle(delta, alpha, M), abs=1e-12)
        assert sim.analytic_power_bwa_partial(delta, alpha, M // b, b, k) == pytest.approx(
            partial_oracle(delta, alpha, M // b, b, k), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.05, 6.0), st.sampled_from([2, 4, 5, 10, 20]))
    def test_monotone_and_bwa_dominates(self, delta, b):
        M, alpha = 1000, 0.05
        assert sim.analytic_power_srw(delta + 0.01, alpha, M) > sim.analytic_power_srw(delta, alpha, M)
        full = sim.analytic_power_bwa_full(delta, alpha, M // b, b)
        assert sim.analytic_power_bwa_full(delta + 0.01, alpha, M // b, b) >= full
        assert full > sim.analytic_power_srw(delta, alpha, M) or full == 1.0

    def test_domain(self):
        with pytest.raises(DomainError):
            sim.analytic_power_srw(1.0, 0.05, 10, sigma0=0.0)
        with pytest.raises(DomainError):
            sim.analytic_power_bwa_full(1.0, 0.05, 10, 0)
        with pytest.raises(DomainError):
            sim.analytic_power_bwa_partial(1.0, 0.05, 10, 5, 0)
        with pytest.raises(DomainError):
            sim.mixture_sigma(1.0, 1.0, 1.0, 6, 5)


class TestCrossover:
    def test_first_grid_point_wins_when_srw_is_weak(self):
        assert sim.crossover_fraction(1.0, 0.05, 200, 5, 1000) == 0.2

    def test_strong_effect_needs_most_of_the_block(self):
        # at delta=6 the per-region test already has power ~0.98
        assert srw_oracle(6.0, 0.05, 1000) > 0.98
        assert sim.crossover_fraction(6.0, 0.05, 200, 5, 1000) == 0.8

    def test_no_effect(self):
        assert sim.crossover_fraction(0.0, 0.05, 200, 5, 1000) is None

    def test_figure2_setting(self):
        assert sim.crossover_fraction(3.0, 0.05, 50, 20, 1000) == 0.15

    @pytest.mark.parametrize("delta", np.round(np.arange(0.25, 8.01, 0.25), 2))
    def test_matches_grid_scan(self, delta):
        for b in (2, 4, 5, 8, 10, 20, 25, 40, 50):
            assert sim.crossover_fraction(delta, 0.05, 1000 // b, b, 1000) == crossover_oracle(
                delta, 0.05, 1000 // b, b, 1000)

    @pytest.mark.parametrize("chain", [(5, 10, 20, 40), (5, 10, 50), (2, 4, 8, 40), (5, 25, 50)])
    def test_non_increasing_in_b_on_nested_grids(self, chain):
        for delta in np.arange(0.25, 8.01, 0.25):
            vals = [sim.crossover_fraction(delta, 0.05, 1000 // b, b, 1000) for b in chain]
            vals = [math.inf if v is None else v for v in vals]
            assert all(a >= b for a, b in zip(vals, vals[1:])), (delta, vals)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(b=3), dict(m1=201), dict(m2=5, k=0), dict(m2=5, k=6),
                                    dict(alpha=1.0), dict(delta=-1.0), dict(n_sim=0),
                                    dict(placement="random"), dict(sigma1=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            sim.ScenarioConfig(**kw)

    def test_figure_presets(self):
        c = sim.ScenarioConfig.figure1(4, 2.0)
        assert (c.M, c.m, c.m1, c.m2, c.M1) == (1000, 250, 25, 0, 100)
        c = sim.ScenarioConfig.figure2(20, 3, 3.0)
        assert (c.m, c.m1, c.m2, c.k_over_b) == (50, 0, 10, 0.15)
        with pytest.raises(DomainError):
            sim.ScenarioConfig.figure1(3, 1.0)

    def test_data_key_ignores_procedure_settings(self):
        c = sim.ScenarioConfig(delta=1.0)
        assert c.data_key() == replace(c, alpha=0.1, n_sim=5, seed=3).data_key()
        assert c.data_key() != replace(c, delta=1.5).data_key()


class TestSimulate:
    def test_deterministic(self):
        cfg = sim.ScenarioConfig.figure1(2, 2.0, n_sim=700, seed=4)
        a = sim.simulate_scenario(cfg, "mean_bwa", "bh95")
        b = sim.simulate_scenario(cfg, "mean_bwa", "bh95")
        assert a == b

    def test_thread_count_invariant(self):
        cfg = sim.ScenarioConfig.figure1(5, 1.5, n_sim=1600, seed=2)
        one = sim.simulate_scenario(cfg, "srw", "holm", threads=1)
        four = sim.simulate_scenario(cfg, "srw", "holm", threads=4)
        assert one == four

    def test_seed_changes_draws(self):
        cfg = sim.ScenarioConfig.figure1(2, 2.0, n_sim=500)
        assert (sim.simulate_scenario(cfg, "srw").avg_power
                != sim.simulate_scenario(replace(cfg, seed=1), "srw").avg_power)

    def test_strategies_share_data(self):
        # the same replications feed every strategy, so bonferroni <= bh95 holds per cell
        cfg = sim.ScenarioConfig.figure1(2, 2.5, n_sim=500)
        bonf = sim.simulate_scenario(cfg, "srw", "bonferroni")
        bh = sim.simulate_scenario(cfg, "srw", "bh95")
        assert bonf.avg_power <= bh.avg_power and bonf.fwer <= bh.fwer

    def test_large_effect(self):
        cell = sim.simulate_scenario(sim.ScenarioConfig.figure1(5, 5.0, n_sim=2000), "mean_bwa")
        assert cell.avg_power >= 0.999

    def test_complete_null_fwer(self):
        cfg = sim.ScenarioConfig(M=1000, b=1, m1=0, delta=0.0, n_sim=10_000, seed=3)
        cell = sim.simulate_scenario(cfg, "srw", "bonferroni")
        target = 1 - (1 - 0.05 / 1000) ** 1000
        assert abs(cell.fwer - target) <= 3 * cell.se_fwer
        assert math.isnan(cell.avg_power) and cell.analytic_power is None
        assert cell.fdr == cell.fwer

    def test_unknown_strategy(self):
        with pytest.raises(DomainError):
            sim.simulate_scenario(sim.ScenarioConfig(), "median_bwa")

    def test_power_non_decreasing_in_b(self):
        powers = [sim.simulate_scenario(sim.ScenarioConfig.figure1(b, 1.5, n_sim=2000), "mean_bwa").avg_power
                  for b in (2, 4, 5)]
        assert powers[0] <= powers[1] <= powers[2]

    def test_analytic_column(self):
        cfg = sim.ScenarioConfig.figure2(20, 4, 3.0, n_sim=10)
        cell = sim.simulate_scenario(cfg, "mean_bwa")
        assert cell.analytic_power == pytest.approx(sim.analytic_power_bwa_partial(3.0, 0.05, 50, 20, 4))
        assert sim.simulate_scenario(cfg, "srw", "bh95").analytic_power is None

    def test_bernoulli_placement_varies_affected_count(self):
        cfg = sim.ScenarioConfig.figure2(20, 4, 3.0, n_sim=50, placement="bernoulli")
        _, affected = sim._draw(cfg, range(50))
        counts = affected.sum(axis=1)
        assert len(set(counts.tolist())) > 1
        assert abs(counts.mean() - 40) < 5


class TestSweep:
    def test_figure_tasks(self):
        t = sim.figure_tasks("1a", deltas=[1.0, 2.0])
        assert [(c.b, s, m) for c, s, m in t[:4]] == [(2, "mean_bwa", "bonferroni"), (4, "mean_bwa", "bonferroni"),
                                                       (5, "mean_bwa", "bonferroni"), (1, "srw", "bonferroni")]
        assert len(t) == 8
        assert {m for _, _, m in sim.figure_tasks("1b", deltas=[1.0])} == {"bh95"}
        d = sim.figure_tasks("1d")
        assert len(d) == 22 and {(s, m) for _, s, m in d} == {("mean_bwa", "bonferroni"), ("srw", "bh95")}
        f2 = sim.figure_tasks("2")
        assert len(f2) == 2 * (5 + 20) * 3
        with pytest.raises(DomainError):
            sim.figure_tasks("3")

    def test_select_and_writers(self, tmp_path):
        res = sim.power_sweep(sim.figure_tasks("1c", deltas=[0.0, 2.0], n_sim=300))
        assert len(res.cells) == 4
        cell = res.one(strategy="srw", delta=2.0)
        assert cell.method == "bh95"
        with pytest.raises(KeyError):
            res.one(strategy="srw")
        sim.write_sweep_csv(tmp_path / "s.csv", res)
        rows = list(csv.reader(open(tmp_path / "s.csv")))
        assert tuple(rows[0]) == sim.COLUMNS
        assert rows[0][:12] == ["strategy", "method", "delta", "k_over_b", "b", "avg_power", "fwer",
                                "fdr", "se_power", "n_sim", "se_fwer", "se_fdr"]
        row = rows[1 + res.cells.index(cell)]
        assert float(row[5]) == cell.avg_power
        sim.write_sweep_json(tmp_path / "s.json", res, manifest={"seed": 0})
        doc = json.load(open(tmp_path / "s.json"))
        assert doc["manifest"] == {"seed": 0}
        assert doc["cells"][1]["avg_power"] == res.cells[1].avg_power

    def test_format_number(self):
        assert sim.format_number(0.1) == "0.1"
        assert sim.format_number(float("nan")) == ""
        assert sim.format_number(None) == ""
        assert sim.format_number(7) == "7"


class TestExample2:
    def test_fixture(self):
        ex = sim.example2_fixture()
        assert ex.entry(1, 1) == 3.26
        assert ex.entry(6, 5) == -5.45
        assert int(ex.partition.sizes.sum()) == 64
        assert ex.affected_blocks == ["top-left"] and ex.affected_regions.size == 12

    def test_analysis(self):
        out = sim.analyze_example2()
        assert out["srw"]["critical_value"] == pytest.approx(3.16, abs=0.005)
        assert out["srw"]["rates"]["type_i"] == 3 / 52
        assert out["srw"]["rates"]["type_ii"] == 7 / 12
        assert out["bwa"]["mean"]["rejected"] == ["top-left", "top-right"]
        assert out["bwa"]["median"]["rejected"] == ["top-left"]
        assert out["bwa"]["huber"]["rejected"] == ["top-left"]
        assert out["bwa"]["mean"]["critical_values"]["top-middle"] == pytest.approx(0.846, abs=0.001)
