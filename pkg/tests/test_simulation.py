import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from renewalopt import (
    DEFAULT_GRID,
    TABLE1,
    Constraints,
    InfeasibleError,
    Portfolio,
    SimConfig,
    SimPrior,
    ValidationError,
    enumerate_exact,
    prior_from_solution,
    q_vol,
    sim_optimize,
    uniform_prior_for_floor,
)
from renewalopt.simulation import UNIFORM_RANGES, load_prior, save_prior, uniform_prior

WIDE = (-0.2, 0.2)
FULL_GRID = uniform_prior(DEFAULT_GRID.values)


class TestSinglePolicy:
    def test_finds_enumerated_optimum(self, single_mc):
        cons = Constraints(0.9, WIDE)
        res = sim_optimize(single_mc, cons, FULL_GRID, SimConfig(m=2000, seed=1))
        assert res.deltas[0] == pytest.approx(enumerate_exact(single_mc, cons)[0])
        assert res.objective == pytest.approx(99.0)

    def test_point_mass(self, single_mc):
        prior = SimPrior([0.05], [1.0])
        res = sim_optimize(single_mc, Constraints(0.9, WIDE), prior, SimConfig(m=1))
        assert res.deltas[0] == 0.05
        assert res.stats.draws == 1 and res.stats.acceptance_rate == 1.0

    def test_infeasible_message(self, single_mc):
        prior = SimPrior([0.15, 0.20], [1.0, 1.0])
        cfg = SimConfig(m=5, max_resamples_per_replication=50)
        with pytest.raises(InfeasibleError, match="no feasible draw within 50 resamples") as info:
            sim_optimize(single_mc, Constraints(0.9, WIDE), prior, cfg)
        assert "tightest violated clause: retention" in str(info.value)

    def test_prior_off_table(self, single_mc):
        with pytest.raises(ValidationError, match="not a point"):
            sim_optimize(single_mc, Constraints(0.9, WIDE), SimPrior([0.0, 0.07], [1, 1]))


class TestConvergence:
    def test_two_policies(self):
        pf = Portfolio.mc([400.0, 2500.0])
        cons = Constraints(0.92, WIDE)
        best, _ = oracles.enumerate_grid(pf.premium, TABLE1.probs, DEFAULT_GRID.values, 2 * 0.92)
        res = sim_optimize(pf, cons, FULL_GRID, SimConfig(m=3000, seed=2))
        assert res.objective == pytest.approx(best, rel=1e-12)

    @settings(max_examples=25)
    @given(st.integers(0, 1000), st.integers(1, 60))
    def test_prefix_monotone(self, seed, m):
        # replication r uses the same stream for every m, so more replications never hurt
        pf = Portfolio.mc(np.linspace(300, 3000, 6))
        cons = Constraints(0.9, WIDE)
        prior = uniform_prior_for_floor(0.90)
        small = sim_optimize(pf, cons, prior, SimConfig(m=m, seed=seed))
        large = sim_optimize(pf, cons, prior, SimConfig(m=m + 15, seed=seed))
        assert large.objective >= small.objective
        assert large.report.feasible and small.report.feasible

    def test_reproducible(self, homogeneous_mc):
        pf = homogeneous_mc.subset(np.arange(500))
        cons = Constraints(0.875, WIDE)
        prior = uniform_prior_for_floor(0.875)
        a = sim_optimize(pf, cons, prior, SimConfig(m=30, seed=4))
        b = sim_optimize(pf, cons, prior, SimConfig(m=30, seed=4))
        assert a.deltas.tobytes() == b.deltas.tobytes()

    def test_smooth_model(self):
        pf = Portfolio.mb([100.0, 300.0], 0.92, -4.0)
        res = sim_optimize(pf, Constraints(0.9, WIDE), FULL_GRID, SimConfig(m=500))
        assert res.objective == pytest.approx(q_vol(pf, res.deltas), rel=1e-12)


class TestPriors:
    def test_from_solution(self):
        prior = prior_from_solution([0.1, 0.1, 0.15, 0.0])
        assert list(prior.values) == [0.0, 0.1, 0.15]
        assert prior.weights[0] == pytest.approx([0.25, 0.5, 0.25])
        assert prior.kind == "from-mdnlp"

    def test_tabulated_floors(self):
        for ell, values in UNIFORM_RANGES.items():
            prior = uniform_prior_for_floor(ell)
            assert np.allclose(prior.values, sorted(values))
            assert np.allclose(prior.weights, 1 / len(values))
        with pytest.raises(ValidationError, match="no tabulated range"):
            uniform_prior_for_floor(0.8)

    def test_validation(self):
        with pytest.raises(ValidationError):
            SimPrior([0.1, 0.0], [1, 1])
        with pytest.raises(ValidationError):
            SimPrior([0.0, 0.1], [0, 0])
        with pytest.raises(ValidationError):
            SimConfig(m=0)

    def test_shared_round_trip(self, tmp_path):
        prior = SimPrior([-0.05, 0.0, 0.1], [1.0, 3.0, 4.0])
        save_prior(prior, tmp_path / "prior.csv")
        back = load_prior(tmp_path / "prior.csv")
        assert np.array_equal(back.values, prior.values)
        assert np.allclose(back.weights, prior.weights)

    def test_per_policy_round_trip(self, tmp_path):
        pf = Portfolio.mc([100.0, 200.0])
        prior = SimPrior([0.0, 0.1], [[1.0, 0.0], [0.5, 0.5]])
        save_prior(prior, tmp_path / "prior.csv", pf)
        back = load_prior(tmp_path / "prior.csv", pf)
        assert back.per_policy
        assert np.allclose(back.weights, prior.weights)
        res = sim_optimize(pf, Constraints(0.9, WIDE), back, SimConfig(m=50))
        assert res.deltas[0] == 0.0

    def test_per_policy_needs_portfolio(self, tmp_path):
        (tmp_path / "p.csv").write_text("id,delta,weight\np1,0.0,1\n")
        with pytest.raises(ValidationError, match="portfolio"):
            load_prior(tmp_path / "p.csv")
