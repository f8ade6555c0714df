import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from renewalopt import (
    DEFAULT_GRID,
    TABLE1,
    Constraints,
    DiscreteGrid,
    InfeasibleError,
    MdnlpConfig,
    Portfolio,
    ValidationError,
    enumerate_exact,
    mdnlp_solve,
    q_vol,
    retention,
    solve_choice_problem,
)
from renewalopt.mdnlp import bnb_solve_mdlp

WIDE = (-0.2, 0.2)


def table_cons(ell):
    return Constraints(ell, WIDE, allow_any_floor=True)


def oracle_value(pf, ell, grid=DEFAULT_GRID.values):
    return oracles.enumerate_grid(pf.premium, TABLE1.probs, grid, pf.n * ell)


class TestSinglePolicy:
    def test_floor_ninety(self, single_mc):
        res = mdnlp_solve(single_mc, table_cons(0.9))
        assert res.deltas[0] == pytest.approx(0.10)
        assert res.objective == pytest.approx(99.0)

    def test_no_floor(self, single_mc):
        # (1 + d) psi peaks at d = 0.15: 1.15 * 0.875 = 1.00625
        assert mdnlp_solve(single_mc, table_cons(0.0)).deltas[0] == pytest.approx(0.15)

    def test_unreachable_floor(self, single_mc):
        with pytest.raises(InfeasibleError, match="attainable"):
            mdnlp_solve(single_mc, table_cons(1.0))

    def test_box_without_grid_point(self):
        pf = Portfolio.mc([100.0])
        with pytest.raises(InfeasibleError, match="no grid value"):
            mdnlp_solve(pf, Constraints(0.7, (0.01, 0.04), allow_zero_excluded=True))


class TestAgainstEnumeration:
    def test_two_policies(self):
        pf = Portfolio.mc([300.0, 1700.0])
        for ell in (0.85, 0.875, 0.9, 0.925, 0.95):
            best, _ = oracle_value(pf, ell)
            res = mdnlp_solve(pf, table_cons(ell))
            assert res.objective == pytest.approx(best, rel=1e-12)

    @pytest.mark.parametrize("seed", range(25))
    def test_four_policies(self, seed):
        rng = np.random.default_rng(seed)
        pf = Portfolio.mc(rng.uniform(200, 5000, 4))
        ell = float(rng.choice([0.85, 0.875, 0.9, 0.925, 0.95]))
        best, _ = oracle_value(pf, ell)
        res = mdnlp_solve(pf, table_cons(ell))
        assert res.report.feasible
        assert res.objective >= best * (1 - 0.01)
        assert res.objective <= best * (1 + 1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_six_policies_exact_refinement(self, seed):
        rng = np.random.default_rng(1000 + seed)
        pf = Portfolio.mc(rng.uniform(200, 5000, 6))
        ell = float(rng.uniform(0.86, 0.95))
        exact = enumerate_exact(pf, table_cons(ell))
        res = mdnlp_solve(pf, table_cons(ell))
        assert res.objective == pytest.approx(q_vol(pf, exact), rel=1e-12)

    def test_enumerate_exact_matches_itertools(self):
        pf = Portfolio.mc([250.0, 900.0, 4000.0])
        for ell in (0.88, 0.93):
            best, _ = oracle_value(pf, ell)
            assert q_vol(pf, enumerate_exact(pf, table_cons(ell))) == pytest.approx(best, rel=1e-12)


class TestStructure:
    def test_equal_premiums_symmetric(self):
        # with equal premiums only the multiset of chosen changes matters
        pf = Portfolio.mc([500.0] * 5)
        res = mdnlp_solve(pf, table_cons(0.9))
        best, _ = oracle_value(pf, 0.9)
        assert res.objective == pytest.approx(best, rel=1e-12)
        # at 0.9 every policy can take +10% exactly
        assert np.allclose(res.deltas, 0.10)

    def test_permutation_invariance(self, rng):
        P = rng.uniform(200, 4000, 12)
        perm = rng.permutation(12)
        a = mdnlp_solve(Portfolio.mc(P), table_cons(0.91))
        b = mdnlp_solve(Portfolio.mc(P[perm]), table_cons(0.91))
        assert a.objective == pytest.approx(b.objective, rel=1e-9)

    def test_custom_grid(self):
        pf = Portfolio.mc([100.0, 200.0])
        grid = DiscreteGrid((-0.1, 0.0, 0.1))
        res = mdnlp_solve(pf, Constraints(0.9, WIDE, grid=grid))
        assert set(np.round(res.deltas, 12)) <= {-0.1, 0.0, 0.1}
        assert retention(pf, res.deltas) >= 0.9 - 1e-12

    def test_difference_objective(self, single_mc):
        cfg = MdnlpConfig(objective="difference")
        # d psi is largest at +20% (0.165) but that point renews with 0.825 only
        assert mdnlp_solve(single_mc, table_cons(0.8), cfg).deltas[0] == pytest.approx(0.20)
        assert mdnlp_solve(single_mc, table_cons(0.85), cfg).deltas[0] == pytest.approx(0.15)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            MdnlpConfig(epsilon=0)
        with pytest.raises(ValidationError):
            MdnlpConfig(objective="profit")



class TestSmoothModelsOnGrid:
    @pytest.mark.parametrize("seed", range(6))
    def test_ma_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        pi = rng.uniform(0.8, 0.97, 4)
        a = (1 - 1 / pi) * rng.uniform(0.1, 0.9, 4)
        pf = Portfolio.ma(rng.uniform(200, 3000, 4), pi, a)
        ell = float(pf.pi0.mean() - rng.uniform(0, 0.03))
        cons = Constraints(ell)
        fns = [lambda x, p=p, s=s: oracles.ma_psi(p, s, 0.0, x) for p, s in zip(pi, a)]
        best, _ = oracles.enumerate_grid_per_policy(
            pf.premium, fns, DEFAULT_GRID.values, 4 * ell, [-0.1] * 4, [0.2] * 4)
        res = mdnlp_solve(pf, cons)
        assert res.report.feasible
        assert res.objective == pytest.approx(best, rel=1e-12)

    def test_mb_matches_brute_force(self):
        rng = np.random.default_rng(11)
        pi, T = rng.uniform(0.85, 0.97, 3), rng.uniform(-6, -1, 3)
        pf = Portfolio.mb(rng.uniform(200, 3000, 3), pi, T)
        fns = [lambda x, p=p, t=t: oracles.mb_psi(p, t, x) for p, t in zip(pi, T)]
        best, _ = oracles.enumerate_grid_per_policy(
            pf.premium, fns, DEFAULT_GRID.values, 3 * 0.9, [-0.1] * 3, [0.2] * 3)
        assert mdnlp_solve(pf, Constraints(0.9)).objective == pytest.approx(best, rel=1e-12)


class TestChoiceProblem:
    @given(st.integers(0, 10_000), st.integers(1, 5), st.integers(2, 4))
    def test_matches_brute_force(self, seed, n, m):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=(n, m))
        weights = rng.uniform(0, 1, size=(n, m))
        capacity = float(weights.min(axis=1).sum() + rng.uniform(0, 1) * n * 0.5)
        best = -math.inf
        for combo in itertools.product(range(m), repeat=n):
            if sum(weights[i, c] for i, c in enumerate(combo)) <= capacity:
                best = max(best, sum(values[i, c] for i, c in enumerate(combo)))
        res = solve_choice_problem(values, weights, capacity)
        assert res.optimal
        got = float(values[np.arange(n), res.choice].sum())
        assert got == pytest.approx(best, abs=1e-9)

    def test_linearised_subproblem(self):
        grid = np.array([0.0, 0.1, 0.2])
        # minimise -d1 - d2 subject to d1 + d2 <= 0.25: best grid point is (0.1, 0.1) or a permutation
        d = bnb_solve_mdlp([-1.0, -1.0], [1.0, 1.0], -0.25, [0.0, 0.0], grid)
        assert d.sum() == pytest.approx(0.2)
