import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renewalopt import TABLE1, DiscreteProbTable, Ma, Mb, Mc, ValidationError
from renewalopt.models import (
    approximate_mb_by_ma,
    fit_quadratic_to_table,
    load_table,
    ma_vertex_inside,
    psi,
    psi_derivatives,
    save_table,
)

probs = st.floats(0.5, 0.995)
slopes = st.floats(-8.0, -0.05)


class TestPsi:
    def test_table_points(self):
        model = Mc(TABLE1)
        assert psi(model, 0.0) == 0.950
        assert psi(model, 0.20) == 0.825

    def test_table_miss_raises(self):
        with pytest.raises(ValidationError, match="not a point"):
            psi(Mc(TABLE1), 0.07)

    def test_logistic_at_zero_is_pi(self):
        for T in (-0.1, -3.0, -40.0):
            assert psi(Mb(0.95, T), 0.0) == 0.95

    def test_logistic_hand_value(self):
        # c = 19, T = -5, delta = 0.1: 1 / (1 + e^{0.5}/19)
        expected = 1.0 / (1.0 + np.exp(0.5) / 19.0)
        assert psi(Mb(0.95, -5.0), 0.10) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.92015, abs=5e-6)

    def test_polynomial_hand_value(self):
        assert psi(Ma(0.9, -0.5), 0.10) == pytest.approx(0.855, rel=1e-15)

    def test_polynomial_leaving_unit_interval(self):
        with pytest.raises(ValidationError):
            psi(Ma(0.9, -0.5), 3.0)

    @given(probs, slopes, st.floats(-0.3, 0.3))
    def test_logistic_monotone(self, pi, T, d):
        assert psi(Mb(pi, T), d + 1e-3) <= psi(Mb(pi, T), d)

    @given(probs, st.floats(0.01, 0.99), st.floats(-0.2, 0.3))
    def test_linear_polynomial_monotone(self, pi, frac, d):
        a = (1 - 1 / pi) * frac
        assert psi(Ma(pi, a), d + 1e-3) <= psi(Ma(pi, a), d)

    @given(probs, st.floats(0.01, 0.99))
    def test_zero_change_identity(self, pi, frac):
        a = (1 - 1 / pi) * frac
        assert psi(Ma(pi, a, -0.1), 0.0) == pi
        assert psi(Mb(pi, -2.0), 0.0) == pi


class TestDerivatives:
    def test_linear_polynomial(self):
        first, second = psi_derivatives(Ma(0.9, -0.5), np.array([-0.1, 0.0, 0.2]))
        assert np.allclose(first, -0.45) and np.all(second == 0)

    def test_logistic_slope_at_zero(self):
        first, _ = psi_derivatives(Mb(0.95, -5.0), 0.0)
        assert first == pytest.approx(-5 * 0.95 * 0.05, rel=1e-12)

    def test_table_has_no_derivative(self):
        with pytest.raises(ValidationError):
            psi_derivatives(Mc(TABLE1), 0.0)

    def test_finite_differences(self, rng):
        h = 1e-6
        worst = 0.0
        for _ in range(1000):
            pi = rng.uniform(0.6, 0.99)
            if rng.random() < 0.5:
                model = Mb(pi, rng.uniform(-8, -0.1))
            else:
                b = rng.uniform(-0.5, 0.0)
                lo = max(1 - 1 / pi, -1 - b)
                model = Ma(pi, rng.uniform(lo, 0.0) * 0.99, b)
            d = rng.uniform(-0.2, 0.2)
            first, second = psi_derivatives(model, d)
            fd1 = (psi(model, d + h) - psi(model, d - h)) / (2 * h)
            fd2 = (psi_derivatives(model, d + h)[0] - psi_derivatives(model, d - h)[0]) / (2 * h)
            worst = max(worst, abs(first - fd1), abs(second - fd2))
        assert worst <= 1e-6


class TestApproximation:
    def test_printed_coefficients(self):
        ma = approximate_mb_by_ma(Mb(0.95, -5.0), coefficients="printed")
        assert ma.pi == pytest.approx(0.95)
        assert ma.a == pytest.approx(-4.75)
        assert ma.b == pytest.approx(-0.5625)

    def test_taylor_slope(self):
        ma = approximate_mb_by_ma(Mb(0.95, -5.0))
        assert ma.a == pytest.approx(-5.0 / 20.0)
        assert ma.b == pytest.approx(-0.5625)

    def test_zero_elasticity_limit(self):
        ma = approximate_mb_by_ma(Mb(0.8, -1e-12))
        assert ma.pi == pytest.approx(0.8)
        assert abs(ma.a) < 1e-11 and abs(ma.b) < 1e-11

    @given(probs, slopes)
    def test_taylor_contract(self, pi, T):
        mb = Mb(pi, T)
        ma = approximate_mb_by_ma(mb)
        f_mb, s_mb = psi_derivatives(mb, 0.0)
        f_ma, s_ma = psi_derivatives(ma, 0.0)
        assert psi(ma, 0.0) == pytest.approx(psi(mb, 0.0), abs=1e-12)
        assert f_ma == pytest.approx(f_mb, abs=1e-8)
        assert s_ma == pytest.approx(s_mb, abs=1e-8)

    def test_cubic_gap(self, rng):
        ds = np.linspace(-0.05, 0.05, 201)
        for _ in range(20):
            mb = Mb(rng.uniform(0.7, 0.98), rng.uniform(-6, -0.5))
            ma = approximate_mb_by_ma(mb)
            gap = np.abs(psi(mb, ds) - ma.pi * (1 + ma.a * ds + ma.b * ds**2))
            # third derivative of expit is bounded by |T|^3 / 8; Taylor remainder /6
            K = abs(mb.T) ** 3 / 48 + 1e-12
            assert np.all(gap <= K * np.abs(ds) ** 3 + 1e-15)


class TestQuadraticFit:
    def test_table_coefficients(self):
        q2, q1, q0 = fit_quadratic_to_table(TABLE1)
        assert q2 == pytest.approx(-0.9775, abs=0.02)
        assert q1 == pytest.approx(-0.4287, abs=0.02)
        assert q0 == pytest.approx(0.9534, abs=0.02)

    def test_exact_quadratic(self):
        d = np.linspace(-0.2, 0.2, 9)
        table = DiscreteProbTable(d, 0.9 - 0.3 * d - 0.5 * d**2)
        assert np.allclose(fit_quadratic_to_table(table), (-0.5, -0.3, 0.9), atol=1e-10)

    def test_flat_table(self):
        table = DiscreteProbTable([-0.1, 0.0, 0.1], [0.8, 0.8, 0.8])
        assert np.allclose(fit_quadratic_to_table(table), (0.0, 0.0, 0.8), atol=1e-12)

    def test_needs_three_points(self):
        with pytest.raises(ValidationError):
            fit_quadratic_to_table(DiscreteProbTable([0.0, 0.1], [0.9, 0.8]))


class TestTable:
    def test_invariants(self):
        with pytest.raises(ValidationError, match="non-increasing"):
            DiscreteProbTable([-0.1, 0.0, 0.1], [0.8, 0.9, 0.7])
        with pytest.raises(ValidationError, match="delta = 0"):
            DiscreteProbTable([0.1, 0.2], [0.9, 0.8])
        with pytest.raises(ValidationError, match="ascending"):
            DiscreteProbTable([0.1, 0.0], [0.9, 0.95])

    def test_file_round_trip(self, tmp_path):
        save_table(TABLE1, tmp_path / "t.csv")
        assert load_table(tmp_path / "t.csv") == TABLE1

    def test_vertex_inside_box(self):
        assert ma_vertex_inside(-0.1, -0.5, -0.2, 0.2)  # vertex at -0.1
        assert not ma_vertex_inside(-0.1, -0.1, -0.2, 0.2)  # vertex at -0.5
