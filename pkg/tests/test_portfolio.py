import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renewalopt import MOTOR_CALIBRATION, Calibration, Portfolio, PremiumSplit, ValidationError
from renewalopt.portfolio import generate_synthetic, load_portfolio, save_portfolio, split_portfolio


def write_csv(path, rows):
    path.write_text("id,premium,pi0,model,param1,param2\n" + "".join(r + "\n" for r in rows))
    return path


class TestLoad:
    def test_polynomial_row(self, tmp_path):
        pf = load_portfolio(write_csv(tmp_path / "p.csv", ["p1,100,0.95,ma,-0.05,0"]))
        pol = pf.policy(0)
        assert (pol.id, pol.premium, pol.base_renewal_prob) == ("p1", 100.0, 0.95)
        assert pol.model_params == (-0.05, 0.0)

    def test_probability_one_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match=r"must lie in \(0,1\)"):
            load_portfolio(write_csv(tmp_path / "p.csv", ["p1,100,1.0,ma,-0.01,0"]))

    def test_window_violation_names_policy(self, tmp_path):
        # window (1 - 1/0.95, 0) = (-0.0526, 0)
        with pytest.raises(ValidationError, match="p2"):
            load_portfolio(write_csv(tmp_path / "p.csv", ["p1,100,0.95,ma,-0.01,0", "p2,100,0.95,ma,0.3,0"]))

    def test_malformed_row_reports_line(self, tmp_path):
        with pytest.raises(ValidationError, match="line 2"):
            load_portfolio(write_csv(tmp_path / "p.csv", ["p1,abc,0.95,ma,-0.01,0"]))

    def test_empty_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_portfolio(write_csv(tmp_path / "p.csv", []))

    def test_logistic_and_table_rows(self, tmp_path):
        pf = load_portfolio(write_csv(tmp_path / "p.csv", ["a,100,0.9,mb,-3,"]))
        assert pf.model_kind == "mb" and pf.T[0] == -3.0
        pf = load_portfolio(write_csv(tmp_path / "q.csv", ["a,100,0.95,mc,table1,"]))
        assert pf.model_kind == "mc" and pf.pi0[0] == 0.95


class TestRoundTrip:
    @pytest.mark.parametrize("model", ["ma", "ma_quadratic", "mb", "mc"])
    def test_save_load(self, tmp_path, model):
        pf = generate_synthetic(50, 4, model=model)
        save_portfolio(pf, tmp_path / "pf.csv")
        back = load_portfolio(tmp_path / "pf.csv")
        assert back.ids == pf.ids
        assert np.array_equal(back.premium, pf.premium)
        assert np.array_equal(back.pi0, pf.pi0)
        for name in ("a", "b", "T", "table_index"):
            if getattr(pf, name) is not None:
                assert np.array_equal(getattr(back, name), getattr(pf, name))


class TestGenerate:
    def test_calibration(self):
        pf = generate_synthetic(10_000, 1)
        assert pf.premium.min() >= MOTOR_CALIBRATION.min
        assert pf.premium.max() <= MOTOR_CALIBRATION.max
        assert abs(pf.premium.mean() - 1204) <= 0.05 * 1204

    def test_deterministic(self):
        a, b = generate_synthetic(300, 9, model="mb"), generate_synthetic(300, 9, model="mb")
        assert a.premium.tobytes() == b.premium.tobytes()
        assert a.T.tobytes() == b.T.tobytes()

    def test_single_policy(self):
        assert generate_synthetic(1, 0).n == 1

    def test_bad_inputs(self):
        with pytest.raises(ValidationError):
            generate_synthetic(0, 0)
        with pytest.raises(ValidationError):
            generate_synthetic(5, 0, Calibration(min=10, mean=20, max=10))

    @given(st.integers(0, 2**31), st.sampled_from(["ma", "ma_quadratic", "mb", "mc"]))
    def test_always_valid(self, seed, model):
        pf = generate_synthetic(20, seed, model=model)
        # the constructor re-validates every window
        Portfolio(pf.ids, pf.premium, pf.pi0, pf.model_kind, pf.a, pf.b, pf.T, pf.table_index, pf.tables)


class TestSplit:
    def test_three_bands(self):
        pf = Portfolio.ma([100, 600, 700, 1200, 5000], 0.9, -0.05)
        bands = split_portfolio(pf, PremiumSplit((600, 1200)))
        assert [b.label for b in bands] == ["<600", "[600,1200)", ">=1200"]
        assert [list(b.premium) for b in bands] == [[100], [600, 700], [1200, 5000]]

    def test_four_bands(self):
        assert PremiumSplit((500, 800, 1400)).n_bands == 4

    def test_identity(self):
        pf = generate_synthetic(30, 2)
        (only,) = split_portfolio(pf, PremiumSplit(()))
        assert only.ids == pf.ids

    def test_duplicate_threshold(self):
        with pytest.raises(ValidationError, match="twice"):
            PremiumSplit((600, 600))

    @given(st.lists(st.floats(150, 10_000), min_size=0, max_size=5, unique=True))
    def test_partition(self, thresholds):
        pf = generate_synthetic(200, 5)
        bands = split_portfolio(pf, PremiumSplit(tuple(sorted(thresholds))))
        ids = [i for b in bands for i in b.ids]
        assert sorted(ids) == sorted(pf.ids)
