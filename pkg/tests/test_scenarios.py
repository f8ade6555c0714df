import json
import math

import numpy as np
import pytest

from renewalopt import (
    Constraints,
    DiscreteGrid,
    Portfolio,
    PremiumSplit,
    RoundingConfig,
    Scenario,
    ValidationError,
    emit_report,
    generate_synthetic,
    q_vol,
    run_scenario,
    run_split_scenario,
    run_toy_model,
)
from renewalopt.exceptions import InfeasibleError
from renewalopt.scenarios import (
    ROW_LABELS,
    load_scenarios,
    parse_records,
    report_from_deltas,
    scenario_from_dict,
    toy_scenarios,
)


class TestReport:
    def test_invariants(self, synthetic_ma):
        rep = run_scenario(synthetic_ma, Scenario("volume", Constraints(0.91)))
        assert rep.n_increases + rep.n_decreases + rep.n_zero == rep.n
        assert rep.volume_growth_pct == pytest.approx(100 * (rep.volume / rep.baseline_volume - 1))
        assert rep.retention == pytest.approx(rep.expected_count / rep.n)
        assert rep.volume == pytest.approx(q_vol(synthetic_ma, rep.deltas))
        assert rep.retention >= 0.91 - 1e-9 and rep.feasible

    def test_zero_grid_is_identity(self):
        pf = Portfolio.mc([100.0, 200.0, 300.0])
        grid = DiscreteGrid((0.0,))
        rep = run_scenario(pf, Scenario("volume", Constraints(0.9, grid=grid)))
        assert np.all(rep.deltas == 0.0)
        assert rep.volume_growth_pct == 0.0 and rep.policy_count_growth_pct == 0.0

    def test_rounded_objective(self):
        pf = Portfolio.ma([100.0, 200.0], 0.9, -0.05)
        sc = Scenario("volume", Constraints(0.85), rounding=RoundingConfig(c=100))
        rep = report_from_deltas(pf, [0.1, 0.1], sc)
        assert rep.objective_value_rounded == 100.0 * (rep.objective_value // 100)

    def test_infeasible_carries_name(self):
        pf = Portfolio.mc([100.0])
        with pytest.raises(InfeasibleError, match="'tight'"):
            run_scenario(pf, Scenario("volume", Constraints(1.0, (-0.2, 0.2)), name="tight"))


class TestDispatch:
    def test_auto_choices(self):
        cons = Constraints(0.85)
        assert run_scenario(Portfolio.mc([100.0, 200.0]), Scenario("volume", Constraints(0.85, (-0.2, 0.2)))).solver == "mdnlp"
        assert run_scenario(Portfolio.ma([100.0], 0.9, -0.05), Scenario("volume", cons)).solver == "qp"
        assert run_scenario(Portfolio.mb([100.0], 0.9, -3.0), Scenario("volume", cons)).solver == "sqp"
        gridded = Scenario("volume", Constraints(0.85, grid=DiscreteGrid((0.0, 0.1))))
        assert run_scenario(Portfolio.ma([100.0], 0.9, -0.05), gridded).solver == "mdnlp"

    def test_incompatible(self):
        with pytest.raises(ValidationError, match="qp solver"):
            run_scenario(Portfolio.mb([100.0], 0.9, -3.0), Scenario("volume", solver="qp"))
        with pytest.raises(ValidationError, match="mdnlp solver"):
            run_scenario(Portfolio.mb([100.0], 0.9, -3.0), Scenario("volume", solver="mdnlp"))
        with pytest.raises(ValidationError, match="sqp solver"):
            run_scenario(Portfolio.mb([100.0], 0.9, -3.0),
                         Scenario("volume", Constraints(grid=DiscreteGrid((0.0, 0.1))), solver="sqp"))

    def test_sim_solver(self):
        pf = Portfolio.mc([100.0, 200.0, 300.0])
        sc = Scenario("volume", Constraints(0.9, (-0.2, 0.2)), solver="sim", sim_m=200)
        rep = run_scenario(pf, sc)
        assert rep.feasible and 0 < rep.acceptance_rate <= 1

    def test_difference_objective(self, synthetic_ma):
        rep = run_scenario(synthetic_ma, Scenario("difference", Constraints(0.91)))
        assert rep.solver == "sqp" and rep.feasible


class TestSplit:
    def test_single_band_matches_whole(self, synthetic_ma):
        rep = run_split_scenario(synthetic_ma, Scenario("volume", Constraints(0.91), split=PremiumSplit(())))
        assert all(abs(v) < 1e-9 for v in rep.difference.values())

    @pytest.mark.parametrize("ell", [0.85, 0.9])
    def test_three_bands_close(self, synthetic_ma, ell):
        sc = Scenario("volume", Constraints(ell), split=PremiumSplit((600, 1200)))
        rep = run_split_scenario(synthetic_ma, sc)
        assert len(rep.bands) == 3
        assert abs(rep.difference["volume_growth_pct"]) <= 0.5

    def test_binding_floor_split_costs_volume(self, synthetic_ma):
        # bands cannot trade retention, so the split optimum is never above the whole one
        sc = Scenario("volume", Constraints(0.91), split=PremiumSplit((600, 1200)))
        rep = run_split_scenario(synthetic_ma, sc)
        assert rep.aggregate.retention >= 0.91 - 1e-9
        assert rep.difference["volume_growth_pct"] <= 1e-9

    def test_band_floor_count(self, synthetic_ma):
        sc = Scenario("volume", Constraints(0.9), split=PremiumSplit((600,)), band_floors=(0.9,))
        with pytest.raises(ValidationError, match="band_floors"):
            run_split_scenario(synthetic_ma, sc)


class TestToyModels:
    def test_equal_premium(self):
        vol, var, ret = run_toy_model("equal-premium", n=300)
        assert vol.feasible and var.feasible and ret.feasible
        assert ret.volume_growth_pct >= 10.0 - 1e-6

    def test_retention_max_beats_volume_retention(self):
        vol, _, ret = run_toy_model("equal-pi", n=300)
        assert ret.retention >= vol.retention - 1e-9
        assert ret.volume_growth_pct >= 10.0 - 1e-6

    def test_scenarios_in_order(self):
        assert [s.objective for s in toy_scenarios()] == ["volume", "volume-variance", "retention-max"]


class TestRendering:
    @pytest.fixture
    def reports(self, synthetic_ma):
        return [run_scenario(synthetic_ma, Scenario("volume", Constraints(ell), name=f"l{ell}"))
                for ell in (0.9, 0.91)]

    def test_csv_json_agree(self, reports):
        from_csv = parse_records(emit_report(reports, "csv"), "csv")
        from_json = parse_records(emit_report(reports, "json"), "json")
        def canon(recs):
            return [{k: None if isinstance(v, float) and math.isnan(v) else v for k, v in r.items()}
                    for r in recs]

        assert canon(from_csv) == canon(from_json)

    def test_table_labels(self, reports):
        text = emit_report(reports, "table")
        for label in ("Expected premium volume (%)", "Expected number of policies (%)"):
            assert label in text
        assert "l0.9" in text and "l0.91" in text
        assert set(ROW_LABELS) <= set(reports[0].record())

    def test_unknown_format(self, reports):
        with pytest.raises(ValidationError):
            emit_report(reports, "xml")


class TestScenarioFiles:
    def test_full_document(self, tmp_path):
        doc = {
            "name": "s", "objective": {"type": "retention-max", "loading_C": {"fraction": 0.1}},
            "retention_floor": 0.8, "delta_bounds": [-0.1, 0.2], "tau_bounds": [None, 150],
            "grid": {"a": -0.1, "b": 0.2, "c1": 20}, "rounding": {"c": 1000, "c1": 100},
            "split": [600, 1200], "seed": 3,
        }
        sc = scenario_from_dict(doc)
        assert sc.objective == "retention-max" and sc.loading_fraction == 0.1
        assert sc.constraints.abs_bounds[1] == 150.0
        assert len(sc.constraints.grid) == 7
        assert sc.split.n_bands == 3

    def test_list_file(self, tmp_path):
        path = tmp_path / "sc.json"
        path.write_text(json.dumps([{"retention_floor": 0.9}, {"solver": {"type": "sim", "m": 5}}]))
        a, b = load_scenarios(path)
        assert a.constraints.retention_floor == 0.9
        assert b.solver == "sim" and b.sim_m == 5

    def test_unknown_key(self):
        with pytest.raises(ValidationError, match="unknown scenario keys: colour"):
            scenario_from_dict({"colour": "red"})

    def test_bad_values(self):
        with pytest.raises(ValidationError):
            scenario_from_dict({"objective": "profit"})
        with pytest.raises(ValidationError):
            scenario_from_dict({"objective": "retention-max"})

    def test_generated_portfolio_runs(self):
        pf = generate_synthetic(100, 1, model="mb")
        rep = run_scenario(pf, scenario_from_dict({"objective": "volume-variance", "retention_floor": 0.88}))
        assert rep.feasible and rep.solver == "sqp"
