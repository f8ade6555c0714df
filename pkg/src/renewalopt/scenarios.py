"""Scenario definitions, solver dispatch and report tables.

A scenario couples an objective, constraints and a solver. Reports are pure
functions of the portfolio and the returned premium changes: growth figures
compare expected values at the solution with those at ``delta = 0``.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import objectives as obj
from .exceptions import RenewalOptError, ValidationError
from .mdnlp import MdnlpConfig, mdnlp_solve
from .objectives import Constraints, DiscreteGrid, RoundingConfig
from .portfolio import MOTOR_CALIBRATION, Portfolio, PremiumSplit, generate_synthetic
from .qp import assemble_qp, solve_qp, solve_volume_variance
from .simulation import (
    SimConfig,
    SimPrior,
    load_prior,
    prior_from_solution,
    sim_optimize,
    uniform_prior,
    uniform_prior_for_floor,
)
from .sqp import (
    SqpConfig,
    build_problem_difference,
    build_problem_retention_max,
    build_problem_volume,
    build_problem_volume_variance,
    sqp_solve,
)

OBJECTIVES = ("volume", "volume-variance", "difference", "retention-max")
SOLVERS = ("auto", "qp", "sqp", "mdnlp", "sim")


@dataclass(frozen=True)
class Scenario:
    """One optimisation run.

    ``risk_weight`` defaults to ``1 / mean premium`` for the volume-variance
    objective. The retention-max volume loading is either ``loading_C`` (money)
    or ``loading_fraction`` of the baseline volume. ``sim_prior`` is one of
    ``"uniform"`` (grid values inside the box), ``"uniform-table"`` (the
    tabulated set for the retention floor), ``"mdnlp"`` (distribution of the
    grid solution) or a :class:`SimPrior`.
    """

    objective: str = "volume"
    constraints: Constraints = field(default_factory=Constraints)
    solver: str = "auto"
    split: PremiumSplit | None = None
    rounding: RoundingConfig | None = None
    risk_weight: float | None = None
    loading_C: float | None = None
    loading_fraction: float | None = None
    sim_prior: object = "uniform-table"
    sim_m: int = 1000
    seed: int = 0
    variance_mode: str = "corrected"
    band_floors: tuple | None = None
    name: str = ""
    trace_path: str | None = None

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"unknown objective {self.objective!r}; expected one of {OBJECTIVES}")
        if self.solver not in SOLVERS:
            raise ValidationError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if self.objective == "retention-max" and self.loading_C is None and self.loading_fraction is None:
            raise ValidationError("retention-max needs loading_C or loading_fraction")
        if self.risk_weight is not None and self.risk_weight < 0:
            raise ValidationError("risk_weight must be non-negative")
        if self.variance_mode not in ("corrected", "paper"):
            raise ValidationError("variance_mode must be 'corrected' or 'paper'")

    def label(self) -> str:
        return self.name or f"{self.objective}@{self.constraints.retention_floor:g}"


@dataclass(frozen=True, eq=False)
class ScenarioReport:
    name: str
    solver: str
    objective: str
    n: int
    feasible: bool
    volume_growth_pct: float
    policy_count_growth_pct: float
    average_delta_pct: float
    average_increase_pct: float
    average_decrease_pct: float
    n_increases: int
    n_decreases: int
    n_zero: int
    objective_value: float
    volume: float
    expected_count: float
    baseline_volume: float
    baseline_count: float
    retention: float
    variance_corrected: float
    variance_paper: float
    objective_value_rounded: float = math.nan
    status: str = ""
    iterations: int = 0
    kkt_residual: float = math.nan
    acceptance_rate: float = math.nan
    deltas: np.ndarray | None = None

    def record(self) -> dict:
        """Scalar fields, in declaration order."""
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "deltas"}


#: Row labels of the text table.
ROW_LABELS = {
    "volume_growth_pct": "Expected premium volume (%)",
    "policy_count_growth_pct": "Expected number of policies (%)",
    "average_delta_pct": "Average optimal delta (%)",
    "average_increase_pct": "Average optimal increase (%)",
    "average_decrease_pct": "Average optimal decrease (%)",
    "n_increases": "Number of increases",
    "n_decreases": "Number of decreases",
    "n_zero": "Number unchanged",
    "objective_value": "Objective value",
    "objective_value_rounded": "Objective value (rounded)",
    "volume": "Expected premium volume",
    "expected_count": "Expected number of policies",
    "baseline_volume": "Expected premium volume at delta = 0",
    "baseline_count": "Expected number of policies at delta = 0",
    "retention": "Retention level",
    "variance_corrected": "Variance of premium volume",
    "variance_paper": "Variance (unsquared premium)",
    "n": "Policies",
    "feasible": "Feasible",
    "solver": "Solver",
    "objective": "Objective",
    "status": "Solver status",
    "iterations": "Iterations",
    "kkt_residual": "KKT residual",
    "acceptance_rate": "Acceptance rate",
}

ZERO_TOL = 1e-12


def report_from_deltas(
    pf: Portfolio,
    deltas,
    scenario: Scenario,
    solver: str = "",
    status: str = "",
    iterations: int = 0,
    kkt_residual: float = math.nan,
    acceptance_rate: float = math.nan,
    risk_weight: float = 0.0,
) -> ScenarioReport:
    """All report fields computed from ``(pf, deltas)``."""
    d = obj.as_deltas(pf, deltas)
    cons = scenario.constraints
    psi = pf.psi(d)
    volume = math.fsum(pf.premium * (1 + d) * psi)
    count = math.fsum(psi)
    base_volume = math.fsum(pf.premium * pf.pi0)
    base_count = math.fsum(pf.pi0)
    var_c = obj.q_var(pf, d, "corrected")
    var_p = obj.q_var(pf, d, "paper")
    up, down = d > ZERO_TOL, d < -ZERO_TOL
    kind = scenario.objective
    if kind == "volume":
        value = volume
    elif kind == "difference":
        value = obj.q_dif(pf, d)
    elif kind == "volume-variance":
        value = volume - risk_weight * (var_c if scenario.variance_mode == "corrected" else var_p)
    else:
        value = count / pf.n
    rounded = obj.rounded(value, scenario.rounding) if scenario.rounding and kind != "retention-max" else math.nan
    return ScenarioReport(
        name=scenario.label(),
        solver=solver,
        objective=kind,
        n=pf.n,
        feasible=bool(obj.feasible(pf, d, cons)) if kind != "retention-max" else _loading_met(pf, d, scenario),
        volume_growth_pct=100.0 * (volume / base_volume - 1.0),
        policy_count_growth_pct=100.0 * (count / base_count - 1.0),
        average_delta_pct=100.0 * float(np.mean(d)),
        average_increase_pct=100.0 * float(np.mean(d[up])) if up.any() else math.nan,
        average_decrease_pct=100.0 * float(np.mean(d[down])) if down.any() else math.nan,
        n_increases=int(up.sum()),
        n_decreases=int(down.sum()),
        n_zero=int(pf.n - up.sum() - down.sum()),
        objective_value=float(value),
        volume=volume,
        expected_count=count,
        baseline_volume=base_volume,
        baseline_count=base_count,
        retention=count / pf.n,
        variance_corrected=var_c,
        variance_paper=var_p,
        objective_value_rounded=rounded,
        status=status,
        iterations=int(iterations),
        kkt_residual=float(kkt_residual),
        acceptance_rate=float(acceptance_rate),
        deltas=d,
    )


def _loading_target(pf, scenario):
    base = math.fsum(pf.premium * pf.pi0)
    if scenario.loading_C is not None:
        return float(scenario.loading_C)
    return float(scenario.loading_fraction) * base


def _loading_met(pf, d, scenario):
    base = math.fsum(pf.premium * pf.pi0)
    volume = obj.q_vol(pf, d)
    target = base + _loading_target(pf, scenario)
    lo, hi = scenario.constraints.box(pf)
    in_box = bool(np.all(d >= lo - 1e-9) and np.all(d <= hi + 1e-9))
    return in_box and volume >= target - 1e-9 * max(1.0, target)


def _resolve_solver(pf, scenario):
    s = scenario.solver
    if s != "auto":
        return s
    if pf.model_kind == "mc" or scenario.constraints.grid is not None:
        return "mdnlp"
    if scenario.objective == "volume" and pf.model_kind == "ma" and not np.any(pf.b):
        return "qp"
    return "sqp"


def _check_compatible(pf, scenario, solver):
    kind = scenario.objective
    if solver == "qp":
        if kind not in ("volume", "volume-variance"):
            raise ValidationError(f"the qp solver handles volume objectives, not {kind!r}")
        if pf.model_kind != "ma" or np.any(pf.b):
            raise ValidationError("the qp solver needs an Ma portfolio with b = 0")
    elif solver == "sqp":
        if pf.model_kind not in ("ma", "mb"):
            raise ValidationError("the sqp solver needs an Ma or Mb portfolio")
        if scenario.constraints.grid is not None:
            raise ValidationError("the sqp solver does not handle grid constraints; use mdnlp")
    elif solver == "mdnlp":
        if pf.model_kind != "mc" and scenario.constraints.grid is None:
            raise ValidationError("the mdnlp solver needs an Mc portfolio or a grid")
        if kind not in ("volume", "difference"):
            raise ValidationError(f"the mdnlp solver handles volume or difference, not {kind!r}")
    elif solver == "sim" and kind not in ("volume", "difference"):
        raise ValidationError(f"the sim solver handles volume or difference, not {kind!r}")


def _sim_prior(pf, scenario):
    prior = scenario.sim_prior
    cons = scenario.constraints
    if isinstance(prior, SimPrior):
        return prior
    if prior == "uniform-table":
        return uniform_prior_for_floor(cons.retention_floor)
    if prior == "uniform":
        grid = (cons.grid or obj.DEFAULT_GRID).values
        a, b = cons.rel_bounds
        return uniform_prior(grid[(grid >= a - 1e-12) & (grid <= b + 1e-12)])
    if prior == "mdnlp":
        md = mdnlp_solve(pf, cons, MdnlpConfig(objective=_offset_objective(scenario)))
        return prior_from_solution(md.deltas)
    raise ValidationError(f"unknown sim prior {prior!r}")


def _offset_objective(scenario):
    return "difference" if scenario.objective == "difference" else "volume"


def _solve(pf: Portfolio, scenario: Scenario) -> ScenarioReport:
    solver = _resolve_solver(pf, scenario)
    _check_compatible(pf, scenario, solver)
    cons = scenario.constraints
    kind = scenario.objective
    sqp_cfg = SqpConfig(trace_path=scenario.trace_path, hessian_scheme="diagonal-exact")
    rw = 0.0
    extra = {}

    if kind == "volume-variance":
        rw = scenario.risk_weight if scenario.risk_weight is not None else 1.0 / float(np.mean(pf.premium))
    if solver == "qp":
        if kind == "volume":
            sol = solve_qp(assemble_qp(pf, cons))
            d, extra = sol.deltas, dict(status="optimal", iterations=sol.iterations, kkt_residual=sol.kkt.max_residual)
        else:
            sol = solve_volume_variance(pf, cons, rw, scenario.variance_mode, sqp_cfg)
            d, extra = sol.deltas, dict(status=sol.method, kkt_residual=sol.kkt.max_residual)
    elif solver == "sqp":
        if kind == "volume":
            problem = build_problem_volume(pf, cons)
        elif kind == "difference":
            problem = build_problem_difference(pf, cons)
        elif kind == "volume-variance":
            problem = build_problem_volume_variance(pf, cons, rw, scenario.variance_mode)
        else:
            problem = build_problem_retention_max(pf, cons, _loading_target(pf, scenario))
        res = sqp_solve(problem, None, sqp_cfg)
        d = res.deltas
        extra = dict(status=res.status, iterations=res.iterations, kkt_residual=res.kkt.max_residual)
    elif solver == "mdnlp":
        res = mdnlp_solve(pf, cons, MdnlpConfig(objective=_offset_objective(scenario)))
        d = res.deltas
        extra = dict(status="local" if res.local else "optimal", iterations=len(res.trace))
    else:
        prior = _sim_prior(pf, scenario)
        res = sim_optimize(
            pf, cons, prior,
            SimConfig(m=scenario.sim_m, seed=scenario.seed, objective=_offset_objective(scenario)),
        )
        d = res.deltas
        extra = dict(
            status=f"best of {res.stats.successful} feasible draws",
            iterations=res.stats.draws,
            acceptance_rate=res.stats.acceptance_rate,
        )
    return report_from_deltas(pf, d, scenario, solver=solver, risk_weight=rw, **extra)


def _with_context(exc: Exception, scenario: Scenario) -> Exception:
    new = copy.copy(exc)
    new.args = (f"scenario {scenario.label()!r}: {exc}",) + tuple(exc.args[1:])
    return new


def run_scenario(pf: Portfolio, scenario: Scenario) -> ScenarioReport:
    """Solve ``scenario`` on ``pf``; solver errors carry the scenario name."""
    if scenario.split is not None and scenario.split.n_bands > 1:
        return run_split_scenario(pf, scenario).aggregate
    try:
        return _solve(pf, scenario)
    except RenewalOptError as exc:
        raise _with_context(exc, scenario) from exc


# splitting ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SplitReport:
    bands: list
    aggregate: ScenarioReport
    whole: ScenarioReport
    difference: dict


DIFFERENCE_FIELDS = (
    "volume_growth_pct",
    "policy_count_growth_pct",
    "average_delta_pct",
    "n_increases",
    "n_decreases",
)


def run_split_scenario(pf: Portfolio, scenario: Scenario) -> SplitReport:
    """Solve every premium band separately, then the whole portfolio.

    Each band uses the global retention floor unless ``band_floors`` gives
    one per band. A money loading is shared out in proportion to each band's
    baseline volume. The difference row is aggregate minus whole.
    """
    split = scenario.split or PremiumSplit(())
    band_of = split.assign(pf.premium)
    labels = split.labels()
    floors = scenario.band_floors
    if floors is not None and len(floors) != split.n_bands:
        raise ValidationError(f"band_floors has {len(floors)} entries for {split.n_bands} bands")
    base_total = math.fsum(pf.premium * pf.pi0)
    deltas = np.empty(pf.n)
    bands = []
    for k in range(split.n_bands):
        idx = np.flatnonzero(band_of == k)
        if idx.size == 0:
            continue
        sub = pf.subset(idx, label=labels[k])
        cons = scenario.constraints
        if floors is not None:
            cons = cons.with_floor(float(floors[k]))
        loading = scenario.loading_C
        if loading is not None:
            loading = loading * math.fsum(sub.premium * sub.pi0) / base_total
        band_sc = replace(
            scenario, constraints=cons, split=None, loading_C=loading,
            name=f"{scenario.label()} {labels[k]}",
        )
        rep = run_scenario(sub, band_sc)
        deltas[idx] = rep.deltas
        bands.append(rep)
    whole_sc = replace(scenario, split=None, name=f"{scenario.label()} unsplit")
    whole = run_scenario(pf, whole_sc)
    agg_sc = replace(scenario, split=None, name=f"{scenario.label()} aggregate")
    aggregate = report_from_deltas(
        pf, deltas, agg_sc, solver=whole.solver, status="split",
        risk_weight=_risk_weight_of(pf, scenario),
    )
    diff = {f: getattr(aggregate, f) - getattr(whole, f) for f in DIFFERENCE_FIELDS}
    return SplitReport(bands, aggregate, whole, diff)


def _risk_weight_of(pf, scenario):
    if scenario.objective != "volume-variance":
        return 0.0
    return scenario.risk_weight if scenario.risk_weight is not None else 1.0 / float(np.mean(pf.premium))


# toy models ---------------------------------------------------------------


TOY_PREMIUM = 200.0
TOY_PI = 0.9


def toy_portfolio(kind: str, n: int = 1000, seed: int = 0) -> Portfolio:
    """Ma portfolio with equal premiums (``"equal-premium"``) or equal base probabilities (``"equal-pi"``)."""
    if kind == "equal-premium":
        base = generate_synthetic(n, seed, MOTOR_CALIBRATION, model="ma")
        return Portfolio.ma(np.full(n, TOY_PREMIUM), base.pi0, base.a, label="toy equal premium")
    if kind == "equal-pi":
        base = generate_synthetic(n, seed, MOTOR_CALIBRATION, model="ma", pi_range=(TOY_PI, TOY_PI))
        return Portfolio.ma(base.premium, base.pi0, base.a, label="toy equal pi")
    raise ValidationError(f"unknown toy model {kind!r}")


def toy_scenarios(
    retention_floor: float = 0.85,
    rel_bounds=(-0.10, 0.20),
    loading_fraction: float = 0.10,
    risk_weight: float | None = None,
) -> list[Scenario]:
    """Volume, volume-variance and retention-max, in that order."""
    cons = Constraints(retention_floor, rel_bounds)
    return [
        Scenario("volume", cons, name="Scenario 1"),
        Scenario("volume-variance", cons, risk_weight=risk_weight, name="Scenario 2"),
        Scenario("retention-max", cons, loading_fraction=loading_fraction, name="Scenario 3"),
    ]


def run_toy_model(kind: str, scenarios: list[Scenario] | None = None, n: int = 1000, seed: int = 0) -> list[ScenarioReport]:
    pf = toy_portfolio(kind, n, seed)
    return [run_scenario(pf, sc) for sc in (scenarios or toy_scenarios())]


# rendering ----------------------------------------------------------------


def _records(reports):
    if isinstance(reports, (ScenarioReport, SplitReport)):
        reports = [reports]
    out = []
    for r in reports:
        if isinstance(r, SplitReport):
            out.extend(b.record() for b in r.bands)
            out.append(r.aggregate.record())
            out.append(r.whole.record())
        else:
            out.append(r.record())
    return out


def _fmt(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        return f"{value:,}".replace(",", "'")
    if isinstance(value, float):
        if math.isnan(value):
            return "-"
        return f"{value:.2f}" if abs(value) < 1e6 else f"{value:.6g}"
    return str(value)


def emit_report(reports, fmt: str = "table", path=None) -> str:
    """Render reports as ``csv``, ``json`` or a text ``table``; optionally write to ``path``."""
    recs = _records(reports)
    if fmt == "json":
        text = json.dumps(recs, indent=2, allow_nan=True) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(recs[0]) if recs else [], lineterminator="\n")
        w.writeheader()
        for r in recs:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        text = buf.getvalue()
    elif fmt in ("table", "text-table", "text"):
        text = _table(recs, reports)
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot write report to {path}: {exc}") from None
    return text


def _table(recs, reports):
    if not recs:
        return ""
    names = [r["name"] for r in recs]
    rows = [("", names)]
    for key, label in ROW_LABELS.items():
        rows.append((label, [_fmt(r[key]) for r in recs]))
    if isinstance(reports, SplitReport):
        reports = [reports]
    for r in reports if isinstance(reports, list) else []:
        if isinstance(r, SplitReport):
            rows.append(("", []))
            rows.append((f"Difference ({r.aggregate.name} - unsplit)", []))
            for k, v in r.difference.items():
                rows.append((ROW_LABELS[k], [_fmt(v)]))
    w0 = max(len(label) for label, _ in rows)
    widths = [max(len(str(c)) for c in col) for col in zip(*[vals for _, vals in rows if len(vals) == len(names)])]
    lines = []
    for label, vals in rows:
        cells = [str(v).rjust(widths[i] if i < len(widths) else 0) for i, v in enumerate(vals)]
        lines.append(("  ".join([label.ljust(w0)] + cells)).rstrip())
    return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioReport) if f.name != "deltas"}


def parse_records(text: str, fmt: str) -> list[dict]:
    """Read back the records written by :func:`emit_report` (csv or json)."""
    if fmt == "json":
        return json.loads(text)
    if fmt != "csv":
        raise ValidationError("only csv and json reports can be parsed")
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        rec = {}
        for k, v in row.items():
            t = _FIELD_TYPES.get(k, "str")
            if t == "bool":
                rec[k] = v == "True"
            elif t == "int":
                rec[k] = int(v)
            elif t == "float":
                rec[k] = float(v)
            else:
                rec[k] = v
        out.append(rec)
    return out


def write_deltas(pf: Portfolio, report: ScenarioReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "premium", "delta", "new_premium", "renewal_prob"])
        psi = pf.psi(report.deltas)
        for pid, p, d, q in zip(pf.ids, pf.premium, report.deltas, psi):
            w.writerow([pid, repr(float(p)), repr(float(d)), repr(float(p * (1 + d))), repr(float(q))])


# scenario files -----------------------------------------------------------


def _grid_from_json(value):
    if value is None:
        return None
    if isinstance(value, dict):
        return DiscreteGrid.lattice(float(value["a"]), float(value["b"]), float(value["c1"]))
    return DiscreteGrid(np.asarray(value, dtype=float), allow_zero_excluded=True)


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> Scenario:
    """Build a :class:`Scenario` from its JSON representation."""
    doc = dict(doc)
    known = {
        "name", "objective", "retention_floor", "delta_bounds", "tau_bounds", "grid", "solver",
        "split", "rounding", "risk_weight", "loading_C", "loading_fraction", "sim", "seed",
        "variance_mode", "band_floors", "allow_any_floor", "allow_zero_excluded",
    }
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValidationError(f"unknown scenario keys: {', '.join(unknown)}")

    objective = doc.get("objective", "volume")
    risk_weight, loading_C, loading_fraction = doc.get("risk_weight"), doc.get("loading_C"), doc.get("loading_fraction")
    if isinstance(objective, dict):
        spec = dict(objective)
        objective = spec.pop("type")
        risk_weight = spec.pop("risk_weight", risk_weight)
        loading_C = spec.pop("loading_C", loading_C)
        loading_fraction = spec.pop("loading_fraction", loading_fraction)
    if isinstance(loading_C, dict):
        loading_fraction = loading_C.get("fraction")
        loading_C = None

    solver = doc.get("solver", "auto")
    sim = dict(doc.get("sim") or {})
    if isinstance(solver, dict):
        spec = dict(solver)
        solver = spec.pop("type")
        sim.update(spec)
    prior = sim.get("prior", "uniform-table")
    if isinstance(prior, dict):
        if "values" in prior:
            prior = uniform_prior(prior["values"])
        elif "file" in prior:
            p = Path(prior["file"])
            prior = load_prior(p if p.is_absolute() or base_dir is None else base_dir / p)
        else:
            raise ValidationError("sim prior object needs 'values' or 'file'")

    tau_lo, tau_hi = doc.get("tau_bounds", (None, None))
    cons = Constraints(
        retention_floor=float(doc.get("retention_floor", 0.85)),
        rel_bounds=tuple(doc.get("delta_bounds", (-0.10, 0.20))),
        abs_bounds=(
            -math.inf if tau_lo is None else float(tau_lo),
            math.inf if tau_hi is None else float(tau_hi),
        ),
        grid=_grid_from_json(doc.get("grid")),
        allow_any_floor=bool(doc.get("allow_any_floor", False)),
        allow_zero_excluded=bool(doc.get("allow_zero_excluded", False)),
    )
    split = doc.get("split")
    rounding = doc.get("rounding")
    floors = doc.get("band_floors")
    return Scenario(
        objective=objective,
        constraints=cons,
        solver=solver,
        split=PremiumSplit(tuple(split)) if split is not None else None,
        rounding=RoundingConfig(**rounding) if rounding else None,
        risk_weight=None if risk_weight is None else float(risk_weight),
        loading_C=None if loading_C is None else float(loading_C),
        loading_fraction=None if loading_fraction is None else float(loading_fraction),
        sim_prior=prior,
        sim_m=int(sim.get("m", 1000)),
        seed=int(doc.get("seed", 0)),
        variance_mode=doc.get("variance_mode", "corrected"),
        band_floors=tuple(floors) if floors is not None else None,
        name=str(doc.get("name", "")),
    )


def load_scenarios(path) -> list[Scenario]:
    """One scenario object, or a list of them, per JSON file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    docs = doc if isinstance(doc, list) else [doc]
    return [scenario_from_dict(d, path.parent) for d in docs]
