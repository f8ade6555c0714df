"""Market tariff structure ``min(M0, max(exp(a x + b u), m0 + m1 x + m2 y))``.

``u`` is ``x`` in the printed form of the structure and ``y`` when
``exp_second_arg="y"``. Coefficients are recovered from target premiums by a
derivative-free simplex search with jittered restarts, followed by a
branch-wise least-squares polish.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .exceptions import ValidationError

COEFFICIENTS = ("M0", "m0", "m1", "m2", "a_coef", "b_coef")
#: Exponent above which ``exp`` would overflow a double.
EXP_OVERFLOW = 709.0


@dataclass(frozen=True)
class TariffStructure:
    """Capped maximum of an exponential and a linear branch.

    ``lower``/``upper`` are the global minimal and maximal premiums applied
    after the cap; they are not fitted.
    """

    M0: float
    m0: float
    m1: float
    m2: float
    a_coef: float = 0.0
    b_coef: float = 0.0
    lower: float = 0.0
    upper: float = math.inf
    exp_second_arg: str = "x"

    def __post_init__(self):
        if not self.M0 > 0:
            raise ValidationError("M0 must be positive")
        if self.exp_second_arg not in ("x", "y"):
            raise ValidationError("exp_second_arg must be 'x' or 'y'")
        if self.lower > self.upper:
            raise ValidationError("lower must not exceed upper")
        for name in COEFFICIENTS:
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in COEFFICIENTS], dtype=float)

    def with_vector(self, v) -> "TariffStructure":
        return replace(self, **{k: float(x) for k, x in zip(COEFFICIENTS, v)})


@dataclass(frozen=True)
class RiskPoint:
    x: float
    y: float
    target_premium: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError("risk factors must be finite")
        if not self.target_premium > 0:
            raise ValidationError("target premium must be positive")


def _exponent(t: TariffStructure, x, y):
    second = x if t.exp_second_arg == "x" else y
    return t.a_coef * x + t.b_coef * second


def branches(t: TariffStructure, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Exponent and linear-branch value at each point."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return _exponent(t, x, y), t.m0 + t.m1 * x + t.m2 * y


def evaluate_tariff(t: TariffStructure, x, y):
    """Tariff premium at ``(x, y)``; scalar in, scalar out.

    The exponential is evaluated only up to ``log(M0)`` (beyond that the cap
    wins), so large exponents never overflow.
    """
    z, lin = branches(t, x, y)
    expo = np.exp(np.minimum(z, math.log(t.M0) + 1.0))
    out = np.clip(np.minimum(t.M0, np.maximum(expo, lin)), t.lower, t.upper)
    return float(out) if out.ndim == 0 else out


def active_branch(t: TariffStructure, x, y) -> np.ndarray:
    """0 = exponential, 1 = linear, 2 = cap."""
    z, lin = branches(t, x, y)
    expo = np.exp(np.minimum(z, math.log(t.M0) + 1.0))
    inner = np.where(expo >= lin, 0, 1)
    return np.where(np.maximum(expo, lin) >= t.M0, 2, inner)


@dataclass(frozen=True, eq=False)
class FitReport:
    residuals: np.ndarray
    sse: float
    initial_sse: float
    max_relative_residual: float
    rms_relative_residual: float
    restarts: int
    best_restart: int
    history: np.ndarray
    branch_counts: tuple
    exp_overflow_points: int
    degenerate: bool


def _arrays(points):
    pts = list(points)
    x = np.array([p.x for p in pts], dtype=float)
    y = np.array([p.y for p in pts], dtype=float)
    target = np.array([p.target_premium for p in pts], dtype=float)
    return x, y, target


def _sse(t, x, y, target):
    r = evaluate_tariff(t, x, y) - target
    return float(r @ r)


def _polish(t, x, y, target, rounds=20):
    """Refit each branch by least squares on the points it currently serves."""
    best, best_sse = t, _sse(t, x, y, target)
    for _ in range(rounds):
        branch = active_branch(best, x, y)
        v = best.vector()
        cap = branch == 2
        if cap.any():
            v[0] = max(float(target[cap].mean()), 1e-12)
        lin = branch == 1
        if lin.sum() >= 3:
            design = np.column_stack([np.ones(lin.sum()), x[lin], y[lin]])
            v[1:4] = np.linalg.lstsq(design, target[lin], rcond=None)[0]
        ex = branch == 0
        if ex.sum() >= 2:
            logt = np.log(target[ex])
            if best.exp_second_arg == "x":
                # only a + b is identified; keep b and move a
                s = float(np.linalg.lstsq(x[ex][:, None], logt, rcond=None)[0][0])
                v[4] = s - v[5]
            else:
                v[4:6] = np.linalg.lstsq(np.column_stack([x[ex], y[ex]]), logt, rcond=None)[0]
        if not np.all(np.isfinite(v)) or v[0] <= 0:
            break
        cand = best.with_vector(v)
        cand_sse = _sse(cand, x, y, target)
        if cand_sse >= best_sse * (1 - 1e-14):
            break
        best, best_sse = cand, cand_sse
    return best, best_sse


def _simplex(t0, x, y, target, max_iter):
    v0 = t0.vector()
    scale = np.where(np.abs(v0) > 1e-8, np.abs(v0), 1.0)
    history = []

    def sse_scaled(u):
        v = u * scale
        if v[0] <= 0:
            return math.inf
        return _sse(t0.with_vector(v), x, y, target)

    def record(u):
        history.append(sse_scaled(u))

    res = minimize(
        sse_scaled, v0 / scale, method="Nelder-Mead", callback=record,
        options={"maxiter": max_iter, "maxfev": 4 * max_iter, "xatol": 1e-12, "fatol": 1e-14, "adaptive": True},
    )
    return t0.with_vector(res.x * scale), float(res.fun), history


def fit_tariff(
    points,
    init: TariffStructure,
    restarts: int = 5,
    jitter: float = 0.1,
    seed: int = 0,
    max_iter: int = 4000,
) -> tuple[TariffStructure, FitReport]:
    """Least-squares fit of the tariff coefficients to target premiums.

    Restart 0 starts at ``init``; the others multiply every coefficient by an
    independent factor in ``1 +- jitter``. The best structure by (sse, restart
    index) is returned, and it is never worse than ``init``.
    """
    x, y, target = _arrays(points)
    if x.size < len(COEFFICIENTS):
        raise ValidationError(f"need at least {len(COEFFICIENTS)} points, got {x.size}")
    if restarts < 1:
        raise ValidationError("restarts must be at least 1")
    init_sse = _sse(init, x, y, target)
    rng = np.random.default_rng(seed)
    starts = [init]
    for _ in range(restarts - 1):
        factor = 1.0 + jitter * rng.uniform(-1.0, 1.0, len(COEFFICIENTS))
        v = init.vector() * factor
        v[0] = abs(v[0])
        starts.append(init.with_vector(v))

    best = (init_sse, -1, init, [init_sse])
    for k, start in enumerate(starts):
        t, _, hist = _simplex(start, x, y, target, max_iter)
        t, sse = _polish(t, x, y, target)
        t, _, hist2 = _simplex(t, x, y, target, max_iter)
        t, sse = _polish(t, x, y, target)
        if sse < best[0]:
            best = (sse, k, t, hist + hist2)
    sse, k, fitted, history = best

    branch = active_branch(fitted, x, y)
    degenerate = bool(np.all(branch == 2))
    if degenerate:
        fitted = replace(init, M0=float(target.mean()))
        sse = _sse(fitted, x, y, target)
    r = evaluate_tariff(fitted, x, y) - target
    rel = np.abs(r) / target
    z, _ = branches(fitted, x, y)
    report = FitReport(
        residuals=r,
        sse=sse,
        initial_sse=init_sse,
        max_relative_residual=float(rel.max()),
        rms_relative_residual=float(np.sqrt(np.mean(rel**2))),
        restarts=len(starts),
        best_restart=max(k, 0),
        history=np.asarray(history, dtype=float) if history else np.array([sse]),
        branch_counts=tuple(int(np.count_nonzero(branch == j)) for j in range(3)),
        exp_overflow_points=int(np.count_nonzero(z > EXP_OVERFLOW)),
        degenerate=degenerate,
    )
    return fitted, report


# file formats -------------------------------------------------------------


def load_points(path) -> list[RiskPoint]:
    """Read ``x,y,premium`` rows."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"x", "y", "premium"} <= set(reader.fieldnames or []):
            raise ValidationError(f"{path}: header must contain 'x,y,premium'")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(RiskPoint(float(row["x"]), float(row["y"]), float(row["premium"])))
            except (ValueError, ValidationError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return out


def save_points(points, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "premium"])
        for p in points:
            w.writerow([repr(float(p.x)), repr(float(p.y)), repr(float(p.target_premium))])


def format_structure(t: TariffStructure, report: FitReport | None = None) -> str:
    """Flat ``key = value`` block."""
    lines = [f"{k} = {v!r}" for k, v in asdict(t).items()]
    if report is not None:
        lines += [
            f"sse = {report.sse!r}",
            f"initial_sse = {report.initial_sse!r}",
            f"max_relative_residual = {report.max_relative_residual!r}",
            f"rms_relative_residual = {report.rms_relative_residual!r}",
            f"branch_counts = {' '.join(map(str, report.branch_counts))}",
            f"degenerate = {str(report.degenerate).lower()}",
        ]
    return "\n".join(lines) + "\n"


def parse_structure(text: str) -> TariffStructure:
    fields = {}
    for line in text.splitlines():
        if "=" not in line:
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in TariffStructure.__dataclass_fields__:
            fields[key] = value.strip("'\"") if key == "exp_second_arg" else float(value)
    missing = [k for k in ("M0", "m0", "m1", "m2") if k not in fields]
    if missing:
        raise ValidationError(f"tariff block missing {', '.join(missing)}")
    return TariffStructure(**fields)
