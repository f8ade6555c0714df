"""Objective functions, business constraints and a Monte Carlo check of them.

A vector of premium changes ``deltas`` is a plain float array aligned with
the portfolio order; the absolute change of policy ``i`` is
``premium[i] * deltas[i]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .portfolio import Portfolio

FEAS_TOL = 1e-9


def as_deltas(pf: Portfolio, deltas) -> np.ndarray:
    d = np.asarray(deltas, dtype=float)
    if d.ndim == 0:
        d = np.full(pf.n, float(d))
    if d.shape != (pf.n,):
        raise ValidationError(f"delta vector has length {d.size}, portfolio has {pf.n} policies")
    if not np.all(np.isfinite(d)):
        raise ValidationError("delta vector must be finite")
    return d


# constraint types ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteGrid:
    """Ascending set of admissible premium changes."""

    values: np.ndarray
    allow_zero_excluded: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValidationError("grid must not be empty")
        if np.any(np.diff(v) <= 0):
            raise ValidationError("grid values must be strictly ascending")
        if not self.allow_zero_excluded and not np.any(np.abs(v) <= 1e-12):
            raise ValidationError("grid must contain 0 unless allow_zero_excluded is set")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        return isinstance(other, DiscreteGrid) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    @classmethod
    def lattice(cls, a: float, b: float, c1: float) -> "DiscreteGrid":
        """Multiples of ``1/c1`` inside ``[a, b]``."""
        if c1 <= 0:
            raise ValidationError("c1 must be positive")
        k = np.arange(math.ceil(a * c1 - 1e-9), math.floor(b * c1 + 1e-9) + 1)
        return cls(k / c1)

    def contains(self, deltas, tol: float = 1e-9) -> np.ndarray:
        d = np.asarray(deltas, dtype=float)
        pos = np.clip(np.searchsorted(self.values, d), 1, max(self.values.size - 1, 1))
        if self.values.size == 1:
            return np.abs(d - self.values[0]) <= tol
        near = np.minimum(np.abs(d - self.values[pos - 1]), np.abs(d - self.values[pos]))
        return near <= tol


#: The nine admissible changes -20%, -15%, ..., +20%.
DEFAULT_GRID = DiscreteGrid(np.round(np.arange(-0.20, 0.2001, 0.05), 10))


def load_grid(path) -> DiscreteGrid:
    """One premium change per line, as a decimal fraction."""
    lines = Path(path).read_text(encoding="utf-8").split()
    return DiscreteGrid(np.array([float(x) for x in lines]))


def save_grid(grid: DiscreteGrid, path) -> None:
    Path(path).write_text("".join(f"{v!r}\n" for v in grid.values.tolist()), encoding="utf-8")


@dataclass(frozen=True)
class Constraints:
    """Retention floor, relative and absolute bounds, optional grid.

    The floor must lie in ``[0.7, 1]`` and the relative box must contain 0
    unless the corresponding ``allow_*`` flag is set.
    """

    retention_floor: float = 0.85
    rel_bounds: tuple = (-0.10, 0.20)
    abs_bounds: tuple = (-math.inf, math.inf)
    grid: DiscreteGrid | None = None
    allow_any_floor: bool = False
    allow_zero_excluded: bool = False

    def __post_init__(self):
        ell = float(self.retention_floor)
        lo_floor = 0.0 if self.allow_any_floor else 0.7
        if not lo_floor <= ell <= 1.0:
            raise ValidationError(
                f"retention floor {ell} outside [{lo_floor}, 1]"
                + ("" if self.allow_any_floor else " (set allow_any_floor to override)")
            )
        a, b = (float(x) for x in self.rel_bounds)
        A, B = (float(x) for x in self.abs_bounds)
        if a > b:
            raise ValidationError("relative bounds must satisfy a <= b")
        if A > B:
            raise ValidationError("absolute bounds must satisfy A <= B")
        if not self.allow_zero_excluded and not a <= 0.0 <= b:
            raise ValidationError("relative bounds exclude 0 (set allow_zero_excluded to override)")
        object.__setattr__(self, "retention_floor", ell)
        object.__setattr__(self, "rel_bounds", (a, b))
        object.__setattr__(self, "abs_bounds", (A, B))

    def box(self, pf: Portfolio) -> tuple[np.ndarray, np.ndarray]:
        """Per-policy bounds on the relative change combining both boxes."""
        a, b = self.rel_bounds
        A, B = self.abs_bounds
        lo = np.maximum(a, A / pf.premium)
        hi = np.minimum(b, B / pf.premium)
        if np.any(lo > hi):
            i = int(np.flatnonzero(lo > hi)[0])
            raise ValidationError(
                f"policy {pf.ids[i]}: relative and absolute bounds do not intersect"
            )
        return lo, hi

    def with_floor(self, ell: float) -> "Constraints":
        return Constraints(
            ell, self.rel_bounds, self.abs_bounds, self.grid,
            self.allow_any_floor, self.allow_zero_excluded,
        )


@dataclass(frozen=True)
class RoundingConfig:
    c: float = 1000.0
    c1: float = 100.0

    def __post_init__(self):
        if not (self.c > 0 and self.c1 > 0):
            raise ValidationError("rounding constants must be positive")


# objectives ---------------------------------------------------------------


def q_vol(pf: Portfolio, deltas) -> float:
    """Expected renewed premium volume ``sum P_i (1 + d_i) psi_i``."""
    d = as_deltas(pf, deltas)
    return float(np.sum(pf.premium * (1.0 + d) * pf.psi(d)))


def q_var(pf: Portfolio, deltas, mode: str = "corrected") -> float:
    """Variance of the renewed premium volume.

    ``"corrected"``: ``sum (P_i (1+d_i))**2 psi_i (1-psi_i)``, the variance of a
    sum of independent Bernoulli-weighted premiums. ``"paper"``: the formula
    without the square, ``sum P_i (1+d_i) psi_i (1-psi_i)``.
    """
    d = as_deltas(pf, deltas)
    p = pf.psi(d)
    new_premium = pf.premium * (1.0 + d)
    if mode == "corrected":
        return float(np.sum(new_premium**2 * p * (1.0 - p)))
    if mode == "paper":
        return float(np.sum(new_premium * p * (1.0 - p)))
    raise ValueError("mode must be 'corrected' or 'paper'")


def q_dif(pf: Portfolio, deltas) -> float:
    """Expected premium difference ``sum P_i d_i psi_i``."""
    d = as_deltas(pf, deltas)
    return float(np.sum(pf.premium * d * pf.psi(d)))


def retention(pf: Portfolio, deltas) -> float:
    """Expected fraction of policies that renew (unweighted mean of psi)."""
    d = as_deltas(pf, deltas)
    return float(np.mean(pf.psi(d)))


def rounded(value: float, cfg: RoundingConfig | float) -> float:
    """``c * floor(value / c)`` computed exactly on the binary values."""
    c = cfg.c if isinstance(cfg, RoundingConfig) else float(cfg)
    if c <= 0:
        raise ValidationError("c must be positive")
    fc = Fraction(c)
    k = math.floor(Fraction(value) / fc)
    return float(k * fc)


# feasibility --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    clause: str
    index: int | None
    value: float
    bound: float


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    retention: float
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.feasible

    def tightest(self) -> Violation | None:
        if not self.violations:
            return None
        return max(self.violations, key=lambda v: abs(v.value - v.bound))


def feasible(pf: Portfolio, deltas, cons: Constraints, tol: float = FEAS_TOL) -> FeasibilityReport:
    """Check retention floor, both boxes and grid membership."""
    d = as_deltas(pf, deltas)
    violations = []
    ret = float(np.mean(pf.psi(d))) if pf.model_kind != "mc" or _on_tables(pf, d) else math.nan
    if math.isnan(ret):
        violations.append(Violation("retention", None, math.nan, cons.retention_floor))
    elif ret < cons.retention_floor - tol:
        violations.append(Violation("retention", None, ret, cons.retention_floor))
    a, b = cons.rel_bounds
    for i in np.flatnonzero(d < a - tol):
        violations.append(Violation("relative bound", int(i), float(d[i]), a))
    for i in np.flatnonzero(d > b + tol):
        violations.append(Violation("relative bound", int(i), float(d[i]), b))
    A, B = cons.abs_bounds
    tau = pf.premium * d
    scale = tol * np.maximum(1.0, pf.premium)
    for i in np.flatnonzero(tau < A - scale):
        violations.append(Violation("absolute bound", int(i), float(tau[i]), A))
    for i in np.flatnonzero(tau > B + scale):
        violations.append(Violation("absolute bound", int(i), float(tau[i]), B))
    if cons.grid is not None:
        for i in np.flatnonzero(~cons.grid.contains(d)):
            violations.append(Violation("grid", int(i), float(d[i]), math.nan))
    return FeasibilityReport(not violations, ret, violations)


def _on_tables(pf, d):
    try:
        pf.psi(d)
    except ValidationError:
        return False
    return True


# Monte Carlo --------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    volume_mean: float
    volume_var: float
    count_mean: float
    volume_mean_se: float
    volume_var_se: float
    count_mean_se: float
    replications: int


def mc_oracle(pf: Portfolio, deltas, replications: int, seed: int, block: int = 10_000) -> MonteCarloEstimate:
    """Simulate independent renewals and summarise volume and policy count.

    Replications are generated in fixed blocks, each from its own stream
    spawned from ``seed``, so results do not depend on how blocks are scheduled.
    """
    if replications < 1:
        raise ValidationError("replications must be at least 1")
    d = as_deltas(pf, deltas)
    p = pf.psi(d)
    new_premium = pf.premium * (1.0 + d)
    n_blocks = -(-replications // block)
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    volumes = np.empty(replications)
    counts = np.empty(replications)
    for k, ss in enumerate(streams):
        start = k * block
        m = min(block, replications - start)
        renew = np.random.default_rng(ss).random((m, pf.n)) < p
        volumes[start:start + m] = renew @ new_premium
        counts[start:start + m] = renew.sum(axis=1)
    vm = float(volumes.mean())
    vv = float(volumes.var(ddof=1)) if replications > 1 else 0.0
    cm = float(counts.mean())
    if replications > 1:
        centered = volumes - vm
        m4 = float(np.mean(centered**4))
        var_se = math.sqrt(max(m4 - vv**2, 0.0) / replications)
        vm_se = math.sqrt(vv / replications)
        cm_se = float(counts.std(ddof=1)) / math.sqrt(replications)
    else:
        var_se = vm_se = cm_se = math.nan
    return MonteCarloEstimate(vm, vv, cm, vm_se, var_se, cm_se, replications)
