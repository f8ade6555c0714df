"""Random search over premium changes drawn from a prior distribution.

Each replication draws one premium change per policy from the prior and
redraws the whole vector until it satisfies every constraint; the best
feasible vector over all replications is returned. Every replication owns a
random stream keyed by ``(seed, replication)``, so results do not depend on
how replications are scheduled.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InfeasibleError, ValidationError
from .models import DELTA_MATCH_TOL
from .objectives import Constraints, FeasibilityReport, feasible
from .portfolio import Portfolio

#: Candidate premium changes per retention floor used by the uniform prior.
UNIFORM_RANGES = {
    0.85: (0.15, 0.20),
    0.875: (0.10, 0.15),
    0.90: (0.0, 0.05, 0.10, 0.15),
    0.925: (-0.05, 0.0, 0.05, 0.10, 0.15),
    0.95: (-0.05, 0.0, 0.05, 0.10, 0.15),
    0.975: (-0.20, -0.10, -0.05, 0.0, 0.05, 0.10, 0.15),
}


@dataclass(frozen=True, eq=False)
class SimPrior:
    """Discrete distribution of premium changes.

    ``weights`` is either one row shared by all policies or one row per
    policy. ``kind`` records the origin: ``"uniform"``, ``"empirical"`` or
    ``"from-mdnlp"``.
    """

    values: np.ndarray
    weights: np.ndarray
    kind: str = "empirical"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float)
        if v.size == 0:
            raise ValidationError("prior needs at least one value")
        if np.any(np.diff(v) <= 0):
            raise ValidationError("prior values must be strictly ascending")
        if w.ndim == 1:
            w = w[None, :]
        if w.ndim != 2 or w.shape[1] != v.size:
            raise ValidationError("prior weights must have one column per value")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("prior weights must be finite and non-negative")
        sums = w.sum(axis=1)
        if np.any(sums <= 0):
            raise ValidationError("every prior row needs positive total weight")
        w = w / sums[:, None]
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @property
    def per_policy(self) -> bool:
        return self.weights.shape[0] > 1

    def cdf(self, n: int) -> np.ndarray:
        w = self.weights if self.per_policy else np.broadcast_to(self.weights, (n, self.values.size))
        if w.shape[0] != n:
            raise ValidationError(f"prior has {w.shape[0]} rows, portfolio has {n} policies")
        c = np.cumsum(w, axis=1)
        c[:, -1] = 1.0
        return c


def uniform_prior(values, kind: str = "uniform") -> SimPrior:
    v = np.unique(np.asarray(values, dtype=float))
    return SimPrior(v, np.ones(v.size), kind)


def uniform_prior_for_floor(retention_floor: float) -> SimPrior:
    """Uniform prior over the candidate set tabulated for ``retention_floor``."""
    for ell, values in UNIFORM_RANGES.items():
        if abs(ell - retention_floor) < 1e-9:
            return uniform_prior(values)
    raise ValidationError(
        f"no tabulated range for floor {retention_floor}; available: {sorted(UNIFORM_RANGES)}"
    )


def prior_from_solution(deltas) -> SimPrior:
    """Empirical distribution of the coordinates of a grid solution."""
    d = np.round(np.asarray(deltas, dtype=float), 12)
    values, counts = np.unique(d, return_counts=True)
    return SimPrior(values, counts.astype(float), "from-mdnlp")


def load_prior(path, pf: Portfolio | None = None) -> SimPrior:
    """Read ``delta,weight`` rows, or ``id,delta,weight`` for per-policy priors."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if not {"delta", "weight"} <= set(fields):
            raise ValidationError(f"{path}: header must contain 'delta,weight'")
        rows = list(reader)
    if not rows:
        raise ValidationError(f"{path}: no prior rows")
    try:
        deltas = np.array([float(r["delta"]) for r in rows])
        weights = np.array([float(r["weight"]) for r in rows])
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    values = np.unique(deltas)
    col = np.searchsorted(values, deltas)
    if "id" not in fields:
        w = np.zeros(values.size)
        np.add.at(w, col, weights)
        return SimPrior(values, w, "empirical")
    if pf is None:
        raise ValidationError("a per-policy prior needs the portfolio to order its rows")
    pos = {pid: i for i, pid in enumerate(pf.ids)}
    w = np.zeros((pf.n, values.size))
    for r, c, wt in zip(rows, col, weights):
        if r["id"] not in pos:
            raise ValidationError(f"{path}: unknown policy id {r['id']!r}")
        w[pos[r["id"]], c] += wt
    missing = np.flatnonzero(w.sum(axis=1) <= 0)
    if missing.size:
        raise ValidationError(f"{path}: no prior rows for policy {pf.ids[missing[0]]!r}")
    return SimPrior(values, w, "empirical")


def save_prior(prior: SimPrior, path, pf: Portfolio | None = None) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if prior.per_policy:
            if pf is None:
                raise ValidationError("writing a per-policy prior needs the portfolio ids")
            w.writerow(["id", "delta", "weight"])
            for pid, row in zip(pf.ids, prior.weights):
                for v, wt in zip(prior.values, row):
                    if wt > 0:
                        w.writerow([pid, repr(float(v)), repr(float(wt))])
        else:
            w.writerow(["delta", "weight"])
            for v, wt in zip(prior.values, prior.weights[0]):
                w.writerow([repr(float(v)), repr(float(wt))])


@dataclass(frozen=True)
class SimConfig:
    m: int = 1000
    max_resamples_per_replication: int = 10_000
    seed: int = 0
    objective: str = "volume"  # or "difference"
    max_batch: int = 64

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError("m must be at least 1")
        if self.max_resamples_per_replication < 1:
            raise ValidationError("max_resamples_per_replication must be at least 1")
        if self.objective not in ("volume", "difference"):
            raise ValidationError("objective must be 'volume' or 'difference'")


@dataclass(frozen=True, eq=False)
class SimStats:
    replications: int
    successful: int
    draws: int
    draws_per_replication: np.ndarray
    best_replication: int

    @property
    def acceptance_rate(self) -> float:
        return self.successful / self.draws if self.draws else 0.0


@dataclass(frozen=True, eq=False)
class SimResult:
    deltas: np.ndarray
    objective: float
    stats: SimStats
    report: FeasibilityReport

    def __iter__(self):
        return iter((self.deltas, self.objective, self.stats))


def _support_tables(pf, cons, prior, offset):
    values = prior.values
    n, m = pf.n, values.size
    grid_vals = np.broadcast_to(values, (n, m))
    lo, hi = cons.box(pf)
    ok = (grid_vals >= lo[:, None] - 1e-12) & (grid_vals <= hi[:, None] + 1e-12)
    if cons.grid is not None:
        on_grid = cons.grid.contains(values)
        if not on_grid.all():
            bad = values[~on_grid][0]
            raise ValidationError(f"prior value {bad!r} is not on the constraint grid")
    if pf.model_kind == "mc":
        psi = np.empty((n, m))
        for k, table in enumerate(pf.tables):
            rows = pf.table_index == k
            if not rows.any():
                continue
            pos = np.clip(np.searchsorted(table.deltas, values), 0, table.deltas.size - 1)
            hit = np.abs(table.deltas[pos] - values) <= DELTA_MATCH_TOL
            if not hit.all():
                raise ValidationError(
                    f"prior value {values[~hit][0]!r} is not a point of table {table.name!r}"
                )
            psi[rows] = table.probs[pos][None, :]
    else:
        psi = np.stack([pf.psi(np.full(n, v)) for v in values], axis=1)
    obj = pf.premium[:, None] * (offset + grid_vals) * psi
    return psi, obj, ok


def sim_optimize(pf: Portfolio, cons: Constraints, prior: SimPrior, cfg: SimConfig | None = None) -> SimResult:
    """Best feasible vector among ``cfg.m`` prior draws (resampled until feasible)."""
    cfg = cfg or SimConfig()
    n = pf.n
    offset = 1.0 if cfg.objective == "volume" else 0.0
    psi, obj, ok = _support_tables(pf, cons, prior, offset)
    cdf = prior.cdf(n)
    rows = np.arange(n)
    floor = n * (cons.retention_floor - 1e-9)
    shared_cdf = None if prior.per_policy else cdf[0]

    best_val, best_idx, best_rep = -math.inf, None, -1
    draws = np.zeros(cfg.m, dtype=np.int64)
    successful = 0
    last_attempt = None
    for rep in range(cfg.m):
        rng = np.random.default_rng([cfg.seed, rep])
        used = 0
        batch = 1
        found = None
        while used < cfg.max_resamples_per_replication and found is None:
            k = min(batch, cfg.max_resamples_per_replication - used)
            u = rng.random((k, n))
            if shared_cdf is not None:
                idx = np.searchsorted(shared_cdf, u, side="right")
            else:
                idx = (u[:, :, None] >= cdf[None, :, :]).sum(axis=2)
            idx = np.minimum(idx, cdf.shape[1] - 1)
            good = ok[rows, idx].all(axis=1) & (psi[rows, idx].sum(axis=1) >= floor)
            hits = np.flatnonzero(good)
            if hits.size:
                j = int(hits[0])
                found = idx[j]
                used += j + 1
            else:
                used += k
                last_attempt = idx[-1]
            batch = min(2 * batch, cfg.max_batch)
        draws[rep] = used
        if found is None:
            if rep == 0:
                break
            continue
        successful += 1
        val = math.fsum(obj[rows, found])
        if val > best_val:
            best_val, best_idx, best_rep = val, found, rep

    if best_idx is None:
        report = feasible(pf, prior.values[last_attempt], cons)
        tight = report.tightest()
        clause = f"{tight.clause} (value {tight.value:.6g}, bound {tight.bound:.6g})" if tight else "none"
        raise InfeasibleError(
            f"no feasible draw within {cfg.max_resamples_per_replication} resamples "
            f"(acceptance rate 0); tightest violated clause: {clause}",
            diagnostic=report,
        )
    reps = int(np.count_nonzero(draws)) if successful < cfg.m else cfg.m
    stats = SimStats(reps, successful, int(draws.sum()), draws[:reps], best_rep)
    deltas = prior.values[best_idx]
    return SimResult(deltas, best_val, stats, feasible(pf, deltas, cons))
