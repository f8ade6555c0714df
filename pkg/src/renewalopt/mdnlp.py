"""Premium changes restricted to a finite grid (tabulated renewal probabilities).

The solver follows the classical recipe: solve a continuous relaxation with a
quadratic fitted to each table, round to the grid, then iterate linearised
grid subproblems solved by branch and bound. A final stage solves the grid
problem on the true table values with the same branch-and-bound engine,
which turns the linearisation result into a certified or flagged optimum.

All grid subproblems share one structure: each policy picks one admissible
grid value, the objective and the single constraint are sums of per-policy
terms. :func:`solve_choice_problem` handles that structure.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InfeasibleError, RenewalOptError, ValidationError
from .models import fit_quadratic_to_table
from .objectives import DEFAULT_GRID, Constraints, FeasibilityReport, feasible
from .portfolio import Portfolio
from .sqp import SqpConfig, build_problem_quadratic_psi, quadratic_psi3, sqp_solve

OBJECTIVE_OFFSETS = {"volume": 1.0, "difference": 0.0}


# generic branch and bound ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChoiceResult:
    choice: np.ndarray  # chosen column per row
    value: float
    bound: float
    nodes: int
    optimal: bool


def _best_choice(values, weights, allowed, lam):
    score = np.where(allowed, values - lam * weights, -np.inf)
    idx = np.argmax(score, axis=1)
    rows = np.arange(values.shape[0])
    return idx, score[rows, idx]


def _min_weight_lambda(values, weights, allowed):
    """Multiplier beyond which every row picks its lightest admissible column."""
    w = np.where(allowed, weights, np.inf)
    wmin = w.min(axis=1, keepdims=True)
    light = allowed & (weights <= wmin)
    o_light = np.where(light, values, -np.inf).max(axis=1, keepdims=True)
    heavier = allowed & (weights > wmin)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(heavier, (values - o_light) / (weights - wmin), -np.inf)
    lam = float(np.max(ratio, initial=0.0))
    return max(lam, 0.0) * (1 + 1e-9) + 1e-12


def _node_relaxation(values, weights, capacity, allowed):
    """Lagrangian relaxation of one node.

    Returns ``(bound, feasible_choice, heavy_choice)``; ``heavy_choice`` is
    ``None`` when the unconstrained choice already fits, and
    ``feasible_choice`` is ``None`` when no admissible choice fits.
    """
    rows = np.arange(values.shape[0])
    idx0, _ = _best_choice(values, weights, allowed, 0.0)
    if math.fsum(weights[rows, idx0]) <= capacity:
        return math.fsum(values[rows, idx0]), idx0, None
    lam_hi = _min_weight_lambda(values, weights, allowed)
    idx_hi, _ = _best_choice(values, weights, allowed, lam_hi)
    if math.fsum(weights[rows, idx_hi]) > capacity + 1e-12 * max(1.0, abs(capacity)):
        return -math.inf, None, None
    lam_lo, idx_lo = 0.0, idx0
    for _ in range(200):
        # Stop once the bracket is tight or only one row is undecided.
        if lam_hi - lam_lo <= 1e-13 * lam_hi or np.count_nonzero(idx_lo != idx_hi) <= 1:
            break
        mid = 0.5 * (lam_lo + lam_hi)
        idx, _ = _best_choice(values, weights, allowed, mid)
        if weights[rows, idx].sum() > capacity:
            lam_lo, idx_lo = mid, idx
        else:
            lam_hi, idx_hi = mid, idx
    if math.fsum(weights[rows, idx_hi]) > capacity:
        # Rounding in the fast sums picked the wrong side; fall back to the
        # lightest choice, which is feasible.
        idx_hi = np.argmin(np.where(allowed, weights, np.inf), axis=1)
    bound = min(
        float(np.sum(_best_choice(values, weights, allowed, lam)[1])) + lam * capacity
        for lam in (lam_lo, lam_hi)
    )
    # Guard against summation rounding in the bound.
    bound += 1e-12 * float(np.sum(np.abs(values[rows, idx_hi]))) + 1e-12
    return bound, idx_hi, idx_lo


def _greedy_repair(values, weights, capacity, feas, heavy):
    """Move rows from ``feas`` towards ``heavy`` while the constraint allows.

    Returns the improved feasible choice and the first row that could not be
    moved (the fractional row of the relaxation), or ``None``.
    """
    rows = np.arange(values.shape[0])
    choice = feas.copy()
    diff = np.flatnonzero(feas != heavy)
    dv = values[diff, heavy[diff]] - values[diff, feas[diff]]
    dw = weights[diff, heavy[diff]] - weights[diff, feas[diff]]
    keep = dv > 0
    diff, dv, dw = diff[keep], dv[keep], dw[keep]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dw > 0, dv / dw, np.inf)
    order = np.lexsort((diff, -ratio))
    diff, dw = diff[order], dw[order]
    slack = capacity - math.fsum(weights[rows, choice])
    fractional = None
    for i, w in zip(diff.tolist(), dw.tolist()):
        if w <= slack:
            choice[i] = heavy[i]
            slack -= w
        elif fractional is None:
            fractional = i
    return choice, fractional


def _improve(values, weights, capacity, choice, allowed):
    """One pass moving single rows to better columns that still fit."""
    rows = np.arange(values.shape[0])
    slack = capacity - math.fsum(weights[rows, choice])
    cur_v = values[rows, choice]
    cur_w = weights[rows, choice]
    gain = np.where(allowed & (weights - cur_w[:, None] <= slack), values - cur_v[:, None], -np.inf)
    best = np.argmax(gain, axis=1)
    g = gain[rows, best]
    for i in np.argsort(-g, kind="stable").tolist():
        if g[i] <= 0:
            break
        j = int(best[i])
        dw = weights[i, j] - weights[i, choice[i]]
        if dw <= slack:
            slack -= dw
            choice[i] = j
    return choice


def solve_choice_problem(
    values,
    weights,
    capacity: float,
    allowed=None,
    node_limit: int = 2000,
    rel_gap: float = 1e-9,
    incumbent=None,
) -> ChoiceResult:
    """Maximise ``sum values[i, c_i]`` s.t. ``sum weights[i, c_i] <= capacity``.

    Each row ``i`` picks one admissible column ``c_i``. Columns are assumed
    ordered (grid values ascending) so that branching can split a row's
    admissible range into ``<= a``, ``>= b`` and the columns in between.
    Bounds come from the Lagrangian relaxation of the single constraint,
    which is solved by bisection on its multiplier. Nodes are explored best
    bound first; when ``node_limit`` is reached the best feasible choice is
    returned with ``optimal=False``.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n, m = values.shape
    base = np.ones((n, m), dtype=bool) if allowed is None else np.asarray(allowed, dtype=bool)
    if not base.any(axis=1).all():
        raise InfeasibleError("some row has no admissible column")
    rows = np.arange(n)
    lightest = np.argmin(np.where(base, weights, np.inf), axis=1)
    if math.fsum(weights[rows, lightest]) > capacity + 1e-12 * max(1.0, abs(capacity)):
        raise InfeasibleError("constraint cannot be met by any admissible choice", diagnostic=lightest)

    best_choice, best_value = None, -math.inf
    if incumbent is not None:
        inc = np.asarray(incumbent, dtype=int)
        if base[rows, inc].all() and math.fsum(weights[rows, inc]) <= capacity:
            best_choice, best_value = inc.copy(), math.fsum(values[rows, inc])
    cols = np.arange(m)

    def mask_for(restr):
        mask = base.copy()
        for i, (lo, hi) in restr.items():
            mask[i] &= (cols >= lo) & (cols <= hi)
        return mask

    def tol():
        return rel_gap * max(1.0, abs(best_value)) if best_value > -math.inf else 0.0

    counter = itertools.count()
    heap = [(-math.inf, next(counter), {})]
    nodes = 0
    root_bound = None
    optimal = True
    while heap:
        neg_parent, _, restr = heapq.heappop(heap)
        if -neg_parent <= best_value + tol():
            continue
        if nodes >= node_limit:
            optimal = False
            break
        nodes += 1
        mask = mask_for(restr)
        if not mask.any(axis=1).all():
            continue
        bound, feas, heavy = _node_relaxation(values, weights, capacity, mask)
        if root_bound is None:
            root_bound = bound
        if feas is None or bound <= best_value + tol():
            continue
        if heavy is None:
            value = math.fsum(values[rows, feas])
            if value > best_value:
                best_choice, best_value = feas, value
            continue
        cand, frac = _greedy_repair(values, weights, capacity, feas, heavy)
        if nodes == 1:
            cand = _improve(values, weights, capacity, cand, mask)
        value = math.fsum(values[rows, cand])
        if value > best_value:
            best_choice, best_value = cand, value
        if frac is None or bound <= best_value + tol():
            continue
        ja, jb = sorted((int(feas[frac]), int(heavy[frac])))
        lo, hi = restr.get(frac, (0, m - 1))
        for child in ((lo, ja), (jb, hi), (ja + 1, jb - 1)):
            if child[0] <= child[1]:
                new = dict(restr)
                new[frac] = child
                heapq.heappush(heap, (-bound, next(counter), new))
    if best_choice is None:
        raise InfeasibleError("branch and bound found no feasible choice")
    if heap and not optimal:
        remaining = max(-h[0] for h in heap)
        bound = max(best_value, remaining)
    else:
        bound = best_value
    return ChoiceResult(best_choice, best_value, bound, nodes, optimal)


# problem-level API ----------------------------------------------------------------


@dataclass(frozen=True)
class MdnlpConfig:
    epsilon: float | None = None  # default: half the smallest grid spacing
    max_outer_iterations: int = 50
    bnb_node_limit: int = 2000
    linearised_node_limit: int = 50
    relaxation_source: str = "fitted-quadratic"  # or "provided-smooth"
    refine: bool = True
    rel_gap: float = 1e-9
    objective: str = "volume"

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if min(self.max_outer_iterations, self.bnb_node_limit, self.linearised_node_limit) < 1:
            raise ValidationError("iteration and node limits must be at least 1")
        if self.relaxation_source not in ("fitted-quadratic", "provided-smooth"):
            raise ValidationError(f"unknown relaxation source {self.relaxation_source!r}")
        if self.objective not in OBJECTIVE_OFFSETS:
            raise ValidationError(f"unknown objective {self.objective!r}")


@dataclass(frozen=True)
class OuterStep:
    iteration: int
    stage: str
    objective: float
    retention: float
    feasible: bool
    step_norm: float


@dataclass(frozen=True, eq=False)
class MdnlpResult:
    deltas: np.ndarray
    report: FeasibilityReport
    objective: float
    trace: list = field(default_factory=list)
    local: bool = False
    relaxed_deltas: np.ndarray | None = None
    nodes: int = 0

    def __iter__(self):
        return iter((self.deltas, self.report, self.trace))


@dataclass(frozen=True, eq=False)
class GridInstance:
    """Tabulated data of a grid problem: admissible mask, probabilities, values."""

    grid: np.ndarray
    allowed: np.ndarray
    psi: np.ndarray
    values: np.ndarray
    floor_count: float


def grid_instance(pf: Portfolio, cons: Constraints, objective: str = "volume") -> GridInstance:
    grid = (cons.grid or DEFAULT_GRID).values
    lo, hi = cons.box(pf)
    allowed = (grid[None, :] >= lo[:, None] - 1e-12) & (grid[None, :] <= hi[:, None] + 1e-12)
    if not allowed.any(axis=1).all():
        i = int(np.flatnonzero(~allowed.any(axis=1))[0])
        raise InfeasibleError(f"policy {pf.ids[i]}: no grid value lies inside its bounds")
    _, psi = pf.grid_table(grid)
    offset = OBJECTIVE_OFFSETS[objective]
    values = pf.premium[:, None] * (offset + grid[None, :]) * psi
    return GridInstance(grid, allowed, psi, values, pf.n * cons.retention_floor)


def _objective(inst, idx):
    return math.fsum(inst.values[np.arange(idx.size), idx])


def _certify_attainable(pf, inst):
    rows = np.arange(pf.n)
    best = np.argmax(np.where(inst.allowed, inst.psi, -np.inf), axis=1)
    attainable = math.fsum(inst.psi[rows, best])
    if attainable < inst.floor_count - 1e-9 * pf.n:
        raise InfeasibleError(
            f"retention floor {inst.floor_count / pf.n:.6g} exceeds the attainable "
            f"{attainable / pf.n:.6g}",
            diagnostic=inst.grid[best],
        )
    return best


def _grid_quadratic(grid, psi):
    """Per-policy least-squares quadratic through the grid probabilities, as ``(q2, q1, q0)`` rows."""
    deg = min(2, grid.size - 1)
    coef, *_ = np.linalg.lstsq(np.vander(grid, deg + 1), psi.T, rcond=None)
    return np.vstack([np.zeros((2 - deg, psi.shape[0])), coef]).T


def _round_to_grid(deltas, grid, allowed):
    """Nearest admissible grid value; ties go to the smaller value."""
    dist = np.abs(deltas[:, None] - grid[None, :])
    dist = np.where(allowed, dist, np.inf)
    # argmin returns the first (smallest) index among exact ties.
    return np.argmin(dist, axis=1)


def mdnlp_solve(pf: Portfolio, cons: Constraints, cfg: MdnlpConfig | None = None, relaxation=None) -> MdnlpResult:
    """Maximise expected volume over grid premium changes under the retention floor.

    ``relaxation`` may supply the continuous problem of the first step when
    ``cfg.relaxation_source == "provided-smooth"``.
    """
    cfg = cfg or MdnlpConfig()
    inst = grid_instance(pf, cons, cfg.objective)
    grid = inst.grid
    n = pf.n
    rows = np.arange(n)
    fallback = _certify_attainable(pf, inst)
    eps = cfg.epsilon if cfg.epsilon is not None else (
        0.5 * float(np.min(np.diff(grid))) if grid.size > 1 else 1.0
    )
    offset = OBJECTIVE_OFFSETS[cfg.objective]

    if pf.model_kind == "mc":
        # Quadratic proxy per table (each policy uses the fit of its own table).
        fits = np.array([fit_quadratic_to_table(t) for t in pf.tables])[pf.table_index]
    else:
        fits = _grid_quadratic(grid, inst.psi)
    coeffs = (fits[:, 0], fits[:, 1], fits[:, 2])
    psi3 = quadratic_psi3(coeffs)

    trace = []

    def record(k, stage, idx, prev):
        d = grid[idx]
        ret = math.fsum(inst.psi[rows, idx])
        step = float(np.max(np.abs(d - grid[prev]))) if prev is not None else math.nan
        feas = ret >= inst.floor_count - 1e-9 * n
        trace.append(OuterStep(k, stage, _objective(inst, idx), ret / n, feas, step))
        return feas

    # Step 1: continuous relaxation.
    lo, hi = cons.box(pf)
    gmin = np.where(inst.allowed, grid[None, :], np.inf).min(axis=1)
    gmax = np.where(inst.allowed, grid[None, :], -np.inf).max(axis=1)
    box_lo, box_hi = np.maximum(lo, gmin), np.minimum(hi, gmax)
    if cfg.relaxation_source == "provided-smooth":
        if relaxation is None:
            raise ValidationError("relaxation_source 'provided-smooth' needs a relaxation problem")
        problem = relaxation
    else:
        problem = build_problem_quadratic_psi(pf.premium, coeffs, box_lo, box_hi, inst.floor_count, offset)
    try:
        relaxed = sqp_solve(problem, None, SqpConfig(hessian_scheme="diagonal-exact")).deltas
    except RenewalOptError:
        relaxed = np.clip(np.zeros(n), box_lo, box_hi)

    # Step 2: rounding.
    idx = _round_to_grid(relaxed, grid, inst.allowed)
    incumbent = None
    if record(0, "rounding", idx, None):
        incumbent = idx.copy()

    # Step 3: linearised grid subproblems, only needed when rounding failed.
    local = False
    nodes = 0
    prev = idx
    k = 0
    if incumbent is None:
        seen = {idx.tobytes()}
        for k in range(1, cfg.max_outer_iterations + 1):
            d = grid[prev]
            p, d1, _ = psi3(d)
            grad_f = -pf.premium * (p + (offset + d) * d1)
            grad_g = -d1
            g_val = inst.floor_count - math.fsum(inst.psi[rows, prev])
            try:
                sub = solve_choice_problem(
                    -grad_f[:, None] * grid[None, :],
                    grad_g[:, None] * grid[None, :],
                    -g_val + float(grad_g @ d),
                    inst.allowed, cfg.linearised_node_limit, cfg.rel_gap,
                )
            except InfeasibleError:
                local = True
                break
            nodes += sub.nodes
            idx = sub.choice
            feas = record(k, "linearised", idx, prev)
            step = float(np.max(np.abs(grid[idx] - grid[prev])))
            if feas and (incumbent is None or _objective(inst, idx) > _objective(inst, incumbent)):
                incumbent = idx.copy()
            if step < eps:
                # Converged if feasible, otherwise stuck on an infeasible point.
                local = not feas
                break
            key = idx.tobytes()
            if key in seen:
                # The linearisation is cycling; keep the incumbent.
                local = True
                break
            seen.add(key)
            prev = idx
        else:
            local = True

    if incumbent is None:
        incumbent = fallback

    # Refinement on the true tabulated values.
    if cfg.refine:
        res = solve_choice_problem(
            inst.values, -inst.psi, -inst.floor_count, inst.allowed,
            cfg.bnb_node_limit, cfg.rel_gap, incumbent=incumbent,
        )
        nodes += res.nodes
        if res.value >= _objective(inst, incumbent):
            incumbent = res.choice
        local = not res.optimal
        record(k + 1, "refinement", incumbent, None)

    deltas = grid[incumbent]
    report = feasible(pf, deltas, cons)
    return MdnlpResult(
        deltas, report, _objective(inst, incumbent), trace, local, relaxed, nodes
    )


def bnb_solve_mdlp(grad_f, grad_g, g_value: float, point, grid, allowed=None, node_limit: int = 2000) -> np.ndarray:
    """Solve the linearised grid subproblem around ``point``.

    ``min grad_f'(d - point)`` s.t. ``g_value + grad_g'(d - point) <= 0`` with
    every ``d_i`` in ``grid``. Returns the optimal grid vector.
    """
    grid = np.asarray(grid, dtype=float)
    grad_f = np.asarray(grad_f, dtype=float)
    grad_g = np.asarray(grad_g, dtype=float)
    point = np.asarray(point, dtype=float)
    values = -grad_f[:, None] * grid[None, :]
    weights = grad_g[:, None] * grid[None, :]
    capacity = -float(g_value) + float(grad_g @ point)
    res = solve_choice_problem(values, weights, capacity, allowed, node_limit)
    if not res.optimal:
        raise RenewalOptError(f"node limit {node_limit} reached before optimality was proven")
    return grid[res.choice]


ENUMERATION_LIMIT = 10**8


def enumerate_exact(pf: Portfolio, cons: Constraints, objective: str = "volume", chunk: int = 1 << 20) -> np.ndarray:
    """Global optimum over the grid by listing every admissible vector.

    Among equal objective values the lexicographically smallest index vector
    wins. Raises :class:`InfeasibleError` when no vector meets the floor.
    """
    inst = grid_instance(pf, cons, objective)
    choices = [np.flatnonzero(inst.allowed[i]) for i in range(pf.n)]
    sizes = [c.size for c in choices]
    total = math.prod(sizes)
    if total > ENUMERATION_LIMIT:
        raise ValidationError(f"{total} grid vectors exceed the enumeration limit {ENUMERATION_LIMIT}")
    best_value, best_idx = -math.inf, None
    floor = inst.floor_count - 1e-9 * pf.n
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        local = np.stack(np.unravel_index(flat, sizes), axis=1)
        idx = np.stack([choices[i][local[:, i]] for i in range(pf.n)], axis=1)
        cols = np.arange(pf.n)
        ret = inst.psi[cols, idx].sum(axis=1)
        val = inst.values[cols, idx].sum(axis=1)
        val = np.where(ret >= floor, val, -np.inf)
        j = int(np.argmax(val))
        if val[j] > best_value:
            best_value, best_idx = float(val[j]), idx[j]
    if best_idx is None:
        raise InfeasibleError("no grid vector meets the retention floor")
    return inst.grid[best_idx]
