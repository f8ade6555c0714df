"""Sequential quadratic programming for the smooth non-convex variants.

All problems handled here have the shape::

    min f(d)  s.t.  g(d) <= 0,  lower <= d <= upper

where ``f`` and ``g`` are sums of per-policy terms, so the Hessian of the
Lagrangian is diagonal. Two Hessian schemes are offered: a dense BFGS
approximation, and the exact diagonal (shifted to stay positive definite)
for large portfolios.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .exceptions import InfeasibleError, SolverError, ValidationError
from .models import Ma, Mb, psi
from .objectives import Constraints
from .portfolio import Portfolio
from .qp import KktCertificate, kkt_certificate, solve_box_qp_dense, solve_separable_qp

DENSE_AUTO_LIMIT = 500


@dataclass(frozen=True)
class SqpConfig:
    max_iterations: int = 200
    kkt_tolerance: float = 1e-9
    armijo_constant: float = 1e-4
    step_shrink_factor: float = 0.5
    hessian_scheme: str = "auto"  # "bfgs-dense", "diagonal-exact" or "auto"
    initial_multiplier: float = 1.0
    min_step: float = 1e-14
    trace_path: str | None = None
    debug_checks: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if not self.kkt_tolerance > 0:
            raise ValidationError("kkt_tolerance must be positive")
        if not 0 < self.step_shrink_factor < 1:
            raise ValidationError("step_shrink_factor must lie in (0, 1)")
        if not 0 < self.armijo_constant < 1:
            raise ValidationError("armijo_constant must lie in (0, 1)")
        if self.hessian_scheme not in ("auto", "bfgs-dense", "diagonal-exact"):
            raise ValidationError(f"unknown hessian scheme {self.hessian_scheme!r}")


@dataclass(eq=False)
class SmoothProblem:
    """Separable objective and constraint with analytic derivatives.

    ``f_scale`` and ``g_scale`` are typical magnitudes used to make the
    convergence test independent of units.
    """

    f: Callable
    grad_f: Callable
    hess_f_diag: Callable
    g: Callable
    grad_g: Callable
    hess_g_diag: Callable
    lower: np.ndarray
    upper: np.ndarray
    name: str = ""
    f_scale: float = 1.0
    g_scale: float = 1.0

    @property
    def n(self) -> int:
        return self.lower.size


@dataclass(frozen=True)
class TraceRow:
    iter: int
    merit: float
    kkt_residual: float
    step_norm: float
    lambda_: float


@dataclass(eq=False)
class SqpState:
    x: np.ndarray
    lam: float
    H: np.ndarray  # dense matrix or diagonal vector
    iteration: int = 0
    merit_history: list = field(default_factory=list)


@dataclass(eq=False)
class SqpResult:
    deltas: np.ndarray
    kkt: KktCertificate
    status: str  # "converged" or "max_iter"
    iterations: int
    trace: list
    objective: float
    state: SqpState

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def __iter__(self):
        return iter((self.deltas, self.kkt, self.trace))


def write_trace(trace, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "merit", "kkt_residual", "step_norm", "lambda"])
        for row in trace:
            w.writerow([row.iter, repr(row.merit), repr(row.kkt_residual),
                        repr(row.step_norm), repr(row.lambda_)])


def scaled_kkt_residual(problem: SmoothProblem, cert: KktCertificate, grad_f) -> float:
    """Unit-free KKT residual used for the stopping test."""
    gs = max(problem.g_scale, 1e-300)
    stat = cert.stationarity_residual / (1.0 + float(np.max(np.abs(grad_f), initial=0.0)))
    comp = cert.complementarity_residual / (1.0 + problem.f_scale)
    return max(stat, comp, cert.primal_violation / gs, cert.dual_violation)


def _certificate(problem, x, lam):
    gf = problem.grad_f(x)
    cert = kkt_certificate(gf, lam, problem.grad_g(x), problem.g(x), x, problem.lower, problem.upper)
    return cert, scaled_kkt_residual(problem, cert, gf)


def sqp_solve(problem: SmoothProblem, start=None, cfg: SqpConfig | None = None) -> SqpResult:
    """Solve ``problem`` from ``start`` (default: zero clipped into the box)."""
    cfg = cfg or SqpConfig()
    lo, hi = problem.lower, problem.upper
    n = problem.n
    x = np.zeros(n) if start is None else np.array(start, dtype=float)
    if x.shape != (n,):
        raise ValidationError(f"start vector has length {x.size}, problem has {n}")
    x = np.clip(x, lo, hi)
    scheme = cfg.hessian_scheme
    if scheme == "auto":
        scheme = "bfgs-dense" if n <= DENSE_AUTO_LIMIT else "diagonal-exact"

    lam = float(cfg.initial_multiplier)
    H_diag0 = _positive_diagonal(problem.hess_f_diag(x) + lam * problem.hess_g_diag(x))
    H = np.diag(H_diag0) if scheme == "bfgs-dense" else H_diag0
    state = SqpState(x, lam, H)
    r = 0.0
    trace = []
    status = "max_iter"

    for k in range(1, cfg.max_iterations + 1):
        state.iteration = k
        fx, gx = problem.f(x), problem.g(x)
        gf, gg = problem.grad_f(x), problem.grad_g(x)
        if scheme == "diagonal-exact":
            H = _positive_diagonal(problem.hess_f_diag(x) + max(lam, 0.0) * problem.hess_g_diag(x))

        s, lam_new = _subproblem(H, gf, gg, gx, lo - x, hi - x, scheme)
        s = np.clip(s, lo - x, hi - x)
        r = max(r, 2.0 * abs(lam_new) + 1.0)
        merit = fx + r * max(gx, 0.0)
        cert, resid = _certificate(problem, x, lam_new)
        step_norm = float(np.max(np.abs(s), initial=0.0))
        trace.append(TraceRow(k, merit, resid, step_norm, lam_new))
        state.merit_history.append(merit)
        if resid <= cfg.kkt_tolerance or step_norm == 0.0:
            lam = lam_new
            if resid <= cfg.kkt_tolerance:
                status = "converged"
                break
            raise SolverError("zero step at a point that is not a KKT point", iterate=x)

        # Backtracking on the l1 merit function.
        slope = float(gf @ s) - r * max(gx, 0.0)
        if slope >= 0.0:
            slope = -float(s @ (H @ s if H.ndim == 2 else H * s))
        alpha = 1.0
        while True:
            x_new = np.clip(x + alpha * s, lo, hi)
            merit_new = problem.f(x_new) + r * max(problem.g(x_new), 0.0)
            moved = not np.array_equal(x_new, x)
            if moved and merit_new <= merit + cfg.armijo_constant * alpha * slope:
                break
            alpha *= cfg.step_shrink_factor
            if alpha < cfg.min_step or not moved:
                # No representable progress is left along this direction.
                lam = lam_new
                cert, resid = _certificate(problem, x, lam)
                if resid <= math.sqrt(cfg.kkt_tolerance) and cert.primal_violation <= 1e-10 * max(1.0, problem.g_scale):
                    # Merit differences are at rounding level: accept as converged.
                    status = "converged"
                    break
                if problem.g(x) > 1e-9 * max(1.0, problem.g_scale):
                    # Stuck at the least-violating point: reported as infeasible below.
                    status = "stalled"
                    break
                raise SolverError("line search stalled", iterate=x)
        if status in ("converged", "stalled"):
            break

        if scheme == "bfgs-dense":
            H = _bfgs_update(
                H,
                x_new - x,
                problem.grad_f(x_new) + lam_new * problem.grad_g(x_new) - gf - lam_new * gg,
            )
            if cfg.debug_checks and n <= 200:
                assert np.allclose(H, H.T) and np.linalg.eigvalsh(H).min() > 0
        x, lam = x_new, lam_new
        state.x, state.lam, state.H = x, lam, H

    state.x, state.lam, state.H = x, lam, H
    cert, resid = _certificate(problem, x, lam)
    if cfg.trace_path:
        write_trace(trace, cfg.trace_path)
    if problem.g(x) > 1e-9 * max(1.0, problem.g_scale):
        raise InfeasibleError(
            f"SQP ended at a point violating the constraint (g = {problem.g(x):.3g})",
            diagnostic=x,
        )
    return SqpResult(x, cert, status, state.iteration, trace, float(problem.f(x)), state)


def _positive_diagonal(d):
    """Flip negative curvature and floor tiny entries."""
    d = np.abs(np.asarray(d, dtype=float))
    floor = 1e-8 * max(float(np.max(d, initial=0.0)), 1e-300)
    return np.maximum(d, floor)


def _subproblem(H, gf, gg, gx, lo, hi, scheme):
    """Solve the QP subproblem, relaxing an infeasible linearised constraint."""
    rhs = -gx
    reachable = float(np.sum(np.where(gg > 0, gg * lo, gg * hi)))
    if reachable > rhs:
        # The linearisation cannot be satisfied inside the box: ask for the
        # smallest linearised violation instead.
        rhs = reachable + 1e-12 * max(1.0, abs(reachable))
    if scheme == "bfgs-dense":
        s, lam, _ = solve_box_qp_dense(H, gf, gg, rhs, lo, hi)
    else:
        s, lam, _ = solve_separable_qp(H, gf, gg, rhs, lo, hi)
    return s, float(lam)


def _bfgs_update(H, s, y):
    """BFGS with Powell damping; skipped when the curvature is degenerate."""
    Hs = H @ s
    sHs = float(s @ Hs)
    if sHs <= 1e-300:
        return H
    sy = float(s @ y)
    if sy < 0.2 * sHs:
        theta = 0.8 * sHs / (sHs - sy)
        y = theta * y + (1.0 - theta) * Hs
        sy = float(s @ y)
    if sy <= 1e-12 * max(1.0, sHs):
        return H
    H = H - np.outer(Hs, Hs) / sHs + np.outer(y, y) / sy
    return 0.5 * (H + H.T)


# problem builders ----------------------------------------------------------


def _volume_problem(premium, psi3, lower, upper, floor_count, name, pi_sum, offset=1.0) -> SmoothProblem:
    """``f = -sum P (offset + d) psi``, ``g = floor_count - sum psi``.

    ``offset = 1`` gives the renewed volume, ``offset = 0`` the premium
    difference.
    """
    P = np.asarray(premium, dtype=float)

    def f(x):
        p, _, _ = psi3(x)
        return -math.fsum(P * (offset + x) * p)

    def grad_f(x):
        p, d1, _ = psi3(x)
        return -P * (p + (offset + x) * d1)

    def hess_f(x):
        _, d1, d2 = psi3(x)
        return -P * (2.0 * d1 + (offset + x) * d2)

    def g(x):
        return floor_count - math.fsum(psi3(x)[0])

    return SmoothProblem(
        f, grad_f, hess_f, g,
        lambda x: -psi3(x)[1],
        lambda x: -psi3(x)[2],
        np.asarray(lower, dtype=float), np.asarray(upper, dtype=float),
        name=name,
        f_scale=float(np.sum(P)),
        g_scale=max(float(pi_sum), 1.0),
    )


def _portfolio_psi3(pf: Portfolio):
    def psi3(x):
        d1, d2 = pf.psi_derivatives(x)
        return pf.psi(x), d1, d2
    return psi3


def build_problem_ma_cubic(pf: Portfolio, cons: Constraints) -> SmoothProblem:
    """Volume maximisation for ``Ma`` with a quadratic term.

    The objective is the cubic
    ``sum P pi (1 + (1+a) d + (a+b) d**2 + b d**3)`` (negated).
    """
    if pf.model_kind != "ma":
        raise ValidationError("build_problem_ma_cubic needs an Ma portfolio")
    lower, upper = cons.box(pf)
    P, pi, a, b = pf.premium, pf.pi0, pf.a, pf.b
    w = P * pi

    def f(x):
        return -math.fsum(w * (1.0 + (1.0 + a) * x + (a + b) * x**2 + b * x**3))

    def grad_f(x):
        return -w * ((1.0 + a) + 2.0 * (a + b) * x + 3.0 * b * x**2)

    def hess_f(x):
        return -w * (2.0 * (a + b) + 6.0 * b * x)

    floor = pf.n * cons.retention_floor

    def g(x):
        return floor - math.fsum(pi * (1.0 + a * x + b * x**2))

    return SmoothProblem(
        f, grad_f, hess_f, g,
        lambda x: -pi * (a + 2.0 * b * x),
        lambda x: np.broadcast_to(-2.0 * pi * b, x.shape).astype(float),
        lower, upper, name="ma-cubic",
        f_scale=float(np.sum(w)), g_scale=float(np.sum(pi)),
    )


def build_problem_mb(pf: Portfolio, cons: Constraints) -> SmoothProblem:
    """Volume maximisation for the logistic model."""
    if pf.model_kind != "mb":
        raise ValidationError("build_problem_mb needs an Mb portfolio")
    lower, upper = cons.box(pf)
    return _volume_problem(
        pf.premium, _portfolio_psi3(pf), lower, upper,
        pf.n * cons.retention_floor, "mb", np.sum(pf.pi0),
    )


def build_problem_volume(pf: Portfolio, cons: Constraints) -> SmoothProblem:
    """Volume maximisation for either smooth family."""
    if pf.model_kind == "ma":
        return build_problem_ma_cubic(pf, cons)
    if pf.model_kind == "mb":
        return build_problem_mb(pf, cons)
    raise ValidationError("smooth solvers need an Ma or Mb portfolio")


def build_problem_difference(pf: Portfolio, cons: Constraints) -> SmoothProblem:
    """Maximise the expected premium difference ``sum P d psi``."""
    if pf.model_kind not in ("ma", "mb"):
        raise ValidationError("smooth solvers need an Ma or Mb portfolio")
    lower, upper = cons.box(pf)
    return _volume_problem(
        pf.premium, _portfolio_psi3(pf), lower, upper,
        pf.n * cons.retention_floor, "difference", np.sum(pf.pi0), offset=0.0,
    )


def quadratic_psi3(coeffs):
    """Value, slope and curvature of ``psi = q2 d**2 + q1 d + q0``."""
    q2, q1, q0 = (np.asarray(c, dtype=float) for c in coeffs)

    def psi3(x):
        curv = np.broadcast_to(2.0 * q2, np.shape(x)).astype(float)
        return q2 * x**2 + q1 * x + q0, 2.0 * q2 * x + q1, curv

    return psi3


def build_problem_quadratic_psi(premium, coeffs, lower, upper, floor_count, offset=1.0) -> SmoothProblem:
    """Volume (or, with ``offset=0``, difference) problem for quadratic ``psi``.

    ``coeffs`` is ``(q2, q1, q0)``, each scalar or per-policy array. Unlike
    ``Ma`` no parameter window is enforced, which suits curves fitted to
    tables.
    """
    n = np.asarray(premium).size
    q0 = np.broadcast_to(np.asarray(coeffs[2], dtype=float), (n,))
    return _volume_problem(
        premium, quadratic_psi3(coeffs), lower, upper, floor_count, "quadratic-psi",
        float(np.sum(q0)), offset,
    )


def build_problem_volume_variance(pf: Portfolio, cons: Constraints, risk_weight: float, mode: str = "corrected") -> SmoothProblem:
    """``max q_vol - risk_weight * q_var`` under the retention floor."""
    if pf.model_kind not in ("ma", "mb"):
        raise ValidationError("volume-variance needs an Ma or Mb portfolio")
    if mode not in ("corrected", "paper"):
        raise ValueError("mode must be 'corrected' or 'paper'")
    lower, upper = cons.box(pf)
    P = pf.premium
    psi3 = _portfolio_psi3(pf)
    lw = float(risk_weight)

    def var_terms(x):
        p, d1, d2 = psi3(x)
        v, v1, v2 = p * (1 - p), (1 - 2 * p) * d1, -2 * d1**2 + (1 - 2 * p) * d2
        if mode == "corrected":
            u, u1, u2 = (P * (1 + x)) ** 2, 2 * P**2 * (1 + x), 2 * P**2
        else:
            u, u1, u2 = P * (1 + x), P, 0.0
        return u * v, u1 * v + u * v1, u2 * v + 2 * u1 * v1 + u * v2

    def f(x):
        p = psi3(x)[0]
        return -math.fsum(P * (1 + x) * p) + lw * math.fsum(var_terms(x)[0])

    def grad_f(x):
        p, d1, _ = psi3(x)
        return -P * (p + (1 + x) * d1) + lw * var_terms(x)[1]

    def hess_f(x):
        _, d1, d2 = psi3(x)
        return -P * (2 * d1 + (1 + x) * d2) + lw * var_terms(x)[2]

    floor = pf.n * cons.retention_floor
    return SmoothProblem(
        f, grad_f, hess_f,
        lambda x: floor - math.fsum(psi3(x)[0]),
        lambda x: -psi3(x)[1],
        lambda x: -psi3(x)[2],
        lower, upper, name=f"volume-variance({mode})",
        f_scale=float(np.sum(P)), g_scale=float(np.sum(pf.pi0)),
    )


def max_volume_on_box(pf: Portfolio, lower, upper, points: int = 401) -> tuple[float, np.ndarray]:
    """Largest attainable ``q_vol`` when every policy is priced on its own.

    Grid search per policy followed by clipped Newton refinement; the result
    is the better of both so it never falls below the grid value.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    t = np.linspace(0.0, 1.0, points)
    P = pf.premium
    col = lambda v: None if v is None else v[:, None]  # noqa: E731
    best = np.empty(pf.n)
    for start in range(0, pf.n, 1024):
        sl = slice(start, start + 1024)
        grid = lower[sl, None] + (upper - lower)[sl, None] * t[None, :]
        if pf.model_kind == "ma":
            model = Ma(col(pf.pi0[sl]), col(pf.a[sl]), col(pf.b[sl]))
        else:
            model = Mb(col(pf.pi0[sl]), col(pf.T[sl]))
        vals = P[sl, None] * (1 + grid) * psi(model, grid)
        best[sl] = grid[np.arange(grid.shape[0]), np.argmax(vals, axis=1)]
    psi3 = _portfolio_psi3(pf)
    x = best.copy()
    for _ in range(30):
        p, d1, d2 = psi3(x)
        g1 = P * (p + (1 + x) * d1)
        g2 = P * (2 * d1 + (1 + x) * d2)
        step = np.where(g2 < 0, -g1 / np.where(g2 < 0, g2, 1.0), 0.0)
        x = np.clip(x + step, lower, upper)
    v_grid = P * (1 + best) * pf.psi(best)
    v_newton = P * (1 + x) * pf.psi(x)
    x = np.where(v_newton >= v_grid, x, best)
    return float(np.sum(np.maximum(v_newton, v_grid))), x


def build_problem_retention_max(pf: Portfolio, cons: Constraints, loading_C: float) -> SmoothProblem:
    """Maximise the retention subject to ``q_vol >= sum P pi + C``.

    ``f = -sum psi`` (the retention times N) and ``g`` is the volume shortfall
    divided by the mean premium. The retention floor of ``cons`` is not used,
    only its boxes.
    """
    if loading_C < 0:
        raise ValidationError("loading_C must be non-negative")
    if pf.model_kind not in ("ma", "mb"):
        raise ValidationError("retention maximisation needs an Ma or Mb portfolio")
    lower, upper = cons.box(pf)
    P = pf.premium
    target = math.fsum(P * pf.pi0) + float(loading_C)
    attainable, _ = max_volume_on_box(pf, lower, upper)
    if target > attainable * (1 + 1e-12):
        raise InfeasibleError(
            f"required volume {target:.6g} exceeds the maximum attainable {attainable:.6g}",
            diagnostic=attainable,
        )
    psi3 = _portfolio_psi3(pf)
    # The constraint is measured in multiples of the mean premium so that its
    # multiplier, and hence the merit penalty, is on the scale of the count
    # objective.
    unit = float(np.mean(P))
    w = P / unit

    def g(x):
        return (target - math.fsum(P * (1 + x) * psi3(x)[0])) / unit

    def grad_g(x):
        p, d1, _ = psi3(x)
        return -w * (p + (1 + x) * d1)

    def hess_g(x):
        _, d1, d2 = psi3(x)
        return -w * (2 * d1 + (1 + x) * d2)

    return SmoothProblem(
        lambda x: -math.fsum(psi3(x)[0]),
        lambda x: -psi3(x)[1],
        lambda x: -psi3(x)[2],
        g, grad_g, hess_g, lower, upper, name="retention-max",
        f_scale=float(pf.n), g_scale=target / unit,
    )
