"""Quadratic programme for the linear-elasticity (``Ma`` with ``b = 0``) case.

Maximising expected volume under a retention floor becomes::

    min  1/2 d'Qd + c'd
    s.t. A'd <= b,  lower <= d <= upper

with diagonal ``Q``. Because there is a single coupling constraint, the main
solver dualises it and bisects on the scalar multiplier; every coordinate is
then a clipped one-dimensional quadratic. A dense interior-point solver with
an active-set crossover is kept as an independent reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import InfeasibleError, SolverError, ValidationError
from .objectives import Constraints, q_var, q_vol
from .portfolio import Portfolio

KKT_TOL = 1e-8
PRIMAL_TOL = 1e-10
BRACKET_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class QpProblem:
    q: np.ndarray  # diagonal of Q
    c: np.ndarray
    A: np.ndarray
    b: float
    lower: np.ndarray
    upper: np.ndarray
    constant: float = 0.0  # dropped term; -(objective) + constant = expected volume

    def __post_init__(self):
        n = np.asarray(self.q).size
        for name in ("q", "c", "A", "lower", "upper"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValidationError(f"QP field {name} must have length {n}")
            object.__setattr__(self, name, arr)
        if np.any(self.q <= 0):
            raise ValidationError("Q must be positive definite (all diagonal entries > 0)")
        if np.any(self.lower > self.upper):
            raise ValidationError("box lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q)

    def objective(self, d) -> float:
        d = np.asarray(d, dtype=float)
        return float(0.5 * np.dot(self.q * d, d) + np.dot(self.c, d))

    def constraint(self, d) -> float:
        return float(np.dot(self.A, d) - self.b)


@dataclass(frozen=True)
class KktCertificate:
    """Residuals of the first-order optimality conditions at a point.

    ``stationarity_residual`` accounts for box multipliers: coordinates at a
    bound only contribute the part of the Lagrangian gradient with the wrong
    sign.
    """

    lambda_: float
    stationarity_residual: float
    complementarity_residual: float
    primal_violation: float
    dual_violation: float = 0.0

    def satisfied(self, tol: float = KKT_TOL, primal_tol: float = PRIMAL_TOL) -> bool:
        return (
            self.stationarity_residual <= tol
            and self.complementarity_residual <= tol
            and self.primal_violation <= primal_tol
            and self.dual_violation <= 0.0
        )

    @property
    def max_residual(self) -> float:
        return max(
            self.stationarity_residual,
            self.complementarity_residual,
            self.primal_violation,
            self.dual_violation,
        )


def kkt_certificate(grad_f, lam, grad_g, g_value, x, lower, upper) -> KktCertificate:
    """Evaluate the four KKT conditions for ``min f s.t. g <= 0, lower <= x <= upper``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(grad_f, dtype=float) + lam * np.asarray(grad_g, dtype=float)
    tol_lo = 1e-12 * np.maximum(1.0, np.abs(lower))
    tol_hi = 1e-12 * np.maximum(1.0, np.abs(upper))
    at_lo = x <= lower + tol_lo
    at_hi = x >= upper - tol_hi
    res = np.abs(v)
    res = np.where(at_lo & ~at_hi, np.maximum(0.0, -v), res)
    res = np.where(at_hi & ~at_lo, np.maximum(0.0, v), res)
    res = np.where(at_lo & at_hi, 0.0, res)
    box_violation = float(np.max(np.maximum(lower - x, 0.0), initial=0.0))
    box_violation = max(box_violation, float(np.max(np.maximum(x - upper, 0.0), initial=0.0)))
    return KktCertificate(
        lambda_=float(lam),
        stationarity_residual=float(np.max(res, initial=0.0)),
        complementarity_residual=abs(float(lam) * float(g_value)),
        primal_violation=max(float(g_value), 0.0, box_violation),
        dual_violation=max(-float(lam), 0.0),
    )


@dataclass(frozen=True, eq=False)
class QpSolution:
    deltas: np.ndarray
    kkt: KktCertificate
    objective: float
    iterations: int
    method: str

    def __iter__(self):
        return iter((self.deltas, self.kkt))


def assemble_qp(pf: Portfolio, cons: Constraints) -> QpProblem:
    """Matrices of the volume-maximisation QP.

    ``Q = diag(-2 pi P a)``, ``c = -pi P (1 + a)``, ``A = -pi a`` and
    ``b = sum(pi) - N ell`` so that ``A'd <= b`` is the retention floor
    ``mean(pi (1 + a d)) >= ell``.
    """
    if pf.model_kind != "ma":
        raise ValidationError("the QP needs an Ma portfolio")
    if np.any(pf.b != 0.0):
        raise ValidationError("the QP needs b_i = 0 for every policy; use the SQP solver")
    if np.any(pf.a >= 0.0):
        raise ValidationError("Q is not positive definite: every a_i must be < 0")
    if cons.grid is not None:
        raise ValidationError("grid constraints need the mixed-discrete solver")
    lower, upper = cons.box(pf)
    P, pi, a = pf.premium, pf.pi0, pf.a
    return QpProblem(
        q=-2.0 * pi * P * a,
        c=-pi * P * (1.0 + a),
        A=-pi * a,
        b=float(math.fsum(pi) - pf.n * cons.retention_floor),
        lower=lower,
        upper=upper,
        constant=float(math.fsum(pi * P)),
    )


def _clip_point(q, c, A, lam, lower, upper):
    return np.clip(-(c + lam * A) / q, lower, upper)


def solve_separable_qp(q, c, A, b, lower, upper):
    """Solve the diagonal QP by bisection on the multiplier of ``A'd <= b``.

    Returns ``(d, lam, iterations)``. Raises :class:`InfeasibleError` with the
    box point minimising ``A'd`` as diagnostic when no point satisfies the
    constraint.
    """
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)

    def g(lam):
        d = _clip_point(q, c, A, lam, lower, upper)
        return math.fsum(A * d) - b, d

    g0, d0 = g(0.0)
    if g0 <= 0.0:
        return d0, 0.0, 0

    extreme = np.where(A > 0, lower, upper)
    if math.fsum(A * extreme) - b > PRIMAL_TOL * max(1.0, abs(b)):
        raise InfeasibleError(
            "retention constraint cannot be met inside the bounds", diagnostic=extreme
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        sat = np.where(A > 0, (-c - q * lower) / A, np.where(A < 0, (q * upper + c) / -A, 0.0))
    lam_lo, lam_hi = 0.0, max(float(np.max(sat, initial=0.0)), 0.0) * (1 + 1e-12) + 1e-300
    it = 0
    while lam_hi - lam_lo > BRACKET_RTOL * max(lam_hi, 1e-300) and it < 200:
        mid = 0.5 * (lam_lo + lam_hi)
        if g(mid)[0] > 0.0:
            lam_lo = mid
        else:
            lam_hi = mid
        it += 1

    # Exact multiplier on the active set identified by the bracket.
    lam = lam_hi
    d = _clip_point(q, c, A, lam, lower, upper)
    raw = -(c + lam * A) / q
    free = (raw > lower) & (raw < upper) & (A != 0)
    denom = math.fsum(A[free] ** 2 / q[free])
    if denom > 0:
        fixed = math.fsum(A[~free] * d[~free])
        lam_exact = (math.fsum(-A[free] * c[free] / q[free]) + fixed - b) / denom
        d_exact = _clip_point(q, c, A, lam_exact, lower, upper)
        raw_exact = -(c + lam_exact * A) / q
        same_set = np.array_equal(free, (raw_exact > lower) & (raw_exact < upper) & (A != 0))
        if lam_exact >= 0 and same_set:
            lam, d = lam_exact, d_exact
    return d, lam, it


def solve_qp(qp: QpProblem) -> QpSolution:
    """Global minimiser of the (strictly convex) QP with its KKT certificate."""
    d, lam, it = solve_separable_qp(qp.q, qp.c, qp.A, qp.b, qp.lower, qp.upper)
    return _finish(qp, d, lam, it, "separable-dual")


def _finish(qp, d, lam, it, method):
    grad = qp.q * d + qp.c
    cert = kkt_certificate(grad, lam, qp.A, qp.constraint(d), d, qp.lower, qp.upper)
    return QpSolution(d, cert, qp.objective(d), it, method)


def solve_box_qp_dense(H, c, a, b, lower, upper, max_iter: int = 200):
    """Dense reference for ``min 1/2 x'Hx + c'x  s.t.  a'x <= b, lower <= x <= upper``.

    A Mehrotra predictor-corrector interior-point method on the stacked
    inequality system, followed by a crossover that solves the equality
    system of the identified active set exactly. Returns ``(x, lam, iterations)``
    with ``lam`` the multiplier of the linear constraint.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    a = np.asarray(a, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = c.size
    extreme = np.where(a > 0, lower, upper)
    if float(a @ extreme) - b > PRIMAL_TOL * max(1.0, abs(b)):
        raise InfeasibleError("linear constraint cannot be met inside the bounds", diagnostic=extreme)

    # Rows: a'x <= b, x <= upper, -x <= -lower (infinite bounds dropped).
    hi_idx = np.flatnonzero(np.isfinite(upper))
    lo_idx = np.flatnonzero(np.isfinite(lower))
    h = np.concatenate([[b], upper[hi_idx], -lower[lo_idx]])
    m = h.size

    def G_mul(v):
        return np.concatenate([[a @ v], v[hi_idx], -v[lo_idx]])

    def GT_mul(y):
        out = a * y[0]
        out[hi_idx] += y[1:1 + hi_idx.size]
        out[lo_idx] -= y[1 + hi_idx.size:]
        return out

    def GT_W_G(w):
        diag = np.zeros(n)
        diag[hi_idx] += w[1:1 + hi_idx.size]
        diag[lo_idx] += w[1 + hi_idx.size:]
        return w[0] * np.outer(a, a) + np.diag(diag)

    x = np.clip(np.zeros(n), lower, upper)
    s = np.maximum(h - G_mul(x), 1.0)
    scale = max(float(np.max(np.abs(c), initial=0.0)), 1.0)
    z = np.full(m, scale)
    h_scale = max(1.0, float(np.max(np.abs(h))))
    it = 0
    for it in range(1, max_iter + 1):
        rd = H @ x + c + GT_mul(z)
        rp = G_mul(x) + s - h
        mu = float(s @ z) / m
        # The crossover below restores full accuracy, so a moderately
        # accurate interior point is enough to identify the active set.
        if (
            np.max(np.abs(rd)) <= 1e-7 * scale
            and np.max(np.abs(rp)) <= 1e-10 * h_scale
            and mu <= 1e-10 * scale
        ) or mu <= 1e-16 * scale:
            break
        K = H + GT_W_G(z / s)
        try:
            factor = cho_factor(K)
        except np.linalg.LinAlgError:
            factor = cho_factor(K + 1e-12 * np.trace(K) / n * np.eye(n))

        def newton(rc):
            # rc: complementarity residual s*z minus its target
            dx = cho_solve(factor, -rd - GT_mul((z * rp - rc) / s))
            ds = -rp - G_mul(dx)
            dz = -(rc + z * ds) / s
            return dx, ds, dz

        dx, ds, dz = newton(s * z)
        alpha_aff = min(_max_step(s, ds), _max_step(z, dz))
        mu_aff = float((s + alpha_aff * ds) @ (z + alpha_aff * dz)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dx, ds, dz = newton(s * z + ds * dz - sigma * mu)
        alpha = min(1.0, 0.99 * min(_max_step(s, ds), _max_step(z, dz)))
        x += alpha * dx
        s += alpha * ds
        z += alpha * dz
    else:
        raise SolverError("interior-point iteration did not converge", iterate=x)

    # Complementarity indicator: a constraint is active when its multiplier
    # dominates its slack.
    at_hi = np.zeros(n, dtype=bool)
    at_lo = np.zeros(n, dtype=bool)
    k_hi = hi_idx.size
    at_hi[hi_idx] = z[1:1 + k_hi] > s[1:1 + k_hi]
    at_lo[lo_idx] = z[1 + k_hi:] > s[1 + k_hi:]
    at_lo &= ~at_hi
    x_cross, lam = _crossover(H, c, a, b, lower, upper, at_lo, at_hi, z[0] > s[0])
    if x_cross is None:
        return x, float(z[0]), it
    return x_cross, lam, it


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _crossover(H, c, a, b, lower, upper, at_lo, at_hi, active, rounds: int = 50):
    """Solve the equality system of a guessed active set, correcting the guess.

    Returns ``(x, lam)`` or ``(None, None)`` if no consistent set was found.
    """
    tol = 1e-9 * max(1.0, float(np.max(np.abs(c), initial=0.0)))
    b_tol = PRIMAL_TOL * max(1.0, abs(b))
    for _ in range(rounds):
        free = ~(at_hi | at_lo)
        x = np.where(at_hi, upper, np.where(at_lo, lower, 0.0))
        fixed = ~free
        rhs = -c[free] - H[np.ix_(free, fixed)] @ x[fixed]
        k = int(free.sum())
        try:
            if active:
                kkt = np.zeros((k + 1, k + 1))
                kkt[:k, :k] = H[np.ix_(free, free)]
                kkt[:k, k] = a[free]
                kkt[k, :k] = a[free]
                sol = np.linalg.solve(kkt, np.append(rhs, b - float(a[fixed] @ x[fixed])))
                x[free], lam = sol[:k], float(sol[k])
            else:
                if k:
                    x[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
                lam = 0.0
        except np.linalg.LinAlgError:
            return None, None
        v = H @ x + c + lam * a
        over = free & (x > upper)
        under = free & (x < lower)
        release_hi = at_hi & (v > tol)
        release_lo = at_lo & (v < -tol)
        violated = not active and float(a @ x) - b > b_tol
        drop = active and lam < 0
        if not (over.any() or under.any() or release_hi.any() or release_lo.any() or violated or drop):
            return x, lam
        at_hi = (at_hi & ~release_hi) | over
        at_lo = (at_lo & ~release_lo) | under
        if violated:
            active = True
        elif drop:
            active = False
    return None, None


def solve_qp_dense(qp: QpProblem) -> QpSolution:
    """Reference solution using dense linear algebra (intended for N <= 2'000)."""
    x, lam, it = solve_box_qp_dense(qp.Q, qp.c, qp.A, qp.b, qp.lower, qp.upper)
    return _finish(qp, x, lam, it, "dense-interior-point")


@dataclass(frozen=True, eq=False)
class VolumeVarianceSolution:
    deltas: np.ndarray
    kkt: KktCertificate
    volume: float
    variance: float
    risk_weight: float
    method: str

    def __iter__(self):
        return iter((self.deltas, self.kkt))


def solve_volume_variance(
    pf: Portfolio,
    cons: Constraints,
    risk_weight: float,
    mode: str = "corrected",
    sqp_config=None,
) -> VolumeVarianceSolution:
    """Maximise ``q_vol - risk_weight * q_var`` under the retention floor.

    The risk weight is a scalarisation of the volume/variance trade-off
    chosen by the caller; both raw objective values are reported. With a zero
    weight the QP is solved directly, otherwise the non-quadratic objective is
    handed to the SQP solver with the exact diagonal Hessian.
    """
    if risk_weight < 0:
        raise ValidationError("risk_weight must be non-negative")
    if risk_weight == 0.0:
        sol = solve_qp(assemble_qp(pf, cons))
        d = sol.deltas
        return VolumeVarianceSolution(
            d, sol.kkt, q_vol(pf, d), q_var(pf, d, mode), 0.0, sol.method
        )
    from .sqp import SqpConfig, build_problem_volume_variance, sqp_solve

    assemble_qp(pf, cons)  # same validity gate as the QP
    problem = build_problem_volume_variance(pf, cons, risk_weight, mode)
    cfg = sqp_config or SqpConfig(hessian_scheme="diagonal-exact")
    res = sqp_solve(problem, None, cfg)
    d = res.deltas
    return VolumeVarianceSolution(
        d, res.kkt, q_vol(pf, d), q_var(pf, d, mode), float(risk_weight), "sqp"
    )
