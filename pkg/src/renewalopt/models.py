"""Renewal probability models.

Three families describe how the probability that a policyholder renews
responds to a relative premium change ``delta``:

* :class:`Ma` -- polynomial, ``psi = pi * (1 + a*delta + b*delta**2)``
* :class:`Mb` -- logistic, ``psi = 1 / (1 + exp(-T*delta) / c)`` with
  ``c = pi / (1 - pi)``
* :class:`Mc` -- a discrete table of probabilities on a finite set of deltas

The parameters of ``Ma`` and ``Mb`` may be scalars or numpy arrays; all
functions broadcast, so a whole portfolio can be evaluated at once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import expit, logit

from .exceptions import ValidationError

# Table lookups match a requested delta to a stored one within this distance.
DELTA_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class Ma:
    pi: float | np.ndarray
    a: float | np.ndarray
    b: float | np.ndarray = 0.0


@dataclass(frozen=True)
class Mb:
    pi: float | np.ndarray
    T: float | np.ndarray

    @property
    def c(self):
        return np.asarray(self.pi) / (1.0 - np.asarray(self.pi))


@dataclass(frozen=True, eq=False)
class DiscreteProbTable:
    """Renewal probabilities given only at a finite set of premium changes."""

    deltas: np.ndarray
    probs: np.ndarray
    name: str = "table"

    def __post_init__(self):
        deltas = np.asarray(self.deltas, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if deltas.ndim != 1 or deltas.shape != probs.shape:
            raise ValidationError("table deltas and probs must be 1-D of equal length")
        if deltas.size < 2:
            raise ValidationError("table needs at least two points")
        if np.any(np.diff(deltas) <= 0):
            raise ValidationError("table deltas must be strictly ascending")
        if np.any(probs <= 0) or np.any(probs > 1):
            raise ValidationError("table probabilities must lie in (0, 1]")
        if np.any(np.diff(probs) > 0):
            raise ValidationError("table probabilities must be non-increasing in delta")
        if not np.any(np.abs(deltas) <= DELTA_MATCH_TOL):
            raise ValidationError("table must contain delta = 0")
        deltas.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "probs", probs)

    @property
    def pi0(self) -> float:
        """Probability at delta = 0."""
        return float(self.probs[np.argmin(np.abs(self.deltas))])

    def index_of(self, delta) -> np.ndarray:
        """Indices of ``delta`` values in the table; raises on a miss."""
        delta = np.asarray(delta, dtype=float)
        pos = np.clip(np.searchsorted(self.deltas, delta), 1, self.deltas.size - 1)
        left = self.deltas[pos - 1]
        right = self.deltas[pos]
        idx = np.where(np.abs(delta - left) <= np.abs(delta - right), pos - 1, pos)
        miss = np.abs(self.deltas[idx] - delta) > DELTA_MATCH_TOL
        if np.any(miss):
            bad = np.atleast_1d(delta)[np.atleast_1d(miss)][0]
            raise ValidationError(f"delta {bad!r} is not a point of table {self.name!r}")
        return idx

    def __eq__(self, other):
        if not isinstance(other, DiscreteProbTable):
            return NotImplemented
        return (
            np.array_equal(self.deltas, other.deltas)
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self):
        return hash((self.deltas.tobytes(), self.probs.tobytes()))


@dataclass(frozen=True)
class Mc:
    table: DiscreteProbTable = field()


RenewalModel = Union[Ma, Mb, Mc]

#: Renewal probabilities of the illustrative policyholder used throughout the
#: experiments (premium changes from -20% to +20% in steps of 5%).
TABLE1 = DiscreteProbTable(
    deltas=np.round(np.arange(-0.20, 0.2001, 0.05), 10),
    probs=np.array([0.999, 0.995, 0.990, 0.975, 0.950, 0.925, 0.900, 0.875, 0.825]),
    name="table1",
)


def psi(model: RenewalModel, delta):
    """Renewal probability of ``model`` at premium change ``delta``.

    For ``Ma`` and ``Mb`` the value at ``delta == 0`` is exactly ``pi``.
    ``Mc`` only answers at its table points.
    """
    delta = np.asarray(delta, dtype=float)
    if isinstance(model, Ma):
        pi = np.asarray(model.pi, dtype=float)
        value = pi * (1.0 + model.a * delta + model.b * delta**2)
        if np.any(value <= 0.0) or np.any(value >= 1.0):
            raise ValidationError(
                "Ma renewal probability left (0, 1); parameters are invalid for this delta range"
            )
        return value
    if isinstance(model, Mb):
        pi = np.asarray(model.pi, dtype=float)
        value = expit(model.T * delta + logit(pi))
        return np.where(delta == 0.0, pi, value)
    if isinstance(model, Mc):
        return model.table.probs[model.table.index_of(delta)]
    raise TypeError(f"unknown renewal model {type(model).__name__}")


def psi_derivatives(model: RenewalModel, delta):
    """First and second derivative of ``psi`` with respect to ``delta``."""
    delta = np.asarray(delta, dtype=float)
    if isinstance(model, Ma):
        pi = np.asarray(model.pi, dtype=float)
        first = pi * (model.a + 2.0 * model.b * delta)
        second = np.broadcast_to(2.0 * pi * model.b, first.shape).astype(float)
        return first, second
    if isinstance(model, Mb):
        p = psi(model, delta)
        s = p * (1.0 - p)
        return model.T * s, model.T**2 * s * (1.0 - 2.0 * p)
    if isinstance(model, Mc):
        raise ValidationError("Mc is defined on a grid only and has no derivatives")
    raise TypeError(f"unknown renewal model {type(model).__name__}")


def approximate_mb_by_ma(model: Mb, coefficients: str = "taylor") -> Ma:
    """Polynomial model that matches a logistic one near ``delta = 0``.

    ``coefficients="taylor"`` returns the second-order Taylor expansion, which
    agrees with ``model`` in value, slope and curvature at zero
    (``a = T/(1+c)``). ``coefficients="printed"`` uses ``a = c*T/(1+c)``, the
    linear coefficient as it is usually quoted; it differs from the Taylor
    slope by a factor ``c``. Both variants share ``pi = c/(1+c)`` and
    ``b = -T**2 (c-1) / (2 (1+c)**2)``.
    """
    if not isinstance(model, Mb):
        raise TypeError("approximate_mb_by_ma expects an Mb model")
    c = model.c
    T = np.asarray(model.T, dtype=float)
    pi = c / (1.0 + c)
    if coefficients == "taylor":
        a = T / (1.0 + c)
    elif coefficients == "printed":
        a = c * T / (1.0 + c)
    else:
        raise ValueError("coefficients must be 'taylor' or 'printed'")
    b = -(T**2) * (c - 1.0) / (2.0 * (1.0 + c) ** 2)
    if np.ndim(pi) == 0:
        return Ma(pi=float(pi), a=float(a), b=float(b))
    return Ma(pi=pi, a=a, b=b)


def fit_quadratic_to_table(table: DiscreteProbTable) -> tuple[float, float, float]:
    """Least-squares quadratic ``q2*d**2 + q1*d + q0`` through the table points."""
    deltas = np.asarray(table.deltas, dtype=float)
    if np.unique(deltas).size < 3:
        raise ValidationError("quadratic fit needs at least three distinct deltas")
    design = np.vander(deltas, 3)
    coef, *_ = np.linalg.lstsq(design, np.asarray(table.probs, dtype=float), rcond=None)
    q2, q1, q0 = (float(c) for c in coef)
    return q2, q1, q0


def ma_window_violations(pi, a, b) -> list[str]:
    """Human-readable list of broken validity bounds for Ma parameters.

    With ``b == 0`` the slope must satisfy ``1 - 1/pi < a < 0``. Otherwise
    ``-1 < b < 0`` and
    ``max(1 - 1/pi, -1 - b) < a < min(1 + b, 1/pi - 1)``.
    """
    problems = []
    if not 0.0 < pi < 1.0:
        return [f"base_renewal_prob {pi} must lie in (0,1)"]
    if b == 0.0:
        lo, hi = 1.0 - 1.0 / pi, 0.0
        if not lo < a < hi:
            problems.append(f"a={a} outside ({lo:.6g}, {hi:.6g})")
        return problems
    if not -1.0 < b < 0.0:
        problems.append(f"b={b} outside (-1, 0)")
    lo = max(1.0 - 1.0 / pi, -1.0 - b)
    hi = min(1.0 + b, 1.0 / pi - 1.0)
    if not lo < a < hi:
        problems.append(f"a={a} outside ({lo:.6g}, {hi:.6g})")
    return problems


def ma_vertex_inside(a, b, lower, upper) -> np.ndarray:
    """True where the parabola vertex ``-a/(2b)`` lies strictly inside the box.

    Inside the box an ``Ma`` model with ``b != 0`` would stop being monotone
    in ``delta``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        vertex = np.where(b != 0.0, -a / (2.0 * b), np.nan)
    return (b != 0.0) & (vertex > lower) & (vertex < upper)


def load_table(path, name: str | None = None) -> DiscreteProbTable:
    """Read a two-column ``delta,psi`` CSV into a table."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"delta", "psi"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: header must contain 'delta,psi'")
        rows = [(float(r["delta"]), float(r["psi"])) for r in reader]
    if not rows:
        raise ValidationError(f"{path}: empty table")
    deltas, probs = zip(*rows)
    return DiscreteProbTable(np.array(deltas), np.array(probs), name=name or path.stem)


def save_table(table: DiscreteProbTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "psi"])
        for d, p in zip(table.deltas, table.probs):
            writer.writerow([repr(float(d)), repr(float(p))])
