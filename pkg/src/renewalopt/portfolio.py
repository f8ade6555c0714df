"""Portfolio data model, CSV ingestion, synthetic generation and premium splits."""

from __future__ import annotations

import csv
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .exceptions import ValidationError
from .models import TABLE1, DiscreteProbTable, Ma, Mb, Mc, load_table, ma_window_violations
from . import models

MODEL_KINDS = ("ma", "mb", "mc")
CSV_HEADER = ["id", "premium", "pi0", "model", "param1", "param2"]


@dataclass(frozen=True)
class Policy:
    """A single policyholder.

    ``model_params`` is ``(a, b)`` for ``ma``, ``(T,)`` for ``mb`` and
    ``(table_name,)`` for ``mc``.
    """

    id: str
    premium: float
    base_renewal_prob: float
    model_params: tuple


@dataclass(frozen=True, eq=False)
class Portfolio:
    """Column-oriented collection of policies sharing one renewal model family.

    Use the :meth:`ma`, :meth:`mb` and :meth:`mc` constructors rather than
    building the arrays by hand; they fill in the unused parameter columns.

    ``check_window=False`` skips the ``Ma`` parameter window, which keeps
    probabilities in (0, 1) for every ``|delta| < 1``. Evaluating ``psi``
    still refuses values outside (0, 1) at the deltas actually used.
    """

    ids: tuple
    premium: np.ndarray
    pi0: np.ndarray
    model_kind: str
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    T: np.ndarray | None = None
    table_index: np.ndarray | None = None
    tables: tuple = ()
    label: str = ""
    check_window: bool = True

    def __post_init__(self):
        n = len(self.ids)
        if n == 0:
            raise ValidationError("portfolio must contain at least one policy")
        if len(set(self.ids)) != n:
            raise ValidationError("policy ids must be unique")
        if self.model_kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {self.model_kind!r}")
        for name in ("premium", "pi0", "a", "b", "T", "table_index"):
            value = getattr(self, name)
            if value is None:
                continue
            dtype = int if name == "table_index" else float
            arr = np.array(value, dtype=dtype)
            if arr.shape != (n,):
                raise ValidationError(f"{name} must have one entry per policy")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        self._validate()

    def _validate(self):
        if np.any(~np.isfinite(self.premium)) or np.any(self.premium <= 0):
            i = int(np.flatnonzero(~(self.premium > 0))[0])
            raise ValidationError(f"policy {self.ids[i]}: premium must be > 0")
        bad = ~((self.pi0 > 0) & (self.pi0 < 1))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"policy {self.ids[i]}: base_renewal_prob must lie in (0,1)"
            )
        if self.model_kind == "ma":
            if self.a is None or self.b is None:
                raise ValidationError("ma portfolio needs a and b")
            for i in range(len(self.ids) if self.check_window else 0):
                problems = ma_window_violations(
                    float(self.pi0[i]), float(self.a[i]), float(self.b[i])
                )
                if problems:
                    raise ValidationError(f"policy {self.ids[i]}: " + "; ".join(problems))
        elif self.model_kind == "mb":
            if self.T is None:
                raise ValidationError("mb portfolio needs T")
            bad = ~(self.T < 0)
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise ValidationError(f"policy {self.ids[i]}: T={self.T[i]} must be < 0")
        else:
            if self.table_index is None or not self.tables:
                raise ValidationError("mc portfolio needs tables and table_index")
            if np.any(self.table_index < 0) or np.any(self.table_index >= len(self.tables)):
                raise ValidationError("table_index out of range")
            expected = np.array([t.pi0 for t in self.tables])[self.table_index]
            bad = np.abs(expected - self.pi0) > 1e-12
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise ValidationError(
                    f"policy {self.ids[i]}: pi0={self.pi0[i]} differs from its table's "
                    f"delta=0 entry {expected[i]}"
                )

    # constructors -------------------------------------------------------

    @classmethod
    def ma(cls, premium, pi0, a, b=0.0, ids=None, label="", check_window=True):
        premium = np.atleast_1d(np.asarray(premium, dtype=float))
        n = premium.size
        return cls(
            ids=_default_ids(ids, n),
            premium=premium,
            pi0=np.broadcast_to(np.asarray(pi0, dtype=float), (n,)),
            model_kind="ma",
            a=np.broadcast_to(np.asarray(a, dtype=float), (n,)),
            b=np.broadcast_to(np.asarray(b, dtype=float), (n,)),
            label=label,
            check_window=check_window,
        )

    @classmethod
    def mb(cls, premium, pi0, T, ids=None, label=""):
        premium = np.atleast_1d(np.asarray(premium, dtype=float))
        n = premium.size
        return cls(
            ids=_default_ids(ids, n),
            premium=premium,
            pi0=np.broadcast_to(np.asarray(pi0, dtype=float), (n,)),
            model_kind="mb",
            T=np.broadcast_to(np.asarray(T, dtype=float), (n,)),
            label=label,
        )

    @classmethod
    def mc(cls, premium, tables=(TABLE1,), table_index=0, ids=None, label=""):
        premium = np.atleast_1d(np.asarray(premium, dtype=float))
        n = premium.size
        if isinstance(tables, DiscreteProbTable):
            tables = (tables,)
        tables = tuple(tables)
        table_index = np.broadcast_to(np.asarray(table_index, dtype=int), (n,))
        pi0 = np.array([t.pi0 for t in tables])[table_index]
        return cls(
            ids=_default_ids(ids, n),
            premium=premium,
            pi0=pi0,
            model_kind="mc",
            table_index=table_index,
            tables=tables,
            label=label,
        )

    # accessors ----------------------------------------------------------

    def __len__(self):
        return len(self.ids)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def policies(self) -> list[Policy]:
        return [self.policy(i) for i in range(self.n)]

    def policy(self, i: int) -> Policy:
        if self.model_kind == "ma":
            params = (float(self.a[i]), float(self.b[i]))
        elif self.model_kind == "mb":
            params = (float(self.T[i]),)
        else:
            params = (self.tables[self.table_index[i]].name,)
        return Policy(self.ids[i], float(self.premium[i]), float(self.pi0[i]), params)

    @property
    def model(self):
        """Vectorised renewal model over all policies (``Ma``/``Mb`` only)."""
        if self.model_kind == "ma":
            return Ma(pi=self.pi0, a=self.a, b=self.b)
        if self.model_kind == "mb":
            return Mb(pi=self.pi0, T=self.T)
        if len(self.tables) == 1:
            return Mc(self.tables[0])
        raise ValidationError("a portfolio mixing several tables has no single model")

    def psi(self, deltas) -> np.ndarray:
        """Renewal probability of every policy at its own premium change."""
        deltas = np.asarray(deltas, dtype=float)
        if self.model_kind != "mc":
            return models.psi(self.model, deltas)
        out = np.empty(self.n)
        for k, table in enumerate(self.tables):
            mask = self.table_index == k
            if np.any(mask):
                out[mask] = models.psi(Mc(table), deltas[mask])
        return out

    def psi_derivatives(self, deltas):
        return models.psi_derivatives(self.model, np.asarray(deltas, dtype=float))

    def subset(self, indices, label: str = "") -> "Portfolio":
        idx = np.asarray(indices, dtype=int)
        pick = lambda arr: None if arr is None else arr[idx]  # noqa: E731
        return Portfolio(
            ids=tuple(self.ids[i] for i in idx),
            premium=self.premium[idx],
            pi0=self.pi0[idx],
            model_kind=self.model_kind,
            a=pick(self.a),
            b=pick(self.b),
            T=pick(self.T),
            table_index=pick(self.table_index),
            tables=self.tables,
            label=label,
            check_window=self.check_window,
        )

    def grid_table(self, grid) -> tuple[np.ndarray, np.ndarray]:
        """Renewal probabilities of every policy at every grid value.

        Returns ``(deltas, psi)`` where ``psi`` has shape ``(n, len(grid))``.
        Tabulated policies must list every grid value.
        """
        grid = np.asarray(grid, dtype=float)
        if self.model_kind != "mc":
            return grid, np.stack([self.psi(np.full(self.n, g)) for g in grid], axis=1)
        per_table = [t.probs[t.index_of(grid)] for t in self.tables]
        return grid, np.stack(per_table)[self.table_index]


def _default_ids(ids, n):
    if ids is None:
        return tuple(f"p{i + 1}" for i in range(n))
    ids = tuple(str(i) for i in ids)
    if len(ids) != n:
        raise ValidationError("ids must have one entry per policy")
    return ids


# CSV ----------------------------------------------------------------------


def load_portfolio(path, tables: Mapping[str, DiscreteProbTable] | None = None) -> Portfolio:
    """Read a portfolio CSV.

    Mc rows name their table in ``param1``; names are resolved against
    ``tables`` (``table1`` is always known), then against a ``<name>.csv``
    file next to the portfolio.
    """
    path = Path(path)
    known = {"table1": TABLE1}
    if tables:
        known.update(tables)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise ValidationError(f"{path}: header must be {','.join(CSV_HEADER)}")
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if row]
    if not rows:
        raise ValidationError(f"{path}: no policy rows")

    ids, premium, pi0, kinds, p1, p2 = [], [], [], [], [], []
    for lineno, row in rows:
        if len(row) != len(CSV_HEADER):
            raise ValidationError(f"line {lineno}: expected 6 fields, got {len(row)}")
        rid, rprem, rpi, rmodel, rp1, rp2 = (c.strip() for c in row)
        ids.append(rid)
        premium.append(_parse_float(rprem, lineno, "premium"))
        pi = _parse_float(rpi, lineno, "pi0")
        if not 0.0 < pi < 1.0:
            raise ValidationError(
                f"line {lineno}, policy {rid}: base_renewal_prob must lie in (0,1)"
            )
        pi0.append(pi)
        if rmodel not in MODEL_KINDS:
            raise ValidationError(f"line {lineno}: field 'model' must be one of ma, mb, mc")
        kinds.append(rmodel)
        if rmodel == "ma":
            p1.append(_parse_float(rp1, lineno, "param1"))
            p2.append(_parse_float(rp2, lineno, "param2") if rp2 else 0.0)
        elif rmodel == "mb":
            p1.append(_parse_float(rp1, lineno, "param1"))
            p2.append(None)
        else:
            if not rp1:
                raise ValidationError(f"line {lineno}: field 'param1' must name a table")
            p1.append(rp1)
            p2.append(None)

    if len(set(kinds)) != 1:
        raise ValidationError(f"{path}: all rows must use the same model family")
    kind = kinds[0]
    if kind == "ma":
        for rid, pi, a, b in zip(ids, pi0, p1, p2):
            problems = ma_window_violations(pi, a, b)
            if problems:
                raise ValidationError(f"policy {rid}: " + "; ".join(problems))
        return Portfolio.ma(premium, pi0, p1, p2, ids=ids)
    if kind == "mb":
        for rid, T in zip(ids, p1):
            if not T < 0:
                raise ValidationError(f"policy {rid}: T={T} must be < 0")
        return Portfolio.mb(premium, pi0, p1, ids=ids)

    names = list(dict.fromkeys(p1))
    resolved = []
    for name in names:
        if name in known:
            resolved.append(known[name])
        elif (path.parent / f"{name}.csv").exists():
            resolved.append(load_table(path.parent / f"{name}.csv", name=name))
        else:
            raise ValidationError(f"unknown table {name!r}")
    index = [names.index(name) for name in p1]
    pf = Portfolio.mc(premium, tables=resolved, table_index=index, ids=ids)
    bad = np.abs(pf.pi0 - np.asarray(pi0)) > 1e-12
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValidationError(
            f"policy {ids[i]}: pi0={pi0[i]} differs from its table's delta=0 entry"
        )
    return pf


def save_portfolio(pf: Portfolio, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(pf.n):
            row = [pf.ids[i], repr(float(pf.premium[i])), repr(float(pf.pi0[i])), pf.model_kind]
            if pf.model_kind == "ma":
                row += [repr(float(pf.a[i])), repr(float(pf.b[i]))]
            elif pf.model_kind == "mb":
                row += [repr(float(pf.T[i])), ""]
            else:
                row += [pf.tables[pf.table_index[i]].name, ""]
            writer.writerow(row)


def _parse_float(text, lineno, fieldname):
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"line {lineno}: field {fieldname!r} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"line {lineno}: field {fieldname!r} must be finite")
    return value


# synthetic generation -----------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    """Target premium statistics for synthetic portfolios."""

    min: float
    mean: float
    max: float
    sd: float | None = None


#: Motor production statistics (10'000 policies).
MOTOR_CALIBRATION = Calibration(min=200.0, mean=1204.0, max=9061.0, sd=990.0)


def truncated_exponential_scale(calibration: Calibration) -> float:
    """Scale of a right-truncated exponential on ``[min, max]`` with the target mean."""
    width = calibration.max - calibration.min
    target = calibration.mean - calibration.min
    if not 0 < target < width / 2:
        raise ValidationError(
            "calibration mean must lie strictly between min and the midpoint of [min, max]"
        )

    def excess(scale):
        # mean excess over min of the truncated law, minus the target
        r = width / scale
        tail = width / math.expm1(r) if r < 700 else 0.0
        return scale - tail - target

    return brentq(excess, target * 1e-3, width * 1e6, xtol=1e-12, rtol=1e-14)


def sample_premiums(n: int, rng: np.random.Generator, calibration: Calibration) -> np.ndarray:
    scale = truncated_exponential_scale(calibration)
    width = calibration.max - calibration.min
    u = rng.random(n)
    return calibration.min - scale * np.log1p(-u * -math.expm1(-width / scale))


def generate_synthetic(
    n: int,
    seed: int,
    calibration: Calibration = MOTOR_CALIBRATION,
    model: str = "ma",
    pi_range: tuple[float, float] = (0.85, 0.98),
    T_range: tuple[float, float] = (-6.0, -1.0),
    table: DiscreteProbTable = TABLE1,
    delta_floor: float = -0.3,
) -> Portfolio:
    """Random portfolio whose premiums follow the calibration statistics.

    Premiums are a shifted exponential law truncated to ``[min, max]`` whose
    mean equals ``calibration.mean``. Base renewal probabilities are uniform on
    ``pi_range``. Elasticities are drawn strictly inside their validity
    windows: ``model="ma"`` has ``b = 0``; ``"ma_quadratic"`` adds a curvature
    term small enough that the parabola vertex stays below ``delta_floor``;
    ``"mb"`` draws ``T`` uniformly on ``T_range``; ``"mc"`` attaches ``table``
    to every policy (``pi_range`` is then unused).
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    if calibration.min >= calibration.max:
        raise ValidationError("calibration min must be below max")
    rng = np.random.default_rng(seed)
    premium = sample_premiums(n, rng, calibration)
    if model == "mc":
        return Portfolio.mc(premium, tables=(table,), table_index=0)
    lo, hi = pi_range
    if not 0 < lo <= hi < 1:
        raise ValidationError("pi_range must lie inside (0, 1)")
    pi0 = rng.uniform(lo, hi, n)
    if model in ("ma", "ma_quadratic"):
        a = (1.0 - 1.0 / pi0) * rng.uniform(0.05, 0.95, n)
        b = np.zeros(n)
        if model == "ma_quadratic":
            # vertex -a/(2b) <= delta_floor  <=>  |b| <= |a| / (2 |delta_floor|)
            b = -np.abs(a) / (2.0 * abs(delta_floor)) * rng.uniform(0.05, 0.95, n)
        return Portfolio.ma(premium, pi0, a, b)
    if model == "mb":
        T = rng.uniform(T_range[0], T_range[1], n)
        if np.any(T >= 0):
            raise ValidationError("T_range must be negative")
        return Portfolio.mb(premium, pi0, T)
    raise ValidationError(f"unknown model {model!r}")


# splitting ----------------------------------------------------------------


@dataclass(frozen=True)
class PremiumSplit:
    """Band edges; band ``k`` holds premiums in ``[t[k-1], t[k])``."""

    thresholds: tuple = ()

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        for lo, hi in zip(t, t[1:]):
            if hi == lo:
                raise ValidationError(f"threshold {lo} appears twice")
            if hi < lo:
                raise ValidationError("thresholds must be strictly ascending")
        object.__setattr__(self, "thresholds", t)

    @property
    def n_bands(self) -> int:
        return len(self.thresholds) + 1

    def assign(self, premiums) -> np.ndarray:
        return np.searchsorted(np.asarray(self.thresholds), np.asarray(premiums), side="right")

    def labels(self) -> list[str]:
        edges = (-math.inf, *self.thresholds, math.inf)
        out = []
        for lo, hi in zip(edges, edges[1:]):
            if lo == -math.inf and hi == math.inf:
                out.append("all")
            elif lo == -math.inf:
                out.append(f"<{hi:g}")
            elif hi == math.inf:
                out.append(f">={lo:g}")
            else:
                out.append(f"[{lo:g},{hi:g})")
        return out


def split_portfolio(pf: Portfolio, split: PremiumSplit | Sequence[float]) -> list[Portfolio]:
    """Partition ``pf`` into premium bands; empty bands are left out.

    Each sub-portfolio's ``label`` names its band.
    """
    if not isinstance(split, PremiumSplit):
        split = PremiumSplit(tuple(split))
    band = split.assign(pf.premium)
    labels = split.labels()
    out = []
    for k in range(split.n_bands):
        idx = np.flatnonzero(band == k)
        if idx.size:
            out.append(pf.subset(idx, label=labels[k]))
    return out
