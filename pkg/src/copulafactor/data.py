"""Observed mixed-type data, margin metadata, rank structure and empirical cdfs."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


class MarginKind(enum.Enum):
    CONTINUOUS = "continuous"
    ORDINAL = "ordinal"
    BINARY = "binary"


@dataclass(frozen=True)
class MarginSpec:
    """Type of one observed column.

    Binary margins behave exactly like ``Ordinal(2)`` everywhere downstream.
    """

    kind: MarginKind
    levels: int | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind is MarginKind.BINARY:
            object.__setattr__(self, "levels", 2)
        elif self.kind is MarginKind.ORDINAL:
            if self.levels is None or int(self.levels) < 2:
                raise InputError(f"ordinal margin {self.label!r} needs at least 2 levels")
            object.__setattr__(self, "levels", int(self.levels))
        else:
            object.__setattr__(self, "levels", None)

    @classmethod
    def continuous(cls, label: str = "") -> MarginSpec:
        return cls(MarginKind.CONTINUOUS, None, label)

    @classmethod
    def ordinal(cls, levels: int, label: str = "") -> MarginSpec:
        return cls(MarginKind.ORDINAL, levels, label)

    @classmethod
    def binary(cls, label: str = "") -> MarginSpec:
        return cls(MarginKind.BINARY, 2, label)

    @property
    def is_discrete(self) -> bool:
        return self.kind is not MarginKind.CONTINUOUS

    def __str__(self):
        if self.kind is MarginKind.ORDINAL:
            return f"ordinal:{self.levels}"
        return self.kind.value


class MixedDataMatrix:
    """An ``n x p`` matrix of mixed continuous/ordinal/binary observations.

    Parameters
    ----------
    values : array_like, shape (n, p)
        Observations. Ordinal and binary columns hold integer codes ``1..c``.
        ``NaN`` entries are treated as missing.
    margins : sequence of MarginSpec, optional
        One per column; defaults to all continuous.
    missing : array_like of bool, optional
        Extra missingness mask, OR-ed with the ``NaN`` pattern of ``values``.
    row_labels : sequence of str, optional
        Names of the rows (e.g. countries).
    """

    def __init__(self, values, margins=None, missing=None, row_labels=None):
        values = np.array(values, dtype=float)
        if values.ndim != 2:
            raise InputError("data must be a two-dimensional array")
        n, p = values.shape
        if n < 1 or p < 1:
            raise InputError("data must have at least one row and one column")
        mask = np.isnan(values)
        if missing is not None:
            missing = np.asarray(missing, dtype=bool)
            if missing.shape != values.shape:
                raise InputError("missing mask shape does not match data")
            mask |= missing
        if margins is None:
            margins = [MarginSpec.continuous(f"V{j + 1}") for j in range(p)]
        margins = tuple(margins)
        if len(margins) != p:
            raise InputError(f"expected {p} margin specs, got {len(margins)}")
        values[mask] = np.nan

        for j, spec in enumerate(margins):
            name = spec.label or f"column {j}"
            col = values[~mask[:, j], j]
            if col.size == 0:
                raise InputError(f"{name} is entirely missing")
            if np.any(~np.isfinite(col)):
                raise InputError(f"{name} contains non-finite values")
            if col.size > 1 and np.all(col == col[0]) or col.size == 1 and n > 1:
                raise InputError(f"{name} is constant; it carries no rank information")
            if spec.is_discrete:
                bad = (col != np.round(col)) | (col < 1) | (col > spec.levels)
                if np.any(bad):
                    raise InputError(
                        f"{name} must hold integer codes in 1..{spec.levels}, "
                        f"found {col[bad][0]!r}"
                    )

        values.setflags(write=False)
        mask.setflags(write=False)
        self.values = values
        self.missing = mask
        self.margins = margins
        if row_labels is not None and len(row_labels) != n:
            raise InputError(f"expected {n} row labels, got {len(row_labels)}")
        self.row_labels = None if row_labels is None else list(row_labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def labels(self) -> list[str]:
        return [m.label or f"V{j + 1}" for j, m in enumerate(self.margins)]

    def column(self, j: int) -> np.ndarray:
        """Non-missing entries of column ``j``."""
        return self.values[~self.missing[:, j], j]

    def with_column(self, j: int, new_values) -> MixedDataMatrix:
        values = np.array(self.values)
        values[:, j] = new_values
        return MixedDataMatrix(values, self.margins, self.missing, self.row_labels)

    def __repr__(self):
        kinds = ", ".join(str(m) for m in self.margins)
        return f"MixedDataMatrix(n={self.n}, p={self.p}, margins=[{kinds}])"


@dataclass(frozen=True)
class TieGroups:
    """Per-column ordered partition of non-missing rows by observed value.

    ``columns[j]`` is a list of ``(value, rows)`` pairs sorted by value.
    Rows sharing a value are mutually unconstrained; every row of a group
    must lie above every row of the preceding group and below every row of
    the following one.

    The flat arrays concatenate all columns and exist for the sampler:
    ``order`` holds flat indices ``i * p + j`` grouped contiguously,
    ``starts`` the offset of every group within ``order``, and ``has_prev`` /
    ``has_next`` flag whether a group has a neighbour in the same column.
    """

    columns: tuple
    order: np.ndarray = field(repr=False)
    starts: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)
    group_column: np.ndarray = field(repr=False)
    group_rank: np.ndarray = field(repr=False)
    has_prev: np.ndarray = field(repr=False)
    has_next: np.ndarray = field(repr=False)

    def bounds(self, Z: np.ndarray, i: int, j: int) -> tuple[float, float]:
        """Current open interval ``(lower, upper)`` that ``Z[i, j]`` must lie in."""
        groups = self.columns[j]
        for g, (_, rows) in enumerate(groups):
            if i in rows:
                lo = Z[groups[g - 1][1], j].max() if g > 0 else -np.inf
                hi = Z[groups[g + 1][1], j].min() if g + 1 < len(groups) else np.inf
                return float(lo), float(hi)
        return -np.inf, np.inf

    def satisfied_by(self, Z: np.ndarray) -> bool:
        """Whether ``Z`` lies in the rank-constraint set of the data."""
        for j, groups in enumerate(self.columns):
            for g in range(1, len(groups)):
                if not Z[groups[g - 1][1], j].max() < Z[groups[g][1], j].min():
                    return False
        return True


def build_tie_groups(data: MixedDataMatrix) -> TieGroups:
    """Partition each column's observed rows into groups of equal value."""
    p = data.p
    columns = []
    order, sizes, gcol, grank = [], [], [], []
    for j in range(p):
        rows = np.flatnonzero(~data.missing[:, j])
        vals = data.values[rows, j]
        uniq, inverse = np.unique(vals, return_inverse=True)
        srt = np.argsort(inverse, kind="stable")
        counts = np.bincount(inverse, minlength=uniq.size)
        pieces = np.split(rows[srt], np.cumsum(counts)[:-1])
        columns.append(tuple((float(v), r) for v, r in zip(uniq, pieces)))
        order.append(rows[srt] * p + j)
        sizes.append(counts)
        gcol.append(np.full(uniq.size, j))
        grank.append(np.arange(uniq.size))

    sizes = np.concatenate(sizes)
    gcol = np.concatenate(gcol)
    grank = np.concatenate(grank)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    has_prev = grank > 0
    has_next = np.append(gcol[1:] == gcol[:-1], False)
    return TieGroups(
        columns=tuple(columns),
        order=np.concatenate(order),
        starts=starts,
        sizes=sizes,
        group_column=gcol,
        group_rank=grank,
        has_prev=has_prev,
        has_next=has_next,
    )


@dataclass(frozen=True)
class EmpiricalCdf:
    """Scaled empirical cdf of one column: ``#{y_i <= t} / (n + 1)``."""

    values: np.ndarray
    probs: np.ndarray
    n: int

    def __call__(self, t):
        idx = np.searchsorted(self.values, t, side="right")
        cum = np.concatenate([[0.0], self.probs])
        return cum[idx]

    def left_limit(self, t):
        """``F(t-)``, the cdf just below ``t``."""
        idx = np.searchsorted(self.values, t, side="left")
        cum = np.concatenate([[0.0], self.probs])
        return cum[idx]

    def inverse(self, u):
        return pseudo_inverse_cdf(self, u)

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.values, t), 0, self.values.size - 1)
        return self.values[idx] == t


def empirical_cdf(data: MixedDataMatrix, j: int) -> EmpiricalCdf:
    col = data.column(j)
    values, counts = np.unique(col, return_counts=True)
    probs = np.cumsum(counts) / (col.size + 1.0)
    return EmpiricalCdf(values, probs, col.size)


def empirical_cdfs(data: MixedDataMatrix) -> list[EmpiricalCdf]:
    return [empirical_cdf(data, j) for j in range(data.p)]


def pseudo_inverse_cdf(cdf: EmpiricalCdf, u):
    """Smallest stored value whose cumulative proportion is at least ``u``.

    Probabilities above the largest stored proportion map to the column
    maximum.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0) | (u_arr >= 1)) or np.any(np.isnan(u_arr)):
        raise InputError("pseudo-inverse needs probabilities strictly inside (0, 1)")
    idx = np.searchsorted(cdf.probs, u_arr, side="left")
    out = cdf.values[np.minimum(idx, cdf.values.size - 1)]
    return out if out.ndim else out.item()
