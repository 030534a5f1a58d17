"""CSV ingestion, margin-spec files, draw archives and delimited tables.

Draw archive layout (all integers and floats little-endian)::

    8 bytes   magic  b"CFDRAWS\\x00"
    4 bytes   uint32 format version
    4 bytes   uint32 header length L
    L bytes   UTF-8 JSON header (sorted keys): version, count, p, k, n,
              has_scores, labels, config, interrupted
    records   count records of float64 values: scaled loadings (p*k,
              row-major), uniquenesses (p), then factor scores (k*n,
              row-major) when has_scores is true
"""

from __future__ import annotations

import csv
import json
import struct
from importlib import resources
from pathlib import Path

import numpy as np

from .data import MarginKind, MarginSpec, MixedDataMatrix
from .errors import InputError
from .gibbs import PosteriorDraws

MISSING_TOKENS = frozenset({"", "NA", "na", "NaN", "nan"})
MAX_ORDINAL_LEVELS = 15

ARCHIVE_MAGIC = b"CFDRAWS\x00"
ARCHIVE_VERSION = 1


# -- margin specs ------------------------------------------------------------


def _margin_request(text: str) -> tuple[MarginKind, int | None]:
    kind, _, arg = text.strip().lower().partition(":")
    try:
        kind = MarginKind(kind)
    except ValueError:
        raise InputError(f"unknown margin type {text!r}; use continuous, binary, ordinal or ordinal:C") from None
    levels = None
    if arg:
        if kind is not MarginKind.ORDINAL:
            raise InputError(f"only ordinal margins take a level count: {text!r}")
        try:
            levels = int(arg)
        except ValueError:
            raise InputError(f"bad level count in margin spec {text!r}") from None
    return kind, levels


def parse_margin(text: str, label: str = "", levels: int | None = None) -> MarginSpec:
    """``continuous``, ``binary``, ``ordinal`` or ``ordinal:C``.

    A bare ``ordinal`` takes its level count from ``levels``.
    """
    kind, given = _margin_request(text)
    if kind is MarginKind.ORDINAL and given is None and levels is None:
        raise InputError(f"ordinal margin {label!r} needs a level count")
    return MarginSpec(kind, given if given is not None else levels, label)


def read_margin_spec(path) -> dict[str, str]:
    """Read a ``name: type`` file (one column per line, ``#`` comments)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, kind = line.partition(":")
        if not sep or not name.strip():
            raise InputError(f"{path}:{lineno}: expected 'column: type', got {line!r}")
        _margin_request(kind)
        out[name.strip()] = kind.strip()
    return out


def write_margin_spec(path, data: MixedDataMatrix):
    lines = [f"{label}: {spec}" for label, spec in zip(data.labels, data.margins)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- CSV ingestion -----------------------------------------------------------


def _parse_cell(cell: str, row: int, name: str) -> float:
    token = cell.strip()
    if token in MISSING_TOKENS:
        return np.nan
    try:
        value = float(token)
    except ValueError:
        raise InputError(f"row {row}, column {name!r}: cannot parse {cell!r} as a number") from None
    if not np.isfinite(value):
        raise InputError(f"row {row}, column {name!r}: non-finite value {cell!r}")
    return value


def infer_margin(values: np.ndarray, label: str = "") -> MarginSpec:
    """Two distinct values: binary; integers with at most 15 distinct values: ordinal."""
    obs = values[~np.isnan(values)]
    distinct = np.unique(obs)
    if distinct.size == 2:
        return MarginSpec.binary(label)
    if distinct.size <= MAX_ORDINAL_LEVELS and np.all(distinct == np.round(distinct)):
        return MarginSpec.ordinal(max(distinct.size, 2), label)
    return MarginSpec.continuous(label)


def _recode(values: np.ndarray, kind: MarginKind, levels, name: str) -> tuple[np.ndarray, MarginSpec]:
    """Map the observed levels of a discrete column to ``1..c`` in sorted order."""
    obs = ~np.isnan(values)
    distinct = np.unique(values[obs])
    if kind is MarginKind.BINARY:
        levels = 2
    elif levels is None:
        levels = max(distinct.size, 2)
    if distinct.size > levels:
        raise InputError(f"column {name!r} has {distinct.size} distinct values but is declared with {levels} levels")
    out = np.full(values.shape, np.nan)
    out[obs] = 1.0 + np.searchsorted(distinct, values[obs])
    if kind is MarginKind.BINARY:
        return out, MarginSpec.binary(name)
    return out, MarginSpec.ordinal(levels, name)


def ingest_csv(path, margins=None, *, index_col: str | None = None, infer: bool = True) -> MixedDataMatrix:
    """Read a CSV file with a header row into a :class:`MixedDataMatrix`.

    Parameters
    ----------
    margins : dict or path, optional
        Column name to margin type (``continuous``, ``binary``, ``ordinal``
        or ``ordinal:C``), or the path of a margin-spec file. Columns not
        listed are inferred when ``infer`` is true and continuous otherwise.
    index_col : str, optional
        Column of row labels (e.g. country names), kept on ``row_labels``.

    Discrete columns are recoded to ``1..c`` preserving the order of their
    observed values. Empty cells and ``NA`` are missing.
    """
    path = Path(path)
    if margins is not None and not isinstance(margins, dict):
        margins = read_margin_spec(margins)
    margins = dict(margins or {})
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    if not body:
        raise InputError(f"{path} has no data rows")
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise InputError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
    if index_col is not None and index_col not in header:
        raise InputError(f"index column {index_col!r} not found in header")
    unknown = set(margins) - set(header)
    if unknown:
        raise InputError(f"margin spec names unknown columns: {sorted(unknown)}")

    names = [h for h in header if h != index_col]
    positions = [header.index(h) for h in names]
    values = np.array(
        [[_parse_cell(r[c], i, header[c]) for c in positions] for i, r in enumerate(body, start=2)],
        dtype=float,
    ).reshape(len(body), len(names))

    specs = []
    for j, name in enumerate(names):
        col = values[:, j]
        if np.all(np.isnan(col)):
            raise InputError(f"column {name!r} is entirely missing")
        if name in margins:
            kind, levels = _margin_request(margins[name])
        elif infer:
            inferred = infer_margin(col, name)
            kind, levels = inferred.kind, inferred.levels
        else:
            kind, levels = MarginKind.CONTINUOUS, None
        spec = MarginSpec.continuous(name)
        if kind is not MarginKind.CONTINUOUS:
            # binary columns may carry any two labels; ordinal ones need integers
            bad = ~np.isnan(col) & (col != np.round(col)) & (kind is MarginKind.ORDINAL)
            if np.any(bad):
                row = int(np.flatnonzero(bad)[0]) + 2
                raise InputError(f"row {row}, column {name!r}: non-integer value {col[bad][0]!r} in a discrete column")
            values[:, j], spec = _recode(col, kind, levels, name)
        specs.append(spec)
    row_labels = [r[header.index(index_col)] for r in body] if index_col else None
    return MixedDataMatrix(values, specs, row_labels=row_labels)


PERISK_MARGINS = {
    "Ind.Jud": "binary",
    "Black.Mkt.Premium": "continuous",
    "Lack.Exprop.Risk": "ordinal:6",
    "Lack.Corruption": "ordinal:6",
    "GDP.Per.Worker": "continuous",
}


def perisk_path() -> Path:
    return Path(str(resources.files("copulafactor") / "datasets" / "perisk.csv"))


def load_perisk() -> MixedDataMatrix:
    """The bundled 62-country political-economic risk data."""
    return ingest_csv(perisk_path(), PERISK_MARGINS, index_col="country")


# -- draw archives -----------------------------------------------------------


def _archive_header(draws: PosteriorDraws) -> dict:
    return {
        "version": ARCHIVE_VERSION,
        "count": draws.count,
        "p": draws.p,
        "k": draws.k,
        "n": 0 if draws.scores is None else int(draws.scores.shape[2]),
        "has_scores": draws.scores is not None,
        "labels": list(draws.labels),
        "config": draws.config,
        "interrupted": bool(draws.interrupted),
    }


def encode_archive(draws: PosteriorDraws) -> bytes:
    header = json.dumps(_archive_header(draws), sort_keys=True, default=_json_default).encode("utf-8")
    parts = [draws.loadings.reshape(draws.count, -1), draws.uniqueness.reshape(draws.count, -1)]
    if draws.scores is not None:
        parts.append(draws.scores.reshape(draws.count, -1))
    body = np.concatenate(parts, axis=1).astype("<f8", copy=False)
    return ARCHIVE_MAGIC + struct.pack("<II", ARCHIVE_VERSION, len(header)) + header + body.tobytes()


def decode_archive(blob: bytes) -> PosteriorDraws:
    if blob[: len(ARCHIVE_MAGIC)] != ARCHIVE_MAGIC:
        raise InputError("not a draw archive (bad magic header)")
    off = len(ARCHIVE_MAGIC)
    try:
        version, hlen = struct.unpack_from("<II", blob, off)
    except struct.error:
        raise InputError("truncated draw archive header") from None
    if version != ARCHIVE_VERSION:
        raise InputError(f"unsupported draw archive version {version}")
    off += 8
    try:
        header = json.loads(blob[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"corrupt draw archive header: {exc}") from exc
    off += hlen
    T, p, k, n = header["count"], header["p"], header["k"], header["n"]
    width = p * k + p + (k * n if header["has_scores"] else 0)
    body = np.frombuffer(blob, dtype="<f8", offset=off)
    if body.size != T * width:
        raise InputError(f"draw archive holds {body.size} values, header promises {T * width}")
    body = body.reshape(T, width).astype(float)
    loadings = body[:, : p * k].reshape(T, p, k).copy()
    uniq = body[:, p * k : p * k + p].copy()
    scores = body[:, p * k + p :].reshape(T, k, n).copy() if header["has_scores"] else None
    return PosteriorDraws(
        loadings=loadings,
        uniqueness=uniq,
        scores=scores,
        labels=header["labels"],
        config=header["config"],
        interrupted=header["interrupted"],
    )


def write_archive(path, draws: PosteriorDraws):
    Path(path).write_bytes(encode_archive(draws))


def read_archive(path) -> PosteriorDraws:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read archive {path}: {exc}") from exc
    return decode_archive(blob)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- tables ------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, rows: list[dict], delimiter: str = "\t"):
    """Write records as a delimited text table with a header row."""
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return
    fields = list(rows[0])
    for r in rows[1:]:
        fields.extend(k for k in r if k not in fields)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(fields)
        for r in rows:
            writer.writerow([_fmt(r.get(f, "")) for f in fields])


def read_table(path, delimiter: str = "\t") -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh, delimiter=delimiter))
