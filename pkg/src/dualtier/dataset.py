"""Tabular traffic data: CSV loading, label encoding, min-max scaling,
stratified folds and known/unknown scenario enumeration."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

CACHE_MAGIC = b"DTID"
CACHE_VERSION = 1
# magic, version, n_rows, n_cols
_CACHE_HEADER = struct.Struct("<4sIQQ")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class RawTable:
    column_names: list[str]
    rows: list[list]
    label_column: str
    kinds: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.label_column not in self.column_names:
            raise DataError(f"label column {self.label_column!r} not in header")
        width = len(self.column_names)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise DataError(f"row {i} has {len(row)} cells, expected {width}")

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.column_names if c != self.label_column]

    def column(self, name: str) -> list:
        j = self.column_names.index(name)
        return [row[j] for row in self.rows]


@dataclass(frozen=True)
class EncodingMap:
    """Per categorical column, category text -> integer code."""

    codes: dict[str, dict[str, int]]

    def decode(self, column: str, code: int) -> str:
        for value, c in self.codes[column].items():
            if c == code:
                return value
        raise KeyError(f"{column}: no category with code {code}")

    def to_dict(self) -> dict:
        return {col: dict(m) for col, m in self.codes.items()}


@dataclass(frozen=True)
class NormalizationParams:
    x_min: np.ndarray
    x_max: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        """Columns whose training range is a single value."""
        return self.x_max == self.x_min

    def to_dict(self) -> dict:
        return {"x_min": self.x_min.tolist(), "x_max": self.x_max.tolist()}


@dataclass
class FeatureMatrix:
    """Dense float64 matrix, one row per traffic record.

    ``labels`` holds class names; ``row_ids`` tracks the original row of
    every record through subsetting so leakage can be audited.
    """

    values: np.ndarray
    columns: list[str]
    labels: np.ndarray | None = None
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("values must be 2-D")
        if len(self.columns) != self.values.shape[1]:
            raise DataError("column names do not match matrix width")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=object)
            if len(self.labels) != self.n_rows:
                raise DataError("labels do not match row count")
        if self.row_ids is None:
            self.row_ids = np.arange(self.n_rows, dtype=np.int64)
        else:
            self.row_ids = np.asarray(self.row_ids, dtype=np.int64)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def class_names(self) -> list[str]:
        """Distinct labels in first-appearance order."""
        if self.labels is None:
            return []
        return list(dict.fromkeys(self.labels.tolist()))

    def subset(self, index) -> "FeatureMatrix":
        index = np.asarray(index)
        return FeatureMatrix(
            self.values[index],
            list(self.columns),
            None if self.labels is None else self.labels[index],
            self.row_ids[index],
        )

    def where(self, mask) -> "FeatureMatrix":
        return self.subset(np.flatnonzero(mask))

    def concat(self, other: "FeatureMatrix") -> "FeatureMatrix":
        if other.n_cols != self.n_cols:
            raise DataError("cannot concatenate matrices of different width")
        labels = None
        if self.labels is not None and other.labels is not None:
            labels = np.concatenate([self.labels, other.labels])
        return FeatureMatrix(
            np.vstack([self.values, other.values]),
            list(self.columns),
            labels,
            np.concatenate([self.row_ids, other.row_ids]),
        )

    def class_histogram(self) -> dict[str, int]:
        if self.labels is None:
            return {}
        names, counts = np.unique(self.labels.astype(str), return_counts=True)
        return {str(n): int(c) for n, c in zip(names, counts)}


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple[np.ndarray, ...]
    seed: int
    warnings: tuple[str, ...] = ()

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(train indices, test indices) for fold ``i``."""
        test = self.folds[i]
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train, test


@dataclass(frozen=True)
class ScenarioSpec:
    known_classes: frozenset
    unknown_classes: frozenset
    scenario_id: str = ""

    def __post_init__(self):
        known = frozenset(self.known_classes)
        unknown = frozenset(self.unknown_classes)
        object.__setattr__(self, "known_classes", known)
        object.__setattr__(self, "unknown_classes", unknown)
        if known & unknown:
            raise ValueError(f"classes both known and unknown: {sorted(known & unknown)}")
        if not known:
            raise ValueError("scenario needs at least one known attack class")
        if not self.scenario_id:
            object.__setattr__(self, "scenario_id", scenario_name(unknown))

    @property
    def attack_classes(self) -> frozenset:
        return self.known_classes | self.unknown_classes


def scenario_name(unknown: Iterable[str]) -> str:
    unknown = sorted(unknown)
    return "U=" + "+".join(unknown) if unknown else "U=none"


def _parses_as_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: str, drop: Sequence[str] = ()) -> RawTable:
    """Read a comma-separated file with a header row.

    A column is numeric iff every non-empty cell parses as a float; empty
    numeric cells become NaN and are cleaned up by :func:`apply_encoding`.
    The label column is always kept as text.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: {len(row)} cells under a {len(header)}-column header"
                )
            rows.append([c.strip() for c in row])
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} absent")
    missing = [d for d in drop if d not in header]
    if missing:
        raise DataError(f"{path}: cannot drop absent columns {missing}")

    keep = [j for j, name in enumerate(header) if name not in set(drop)]
    names = [header[j] for j in keep]
    kinds = {}
    for j in keep:
        name = header[j]
        if name == label_column:
            kinds[name] = CATEGORICAL
            continue
        cells = [r[j] for r in rows if r[j] != ""]
        kinds[name] = NUMERIC if all(_parses_as_float(c) for c in cells) else CATEGORICAL

    parsed = []
    for r in rows:
        out = []
        for j in keep:
            cell = r[j]
            if kinds[header[j]] == NUMERIC:
                out.append(float(cell) if cell != "" else math.nan)
            else:
                out.append(cell)
        parsed.append(out)
    return RawTable(names, parsed, label_column, kinds)


def fit_label_encoding(table: RawTable) -> EncodingMap:
    """Codes assigned per categorical feature column in first-appearance order."""
    if not table.rows:
        raise DataError("cannot fit an encoding on an empty table")
    codes = {}
    for name in table.feature_columns:
        if table.kinds.get(name) != CATEGORICAL:
            continue
        mapping: dict[str, int] = {}
        for cell in table.column(name):
            if isinstance(cell, str) and cell not in mapping:
                mapping[cell] = len(mapping)
        codes[name] = mapping
    return EncodingMap(codes)


def _clean_numeric(col: np.ndarray) -> np.ndarray:
    # +/-inf -> finite extreme of the column, NaN -> 0
    finite = np.isfinite(col)
    if finite.all():
        return col
    col = col.copy()
    hi = col[finite].max() if finite.any() else 0.0
    lo = col[finite].min() if finite.any() else 0.0
    col[np.isposinf(col)] = hi
    col[np.isneginf(col)] = lo
    col[np.isnan(col)] = 0.0
    return col


def apply_encoding(table: RawTable, mapping: EncodingMap, strict: bool = False) -> FeatureMatrix:
    """Encode every categorical feature; unseen categories get code
    ``cardinality`` unless ``strict``. Already-numeric cells pass through."""
    columns = table.feature_columns
    out = np.empty((len(table.rows), len(columns)), dtype=np.float64)
    for jj, name in enumerate(columns):
        cells = table.column(name)
        if table.kinds.get(name) == CATEGORICAL:
            if name not in mapping.codes:
                raise DataError(f"encoding map does not cover column {name!r}")
            m = mapping.codes[name]
            col = []
            for cell in cells:
                if not isinstance(cell, str):
                    col.append(float(cell))
                elif cell in m:
                    col.append(float(m[cell]))
                elif strict:
                    raise DataError(f"unseen category {cell!r} in column {name!r}")
                else:
                    col.append(float(len(m)))
            out[:, jj] = col
        else:
            out[:, jj] = _clean_numeric(np.asarray(cells, dtype=np.float64))
    labels = np.asarray(table.column(table.label_column), dtype=object)
    return FeatureMatrix(out, columns, labels)


def fit_minmax(matrix: FeatureMatrix) -> NormalizationParams:
    if matrix.n_rows == 0:
        raise DataError("cannot fit normalization on an empty matrix")
    return NormalizationParams(matrix.values.min(axis=0), matrix.values.max(axis=0))


def apply_minmax(matrix: FeatureMatrix, params: NormalizationParams) -> FeatureMatrix:
    """Scale to [0, 1]; constant columns map to 0, out-of-range values are clipped."""
    if matrix.n_cols != len(params.x_min):
        raise DataError(
            f"matrix has {matrix.n_cols} columns, normalization has {len(params.x_min)}"
        )
    span = params.x_max - params.x_min
    safe = np.where(span > 0, span, 1.0)
    scaled = (matrix.values - params.x_min) / safe
    scaled[:, span <= 0] = 0.0
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return FeatureMatrix(scaled, list(matrix.columns), matrix.labels, matrix.row_ids)


def stratified_kfold(labels: Sequence, k: int, seed: int) -> FoldPlan:
    """Shuffle each class and deal its members round-robin over the folds.

    The dealing position carries over from one class to the next, which keeps
    fold sizes within one of each other as well as per-class counts.
    """
    labels = np.asarray(labels, dtype=object)
    n = len(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of rows ({n})")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    notes = []
    offset = 0
    for cls in sorted(set(labels.tolist()), key=str):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            msg = f"class {cls!r} has {len(members)} rows, fewer than k={k}"
            log.warning(msg)
            notes.append(msg)
        members = rng.permutation(members)
        for i, idx in enumerate(members):
            buckets[(offset + i) % k].append(int(idx))
        offset = (offset + len(members)) % k
    folds = tuple(np.sort(np.asarray(b, dtype=np.int64)) for b in buckets)
    return FoldPlan(k, folds, seed, tuple(notes))


def enumerate_scenarios(attack_classes: Iterable[str], unknown_count: int) -> list[ScenarioSpec]:
    """All partitions with ``unknown_count`` unknown classes, lexicographic."""
    classes = sorted(set(attack_classes))
    if not 1 <= unknown_count < len(classes):
        raise ValueError(
            f"unknown_count must be in [1, {len(classes) - 1}], got {unknown_count}"
        )
    out = []
    for combo in itertools.combinations(classes, unknown_count):
        unknown = frozenset(combo)
        out.append(ScenarioSpec(frozenset(classes) - unknown, unknown))
    return out


# -- binary cache ---------------------------------------------------------


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_cache(path, matrix: FeatureMatrix, meta: dict | None = None) -> None:
    """Write the matrix as row-major float64 behind a ``DTID`` header.

    Per-row label codes (int32, -1 when unlabeled) follow the values; class
    names and any extra metadata go to a JSON sidecar next to the file.
    """
    path = Path(path)
    classes = sorted(matrix.class_names, key=str)
    index = {c: i for i, c in enumerate(classes)}
    if matrix.labels is None:
        codes = np.full(matrix.n_rows, -1, dtype="<i4")
    else:
        codes = np.asarray([index[c] for c in matrix.labels], dtype="<i4")
    header = _CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, matrix.n_rows, matrix.n_cols)
    payload = header + matrix.values.astype("<f8").tobytes(order="C") + codes.tobytes()
    sidecar = dict(meta or {})
    sidecar.update({"columns": list(matrix.columns), "class_names": classes})
    atomic_write(path, payload)
    atomic_write(sidecar_path(path), (json.dumps(sidecar, indent=2, sort_keys=True) + "\n").encode())


def read_cache(path) -> tuple[FeatureMatrix, dict]:
    path = Path(path)
    try:
        blob = path.read_bytes()
        meta = json.loads(sidecar_path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read cache {path}: {exc}") from exc
    if len(blob) < _CACHE_HEADER.size:
        raise DataError(f"{path}: truncated cache")
    magic, version, n_rows, n_cols = _CACHE_HEADER.unpack_from(blob)
    if magic != CACHE_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != CACHE_VERSION:
        raise DataError(f"{path}: unsupported cache version {version}")
    expected = _CACHE_HEADER.size + n_rows * n_cols * 8 + n_rows * 4
    if len(blob) != expected:
        raise DataError(f"{path}: size {len(blob)} does not match header ({expected})")
    off = _CACHE_HEADER.size
    values = np.frombuffer(blob, dtype="<f8", count=n_rows * n_cols, offset=off)
    codes = np.frombuffer(blob, dtype="<i4", count=n_rows, offset=off + n_rows * n_cols * 8)
    classes = meta["class_names"]
    labels = None
    if n_rows and (codes >= 0).all():
        labels = np.asarray([classes[c] for c in codes], dtype=object)
    matrix = FeatureMatrix(values.reshape(n_rows, n_cols).astype(np.float64), meta["columns"], labels)
    return matrix, meta


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)
