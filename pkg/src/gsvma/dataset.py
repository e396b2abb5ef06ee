"""Tabular ingestion, nominal encoding, min-max scaling and fold planning."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Iterable, Sequence

import numpy as np
import yaml

NUMERIC = "numeric"
BINARY = "binary"
NOMINAL = "nominal"
KINDS = (NUMERIC, BINARY, NOMINAL)

GLOBAL = "global"
PER_FOLD = "per-fold"


class DatasetError(ValueError):
    """Base class for ingestion and preprocessing failures."""


class SchemaError(DatasetError):
    pass


class MissingColumn(DatasetError):
    pass


class UnknownColumn(DatasetError):
    pass


class MissingValue(DatasetError):
    def __init__(self, row: int, column: str):
        self.row, self.column = row, column
        super().__init__(f"line {row}: missing value in column {column!r}")


class IllegalNominalValue(DatasetError):
    def __init__(self, row: int, column: str, value: str):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"line {row}: value {value!r} not allowed in column {column!r}")


class NonNumericCell(DatasetError):
    def __init__(self, row: int, column: str, value: str):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"line {row}: non-numeric value {value!r} in column {column!r}")


class EmptyFitSet(DatasetError):
    pass


class TooFewSamples(DatasetError):
    pass


class InvalidConfig(DatasetError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == BINARY and len(self.values) != 2:
            raise SchemaError(f"binary feature {self.name!r} needs exactly two values")
        if self.kind == NOMINAL and len(self.values) < 2:
            raise SchemaError(f"nominal feature {self.name!r} needs at least two values")
        if self.kind == NUMERIC and self.values:
            raise SchemaError(f"numeric feature {self.name!r} cannot list values")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"feature {self.name!r} lists a value twice")


@dataclass(frozen=True)
class RawSchema:
    """Feature layout of a raw CSV file.

    Binary features list their values as ``(encoded-as-0, encoded-as-1)``;
    nominal features list the one-hot column order.
    """

    features: tuple[FeatureSpec, ...]
    target: str
    positive: str
    negative: str

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names in schema")
        if self.target in names:
            raise SchemaError(f"target {self.target!r} is also listed as a feature")
        if not self.features:
            raise SchemaError("schema has no features")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @classmethod
    def from_dict(cls, d: dict) -> "RawSchema":
        try:
            target = d["target"]
            feats = tuple(
                FeatureSpec(str(f["name"]), str(f.get("kind", NUMERIC)),
                            tuple(str(v) for v in f.get("values", ())))
                for f in d["features"]
            )
            return cls(feats, str(target["name"]), str(target["positive"]), str(target["negative"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            entry = {"name": f.name, "kind": f.kind}
            if f.values:
                entry["values"] = list(f.values)
            feats.append(entry)
        return {
            "target": {"name": self.target, "positive": self.positive, "negative": self.negative},
            "features": feats,
        }


def load_schema(path: str | os.PathLike) -> RawSchema:
    with open(path, encoding="utf-8") as fh:
        return RawSchema.from_dict(yaml.safe_load(fh))


def z_alizadeh_sani_schema() -> RawSchema:
    """The shipped schema for the 303-patient Z-Alizadeh Sani CAD table."""
    text = resources.files("gsvma.data").joinpath("z_alizadeh_sani.yaml").read_text("utf-8")
    return RawSchema.from_dict(yaml.safe_load(text))


@dataclass(frozen=True)
class RawDataset:
    records: list[dict]
    schema: RawSchema
    targets: list[str]

    def __len__(self):
        return len(self.records)

    @property
    def n_positive(self) -> int:
        return sum(t == self.schema.positive for t in self.targets)


@dataclass(frozen=True)
class ColumnMeta:
    source: str
    value: str | None = None

    @property
    def name(self) -> str:
        return self.source if self.value is None else f"{self.source}={self.value}"


@dataclass(frozen=True)
class Scaler:
    lo: np.ndarray
    hi: np.ndarray

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = (matrix - self.lo) / safe
        # constant columns (on the fit rows) map to 0 everywhere
        out[:, span <= 0] = 0.0
        return out


@dataclass(frozen=True)
class EncodedDataset:
    matrix: np.ndarray
    columns: tuple[ColumnMeta, ...]
    labels: np.ndarray
    scaler: Scaler | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] < 1:
            raise InvalidConfig("encoded matrix must be 2-D with at least one column")
        if self.matrix.shape[1] != len(self.columns):
            raise InvalidConfig("column metadata does not match matrix width")
        if self.labels.shape != (self.matrix.shape[0],):
            raise InvalidConfig("label vector length must equal the number of rows")

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[0]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(self.column_names + ["label"])
        for row, label in zip(self.matrix, self.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def parse_csv(source, schema: RawSchema) -> RawDataset:
    """Read and validate a comma-separated table with a header row.

    ``source`` may be a path, raw bytes, or a text/binary stream. Line numbers
    in error messages count the header as line 1.
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn("empty input: no header row") from None

    expected = schema.names + [schema.target]
    unknown = [h for h in header if h not in expected]
    if unknown:
        raise UnknownColumn(f"unknown column(s): {', '.join(unknown)}")
    missing = [h for h in expected if h not in header]
    if missing:
        raise MissingColumn(f"missing column(s): {', '.join(missing)}")
    if len(set(header)) != len(header):
        raise UnknownColumn("duplicate column in header")
    pos = {h: i for i, h in enumerate(header)}

    records, targets = [], []
    for line_no, cells in enumerate(reader, start=2):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(header):
            raise DatasetError(f"line {line_no}: expected {len(header)} cells, got {len(cells)}")
        record = {}
        for spec in schema.features:
            cell = cells[pos[spec.name]].strip()
            if cell == "":
                raise MissingValue(line_no, spec.name)
            if spec.kind == NUMERIC:
                try:
                    value = float(cell)
                except ValueError:
                    raise NonNumericCell(line_no, spec.name, cell) from None
                if not np.isfinite(value):
                    raise NonNumericCell(line_no, spec.name, cell)
                record[spec.name] = value
            else:
                if cell not in spec.values:
                    raise IllegalNominalValue(line_no, spec.name, cell)
                record[spec.name] = cell
        target = cells[pos[schema.target]].strip()
        if target == "":
            raise MissingValue(line_no, schema.target)
        if target not in (schema.positive, schema.negative):
            raise IllegalNominalValue(line_no, schema.target, target)
        records.append(record)
        targets.append(target)
    return RawDataset(records, schema, targets)


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    return data


def encoded_columns(schema: RawSchema) -> tuple[ColumnMeta, ...]:
    cols = []
    for spec in schema.features:
        if spec.kind == NOMINAL:
            cols.extend(ColumnMeta(spec.name, v) for v in spec.values)
        else:
            cols.append(ColumnMeta(spec.name))
    return tuple(cols)


def decode_columns(columns: Sequence[ColumnMeta]) -> list[tuple[str, tuple[str, ...]]]:
    """Recover ``(feature, one-hot values)`` pairs in first-seen order."""
    out: dict[str, list[str]] = {}
    for c in columns:
        vals = out.setdefault(c.source, [])
        if c.value is not None:
            vals.append(c.value)
    return [(name, tuple(vals)) for name, vals in out.items()]


def encode(raw: RawDataset) -> EncodedDataset:
    schema = raw.schema
    columns = encoded_columns(schema)
    matrix = np.zeros((len(raw.records), len(columns)))
    for r, record in enumerate(raw.records):
        c = 0
        for spec in schema.features:
            cell = record[spec.name]
            if spec.kind == NUMERIC:
                matrix[r, c] = cell
                c += 1
            elif spec.kind == BINARY:
                matrix[r, c] = spec.values.index(cell)
                c += 1
            else:
                matrix[r, c + spec.values.index(cell)] = 1.0
                c += len(spec.values)
    labels = np.array([1 if t == schema.positive else -1 for t in raw.targets], dtype=np.int64)
    return EncodedDataset(matrix, columns, labels)


def fit_scaler(matrix: np.ndarray, fit_rows: Iterable[int] | None = None) -> Scaler:
    rows = matrix if fit_rows is None else matrix[np.asarray(list(fit_rows), dtype=np.intp)]
    if rows.shape[0] == 0:
        raise EmptyFitSet("cannot fit a scaler on zero rows")
    return Scaler(rows.min(axis=0), rows.max(axis=0))


def normalize(data: EncodedDataset, policy: str = GLOBAL, fit_rows=None) -> EncodedDataset:
    """Min-max scale every column to [0, 1].

    ``global`` fits min/max on all rows; ``per-fold`` fits on ``fit_rows``
    only and applies the result to every row (held-out rows may then fall
    outside [0, 1]).
    """
    if policy == GLOBAL:
        scaler = fit_scaler(data.matrix)
    elif policy == PER_FOLD:
        if fit_rows is None:
            raise EmptyFitSet("per-fold normalization needs fit_rows")
        scaler = fit_scaler(data.matrix, fit_rows)
    else:
        raise InvalidConfig(f"unknown normalization policy {policy!r}")
    return EncodedDataset(scaler.apply(data.matrix), data.columns, data.labels, scaler)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def stratified_kfold(labels, k: int, seed: int) -> FoldPlan:
    """Shuffle each class and deal it round-robin across ``k`` folds.

    Each class continues dealing where the previous class stopped, so fold
    sizes differ by at most one as well as per-class counts.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if k < 2:
        raise InvalidConfig(f"fold count must be >= 2, got {k}")
    if n < k:
        raise TooFewSamples(f"{n} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        assignments[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return FoldPlan(k, assignments, seed)


def synth_generate(n: int, n_features: int, n_informative: int, noise: float, seed: int,
                   margin: float = 0.05) -> tuple[EncodedDataset, np.ndarray]:
    """Planted-feature binary dataset on [0, 1]^n_features.

    Labels are ``sign(w . (x_inf - 0.5) + noise * N(0, 1))`` for a random
    unit-norm ``w``. Points whose clean score lies within ``margin`` of the
    boundary are redrawn, so the noise-free data is separable with a gap.
    Returns the dataset and the sorted informative column indices.
    """
    if not 1 <= n_informative <= n_features:
        raise InvalidConfig("need 1 <= n_informative <= n_features")
    if n < 2 or noise < 0 or margin < 0:
        raise InvalidConfig("need n >= 2, noise >= 0, margin >= 0")
    rng = np.random.default_rng(seed)
    informative = np.sort(rng.choice(n_features, n_informative, replace=False))
    w = rng.normal(size=n_informative)
    w /= np.linalg.norm(w)
    X = rng.random((n, n_features))
    score = (X[:, informative] - 0.5) @ w
    for _ in range(1000):
        bad = np.abs(score) < margin
        if not bad.any():
            break
        X[bad] = rng.random((int(bad.sum()), n_features))
        score[bad] = (X[bad][:, informative] - 0.5) @ w
    else:
        raise InvalidConfig("margin too wide for the sampled weights")
    noisy = score + noise * rng.normal(size=n)
    labels = np.where(noisy >= 0, 1, -1).astype(np.int64)
    columns = tuple(ColumnMeta(f"x{j}") for j in range(n_features))
    return EncodedDataset(X, columns, labels), informative
