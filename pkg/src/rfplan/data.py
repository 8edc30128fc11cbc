"""Dataset ingestion: CSV and libsvm files validated against a JSON schema.

The schema declares the feature columns in vector order, their kind and
mutability, and the label column; optionally a fixed ordered class list.
All diagnostics carry file and line numbers.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from typing import Sequence

from .forest import CATEGORICAL, NUMERICAL, FeatureMeta, Label, ModelError, Vector


class DataError(ValueError):
    """Malformed schema or data file."""


@dataclass(frozen=True)
class Schema:
    features: tuple[FeatureMeta, ...]
    label: str | int
    classes: tuple[Label, ...] | None = None


@dataclass(frozen=True)
class Dataset:
    features: tuple[FeatureMeta, ...]
    rows: tuple[Vector, ...]
    labels: tuple[Label, ...]
    classes: tuple[Label, ...]

    def __len__(self) -> int:
        return len(self.rows)


def _coerce_label(token: str):
    """Labels: int when possible, then float, else the raw string."""
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def schema_from_dict(doc: dict, source: str = "<schema>") -> Schema:
    if not isinstance(doc, dict):
        raise DataError(f"{source}: schema must be a JSON object")
    for key in ("label", "features"):
        if key not in doc:
            raise DataError(f"{source}: schema missing {key!r}")
    raw = doc["features"]
    if not isinstance(raw, list) or not raw:
        raise DataError(f"{source}: schema features must be a non-empty array")
    features = []
    for i, rec in enumerate(raw):
        if not isinstance(rec, dict):
            raise DataError(f"{source}: features[{i}] must be an object")
        try:
            features.append(
                FeatureMeta(
                    name=rec.get("name", ""),
                    kind=rec.get("kind", NUMERICAL),
                    mutability=rec.get("mutability", "soft"),
                    categories=tuple(rec.get("categories", ())),
                )
            )
        except ModelError as exc:
            raise DataError(f"{source}: features[{i}]: {exc}") from None
    label = doc["label"]
    if not isinstance(label, (str, int)) or isinstance(label, bool):
        raise DataError(f"{source}: label must be a column name or index")
    classes = doc.get("classes")
    if classes is not None:
        if not isinstance(classes, list) or not classes:
            raise DataError(f"{source}: classes must be a non-empty array")
        if len(set(map(str, classes))) != len(classes):
            raise DataError(f"{source}: duplicate classes")
        classes = tuple(classes)
    return Schema(features=tuple(features), label=label, classes=classes)


def load_schema(path) -> Schema:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: not valid JSON ({exc.msg})") from None
    return schema_from_dict(doc, source=str(path))


def _finish(schema: Schema, rows: list, labels: list, source: str) -> Dataset:
    if not rows:
        raise DataError(f"{source}: no data rows")
    if schema.classes is not None:
        classes = schema.classes
        bad = [l for l in labels if l not in classes]
        if bad:
            raise DataError(f"{source}: labels outside declared classes: {sorted(set(map(str, bad)))}")
    else:
        seen = set(labels)
        try:
            classes = tuple(sorted(seen))
        except TypeError:
            classes = tuple(sorted(seen, key=str))
    return Dataset(
        features=schema.features, rows=tuple(rows), labels=tuple(labels), classes=classes
    )


def _ingest_csv(path, schema: Schema) -> Dataset:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}:1: empty file") from None
        header = [h.strip() for h in header]
        col_of: dict[str, int] = {}
        for i, name in enumerate(header):
            if name in col_of:
                raise DataError(f"{path}:1: duplicate column {name!r}")
            col_of[name] = i
        feat_cols = []
        for meta in schema.features:
            if meta.name not in col_of:
                raise DataError(f"{path}:1: missing feature column {meta.name!r}")
            feat_cols.append(col_of[meta.name])
        if isinstance(schema.label, int):
            if not 0 <= schema.label < len(header):
                raise DataError(f"{path}:1: label column index {schema.label} out of range")
            label_col = schema.label
        else:
            if schema.label not in col_of:
                raise DataError(f"{path}:1: missing label column {schema.label!r}")
            label_col = col_of[schema.label]

        rows: list[Vector] = []
        labels: list[Label] = []
        for rec in reader:
            lineno = reader.line_num
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) != len(header):
                raise DataError(
                    f"{path}:{lineno}: row has {len(rec)} fields, header has {len(header)}"
                )
            values = []
            for meta, col in zip(schema.features, feat_cols):
                token = rec[col].strip()
                if meta.is_numerical:
                    try:
                        values.append(float(token))
                    except ValueError:
                        raise DataError(
                            f"{path}:{lineno}: column {meta.name!r}: {token!r} is not a number"
                        ) from None
                else:
                    if token not in meta.categories:
                        raise DataError(
                            f"{path}:{lineno}: column {meta.name!r}: unknown category {token!r}"
                        )
                    values.append(token)
            rows.append(tuple(values))
            labels.append(_coerce_label(rec[label_col].strip()))
    return _finish(schema, rows, labels, str(path))


def _ingest_libsvm(path, schema: Schema) -> Dataset:
    for meta in schema.features:
        if meta.is_categorical:
            raise DataError(
                f"{path}: libsvm files carry numbers only; categorical feature "
                f"{meta.name!r} is not representable"
            )
    m = len(schema.features)
    rows: list[Vector] = []
    labels: list[Label] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            labels.append(_coerce_label(parts[0]))
            values = [0.0] * m
            for part in parts[1:]:
                if ":" not in part:
                    raise DataError(f"{path}:{lineno}: expected index:value, got {part!r}")
                idx_s, val_s = part.split(":", 1)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad index:value pair {part!r}") from None
                if not 1 <= idx <= m:
                    raise DataError(
                        f"{path}:{lineno}: feature index {idx} outside 1..{m}"
                    )
                values[idx - 1] = val
            rows.append(tuple(values))
    return _finish(schema, rows, labels, str(path))


def ingest(path, fmt: str, schema: Schema) -> Dataset:
    """Load and validate a dataset file; ``fmt`` is 'csv' or 'libsvm'."""
    if fmt == "csv":
        return _ingest_csv(path, schema)
    if fmt == "libsvm":
        return _ingest_libsvm(path, schema)
    raise DataError(f"unknown format {fmt!r}; expected 'csv' or 'libsvm'")


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split; the same seed always gives the same split."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    idx = list(range(len(ds)))
    random.Random(seed).shuffle(idx)
    n_test = max(1, round(len(ds) * test_fraction))
    if n_test >= len(ds):
        raise DataError("split leaves no training rows")
    test_idx = set(idx[:n_test])
    tr_rows, tr_labels, te_rows, te_labels = [], [], [], []
    for i in range(len(ds)):
        if i in test_idx:
            te_rows.append(ds.rows[i])
            te_labels.append(ds.labels[i])
        else:
            tr_rows.append(ds.rows[i])
            tr_labels.append(ds.labels[i])
    train = Dataset(
        features=ds.features, rows=tuple(tr_rows), labels=tuple(tr_labels), classes=ds.classes
    )
    test = Dataset(
        features=ds.features, rows=tuple(te_rows), labels=tuple(te_labels), classes=ds.classes
    )
    return train, test
