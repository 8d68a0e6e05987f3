"""CSV ingestion: min-max scaling, one-hot encoding and sensitive-group parsing."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import ClusteringError, Dataset, GroupStructure, InvalidArgumentError


class DataParseError(ClusteringError):
    """Malformed input file; ``line`` is the 1-based line number when known."""

    def __init__(self, message, path=None, line=None):
        where = f"{path}:{line}: " if path is not None and line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class DatasetSchema:
    """Columns of a CSV data set.

    ``features`` enter the feature space (numeric unless listed in
    ``categorical``); ``sensitive`` columns define the groups and never enter the
    feature space; ``drop`` columns are ignored.
    """

    features: tuple
    sensitive: tuple
    categorical: tuple = ()
    drop: tuple = ()

    def __post_init__(self):
        for name in ("features", "sensitive", "categorical", "drop"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.features:
            raise InvalidArgumentError("schema needs at least one feature column")
        if not self.sensitive:
            raise InvalidArgumentError("schema needs at least one sensitive column")
        overlap = set(self.features) & set(self.sensitive)
        if overlap:
            raise InvalidArgumentError(f"sensitive columns used as features: {sorted(overlap)}")
        stray = set(self.categorical) - set(self.features)
        if stray:
            raise InvalidArgumentError(f"categorical columns not among the features: {sorted(stray)}")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        unknown = set(d) - {"features", "sensitive", "categorical", "drop"}
        if unknown:
            raise InvalidArgumentError(f"unknown schema keys: {sorted(unknown)}")
        return cls(tuple(d.get("features", ())), tuple(d.get("sensitive", ())),
                   tuple(d.get("categorical", ())), tuple(d.get("drop", ())))


@dataclass
class LoadedData:
    dataset: Dataset
    groups: GroupStructure
    rows: np.ndarray
    columns: list = field(default_factory=list)


def minmax_scale(col: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a constant column maps to 0."""
    lo, hi = col.min(), col.max()
    if hi == lo:
        return np.zeros_like(col, dtype=float)
    return (col - lo) / (hi - lo)


def load_dataset(path, schema: DatasetSchema, seed: int = 0, subsample: int | None = None) -> LoadedData:
    """Read a headed CSV file into a scaled Dataset and its GroupStructure.

    Subsampling draws ``subsample`` rows without replacement with
    ``numpy.random.default_rng(seed)``; ``rows`` holds the kept (sorted) data
    row indices, so the same seed gives the same sample for every strategy.
    Scaling and encoding are computed on the kept rows.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataParseError(str(exc), path) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataParseError("empty file", path, 1) from None
        header = [h.strip() for h in header]
        needed = list(schema.features) + list(schema.sensitive) + list(schema.drop)
        missing = [c for c in needed if c not in header]
        if missing:
            raise DataParseError(f"header lacks columns {missing}", path, 1)
        pos = {c: header.index(c) for c in needed}
        records = []
        for row in reader:
            line = reader.line_num
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != len(header):
                raise DataParseError(f"expected {len(header)} fields, got {len(row)}", path, line)
            records.append((line, [v.strip() for v in row]))
    if not records:
        raise DataParseError("no data rows", path)
    n_all = len(records)
    if subsample is not None:
        if subsample < 1 or subsample > n_all:
            raise InvalidArgumentError(f"subsample {subsample} outside 1..{n_all}")
        keep = np.sort(np.random.default_rng(seed).choice(n_all, size=subsample, replace=False))
    else:
        keep = np.arange(n_all)
    kept = [records[i] for i in keep]

    blocks, names = [], []
    for col in schema.features:
        j = pos[col]
        if col in schema.categorical:
            vals = [r[j] for _, r in kept]
            cats = sorted(set(vals))
            onehot = np.array([[v == c for c in cats] for v in vals], dtype=float)
            blocks.append(onehot)
            names.extend(f"{col}={c}" for c in cats)
        else:
            out = np.empty(len(kept))
            for i, (line, r) in enumerate(kept):
                try:
                    out[i] = float(r[j])
                except ValueError:
                    raise DataParseError(f"column {col!r}: {r[j]!r} is not a number", path, line) from None
                if not np.isfinite(out[i]):
                    raise DataParseError(f"column {col!r}: non-finite value {r[j]!r}", path, line)
            blocks.append(minmax_scale(out)[:, None])
            names.append(col)
    points = np.hstack(blocks)
    labels = {}
    for col in schema.sensitive:
        j = pos[col]
        vals = []
        for line, r in kept:
            if r[j] == "":
                raise DataParseError(f"sensitive column {col!r} is empty", path, line)
            vals.append(r[j])
        labels[col] = vals
    try:
        groups = GroupStructure.from_labels(labels)
    except InvalidArgumentError as exc:
        raise DataParseError(str(exc), path) from exc
    return LoadedData(Dataset(points), groups, keep, names)
