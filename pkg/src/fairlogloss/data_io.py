"""CSV ingestion, schema-driven preprocessing and random splits."""
from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import BadValue, EmptyFile, MissingColumn, SchemaError

log = logging.getLogger(__name__)

BUILTIN_SCHEMAS = ("adult", "compas", "law")


def _split_list(text):
    return [t.strip() for t in (text or "").split(",") if t.strip()]


@dataclass
class DatasetSchema:
    name: str
    label: str
    label_positive: list
    protected: str
    protected_positive: list
    label_negative: list = field(default_factory=list)
    protected_keep: list = field(default_factory=list)
    categorical: list = field(default_factory=list)
    numeric: list = field(default_factory=list)
    drop: list = field(default_factory=list)
    na_values: list = field(default_factory=list)
    expected_rows: int | None = None
    expected_features: int | None = None

    def __post_init__(self):
        both = set(self.categorical) & set(self.numeric)
        if both:
            raise SchemaError(f"columns both categorical and numeric: {sorted(both)}")
        roles = {self.label, self.protected}
        clash = roles & (set(self.categorical) | set(self.numeric))
        if clash:
            raise SchemaError(f"label/protected column listed as a feature: {sorted(clash)}")
        if not self.label_positive or not self.protected_positive:
            raise SchemaError("label_positive and protected_positive are required")

    @property
    def feature_columns(self):
        return list(self.numeric) + list(self.categorical)

    @classmethod
    def from_file(cls, path):
        """Read a schema from an INI-style ``[dataset]`` section."""
        parser = configparser.ConfigParser(interpolation=None)
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise SchemaError(f"cannot read schema {path}: {exc}") from exc
        return cls._from_parser(parser, str(path))

    @classmethod
    def builtin(cls, name):
        text = resources.files("fairlogloss").joinpath("schemas").joinpath(f"{name}.ini").read_text("utf-8")
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_string(text)
        return cls._from_parser(parser, name)

    @classmethod
    def load(cls, spec):
        """Schema from a file path or the name of a shipped schema."""
        if str(spec) in BUILTIN_SCHEMAS and not Path(spec).exists():
            return cls.builtin(str(spec))
        return cls.from_file(spec)

    @classmethod
    def _from_parser(cls, parser, origin):
        if not parser.has_section("dataset"):
            raise SchemaError(f"{origin}: missing [dataset] section")
        sec = parser["dataset"]
        try:
            label = sec["label"].strip()
            protected = sec["protected"].strip()
        except KeyError as exc:
            raise SchemaError(f"{origin}: missing key {exc}") from None

        def opt_int(key):
            v = sec.get(key, "").strip()
            return int(v) if v else None

        return cls(
            name=sec.get("name", Path(origin).stem).strip(),
            label=label,
            label_positive=_split_list(sec.get("label_positive")),
            label_negative=_split_list(sec.get("label_negative")),
            protected=protected,
            protected_positive=_split_list(sec.get("protected_positive")),
            protected_keep=_split_list(sec.get("protected_keep")),
            categorical=_split_list(sec.get("categorical")),
            numeric=_split_list(sec.get("numeric")),
            drop=_split_list(sec.get("drop")),
            na_values=_split_list(sec.get("na_values")),
            expected_rows=opt_int("expected_rows"),
            expected_features=opt_int("expected_features"),
        )


@dataclass
class Dataset:
    """Numeric design matrix (no bias column), protected attribute and label."""

    X: np.ndarray
    a: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.a = np.asarray(self.a, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or len(self.X) != len(self.a) or len(self.a) != len(self.y):
            raise ValueError("X, a and y must have matching row counts")

    def __len__(self):
        return len(self.y)

    def take(self, idx):
        return Dataset(self.X[idx], self.a[idx], self.y[idx], list(self.feature_names))


@dataclass
class RawDataset:
    """Validated rows before encoding; feature columns still hold raw values."""

    frame: pd.DataFrame
    a: np.ndarray
    y: np.ndarray
    schema: DatasetSchema
    n_dropped: int = 0

    def __len__(self):
        return len(self.y)

    def take(self, idx):
        return RawDataset(
            self.frame.iloc[idx].reset_index(drop=True),
            self.a[idx],
            self.y[idx],
            self.schema,
            self.n_dropped,
        )


def load_csv(path, schema: DatasetSchema, require_label=True) -> RawDataset:
    """Read a headered CSV, drop incomplete rows and map label/protected to {0,1}.

    With ``require_label=False`` a missing label column is allowed (scoring
    unlabeled rows); y is then filled with -1.
    """
    path = Path(path)
    try:
        df = pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding="utf-8"
        )
    except pd.errors.EmptyDataError:
        raise EmptyFile(f"{path} is empty") from None
    except OSError as exc:
        raise EmptyFile(f"cannot read {path}: {exc}") from exc
    if df.shape[0] == 0:
        raise EmptyFile(f"{path} has a header but no rows")
    df.columns = [c.strip() for c in df.columns]

    has_label = schema.label in df.columns
    if not has_label and require_label:
        raise MissingColumn(schema.label, str(path))
    required = ([schema.label] if has_label else []) + [schema.protected] + schema.feature_columns
    for col in required:
        if col not in df.columns:
            raise MissingColumn(col, str(path))

    df = df[required].apply(lambda s: s.str.strip())
    # csv line number of each row, for error messages
    line = np.arange(len(df)) + 2

    missing = df.isin(set(schema.na_values) | {""}).any(axis=1).to_numpy()
    keep = ~missing
    if schema.protected_keep:
        keep &= df[schema.protected].isin(schema.protected_keep).to_numpy()
    n_dropped = int(np.sum(~keep))
    df = df[keep].reset_index(drop=True)
    line = line[keep]
    if len(df) == 0:
        raise EmptyFile(f"{path}: no complete rows")

    if has_label:
        lab = df[schema.label]
        y = lab.isin(schema.label_positive).to_numpy()
    if has_label and schema.label_negative:
        bad = ~(y | lab.isin(schema.label_negative).to_numpy())
        if bad.any():
            i = int(np.argmax(bad))
            raise BadValue(int(line[i]), schema.label, lab.iloc[i], "not a declared label value")
    a = df[schema.protected].isin(schema.protected_positive).to_numpy()

    for col in schema.numeric:
        vals = pd.to_numeric(df[col], errors="coerce")
        bad = vals.isna().to_numpy() | ~np.isfinite(vals.to_numpy(dtype=float))
        if bad.any():
            i = int(np.argmax(bad))
            raise BadValue(int(line[i]), col, df[col].iloc[i], "not a finite number")
        df[col] = vals.astype(float)

    if schema.expected_rows is not None and len(df) != schema.expected_rows:
        log.warning(
            "%s: loaded %d rows, schema expects %d", schema.name, len(df), schema.expected_rows
        )
    if schema.expected_features is not None and len(schema.feature_columns) != schema.expected_features:
        log.warning(
            "%s: schema lists %d features, expected %d",
            schema.name, len(schema.feature_columns), schema.expected_features,
        )
    log.info("%s: %d rows loaded, %d dropped", schema.name, len(df), n_dropped)
    frame = df[schema.feature_columns].reset_index(drop=True)
    y = y.astype(np.int64) if has_label else np.full(len(df), -1, dtype=np.int64)
    return RawDataset(frame, a.astype(np.int64), y, schema, n_dropped)


@dataclass
class PreprocessStats:
    numeric: dict  # column -> (mean, std)
    categories: dict  # column -> list of category strings
    protected_feature: str = "protected"
    dropped: list = field(default_factory=list)

    @property
    def feature_names(self):
        names = list(self.numeric)
        for col, cats in self.categories.items():
            names.extend(f"{col}={c}" for c in cats)
        names.append(self.protected_feature)
        return names

    def to_dict(self):
        return {
            "numeric": {k: [m, s] for k, (m, s) in self.numeric.items()},
            "categories": self.categories,
            "protected_feature": self.protected_feature,
            "dropped": self.dropped,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            numeric={k: (float(v[0]), float(v[1])) for k, v in d["numeric"].items()},
            categories={k: list(v) for k, v in d["categories"].items()},
            protected_feature=d.get("protected_feature", "protected"),
            dropped=list(d.get("dropped", [])),
        )


def fit(raw: RawDataset) -> PreprocessStats:
    schema = raw.schema
    numeric = {}
    dropped = []
    for col in schema.numeric:
        v = raw.frame[col].to_numpy(dtype=float)
        mean, std = float(v.mean()), float(v.std())
        if not std > 0:
            log.warning("dropping constant column %s", col)
            dropped.append(col)
            continue
        numeric[col] = (mean, std)
    categories = {}
    for col in schema.categorical:
        cats = sorted(raw.frame[col].astype(str).unique().tolist())
        categories[col] = cats
    return PreprocessStats(numeric, categories, schema.protected, dropped)


def apply(stats: PreprocessStats, raw: RawDataset) -> Dataset:
    """Encode ``raw`` with training-split statistics; unseen categories become all zeros."""
    blocks = []
    for col, (mean, std) in stats.numeric.items():
        blocks.append(((raw.frame[col].to_numpy(dtype=float) - mean) / std)[:, None])
    for col, cats in stats.categories.items():
        vals = raw.frame[col].astype(str).to_numpy()
        blocks.append((vals[:, None] == np.asarray(cats, dtype=object)[None, :]).astype(float))
    blocks.append(raw.a[:, None].astype(float))
    X = np.hstack(blocks) if blocks else np.empty((len(raw), 0))
    return Dataset(X, raw.a.copy(), raw.y.copy(), stats.feature_names)


def fit_transform(raw_train: RawDataset):
    stats = fit(raw_train)
    return apply(stats, raw_train), stats


def split(dataset, fraction, seed):
    """Seeded random partition into ceil(fraction*n) and the remaining rows."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n = len(dataset)
    k = math.ceil(round(fraction * n, 9))
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.take(perm[:k]), dataset.take(perm[k:])
