"""Peak detection, the 15 per-sensor features, and fused feature datasets.

Every feature is computed on the low-pass filtered magnitude series of one
sensor window.  A sensor contributes a :class:`FeatureBlock`; a dataset row
is the concatenation of the blocks of the sensors in a :class:`FusionConfig`,
restricted to the columns of a :class:`DatasetVariant`.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import astuple, dataclass, fields
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, MissingSensor, SchemaMismatch, SeriesTooShort
from .preprocessing import FilterConfig, ScalarSeries, clean_series
from .sensors import AdlLabel, Capture, Record, SensorKind, SensorWindow, validate_window


# ---------------------------------------------------------------------------
# Peaks
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PeakSet:
    indices: np.ndarray
    period_ms: float

    def __len__(self) -> int:
        return len(self.indices)

    def __eq__(self, other):
        if not isinstance(other, PeakSet):
            return NotImplemented
        return self.period_ms == other.period_ms and np.array_equal(self.indices, other.indices)

    __hash__ = None


def detect_peaks(series: ScalarSeries) -> PeakSet:
    """Strict interior local maxima.  Plateaus are not peaks."""
    x = series.values
    if len(x) < 3:
        raise SeriesTooShort(f"need at least 3 samples for peak detection, got {len(x)}")
    mid = x[1:-1]
    idx = np.flatnonzero((mid > x[:-2]) & (mid > x[2:])) + 1
    return PeakSet(idx.astype(np.int64), series.period_ms)


def top_peak_distances(peaks: PeakSet, k: int = 5) -> np.ndarray:
    """The ``k`` largest gaps between consecutive peaks, in seconds, descending.

    Zero-padded when there are fewer than ``k`` gaps.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    gaps = np.diff(peaks.indices) * (peaks.period_ms / 1000.0)
    gaps = np.sort(gaps)[::-1][:k]
    out = np.zeros(k)
    out[: len(gaps)] = gaps
    return out


# ---------------------------------------------------------------------------
# Per-sensor feature block
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureBlock:
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    peak_mean: float
    peak_std: float
    peak_var: float
    peak_median: float
    raw_std: float
    raw_mean: float
    raw_max: float
    raw_min: float
    raw_var: float
    raw_median: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in fields(FeatureBlock))
N_FEATURES = len(FEATURE_NAMES)


def series_features(values: np.ndarray, period_ms: float) -> FeatureBlock:
    """The 15 features of an already-cleaned series.

    Variances are population variances.  With no peaks the four peak
    statistics are 0.0.
    """
    values = np.asarray(values, dtype=np.float64)
    peaks = detect_peaks(ScalarSeries(values, period_ms))
    dists = top_peak_distances(peaks, 5)
    if len(peaks):
        amps = values[peaks.indices]
        p_mean, p_var = float(np.mean(amps)), float(np.var(amps))
        p_std, p_median = float(np.sqrt(p_var)), float(np.median(amps))
    else:
        p_mean = p_std = p_var = p_median = 0.0
    r_var = float(np.var(values))
    return FeatureBlock(
        *map(float, dists),
        peak_mean=p_mean,
        peak_std=p_std,
        peak_var=p_var,
        peak_median=p_median,
        raw_std=float(np.sqrt(r_var)),
        raw_mean=float(np.mean(values)),
        raw_max=float(np.max(values)),
        raw_min=float(np.min(values)),
        raw_var=r_var,
        raw_median=float(np.median(values)),
    )


def extract_features(window: SensorWindow, cfg: FilterConfig = FilterConfig()) -> FeatureBlock:
    problems = validate_window(window)
    if problems:
        raise DataError(f"invalid {window.sensor.tag} window: {'; '.join(problems)}")
    series = clean_series(window, cfg)
    return series_features(series.values, series.period_ms)


# ---------------------------------------------------------------------------
# Dataset variants and fusion configurations
# ---------------------------------------------------------------------------

class DatasetVariant(Enum):
    """Nested feature subsets, D1 (all 15) down to D5 (raw std and mean)."""

    D1 = 1
    D2 = 2
    D3 = 3
    D4 = 4
    D5 = 5

    @property
    def number(self) -> int:
        return self.value

    @property
    def feature_names(self) -> tuple[str, ...]:
        keep = _VARIANT_FEATURES[self]
        return tuple(n for n in FEATURE_NAMES if n in keep)

    @property
    def mask(self) -> np.ndarray:
        keep = _VARIANT_FEATURES[self]
        return np.array([n in keep for n in FEATURE_NAMES])

    @classmethod
    def parse(cls, text: str | int) -> "DatasetVariant":
        s = str(text).strip().upper().lstrip("D")
        try:
            return cls(int(s))
        except ValueError:
            raise ValueError(f"dataset variant must be 1..5, got {text!r}") from None


_RAW = ("raw_std", "raw_mean", "raw_max", "raw_min", "raw_var", "raw_median")
_VARIANT_FEATURES = {
    DatasetVariant.D1: frozenset(FEATURE_NAMES),
    DatasetVariant.D2: frozenset(FEATURE_NAMES[5:]),
    DatasetVariant.D3: frozenset(_RAW),
    DatasetVariant.D4: frozenset({"raw_std", "raw_mean", "raw_var", "raw_median"}),
    DatasetVariant.D5: frozenset({"raw_std", "raw_mean"}),
}


class FusionConfig(Enum):
    ACC_ONLY = "acc"
    ACC_MAG = "acc+mag"
    ACC_MAG_GYRO = "acc+mag+gyro"

    @property
    def sensors(self) -> tuple[SensorKind, ...]:
        return tuple(SensorKind.from_tag(t) for t in self.value.split("+"))

    @classmethod
    def parse(cls, text: str) -> "FusionConfig":
        try:
            return cls(text.strip().lower())
        except ValueError:
            choices = ", ".join(f.value for f in cls)
            raise ValueError(f"fusion must be one of {choices}, got {text!r}") from None


def dataset_schema(fusion: FusionConfig, variant: DatasetVariant) -> tuple[str, ...]:
    return tuple(f"{s.tag}_{n}" for s in fusion.sensors for n in variant.feature_names)


# ---------------------------------------------------------------------------
# FeatureDataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Feature matrix ``X`` (n, len(schema)) with integer label codes ``y``."""

    schema: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    record_ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64).reshape(-1, len(self.schema))
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        if len(X) != len(y):
            raise DataError(f"{len(X)} feature rows but {len(y)} labels")
        if not np.all(np.isfinite(X)):
            raise DataError("dataset contains non-finite features")
        if len(y) and (y.min() < 0 or y.max() >= len(AdlLabel)):
            raise DataError("label code out of range")
        ids = None if self.record_ids is None else np.array(self.record_ids, dtype=np.int64).reshape(-1)
        for a in (X, y, ids):
            if a is not None:
                a.flags.writeable = False
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "record_ids", ids)

    def __len__(self) -> int:
        return len(self.y)

    def __eq__(self, other):
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None

    @property
    def labels(self) -> list[AdlLabel]:
        return [AdlLabel(int(c)) for c in self.y]

    def rows(self):
        for x, c in zip(self.X, self.y):
            yield x, AdlLabel(int(c))

    def subset(self, index: Sequence[int] | np.ndarray) -> "FeatureDataset":
        index = np.asarray(index, dtype=np.int64)
        ids = None if self.record_ids is None else self.record_ids[index]
        return FeatureDataset(self.schema, self.X[index], self.y[index], ids)

    def select_columns(self, columns: Sequence[str]) -> "FeatureDataset":
        pos = {c: i for i, c in enumerate(self.schema)}
        missing = [c for c in columns if c not in pos]
        if missing:
            raise SchemaMismatch(f"columns not in dataset: {missing}")
        return FeatureDataset(tuple(columns), self.X[:, [pos[c] for c in columns]], self.y, self.record_ids)

    def with_features(self, X: np.ndarray) -> "FeatureDataset":
        return FeatureDataset(self.schema, X, self.y, self.record_ids)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.schema).encode())
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=len(AdlLabel))


def _record_blocks(rec: Record, sensors: Iterable[SensorKind], cfg: FilterConfig) -> np.ndarray:
    parts = []
    for kind in sensors:
        w = rec.window(kind)
        if w is None:
            raise MissingSensor(rec.record_id, kind.tag)
        parts.append(extract_features(w, cfg).as_array())
    return np.concatenate(parts)


def _records(captures: Capture | Iterable[Capture]) -> list[Record]:
    if isinstance(captures, Capture):
        return list(captures.records)
    out: list[Record] = []
    for c in captures:
        out.extend(c.records if isinstance(c, Capture) else [c])
    return out


def build_dataset(
    captures: Capture | Iterable[Capture],
    fusion: FusionConfig,
    variant: DatasetVariant = DatasetVariant.D1,
    cfg: FilterConfig = FilterConfig(),
) -> FeatureDataset:
    """One row per record; columns follow the fusion's sensor order."""
    records = _records(captures)
    full = np.empty((len(records), N_FEATURES * len(fusion.sensors)))
    for i, rec in enumerate(records):
        full[i] = _record_blocks(rec, fusion.sensors, cfg)
    schema = dataset_schema(fusion, DatasetVariant.D1)
    ds = FeatureDataset(
        schema,
        full,
        [r.label.code for r in records],
        [r.record_id for r in records],
    )
    if variant is DatasetVariant.D1:
        return ds
    return project(ds, fusion, variant)


def project(dataset: FeatureDataset, fusion: FusionConfig, variant: DatasetVariant) -> FeatureDataset:
    """Restrict a wider dataset (typically D1) to the columns of ``variant``."""
    return dataset.select_columns(dataset_schema(fusion, variant))


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(v, ".17g")


def dataset_to_csv(dataset: FeatureDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(dataset.schema) + ["label"])
    for x, c in zip(dataset.X.tolist(), dataset.y.tolist()):
        w.writerow([_fmt(v) for v in x] + [AdlLabel(c).slug])
    return buf.getvalue()


def dataset_from_csv(text: str) -> FeatureDataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty dataset CSV") from None
    if not header or header[-1] != "label":
        raise DataError("dataset CSV must end with a 'label' column")
    schema = tuple(header[:-1])
    X, y = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            X.append([float(v) for v in row[:-1]])
            y.append(AdlLabel.from_slug(row[-1]).code)
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    return FeatureDataset(schema, np.array(X, dtype=np.float64).reshape(-1, len(schema)), y)
