"""MIN/MAX and mean/std (z-score) normalizers.

Stats are fitted on one dataset (the training split) and record its
fingerprint so callers can check which rows they came from.  Degenerate
columns (max == min, or std == 0) map to 0.0.  Out-of-range inputs are not
clamped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError, EmptyDataset, SchemaMismatch
from .features import FeatureDataset


class NormKind(Enum):
    MINMAX = "minmax"
    ZSCORE = "zscore"


@dataclass(frozen=True, eq=False)
class NormalizerStats:
    """Per-column ``(min, max)`` for MINMAX or ``(mean, std)`` for ZSCORE.

    ``loc``/``scale`` hold the pair: ``loc`` is min or mean, ``scale`` is
    max or std.
    """

    kind: NormKind
    schema: tuple[str, ...]
    loc: np.ndarray
    scale: np.ndarray
    fingerprint: str = ""

    def __post_init__(self):
        loc = np.array(self.loc, dtype=np.float64).reshape(-1)
        scale = np.array(self.scale, dtype=np.float64).reshape(-1)
        if not (len(loc) == len(scale) == len(self.schema)):
            raise DataError("one parameter pair per column required")
        if self.kind is NormKind.MINMAX and np.any(loc > scale):
            raise DataError("min > max in MINMAX stats")
        if self.kind is NormKind.ZSCORE and np.any(scale < 0):
            raise DataError("negative std in ZSCORE stats")
        loc.flags.writeable = False
        scale.flags.writeable = False
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)

    def __eq__(self, other):
        if not isinstance(other, NormalizerStats):
            return NotImplemented
        return (
            self.kind is other.kind
            and self.schema == other.schema
            and self.fingerprint == other.fingerprint
            and np.array_equal(self.loc, other.loc)
            and np.array_equal(self.scale, other.scale)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "schema": list(self.schema),
            "loc": self.loc.tolist(),
            "scale": self.scale.tolist(),
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizerStats":
        try:
            return cls(NormKind(d["kind"]), tuple(d["schema"]), d["loc"], d["scale"], d.get("fingerprint", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad normalizer document: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "NormalizerStats":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise DataError(f"bad normalizer JSON: {exc}") from None


def fit(dataset: FeatureDataset, kind: NormKind | str) -> NormalizerStats:
    kind = NormKind(kind)
    if len(dataset) == 0:
        raise EmptyDataset("cannot fit a normalizer on an empty dataset")
    X = dataset.X
    if kind is NormKind.MINMAX:
        loc, scale = X.min(axis=0), X.max(axis=0)
    else:
        loc, scale = X.mean(axis=0), X.std(axis=0)
    return NormalizerStats(kind, dataset.schema, loc, scale, dataset.fingerprint())


def _transform(X: np.ndarray, stats: NormalizerStats) -> np.ndarray:
    if stats.kind is NormKind.MINMAX:
        span = stats.scale - stats.loc
    else:
        span = stats.scale
    degenerate = span == 0
    out = (X - stats.loc) / np.where(degenerate, 1.0, span)
    out[..., degenerate] = 0.0
    return out


def apply(data, stats: NormalizerStats):
    """Normalize a :class:`FeatureDataset` or a single feature row.

    A row is checked by length only since it carries no schema.
    """
    if isinstance(data, FeatureDataset):
        if data.schema != stats.schema:
            raise SchemaMismatch("dataset schema differs from the schema the stats were fitted on")
        return data.with_features(_transform(data.X, stats))
    row = np.asarray(data, dtype=np.float64)
    if row.shape[-1] != len(stats.schema):
        raise SchemaMismatch(f"row has {row.shape[-1]} values, stats expect {len(stats.schema)}")
    return _transform(row, stats)
