"""Raw-data domain types and the line-based capture file format.

A capture file holds one or more records.  Each record carries a label and
one window per sensor::

    #record 1 walking
    #sensor acc
    0,0.1,0.2,9.8
    10,0.1,0.2,9.8
    #sensor mag
    ...

Rows are ``t_ms,x,y,z`` with ``t_ms`` relative to the window start.  Blank
lines and ``//`` comments are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import (
    EmptyWindow,
    MalformedLine,
    NonMonotonicTimestamp,
    UnknownLabel,
    UnknownSensor,
)

MIN_SAMPLES = 16
NOMINAL_PERIOD_MS = 10.0


class SensorKind(Enum):
    ACCELEROMETER = "acc"
    MAGNETOMETER = "mag"
    GYROSCOPE = "gyro"

    @property
    def tag(self) -> str:
        return self.value

    @classmethod
    def from_tag(cls, tag: str) -> "SensorKind":
        for kind in cls:
            if kind.value == tag:
                return kind
        raise ValueError(f"unknown sensor tag {tag!r}")


class AdlLabel(Enum):
    """The five activities.  ``code`` fixes confusion-matrix axis order."""

    RUNNING = 0
    WALKING = 1
    GOING_UPSTAIRS = 2
    GOING_DOWNSTAIRS = 3
    STANDING = 4

    @property
    def code(self) -> int:
        return self.value

    @property
    def slug(self) -> str:
        return _LABEL_SLUGS[self]

    @classmethod
    def from_code(cls, code: int) -> "AdlLabel":
        return cls(int(code))

    @classmethod
    def from_slug(cls, slug: str) -> "AdlLabel":
        try:
            return _SLUG_LABELS[slug.lower()]
        except KeyError:
            raise ValueError(f"unknown ADL label {slug!r}") from None


_LABEL_SLUGS = {
    AdlLabel.RUNNING: "running",
    AdlLabel.WALKING: "walking",
    AdlLabel.GOING_UPSTAIRS: "upstairs",
    AdlLabel.GOING_DOWNSTAIRS: "downstairs",
    AdlLabel.STANDING: "standing",
}
_SLUG_LABELS = {v: k for k, v in _LABEL_SLUGS.items()}

N_CLASSES = len(AdlLabel)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SensorWindow:
    """One labeled capture from one sensor.

    ``t_ms`` has shape (n,), ``xyz`` has shape (n, 3).  Units are m/s²,
    µT or rad/s depending on ``sensor``.  The constructor does not enforce
    the window invariants; see :func:`validate_window`.
    """

    sensor: SensorKind
    label: AdlLabel
    t_ms: np.ndarray
    xyz: np.ndarray
    nominal_period_ms: float = NOMINAL_PERIOD_MS

    def __post_init__(self):
        t = _frozen(self.t_ms).reshape(-1)
        xyz = _frozen(self.xyz).reshape(-1, 3)
        if len(t) != len(xyz):
            raise ValueError(f"{len(t)} timestamps but {len(xyz)} samples")
        object.__setattr__(self, "t_ms", t)
        object.__setattr__(self, "xyz", xyz)

    def __len__(self) -> int:
        return len(self.t_ms)

    def __eq__(self, other):
        if not isinstance(other, SensorWindow):
            return NotImplemented
        return (
            self.sensor is other.sensor
            and self.label is other.label
            and self.nominal_period_ms == other.nominal_period_ms
            and np.array_equal(self.t_ms, other.t_ms)
            and np.array_equal(self.xyz, other.xyz)
        )

    __hash__ = None


@dataclass(frozen=True)
class Record:
    """Co-temporal windows of 1-3 sensors sharing one label."""

    record_id: int
    label: AdlLabel
    windows: tuple[SensorWindow, ...]

    def __post_init__(self):
        kinds = [w.sensor for w in self.windows]
        if len(set(kinds)) != len(kinds):
            raise ValueError(f"record {self.record_id}: duplicate sensor window")
        if any(w.label is not self.label for w in self.windows):
            raise ValueError(f"record {self.record_id}: window label differs from record label")
        order = list(SensorKind)
        object.__setattr__(
            self, "windows", tuple(sorted(self.windows, key=lambda w: order.index(w.sensor)))
        )

    def window(self, kind: SensorKind) -> SensorWindow | None:
        for w in self.windows:
            if w.sensor is kind:
                return w
        return None

    @property
    def sensors(self) -> tuple[SensorKind, ...]:
        return tuple(w.sensor for w in self.windows)


@dataclass(frozen=True)
class Capture:
    records: tuple[Record, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def validate_window(w: SensorWindow) -> list[str]:
    """Return every violated window invariant; an empty list means valid."""
    problems = []
    if len(w) < MIN_SAMPLES:
        problems.append(f"sample count < {MIN_SAMPLES}")
    if len(w) > 1 and not np.all(np.diff(w.t_ms) > 0):
        problems.append("timestamps not strictly increasing")
    if not (np.all(np.isfinite(w.xyz)) and np.all(np.isfinite(w.t_ms))):
        problems.append("non-finite sample")
    if not (math.isfinite(w.nominal_period_ms) and w.nominal_period_ms > 0):
        problems.append("nominal period must be positive")
    return problems


def parse_capture(text: str) -> Capture:
    """Parse capture-file text.

    Window length is not checked against ``MIN_SAMPLES`` here; run
    :func:`validate_window` on the result when full validation is wanted.
    """
    records: list[Record] = []
    rec_id: int | None = None
    rec_label: AdlLabel | None = None
    windows: list[SensorWindow] = []
    sensor: SensorKind | None = None
    sensor_line = 0
    rows: list[tuple[float, float, float, float]] = []

    def close_sensor():
        nonlocal sensor, rows
        if sensor is None:
            return
        if not rows:
            raise EmptyWindow(f"no samples for sensor {sensor.tag}", sensor_line)
        arr = np.array(rows, dtype=np.float64)
        windows.append(SensorWindow(sensor, rec_label, arr[:, 0], arr[:, 1:]))
        sensor, rows = None, []

    def close_record():
        nonlocal rec_id, windows
        close_sensor()
        if rec_id is None:
            return
        if not windows:
            raise EmptyWindow(f"record {rec_id} has no sensor blocks")
        records.append(Record(rec_id, rec_label, tuple(windows)))
        rec_id, windows = None, []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#record"):
            close_record()
            parts = line.split()
            if len(parts) != 3 or parts[0] != "#record":
                raise MalformedLine(f"expected '#record <id> <label>', got {raw!r}", lineno)
            try:
                rec_id = int(parts[1])
            except ValueError:
                raise MalformedLine(f"bad record id {parts[1]!r}", lineno) from None
            if any(r.record_id == rec_id for r in records):
                raise MalformedLine(f"duplicate record id {rec_id}", lineno)
            try:
                rec_label = AdlLabel.from_slug(parts[2])
            except ValueError:
                raise UnknownLabel(f"unknown label {parts[2]!r}", lineno) from None
        elif line.startswith("#sensor"):
            if rec_id is None:
                raise MalformedLine("#sensor before any #record", lineno)
            close_sensor()
            parts = line.split()
            if len(parts) != 2 or parts[0] != "#sensor":
                raise MalformedLine(f"expected '#sensor <kind>', got {raw!r}", lineno)
            try:
                kind = SensorKind.from_tag(parts[1])
            except ValueError:
                raise UnknownSensor(f"unknown sensor {parts[1]!r}", lineno) from None
            if any(w.sensor is kind for w in windows):
                raise MalformedLine(f"sensor {kind.tag} repeated in record {rec_id}", lineno)
            sensor, sensor_line = kind, lineno
        elif line.startswith("#"):
            raise MalformedLine(f"unknown directive {raw!r}", lineno)
        else:
            if sensor is None:
                raise MalformedLine("data row outside a #sensor block", lineno)
            fields = line.split(",")
            if len(fields) != 4:
                raise MalformedLine(f"expected 4 comma-separated values, got {len(fields)}", lineno)
            try:
                values = tuple(float(f) for f in fields)
            except ValueError:
                raise MalformedLine(f"non-numeric value in {raw!r}", lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise MalformedLine("non-finite value", lineno)
            if rows and values[0] <= rows[-1][0]:
                raise NonMonotonicTimestamp(
                    f"timestamp {values[0]!r} does not increase past {rows[-1][0]!r}", lineno
                )
            rows.append(values)
    close_record()
    return Capture(tuple(records))


def render_capture(capture: Capture | Iterable[Record]) -> str:
    """Inverse of :func:`parse_capture`; floats use ``repr`` so values round-trip exactly."""
    records = capture.records if isinstance(capture, Capture) else tuple(capture)
    out: list[str] = []
    for rec in records:
        out.append(f"#record {rec.record_id} {rec.label.slug}")
        for w in rec.windows:
            out.append(f"#sensor {w.sensor.tag}")
            for t, (x, y, z) in zip(w.t_ms.tolist(), w.xyz.tolist()):
                out.append(f"{t!r},{x!r},{y!r},{z!r}")
    return "\n".join(out) + "\n"
