"""Seeded synthetic captures for the five activities.

Each sensor axis is ``base*u + amplitude*sin(2*pi*f*t)*u + noise`` where
``u`` is a fixed unit direction per sensor kind, so the magnitude series
oscillates at ``f`` around ``base``.  Only the Gaussian noise depends on the
seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidProfile
from .sensors import NOMINAL_PERIOD_MS, AdlLabel, Capture, Record, SensorKind, SensorWindow

WINDOW_SAMPLES = 500  # 5 s at 10 ms

_DIRECTIONS = {
    SensorKind.ACCELEROMETER: np.array([0.0, 0.0, 1.0]),
    SensorKind.MAGNETOMETER: np.array([0.3, 0.5, math.sqrt(1 - 0.3**2 - 0.5**2)]),
    SensorKind.GYROSCOPE: np.array([1.0, 0.0, 0.0]),
}


@dataclass(frozen=True)
class SensorProfile:
    base: float
    frequency_hz: float
    amplitude: float
    noise_std: float


@dataclass(frozen=True)
class ClassProfile:
    label: AdlLabel
    acc: SensorProfile
    mag: SensorProfile
    gyro: SensorProfile

    def sensor(self, kind: SensorKind) -> SensorProfile:
        return getattr(self, kind.tag)


def _p(*args) -> SensorProfile:
    return SensorProfile(*args)


#                                  base    f(Hz)  amp   noise
DEFAULT_PROFILES: tuple[ClassProfile, ...] = (
    ClassProfile(AdlLabel.RUNNING,
                 acc=_p(9.81, 3.0, 6.0, 0.15), mag=_p(44.0, 3.0, 3.0, 0.3), gyro=_p(2.0, 3.0, 1.5, 0.05)),
    ClassProfile(AdlLabel.WALKING,
                 acc=_p(9.81, 1.8, 3.0, 0.10), mag=_p(46.0, 1.8, 2.0, 0.3), gyro=_p(1.2, 1.8, 0.8, 0.05)),
    ClassProfile(AdlLabel.GOING_UPSTAIRS,
                 acc=_p(9.81, 1.4, 2.2, 0.10), mag=_p(48.0, 1.4, 1.5, 0.3), gyro=_p(1.0, 1.4, 0.6, 0.05)),
    ClassProfile(AdlLabel.GOING_DOWNSTAIRS,
                 acc=_p(9.81, 1.6, 3.8, 0.10), mag=_p(42.0, 1.6, 2.5, 0.3), gyro=_p(1.1, 1.6, 0.7, 0.05)),
    ClassProfile(AdlLabel.STANDING,
                 acc=_p(9.81, 0.0, 0.0, 0.05), mag=_p(45.0, 0.0, 0.0, 0.3), gyro=_p(0.1, 0.0, 0.0, 0.02)),
)


def validate_profiles(profiles) -> None:
    profiles = tuple(profiles)
    labels = [p.label for p in profiles]
    if sorted(labels, key=lambda l: l.code) != list(AdlLabel):
        raise InvalidProfile("exactly one profile per activity is required")
    for p in profiles:
        for kind in SensorKind:
            sp = p.sensor(kind)
            values = (sp.base, sp.frequency_hz, sp.amplitude, sp.noise_std)
            if not all(math.isfinite(v) for v in values):
                raise InvalidProfile(f"{p.label.slug}/{kind.tag}: non-finite parameter")
            if sp.noise_std < 0 or sp.frequency_hz < 0:
                raise InvalidProfile(f"{p.label.slug}/{kind.tag}: noise and frequency must be >= 0")
    freqs = [p.acc.frequency_hz for p in profiles]
    if len(set(freqs)) != len(freqs):
        raise InvalidProfile("accelerometer frequencies must differ across activities")


def profiles_to_json(profiles=DEFAULT_PROFILES) -> str:
    doc = {
        p.label.slug: {kind.tag: asdict(p.sensor(kind)) for kind in SensorKind}
        for p in profiles
    }
    return json.dumps(doc, indent=2)


def profiles_from_json(text: str) -> tuple[ClassProfile, ...]:
    try:
        doc = json.loads(text)
        out = []
        for slug, sensors in doc.items():
            label = AdlLabel.from_slug(slug)
            parts = {kind.tag: SensorProfile(**{k: float(v) for k, v in sensors[kind.tag].items()})
                     for kind in SensorKind}
            out.append(ClassProfile(label, **parts))
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise InvalidProfile(f"bad profiles document: {exc}") from None
    out.sort(key=lambda p: p.label.code)
    validate_profiles(out)
    return tuple(out)


def _window(kind: SensorKind, label: AdlLabel, sp: SensorProfile, rng: np.random.Generator) -> SensorWindow:
    t_ms = np.arange(WINDOW_SAMPLES) * NOMINAL_PERIOD_MS
    level = sp.base + sp.amplitude * np.sin(2 * np.pi * sp.frequency_hz * t_ms / 1000.0)
    xyz = level[:, None] * _DIRECTIONS[kind][None, :]
    xyz = xyz + rng.normal(0.0, 1.0, size=xyz.shape) * sp.noise_std
    return SensorWindow(kind, label, t_ms, xyz)


def generate_records(profiles=DEFAULT_PROFILES, n_per_class: int = 2000, seed: int = 0) -> list[Record]:
    """``n_per_class`` records per activity, grouped by class, ids from 1."""
    profiles = tuple(sorted(profiles, key=lambda p: p.label.code))
    validate_profiles(profiles)
    if n_per_class < 1:
        raise InvalidProfile("n_per_class must be >= 1")
    children = np.random.SeedSequence(seed).spawn(len(profiles) * n_per_class)
    records = []
    rid = 0
    for p in profiles:
        for _ in range(n_per_class):
            rng = np.random.default_rng(children[rid])
            rid += 1
            windows = tuple(_window(kind, p.label, p.sensor(kind), rng) for kind in SensorKind)
            records.append(Record(rid, p.label, windows))
    return records


def generate_captures(profiles=DEFAULT_PROFILES, n_per_class: int = 2000, seed: int = 0) -> list[Capture]:
    """One single-record :class:`Capture` per generated record."""
    return [Capture((r,)) for r in generate_records(profiles, n_per_class, seed)]
