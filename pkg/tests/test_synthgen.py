from dataclasses import replace

import numpy as np
import pytest

from adlfusion.errors import InvalidProfile
from adlfusion.features import detect_peaks
from adlfusion.preprocessing import clean_series
from adlfusion.sensors import AdlLabel, Capture, SensorKind, parse_capture, render_capture, validate_window
from adlfusion.synthgen import (
    DEFAULT_PROFILES,
    SensorProfile,
    generate_captures,
    generate_records,
    profiles_from_json,
    profiles_to_json,
)


def _quiet(profiles):
    zero = lambda sp: replace(sp, noise_std=0.0)  # noqa: E731
    return tuple(replace(p, acc=zero(p.acc), mag=zero(p.mag), gyro=zero(p.gyro)) for p in profiles)


def test_counts_and_geometry():
    recs = generate_records(n_per_class=10, seed=0)
    assert len(recs) == 50
    for label in AdlLabel:
        assert sum(r.label is label for r in recs) == 10
    assert [r.record_id for r in recs] == list(range(1, 51))
    for r in recs:
        assert r.sensors == tuple(SensorKind)
        for w in r.windows:
            assert w.xyz.shape == (500, 3)
            assert np.all(np.diff(w.t_ms) == 10.0)
            assert validate_window(w) == []


def test_captures_wrap_records():
    caps = generate_captures(n_per_class=1, seed=3)
    assert len(caps) == 5
    assert [c.records[0] for c in caps] == generate_records(n_per_class=1, seed=3)
    for c in caps:
        assert parse_capture(render_capture(c)) == c


def test_seeded_determinism():
    a = generate_records(n_per_class=3, seed=12)
    assert a == generate_records(n_per_class=3, seed=12)
    assert a != generate_records(n_per_class=3, seed=13)


def test_noise_free_generation_ignores_seed():
    quiet = _quiet(DEFAULT_PROFILES)
    a = generate_records(quiet, n_per_class=2, seed=0)
    for seed in (1, 99, 2**40):
        assert generate_records(quiet, n_per_class=2, seed=seed) == a


def test_running_cadence_matches_profile():
    profile = next(p for p in DEFAULT_PROFILES if p.label is AdlLabel.RUNNING)
    freq = profile.acc.frequency_hz
    for rec in generate_records(n_per_class=5, seed=1)[:5]:
        w = rec.window(SensorKind.ACCELEROMETER)
        peaks = detect_peaks(clean_series(w))
        gaps = np.diff(peaks.indices) * w.nominal_period_ms / 1000.0
        measured = 1.0 / np.median(gaps)
        assert abs(measured - freq) <= 0.1 * freq


def test_invalid_profiles():
    with pytest.raises(InvalidProfile):
        generate_records(n_per_class=0)
    with pytest.raises(InvalidProfile):
        generate_records(DEFAULT_PROFILES[:4], n_per_class=1)
    neg = replace(DEFAULT_PROFILES[0], acc=SensorProfile(9.81, 3.0, 6.0, -1.0))
    with pytest.raises(InvalidProfile):
        generate_records((neg,) + DEFAULT_PROFILES[1:], n_per_class=1)
    same = replace(DEFAULT_PROFILES[1], acc=DEFAULT_PROFILES[0].acc)
    with pytest.raises(InvalidProfile):
        generate_records((DEFAULT_PROFILES[0], same) + DEFAULT_PROFILES[2:], n_per_class=1)
    nan = replace(DEFAULT_PROFILES[0], gyro=SensorProfile(float("nan"), 1.0, 1.0, 0.0))
    with pytest.raises(InvalidProfile):
        generate_records((nan,) + DEFAULT_PROFILES[1:], n_per_class=1)


def test_profiles_json_round_trip():
    assert profiles_from_json(profiles_to_json()) == DEFAULT_PROFILES
    with pytest.raises(InvalidProfile):
        profiles_from_json('{"jogging": {}}')
    with pytest.raises(InvalidProfile):
        profiles_from_json("not json")


def test_capture_parses_after_render():
    cap = Capture(tuple(generate_records(n_per_class=1, seed=5)))
    assert parse_capture(render_capture(cap)) == cap
