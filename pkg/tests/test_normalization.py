import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adlfusion.errors import EmptyDataset, SchemaMismatch
from adlfusion.features import FeatureDataset
from adlfusion.normalization import NormalizerStats, NormKind, apply, fit


def _ds(columns, labels=None):
    X = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    names = tuple(f"c{i}" for i in range(X.shape[1]))
    return FeatureDataset(names, X, labels if labels is not None else [0] * len(X))


def test_fit_examples():
    mm = fit(_ds([[2, 4, 6]]), NormKind.MINMAX)
    assert (mm.loc[0], mm.scale[0]) == (2.0, 6.0)
    z = fit(_ds([[1, 2, 3]]), "zscore")
    assert z.loc[0] == 2.0
    assert z.scale[0] == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
    assert z.scale[0] == pytest.approx(0.816497, abs=1e-6)
    single = fit(_ds([[5.0], [7.0]]), NormKind.ZSCORE)
    assert single.scale.tolist() == [0.0, 0.0]


def test_apply_examples():
    stats = fit(_ds([[2, 4, 6]]), NormKind.MINMAX)
    assert apply(np.array([4.0]), stats).tolist() == [0.5]
    assert apply(np.array([2.0]), stats).tolist() == [0.0]
    assert apply(np.array([6.0]), stats).tolist() == [1.0]
    assert apply(np.array([10.0]), stats).tolist() == [2.0]  # no clamping


def test_degenerate_columns_map_to_zero():
    ds = _ds([[3, 3, 3], [1, 2, 3]])
    for kind in NormKind:
        out = apply(ds, fit(ds, kind))
        assert out.X[:, 0].tolist() == [0.0, 0.0, 0.0]
        assert np.all(np.isfinite(out.X))


def test_labels_pass_through():
    ds = _ds([[1, 2, 3, 4]], labels=[4, 3, 2, 1])
    out = apply(ds, fit(ds, NormKind.ZSCORE))
    assert out.y.tolist() == [4, 3, 2, 1]


def test_errors():
    with pytest.raises(EmptyDataset):
        fit(FeatureDataset(("a",), np.empty((0, 1)), []), NormKind.MINMAX)
    stats = fit(_ds([[1, 2]]), NormKind.MINMAX)
    other = FeatureDataset(("zz",), [[1.0], [2.0]], [0, 0])
    with pytest.raises(SchemaMismatch):
        apply(other, stats)
    with pytest.raises(SchemaMismatch):
        apply(np.array([1.0, 2.0]), stats)


matrices = arrays(
    np.float64,
    st.tuples(st.integers(2, 30), st.integers(1, 6)),
    elements=st.floats(-1e4, 1e4, allow_nan=False),
)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_minmax_maps_fitted_data_into_unit_interval(X):
    ds = FeatureDataset(tuple(f"c{i}" for i in range(X.shape[1])), X, [0] * len(X))
    stats = fit(ds, NormKind.MINMAX)
    out = apply(ds, stats).X
    assert np.all(out >= 0.0) and np.all(out <= 1.0)
    for j in range(X.shape[1]):
        if X[:, j].max() > X[:, j].min():
            assert out[np.argmin(X[:, j]), j] == 0.0
            assert out[np.argmax(X[:, j]), j] == 1.0


@settings(max_examples=100, deadline=None)
@given(matrices, st.sampled_from(list(NormKind)))
def test_apply_preserves_column_order(X, kind):
    ds = FeatureDataset(tuple(f"c{i}" for i in range(X.shape[1])), X, [0] * len(X))
    out = apply(ds, fit(ds, kind)).X
    for j in range(X.shape[1]):
        if np.ptp(X[:, j]) > 1e-6 * max(1.0, np.abs(X[:, j]).max()):
            a, b = X[:, j], out[:, j]
            # strictly ordered pairs stay ordered
            i1, i2 = np.argmin(a), np.argmax(a)
            assert b[i1] < b[i2]
            assert np.all(np.diff(b[np.argsort(a, kind="stable")]) >= 0)


def test_zscore_refit_is_standard():
    rng = np.random.default_rng(3)
    X = rng.normal(5, 3, size=(500, 4)) * np.array([1, 100, 0.01, 1])
    X[:, 3] = 7.0
    ds = FeatureDataset(("a", "b", "c", "d"), X, [0] * 500)
    once = apply(ds, fit(ds, NormKind.ZSCORE))
    refit = fit(once, NormKind.ZSCORE)
    assert np.all(np.abs(refit.loc) < 1e-9)
    assert np.all(np.abs(refit.scale[:3] - 1) < 1e-9)
    assert refit.scale[3] == 0.0


def test_json_round_trip_and_fingerprint():
    ds = _ds([[1, 5, 9], [0.1, 0.2, 0.4]])
    stats = fit(ds, NormKind.ZSCORE)
    assert stats.fingerprint == ds.fingerprint()
    assert len(stats.fingerprint) == 64
    again = NormalizerStats.from_json(stats.to_json())
    assert again == stats
    assert again.to_dict()["kind"] == "zscore"
