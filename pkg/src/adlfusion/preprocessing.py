"""Low-pass cleaning and magnitude reduction of tri-axial windows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySeries, InvalidConfig
from .sensors import SensorWindow

DEFAULT_ALPHA = 0.25


@dataclass(frozen=True)
class FilterConfig:
    """First-order exponential smoother, ``y[i] = y[i-1] + alpha*(x[i] - y[i-1])``."""

    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise InvalidConfig(f"alpha must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True, eq=False)
class ScalarSeries:
    values: np.ndarray
    period_ms: float

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, ScalarSeries):
            return NotImplemented
        return self.period_ms == other.period_ms and np.array_equal(self.values, other.values)

    __hash__ = None


def low_pass_filter(series: ScalarSeries, cfg: FilterConfig = FilterConfig()) -> ScalarSeries:
    if len(series) == 0:
        raise EmptySeries("cannot filter an empty series")
    a = cfg.alpha
    if a == 1.0:
        # y + (x - y) is not exact in floating point
        return ScalarSeries(series.values.copy(), series.period_ms)
    # Written as y + a*(x - y) so constant input is an exact fixed point.
    xs = series.values.tolist()
    out = [0.0] * len(xs)
    y = out[0] = xs[0]
    for i in range(1, len(xs)):
        y = y + a * (xs[i] - y)
        out[i] = y
    return ScalarSeries(np.array(out), series.period_ms)


def magnitude(window: SensorWindow) -> ScalarSeries:
    xyz = window.xyz
    values = np.sqrt(xyz[:, 0] * xyz[:, 0] + xyz[:, 1] * xyz[:, 1] + xyz[:, 2] * xyz[:, 2])
    return ScalarSeries(values, window.nominal_period_ms)


def clean_series(window: SensorWindow, cfg: FilterConfig = FilterConfig()) -> ScalarSeries:
    """Magnitude followed by the low-pass filter: the signal every feature is computed on."""
    return low_pass_filter(magnitude(window), cfg)

