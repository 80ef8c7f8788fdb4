"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class AdlFusionError(Exception):
    """Base class for all errors raised by the package."""


class DataError(AdlFusionError):
    """Bad input data (capture files, datasets, model files)."""


class CaptureParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedLine(CaptureParseError):
    pass


class NonMonotonicTimestamp(CaptureParseError):
    pass


class UnknownLabel(CaptureParseError):
    pass


class UnknownSensor(CaptureParseError):
    pass


class EmptyWindow(CaptureParseError):
    pass


class EmptySeries(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class MissingSensor(DataError):
    def __init__(self, record_id: int, sensor: str):
        self.record_id = record_id
        self.sensor = sensor
        super().__init__(f"record {record_id} has no {sensor} window")


class EmptyDataset(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class TooFewRowsPerClass(DataError):
    pass


class InvalidProfile(DataError):
    pass


class CorruptModel(DataError):
    pass


class VersionMismatch(DataError):
    pass


class InvalidConfig(AdlFusionError):
    pass


class DimensionMismatch(AdlFusionError):
    pass


class NonFiniteGradient(AdlFusionError):
    """Raised when backpropagation produces a NaN or infinite value.

    ``train`` re-raises it with the partial ``history`` and the
    ``iteration`` at which training stopped attached.
    """

    def __init__(self, message: str = "non-finite gradient", *, iteration: int | None = None,
                 history=None, network=None):
        self.iteration = iteration
        self.history = history
        self.network = network
        super().__init__(message)
