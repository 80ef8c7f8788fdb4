"""Experiment specs, the (fusion x dataset x normalization x preset x budget)
grid, metrics, and Table-style reports."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import normalization as norm
from .errors import AdlFusionError, DataError, NonFiniteGradient, SchemaMismatch, TooFewRowsPerClass
from .features import DatasetVariant, FeatureDataset, FusionConfig, build_dataset, project
from .neuralnet import STANDARD_BUDGETS, Network, NetworkConfig, Preset, init_network, predict, train
from .preprocessing import DEFAULT_ALPHA, FilterConfig
from .sensors import N_CLASSES

RESULT_COLUMNS = ("fusion", "variant", "normalization", "preset", "budget", "seed", "split", "accuracy", "wall_ms")
DIVERGED = "div."
FAILED = "err"


class Normalization(Enum):
    NONE = "none"
    MINMAX = "minmax"
    ZSCORE = "zscore"

    @classmethod
    def parse(cls, text: str | None) -> "Normalization":
        if text is None:
            return cls.NONE
        return cls(str(text).strip().lower())

    @classmethod
    def paired_with(cls, preset: Preset) -> "Normalization":
        return cls.ZSCORE if preset is Preset.DEEP_LEARNING else cls.MINMAX

    @property
    def heading(self) -> str:
        return {
            Normalization.NONE: "NOT NORMALIZED DATA",
            Normalization.MINMAX: "NORMALIZED DATA (MIN/MAX)",
            Normalization.ZSCORE: "NORMALIZED DATA (MEAN/STD)",
        }[self]


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """``holdout`` (seeded, optionally stratified) or ``resub`` (train == test)."""

    mode: str = "holdout"
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.mode not in ("holdout", "resub"):
            raise ValueError(f"split mode must be 'holdout' or 'resub', got {self.mode!r}")
        if self.mode == "holdout" and not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must be in (0, 1)")

    def __str__(self) -> str:
        if self.mode == "resub":
            return "resub"
        s = f"holdout:{self.train_fraction!r}:{self.seed}"
        return s if self.stratified else s + ":flat"

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        parts = text.strip().split(":")
        if parts[0] == "resub":
            return cls(mode="resub")
        if parts[0] != "holdout" or len(parts) not in (1, 2, 3, 4):
            raise ValueError(f"bad split {text!r}")
        frac = float(parts[1]) if len(parts) > 1 else 0.8
        seed = int(parts[2]) if len(parts) > 2 else 0
        stratified = not (len(parts) > 3 and parts[3] == "flat")
        return cls("holdout", frac, seed, stratified)

    def reseeded(self, offset: int) -> "SplitSpec":
        return replace(self, seed=self.seed + offset) if self.mode == "holdout" else self


@dataclass(frozen=True)
class ExperimentSpec:
    fusion: FusionConfig
    variant: DatasetVariant
    normalization: Normalization
    preset: Preset
    budget: int
    split: SplitSpec = SplitSpec()
    seed: int = 0
    alpha: float = DEFAULT_ALPHA

    def to_dict(self) -> dict:
        return {
            "fusion": self.fusion.value,
            "variant": self.variant.number,
            "normalization": self.normalization.value,
            "preset": self.preset.value,
            "budget": self.budget,
            "split": str(self.split),
            "seed": self.seed,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        split = d.get("split", "holdout")
        return cls(
            fusion=FusionConfig.parse(d["fusion"]),
            variant=DatasetVariant.parse(d["variant"]),
            normalization=Normalization.parse(d.get("normalization")),
            preset=Preset.parse(d["preset"]),
            budget=parse_budget(d["budget"]),
            split=SplitSpec.parse(split) if isinstance(split, str) else SplitSpec(**split),
            seed=int(d.get("seed", 0)),
            alpha=float(d.get("alpha", DEFAULT_ALPHA)),
        )


def parse_budget(value) -> int:
    """Accept ints or the shorthand ``1M`` / ``2M`` / ``4M`` / ``500k``."""
    if isinstance(value, (int, np.integer)):
        n = int(value)
    else:
        s = str(value).strip().upper().replace("_", "")
        mult = 1
        if s.endswith("M"):
            s, mult = s[:-1], 1_000_000
        elif s.endswith("K"):
            s, mult = s[:-1], 1_000
        try:
            n = int(float(s) * mult) if mult != 1 else int(s)
        except ValueError:
            raise ValueError(f"bad iteration budget {value!r}") from None
    if n < 0:
        raise ValueError("budget must be >= 0")
    return n


def format_budget(n: int) -> str:
    if n and n % 1_000_000 == 0:
        return f"{n // 1_000_000}M"
    if n and n % 1_000 == 0:
        return f"{n // 1_000}k"
    return str(n)


def standard_grid(
    fusion: FusionConfig,
    budgets: Sequence[int] = STANDARD_BUDGETS,
    split: SplitSpec = SplitSpec(),
    seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
) -> list[ExperimentSpec]:
    """The 5 variants x {none, paired normalizer} x 3 presets x budgets grid for one fusion."""
    specs = []
    for preset in Preset:
        for normalization in (Normalization.NONE, Normalization.paired_with(preset)):
            for variant in DatasetVariant:
                for budget in budgets:
                    specs.append(ExperimentSpec(fusion, variant, normalization, preset, budget, split, seed, alpha))
    return specs


def specs_to_json(specs: Iterable[ExperimentSpec]) -> str:
    return json.dumps([s.to_dict() for s in specs], indent=1)


def specs_from_json(text: str) -> list[ExperimentSpec]:
    try:
        doc = json.loads(text)
        if not isinstance(doc, list):
            raise ValueError("grid spec file must hold a JSON list")
        return [ExperimentSpec.from_dict(d) for d in doc]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad grid spec: {exc}") from None


# ---------------------------------------------------------------------------
# Splitting and evaluation
# ---------------------------------------------------------------------------

def _n_train(fraction: float, n: int) -> int:
    return min(max(int(math.floor(fraction * n + 0.5)), 1), n - 1)


def split(dataset: FeatureDataset, spec: SplitSpec) -> tuple[FeatureDataset, FeatureDataset]:
    if spec.mode == "resub":
        return dataset, dataset
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        train_idx = []
        for c in range(N_CLASSES):
            idx = np.flatnonzero(dataset.y == c)
            if len(idx) == 0:
                continue
            if len(idx) < 2:
                raise TooFewRowsPerClass(f"class {c} has {len(idx)} row(s); stratified holdout needs 2")
            train_idx.append(rng.permutation(idx)[: _n_train(spec.train_fraction, len(idx))])
        train_idx = np.sort(np.concatenate(train_idx)) if train_idx else np.array([], dtype=np.int64)
    else:
        if len(dataset) < 2:
            raise TooFewRowsPerClass("holdout needs at least 2 rows")
        train_idx = np.sort(rng.permutation(len(dataset))[: _n_train(spec.train_fraction, len(dataset))])
    test_mask = np.ones(len(dataset), dtype=bool)
    test_mask[train_idx] = False
    return dataset.subset(train_idx), dataset.subset(np.flatnonzero(test_mask))


@dataclass(eq=False)
class Evaluation:
    accuracy: float
    confusion: np.ndarray  # rows = true class, cols = predicted
    precision: np.ndarray
    recall: np.ndarray


def metrics_from_confusion(confusion: np.ndarray) -> Evaluation:
    confusion = np.asarray(confusion, dtype=np.int64)
    total = int(confusion.sum())
    diag = np.diag(confusion).astype(np.float64)
    predicted = confusion.sum(axis=0)
    actual = confusion.sum(axis=1)
    precision = np.divide(diag, predicted, out=np.zeros(N_CLASSES), where=predicted > 0)
    recall = np.divide(diag, actual, out=np.zeros(N_CLASSES), where=actual > 0)
    accuracy = float(diag.sum() / total) if total else 0.0
    return Evaluation(accuracy, confusion, precision, recall)


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(m, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return m


def evaluate(net: Network, test: FeatureDataset, stats: norm.NormalizerStats | None = None) -> Evaluation:
    """Normalize with ``stats`` (if given), predict row by row, tally the confusion matrix."""
    if stats is not None:
        test = norm.apply(test, stats)
    if test.X.shape[1] != net.config.input_dim:
        raise SchemaMismatch(f"test set has {test.X.shape[1]} columns, network expects {net.config.input_dim}")
    preds = [predict(net, row)[0].code for row in test.X]
    return metrics_from_confusion(confusion_matrix(test.y, preds))


# ---------------------------------------------------------------------------
# Running experiments
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ExperimentResult:
    spec: ExperimentSpec
    status: str = "ok"  # ok | diverged | error
    accuracy: float | None = None
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))
    precision: np.ndarray = field(default_factory=lambda: np.zeros(N_CLASSES))
    recall: np.ndarray = field(default_factory=lambda: np.zeros(N_CLASSES))
    final_loss: float | None = None
    history_points: int = 0
    train_fingerprint: str = ""
    stats_fingerprint: str = ""
    message: str = ""
    wall_ms: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, ExperimentResult):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.status == other.status
            and self.accuracy == other.accuracy
            and np.array_equal(self.confusion, other.confusion)
            and np.array_equal(self.precision, other.precision)
            and np.array_equal(self.recall, other.recall)
            and self.final_loss == other.final_loss
            and self.history_points == other.history_points
            and self.train_fingerprint == other.train_fingerprint
            and self.stats_fingerprint == other.stats_fingerprint
            and self.message == other.message
        )

    __hash__ = None

    def row(self) -> "ResultRow":
        return ResultRow(
            fusion=self.spec.fusion.value,
            variant=self.spec.variant.number,
            normalization=self.spec.normalization.value,
            preset=self.spec.preset.value,
            budget=self.spec.budget,
            seed=self.spec.seed,
            split=str(self.spec.split),
            accuracy=self.accuracy if self.status == "ok" else None,
            status=self.status,
            wall_ms=int(round(self.wall_ms)),
        )


def _run_once(spec: ExperimentSpec, dataset: FeatureDataset) -> ExperimentResult:
    result = ExperimentResult(spec)
    train_set, test_set = split(dataset, spec.split)
    result.train_fingerprint = train_set.fingerprint()
    stats = None
    if spec.normalization is not Normalization.NONE:
        stats = norm.fit(train_set, spec.normalization.value)
        result.stats_fingerprint = stats.fingerprint
        train_set = norm.apply(train_set, stats)
    cfg = NetworkConfig.for_preset(spec.preset, train_set.X.shape[1], seed=spec.seed, max_iterations=spec.budget)
    net = init_network(cfg)
    try:
        net, history = train(net, train_set, spec.budget)
    except NonFiniteGradient as exc:
        result.status = "diverged"
        result.message = str(exc)
        if exc.history is not None:
            result.history_points = len(exc.history.iterations)
        return result
    result.final_loss = history.final_loss
    result.history_points = len(history.iterations)
    ev = evaluate(net, test_set, stats)
    result.accuracy = ev.accuracy
    result.confusion = ev.confusion
    result.precision, result.recall = ev.precision, ev.recall
    return result


def run_on_dataset(spec: ExperimentSpec, dataset: FeatureDataset, repeats: int = 1) -> ExperimentResult:
    """Run ``spec`` on a prepared dataset (already restricted to the spec's variant).

    With ``repeats > 1`` the network and split seeds are offset by 0..repeats-1
    and confusion matrices are summed before computing metrics.
    """
    start = time.perf_counter()
    if repeats <= 1:
        result = _run_once(spec, dataset)
    else:
        runs = [
            _run_once(replace(spec, seed=spec.seed + i, split=spec.split.reseeded(i)), dataset)
            for i in range(repeats)
        ]
        bad = [r for r in runs if r.status != "ok"]
        if bad:
            result = replace(bad[0], spec=spec)
        else:
            total = sum(r.confusion for r in runs)
            ev = metrics_from_confusion(total)
            result = ExperimentResult(
                spec,
                accuracy=ev.accuracy,
                confusion=ev.confusion,
                precision=ev.precision,
                recall=ev.recall,
                final_loss=float(np.mean([r.final_loss for r in runs])),
                history_points=runs[0].history_points,
                train_fingerprint=runs[0].train_fingerprint,
                stats_fingerprint=runs[0].stats_fingerprint,
            )
    result.wall_ms = (time.perf_counter() - start) * 1000.0
    return result


def run_experiment(spec: ExperimentSpec, captures, repeats: int = 1) -> ExperimentResult:
    """build_dataset -> split -> fit normalizer on train -> train -> evaluate on test."""
    dataset = build_dataset(captures, spec.fusion, spec.variant, FilterConfig(spec.alpha))
    return run_on_dataset(spec, dataset, repeats)


def _grid_task(args) -> ExperimentResult:
    spec, dataset, repeats = args
    if dataset is None:
        return ExperimentResult(spec, status="error", message="dataset could not be built")
    try:
        return run_on_dataset(spec, dataset, repeats)
    except AdlFusionError as exc:
        return ExperimentResult(spec, status="error", message=f"{type(exc).__name__}: {exc}")


def run_grid(specs: Sequence[ExperimentSpec], captures, jobs: int = 1, repeats: int = 1) -> list[ExperimentResult]:
    """Run every spec; output order follows ``specs``.

    Features are extracted once per (fusion, alpha) and projected onto each
    variant.  Per-spec failures are recorded in the result.
    """
    specs = list(specs)
    if not specs:
        return []
    full: dict[tuple, FeatureDataset | None] = {}
    errors: dict[tuple, str] = {}
    for s in specs:
        key = (s.fusion, s.alpha)
        if key not in full:
            try:
                full[key] = build_dataset(captures, s.fusion, DatasetVariant.D1, FilterConfig(s.alpha))
            except AdlFusionError as exc:
                full[key] = None
                errors[key] = f"{type(exc).__name__}: {exc}"
    tasks = []
    for s in specs:
        ds = full[(s.fusion, s.alpha)]
        tasks.append((s, None if ds is None else project(ds, s.fusion, s.variant), repeats))
    if jobs <= 1:
        results = [_grid_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_grid_task, tasks))
    for r in results:
        key = (r.spec.fusion, r.spec.alpha)
        if key in errors:
            r.message = errors[key]
    return results


# ---------------------------------------------------------------------------
# Results CSV and report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    """One line of the results CSV."""

    fusion: str
    variant: int
    normalization: str
    preset: str
    budget: int
    seed: int
    split: str
    accuracy: float | None
    status: str = "ok"
    wall_ms: int | None = field(default=None, compare=False)

    @property
    def accuracy_text(self) -> str:
        if self.status == "ok":
            return format(self.accuracy, ".17g")
        return DIVERGED if self.status == "diverged" else FAILED


def _as_row(r) -> ResultRow:
    return r.row() if isinstance(r, ExperimentResult) else r


def results_to_csv(results: Iterable, timing: bool = False) -> str:
    """Serialize results.  ``wall_ms`` is left blank unless ``timing`` so output is reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in map(_as_row, results):
        w.writerow([
            r.fusion, r.variant, r.normalization, r.preset, r.budget, r.seed, r.split,
            r.accuracy_text,
            "" if not timing or r.wall_ms is None else r.wall_ms,
        ])
    return buf.getvalue()


def results_from_csv(text: str) -> list[ResultRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != RESULT_COLUMNS:
        raise DataError(f"results CSV header must be {','.join(RESULT_COLUMNS)}")
    rows = []
    for lineno, d in enumerate(reader, start=2):
        try:
            acc_text = d["accuracy"].strip()
            if acc_text == DIVERGED:
                acc, status = None, "diverged"
            elif acc_text == FAILED:
                acc, status = None, "error"
            else:
                acc, status = float(acc_text), "ok"
            rows.append(ResultRow(
                fusion=FusionConfig.parse(d["fusion"]).value,
                variant=DatasetVariant.parse(d["variant"]).number,
                normalization=Normalization.parse(d["normalization"]).value,
                preset=Preset.parse(d["preset"]).value,
                budget=int(d["budget"]),
                seed=int(d["seed"]),
                split=str(SplitSpec.parse(d["split"])),
                accuracy=acc,
                status=status,
                wall_ms=int(d["wall_ms"]) if d["wall_ms"] else None,
            ))
        except (ValueError, TypeError, AttributeError) as exc:
            raise DataError(f"results CSV line {lineno}: {exc}") from None
    return rows


def best_rows(results: Iterable) -> dict[tuple[str, str, str], ResultRow | None]:
    """Best result per (fusion, normalization, preset).

    Highest accuracy wins; ties go to the lower variant, then the lower
    budget, then the lower seed.  Groups with no successful run map to None.
    """
    groups: dict[tuple[str, str, str], list[ResultRow]] = {}
    for r in map(_as_row, results):
        groups.setdefault((r.fusion, r.normalization, r.preset), []).append(r)
    best = {}
    for key, rows in groups.items():
        ok = [r for r in rows if r.status == "ok"]
        best[key] = min(ok, key=lambda r: (-r.accuracy, r.variant, r.budget, r.seed)) if ok else None
    return best


def format_report_row(preset: Preset, row: ResultRow | None) -> str:
    if row is None:
        return f"{preset.title} | - | - | {DIVERGED}"
    return f"{preset.title} | {row.variant} | {format_budget(row.budget)} | {100.0 * row.accuracy:.2f}"


REPORT_HEADER = "FRAMEWORK | DATASET | ITERATIONS | BEST ACCURACY"


def render_report(results: Iterable) -> tuple[str, str]:
    """Return (text report, full results CSV).

    The text has one table per fusion configuration, one section per
    normalization and one best row per preset, e.g.
    ``DEEP LEARNING | 1 | 4M | 89.51``.
    """
    rows = [_as_row(r) for r in results]
    best = best_rows(rows)
    lines: list[str] = []
    for fusion in FusionConfig:
        keys = [k for k in best if k[0] == fusion.value]
        if not keys:
            continue
        if lines:
            lines.append("")
        lines.append(f"SENSORS: {fusion.value.upper()}")
        lines.append(REPORT_HEADER)
        for normalization in Normalization:
            present = [p for p in Preset if (fusion.value, normalization.value, p.value) in best]
            if not present:
                continue
            lines.append(normalization.heading)
            for preset in present:
                lines.append(format_report_row(preset, best[(fusion.value, normalization.value, preset.value)]))
    return "\n".join(lines) + ("\n" if lines else ""), results_to_csv(rows)
