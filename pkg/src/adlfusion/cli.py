"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

from . import experiments as ex
from . import normalization as norm
from .errors import AdlFusionError, DataError, InvalidConfig, NonFiniteGradient
from .features import DatasetVariant, FusionConfig, build_dataset, dataset_from_csv, dataset_to_csv
from .neuralnet import NetworkConfig, Preset, init_network, load_model, save_model, train
from .preprocessing import DEFAULT_ALPHA, FilterConfig
from .sensors import AdlLabel, Capture, parse_capture, render_capture
from .synthgen import DEFAULT_PROFILES, generate_records, profiles_from_json

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------

def read_captures(path: str | Path) -> list[Capture]:
    """Parse one capture file, or every ``*.txt`` file of a directory in name order."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.txt"))
        if not files:
            raise DataError(f"{path}: no *.txt capture files")
    elif path.is_file():
        files = [path]
    else:
        raise DataError(f"{path}: no such file or directory")
    out = []
    seen: dict[int, Path] = {}
    for f in files:
        try:
            cap = parse_capture(f.read_text(encoding="utf-8"))
        except DataError as exc:
            raise DataError(f"{f}: {exc}") from None
        for rec in cap.records:
            if rec.record_id in seen:
                raise DataError(f"{f}: record id {rec.record_id} already defined in {seen[rec.record_id]}")
            seen[rec.record_id] = f
        out.append(cap)
    return out


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    profiles = profiles_from_json(_read(args.profiles)) if args.profiles else DEFAULT_PROFILES
    records = generate_records(profiles, args.per_class, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.single_file:
        (out / "captures.txt").write_text(render_capture(records), encoding="utf-8")
    else:
        for rec in records:
            name = f"record_{rec.record_id:06d}_{rec.label.slug}.txt"
            (out / name).write_text(render_capture([rec]), encoding="utf-8")
    counts = Counter(r.label for r in records)
    print(f"wrote {len(records)} records to {out}")
    for label in AdlLabel:
        print(f"  {label.slug}: {counts[label]}")
    return EXIT_OK


def cmd_extract(args) -> int:
    captures = read_captures(args.input)
    ds = build_dataset(captures, args.fusion, args.variant, FilterConfig(args.alpha))
    _write(args.out, dataset_to_csv(ds))
    print(f"{len(ds)} rows, {len(ds.schema)} feature columns", file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_train(args) -> int:
    ds = dataset_from_csv(_read(args.data))
    normalization = args.normalization or ex.Normalization.paired_with(args.preset).value
    stats = None
    if normalization != "none":
        stats = norm.fit(ds, normalization)
        ds = norm.apply(ds, stats)
    hidden = tuple(int(h) for h in args.hidden.split(",")) if args.hidden else None
    cfg = NetworkConfig.for_preset(
        args.preset, len(ds.schema), seed=args.seed, max_iterations=args.budget,
        hidden_layers=hidden, learning_rate=args.lr, l2_lambda=args.l2,
    )
    net = init_network(cfg)
    try:
        net, history = train(net, ds, args.budget)
    except NonFiniteGradient as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    extra = {"schema": list(ds.schema)}
    if stats is not None:
        extra["normalizer"] = stats.to_dict()
    save_model(net, args.out, extra)
    print(f"trained {args.preset.value} for {args.budget} iterations; final loss {history.final_loss:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    net = load_model(args.model)
    doc = json.loads(_read(args.model))
    stats = norm.NormalizerStats.from_dict(doc["normalizer"]) if "normalizer" in doc else None
    ds = dataset_from_csv(_read(args.data))
    ev = ex.evaluate(net, ds, stats)
    lines = [f"accuracy {100 * ev.accuracy:.2f}% on {len(ds)} rows", "confusion (rows = true, cols = predicted):"]
    names = [l.slug for l in AdlLabel]
    width = max(map(len, names)) + 1
    lines.append(" " * width + " ".join(f"{n:>{width}}" for n in names))
    for name, row in zip(names, ev.confusion):
        lines.append(f"{name:<{width}}" + " ".join(f"{v:>{width}d}" for v in row))
    print("\n".join(lines))
    if args.json:
        _write(args.json, json.dumps({
            "accuracy": ev.accuracy,
            "confusion": ev.confusion.tolist(),
            "precision": ev.precision.tolist(),
            "recall": ev.recall.tolist(),
        }, indent=1) + "\n")
    return EXIT_OK


def cmd_grid_spec(args) -> int:
    budgets = [ex.parse_budget(b) for b in args.budgets.split(",")]
    specs = []
    for fusion in args.fusion:
        specs += ex.standard_grid(fusion, budgets, ex.SplitSpec.parse(args.split), args.seed, args.alpha)
    _write(args.out, ex.specs_to_json(specs) + "\n")
    return EXIT_OK


def cmd_grid(args) -> int:
    specs = ex.specs_from_json(_read(args.spec))
    if args.input:
        captures = read_captures(args.input)
    else:
        captures = generate_records(DEFAULT_PROFILES, args.synth_per_class, args.synth_seed)
    results = ex.run_grid(specs, captures, jobs=args.jobs, repeats=args.repeats)
    _write(args.out, ex.results_to_csv(results, timing=args.timing))
    status = Counter(r.status for r in results)
    print(f"{len(results)} results: {status['ok']} ok, {status['diverged']} diverged, {status['error']} failed",
          file=sys.stderr)
    for r in results:
        if r.status == "error":
            print(f"  failed {r.spec.to_dict()}: {r.message}", file=sys.stderr)
    if status["error"]:
        return EXIT_DATA
    if status["diverged"]:
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_report(args) -> int:
    rows = ex.results_from_csv(_read(args.results))
    text, csv_text = ex.render_report(rows)
    _write(args.out, text)
    if args.csv_out:
        _write(args.csv_out, csv_text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _arg_type(fn, what):
    def convert(text):
        try:
            return fn(text)
        except (ValueError, InvalidConfig) as exc:
            raise argparse.ArgumentTypeError(f"invalid {what}: {exc}") from None
    convert.__name__ = what
    return convert


def _positive_int(text):
    n = int(text)
    if n < 1:
        raise ValueError("must be >= 1")
    return n


def _alpha(text):
    return FilterConfig(float(text)).alpha


def _seed(text):
    n = int(text)
    if not 0 <= n < 2**64:
        raise ValueError("must be a non-negative 64-bit integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adlfusion", description=__doc__.splitlines()[0])
    parser.add_argument("--config", metavar="FILE",
                        help="JSON object of option defaults for the subcommand; explicit flags win")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    fusion = _arg_type(FusionConfig.parse, "fusion")
    variant = _arg_type(DatasetVariant.parse, "variant")
    preset = _arg_type(Preset.parse, "preset")
    budget = _arg_type(ex.parse_budget, "budget")
    seed = _arg_type(_seed, "seed")
    alpha = _arg_type(_alpha, "alpha")
    count = _arg_type(_positive_int, "count")

    p = sub.add_parser("synth", help="generate synthetic capture files")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--per-class", type=count, default=2000, metavar="N", help="records per activity (default 2000)")
    p.add_argument("--seed", type=seed, default=0, help="noise seed (default 0)")
    p.add_argument("--profiles", metavar="FILE", help="JSON class profiles replacing the defaults")
    p.add_argument("--single-file", action="store_true", help="write one multi-record captures.txt")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="build a feature dataset CSV from captures")
    p.add_argument("--in", dest="input", required=True, metavar="PATH", help="capture file or directory")
    p.add_argument("--fusion", type=fusion, default=FusionConfig.ACC_MAG_GYRO,
                   help="acc | acc+mag | acc+mag+gyro (default acc+mag+gyro)")
    p.add_argument("--variant", type=variant, default=DatasetVariant.D1, help="dataset variant 1..5 (default 1)")
    p.add_argument("--alpha", type=alpha, default=DEFAULT_ALPHA, help="low-pass coefficient in (0, 1]")
    p.add_argument("--out", metavar="CSV", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a network on a dataset CSV")
    p.add_argument("--data", required=True, metavar="CSV", help="feature dataset CSV (all rows are training rows)")
    p.add_argument("--preset", type=preset, default=Preset.DEEP_LEARNING, help="mlp | ffnn | dnn (default dnn)")
    p.add_argument("--normalization", choices=[n.value for n in ex.Normalization],
                   help="default: minmax for mlp/ffnn, zscore for dnn")
    p.add_argument("--budget", type=budget, default=1_000_000, help="iterations, e.g. 1M, 2M, 4M, 50000 (default 1M)")
    p.add_argument("--seed", type=seed, default=0, help="initialization and shuffling seed")
    p.add_argument("--lr", type=float, help="learning rate override")
    p.add_argument("--l2", type=float, help="L2 coefficient override")
    p.add_argument("--hidden", metavar="SIZES", help="comma-separated hidden layer sizes override")
    p.add_argument("--out", required=True, metavar="MODEL", help="model JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset CSV")
    p.add_argument("--model", required=True, metavar="MODEL", help="model JSON from 'train'")
    p.add_argument("--data", required=True, metavar="CSV", help="feature dataset CSV")
    p.add_argument("--json", metavar="FILE", help="also write metrics as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid-spec", help="write the standard 90-run grid spec for fusion configs")
    p.add_argument("--fusion", type=fusion, nargs="+", default=[FusionConfig.ACC_MAG_GYRO],
                   help="one or more fusion configs")
    p.add_argument("--budgets", default="1M,2M,4M", help="comma-separated budgets (default 1M,2M,4M)")
    p.add_argument("--split", default="holdout:0.8:0",
                   help="holdout:FRACTION:SEED[:flat] or resub (default holdout:0.8:0)")
    p.add_argument("--seed", type=seed, default=0, help="network seed")
    p.add_argument("--alpha", type=alpha, default=DEFAULT_ALPHA, help="low-pass coefficient")
    p.add_argument("--out", metavar="JSON", help="output file (default stdout)")
    p.set_defaults(func=cmd_grid_spec)

    p = sub.add_parser("grid", help="run every experiment of a grid spec file")
    p.add_argument("--spec", required=True, metavar="JSON", help="grid spec file (JSON list of experiments)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--in", dest="input", metavar="PATH", help="capture file or directory")
    src.add_argument("--synth-per-class", type=count, default=200, metavar="N",
                     help="use synthetic captures with N records per activity (default 200; ignored with --in)")
    p.add_argument("--synth-seed", type=seed, default=0, help="seed for synthetic captures")
    p.add_argument("--jobs", type=count, default=1, metavar="K", help="parallel worker processes")
    p.add_argument("--repeats", type=count, default=1, metavar="R",
                   help="average each experiment over R consecutive seeds")
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column (output is then not reproducible)")
    p.add_argument("--out", metavar="CSV", help="results CSV (default stdout)")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", help="render best-accuracy tables from a results CSV")
    p.add_argument("--results", required=True, metavar="CSV", help="results CSV from 'grid'")
    p.add_argument("--out", metavar="FILE", help="text report path (default stdout)")
    p.add_argument("--csv-out", metavar="CSV", help="also write the normalized per-spec CSV")
    p.set_defaults(func=cmd_report)
    return parser


def _subcommands(parser: argparse.ArgumentParser) -> dict[str, argparse.ArgumentParser]:
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if not a.startswith("-")), None)
    if known.config and command in _subcommands(parser):
        try:
            overrides = json.loads(Path(known.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config {known.config}: {exc}")
        if not isinstance(overrides, dict):
            parser.error("--config must hold a JSON object")
        sub = _subcommands(parser)[command]
        known_actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            if dest == "in":
                dest = "input"
            action = known_actions.get(dest)
            if action is None or dest == "help":
                parser.error(f"--config: unknown option {key!r} for {command}")
            if action.type is not None and isinstance(value, (str, int, float, list)):
                try:
                    value = [action.type(str(v)) for v in value] if isinstance(value, list) else action.type(str(value))
                except argparse.ArgumentTypeError as exc:
                    parser.error(f"--config {key}: {exc}")
            defaults[dest] = value
        sub.set_defaults(**defaults)
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteGradient as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except InvalidConfig as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AdlFusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
