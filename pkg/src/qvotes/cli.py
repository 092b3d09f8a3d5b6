"""Command-line interface.

Commands: validate, compare, simulate, fit, maxci.  Exit codes are a
stable contract: 0 success, 1 input/validation error, 2 configuration
error.  Every file-writing command also emits a ``*.manifest.json``
recording the tool version, full invocation, seed, and SHA-256 digests
of the inputs, so any output can be reproduced byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, simulate
from .bootstrap import max_ci_width
from .data import (
    RATING_COLUMNS,
    REFERENCE_COLUMNS,
    STIMULUS_COLUMN,
    load_ratings,
    load_reference,
    reference_coverage,
)
from .errors import ConfigError, DataError, QvotesError
from .modelfit import fit_power_model
from .stats import compare_to_reference, dataset_mos
from .simulate import ALL_METRICS, REFERENCE_METRICS, SweepConfig, run_sweep

EXIT_OK = 0
EXIT_DATA = 1
EXIT_CONFIG = 2

METRIC_ALIASES = {
    "srcc": simulate.VALIDITY_SRCC,
    "rmse": simulate.VALIDITY_RMSE,
}

_COL_KEYS = {
    "condition": "condition_id",
    "user": "user_id",
    "score": "score",
    "stimulus": "stimulus_id",
    "mos": "mos",
}


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility sidecar written next to every output artifact."""

    tool_version: str
    invocation: list[str]
    master_seed: int | None
    input_digests: dict[str, str]
    timestamp_utc: str

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_base, argv, seed, input_paths) -> Path:
    manifest = RunManifest(
        tool_version=__version__,
        invocation=list(argv),
        master_seed=seed,
        input_digests={str(p): _sha256(p) for p in input_paths},
        timestamp_utc=datetime.now(timezone.utc).isoformat(),
    )
    path = Path(f"{out_base}.manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")
    return path


def parse_sweep(text: str) -> tuple[int, ...]:
    """``start:stop:step`` with inclusive stop, or a single count."""
    parts = text.split(":")
    try:
        numbers = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"invalid sweep {text!r}; expected start:stop:step") from None
    if len(numbers) == 1:
        start, stop, step = numbers[0], numbers[0], 1
    elif len(numbers) == 3:
        start, stop, step = numbers
    else:
        raise ConfigError(f"invalid sweep {text!r}; expected start:stop:step")
    if start < 1 or step < 1 or stop < start:
        raise ConfigError(f"invalid sweep {text!r}: need 1 <= start <= stop and step >= 1")
    return tuple(range(start, stop + 1, step))


def parse_metrics(text: str) -> tuple[str, ...]:
    names = []
    for raw in text.split(","):
        name = raw.strip()
        if not name:
            continue
        name = METRIC_ALIASES.get(name, name)
        if name not in ALL_METRICS:
            raise ConfigError(
                f"unknown metric {raw.strip()!r}; valid: {', '.join(ALL_METRICS)} "
                f"(aliases: {', '.join(METRIC_ALIASES)})"
            )
        if name not in names:
            names.append(name)
    if not names:
        raise ConfigError("no metrics given")
    return tuple(names)


def parse_col_map(text: str | None) -> dict[str, str]:
    if not text:
        return {}
    mapping = {}
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"invalid --col entry {item!r}; expected key=COLUMN")
        key, _, value = item.partition("=")
        key = key.strip()
        value = value.strip()
        canonical = _COL_KEYS.get(key, key)
        if canonical not in set(RATING_COLUMNS) | {STIMULUS_COLUMN} | set(REFERENCE_COLUMNS):
            raise ConfigError(
                f"unknown --col key {key!r}; expected one of {', '.join(_COL_KEYS)}"
            )
        if not value:
            raise ConfigError(f"empty column name for --col key {key!r}")
        mapping[canonical] = value
    return mapping


def _rating_col_map(full_map: dict[str, str]) -> dict[str, str]:
    keys = set(RATING_COLUMNS) | {STIMULUS_COLUMN}
    return {k: v for k, v in full_map.items() if k in keys}


def _reference_col_map(full_map: dict[str, str]) -> dict[str, str]:
    return {k: v for k, v in full_map.items() if k in REFERENCE_COLUMNS}


def _load_ratings_from_args(args):
    label = args.label or Path(args.ratings).stem
    return load_ratings(
        args.ratings,
        label=label,
        delimiter=args.delimiter,
        column_map=_rating_col_map(parse_col_map(args.col)),
    )


def _out_base(out: str) -> str:
    path = Path(out)
    if path.suffix in {".csv", ".json"}:
        return str(path.with_suffix(""))
    return str(path)


# -- commands ----------------------------------------------------------------


def cmd_validate(args) -> int:
    ds = _load_ratings_from_args(args)
    info = ds.summary()
    print(f"dataset:              {info['label']}")
    print(f"conditions:           {info['conditions']}")
    print(f"users:                {info['users']}")
    print(f"votes:                {info['votes']}")
    if info["stimuli"] is not None:
        print(f"stimuli:              {info['stimuli']}")
    print(
        "votes per condition:  "
        f"{info['votes_per_condition_mean']:.1f} "
        f"(std {info['votes_per_condition_std']:.1f}, "
        f"min {info['votes_per_condition_min']}, max {info['votes_per_condition_max']})"
    )

    violations = []
    counts = ds.votes_per_condition()
    if counts.min() < 1:
        violations.append("a condition has no votes")
    from .data import empirical_user_prob

    for cond in ds.conditions:
        total = sum(empirical_user_prob(ds, cond).values())
        if abs(total - 1.0) > 1e-12:
            violations.append(f"user probabilities for {cond} sum to {total!r}")

    if args.reference:
        ref = load_reference(
            args.reference,
            delimiter=args.delimiter,
            column_map=_reference_col_map(parse_col_map(args.col)),
        )
        shared, ref_only, ds_only = reference_coverage(ref, ds)
        print(f"reference conditions: {len(ref)} ({len(shared)} shared)")
        if ref_only:
            print(
                f"warning: {len(ref_only)} reference condition(s) never rated: "
                + ", ".join(ref_only),
                file=sys.stderr,
            )
        if ds_only:
            print(
                f"warning: {len(ds_only)} rated condition(s) missing from reference: "
                + ", ".join(ds_only),
                file=sys.stderr,
            )

    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_DATA
    print("invariants:           ok")
    return EXIT_OK


def cmd_compare(args) -> int:
    ds = _load_ratings_from_args(args)
    ref = load_reference(
        args.reference,
        delimiter=args.delimiter,
        column_map=_reference_col_map(parse_col_map(args.col)),
    )
    mos = dataset_mos(ds, method=args.mos_method)
    result = compare_to_reference(mos, ref, with_mapping=args.fom)
    print(f"dataset:           {ds.label}")
    print(f"shared conditions: {result.n_shared}")
    print(f"SRCC:              {result.srcc:.3f}")
    print(f"RMSE:              {result.rmse:.3f}")
    if args.fom:
        print(f"RMSE after map:    {result.rmse_after_mapping:.3f}")
        print(
            f"first-order map:   slope {result.mapping.slope:.4f}, "
            f"intercept {result.mapping.intercept:.4f}"
        )
    if args.json:
        doc = {
            "dataset": ds.label,
            "mos_method": args.mos_method,
            "n_shared": result.n_shared,
            "srcc": result.srcc,
            "rmse": result.rmse,
            "rmse_after_mapping": result.rmse_after_mapping,
            "mapping": dataclasses.asdict(result.mapping) if result.mapping else None,
        }
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        write_manifest(
            _out_base(args.json), args.argv, None, [args.ratings, args.reference]
        )
    return EXIT_OK


def cmd_simulate(args) -> int:
    ds = _load_ratings_from_args(args)
    ref = None
    if args.reference:
        ref = load_reference(
            args.reference,
            delimiter=args.delimiter,
            column_map=_reference_col_map(parse_col_map(args.col)),
        )

    if args.metrics:
        metrics = parse_metrics(args.metrics)
    elif ref is not None:
        metrics = ALL_METRICS
    else:
        metrics = tuple(m for m in ALL_METRICS if m not in REFERENCE_METRICS)

    cfg = SweepConfig(
        n_values=parse_sweep(args.n),
        repetitions=args.runs,
        master_seed=args.seed,
        metrics=metrics,
        bootstrap_resamples=args.boot,
        ci_level=args.ci_level,
        apply_first_order_map=args.fom,
    )
    curves = run_sweep(ds, ref, cfg, workers=args.workers)

    if args.delta:
        gain = simulate.certainty_gain(ds, cfg, with_delta=True, workers=args.workers)
        curves = curves + [gain.delta_srcc, gain.delta_rmse]

    base = _out_base(args.out)
    Path(base).parent.mkdir(parents=True, exist_ok=True)
    csv_path = f"{base}.csv"
    json_path = f"{base}.json"
    simulate.write_curves_csv(curves, csv_path)
    simulate.write_curves_json(curves, json_path, cfg)
    inputs = [args.ratings] + ([args.reference] if args.reference else [])
    manifest_path = write_manifest(base, args.argv, args.seed, inputs)
    print(f"dataset: {ds.label} ({len(ds.conditions)} conditions, {ds.n_votes} votes)")
    print(f"curves:  {', '.join(c.metric for c in curves)}")
    print(f"sweep:   n={cfg.n_values[0]}..{cfg.n_values[-1]} ({len(cfg.n_values)} points), r={cfg.repetitions}")
    print(f"wrote:   {csv_path}")
    print(f"wrote:   {json_path}")
    print(f"wrote:   {manifest_path}")
    return EXIT_OK


def cmd_fit(args) -> int:
    path = Path(args.curves)
    if path.suffix == ".json":
        curves = simulate.read_curves_json(path)
    else:
        curves = simulate.read_curves_csv(path)
    metric = METRIC_ALIASES.get(args.metric, args.metric)
    matching = [c for c in curves if c.metric == metric]
    if not matching:
        available = sorted({c.metric for c in curves})
        raise DataError(
            f"metric {args.metric!r} not present in {path}; available: {', '.join(available)}"
        )
    if args.dataset:
        matching = [c for c in matching if c.dataset_label == args.dataset]
        if not matching:
            raise DataError(f"no {metric} curve for dataset {args.dataset!r} in {path}")
    if len(matching) > 1:
        labels = ", ".join(c.dataset_label for c in matching)
        raise DataError(
            f"multiple datasets carry metric {metric} ({labels}); pick one with --dataset"
        )
    curve = matching[0]
    model = fit_power_model([(p.n, p.mean) for p in curve.points])
    print(f"metric:     {curve.metric}")
    print(f"dataset:    {curve.dataset_label}")
    print(f"model:      y = {model.a:.6g} * x^{model.b:.6g} + {model.c:.6g}")
    print(f"asymptote:  {model.c:.6g}")
    print(f"fit RMSE:   {model.rmse_of_fit:.6g}  ({model.n_points} points)")
    if args.out:
        doc = {
            "metric": curve.metric,
            "dataset": curve.dataset_label,
            "a": model.a,
            "b": model.b,
            "c": model.c,
            "rmse_of_fit": model.rmse_of_fit,
            "n_points": model.n_points,
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        write_manifest(_out_base(args.out), args.argv, None, [args.curves])
    return EXIT_OK


def cmd_maxci(args) -> int:
    n_values = parse_sweep(args.n)
    rows = [(n, max_ci_width(args.mos, n, args.level)) for n in n_values]
    print("n,max_ci_width")
    for n, width in rows:
        print(f"{n},{width:.6g}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write("n,max_ci_width\n")
            for n, width in rows:
                fh.write(f"{n},{width:.6g}\n")
        write_manifest(_out_base(args.out), args.argv, None, [])
    return EXIT_OK


# -- wiring -------------------------------------------------------------------


def _add_input_options(parser, with_reference_arg: bool):
    parser.add_argument("ratings", help="ratings CSV (condition_id,user_id,score[,stimulus_id])")
    if with_reference_arg:
        parser.add_argument("reference", help="reference MOS CSV (condition_id,mos)")
    else:
        parser.add_argument("--ref", dest="reference", default=None, metavar="PATH",
                            help="reference MOS CSV (condition_id,mos)")
    parser.add_argument("--col", default=None, metavar="K=COL,...",
                        help="rename canonical columns, e.g. condition=cond,user=worker,score=vote")
    parser.add_argument("--delimiter", default=",", help="field delimiter (default ,)")
    parser.add_argument("--label", default=None, help="dataset label (default: file stem)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qvotes",
        description="Vote-count sufficiency analysis for subjective quality ratings",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load a ratings file and report summary + invariant checks")
    _add_input_options(p, with_reference_arg=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="SRCC/RMSE of dataset MOS against a reference table")
    _add_input_options(p, with_reference_arg=True)
    p.add_argument("--fom", action="store_true", help="also report RMSE after a first-order map")
    p.add_argument("--mos-method", choices=("user_balanced", "plain"), default="user_balanced")
    p.add_argument("--json", default=None, metavar="PATH", help="also write the result as JSON")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="run the vote-count sweep and write metric curves")
    _add_input_options(p, with_reference_arg=False)
    p.add_argument("--n", default="10:200:10", metavar="START:STOP:STEP",
                   help="vote counts, inclusive stop (default 10:200:10)")
    p.add_argument("--runs", type=int, default=250, help="repetitions per vote count (default 250)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--metrics", default=None,
                   help=f"comma list from: {', '.join(ALL_METRICS)} (aliases srcc, rmse)")
    p.add_argument("--out", required=True, metavar="BASE",
                   help="output base path; writes BASE.csv, BASE.json, BASE.manifest.json")
    p.add_argument("--fom", action="store_true",
                   help="refit a first-order map per run before validity RMSE")
    p.add_argument("--ci-level", type=float, default=0.95, dest="ci_level")
    p.add_argument("--boot", type=int, default=1000, help="bootstrap resamples (default 1000)")
    p.add_argument("--delta", action="store_true",
                   help="also emit gain curves shifted by their n=10 value")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: QVOTES_THREADS or CPU count)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a saturating power model to a stored metric curve")
    p.add_argument("curves", help="curve CSV or JSON written by simulate")
    p.add_argument("--metric", required=True, help="metric name to fit")
    p.add_argument("--dataset", default=None, help="dataset label when the file holds several")
    p.add_argument("--out", default=None, metavar="PATH", help="write the fitted model as JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("maxci", help="worst-case MOS CI width bound over a vote-count sweep")
    p.add_argument("--n", default="10:200:10", metavar="START:STOP:STEP")
    p.add_argument("--mos", type=float, required=True, help="MOS value in [1, 5]")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", default=None, metavar="PATH", help="also write CSV")
    p.set_defaults(func=cmd_maxci)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = ["qvotes"] + argv
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except QvotesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
