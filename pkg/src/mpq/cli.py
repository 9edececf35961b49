"""Command-line interface.

Commands: ``mpq eagl``, ``mpq gains``, ``mpq plan``, ``mpq sweep``,
``mpq analyze``.  Exit codes: 0 success, 1 user error (bad inputs, infeasible
budgets, validation failures), 2 internal error (a bug signal, e.g. a
``--verify`` optimality mismatch).  ``MPQ_THREADS`` caps sweep parallelism;
all output files are written atomically.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, metrics, model_io
from .cost import SelectableItem, budget_capacity, build_items
from .errors import InvalidField, LengthMismatch, MpqError
from .knapsack import brute_force, integerize_gains, solve_01
from .model_io import GainVector, NetworkManifest, atomic_write_text
from .quantize import ROUND_HALF_AWAY, ROUND_HALF_EVEN

FRONTIER_COLUMNS = (
    "fraction",
    "objective_real",
    "total_cost_bmacs",
    "compression_ratio",
    "assignment_path",
    "status",
)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with code 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def parse_fraction(text: str) -> float:
    """Accept a budget fraction as a decimal ('0.70') or percent ('70%')."""
    token = text.strip()
    percent = token.endswith("%")
    if percent:
        token = token[:-1]
    value = model_io.parse_float_token(token, "budget fraction")
    if percent:
        value /= 100.0
    if not 0.0 < value <= 1.0:
        raise InvalidField(f"budget fraction must be in (0, 1], got {text!r}")
    return value


def _thread_count() -> int:
    raw = os.environ.get("MPQ_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidField(f"MPQ_THREADS must be an integer, got {raw!r}") from None


def _check_zero_macs(manifest: NetworkManifest, allow: bool) -> None:
    zero = [layer.name for layer in manifest.selectable_layers() if layer.macs == 0]
    if zero and not allow:
        raise InvalidField(
            "selectable layers with zero MACs (unfilled manifest?): "
            + ", ".join(zero)
            + "; pass --allow-zero-macs to plan anyway"
        )


def _shift_nonnegative(gains: GainVector, label: str) -> GainVector:
    """Affine-shift gains so the minimum is zero, warning that the objective changes."""
    if not gains.entries:
        return gains
    minimum = min(gains.entries.values())
    if minimum >= 0:
        return gains
    print(
        f"warning: shifting {label} gains by {-minimum!r}; "
        "the optimization objective is no longer the raw metric",
        file=sys.stderr,
    )
    shifted = {name: value - minimum for name, value in gains.entries.items()}
    return GainVector(metric_name=gains.metric_name + "+shift", entries=shifted)


def _planning_inputs(args) -> tuple[NetworkManifest, list[SelectableItem]]:
    manifest = model_io.load_manifest(args.network)
    _check_zero_macs(manifest, args.allow_zero_macs)
    gains = model_io.load_gains(args.gains, manifest=manifest, allow_negative=args.shift_gains)
    if args.shift_gains:
        gains = _shift_nonnegative(gains, gains.metric_name)
    return manifest, build_items(manifest, gains)


def _integerize_with_warning(items):
    integerization = integerize_gains(items)
    if integerization.all_zero:
        print("warning: all gains are zero; any selection is equally good", file=sys.stderr)
    return integerization


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_eagl(args) -> int:
    manifest = model_io.load_manifest(args.network)
    store = model_io.load_tensor_container(args.tensors, args.blob)
    rounding = ROUND_HALF_EVEN if args.round_half_even else ROUND_HALF_AWAY
    gains = metrics.eagl_gains(store, manifest, mode=args.entropy_mode, rounding=rounding)
    model_io.write_gains(gains, args.out)
    print(f"wrote {len(gains.entries)} gains ({gains.metric_name}) to {args.out}")
    return 0


def cmd_gains(args) -> int:
    if args.metric == "alps":
        measurements = metrics.load_alps_measurements(args.measurements, mode=args.mode)
        gains = metrics.alps_gains(measurements)
    elif args.metric == "hawq":
        manifest = model_io.load_manifest(args.network)
        store = model_io.load_tensor_container(args.tensors, args.blob)
        traces = metrics.load_hawq_traces(args.traces)
        rounding = ROUND_HALF_EVEN if args.round_half_even else ROUND_HALF_AWAY
        gains = metrics.hawq_gains(traces, store, manifest, rounding=rounding)
    elif args.metric == "baseline":
        manifest = model_io.load_manifest(args.network)
        gains = metrics.baseline_gains(manifest, args.kind)
    else:  # regression
        manifest = model_io.load_manifest(args.network)
        runs = model_io.load_run_table(args.runs)
        model = analysis.fit_linear(runs, holdout_fraction=args.holdout_fraction, seed=args.seed)
        selectable = manifest.selectable_layers()
        if len(selectable) != len(model.column_names):
            raise LengthMismatch(
                f"run table has {len(model.column_names)} flag columns but manifest "
                f"has {len(selectable)} selectable layers"
            )
        coefficients = {
            layer.name: model.coefficients[column]
            for layer, column in zip(selectable, model.column_names)
        }
        print(f"fit: r_train={model.r_train:.6f} r_holdout={model.r_holdout:.6f}")
        raw = GainVector(metric_name="regression", entries=coefficients)
        if args.shift_gains:
            raw = _shift_nonnegative(raw, "regression")
        gains = metrics.regression_gains(raw.entries)
    model_io.write_gains(gains, args.out)
    print(f"wrote {len(gains.entries)} gains ({gains.metric_name}) to {args.out}")
    return 0


def cmd_plan(args) -> int:
    manifest, items = _planning_inputs(args)
    integerization = _integerize_with_warning(items)
    fraction = parse_fraction(args.budget)
    point = analysis.solve_fraction(manifest, items, integerization, fraction)
    model_io.write_assignment(point.assignment, args.out)
    cap = budget_capacity(items, fraction)
    budget_bmacs = fraction * cap.total_hi
    utilization = point.total_cost / budget_bmacs if budget_bmacs else 0.0
    kept = sum(1 for bits in point.assignment.bits_per_layer.values() if bits == 4)
    print(f"objective: {point.assignment.objective}")
    print(f"objective_real: {point.objective_real!r}")
    print(f"total_cost_bmacs: {point.total_cost} (budget {budget_bmacs:.1f}, utilization {utilization:.2%})")
    print(f"compression_ratio: {point.assignment.compression_ratio:.4f}")
    print(f"layers_at_4bit: {kept} / {len(point.assignment.bits_per_layer)}")
    print(f"wrote {args.out}")
    return 0


def _grid_fractions(args) -> list[float]:
    if not args.grid:
        return list(analysis.DEFAULT_FRACTIONS)
    fractions = []
    for chunk in args.grid:
        for token in chunk.split(","):
            if token.strip():
                fractions.append(parse_fraction(token))
    if not fractions:
        raise InvalidField("empty --grid")
    return fractions


def cmd_sweep(args) -> int:
    manifest, items = _planning_inputs(args)
    integerization = _integerize_with_warning(items)
    fractions = _grid_fractions(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(args.csv) if args.csv else out_dir / "frontier.csv"

    def run_point(fraction: float):
        try:
            return fraction, analysis.solve_fraction(manifest, items, integerization, fraction), None
        except MpqError as exc:
            return fraction, None, str(exc)

    threads = _thread_count()
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_point, fractions))
    else:
        results = [run_point(f) for f in fractions]
    results.sort(key=lambda r: -r[0])

    rows = [",".join(FRONTIER_COLUMNS)]
    for fraction, point, error in results:
        if point is None:
            rows.append(f"{fraction!r},,,,,error: {error}")
            print(f"fraction {fraction:g}: error: {error}")
            continue
        name = f"assignment_{fraction:.4f}.json"
        model_io.write_assignment(point.assignment, out_dir / name)
        rows.append(
            f"{fraction!r},{point.objective_real!r},{point.total_cost},"
            f"{point.assignment.compression_ratio!r},{name},ok"
        )
        print(
            f"fraction {fraction:g}: objective_real={point.objective_real!r} "
            f"cost={point.total_cost} -> {name}"
        )
    atomic_write_text(csv_path, "\n".join(rows) + "\n")
    print(f"wrote {csv_path}")
    return 0


def _random_instance(rng: np.random.Generator, max_items: int):
    n = int(rng.integers(1, max_items + 1))
    gains = 1.0 - rng.random(n)  # U(0, 1]
    weights = rng.integers(1, 10**6 + 1, size=n)
    items = [
        SelectableItem(
            id=f"item{i}",
            member_layers=(f"item{i}",),
            gain=float(gains[i]),
            cost_hi=2 * int(weights[i]),
            cost_lo=int(weights[i]),
        )
        for i in range(n)
    ]
    capacity = int(rng.integers(0, int(weights.sum()) + 1))
    return items, capacity


def cmd_analyze(args) -> int:
    if args.additivity:
        singles = analysis.load_singles(args.singles)
        pairs = analysis.load_pairs(args.pairs)
        report = analysis.additivity_report(singles, pairs)
        print(f"pairs: {len(report.pairs)}")
        print(f"pearson_r: {report.pearson_r:.6f}")
        if args.out:
            doc = {
                "pearson_r": report.pearson_r,
                "pairs": [
                    {"layer1": l1, "layer2": l2, "predicted": pred, "measured": meas}
                    for l1, l2, pred, meas in report.pairs
                ],
            }
            atomic_write_text(args.out, json.dumps(doc, indent=2) + "\n")
            print(f"wrote {args.out}")
        return 0

    if args.regress:
        runs = model_io.load_run_table(args.runs)
        model = analysis.fit_linear(runs, holdout_fraction=args.holdout_fraction, seed=args.seed)
        print(f"rows: {len(runs.rows)}  predictors: {len(model.column_names)}")
        print(f"intercept: {model.intercept!r}")
        print(f"r_train: {model.r_train:.6f}")
        print(f"r_holdout: {model.r_holdout:.6f}")
        if args.out:
            doc = {
                "intercept": model.intercept,
                "coefficients": model.coefficients,
                "r_train": model.r_train,
                "r_holdout": model.r_holdout,
                "split_seed": model.split_seed,
            }
            atomic_write_text(args.out, json.dumps(doc, indent=2) + "\n")
            print(f"wrote {args.out}")
        return 0

    # --verify: cross-check the DP solver against the exhaustive oracle
    rng = np.random.default_rng(args.seed)
    for index in range(args.instances):
        items, capacity = _random_instance(rng, args.max_items)
        integerization = integerize_gains(items)
        got = solve_01(integerization.items, capacity)
        want = brute_force(integerization.items, capacity)
        if got != want:
            print(
                f"OPTIMALITY VIOLATION on instance {index} (seed {args.seed}): "
                f"solver {got} vs oracle {want}",
                file=sys.stderr,
            )
            return 2
        if got.total_weight > capacity:
            print(f"FEASIBILITY VIOLATION on instance {index}: {got}", file=sys.stderr)
            return 2
    print(f"verified {args.instances} instances (max {args.max_items} items): all optimal")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_rounding_flag(parser) -> None:
    parser.add_argument(
        "--round-half-even",
        action="store_true",
        help="round .5 quotients to even instead of away from zero",
    )


def _build_parser() -> _Parser:
    parser = _Parser(prog="mpq", description="mixed-precision bit-width planner")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eagl", help="entropy gains from a tensor container")
    p.add_argument("--network", required=True, help="network manifest JSON")
    p.add_argument("--tensors", required=True, help="tensor container manifest JSON")
    p.add_argument("--blob", required=True, help="tensor container blob")
    p.add_argument("--out", required=True, help="gains file to write")
    p.add_argument("--entropy-mode", choices=[metrics.ENTROPY_EXACT, metrics.ENTROPY_APPENDIX_COMPAT],
                   default=metrics.ENTROPY_EXACT)
    _add_rounding_flag(p)
    p.set_defaults(func=cmd_eagl)

    p = sub.add_parser("gains", help="gains from measurements, traces, baselines or regression")
    p.add_argument("--metric", required=True, choices=["alps", "hawq", "baseline", "regression"])
    p.add_argument("--out", required=True)
    p.add_argument("--network", help="network manifest JSON")
    p.add_argument("--measurements", help="ALPS CSV: layer,accuracy,loss")
    p.add_argument("--mode", choices=[metrics.MODE_ACCURACY, metrics.MODE_LOSS],
                   default=metrics.MODE_ACCURACY)
    p.add_argument("--traces", help="HAWQ traces: layer<TAB>trace_avg")
    p.add_argument("--tensors")
    p.add_argument("--blob")
    p.add_argument("--kind", choices=["uniform", "first-to-last", "last-to-first"],
                   default="uniform")
    p.add_argument("--runs", help="run table CSV: p_1..p_L,accuracy")
    p.add_argument("--holdout-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift-gains", action="store_true",
                   help="affinely shift negative gains up to zero (changes the objective)")
    _add_rounding_flag(p)
    p.set_defaults(func=cmd_gains)

    p = sub.add_parser("plan", help="solve one budget and write the assignment")
    p.add_argument("--network", required=True)
    p.add_argument("--gains", required=True)
    p.add_argument("--budget", required=True, help="fraction of the all-4-bit cost (0.70 or 70%%)")
    p.add_argument("--out", required=True)
    p.add_argument("--allow-zero-macs", action="store_true")
    p.add_argument("--shift-gains", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sweep", help="solve a grid of budgets and write the frontier CSV")
    p.add_argument("--network", required=True)
    p.add_argument("--gains", required=True)
    p.add_argument("--grid", nargs="*", default=None,
                   help="budget fractions (default: 0.95..0.60 in steps of 0.05)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--csv", default=None, help="frontier CSV path (default: <out-dir>/frontier.csv)")
    p.add_argument("--allow-zero-macs", action="store_true")
    p.add_argument("--shift-gains", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="additivity report, regression fit, or solver verification")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--additivity", action="store_true")
    mode.add_argument("--regress", action="store_true")
    mode.add_argument("--verify", action="store_true")
    p.add_argument("--singles", help="layer<TAB>drop file")
    p.add_argument("--pairs", help="layer1,layer2,measured_drop CSV")
    p.add_argument("--runs")
    p.add_argument("--holdout-fraction", type=float, default=0.1)
    p.add_argument("--instances", type=int, default=500)
    p.add_argument("--max-items", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    try:
        return args.func(args)
    except MpqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is a bug signal
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
