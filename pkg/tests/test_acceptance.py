"""Acceptance suite: one test per release criterion, each printing a PASS/FAIL
line.  Run with ``pytest tests/test_acceptance.py -v -s``.

Expected values come from independent oracles (exhaustive enumeration, the
snippet transcription, synthetic generators), never from the code under test.
"""

import csv
import json
import signal
import subprocess
import sys
import time

import numpy as np
import pytest

from helpers import (
    layer,
    manifest,
    random_manifest_and_gains,
    real_subset_optimum,
    snippet_entropy,
    synthetic_run_table,
    tensor,
    write_gain_file,
    write_net,
)
from mpq.analysis import DEFAULT_FRACTIONS, additivity_report, fit_linear, sweep
from mpq.cli import main
from mpq.cost import BudgetSpec, SelectableItem, build_items, compression_ratio
from mpq.knapsack import (
    PrecisionAssignment,
    brute_force,
    integerize_gains,
    solve_01,
)
from mpq.metrics import (
    ENTROPY_APPENDIX_COMPAT,
    AlpsMeasurements,
    alps_gains,
    eagl_gains,
    empirical_distribution,
    entropy_bits,
)
from mpq.model_io import load_assignment, load_manifest
from mpq.quantize import quantize_tensor


def _report(name: str, ok: bool, detail: str = "") -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}{' ' + detail if detail else ''}")
    assert ok, f"acceptance criterion '{name}' failed {detail}"


def _random_items(rng, max_items):
    n = int(rng.integers(1, max_items + 1))
    gains = 1.0 - rng.random(n)  # U(0, 1]
    weights = rng.integers(1, 10**6 + 1, size=n)
    items = [
        SelectableItem(f"i{k}", (f"i{k}",), float(gains[k]), 2 * int(weights[k]), int(weights[k]))
        for k in range(n)
    ]
    capacity = int(rng.integers(0, int(weights.sum()) + 1))
    return items, gains, weights, capacity


def test_knapsack_optimality():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(500):
        items, _, _, capacity = _random_items(rng, 15)
        integ = integerize_gains(items)
        if solve_01(integ.items, capacity) != brute_force(integ.items, capacity):
            mismatches += 1
    elapsed = time.perf_counter() - start
    _report(
        "knapsack-optimality",
        mismatches == 0 and elapsed < 10.0,
        f"(500 instances, {mismatches} mismatches, {elapsed:.2f}s)",
    )


def test_integerization_epsilon_optimality():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(200):
        items, gains, weights, capacity = _random_items(rng, 12)
        integ = integerize_gains(items)
        got = solve_01(integ.items, capacity)
        chosen = set(got.ids)
        got_real = float(sum(item.gain for item in items if item.id in chosen))
        optimum = real_subset_optimum(gains, weights, capacity)
        if optimum > 0:
            worst = max(worst, (optimum - got_real) / optimum)
    _report(
        "integerization-epsilon-optimality",
        worst <= 2e-4,
        f"(200 instances, worst relative gap {worst:.2e})",
    )


def test_entropy_correctness():
    ok = True
    detail = []
    for bits in (2, 4, 8):
        lo = -(2 ** (bits - 1))
        uniform = [float(c) for c in range(lo, 2 ** (bits - 1))]
        h = entropy_bits(empirical_distribution(quantize_tensor(uniform, 1.0, bits)))
        ok &= abs(h - bits) <= 1e-12
    delta = entropy_bits(empirical_distribution(quantize_tensor([3.0] * 9, 1.0, 4)))
    ok &= delta == 0.0
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        bits = int(rng.choice([2, 4, 8]))
        qt = quantize_tensor(
            rng.standard_normal(int(rng.integers(1, 500))), float(rng.uniform(0.05, 1.0)), bits
        )
        ours = entropy_bits(empirical_distribution(qt), mode=ENTROPY_APPENDIX_COMPAT)
        worst = max(worst, abs(ours - snippet_entropy(qt.bins, bits)))
    ok &= worst <= 1e-9
    _report("entropy-correctness", ok, f"(appendix-compat worst gap {worst:.2e})")


def test_eagl_scale_invariance():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 2000))
        values = rng.standard_normal(n) * float(rng.uniform(0.01, 10.0))
        scale = float(rng.uniform(0.001, 1.0))
        bits = int(rng.choice([2, 4, 8]))
        man = manifest(layer("a", weight_tensor="a.w"))
        base = eagl_gains({"a.w": tensor("a.w", values, scale, bits)}, man).entries["a"]
        for k in (0.1, 3.0, 1000.0):
            scaled = eagl_gains(
                {"a.w": tensor("a.w", values * k, scale * k, bits)}, man
            ).entries["a"]
            worst = max(worst, abs(scaled - base))
    _report("eagl-scale-invariance", worst <= 1e-12, f"(50 tensors, worst gap {worst:.2e})")


def test_cost_model_boundaries():
    rng = np.random.default_rng(4)
    ok = True
    fractions = (1.0,) + DEFAULT_FRACTIONS + (0.5,)
    for _ in range(50):
        man, gains = random_manifest_and_gains(rng)
        items = build_items(man, gains)
        points = sweep(man, items, fractions)
        assert points[0].fraction == 1.0 and points[-1].fraction == 0.5
        ok &= set(points[0].assignment.bits_per_layer.values()) == {4}
        ok &= points[0].objective_real == pytest.approx(sum(i.gain for i in items))
        ok &= set(points[-1].assignment.bits_per_layer.values()) == {2}
        ok &= points[-1].objective_real == 0.0
        objectives = [p.objective_real for p in points]  # fraction descending
        ok &= all(a >= b - 1e-12 for a, b in zip(objectives, objectives[1:]))
    _report("cost-model-boundaries", ok, "(50 instances, 10-point grids)")


def test_regression_recovery():
    rng = np.random.default_rng(5)
    coefficients = rng.uniform(0.05, 0.25, size=48)
    noiseless = synthetic_run_table(rng, 135, 48, 70.0, coefficients)
    model = fit_linear(noiseless, holdout_fraction=0.1, seed=0)
    got = np.array([model.coefficients[c] for c in model.column_names])
    coeff_gap = float(np.max(np.abs(got - coefficients)))
    noisy = synthetic_run_table(rng, 135, 48, 70.0, coefficients, noise_sd=0.05)
    noisy_model = fit_linear(noisy, holdout_fraction=0.1, seed=0)
    _report(
        "regression-recovery",
        coeff_gap <= 1e-9 and noisy_model.r_holdout >= 0.999,
        f"(noiseless coeff gap {coeff_gap:.2e}, noisy r_holdout {noisy_model.r_holdout:.6f})",
    )


def test_additivity_analog():
    rng = np.random.default_rng(6)
    singles = {f"l{i}": float(rng.uniform(0.0, 4.0)) for i in range(30)}
    names = list(singles)
    chosen = [tuple(rng.choice(names, size=2, replace=False)) for _ in range(80)]
    predicted = np.array([singles[a] + singles[b] for a, b in chosen])
    noise_sd = 0.1 * float(predicted.std())
    measured = predicted + rng.normal(0.0, noise_sd, size=len(chosen))
    report = additivity_report(singles, [(a, b, float(m)) for (a, b), m in zip(chosen, measured)])
    _report("additivity-analog", report.pearson_r >= 0.98, f"(80 pairs, r {report.pearson_r:.4f})")


def test_alps_conversion():
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(30):
        entries = {f"l{i}": (float(rng.uniform(10.0, 95.0)), 0.0) for i in range(int(rng.integers(2, 60)))}
        gains = alps_gains(AlpsMeasurements(entries=entries))
        best = max(acc for acc, _ in entries.values())
        ok &= min(gains.entries.values()) == 0.0
        ok &= all(gains.entries[name] == best - acc for name, (acc, _) in entries.items())
    _report("alps-conversion", ok, "(30 random measurement sets)")


def test_compression_ratio_constants():
    man = manifest(layer("a", params=777), layer("b", params=777))

    def ratio(bits_a, bits_b, fraction):
        assignment = PrecisionAssignment(
            bits_per_layer={"a": bits_a, "b": bits_b}, selected_items=(),
            total_cost=0, objective=0, budget=BudgetSpec(fraction, 0),
        )
        return compression_ratio(man, assignment)

    ok = ratio(4, 4, 1.0) == 8.0
    ok &= ratio(2, 2, 0.5) == 16.0
    ok &= abs(ratio(4, 2, 0.75) - 32.0 / 3.0) <= 1e-12
    _report("compression-ratio", ok)


def test_cli_round_trip_and_atomicity(tmp_path):
    # part 1: plan output re-read and re-costed stays within budget
    rng = np.random.default_rng(8)
    ok = True
    for index in range(25):
        man, gains = random_manifest_and_gains(rng)
        net = write_net(tmp_path, man, f"net{index}.json")
        gpath = write_gain_file(tmp_path, gains.entries, f"gains{index}.tsv")
        fraction = float(rng.choice(DEFAULT_FRACTIONS))
        out = tmp_path / f"assign{index}.json"
        rc = main(["plan", "--network", str(net), "--gains", str(gpath),
                   "--budget", repr(fraction), "--out", str(out)])
        ok &= rc == 0
        assignment = load_assignment(out)
        reloaded_man = load_manifest(net)
        total_hi = sum(4 * l.macs for l in reloaded_man.selectable_layers())
        recosted = sum(
            assignment.bits_per_layer[l.name] * l.macs for l in reloaded_man.selectable_layers()
        )
        ok &= recosted == assignment.total_cost
        ok &= assignment.total_cost <= fraction * total_hi

    # part 2: killing a sweep mid-run never leaves a partially written CSV
    layers = [layer(f"l{i}", macs=int(rng.integers(500000, 10**6))) for i in range(40)]
    big_man = manifest(*layers)
    big_net = write_net(tmp_path, big_man, "big.json")
    big_gains = write_gain_file(
        tmp_path, {l.name: float(1.0 - rng.random()) for l in layers}, "big_gains.tsv"
    )
    out_dir = tmp_path / "killed_sweep"
    grid = ",".join(f"{f:.4f}" for f in np.linspace(0.55, 0.99, 120))
    csv_path = out_dir / "frontier.csv"
    proc = subprocess.Popen(
        [sys.executable, "-m", "mpq", "sweep", "--network", str(big_net),
         "--gains", str(big_gains), "--grid", grid, "--out-dir", str(out_dir)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
    )
    time.sleep(1.5)
    killed = proc.poll() is None
    proc.send_signal(signal.SIGKILL)
    proc.wait()
    if csv_path.exists():
        text = csv_path.read_text()
        rows = list(csv.DictReader(text.splitlines()))
        complete = text.endswith("\n") and len(rows) == 120 and all(r["status"] for r in rows)
        ok &= complete
        state = "complete CSV"
    else:
        state = "no CSV (killed mid-run)" if killed else "no CSV"
        ok &= killed  # the run must actually have been interrupted
    _report("cli-round-trip-atomicity", ok, f"(25 plans round-tripped; {state})")
