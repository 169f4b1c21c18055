"""Exit criteria for the package, one test per criterion.

Each test tags itself with a ``criterion`` user property; the terminal
summary prints one PASS/FAIL line per criterion. The multi-seed experiments
run once per session into a temporary directory.
"""

import csv
import json
import time

import numpy as np
import pytest

from conftest import random_dataset
from layer_insertion.autograd import backprop, finite_diff_gradient, kink_coordinates, max_relative_error
from layer_insertion.experiments import emit_plot_data, load_config, run_experiment
from layer_insertion.insertion import build_fully_extended, compute_merits, compute_merits_minibatch, select_and_insert
from layer_insertion.network import NetworkSpec, forward, init_params, param_count
from layer_insertion.training import TrainConfig, train


@pytest.fixture(scope="session")
def experiments(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    out, timing = {}, {}
    for name in ("exp6", "exp11", "exp9", "exp14", "exp8"):
        t0 = time.perf_counter()
        summary = run_experiment(load_config(name), root / name)
        timing[name] = time.perf_counter() - t0
        assert summary["ok"], summary["failures"]
        out[name] = (root / name, summary)
    return out, timing


def final_means(summary):
    return {arm: v["final_mean_train_loss"] for arm, v in summary["arms"].items()}


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.slow
def test_c1_parameter_counts(record_property, experiments):
    record_property("criterion", "C1 parameter counts 27/57/33/54 and 27->57, 33->54 in event logs")
    t0 = time.perf_counter()
    counts = [
        param_count(NetworkSpec("fnn", (2, 5, 2))),
        param_count(NetworkSpec("fnn", (2, 5, 5, 2))),
        param_count(NetworkSpec("resnet", (2, 3, 3, 2))),
        param_count(NetworkSpec("resnet", (2, 3, 3, 3, 2))),
    ]
    assert counts == [27, 57, 33, 54]
    assert time.perf_counter() - t0 < 1.0
    runs, _ = experiments
    for exp, arm, before, after in (("exp6", "FNNLI", 27, 57), ("exp11", "ResNetLI", 33, 54)):
        ev = [r for r in rows(runs[exp][0] / "events.csv") if r["arm"] == arm]
        for seed in range(30):
            mine = [r for r in ev if r["run_id"] == f"{arm}-s{seed:02d}"]
            assert [(r["event"], r["iteration"], int(r["param_count"])) for r in mine] == [
                ("start", "0", before),
                ("insert", "450", after),
            ]


@pytest.mark.parametrize("kind,widths", [("fnn", (2, 5, 2)), ("fnn", (2, 4, 4, 2)), ("resnet", (2, 3, 3, 2)), ("resnet", (2, 3, 3, 3, 2))])
def test_c2_function_preservation(record_property, kind, widths, default_split):
    record_property("criterion", f"C2 function preservation {kind} {list(widths)} (<= 1e-14, ResNet exact)")
    t0 = time.perf_counter()
    train_d, _ = default_split
    rng = np.random.default_rng(2)
    # a trained point as well as a fresh one
    trained = train(TrainConfig(NetworkSpec(kind, widths), learning_rate=0.1, total_iterations=50, seed=3), train_d).params
    for base in (init_params(NetworkSpec(kind, widths), 1), trained):
        x = rng.normal(scale=2.0, size=(2, 100))
        ref = forward(base, x)[0]
        ext, mapping = build_fully_extended(base)
        report = compute_merits(ext, mapping, train_d)
        new = select_and_insert(base, report)
        for net in (ext, new):
            dev = np.max(np.abs(forward(net, x)[0] - ref))
            assert dev <= 1e-14
            if kind == "resnet":
                assert dev == 0.0
    assert time.perf_counter() - t0 < 1.0


def test_c3_resnet_insertion_gradient_structure(record_property, default_split):
    record_property("criterion", "C3 new-block |dW1|, |db| <= 1e-15 and |dW2| > 0")
    t0 = time.perf_counter()
    train_d, _ = default_split
    for widths in ((2, 3, 3, 2), (2, 3, 3, 3, 2)):
        for seed in range(5):
            base = train(TrainConfig(NetworkSpec("resnet", widths), learning_rate=0.1, total_iterations=20, seed=seed), train_d).params
            ext, mapping = build_fully_extended(base)
            _, g = backprop(ext, train_d)
            for _, i in mapping:
                blk = g.blocks[i]
                assert np.linalg.norm(blk.w1) <= 1e-15
                assert np.linalg.norm(blk.bias) <= 1e-15
                assert np.linalg.norm(blk.w2) > 0
    assert time.perf_counter() - t0 < 1.0


def _random_spec(rng, kind):
    while True:
        if kind == "fnn":
            spec = NetworkSpec("fnn", (2, *rng.integers(2, 6, size=rng.integers(1, 3)), 2))
        else:
            h = int(rng.integers(2, 5))
            spec = NetworkSpec("resnet", (2,) + (h,) * int(rng.integers(2, 4)) + (2,))
        if param_count(spec) <= 60:
            return spec


def test_c4_gradient_correctness(record_property):
    record_property("criterion", "C4 backprop vs central differences (step 1e-6) rel err <= 1e-5, 20 FNN + 20 ResNet")
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = {}
    for kind in ("fnn", "resnet"):
        worst[kind] = 0.0
        for i in range(20):
            params = init_params(_random_spec(rng, kind), seed=500 + i)
            data = random_dataset(rng, 16)
            _, g = backprop(params, data)
            fd = finite_diff_gradient(params, data, step=1e-6)
            mask = kink_coordinates(params, data, step=1e-6)
            worst[kind] = max(worst[kind], max_relative_error(g, fd, mask, floor=1e-8))
    print("worst relative error", worst)
    assert max(worst.values()) <= 1e-5
    assert time.perf_counter() - t0 < 10.0


def test_c5_zero_learning_rate_merit_pass(record_property, default_split):
    record_property("criterion", "C5 merit pass leaves parameters bit-identical; minibatch(N) == full within 1e-12")
    t0 = time.perf_counter()
    train_d, _ = default_split
    for spec in (NetworkSpec("fnn", (2, 4, 4, 2)), NetworkSpec("resnet", (2, 3, 3, 3, 2))):
        ext, mapping = build_fully_extended(init_params(spec, 0))
        before = [t.tobytes() for t in ext.tensors()]
        full = compute_merits(ext, mapping, train_d)
        mini = compute_merits_minibatch(ext, mapping, train_d, len(train_d))
        assert [t.tobytes() for t in ext.tensors()] == before
        assert np.max(np.abs(np.subtract(full.merits, mini.merits))) <= 1e-12
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.slow
def test_c6_prefix_coincidence(record_property, experiments):
    record_property("criterion", "C6 FNN1 and FNNLI histories coincide for iterations 0-450 (1e-12)")
    runs, _ = experiments
    d = runs["exp6"][0] / "runs"
    for seed in range(30):
        a = rows(d / f"FNN1-s{seed:02d}.csv")[:451]
        b = rows(d / f"FNNLI-s{seed:02d}.csv")[:451]
        for ra, rb in zip(a, b):
            assert ra["iteration"] == rb["iteration"]
            assert abs(float(ra["train_loss"]) - float(rb["train_loss"])) <= 1e-12
            assert abs(float(ra["test_error"]) - float(rb["test_error"])) <= 1e-12


@pytest.mark.slow
def test_c7_growing_beats_fixed_baseline(record_property, experiments):
    record_property("criterion", "C7 mean final loss over seeds 0-29: FNNLI < FNN1 and ResNetLI < ResNet1")
    runs, timing = experiments
    fnn = final_means(runs["exp6"][1])
    res = final_means(runs["exp11"][1])
    print("exp6", fnn, "exp11", res)
    assert fnn["FNNLI"] < fnn["FNN1"], json.dumps(runs["exp6"][1], indent=1)
    assert res["ResNetLI"] < res["ResNet1"], json.dumps(runs["exp11"][1], indent=1)
    assert timing["exp6"] + timing["exp11"] < 300


@pytest.mark.slow
def test_c8_li_not_worse_than_liother(record_property, experiments):
    record_property("criterion", "C8 mean final loss over seeds 0-29: LI <= LIother (FNN [2,4,4,2], ResNet [2,3,3,3,2])")
    runs, timing = experiments
    fnn = final_means(runs["exp9"][1])
    res = final_means(runs["exp14"][1])
    print("exp9", fnn, "exp14", res)
    assert fnn["FNNLI"] <= fnn["FNNLIother"], json.dumps(runs["exp9"][1], indent=1)
    assert res["ResNetLI"] <= res["ResNetLIother"], json.dumps(runs["exp14"][1], indent=1)
    assert timing["exp9"] + timing["exp14"] < 300


@pytest.mark.slow
def test_c9_insertion_time_sweep(record_property, experiments):
    record_property("criterion", "C9 every insertion time 150..850 ends below FNN1; 9+9 curves, 8 markers")
    runs, timing = experiments
    out, summary = runs["exp8"]
    means = final_means(summary)
    base = means.pop("FNN1")
    print("exp8 FNN1", base, means)
    assert len(means) == 8
    assert all(v < base for v in means.values()), means
    manifest = emit_plot_data(out)
    quantities = [c["quantity"] for c in manifest["curves"]]
    assert quantities.count("loss") == 9 and quantities.count("test_error") == 9
    assert sorted(m["iteration"] for m in manifest["markers"]) == list(range(150, 851, 100))
    assert timing["exp8"] < 60


@pytest.mark.slow
def test_c10_determinism(record_property, experiments, tmp_path):
    record_property("criterion", "C10 reruns with identical config give byte-identical CSVs")
    runs, _ = experiments
    for name, seeds in (("exp8", None), ("exp14", [0, 1, 2]), ("exp6", [0, 1])):
        spec = load_config(name)
        if seeds is None:
            first = runs[name][0]
        else:
            spec = spec.with_seeds(seeds)
            first = tmp_path / f"{name}-a"
            run_experiment(spec, first)
        second = tmp_path / f"{name}-b"
        run_experiment(spec, second)
        files = sorted(p.relative_to(first) for p in first.rglob("*.csv"))
        assert len(files) > 3
        for f in files:
            assert (first / f).read_bytes() == (second / f).read_bytes(), f
