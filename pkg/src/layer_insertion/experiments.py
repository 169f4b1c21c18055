"""Experiment configurations, multi-seed runs, aggregation and plot data.

Output directory layout (all text, floats written with 17 significant
digits)::

    dataset.csv              shared data draw, one row per point with role tag
    config.json              resolved experiment configuration
    runs/<run_id>.csv        run_id,arm,iteration,train_loss,test_error
    runs/<run_id>.params.json  final parameters (checkpoint schema)
    events.csv               run_id,arm,iteration,event,position,merit_0,...,param_count
    events.jsonl             the same events with full merit reports
    failures.json            present only when some run failed
    aggregate/<arm>.csv      iteration,mean_train_loss,mean_test_error,n_runs
    plot/<arm>.<quantity>.dat  whitespace-separated "iteration value"
    plot/manifest.json       curves and insertion markers
"""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .data import generate_spirals, load_dataset, save_dataset, split_train_test
from .network import NetworkSpec, save_checkpoint
from .training import TrainConfig, TrainingDiverged, train

log = logging.getLogger(__name__)

OUT_DIR_ENV = "LAYER_INSERTION_OUT_DIR"
RUN_HEADER = ["run_id", "arm", "iteration", "train_loss", "test_error"]
AGG_HEADER = ["iteration", "mean_train_loss", "mean_test_error", "n_runs"]

# frozen once: one turn, small noise puts FNN1 on a plateau that FNN2 escapes
DEFAULT_DATA = {"n_total": 600, "n_train": 450, "noise_std": 0.05, "turns": 1.0, "seed": 0}

_TRAIN_KEYS = (
    "learning_rate",
    "post_insertion_learning_rate",
    "total_iterations",
    "insertion_iteration",
    "strategy",
    "batch_size",
    "w1_scale",
)


def fmt(x):
    return f"{x:.17g}"


@dataclass(frozen=True)
class Arm:
    name: str
    spec: NetworkSpec
    options: dict = field(default_factory=dict)

    def config(self, seed):
        return TrainConfig(spec=self.spec, seed=seed, **self.options)


@dataclass
class ExperimentSpec:
    name: str
    arms: list
    seeds: list
    data: dict = field(default_factory=lambda: dict(DEFAULT_DATA))
    description: str = ""

    @classmethod
    def from_dict(cls, d):
        defaults = {k: v for k, v in d.get("train", {}).items() if k in _TRAIN_KEYS}
        unknown = set(d.get("train", {})) - set(_TRAIN_KEYS)
        if unknown:
            raise ValueError(f"unknown training keys {sorted(unknown)}")
        arms = []
        for a in d["arms"]:
            opts = dict(defaults)
            opts.update({k: v for k, v in a.items() if k in _TRAIN_KEYS})
            extra = set(a) - set(_TRAIN_KEYS) - {"name", "kind", "widths"}
            if extra:
                raise ValueError(f"arm {a.get('name')!r}: unknown keys {sorted(extra)}")
            arms.append(Arm(a["name"], NetworkSpec(a["kind"], tuple(a["widths"])), opts))
        if len({a.name for a in arms}) != len(arms):
            raise ValueError("arm names must be unique")
        seeds = d.get("seeds", [0])
        if isinstance(seeds, dict):
            seeds = list(range(seeds["start"], seeds["stop"]))
        data = dict(DEFAULT_DATA)
        data.update(d.get("data", {}))
        spec = cls(d["name"], arms, [int(s) for s in seeds], data, d.get("description", ""))
        for arm in arms:
            arm.config(spec.seeds[0])  # validate early
        return spec

    def to_dict(self):
        return {
            "name": self.name,
            "description": self.description,
            "data": self.data,
            "seeds": self.seeds,
            "arms": [
                {"name": a.name, "kind": a.spec.kind, "widths": list(a.spec.widths), **_jsonable(a.options)}
                for a in self.arms
            ],
        }

    def with_seeds(self, seeds):
        return ExperimentSpec(self.name, self.arms, list(seeds), self.data, self.description)


def _jsonable(opts):
    return {k: (str(v) if k == "strategy" and v is not None else v) for k, v in opts.items()}


def builtin_configs():
    return sorted(p.name[:-5] for p in resources.files("layer_insertion.configs").iterdir() if p.name.endswith(".json"))


def load_config(path_or_name):
    """Load an experiment from a JSON file or a built-in name such as ``exp6``."""
    p = Path(path_or_name)
    if p.is_file():
        text = p.read_text()
    else:
        res = resources.files("layer_insertion.configs") / f"{path_or_name}.json"
        if not res.is_file():
            raise FileNotFoundError(f"no config file {path_or_name!r} and no built-in of that name ({builtin_configs()})")
        text = res.read_text()
    return ExperimentSpec.from_dict(json.loads(text))


def resolve_out_dir(out_dir, name):
    if out_dir:
        return Path(out_dir)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env) / name
    return Path("results") / name


def make_dataset(data_cfg):
    d = generate_spirals(data_cfg["n_total"], data_cfg["noise_std"], data_cfg["turns"], data_cfg["seed"])
    return split_train_test(d, data_cfg["n_train"], data_cfg["seed"])


def write_dataset(spec, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = make_dataset(spec.data)
    path = out_dir / "dataset.csv"
    save_dataset(path, train, test)
    return path


def run_id(arm, seed):
    return f"{arm}-s{seed:02d}"


def _run_one(job):
    arm, seed, train_data, test_data, runs_dir = job
    rid = run_id(arm.name, seed)
    failure = None
    try:
        hist = train(arm.config(seed), train_data, test_data)
    except TrainingDiverged as exc:
        hist, failure = exc.history, str(exc)
    except Exception as exc:  # noqa: BLE001 - a failing arm must not stop the others
        return rid, arm.name, seed, None, f"{type(exc).__name__}: {exc}"
    with open(runs_dir / f"{rid}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_HEADER)
        for it, loss, err in zip(hist.iterations, hist.train_loss, hist.test_error):
            w.writerow([rid, arm.name, it, fmt(loss), fmt(err)])
    if hist.params is not None:
        save_checkpoint(hist.params, runs_dir / f"{rid}.params.json")
    events = [
        {
            "run_id": rid,
            "arm": arm.name,
            "iteration": e.iteration,
            "event": e.event,
            "position": e.position,
            "merits": e.merits,
            "param_count": e.param_count,
            "detail": e.detail,
        }
        for e in hist.events
    ]
    return rid, arm.name, seed, events, failure


def run_experiment(spec, out_dir, jobs=1):
    """Run every arm for every seed, then aggregate.

    Returns a summary dict with per-arm final means and the list of
    failures. Failed runs are reported, not raised.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "dataset.csv"
    if not data_path.exists():
        write_dataset(spec, out_dir)
    train_data, test_data = load_dataset(data_path)
    with open(out_dir / "config.json", "w") as fh:
        json.dump(spec.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    runs_dir = out_dir / "runs"
    runs_dir.mkdir(exist_ok=True)
    jobs_list = [(arm, seed, train_data, test_data, runs_dir) for arm in spec.arms for seed in spec.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, jobs_list))
    else:
        results = [_run_one(j) for j in jobs_list]

    events, failures = [], []
    for rid, arm, seed, ev, failure in results:
        if ev:
            events.extend(ev)
        if failure:
            failures.append({"run_id": rid, "arm": arm, "seed": seed, "error": failure})
            log.warning("run %s failed: %s", rid, failure)
    _write_events(out_dir, events)
    fail_path = out_dir / "failures.json"
    if failures:
        fail_path.write_text(json.dumps(failures, indent=1) + "\n")
    elif fail_path.exists():
        fail_path.unlink()
    aggregates = aggregate(out_dir, spec, exclude={f["run_id"] for f in failures})
    return summarize(spec, aggregates, failures)


def _write_events(out_dir, events):
    n_merits = max((len(e["merits"] or []) for e in events), default=0)
    with open(out_dir / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["run_id", "arm", "iteration", "event", "position"]
            + [f"merit_{i}" for i in range(n_merits)]
            + ["param_count"]
        )
        for e in events:
            merits = [fmt(m) for m in (e["merits"] or [])]
            merits += [""] * (n_merits - len(merits))
            pos = "" if e["position"] is None else e["position"]
            w.writerow([e["run_id"], e["arm"], e["iteration"], e["event"], pos] + merits + [e["param_count"]])
    with open(out_dir / "events.jsonl", "w") as fh:
        for e in events:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


def read_run(path):
    iters, loss, err = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            iters.append(int(row["iteration"]))
            loss.append(float(row["train_loss"]))
            err.append(float(row["test_error"]))
    return np.array(iters), np.array(loss), np.array(err)


def aggregate(out_dir, spec=None, exclude=()):
    """Mean loss and test error per iteration across seeds, one file per arm."""
    out_dir = Path(out_dir)
    if spec is None:
        spec = ExperimentSpec.from_dict(json.loads((out_dir / "config.json").read_text()))
    if not exclude and (out_dir / "failures.json").exists():
        exclude = {f["run_id"] for f in json.loads((out_dir / "failures.json").read_text())}
    agg_dir = out_dir / "aggregate"
    agg_dir.mkdir(exist_ok=True)
    result = {}
    for arm in spec.arms:
        runs = []
        for seed in spec.seeds:
            rid = run_id(arm.name, seed)
            path = out_dir / "runs" / f"{rid}.csv"
            if rid in exclude or not path.exists():
                continue
            runs.append(read_run(path))
        if not runs:
            continue
        iters = runs[0][0]
        if any(not np.array_equal(r[0], iters) for r in runs):
            raise ValueError(f"runs of arm {arm.name} disagree on recorded iterations")
        loss = np.mean([r[1] for r in runs], axis=0)
        err = np.mean([r[2] for r in runs], axis=0)
        with open(agg_dir / f"{arm.name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(AGG_HEADER)
            for row in zip(iters, loss, err):
                w.writerow([int(row[0]), fmt(row[1]), fmt(row[2]), len(runs)])
        result[arm.name] = {"iteration": iters, "train_loss": loss, "test_error": err, "n_runs": len(runs)}
    return result


def summarize(spec, aggregates, failures=()):
    arms = {}
    for name, a in aggregates.items():
        arms[name] = {
            "final_mean_train_loss": float(a["train_loss"][-1]),
            "final_mean_test_error": float(a["test_error"][-1]),
            "n_runs": a["n_runs"],
        }
    return {"experiment": spec.name, "arms": arms, "failures": list(failures), "ok": not failures}


def emit_plot_data(out_dir):
    """Write one ``iteration value`` file per (arm, quantity) plus a manifest."""
    out_dir = Path(out_dir)
    cfg_path = out_dir / "config.json"
    if not cfg_path.exists():
        raise FileNotFoundError(f"{cfg_path} missing; run the experiment first")
    spec = ExperimentSpec.from_dict(json.loads(cfg_path.read_text()))
    plot_dir = out_dir / "plot"
    plot_dir.mkdir(exist_ok=True)
    curves, markers = [], []
    for arm in spec.arms:
        path = out_dir / "aggregate" / f"{arm.name}.csv"
        if not path.exists():
            raise FileNotFoundError(f"aggregate for arm {arm.name!r} missing at {path}")
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        for quantity, col in (("loss", "mean_train_loss"), ("test_error", "mean_test_error")):
            fname = f"{arm.name}.{quantity}.dat"
            with open(plot_dir / fname, "w") as fh:
                fh.write("# iteration value\n")
                for r in rows:
                    fh.write(f"{r['iteration']} {r[col]}\n")
            curves.append({"arm": arm.name, "quantity": quantity, "file": fname})
        it = arm.options.get("insertion_iteration")
        if it is not None:
            markers.append({"arm": arm.name, "iteration": it, "event": "insert"})
    manifest = {"experiment": spec.name, "curves": curves, "markers": markers}
    (plot_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
