"""Config-driven experiment runner: dataset x noise x valuators x tasks -> CSV rows."""

from __future__ import annotations

import csv
import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli

from . import evaluation as ev
from . import valuators as vl
from .dataset import (NoiseRecord, inject_feature_noise, inject_label_noise, load_csv,
                      split_by_count, synth_blobs, synth_friedman)
from .learners import LearnerSpec
from .marginal import ConvergenceConfig, run_tmc
from .utility import SetUtility, UtilitySpec

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["experiment_id", "dataset", "valuator", "seed", "noise_kind", "noise_rate",
                   "task", "metric_name", "metric_value", "runtime_s"]
VALUES_COLUMNS = ["experiment_id", "valuator", "seed", "point_index", "value", "is_noisy"]
CURVES_COLUMNS = ["experiment_id", "valuator", "seed", "task", "k", "perf"]

TASKS = ("detect", "removal", "addition", "runtime")
METRICS = ("accuracy", "neg_mse")
NOISE_KINDS = ("label_flip", "feature_gauss", "none")

# valuator name -> allowed hyperparameters
VALUATORS = {
    "loo": set(),
    "data_shapley": set(),
    "beta_shapley": {"alpha", "beta"},
    "knn_shapley": {"k"},
    "volume_shapley": set(),
    "data_banzhaf": {"n_subsets"},
    "ame": {"n_subsets", "rates"},
    "influence_subset": {"n_subsets"},
    "lava": {"label_weight", "epsilon", "tol", "max_iters"},
    "data_oob": {"B", "max_depth", "min_split"},
    "random": set(),
}

_DATASET_KEYS = {
    "blobs": {"kind", "n", "d", "classes", "sep", "seed"},
    "friedman": {"kind", "n", "seed"},
    "csv": {"kind", "path", "label_column", "task"},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass(frozen=True)
class ValuatorConfig:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    valuators: tuple
    split: tuple = (1000, 100, 3000)
    noise_kind: str = "label_flip"
    noise_rate: float = 0.2
    noise_sigma: float = 2.0
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    metric: str = "accuracy"
    tasks: tuple = ("detect",)
    seeds: tuple = (0,)
    step: int = 5
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    output_dir: str = "results"
    workers: int = 1
    experiment_id: str = "experiment"

    @property
    def dataset_name(self) -> str:
        ds = self.dataset
        if ds["kind"] == "csv":
            return Path(ds["path"]).stem
        if ds["kind"] == "friedman":
            return f"friedman-{ds['n']}"
        return f"blobs-{ds['n']}x{ds['d']}-c{ds['classes']}"


def _reject_unknown(section: str, given: dict, allowed: set):
    for key in given:
        if key not in allowed:
            where = f"{section}.{key}" if section else key
            raise ConfigError(f"unknown config key {where!r}")


def _choice(key: str, value, allowed):
    if value not in allowed:
        raise ConfigError(f"invalid value {value!r} for {key!r}; expected one of {list(allowed)}")
    return value


def config_from_dict(raw: dict, experiment_id: str = "experiment") -> ExperimentConfig:
    """Validate a parsed TOML document and fill defaults."""
    top = {"dataset", "split", "noise", "learner", "convergence", "valuator", "tasks", "seeds",
           "metric", "step", "output_dir", "workers"}
    _reject_unknown("", raw, top)
    if "dataset" not in raw:
        raise ConfigError("missing [dataset] section")
    dataset = dict(raw["dataset"])
    kind = _choice("dataset.kind", dataset.get("kind", "blobs"), _DATASET_KEYS)
    _reject_unknown("dataset", dataset, _DATASET_KEYS[kind])
    if kind == "blobs":
        dataset = {"kind": "blobs", "n": 4100, "d": 10, "classes": 2, "sep": 2.0, "seed": None,
                   **dataset}
    elif kind == "friedman":
        dataset = {"kind": "friedman", "n": 4100, "seed": None, **dataset}
    else:
        if "path" not in dataset:
            raise ConfigError("missing key 'dataset.path'")
        dataset = {"kind": "csv", "label_column": -1, "task": "classification", **dataset}
        _choice("dataset.task", dataset["task"], ("classification", "regression"))

    split = dict(raw.get("split", {}))
    _reject_unknown("split", split, {"train", "valid", "test"})
    split_sizes = (int(split.get("train", 1000)), int(split.get("valid", 100)),
                   int(split.get("test", 3000)))

    noise = dict(raw.get("noise", {}))
    _reject_unknown("noise", noise, {"kind", "rate", "sigma"})
    noise_kind = _choice("noise.kind", noise.get("kind", "label_flip"), NOISE_KINDS)
    rate = float(noise.get("rate", 0.2))
    if not 0 <= rate <= 1:
        raise ConfigError(f"invalid value {rate!r} for 'noise.rate'; expected a fraction in [0, 1]")
    sigma = float(noise.get("sigma", 2.0))

    learner_raw = dict(raw.get("learner", {}))
    learner_kind = _choice("learner.kind", learner_raw.pop("kind", "logistic"),
                           ("logistic", "tree", "knn", "constant"))
    try:
        learner = LearnerSpec(learner_kind, learner_raw)
    except ValueError as exc:
        raise ConfigError(f"learner: {exc}") from None

    conv_raw = dict(raw.get("convergence", {}))
    _reject_unknown("convergence", conv_raw, set(ConvergenceConfig.__dataclass_fields__))
    try:
        convergence = ConvergenceConfig(**conv_raw)
    except ValueError as exc:
        raise ConfigError(f"convergence: {exc}") from None

    vraw = raw.get("valuator", [])
    if isinstance(vraw, dict):
        vraw = [vraw]
    if not vraw:
        raise ConfigError("need at least one [[valuator]] entry")
    valuators = []
    for entry in vraw:
        entry = dict(entry)
        if "name" not in entry:
            raise ConfigError("missing key 'valuator.name'")
        name = _choice("valuator.name", entry.pop("name"), VALUATORS)
        _reject_unknown(f"valuator.{name}", entry, VALUATORS[name])
        valuators.append(ValuatorConfig(name, entry))
    names = [v.name for v in valuators]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate valuator names in 'valuator'")

    tasks = tuple(raw.get("tasks", ["detect"]))
    if not tasks:
        raise ConfigError("'tasks' must be nonempty")
    for t in tasks:
        _choice("tasks", t, TASKS)
    seeds = tuple(int(s) for s in raw.get("seeds", [0]))
    if not seeds:
        raise ConfigError("'seeds' must be nonempty")
    metric = _choice("metric", raw.get("metric", "accuracy"), METRICS)
    step = int(raw.get("step", 5))
    if step < 1:
        raise ConfigError("'step' must be >= 1")
    workers = int(raw.get("workers", 1))
    if workers < 1:
        raise ConfigError("'workers' must be >= 1")
    return ExperimentConfig(dataset, tuple(valuators), split_sizes, noise_kind, rate, sigma,
                            learner, metric, tasks, seeds, step, convergence,
                            str(raw.get("output_dir", "results")), workers, experiment_id)


def parse_config(path) -> ExperimentConfig:
    """Read a TOML experiment config; unknown keys are rejected."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    data = path.read_bytes()
    try:
        raw = tomli.loads(data.decode("utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, hashlib.sha256(data).hexdigest()[:12])


def stream_seed(*parts) -> int:
    """Stable 64-bit seed derived from the string forms of ``parts``."""
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class EvalReport:
    summary: list = field(default_factory=list)   # dicts keyed by SUMMARY_COLUMNS
    values: list = field(default_factory=list)    # dicts keyed by VALUES_COLUMNS
    curves: list = field(default_factory=list)    # dicts keyed by CURVES_COLUMNS
    errors: list = field(default_factory=list)    # (valuator, seed, message)

    def extend(self, other: "EvalReport"):
        self.summary += other.summary
        self.values += other.values
        self.curves += other.curves
        self.errors += other.errors


@dataclass
class _Prepared:
    ds: object
    split: object
    noise: NoiseRecord | None


def build_data(cfg: ExperimentConfig, seed: int) -> _Prepared:
    spec = cfg.dataset
    data_seed = spec.get("seed")
    data_seed = stream_seed(seed, "dataset") if data_seed is None else data_seed
    if spec["kind"] == "blobs":
        ds = synth_blobs(spec["n"], spec["d"], spec["classes"], spec["sep"], data_seed)
    elif spec["kind"] == "friedman":
        ds = synth_friedman(spec["n"], data_seed)
    else:
        ds = load_csv(spec["path"], spec["label_column"], spec["task"])
    split = split_by_count(ds, *cfg.split, stream_seed(seed, "split"))
    noise = None
    if cfg.noise_kind == "label_flip":
        ds, noise = inject_label_noise(ds, split, cfg.noise_rate, stream_seed(seed, "noise"))
    elif cfg.noise_kind == "feature_gauss":
        ds, noise = inject_feature_noise(ds, split, cfg.noise_rate, cfg.noise_sigma,
                                         stream_seed(seed, "noise"))
    return _Prepared(ds, split, noise)


def compute_values(cfg: ExperimentConfig, vcfg: ValuatorConfig, data: _Prepared, seed: int):
    """Run one valuator on prepared data; returns a :class:`ValueVector`."""
    ds, split = data.ds, data.split
    m = len(split.train)
    p = dict(vcfg.params)
    rs = stream_seed(seed, vcfg.name, "values")

    def utility():
        return SetUtility(UtilitySpec.on(ds, split.valid, cfg.metric, cfg.learner), ds, split)

    name = vcfg.name
    if name == "loo":
        return vl.loo(utility(), m)
    if name in ("data_shapley", "beta_shapley"):
        acc = run_tmc(utility(), m, cfg.convergence, rs)
        if name == "data_shapley":
            return vl.data_shapley(acc)
        return vl.beta_shapley(acc, p.get("alpha", 4.0), p.get("beta", 1.0))
    if name == "knn_shapley":
        return vl.knn_shapley(ds, split, p.get("k"))
    if name == "volume_shapley":
        return vl.volume_shapley(ds, split, cfg.convergence, rs)
    if name == "data_banzhaf":
        return vl.data_banzhaf(utility(), m, p.get("n_subsets", 1000), rs)
    if name == "ame":
        return vl.ame(utility(), m, p.get("n_subsets", 1000), p.get("rates", vl.AME_RATES), rs)
    if name == "influence_subset":
        return vl.influence_subset(utility(), m, p.get("n_subsets", 1000), rs)
    if name == "lava":
        return vl.lava(ds, split, **p)
    if name == "data_oob":
        return vl.data_oob(ds, split, seed=rs, **p)
    if name == "random":
        return vl.random_baseline(m, rs)
    raise ConfigError(f"unknown valuator {name!r}")


def _row(cfg, data, vname, seed, task, metric_name, metric_value, runtime):
    return {"experiment_id": cfg.experiment_id, "dataset": cfg.dataset_name, "valuator": vname,
            "seed": seed, "noise_kind": cfg.noise_kind,
            "noise_rate": cfg.noise_rate if cfg.noise_kind != "none" else 0.0,
            "task": task, "metric_name": metric_name, "metric_value": metric_value,
            "runtime_s": runtime}


def run_cell(cfg: ExperimentConfig, vcfg: ValuatorConfig, seed: int, data: _Prepared) -> EvalReport:
    """One (valuator, seed) cell; any failure becomes an error row."""
    rep = EvalReport()
    try:
        values, runtime = ev.measure_runtime(compute_values, cfg, vcfg, data, seed)
        train = data.split.train
        noisy = data.noise.mask(train) if data.noise is not None else np.zeros(len(train), bool)
        for i, (v, flag) in enumerate(zip(values.values, noisy)):
            rep.values.append({"experiment_id": cfg.experiment_id, "valuator": vcfg.name,
                               "seed": seed, "point_index": i, "value": float(v),
                               "is_noisy": int(flag)})
        U_test = UtilitySpec.on(data.ds, data.split.test, cfg.metric, cfg.learner)
        for task in cfg.tasks:
            if task == "detect":
                if data.noise is None or not data.noise.affected:
                    raise ValueError("detect task needs injected noise")
                res = ev.detect(values, data.noise, train, stream_seed(seed, vcfg.name, "detect"))
                rep.summary.append(_row(cfg, data, vcfg.name, seed, task, "f1", res.f1, runtime))
            elif task in ("removal", "addition"):
                curve_fn = ev.point_removal_curve if task == "removal" else ev.point_addition_curve
                curve = curve_fn(values, U_test, data.ds, data.split, cfg.step)
                for k, perf in curve.grid:
                    rep.curves.append({"experiment_id": cfg.experiment_id, "valuator": vcfg.name,
                                       "seed": seed, "task": task, "k": k, "perf": perf})
                rep.summary.append(_row(cfg, data, vcfg.name, seed, task, f"{task}_summary",
                                        curve.summary, runtime))
            else:
                rep.summary.append(_row(cfg, data, vcfg.name, seed, task, "runtime_s", runtime,
                                        runtime))
    except Exception as exc:  # noqa: BLE001 - a failed cell must not abort the matrix
        logger.error("cell (%s, seed %d) failed: %s", vcfg.name, seed, exc)
        rep = EvalReport()
        rep.summary.append(_row(cfg, data, vcfg.name, seed, "error", "error", float("nan"),
                                float("nan")))
        rep.errors.append((vcfg.name, seed, f"{type(exc).__name__}: {exc}"))
    return rep


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> EvalReport:
    """Run every (valuator, seed) cell and merge reports in (valuator, seed) order.

    Output is identical for any ``workers`` count.
    """
    workers = cfg.workers if workers is None else workers
    report = EvalReport()
    prepared = {}
    for seed in cfg.seeds:
        try:
            prepared[seed] = build_data(cfg, seed)
        except Exception as exc:  # noqa: BLE001
            logger.error("seed %d: data preparation failed: %s", seed, exc)
            for v in cfg.valuators:
                report.summary.append(_row(cfg, None, v.name, seed, "error", "error",
                                           float("nan"), float("nan")))
                report.errors.append((v.name, seed, f"{type(exc).__name__}: {exc}"))
    cells = [(v, s) for v in sorted(cfg.valuators, key=lambda v: v.name)
             for s in cfg.seeds if s in prepared]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: run_cell(cfg, c[0], c[1], prepared[c[1]]), cells))
    else:
        parts = [run_cell(cfg, v, s, prepared[s]) for v, s in cells]
    for part in parts:
        report.extend(part)
    _sort(report)
    return report


_TASK_ORDER = {t: i for i, t in enumerate(TASKS + ("error",))}


def _sort(report: EvalReport):
    report.summary.sort(key=lambda r: (r["valuator"], r["seed"], _TASK_ORDER[r["task"]]))
    report.values.sort(key=lambda r: (r["valuator"], r["seed"], r["point_index"]))
    report.curves.sort(key=lambda r: (r["valuator"], r["seed"], _TASK_ORDER[r["task"]], r["k"]))


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write(path: Path, columns, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def write_csv(report: EvalReport, out_dir) -> list:
    """Write ``summary.csv``, ``values.csv`` and ``curves.csv`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    _sort(report)
    paths = [out / "summary.csv", out / "values.csv", out / "curves.csv"]
    _write(paths[0], SUMMARY_COLUMNS, report.summary)
    _write(paths[1], VALUES_COLUMNS, report.values)
    _write(paths[2], CURVES_COLUMNS, report.curves)
    return paths


def _parse(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def read_csv(in_dir) -> EvalReport:
    """Load a report previously written by :func:`write_csv`."""
    d = Path(in_dir)
    rep = EvalReport()
    for name, target in (("summary.csv", rep.summary), ("values.csv", rep.values),
                         ("curves.csv", rep.curves)):
        path = d / name
        if not path.exists():
            continue
        with path.open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                target.append({k: _parse(v) for k, v in row.items()})
    for row in rep.summary:
        row["valuator"], row["task"] = str(row["valuator"]), str(row["task"])
    return rep


def with_tasks(cfg: ExperimentConfig, tasks) -> ExperimentConfig:
    return replace(cfg, tasks=tuple(tasks))
