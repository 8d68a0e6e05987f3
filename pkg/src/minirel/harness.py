"""Experiment grids over (K, alpha, strategy, seed) and their reports.

Config files are JSON objects with these keys (defaults in brackets):

``dataset``      ``{"path": ..., "schema": {...}}`` for a CSV file, or
                 ``{"synthetic": "blobs" | "line" | "inapprox", ...generator args}``
``mode``         ``"kmeans"`` | ``"kmedians"`` [kmeans]
``K``            int or list of ints
``alpha``        float or list of floats (one sweep value per entry)
``beta_policy``  ``"sp"`` | ``"eqop"`` | ``"custom"`` [sp]; ``beta`` maps group -> int for custom
``card_lower``   [1]; ``card_upper`` [null = n]; ``balanced`` [false] sets l = ceil(0.8 n / K)
``strategies``   list of strategy names; ``"lloyd"`` adds the unconstrained baseline
``seeds``        int (seeds 0..s-1) or list [1]
``data_seed``    seed of the subsample [0]; ``subsample`` [null]
``time_limit``   seconds per run [null]; ``max_iter`` [100]; ``mip_gap`` [1e-3]
``node_limit``   branch-and-bound nodes per solve [null]; unlike time_limit it keeps runs reproducible
``prefix_kind``  ``"local"`` | ``"proportion"`` | ``"weighted"`` [local]
``warm_start``   ``"lloyd"`` | ``"kmeans++"`` | ``"random"`` [lloyd]
``workers``      parallel processes [1]
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import (ClusteringError, ClusteringProblem, Dataset, FairnessSpec, InvalidArgumentError,
                   compute_beta, fairness_metrics)
from .data import DatasetSchema, load_dataset
from .driver import DEFAULT_GAP, Strategy, minirel_run
from .lloyd import lloyd_run
from .models import InfeasibleError
from .synthetic import inapprox_instance, line_instance, make_group_blobs

BASELINE = "lloyd"
BEST, FAIREST = "lloyd_best", "lloyd_fairest"

REPORT_COLUMNS = ["run_id", "dataset", "mode", "n", "K", "alpha", "beta_policy", "strategy", "seed",
                  "status", "cost", "max_deviation", "norm_deviation", "violation_sum", "violation_max",
                  "norm_violation_sum", "norm_violation_max", "iterations", "error"]
TIMING_COLUMNS = ["run_id", "warm_time", "prefix_time", "assign_time", "center_time", "total_time"]
SUMMARY_METRICS = ["cost", "max_deviation", "norm_deviation", "violation_sum", "violation_max",
                   "norm_violation_sum", "norm_violation_max", "iterations"]


class ConfigError(ClusteringError):
    """Invalid experiment configuration."""


_KEYS = {"dataset", "mode", "K", "alpha", "beta_policy", "beta", "card_lower", "card_upper", "balanced",
         "strategies", "seeds", "data_seed", "subsample", "time_limit", "node_limit", "max_iter", "mip_gap",
         "prefix_kind", "warm_start", "workers", "name"}


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


@dataclass
class ExperimentConfig:
    dataset: dict
    K: list
    alpha: list
    strategies: list
    seeds: list = field(default_factory=lambda: [1])
    mode: str = "kmeans"
    beta_policy: str = "sp"
    beta: dict | None = None
    card_lower: int = 1
    card_upper: int | None = None
    balanced: bool = False
    data_seed: int = 0
    subsample: int | None = None
    time_limit: float | None = None
    node_limit: int | None = None
    max_iter: int = 100
    mip_gap: float = DEFAULT_GAP
    prefix_kind: str = "local"
    warm_start: str = "lloyd"
    workers: int = 1
    name: str | None = None

    def __post_init__(self):
        self.K = [int(k) for k in _as_list(self.K)]
        self.alpha = [float(a) for a in _as_list(self.alpha)]
        if isinstance(self.seeds, int):
            self.seeds = list(range(self.seeds))
        self.seeds = [int(s) for s in self.seeds]
        self.strategies = [str(s) for s in _as_list(self.strategies)]
        self.validate()

    def validate(self):
        if not isinstance(self.dataset, dict) or not ({"path", "synthetic"} & set(self.dataset)):
            raise ConfigError("dataset needs a 'path' or a 'synthetic' entry")
        if not self.K or any(k < 1 for k in self.K):
            raise ConfigError("K values must be positive")
        if not self.alpha or any(not 0 < a <= 1 for a in self.alpha):
            raise ConfigError("alpha values must lie in (0, 1]")
        if not self.strategies:
            raise ConfigError("no strategies configured")
        valid = {s.value for s in Strategy} | {BASELINE}
        bad = [s for s in self.strategies if s not in valid]
        if bad:
            raise ConfigError(f"unknown strategies {bad}; choose from {sorted(valid)}")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("strategies listed twice")
        if not self.seeds:
            raise ConfigError("no seeds configured")
        if self.mode not in ("kmeans", "kmedians"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.beta_policy not in ("sp", "eqop", "custom"):
            raise ConfigError(f"unknown beta policy {self.beta_policy!r}")
        if self.beta_policy == "custom" and not self.beta:
            raise ConfigError("custom beta policy needs a 'beta' mapping")
        if self.prefix_kind not in ("local", "proportion", "weighted"):
            raise ConfigError(f"unknown prefix_kind {self.prefix_kind!r}")
        if self.warm_start not in ("lloyd", "kmeans++", "random"):
            raise ConfigError(f"unknown warm_start {self.warm_start!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.node_limit is not None and self.node_limit < 1:
            raise ConfigError("node_limit must be positive")
        if self.subsample is not None and self.subsample < 1:
            raise ConfigError("subsample must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("dataset", "K", "alpha", "strategies"):
            if key not in d:
                raise ConfigError(f"config lacks {key!r}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        cfg = cls.from_dict(d)
        base = os.path.dirname(os.path.abspath(path))
        if "path" in cfg.dataset and not os.path.isabs(cfg.dataset["path"]):
            cfg.dataset = dict(cfg.dataset, path=os.path.join(base, cfg.dataset["path"]))
        return cfg


def load_config_data(dataset: dict, data_seed: int = 0, subsample: int | None = None):
    """Dataset and GroupStructure described by a config ``dataset`` entry."""
    if "synthetic" in dataset:
        kind = dataset["synthetic"]
        args = {k: v for k, v in dataset.items() if k not in ("synthetic", "name")}
        if kind == "blobs":
            if "group_shares" in args:
                args["group_shares"] = tuple(tuple(s) for s in args["group_shares"])
            try:
                ds, groups = make_group_blobs(**args)
            except TypeError as exc:
                raise ConfigError(f"synthetic blobs: {exc}") from exc
        elif kind == "line":
            ds, groups = line_instance()
        elif kind == "inapprox":
            ds, groups, _ = inapprox_instance(**args)
        else:
            raise ConfigError(f"unknown synthetic data set {kind!r}")
        if subsample is not None:
            if subsample > ds.n:
                raise ConfigError(f"subsample {subsample} exceeds n={ds.n}")
            keep = np.sort(np.random.default_rng(data_seed).choice(ds.n, size=subsample, replace=False))
            ds, groups = Dataset(ds.points[keep]), groups.subset(keep)
        return ds, groups
    if "schema" not in dataset:
        raise ConfigError("CSV dataset needs a 'schema'")
    try:
        schema = DatasetSchema.from_dict(dataset["schema"])
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    loaded = load_dataset(dataset["path"], schema, data_seed, subsample)
    return loaded.dataset, loaded.groups


def dataset_name(dataset: dict) -> str:
    if "name" in dataset:
        return str(dataset["name"])
    if "synthetic" in dataset:
        return f"synthetic-{dataset['synthetic']}"
    return os.path.splitext(os.path.basename(dataset["path"]))[0]


def make_spec(cfg: ExperimentConfig, groups, K: int, alpha: float, n: int) -> FairnessSpec:
    custom = None
    if cfg.beta_policy == "custom":
        custom = [int(cfg.beta.get(g, 0)) for g in groups.groups]
    beta = compute_beta(cfg.beta_policy, alpha, K, groups, custom)
    lower = cfg.card_lower
    if cfg.balanced:
        lower = max(lower, math.ceil(0.8 * n / K))
    return FairnessSpec(alpha, beta, lower, cfg.card_upper)


@dataclass
class RunResult:
    row: dict
    timing: dict
    assignment: list | None = None
    centers: list | None = None
    y: list | None = None


@dataclass
class Report:
    rows: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    assignments: dict = field(default_factory=dict)


def _run_id(K, alpha, strategy, seed) -> str:
    return f"K{K}_a{alpha!r}_{strategy}_s{seed}"


def _metrics_row(assignment, spec, groups, K, y):
    m = fairness_metrics(assignment, spec, groups, K, y)
    return m.as_dict(), m.y


def run_one(cfg: ExperimentConfig, K: int, alpha: float, strategy: str, seed: int, data=None) -> RunResult:
    """Execute one grid cell; failures are recorded in the row."""
    ds, groups = data if data is not None else load_config_data(cfg.dataset, cfg.data_seed, cfg.subsample)
    run_id = _run_id(K, alpha, strategy, seed)
    row = {c: "" for c in REPORT_COLUMNS}
    row.update(run_id=run_id, dataset=dataset_name(cfg.dataset), mode=cfg.mode, n=ds.n, K=K, alpha=alpha,
               beta_policy=cfg.beta_policy, strategy=strategy, seed=seed)
    timing = {c: "" for c in TIMING_COLUMNS}
    timing["run_id"] = run_id
    t0 = time.perf_counter()
    result = RunResult(row, timing)
    try:
        problem = ClusteringProblem(ds, groups, K, cfg.mode)
        spec = make_spec(cfg, groups, K, alpha, ds.n)
        if strategy == BASELINE:
            sol = lloyd_run(problem, rng=seed)
            y = None
            iters = sol.info["n_iter"]
        else:
            sol, trace = minirel_run(problem, spec, strategy, rng=seed, max_iter=cfg.max_iter,
                                     time_limit=cfg.time_limit, node_limit=cfg.node_limit,
                                     prefix_kind=cfg.prefix_kind,
                                     mip_gap=cfg.mip_gap, warm_mode=cfg.warm_start)
            y = sol.y
            iters = trace.n_iter
            timing.update(warm_time=sol.info["warm_time"], prefix_time=trace.prefix_time,
                          assign_time=sum(r.timings["assign"] for r in trace.iterations),
                          center_time=sum(r.timings["center"] for r in trace.iterations))
        metrics, y_used = _metrics_row(sol.assignment, spec, groups, K, y)
        row.update(metrics)
        row.update(status="ok" if strategy == BASELINE else trace.status, cost=sol.cost, iterations=iters)
        result.assignment = [int(a) for a in sol.assignment]
        result.centers = [[float(v) for v in c] for c in sol.centers]
        result.y = y_used.astype(int).tolist()
    except InfeasibleError as exc:
        row.update(status="infeasible", error=str(exc))
    except ClusteringError as exc:
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    timing["total_time"] = time.perf_counter() - t0
    return result


def _fairest_key(row):
    return (row["max_deviation"], row["violation_sum"], row["cost"], row["seed"])


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Run the full grid in (K, alpha, strategy, seed) order and append, for each
    (K, alpha) with the baseline, its lowest-cost and fairest seeds."""
    data = load_config_data(cfg.dataset, cfg.data_seed, cfg.subsample)
    cells = [(K, a, s, seed) for K in cfg.K for a in cfg.alpha for s in cfg.strategies for seed in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(run_one, cfg, *cell) for cell in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_one(cfg, *cell, data=data) for cell in cells]
    report = Report()
    by_config = {}
    for res in results:
        report.rows.append(res.row)
        report.timings.append(res.timing)
        if res.assignment is not None:
            report.assignments[res.row["run_id"]] = {
                "run_id": res.row["run_id"], "assignment": res.assignment, "centers": res.centers,
                "y": res.y, "cost": res.row["cost"], "K": res.row["K"], "alpha": res.row["alpha"],
                "strategy": res.row["strategy"], "seed": res.row["seed"]}
        by_config.setdefault((res.row["K"], res.row["alpha"]), []).append(res.row)
    for K in cfg.K:
        for a in cfg.alpha:
            base = [r for r in by_config.get((K, a), []) if r["strategy"] == BASELINE and r["status"] == "ok"]
            if not base:
                continue
            for label, pick in ((BEST, min(base, key=lambda r: (r["cost"], r["seed"]))),
                                (FAIREST, min(base, key=_fairest_key))):
                row = dict(pick, strategy=label, run_id=_run_id(K, a, label, pick["seed"]))
                report.rows.append(row)
    return report


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def summarize(rows) -> list:
    """Mean and sample standard deviation per (K, alpha, strategy) over successful runs.

    The standard deviation is null for a single run."""
    groups = {}
    for r in rows:
        if r["status"] in ("infeasible", "error") or r["strategy"] in (BEST, FAIREST):
            continue
        groups.setdefault((r["K"], r["alpha"], r["strategy"]), []).append(r)
    out = []
    for (K, a, s), rs in groups.items():
        entry = {"K": K, "alpha": a, "strategy": s, "runs": len(rs)}
        for m in SUMMARY_METRICS:
            vals = [float(r[m]) for r in rs]
            entry[m] = {"mean": statistics.fmean(vals),
                        "std": statistics.stdev(vals) if len(vals) > 1 else None}
        out.append(entry)
    return out


def _write(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_report(report: Report, out_dir) -> dict:
    """Write ``report.csv``, ``summary.json``, ``timings.csv`` and one
    ``assignments/<run_id>.json`` per successful run. All files except
    ``timings.csv`` depend only on the results, so re-emitting is byte-identical."""
    try:
        os.makedirs(os.path.join(out_dir, "assignments"), exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc.strerror or exc}") from exc
    paths = {"report": os.path.join(out_dir, "report.csv"),
             "timings": os.path.join(out_dir, "timings.csv"),
             "summary": os.path.join(out_dir, "summary.json")}
    _write(paths["report"], _csv_text(report.rows, REPORT_COLUMNS))
    _write(paths["timings"], _csv_text(report.timings, TIMING_COLUMNS))
    summary = {"runs": len(report.rows), "configs": summarize(report.rows)}
    _write(paths["summary"], json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for run_id, payload in report.assignments.items():
        _write(os.path.join(out_dir, "assignments", f"{run_id}.json"),
               json.dumps(payload, sort_keys=True) + "\n")
    return paths


def load_assignment(path) -> dict:
    """Read an emitted assignment file; arrays come back as numpy arrays."""
    with open(path) as fh:
        d = json.load(fh)
    d["assignment"] = np.asarray(d["assignment"], dtype=np.int64)
    d["centers"] = np.asarray(d["centers"], dtype=float)
    if d.get("y") is not None:
        d["y"] = np.asarray(d["y"], dtype=bool)
    return d


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
