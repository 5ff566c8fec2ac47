"""Scenario configuration, seeded trials and benchmark aggregation.

A trial plays both sides: it builds data, trains the server's origin model,
lets the configured server behaviour decide what really gets forgotten,
produces the unlearned model, and then runs the auditor's metrics.  Ground
truth is recorded before any metric runs and is only consulted for scoring.
"""

from __future__ import annotations

import copy
from contextlib import contextmanager
import json
import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import nnet
from .adversary import ServerBehavior, apply_behavior
from .datasets import (
    LabeledDataset,
    UnlearnRequest,
    gen_synthetic,
    load_idx,
    random_request,
    split_per_class,
)
from .errors import CalibrationError, ConfigError, EmptyReport, InfeasibleScenario, InvalidInput
from .metrics import (
    build_unlearning_measurement,
    deviation,
    verify_class,
    verify_sample,
    verify_volume,
)
from .sensitivity import AuxiliaryData
from .unlearning import (
    AnyModel,
    amnesiac_unlearn,
    derive_seed,
    fit,
    retrain_unlearn,
    sisa_train,
    sisa_unlearn,
)

METRICS = ("class", "volume", "sample")
FRAMEWORKS = ("retrain", "sisa", "amnesiac")

# stage labels for per-trial seed derivation
_DATA, _SPLIT, _REQUEST, _BEHAVIOR, _MODEL, _PROBE, _AMNESIAC, _SHADOW = range(1, 9)
_TAU_OFFSET = 1_000_000


def _per_class(value, k: int, name: str) -> list[int]:
    if isinstance(value, int):
        return [value] * k
    value = [int(v) for v in value]
    if len(value) != k:
        raise ConfigError(f"{name} must be an integer or a list of {k} integers")
    return value


@dataclass
class DatasetConfig:
    kind: str = "synthetic"
    num_classes: int = 5
    per_class: Any = 500
    dim: int = 8
    separation: float = 6.0
    sigma: float = 1.0
    test_per_class: int = 100
    pool_per_class: Any = 0
    images: str | None = None
    labels: str | None = None

    def train_counts(self) -> list[int]:
        return _per_class(self.per_class, self.num_classes, "dataset.per_class")

    def pool_counts(self) -> list[int]:
        return _per_class(self.pool_per_class, self.num_classes, "dataset.pool_per_class")


@dataclass
class RequestConfig:
    classes: Any = 1
    volume: Any = "all"


@dataclass
class MetricParams:
    threshold: float = 0.01
    tau: float | None = None
    tau_runs: int = 20
    n: int = 5
    batch_volume: int = 100
    shadow_base: Any = 0
    probe_size: int = 50
    probe_alpha: float = 0.01
    probe_passes: int = 1
    volume_probe: str = "test"
    lazy_ratio: float = 0.75


@dataclass
class ScenarioConfig:
    name: str = "default"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    hidden_layers: tuple[int, ...] = (32, 16)
    train: nnet.TrainConfig = field(default_factory=lambda: nnet.TrainConfig(0.05, 20, 32, 0))
    framework: str = "retrain"
    sisa_k: int = 5
    behaviors: tuple[ServerBehavior, ...] = (ServerBehavior("honest"), ServerBehavior("neglecting"))
    request: RequestConfig = field(default_factory=RequestConfig)
    metrics: tuple[str, ...] = ("class",)
    params: MetricParams = field(default_factory=MetricParams)
    trials: int = 40
    master_seed: int = 0
    sweep: dict | None = None

    def validate(self) -> "ScenarioConfig":
        d = self.dataset
        if d.kind not in ("synthetic", "idx"):
            raise ConfigError(f"unknown dataset kind {d.kind!r}")
        if d.kind == "idx" and not (d.images and d.labels):
            raise ConfigError("idx datasets need 'images' and 'labels' paths")
        if d.num_classes < 2:
            raise ConfigError("need at least two classes")
        train = d.train_counts()
        pool = d.pool_counts()
        if any(n < 1 for n in train):
            raise ConfigError("every class needs at least one training sample")
        if any(n < 0 for n in pool) or d.test_per_class < 0:
            raise ConfigError("pool and test counts must be nonnegative")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.framework not in FRAMEWORKS:
            raise ConfigError(f"unknown framework {self.framework!r}")
        if self.framework == "sisa" and self.sisa_k < 1:
            raise ConfigError("sisa_k must be >= 1")
        if not self.behaviors:
            raise ConfigError("at least one server behaviour is required")
        for m in self.metrics:
            if m not in METRICS:
                raise ConfigError(f"unknown metric {m!r}")
        p = self.params
        if p.probe_size < 1 or p.probe_alpha <= 0 or p.probe_passes < 1:
            raise ConfigError("probe_size, probe_alpha and probe_passes must be positive")
        if d.test_per_class < p.probe_size:
            raise ConfigError("test_per_class must be at least probe_size")
        if "volume" in self.metrics:
            if p.n < 2 or p.batch_volume < 1:
                raise ConfigError("volume metric needs n >= 2 and batch_volume >= 1")
            if p.volume_probe not in ("test", "target"):
                raise ConfigError("volume_probe must be 'test' or 'target'")
            if not (p.shadow_base == "anchored" or (isinstance(p.shadow_base, int) and p.shadow_base >= 0)):
                raise ConfigError("shadow_base must be 'anchored' or a nonnegative integer")
        if "sample" in self.metrics and p.tau is None and p.tau_runs < 10:
            raise ConfigError("tau calibration needs at least 10 honest runs")
        r = self.request
        if isinstance(r.classes, int):
            if not 1 <= r.classes <= d.num_classes:
                raise ConfigError("request.classes out of range")
        elif not r.classes or any(not 0 <= int(c) < d.num_classes for c in r.classes):
            raise ConfigError("request.classes lists an unknown class")
        vols = r.volume if isinstance(r.volume, list) else [r.volume]
        for v in vols:
            if v != "all" and not (isinstance(v, int) and v >= 1):
                raise ConfigError("request.volume must be 'all', a positive integer or a list of them")
            if isinstance(v, int):
                chosen = range(d.num_classes) if isinstance(r.classes, int) else r.classes
                if all(v > train[int(c)] for c in chosen):
                    raise ConfigError(f"request volume {v} exceeds every eligible class")
        if self.sweep is not None:
            if "param" not in self.sweep or not self.sweep.get("values"):
                raise ConfigError("sweep needs 'param' and a nonempty 'values' list")
        return self

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "dataset": {k: v for k, v in vars(self.dataset).items() if v is not None},
            "hidden_layers": list(self.hidden_layers),
            "train": self.train.to_dict(),
            "framework": self.framework,
            "sisa_k": self.sisa_k,
            "behaviors": [b.to_dict() for b in self.behaviors],
            "request": dict(vars(self.request)),
            "metrics": list(self.metrics),
            "params": dict(vars(self.params)),
            "trials": self.trials,
            "master_seed": self.master_seed,
        }
        if self.sweep is not None:
            d["sweep"] = self.sweep
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioConfig":
        try:
            known = {"name", "dataset", "hidden_layers", "train", "framework", "sisa_k", "behaviors",
                     "request", "metrics", "params", "trials", "master_seed", "sweep"}
            unknown = set(d) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            cfg = cls(
                name=str(d.get("name", "default")),
                dataset=DatasetConfig(**d.get("dataset", {})),
                hidden_layers=tuple(int(h) for h in d.get("hidden_layers", (32, 16))),
                train=nnet.TrainConfig.from_dict(d["train"]) if "train" in d else nnet.TrainConfig(0.05, 20, 32, 0),
                framework=str(d.get("framework", "retrain")),
                sisa_k=int(d.get("sisa_k", 5)),
                behaviors=tuple(ServerBehavior.from_dict(b) for b in d.get("behaviors", [{"kind": "honest"}, {"kind": "neglecting"}])),
                request=RequestConfig(**d.get("request", {})),
                metrics=tuple(d.get("metrics", ("class",))),
                params=MetricParams(**d.get("params", {})),
                trials=int(d.get("trials", 40)),
                master_seed=int(d.get("master_seed", 0)),
                sweep=d.get("sweep"),
            )
        except ConfigError:
            raise
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid scenario config: {exc}") from exc
        return cfg.validate()

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(raw)

    def with_override(self, dotted: str, value) -> "ScenarioConfig":
        """Copy of this config with one dotted key replaced, e.g. ``request.volume``."""
        d = copy.deepcopy(self.to_dict())
        d.pop("sweep", None)
        node = d
        keys = dotted.split(".")
        for k in keys[:-1]:
            if k not in node or not isinstance(node[k], dict):
                raise ConfigError(f"cannot sweep unknown parameter {dotted!r}")
            node = node[k]
        node[keys[-1]] = value
        return ScenarioConfig.from_dict(d)


# -- trial -------------------------------------------------------------------


@dataclass
class TrialData:
    train: LabeledDataset
    test: LabeledDataset
    pool: LabeledDataset


def build_data(cfg: ScenarioConfig, seed: int) -> TrialData:
    d = cfg.dataset
    train_n = d.train_counts()
    pool_n = d.pool_counts()
    k = d.num_classes
    if d.kind == "synthetic":
        totals = [t + p + d.test_per_class for t, p in zip(train_n, pool_n)]
        full = gen_synthetic(k, totals, d.dim, d.separation, derive_seed(seed, _DATA), d.sigma)
    else:
        full = load_idx(d.images, d.labels, k)
    test, rest = split_per_class(full, {c: d.test_per_class for c in range(k)}, derive_seed(seed, _SPLIT, 0))
    pool, rest = split_per_class(rest, {c: pool_n[c] for c in range(k)}, derive_seed(seed, _SPLIT, 1))
    train, _ = split_per_class(rest, {c: train_n[c] for c in range(k)}, derive_seed(seed, _SPLIT, 2))
    return TrialData(train, test, pool)


def draw_request(cfg: ScenarioConfig, data: LabeledDataset, seed: int) -> UnlearnRequest:
    rng = np.random.default_rng(derive_seed(seed, _REQUEST, 0))
    r = cfg.request
    counts = data.class_counts()
    vol_choices = r.volume if isinstance(r.volume, list) else [r.volume]
    vol = vol_choices[int(rng.integers(len(vol_choices)))]
    if isinstance(r.classes, int):
        eligible = [c for c in range(data.num_classes) if vol == "all" or counts[c] >= vol]
        if len(eligible) < r.classes:
            raise InfeasibleScenario("not enough classes hold the requested volume")
        classes = sorted(int(c) for c in rng.choice(eligible, size=r.classes, replace=False))
    else:
        classes = sorted(int(c) for c in r.classes)
    volumes = {c: counts[c] if vol == "all" else int(vol) for c in classes}
    return random_request(data, volumes, derive_seed(seed, _REQUEST, 1))


def _train_origin(cfg: ScenarioConfig, spec: nnet.ModelSpec, data: LabeledDataset, seed: int) -> AnyModel:
    if cfg.framework == "sisa":
        return sisa_train(data, cfg.sisa_k, spec, cfg.train, seed)
    return fit(data, spec, cfg.train, seed)


def _unlearn(cfg: ScenarioConfig, spec, data, model_o: AnyModel, request: UnlearnRequest, seed: int) -> AnyModel:
    if cfg.framework == "sisa":
        return sisa_unlearn(model_o, request)
    if cfg.framework == "amnesiac":
        return amnesiac_unlearn(model_o, data, request, cfg.train, derive_seed(seed, _AMNESIAC)).model_u
    return retrain_unlearn(data, request, spec, cfg.train, seed, model_o=model_o).model_u


def _probe_aux(data: LabeledDataset, classes, count: int, seed: int, source: str) -> AuxiliaryData:
    return AuxiliaryData.sample(data, classes, count, seed, source)


def _target_aux(train: LabeledDataset, request: UnlearnRequest, count: int, seed: int) -> AuxiliaryData:
    rng = np.random.default_rng(seed)
    out = {}
    for c in request.classes:
        ids = np.array(request.sorted_ids(c))
        chosen = np.sort(rng.choice(ids, size=count, replace=False))
        out[c] = train.select(chosen)
    return AuxiliaryData(out, "target")


@dataclass
class TrialRecord:
    trial_index: int
    seed: int
    behavior: dict
    ground_truth: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    skipped: str | None = None

    def to_dict(self, timings: bool = False) -> dict:
        d = {
            "trial_index": self.trial_index,
            "seed": self.seed,
            "behavior": self.behavior,
            "ground_truth": self.ground_truth,
            "verdicts": self.verdicts,
            "scores": self.scores,
            "skipped": self.skipped,
        }
        if timings:
            d["timings"] = self.timings
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrialRecord":
        return cls(
            trial_index=d["trial_index"],
            seed=d["seed"],
            behavior=d["behavior"],
            ground_truth=d.get("ground_truth", {}),
            verdicts=d.get("verdicts", {}),
            scores=d.get("scores", {}),
            timings=d.get("timings", {}),
            skipped=d.get("skipped"),
        )


def trial_seed(cfg: ScenarioConfig, trial_index: int) -> int:
    return derive_seed(cfg.master_seed, trial_index)


def _behavior_for(cfg: ScenarioConfig, trial_index: int, seed: int) -> ServerBehavior:
    b = cfg.behaviors[trial_index % len(cfg.behaviors)]
    return ServerBehavior(b.kind, b.keep_fraction, derive_seed(seed, _BEHAVIOR, b.seed))


def _stopwatch(sink: dict):
    @contextmanager
    def lap(name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            sink[name] = sink.get(name, 0.0) + time.perf_counter() - t0

    return lap


def run_trial(cfg: ScenarioConfig, trial_index: int, tau: float | None = None) -> TrialRecord:
    """Run one seeded trial; infeasible or uncalibratable trials come back skipped."""
    seed = trial_seed(cfg, trial_index)
    behavior = _behavior_for(cfg, trial_index, seed)
    rec = TrialRecord(trial_index, seed, behavior.to_dict())
    lap = _stopwatch(rec.timings)
    p = cfg.params
    try:
        with lap("data"):
            data = build_data(cfg, seed)
            request = draw_request(cfg, data.train, seed)
            effective = apply_behavior(request, behavior, data.train)
        rec.ground_truth = {
            "behavior": behavior.kind,
            "requested_volumes": {str(c): v for c, v in request.volumes.items()},
            "forgotten_volumes": {str(c): effective.volume(c) for c in request.classes},
            "forgotten_ids": effective.to_dict(),
        }
        spec = nnet.ModelSpec(data.train.dim, cfg.hidden_layers, data.train.num_classes)
        model_seed = derive_seed(seed, _MODEL)
        with lap("train_origin"):
            model_o = _train_origin(cfg, spec, data.train, model_seed)
        with lap("unlearn"):
            if behavior.kind == "neglecting":
                model_u = model_o
            else:
                model_u = _unlearn(cfg, spec, data.train, model_o, effective, model_seed)

        # ground truth is fixed above; metric calls below see only models and probes
        if "class" in cfg.metrics:
            with lap("metric_class"):
                aux = _probe_aux(data.test, range(spec.num_classes), p.probe_size, derive_seed(seed, _PROBE, 0), "test")
                verdict = verify_class(model_o, model_u, aux, p.probe_alpha, p.threshold, p.probe_passes)
            rec.verdicts["class"] = verdict.to_dict()
            expected = sorted(c for c in request.classes if effective.volume(c) > 0)
            flagged = verdict.unlearned_classes
            rec.scores["class_flagged"] = flagged
            rec.scores["class_correct"] = flagged == expected

        if "volume" in cfg.metrics:
            with lap("metric_volume"):
                estimates = _run_volume(cfg, spec, data, model_o, model_u, request, seed)
            devs, correct = [], []
            for c, est in estimates.items():
                true_v = effective.volume(c)
                if true_v > 0:
                    est.deviation = deviation(true_v, est.inferred_volume)
                    devs.append(est.deviation)
                complete = est.inferred_volume >= p.lazy_ratio * request.volume(c)
                correct.append(complete == (true_v >= request.volume(c)))
            rec.verdicts["volume"] = {str(c): e.to_dict() for c, e in estimates.items()}
            rec.scores["volume_deviation"] = float(np.mean(devs)) if devs else None
            rec.scores["volume_correct"] = all(correct)

        if "sample" in cfg.metrics:
            if tau is None:
                tau = p.tau
            if tau is None:
                raise ConfigError("sample metric needs a calibrated tau")
            with lap("metric_sample"):
                count = min([p.probe_size] + list(request.volumes.values()))
                target_aux = _target_aux(data.train, request, count, derive_seed(seed, _PROBE, 1))
                test_aux = _probe_aux(data.test, request.classes, count, derive_seed(seed, _PROBE, 2), "test")
                sv = verify_sample(model_u, target_aux, test_aux, p.probe_alpha, tau, p.probe_passes)
            rec.verdicts["sample"] = sv.to_dict()
            truly_honest = effective.all_ids() == request.all_ids()
            rec.scores["sample_correct"] = sv.honest == truly_honest
    except InfeasibleScenario as exc:
        rec.skipped = f"infeasible: {exc}"
    except CalibrationError as exc:
        rec.skipped = f"calibration: {exc}"
    return rec


def _run_volume(cfg, spec, data: TrialData, model_o, model_u, request: UnlearnRequest, seed: int) -> dict:
    p = cfg.params
    out = {}
    counts = data.train.class_counts()
    for c in request.classes:
        if p.shadow_base == "anchored":
            base = max(counts[c] - p.n * p.batch_volume, 0)
        else:
            base = int(p.shadow_base)
        top = base + p.n * p.batch_volume
        target_pool = data.pool.of_class(c)
        if len(target_pool) < top:
            raise InfeasibleScenario(f"shadow pool holds {len(target_pool)} class-{c} samples, sweep needs {top}")
        others = {k: counts[k] for k in range(spec.num_classes) if k != c}
        other_pool, _ = split_per_class(data.pool.select_mask(data.pool.labels != c), others, derive_seed(seed, _SHADOW, c))
        shadow_probe = _probe_aux(data.test, [c], p.probe_size, derive_seed(seed, _PROBE, 3, c), "test")
        um = build_unlearning_measurement(
            target_pool, other_pool, spec, cfg.train, p.n, p.batch_volume, shadow_probe, p.probe_alpha,
            derive_seed(seed, _SHADOW), base_volume=base, probe_passes=p.probe_passes,
            framework=cfg.framework, sisa_k=cfg.sisa_k,
        )
        if p.volume_probe == "target":
            probe = _target_aux(data.train, UnlearnRequest({c: request.per_class[c]}), min(p.probe_size, request.volume(c)), derive_seed(seed, _PROBE, 4, c))
            if probe.per_class_count != um.per_class_count:
                raise InfeasibleScenario("target probe smaller than the calibration probe")
        else:
            probe = shadow_probe
        out[c] = verify_volume(model_o, model_u, um, probe, p.probe_alpha, p.probe_passes)
    return out


# -- benchmark ---------------------------------------------------------------


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("TRUVRF_THREADS")
    n = requested if requested is not None else (int(cap) if cap else 1)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def _map_trials(fn, indices: Sequence[int], workers: int) -> list:
    with threadpool_limits(limits=1):
        if workers <= 1:
            return [fn(i) for i in indices]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, indices))


def nearest_rank_percentile(values: Sequence[float], q: float) -> float:
    if not values:
        raise InvalidInput("no values")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def honest_gap_ratios(cfg: ScenarioConfig, honest_runs: int, workers: int | None = None) -> list[float]:
    honest = copy.deepcopy(cfg)
    honest.behaviors = (ServerBehavior("honest"),)
    honest.metrics = ("sample",)
    honest.params = copy.deepcopy(cfg.params)
    honest.params.tau = math.inf

    def one(i):
        return run_trial(honest, _TAU_OFFSET + i)

    recs = _map_trials(one, range(honest_runs), worker_count(workers))
    return [r.verdicts["sample"]["gap_ratio"] for r in recs if r.skipped is None]


def calibrate_tau(cfg: ScenarioConfig, honest_runs: int, workers: int | None = None) -> float:
    """95th percentile (nearest rank) of the gap ratio over honest trials.

    Calibration trials use indices disjoint from any benchmark trial.
    """
    if honest_runs < 10:
        raise InvalidInput("tau calibration needs at least 10 honest runs")
    gaps = honest_gap_ratios(cfg, honest_runs, workers)
    if not gaps:
        raise CalibrationError("every tau calibration trial was skipped")
    return float(nearest_rank_percentile(gaps, 95))


def _mean(xs):
    return float(statistics.fmean(xs)) if xs else None


def aggregate(records: Sequence[TrialRecord]) -> dict:
    done = [r for r in records if r.skipped is None]
    agg: dict[str, Any] = {"trials": len(records), "completed": len(done), "skipped": len(records) - len(done)}
    cls = [r.scores["class_correct"] for r in done if "class_correct" in r.scores]
    if cls:
        agg["class_accuracy"] = _mean([float(x) for x in cls])
    vol = [r.scores["volume_deviation"] for r in done if r.scores.get("volume_deviation") is not None]
    volc = [r.scores["volume_correct"] for r in done if "volume_correct" in r.scores]
    if volc:
        agg["volume_mean_deviation"] = _mean(vol)
        agg["volume_median_deviation"] = float(statistics.median(vol)) if vol else None
        agg["volume_accuracy"] = _mean([float(x) for x in volc])
    smp = [r.scores["sample_correct"] for r in done if "sample_correct" in r.scores]
    if smp:
        agg["sample_accuracy"] = _mean([float(x) for x in smp])
    return agg


def describe_requests(cfg: ScenarioConfig) -> str:
    r = cfg.request
    classes = f"{r.classes} class(es) drawn uniformly" if isinstance(r.classes, int) else f"classes {list(r.classes)}"
    if r.volume == "all":
        vol = "every sample of each chosen class"
    elif isinstance(r.volume, list):
        vol = f"per-class volume drawn uniformly from {r.volume}"
    else:
        vol = f"{r.volume} samples per chosen class"
    behaviors = ", ".join(b.kind if b.kind != "lazy" else f"lazy(keep={b.keep_fraction})" for b in cfg.behaviors)
    return f"{classes}; {vol}; IDs uniform without replacement; behaviours cycle {behaviors}"


@dataclass
class BenchmarkReport:
    config: dict
    tau: float | None
    requests: str
    aggregates: dict
    records: list[TrialRecord]

    def to_dict(self, timings: bool = False) -> dict:
        return {
            "config": self.config,
            "tau": self.tau,
            "requests": self.requests,
            "aggregates": self.aggregates,
            "trials": [r.to_dict(timings) for r in self.records],
        }

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: Mapping) -> "BenchmarkReport":
        return cls(d["config"], d.get("tau"), d.get("requests", ""), d["aggregates"],
                   [TrialRecord.from_dict(t) for t in d["trials"]])


def run_benchmark(cfg: ScenarioConfig, workers: int | None = None, tau: float | None = None) -> BenchmarkReport:
    """Run every trial of ``cfg`` and aggregate; output does not depend on ``workers``."""
    n_workers = worker_count(workers)
    if "sample" in cfg.metrics:
        tau = tau if tau is not None else cfg.params.tau
        if tau is None:
            tau = calibrate_tau(cfg, cfg.params.tau_runs, n_workers)
    records = _map_trials(lambda i: run_trial(cfg, i, tau), range(cfg.trials), n_workers)
    records.sort(key=lambda r: r.trial_index)
    if all(r.skipped for r in records):
        reasons = sorted({r.skipped.split(":")[0] for r in records})
        raise EmptyReport(f"all {len(records)} trials were skipped ({', '.join(reasons)})")
    return BenchmarkReport(cfg.to_dict(), tau, describe_requests(cfg), aggregate(records), records)


@dataclass
class SweepResult:
    param: str
    values: list
    reports: list[BenchmarkReport]

    def rows(self) -> list[dict]:
        out = []
        for v, rep in zip(self.values, self.reports):
            row = {"x": v}
            row.update({k: val for k, val in rep.aggregates.items() if k not in ("trials", "completed", "skipped")})
            out.append(row)
        return out


def run_sweep(cfg: ScenarioConfig, workers: int | None = None) -> SweepResult:
    if cfg.sweep is None:
        raise ConfigError("config has no sweep section")
    param = cfg.sweep["param"]
    values = list(cfg.sweep["values"])
    reports = [run_benchmark(cfg.with_override(param, v), workers) for v in values]
    return SweepResult(param, values, reports)
