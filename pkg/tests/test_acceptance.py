"""Acceptance battery.

Each test records one PASS/FAIL line (shown in the ``acceptance criteria``
section of the pytest summary) before asserting.  The scenario files live in
``scenarios/`` at the repository root and can be run directly with
``truvrf bench --config``.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from truvrf import nnet
from truvrf.datasets import gen_synthetic, random_request, split_per_class
from truvrf.harness import ScenarioConfig, run_benchmark
from truvrf.metrics import build_unlearning_measurement
from truvrf.sensitivity import AuxiliaryData, class_sensitivity
from truvrf.unlearning import derive_seed, sisa_train, sisa_unlearn

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

CLASS_MIN, VOLUME_MAX, SAMPLE_MIN = 0.85, 0.20, 0.80
# other frameworks: accuracy floors drop by 0.05, deviation ceiling rises to 0.30
RELAXED = {"class": CLASS_MIN - 0.05, "volume": 0.30, "sample": SAMPLE_MIN - 0.05}
BUDGET_S = {"class": 300, "volume": 600, "sample": 300}


def scenario(name: str, framework: str = "retrain") -> ScenarioConfig:
    cfg = ScenarioConfig.load(SCENARIOS / f"metric_{name}.json")
    return cfg.with_override("framework", framework)


def timed_benchmark(cfg: ScenarioConfig):
    t0 = time.perf_counter()
    rep = run_benchmark(cfg, workers=1)
    return rep, time.perf_counter() - t0


def _check_metric(verdict, label, metric, framework, limit):
    rep, secs = timed_benchmark(scenario(metric, framework))
    agg = rep.aggregates
    if metric == "volume":
        value = agg["volume_mean_deviation"]
        ok_value = value is not None and value <= limit
        desc = f"mean deviation {value:.3f} (<= {limit:.2f})"
    else:
        value = agg[f"{metric}_accuracy"]
        ok_value = value >= limit
        desc = f"accuracy {value:.3f} (>= {limit:.2f})"
    ok_time = secs <= BUDGET_S[metric]
    extra = f", tau {rep.tau:.4f}" if rep.tau is not None else ""
    ok = verdict(label, ok_value and ok_time and agg["skipped"] == 0,
                 f"[{framework}, {metric}] {desc}, {agg['completed']}/{agg['trials']} trials{extra}, "
                 f"{secs:.0f}s (<= {BUDGET_S[metric]}s)")
    assert ok, agg


@pytest.mark.slow
def test_c1_class_verification(verdict):
    _check_metric(verdict, "1", "class", "retrain", CLASS_MIN)


@pytest.mark.slow
def test_c2_volume_verification(verdict):
    _check_metric(verdict, "2", "volume", "retrain", VOLUME_MAX)


@pytest.mark.slow
def test_c3_sample_verification(verdict):
    _check_metric(verdict, "3", "sample", "retrain", SAMPLE_MIN)


def test_c4_neglecting_is_exactly_unchanged(verdict):
    cfg = ScenarioConfig.from_dict({"name": "neglecting", "trials": 20, "behaviors": [{"kind": "neglecting"}]})
    rep = run_benchmark(cfg)
    rels = [r["relative_change"] for rec in rep.records for r in rec.verdicts["class"]["per_class"].values()]
    unflagged = sum(rec.scores["class_flagged"] == [] and rec.scores["class_correct"] for rec in rep.records)
    ok = verdict("4", unflagged == 20 and all(x == 0.0 for x in rels),
                 f"{unflagged}/20 trials report no unlearned class, max |relative change| {max(map(abs, rels))!r}")
    assert ok


def _oracle_loss(spec, params, X, y):
    sizes = spec.layer_sizes
    pos, a = 0, X
    for i, (m, n) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = params[pos : pos + m * n].reshape(m, n)
        pos += m * n
        a = a @ W + params[pos : pos + n]
        pos += n
        if i < len(sizes) - 2:
            a = np.maximum(a, 0.0)
    z = a - a.max(axis=1, keepdims=True)
    return -(z - np.log(np.exp(z).sum(axis=1, keepdims=True)))[np.arange(len(y)), y].mean()


def _oracle_grad(spec, params, X, y):
    """Textbook backpropagation, kept separate from the library."""
    sizes = spec.layer_sizes
    layers, pos = [], 0
    for m, n in zip(sizes[:-1], sizes[1:]):
        layers.append((params[pos : pos + m * n].reshape(m, n), params[pos + m * n : pos + m * n + n]))
        pos += m * n + n
    acts = [X]
    for i, (W, b) in enumerate(layers):
        z = acts[-1] @ W + b
        acts.append(np.maximum(z, 0.0) if i < len(layers) - 1 else z)
    p = np.exp(acts[-1] - acts[-1].max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    delta = p
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads.append(np.concatenate([(acts[i].T @ delta).ravel(), delta.sum(axis=0)]))
        if i:
            delta = (delta @ W.T) * (acts[i] > 0)
    return np.concatenate(grads[::-1])


def test_c5_gradient_matches_finite_differences(verdict):
    rng = np.random.default_rng(2024)
    eps, worst = 1e-5, 0.0
    for case in range(50):
        while True:
            spec = nnet.ModelSpec(
                int(rng.integers(1, 6)),
                tuple(int(h) for h in rng.integers(1, 7, size=int(rng.integers(0, 3)))),
                int(rng.integers(2, 5)),
            )
            if spec.parameter_count <= 100:
                break
        m = nnet.init_model(spec, case)
        X = rng.normal(size=(7, spec.input_dim))
        y = rng.integers(0, spec.num_classes, size=7)
        _, g = nnet.loss_and_grad(m, X, y)
        fd = np.empty_like(g)
        for j in range(g.size):
            e = np.zeros_like(g)
            e[j] = eps
            fd[j] = (_oracle_loss(spec, m.params + e, X, y) - _oracle_loss(spec, m.params - e, X, y)) / (2 * eps)
        # relative error against max(|a|, |b|, 1e-8): tiny entries would otherwise divide by ~0
        rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
        worst = max(worst, float(rel.max()))
    ok = verdict("5", worst <= 1e-4, f"max relative error {worst:.2e} over 50 models (<= 1e-4)")
    assert ok


def test_c6_sensitivity_equals_gradient_l1(verdict):
    rng = np.random.default_rng(6)
    worst = 0.0
    for case in range(20):
        while True:
            spec = nnet.ModelSpec(
                int(rng.integers(2, 50)),
                tuple(int(h) for h in rng.integers(1, 80, size=int(rng.integers(0, 3)))),
                int(rng.integers(2, 10)),
            )
            if spec.parameter_count <= 10_000:
                break
        m = nnet.init_model(spec, 100 + case)
        n = int(rng.integers(1, 80))
        X = rng.normal(size=(n, spec.input_dim)) * 2
        y = np.full(n, int(rng.integers(0, spec.num_classes)))
        alpha = float(10 ** rng.uniform(-4, -1))
        oracle = float(np.abs(_oracle_grad(spec, m.params, X, y)).sum())
        worst = max(worst, abs(class_sensitivity(m, X, y, alpha, 1) - oracle))
    ok = verdict("6", worst <= 1e-9, f"max |MS - ||grad||_1| {worst:.2e} over 20 models (<= 1e-9)")
    assert ok


def test_c7_sisa_untouched_shards_are_byte_identical(verdict):
    data = gen_synthetic(5, 200, 8, 4.0, 7)
    spec = nnet.ModelSpec(8, (16,), 5)
    ens = sisa_train(data, 5, spec, nnet.TrainConfig(0.05, 3, 32, 0), 7)
    rng = np.random.default_rng(70)
    checked = retrained = mismatched = 0
    for i in range(10):
        classes = rng.choice(5, size=int(rng.integers(1, 4)), replace=False)
        vols = {int(c): int(rng.integers(1, 6)) for c in classes}
        req = random_request(data, vols, derive_seed(70, i))
        after = sisa_unlearn(ens, req)
        drop = req.all_ids()
        for (_, ids), before_m, after_m in zip(ens.shards, ens.sub_models, after.sub_models):
            if ids & drop:
                retrained += 1
                continue
            checked += 1
            mismatched += nnet.model_to_bytes(before_m) != nnet.model_to_bytes(after_m)
    ok = verdict("7", checked > 0 and mismatched == 0,
                 f"{checked - mismatched}/{checked} untouched sub-models byte-identical ({retrained} retrained)")
    assert ok


def test_c8_sensitivity_falls_with_volume(verdict):
    cfg = scenario("volume")
    spec = nnet.ModelSpec(cfg.dataset.dim, tuple(cfg.hidden_layers), cfg.dataset.num_classes)
    rhos = []
    for s in range(5):
        seed = derive_seed(8, s)
        full = gen_synthetic(5, [600, 500, 500, 500, 500], cfg.dataset.dim, cfg.dataset.separation, seed)
        test, rest = split_per_class(full, {c: 100 for c in range(5)}, seed)
        aux = AuxiliaryData.sample(test, [0], 50, seed)
        um = build_unlearning_measurement(
            rest.of_class(0), rest.select_mask(rest.labels != 0), spec, cfg.train, 5, 100, aux, 0.01, seed
        )
        assert um.shadow_volumes == (100, 200, 300, 400, 500)
        rhos.append(float(spearmanr(um.shadow_volumes, um.shadow_ms)[0]))
    mean = float(np.mean(rhos))
    ok = verdict("8", mean <= -0.8, f"mean Spearman rho {mean:.3f} over 5 seeds (<= -0.8), per seed {[round(r, 2) for r in rhos]}")
    assert ok


def test_c9_reports_are_byte_identical_across_runs_and_workers(verdict):
    cfg = ScenarioConfig.from_dict({
        "name": "determinism",
        "dataset": {"per_class": [300, 150, 150, 150, 150], "pool_per_class": [300, 150, 150, 150, 150], "test_per_class": 40},
        "hidden_layers": [16],
        "train": {"learning_rate": 0.05, "epochs": 4, "batch_size": 32},
        "behaviors": [{"kind": "honest"}, {"kind": "neglecting"}, {"kind": "lazy", "keep_fraction": 0.5}, {"kind": "deceiving"}],
        "request": {"classes": [0], "volume": [50, 100]},
        "metrics": ["class", "volume", "sample"],
        "params": {"threshold": 1.0, "n": 2, "batch_volume": 50, "probe_size": 30, "tau_runs": 10},
        "trials": 8,
        "master_seed": 9,
    })
    outs = {(w, rep): run_benchmark(cfg, workers=w).to_json() for w in (1, 4) for rep in (0, 1)}
    distinct = len(set(outs.values()))
    ok = verdict("9", distinct == 1, f"{len(outs)} reports (2 runs x workers 1 and 4), {distinct} distinct byte string(s)")
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("framework", ["sisa", "amnesiac"])
@pytest.mark.parametrize("metric", ["class", "volume", "sample"])
def test_c10_other_frameworks(verdict, framework, metric):
    _check_metric(verdict, "10", metric, framework, RELAXED[metric])
