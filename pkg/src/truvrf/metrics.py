"""The three unlearning checks: which classes, how much, and whether the right samples.

Every check here sees only models, auxiliary probe data and calibration
values.  Ground truth about what the server really did never enters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import nnet
from .datasets import LabeledDataset, UnlearnRequest, concat
from .errors import CalibrationError, InvalidInput
from .sensitivity import (
    AuxiliaryData,
    SensitivityProfile,
    check_comparable,
    extract_sensitivity,
    sensitivity_difference,
)
from .unlearning import AnyModel, SisaEnsemble, amnesiac_unlearn, fit, sisa_train

EPS_FLOOR = 1e-12
FRAMEWORKS = ("retrain", "sisa", "amnesiac")
DEFAULT_CLASS_THRESHOLD = 0.01


def _check_same_architecture(a: AnyModel, b: AnyModel) -> None:
    if type(a) is not type(b):
        raise InvalidInput("origin and unlearned models must be of the same kind")
    if a.spec != b.spec:
        raise InvalidInput("origin and unlearned models have different specs")
    if isinstance(a, SisaEnsemble) and a.k != b.k:
        raise InvalidInput("ensembles have a different number of shards")


@dataclass(frozen=True)
class ClassResult:
    ms_o: float
    ms_u: float
    ds: float
    relative_change: float
    unlearned: bool

    def to_dict(self) -> dict:
        return {
            "ms_o": self.ms_o,
            "ms_u": self.ms_u,
            "ds": self.ds,
            "relative_change": self.relative_change,
            "unlearned": self.unlearned,
        }


@dataclass(frozen=True)
class ClassVerdict:
    per_class: Mapping[int, ClassResult]
    threshold: float

    @property
    def unlearned_classes(self) -> list[int]:
        return [c for c, r in self.per_class.items() if r.unlearned]

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "per_class": {str(c): r.to_dict() for c, r in sorted(self.per_class.items())},
        }


def class_verdict_from_profiles(
    prof_o: SensitivityProfile, prof_u: SensitivityProfile, threshold: float
) -> ClassVerdict:
    if threshold < 0:
        raise InvalidInput("threshold must be nonnegative")
    ds = sensitivity_difference(prof_u, prof_o)
    out = {}
    for c, d in ds.items():
        rel = abs(d) / max(prof_o.ms[c], EPS_FLOOR)
        # no change is never evidence of unlearning, even at threshold 0
        out[c] = ClassResult(prof_o.ms[c], prof_u.ms[c], d, rel, rel > 0 and rel >= threshold)
    return ClassVerdict(out, threshold)


def verify_class(
    model_o: AnyModel,
    model_u: AnyModel,
    test_aux: AuxiliaryData,
    alpha: float,
    threshold: float = DEFAULT_CLASS_THRESHOLD,
    probe_passes: int = 1,
) -> ClassVerdict:
    """Flag each class whose sensitivity moved by at least ``threshold`` (relative).

    A class is reported as unlearned when ``|MS_u - MS_o| / MS_o >= threshold``.
    Identical models give a relative change of exactly zero everywhere.
    """
    _check_same_architecture(model_o, model_u)
    prof_o = extract_sensitivity(model_o, test_aux, alpha, probe_passes)
    prof_u = extract_sensitivity(model_u, test_aux, alpha, probe_passes)
    return class_verdict_from_profiles(prof_o, prof_u, threshold)


@dataclass(frozen=True)
class UnlearningMeasurement:
    """Calibrated sensitivity change per batch of removed target-class samples."""

    target_class: int
    um_batch: float
    batch_volume: int
    n: int
    shadow_ms: tuple[float, ...]
    shadow_volumes: tuple[int, ...]
    alpha: float
    probe_passes: int
    per_class_count: int

    def __post_init__(self):
        if len(self.shadow_ms) != self.n:
            raise InvalidInput("shadow_ms must hold one value per shadow model")

    def to_dict(self) -> dict:
        return {
            "target_class": self.target_class,
            "um_batch": self.um_batch,
            "batch_volume": self.batch_volume,
            "n": self.n,
            "shadow_ms": list(self.shadow_ms),
            "shadow_volumes": list(self.shadow_volumes),
            "alpha": self.alpha,
            "probe_passes": self.probe_passes,
            "per_class_count": self.per_class_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "UnlearningMeasurement":
        return cls(
            target_class=int(d["target_class"]),
            um_batch=float(d["um_batch"]),
            batch_volume=int(d["batch_volume"]),
            n=int(d["n"]),
            shadow_ms=tuple(float(x) for x in d["shadow_ms"]),
            shadow_volumes=tuple(int(x) for x in d["shadow_volumes"]),
            alpha=float(d["alpha"]),
            probe_passes=int(d.get("probe_passes", 1)),
            per_class_count=int(d.get("per_class_count", 0)),
        )


def um_from_shadow_ms(shadow_ms: Sequence[float]) -> float:
    """Mean of consecutive sensitivity drops along the shadow sweep.

    The consecutive differences telescope, so this is
    ``(MS_first - MS_last) / (n - 1)``; positive when sensitivity falls as the
    target-class volume grows.
    """
    n = len(shadow_ms)
    if n < 2:
        raise InvalidInput("need at least two shadow models")
    drops = [shadow_ms[j] - shadow_ms[j + 1] for j in range(n - 1)]
    return sum(drops) / (n - 1)


def build_unlearning_measurement(
    target_class_data: LabeledDataset,
    other_class_data: LabeledDataset,
    spec: nnet.ModelSpec,
    cfg: nnet.TrainConfig,
    n: int,
    batch_volume: int,
    test_aux: AuxiliaryData,
    alpha: float,
    seed: int,
    *,
    base_volume: int = 0,
    probe_passes: int = 1,
    framework: str = "retrain",
    sisa_k: int = 5,
) -> UnlearningMeasurement:
    """Calibrate ``UM_batch`` from ``n`` shadow models.

    Shadow ``j`` (1-based) holds the first ``base_volume + j * batch_volume``
    samples of ``target_class_data`` plus all of ``other_class_data``, and all
    shadows share the initialisation ``seed``.  ``framework`` mirrors how the
    audited server forgets:

    ``"retrain"``
        each shadow is trained from scratch on its slice;
    ``"sisa"``
        each shadow is a ``sisa_k``-shard ensemble;
    ``"amnesiac"``
        one shadow origin is trained on the whole sweep, and shadow ``j`` is
        that origin after amnesiac relabeling of the samples beyond its slice.

    Raises
    ------
    CalibrationError
        If the sweep does not show sensitivity falling with volume.
    """
    if n < 2:
        raise InvalidInput("need at least two shadow models")
    if batch_volume < 1 or base_volume < 0:
        raise InvalidInput("batch_volume must be positive and base_volume nonnegative")
    labels = set(int(x) for x in target_class_data.labels)
    if len(labels) != 1:
        raise InvalidInput("target_class_data must hold exactly one class")
    target = labels.pop()
    if target in set(int(x) for x in other_class_data.labels):
        raise InvalidInput("other_class_data must not contain the target class")
    if target not in test_aux.per_class:
        raise InvalidInput(f"probe data has no slice for class {target}")
    top = base_volume + n * batch_volume
    if len(target_class_data) < top:
        raise InvalidInput(f"target_class_data has {len(target_class_data)} samples, sweep needs {top}")

    if framework not in FRAMEWORKS:
        raise InvalidInput(f"unknown framework {framework!r}")

    probe = AuxiliaryData({target: test_aux.per_class[target]}, test_aux.source)
    volumes = tuple(base_volume + j * batch_volume for j in range(1, n + 1))
    sweep_ids = target_class_data.ids[:top]
    if framework == "amnesiac":
        full = concat([target_class_data.select(sweep_ids), other_class_data])
        origin = fit(full, spec, cfg, seed)
    shadow_ms = []
    for v in volumes:
        if framework == "amnesiac":
            forget = UnlearnRequest({target: frozenset(int(i) for i in sweep_ids[v:])})
            shadow = amnesiac_unlearn(origin, full, forget, cfg, seed).model_u
        else:
            data = concat([target_class_data.select(sweep_ids[:v]), other_class_data])
            if framework == "sisa":
                shadow = sisa_train(data, sisa_k, spec, cfg, seed)
            else:
                shadow = fit(data, spec, cfg, seed)
        shadow_ms.append(extract_sensitivity(shadow, probe, alpha, probe_passes).ms[target])
    um = um_from_shadow_ms(shadow_ms)
    if not um > 0:
        raise CalibrationError(
            f"non-monotone shadow sweep for class {target}: UM_batch={um:.6g}; "
            "raise n or batch_volume"
        )
    return UnlearningMeasurement(
        target, um, batch_volume, n, tuple(shadow_ms), volumes, float(alpha), probe_passes, probe.per_class_count
    )


@dataclass
class VolumeEstimate:
    inferred_volume: int
    ds: float
    ms_o: float
    ms_u: float
    um_batch: float
    batch_volume: int
    deviation: float | None = None

    def to_dict(self) -> dict:
        return {
            "inferred_volume": self.inferred_volume,
            "ds": self.ds,
            "ms_o": self.ms_o,
            "ms_u": self.ms_u,
            "um_batch": self.um_batch,
            "batch_volume": self.batch_volume,
            "deviation": self.deviation,
        }


def infer_volume(ds: float, um_batch: float, batch_volume: int) -> int:
    if not um_batch > 0:
        raise InvalidInput("UM_batch must be positive")
    if ds <= 0:
        return 0
    return math.ceil(ds / um_batch) * batch_volume


def verify_volume(
    model_o: AnyModel,
    model_u: AnyModel,
    um: UnlearningMeasurement,
    target_aux: AuxiliaryData,
    alpha: float,
    probe_passes: int = 1,
) -> VolumeEstimate:
    if not um.um_batch > 0:
        raise InvalidInput("UM_batch must be positive")
    _check_same_architecture(model_o, model_u)
    c = um.target_class
    if c not in target_aux.per_class:
        raise InvalidInput(f"probe data has no slice for class {c}")
    if (float(alpha), probe_passes, target_aux.per_class_count) != (um.alpha, um.probe_passes, um.per_class_count):
        raise InvalidInput("probe configuration differs from the one used for calibration")
    probe = AuxiliaryData({c: target_aux.per_class[c]}, target_aux.source)
    prof_o = extract_sensitivity(model_o, probe, alpha, probe_passes)
    prof_u = extract_sensitivity(model_u, probe, alpha, probe_passes)
    ds = sensitivity_difference(prof_u, prof_o)[c]
    return VolumeEstimate(
        infer_volume(ds, um.um_batch, um.batch_volume), ds, prof_o.ms[c], prof_u.ms[c], um.um_batch, um.batch_volume
    )


@dataclass(frozen=True)
class SampleVerdict:
    ms_u_test: float
    ms_u_tar: float
    gap_ratio: float
    honest: bool
    tau: float

    def to_dict(self) -> dict:
        return {
            "ms_u_test": self.ms_u_test,
            "ms_u_tar": self.ms_u_tar,
            "gap_ratio": self.gap_ratio,
            "honest": self.honest,
            "tau": self.tau,
        }


def gap_ratio(ms_test: float, ms_tar: float) -> float:
    return (ms_test - ms_tar) / max(ms_test, EPS_FLOOR)


def sample_gap(model_u: AnyModel, target_aux: AuxiliaryData, test_aux: AuxiliaryData, alpha: float, probe_passes: int = 1) -> tuple[float, float, float]:
    """Summed target and test sensitivities over the requested classes, and their gap."""
    if target_aux.classes != test_aux.classes:
        raise InvalidInput("target and test probes must cover the same classes")
    if target_aux.per_class_count != test_aux.per_class_count:
        raise InvalidInput("target and test probes must have the same size per class")
    prof_tar = extract_sensitivity(model_u, target_aux, alpha, probe_passes)
    prof_test = extract_sensitivity(model_u, test_aux, alpha, probe_passes)
    check_comparable(prof_tar, prof_test)
    ms_tar = sum(prof_tar.ms.values())
    ms_test = sum(prof_test.ms.values())
    return ms_test, ms_tar, gap_ratio(ms_test, ms_tar)


def verify_sample(
    model_u: AnyModel,
    target_aux: AuxiliaryData,
    test_aux: AuxiliaryData,
    alpha: float,
    tau: float,
    probe_passes: int = 1,
) -> SampleVerdict:
    """Check that the requested samples look as unseen as held-out data.

    If the model still fits the target samples better than fresh test data
    (gap ratio above ``tau``) the server is judged to have kept them.
    """
    ms_test, ms_tar, gap = sample_gap(model_u, target_aux, test_aux, alpha, probe_passes)
    return SampleVerdict(ms_test, ms_tar, gap, gap <= tau, tau)


def deviation(true_volume: int, inferred_volume: int) -> float:
    if true_volume <= 0:
        raise InvalidInput("true volume must be positive")
    return abs(true_volume - inferred_volume) / true_volume
