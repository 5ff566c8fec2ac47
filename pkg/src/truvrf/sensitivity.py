"""Per-class model sensitivity.

A copy of the model is probe-trained on a small balanced slice of one class,
and the class's sensitivity is the total absolute parameter displacement
divided by the probe learning rate.  With a single full-batch probe step this
is exactly the L1 norm of the loss gradient on that slice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from . import nnet
from .datasets import LabeledDataset
from .errors import InvalidInput

SOURCES = ("target", "test")


@dataclass(frozen=True)
class AuxiliaryData:
    per_class: Mapping[int, LabeledDataset]
    source: str = "test"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise InvalidInput(f"source must be one of {SOURCES}, got {self.source!r}")
        if not self.per_class:
            raise InvalidInput("auxiliary data needs at least one class")
        for c, d in self.per_class.items():
            if len(d) == 0:
                raise InvalidInput(f"auxiliary slice for class {c} is empty")
            if np.any(d.labels != c):
                raise InvalidInput(f"auxiliary slice for class {c} holds other labels")
        sizes = {len(d) for d in self.per_class.values()}
        if len(sizes) != 1:
            raise InvalidInput("auxiliary slices must all have the same size")
        object.__setattr__(self, "per_class", dict(sorted(self.per_class.items())))

    @property
    def per_class_count(self) -> int:
        return len(next(iter(self.per_class.values())))

    @property
    def classes(self) -> list[int]:
        return list(self.per_class)

    @classmethod
    def sample(
        cls,
        data: LabeledDataset,
        classes,
        per_class_count: int,
        seed: int,
        source: str = "test",
    ) -> "AuxiliaryData":
        """Draw ``per_class_count`` samples of each class from ``data``."""
        rng = np.random.default_rng(seed)
        out = {}
        for c in sorted(classes):
            pool = np.sort(data.ids_of_class(c))
            if len(pool) < per_class_count:
                raise InvalidInput(
                    f"class {c} has {len(pool)} samples, probe needs {per_class_count}"
                )
            chosen = np.sort(rng.choice(pool, size=per_class_count, replace=False))
            out[c] = data.select(chosen)
        return cls(out, source)


@dataclass(frozen=True)
class SensitivityProfile:
    ms: Mapping[int, float]
    alpha: float
    probe_passes: int
    source: str
    per_class_count: int

    def config(self) -> tuple:
        return (self.alpha, self.probe_passes, self.per_class_count)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "probe_passes": self.probe_passes,
            "source": self.source,
            "per_class_count": self.per_class_count,
            "ms": {str(c): v for c, v in sorted(self.ms.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SensitivityProfile":
        return cls(
            ms={int(c): float(v) for c, v in d["ms"].items()},
            alpha=float(d["alpha"]),
            probe_passes=int(d["probe_passes"]),
            source=d["source"],
            per_class_count=int(d.get("per_class_count", 0)),
        )


def class_sensitivity(model: nnet.Model, X: np.ndarray, y: np.ndarray, alpha: float, probe_passes: int = 1) -> float:
    if not alpha > 0:
        raise InvalidInput("probe learning rate must be positive")
    if probe_passes < 1:
        raise InvalidInput("probe_passes must be >= 1")
    X, y = nnet._check_batch(model.spec, X, y)
    theta = model.params
    probe = np.array(theta, copy=True)
    for _ in range(probe_passes):
        _, g = nnet._loss_and_grad_flat(model.spec, probe, X, y)
        probe -= alpha * g
    return float(np.abs(theta - probe).sum() / alpha)


Probeable = Union[nnet.Model, "SisaEnsemble"]  # noqa: F821


def _sub_models(model) -> list[nnet.Model]:
    if isinstance(model, nnet.Model):
        return [model]
    return list(model.sub_models)


def extract_sensitivity(model: Probeable, aux: AuxiliaryData, alpha: float, probe_passes: int = 1) -> SensitivityProfile:
    """Sensitivity of every class in ``aux``.

    ``model`` may be a single network or a SISA ensemble; for an ensemble the
    per-sub-model sensitivities are summed.
    """
    members = _sub_models(model)
    ms = {}
    for c, d in aux.per_class.items():
        ms[c] = sum(class_sensitivity(m, d.features, d.labels, alpha, probe_passes) for m in members)
    return SensitivityProfile(ms, float(alpha), int(probe_passes), aux.source, aux.per_class_count)


def check_comparable(a: SensitivityProfile, b: SensitivityProfile) -> None:
    if a.config() != b.config():
        raise InvalidInput(
            "sensitivity profiles were extracted with different configurations: "
            f"{a.config()} vs {b.config()}"
        )


def sensitivity_difference(prof_u: SensitivityProfile, prof_o: SensitivityProfile) -> dict[int, float]:
    """Signed per-class change ``MS_u - MS_o``."""
    check_comparable(prof_u, prof_o)
    if set(prof_u.ms) != set(prof_o.ms):
        raise InvalidInput("profiles cover different classes")
    return {c: prof_u.ms[c] - prof_o.ms[c] for c in sorted(prof_u.ms)}
