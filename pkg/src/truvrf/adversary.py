"""Simulated server behaviours: what actually gets forgotten for a given request."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .datasets import LabeledDataset, UnlearnRequest, sample_disjoint
from .errors import InvalidInput

KINDS = ("honest", "neglecting", "lazy", "deceiving")


@dataclass(frozen=True)
class ServerBehavior:
    kind: str = "honest"
    keep_fraction: float | None = None
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise InvalidInput(f"unknown server behaviour {self.kind!r}")
        if kind == "lazy":
            f = self.keep_fraction
            if f is None or not 0.0 < f < 1.0:
                raise InvalidInput("lazy keep_fraction must lie strictly between 0 and 1")
        elif self.keep_fraction is not None:
            raise InvalidInput("keep_fraction only applies to the lazy behaviour")

    @property
    def dishonest(self) -> bool:
        return self.kind != "honest"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": self.seed}
        if self.kind == "lazy":
            d["keep_fraction"] = self.keep_fraction
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ServerBehavior":
        kf = d.get("keep_fraction")
        return cls(str(d["kind"]), None if kf is None else float(kf), int(d.get("seed", 0)))


def lazy_volume(volume: int, keep_fraction: float) -> int:
    # tolerance absorbs binary rounding, e.g. (1 - 0.9) * 10 = 0.999...
    return int(math.floor((1.0 - keep_fraction) * volume + 1e-9))


def apply_behavior(request: UnlearnRequest, behavior: ServerBehavior, data: LabeledDataset) -> UnlearnRequest:
    """The request the server actually executes."""
    request.validate(data)
    if behavior.kind == "honest":
        return request
    if behavior.kind == "neglecting":
        return UnlearnRequest.empty()
    if behavior.kind == "deceiving":
        return sample_disjoint(data, request, behavior.seed)
    rng = np.random.default_rng(behavior.seed)
    out = {}
    for c in request.classes:
        ids = np.array(request.sorted_ids(c))
        k = lazy_volume(len(ids), behavior.keep_fraction)
        out[c] = frozenset(int(i) for i in rng.choice(ids, size=k, replace=False))
    return UnlearnRequest(out)
