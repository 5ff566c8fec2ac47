"""Server-side unlearning frameworks: full retraining, SISA and amnesiac relabeling."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

from . import nnet
from .datasets import LabeledDataset, UnlearnRequest, remove
from .errors import FormatError, InfeasibleScenario, InvalidInput


def derive_seed(*parts: int) -> int:
    """Deterministic 63-bit seed from a tuple of integers."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def fit(data: LabeledDataset, spec: nnet.ModelSpec, cfg: nnet.TrainConfig, seed: int) -> nnet.Model:
    """Train a fresh network initialised from ``seed``."""
    if len(data) == 0:
        raise InvalidInput("cannot train on an empty dataset")
    return nnet.train(nnet.init_model(spec, seed), data.features, data.labels, cfg)


@dataclass(frozen=True)
class SisaEnsemble:
    data: LabeledDataset
    shards: tuple[tuple[int, frozenset], ...]
    sub_models: tuple[nnet.Model, ...]
    train_cfg: nnet.TrainConfig
    base_seed: int
    generations: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.shards)

    @property
    def spec(self) -> nnet.ModelSpec:
        return self.sub_models[0].spec

    def shard_data(self, i: int) -> LabeledDataset:
        ids = self.shards[i][1]
        return self.data.select_mask(np.array([int(x) in ids for x in self.data.ids], dtype=bool))

    def same_params(self, other: "SisaEnsemble") -> bool:
        return len(self.sub_models) == len(other.sub_models) and all(
            a.same_params(b) for a, b in zip(self.sub_models, other.sub_models)
        )


AnyModel = Union[nnet.Model, SisaEnsemble]


def same_model(a: AnyModel, b: AnyModel) -> bool:
    if type(a) is not type(b):
        return False
    return a.same_params(b)


@dataclass(frozen=True)
class UnlearnOutcome:
    model_o: AnyModel
    model_u: AnyModel
    executed_request: UnlearnRequest


def retrain_unlearn(
    data: LabeledDataset,
    request: UnlearnRequest,
    spec: nnet.ModelSpec,
    cfg: nnet.TrainConfig,
    seed: int,
    model_o: nnet.Model | None = None,
) -> UnlearnOutcome:
    """Retrain from scratch on ``data`` minus the request.

    Both models start from the same initialisation ``seed``.  A previously
    trained ``model_o`` may be passed in to skip retraining the original.
    """
    remaining = remove(data, request)
    if len(remaining) == 0:
        raise InfeasibleScenario("the request would remove the entire training set")
    if model_o is None:
        model_o = fit(data, spec, cfg, seed)
    model_u = fit(remaining, spec, cfg, seed)
    return UnlearnOutcome(model_o, model_u, request)


def _shard_seed(base_seed: int, shard_id: int, generation: int) -> int:
    return derive_seed(base_seed, shard_id, generation)


def sisa_train(data: LabeledDataset, k: int, spec: nnet.ModelSpec, cfg: nnet.TrainConfig, seed: int) -> SisaEnsemble:
    """Round-robin shards by ID order, one independently trained sub-model per shard."""
    if k < 1:
        raise InvalidInput("k must be >= 1")
    if len(data) < k:
        raise InvalidInput(f"cannot split {len(data)} samples into {k} shards")
    ordered = np.sort(data.ids)
    shards = tuple((i, frozenset(int(x) for x in ordered[i::k])) for i in range(k))
    ens = SisaEnsemble(data, shards, (), cfg, seed, (0,) * k)
    subs = tuple(fit(ens.shard_data(i), spec, cfg, _shard_seed(seed, i, 0)) for i in range(k))
    return replace(ens, sub_models=subs)


def sisa_unlearn(ensemble: SisaEnsemble, request: UnlearnRequest) -> SisaEnsemble:
    """Retrain only the sub-models whose shard holds requested samples."""
    request.validate(ensemble.data)
    drop = request.all_ids()
    if not drop:
        return ensemble
    touched = [i for i, (_, ids) in enumerate(ensemble.shards) if ids & drop]
    gens = list(ensemble.generations)
    for i in touched:
        gens[i] += 1
    out = SisaEnsemble(
        remove(ensemble.data, request),
        tuple((sid, ids - drop) for sid, ids in ensemble.shards),
        ensemble.sub_models,
        ensemble.train_cfg,
        ensemble.base_seed,
        tuple(gens),
    )
    subs = list(ensemble.sub_models)
    for i in touched:
        sid = out.shards[i][0]
        seed = _shard_seed(ensemble.base_seed, sid, gens[i])
        if out.shards[i][1]:
            subs[i] = fit(out.shard_data(i), ensemble.spec, ensemble.train_cfg, seed)
        else:
            # an emptied shard keeps an untrained member so the ensemble shape is stable
            subs[i] = nnet.init_model(ensemble.spec, seed)
    return replace(out, sub_models=tuple(subs))


def sisa_predict(ensemble: SisaEnsemble, X: np.ndarray) -> np.ndarray:
    """Majority vote of sub-model predictions, ties to the lowest class."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    k = ensemble.spec.num_classes
    votes = np.zeros((X.shape[0], k), dtype=np.int64)
    for m in ensemble.sub_models:
        votes[np.arange(X.shape[0]), nnet.predict(m, X)] += 1
    out = np.argmax(votes, axis=1)
    return out[0] if single else out


def predict_any(model: AnyModel, X: np.ndarray) -> np.ndarray:
    if isinstance(model, SisaEnsemble):
        return sisa_predict(model, X)
    return nnet.predict(model, X)


def accuracy(model: AnyModel, data: LabeledDataset) -> float:
    if len(data) == 0:
        raise InvalidInput("cannot evaluate on an empty dataset")
    return float(np.mean(predict_any(model, data.features) == data.labels))


def relabel(data: LabeledDataset, request: UnlearnRequest, seed: int) -> LabeledDataset:
    """Give every requested sample a uniformly drawn label different from its own."""
    request.validate(data)
    k = data.num_classes
    if k < 2:
        raise InvalidInput("relabeling needs at least two classes")
    rng = np.random.default_rng(seed)
    labels = np.array(data.labels, copy=True)
    for c in request.classes:
        ids = request.sorted_ids(c)
        shift = rng.integers(1, k, size=len(ids))
        labels[data.positions(ids)] = (c + shift) % k
    return data.with_labels(labels)


def amnesiac_unlearn(
    model_o: nnet.Model,
    data: LabeledDataset,
    request: UnlearnRequest,
    cfg: nnet.TrainConfig,
    seed: int,
) -> UnlearnOutcome:
    """Relabel the requested samples and keep training ``model_o`` on the full set."""
    relabeled = relabel(data, request, seed)
    model_u = nnet.train(model_o, relabeled.features, relabeled.labels, cfg)
    return UnlearnOutcome(model_o, model_u, request)


# -- ensemble container -------------------------------------------------------

ENSEMBLE_MAGIC = b"TRUVRF-SISA"


def save_ensemble(ens: SisaEnsemble, path: str | Path) -> None:
    """Shard ID lists, then each sub-model in the single-model format.

    The training data is not stored; pass it back in to :func:`load_ensemble`.
    """
    cfg = ens.train_cfg
    parts = [
        ENSEMBLE_MAGIC,
        struct.pack("<IqdIIq", ens.k, ens.base_seed, cfg.learning_rate, cfg.epochs, cfg.batch_size, cfg.shuffle_seed),
    ]
    for (sid, ids), gen, model in zip(ens.shards, ens.generations, ens.sub_models):
        ordered = np.array(sorted(ids), dtype="<i8")
        blob = nnet.model_to_bytes(model)
        parts.append(struct.pack("<IIQQ", sid, gen, len(ordered), len(blob)))
        parts.append(ordered.tobytes())
        parts.append(blob)
    Path(path).write_bytes(b"".join(parts))


def load_ensemble(path: str | Path, data: LabeledDataset) -> SisaEnsemble:
    buf = Path(path).read_bytes()
    if not buf.startswith(ENSEMBLE_MAGIC):
        raise FormatError(f"{path}: not a TRUVRF-SISA file")
    pos = len(ENSEMBLE_MAGIC)
    head = struct.Struct("<IqdIIq")
    try:
        k, base_seed, lr, epochs, batch, shuffle = head.unpack_from(buf, pos)
        pos += head.size
        cfg = nnet.TrainConfig(lr, epochs, batch, shuffle)
        shards, gens, subs = [], [], []
        rec = struct.Struct("<IIQQ")
        for _ in range(k):
            sid, gen, n_ids, n_blob = rec.unpack_from(buf, pos)
            pos += rec.size
            ids = np.frombuffer(buf, "<i8", n_ids, pos)
            pos += 8 * n_ids
            model, used = nnet.model_from_bytes(buf[pos : pos + n_blob])
            if used != n_blob:
                raise FormatError("sub-model record length mismatch")
            pos += n_blob
            shards.append((sid, frozenset(int(x) for x in ids)))
            gens.append(gen)
            subs.append(model)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated ensemble file") from exc
    if pos != len(buf):
        raise FormatError(f"{path}: trailing bytes")
    # after unlearning the shards cover only part of the original data
    covered = frozenset().union(*(ids for _, ids in shards))
    if not covered <= frozenset(int(x) for x in data.ids):
        raise FormatError(f"{path}: shards reference IDs missing from the supplied dataset")
    return SisaEnsemble(data, tuple(shards), tuple(subs), cfg, base_seed, tuple(gens))
