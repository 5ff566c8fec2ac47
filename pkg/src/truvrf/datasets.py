"""Labelled datasets with stable sample IDs, unlearning requests and file formats."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError, InfeasibleScenario, InvalidInput

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DATA_MAGIC = b"TRUVRF-DATA"
DATA_FORMAT_VERSION = 1


def _readonly(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Samples as parallel arrays ``ids``, ``features`` and ``labels``.

    A sample's ``(id, features, label)`` triple never changes under slicing;
    every derived dataset keeps the original IDs.
    """

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        ids = _readonly(self.ids, np.int64).ravel()
        labels = _readonly(self.labels, np.int64).ravel()
        feats = _readonly(self.features, np.float64)
        if feats.ndim == 1:
            feats = _readonly(feats.reshape(len(ids), -1), np.float64)
        if not (len(ids) == len(labels) == feats.shape[0]):
            raise InvalidInput("ids, labels and features must have the same length")
        if len(np.unique(ids)) != len(ids):
            raise InvalidInput("sample IDs must be unique")
        if self.num_classes < 1:
            raise InvalidInput("num_classes must be positive")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidInput("label out of range")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "_pos", {int(i): k for k, i in enumerate(ids)})

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_index(self) -> dict[int, list[int]]:
        """Class -> IDs of that class, in dataset order."""
        return {c: [int(i) for i in self.ids[self.labels == c]] for c in range(self.num_classes)}

    def class_counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.num_classes).tolist()

    def ids_of_class(self, c: int) -> np.ndarray:
        return self.ids[self.labels == c]

    def contains(self, sample_id: int) -> bool:
        return int(sample_id) in self._pos

    def label_of(self, sample_id: int) -> int:
        return int(self.labels[self._pos[int(sample_id)]])

    def positions(self, ids: Iterable[int]) -> np.ndarray:
        try:
            return np.array([self._pos[int(i)] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise InvalidInput(f"unknown sample ID {exc.args[0]}") from None

    def select(self, ids: Iterable[int]) -> "LabeledDataset":
        """Subset in the order the IDs are given."""
        pos = self.positions(ids)
        return LabeledDataset(self.ids[pos], self.features[pos], self.labels[pos], self.num_classes)

    def select_mask(self, mask: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.ids[mask], self.features[mask], self.labels[mask], self.num_classes)

    def of_class(self, c: int) -> "LabeledDataset":
        return self.select_mask(self.labels == c)

    def with_labels(self, labels: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.ids, self.features, labels, self.num_classes)

    def same_as(self, other: "LabeledDataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.labels, other.labels)
            and self.features.tobytes() == other.features.tobytes()
        )


def concat(parts: Iterable[LabeledDataset]) -> LabeledDataset:
    parts = list(parts)
    if not parts:
        raise InvalidInput("nothing to concatenate")
    k = parts[0].num_classes
    dim = parts[0].dim
    return LabeledDataset(
        np.concatenate([p.ids for p in parts]),
        np.concatenate([p.features for p in parts]).reshape(-1, dim),
        np.concatenate([p.labels for p in parts]),
        k,
    )


@dataclass(frozen=True)
class UnlearnRequest:
    """Per-class sets of sample IDs a contributor asks the server to forget."""

    per_class: Mapping[int, frozenset]

    def __post_init__(self):
        clean = {
            int(c): frozenset(int(i) for i in ids)
            for c, ids in sorted(self.per_class.items())
            if len(ids)
        }
        object.__setattr__(self, "per_class", clean)

    @classmethod
    def empty(cls) -> "UnlearnRequest":
        return cls({})

    @classmethod
    def from_ids(cls, data: LabeledDataset, ids: Iterable[int]) -> "UnlearnRequest":
        per_class: dict[int, set] = {}
        for i in ids:
            if not data.contains(i):
                raise InvalidInput(f"unknown sample ID {i}")
            per_class.setdefault(data.label_of(i), set()).add(int(i))
        return cls({c: frozenset(s) for c, s in per_class.items()})

    def volume(self, c: int) -> int:
        return len(self.per_class.get(c, ()))

    @property
    def volumes(self) -> dict[int, int]:
        return {c: len(ids) for c, ids in self.per_class.items()}

    @property
    def total(self) -> int:
        return sum(len(ids) for ids in self.per_class.values())

    @property
    def classes(self) -> list[int]:
        return sorted(self.per_class)

    def all_ids(self) -> frozenset:
        out: set = set()
        for ids in self.per_class.values():
            out |= ids
        return frozenset(out)

    def sorted_ids(self, c: int) -> list[int]:
        return sorted(self.per_class.get(c, ()))

    def validate(self, data: LabeledDataset) -> None:
        for c, ids in self.per_class.items():
            for i in ids:
                if not data.contains(i):
                    raise InvalidInput(f"unknown sample ID {i}")
                if data.label_of(i) != c:
                    raise InvalidInput(f"sample {i} is not of class {c}")

    def to_dict(self) -> dict:
        return {str(c): sorted(ids) for c, ids in self.per_class.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "UnlearnRequest":
        return cls({int(c): frozenset(ids) for c, ids in d.items()})


def gen_synthetic(
    num_classes: int,
    per_class: int | Sequence[int],
    dim: int,
    separation: float,
    seed: int,
    sigma: float = 1.0,
) -> LabeledDataset:
    """Isotropic Gaussian clusters, one per class.

    Class means sit on a regular simplex with edge ``separation * sigma``,
    randomly rotated into ``dim`` dimensions, so every pair of means is at
    exactly the requested distance.  Samples are generated class by class and
    numbered 0..N-1 in that order.
    """
    if num_classes < 2:
        raise InvalidInput("need at least two classes")
    if isinstance(per_class, (int, np.integer)):
        per_class = [int(per_class)] * num_classes
    per_class = [int(n) for n in per_class]
    if len(per_class) != num_classes:
        raise InvalidInput("per_class must list one count per class")
    if any(n < 0 for n in per_class):
        raise InvalidInput("class counts must be nonnegative")
    if not separation > 0:
        raise InvalidInput("separation must be positive")
    if dim < num_classes - 1:
        raise InvalidInput(
            f"dim={dim} cannot hold {num_classes} equidistant means (need >= {num_classes - 1})"
        )
    rng = np.random.default_rng(seed)
    # simplex vertices: centred one-hots, expressed in an orthonormal basis of their span
    centred = np.eye(num_classes) - 1.0 / num_classes
    q, _ = np.linalg.qr(centred.T)
    simplex = centred @ q[:, : num_classes - 1]
    simplex *= separation * sigma / np.sqrt(2.0)
    rot, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    means = simplex @ rot[: num_classes - 1, :]

    feats = []
    labels = []
    for c, n in enumerate(per_class):
        feats.append(means[c] + sigma * rng.standard_normal((n, dim)))
        labels.append(np.full(n, c, dtype=np.int64))
    total = sum(per_class)
    return LabeledDataset(
        np.arange(total, dtype=np.int64),
        np.concatenate(feats).reshape(total, dim),
        np.concatenate(labels),
        num_classes,
    )


def remove(data: LabeledDataset, request: UnlearnRequest) -> LabeledDataset:
    request.validate(data)
    drop = request.all_ids()
    if not drop:
        return data
    keep = np.array([int(i) not in drop for i in data.ids], dtype=bool)
    return data.select_mask(keep)


def sample_disjoint(data: LabeledDataset, request: UnlearnRequest, seed: int) -> UnlearnRequest:
    """Same classes and volumes as ``request``, drawn from IDs it does not name."""
    request.validate(data)
    rng = np.random.default_rng(seed)
    out = {}
    for c in request.classes:
        k = request.volume(c)
        pool = np.array(
            sorted(int(i) for i in data.ids_of_class(c) if int(i) not in request.per_class[c])
        )
        if len(pool) < k:
            raise InfeasibleScenario(
                f"class {c}: {len(pool)} irrelevant samples available, {k} needed"
            )
        out[c] = frozenset(int(i) for i in rng.choice(pool, size=k, replace=False))
    return UnlearnRequest(out)


def random_request(data: LabeledDataset, volumes: Mapping[int, int], seed: int) -> UnlearnRequest:
    """Draw ``volumes[c]`` IDs of class ``c`` uniformly without replacement."""
    rng = np.random.default_rng(seed)
    out = {}
    for c, k in sorted(volumes.items()):
        pool = np.sort(data.ids_of_class(c))
        if k > len(pool):
            raise InfeasibleScenario(f"class {c} has {len(pool)} samples, {k} requested")
        out[c] = frozenset(int(i) for i in rng.choice(pool, size=k, replace=False))
    return UnlearnRequest(out)


def split_per_class(
    data: LabeledDataset, counts: Mapping[int, int], seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Take ``counts[c]`` random samples of each class out; returns (taken, rest)."""
    rng = np.random.default_rng(seed)
    taken: list[int] = []
    for c, k in sorted(counts.items()):
        pool = np.sort(data.ids_of_class(c))
        if k > len(pool):
            raise InfeasibleScenario(f"class {c} has {len(pool)} samples, {k} requested")
        taken.extend(int(i) for i in rng.choice(pool, size=k, replace=False))
    chosen = set(taken)
    mask = np.array([int(i) in chosen for i in data.ids], dtype=bool)
    return data.select_mask(mask), data.select_mask(~mask)


# -- IDX ------------------------------------------------------------------


def _read_idx(path: str | Path, magic: int, ndim: int) -> np.ndarray:
    buf = Path(path).read_bytes()
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise FormatError(f"{path}: truncated IDX header")
    found = struct.unpack_from(">I", buf, 0)[0]
    if found != magic:
        raise FormatError(f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}")
    shape = struct.unpack_from(f">{ndim}I", buf, 4)
    size = int(np.prod(shape))
    if len(buf) != header + size:
        raise FormatError(f"{path}: expected {size} payload bytes, found {len(buf) - header}")
    return np.frombuffer(buf, dtype=np.uint8, offset=header).reshape(shape)


def load_idx(images_path: str | Path, labels_path: str | Path, num_classes: int | None = None) -> LabeledDataset:
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}"
        )
    n = images.shape[0]
    if num_classes is None:
        num_classes = max(int(labels.max()) + 1 if n else 2, 2)
    feats = images.reshape(n, -1).astype(np.float64) / 255.0
    return LabeledDataset(np.arange(n, dtype=np.int64), feats, labels, num_classes)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str | Path, labels_path: str | Path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
        raise InvalidInput("expected images of shape (n, rows, cols) and n labels")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


# -- columnar binary --------------------------------------------------------

_DATA_HEADER = struct.Struct("<11sIQII")


def save_dataset(data: LabeledDataset, path: str | Path) -> None:
    """Header, then the id column, the label column and one column per feature."""
    with open(path, "wb") as f:
        f.write(_DATA_HEADER.pack(DATA_MAGIC, DATA_FORMAT_VERSION, len(data), data.dim, data.num_classes))
        f.write(data.ids.astype("<i8").tobytes())
        f.write(data.labels.astype("<i8").tobytes())
        f.write(np.asfortranarray(data.features).astype("<f8").tobytes(order="F"))


def load_dataset(path: str | Path) -> LabeledDataset:
    buf = Path(path).read_bytes()
    if len(buf) < _DATA_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, dim, k = _DATA_HEADER.unpack_from(buf, 0)
    if magic != DATA_MAGIC:
        raise FormatError(f"{path}: not a TRUVRF-DATA file")
    if version != DATA_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    pos = _DATA_HEADER.size
    if len(buf) != pos + 8 * n * (2 + dim):
        raise FormatError(f"{path}: payload size does not match header")
    ids = np.frombuffer(buf, "<i8", n, pos)
    labels = np.frombuffer(buf, "<i8", n, pos + 8 * n)
    feats = np.frombuffer(buf, "<f8", n * dim, pos + 16 * n).reshape((n, dim), order="F")
    return LabeledDataset(ids, feats, labels, k)
