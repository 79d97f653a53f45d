"""Bi-modal datasets: synthetic generator, binary tensor files, manifests, batching.

Tensor file format (little-endian, extension .rntf):

    magic   b"RNTF"
    version u32 = 1
    dtype   u32   1 = float32, 2 = int64
    rank    u32
    dims    u64 * rank
    payload row-major

A dataset directory holds one manifest.json naming per-split tensor files
for each modality plus the label file; splits are stored contiguously in
the order train, val, test.

The synthetic task plants a bright horizontal band in modality x at row
block (label mod k_a) and a bright vertical band in modality y at column
block (label div k_a), plus Gaussian pixel noise. Each modality alone pins
the label only up to its own factor, so the best unimodal accuracies are
1/k_b (x) and 1/k_a (y) while both together identify the label exactly.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .rng import Rng

_MAGIC = b"RNTF"
_VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<i8")}
_CODES = {np.dtype("float32"): 1, np.dtype("int64"): 2}

SPLIT_ORDER = ("train", "val", "test")


class DataFormatError(ValueError):
    pass


class BadMagicError(DataFormatError):
    pass


class ShortFileError(DataFormatError):
    pass


class ManifestError(DataFormatError):
    pass


@dataclass
class BiModalDataset:
    x: np.ndarray  # (N, Cx, Hx, Wx) float32
    y: np.ndarray  # (N, Cy, Hy, Wy) float32
    labels: np.ndarray  # (N,) int64 in [0, num_classes)
    splits: dict[str, tuple[int, int]]  # name -> [start, stop)
    num_classes: int

    def __post_init__(self):
        n = len(self.labels)
        if len(self.x) != n or len(self.y) != n:
            raise ManifestError(
                f"modalities misaligned: x has {len(self.x)}, y has {len(self.y)}, labels {n}"
            )
        covered = sorted(self.splits.values())
        pos = 0
        for start, stop in covered:
            if start != pos:
                raise ManifestError(f"splits not disjoint/exhaustive at offset {pos}")
            pos = stop
        if pos != n:
            raise ManifestError(f"splits cover {pos} of {n} samples")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ManifestError(
                f"label out of range [0, {self.num_classes}): found {self.labels.min()}..{self.labels.max()}"
            )

    def split_count(self, split: str) -> int:
        start, stop = self.splits[split]
        return stop - start

    def split_arrays(self, split: str):
        start, stop = self.splits[split]
        return self.x[start:stop], self.y[start:stop], self.labels[start:stop]


@dataclass(frozen=True)
class SyntheticConfig:
    k_a: int = 4
    k_b: int = 4
    image_size: int = 16
    sigma: float = 0.25
    counts: tuple[int, int, int] = (4000, 500, 2000)  # train, val, test
    seed: int = 0

    def __post_init__(self):
        if self.k_a < 2 or self.k_b < 2:
            raise ValueError(f"k_a and k_b must be >= 2, got {self.k_a}, {self.k_b}")
        if self.image_size < max(self.k_a, self.k_b):
            raise ValueError(
                f"image size {self.image_size} smaller than {max(self.k_a, self.k_b)} blocks"
            )

    @property
    def num_classes(self) -> int:
        return self.k_a * self.k_b

    @property
    def unimodal_ceiling_x(self) -> float:
        return 1.0 / self.k_b

    @property
    def unimodal_ceiling_y(self) -> float:
        return 1.0 / self.k_a

    @property
    def unimodal_ceiling(self) -> float:
        return max(self.unimodal_ceiling_x, self.unimodal_ceiling_y)


def generate_synthetic(cfg: SyntheticConfig) -> BiModalDataset:
    """Deterministic from the seed: labels first, then x noise, then y noise."""
    n = sum(cfg.counts)
    size = cfg.image_size
    rng = Rng(cfg.seed)
    labels = np.array([rng.randrange(cfg.num_classes) for _ in range(n)], dtype=np.int64)

    x = np.zeros((n, 1, size, size), dtype=np.float32)
    row_block = labels % cfg.k_a
    row_lo = row_block * size // cfg.k_a
    row_hi = (row_block + 1) * size // cfg.k_a
    for i in range(n):
        x[i, 0, row_lo[i] : row_hi[i], :] = 1.0
    if cfg.sigma > 0:
        x += (cfg.sigma * rng.normal_array(n * size * size)).astype(np.float32).reshape(x.shape)

    y = np.zeros((n, 1, size, size), dtype=np.float32)
    col_block = labels // cfg.k_a
    col_lo = col_block * size // cfg.k_b
    col_hi = (col_block + 1) * size // cfg.k_b
    for i in range(n):
        y[i, 0, :, col_lo[i] : col_hi[i]] = 1.0
    if cfg.sigma > 0:
        y += (cfg.sigma * rng.normal_array(n * size * size)).astype(np.float32).reshape(y.shape)

    bounds = np.cumsum((0,) + cfg.counts)
    splits = {name: (int(bounds[i]), int(bounds[i + 1])) for i, name in enumerate(SPLIT_ORDER)}
    return BiModalDataset(x=x, y=y, labels=labels, splits=splits, num_classes=cfg.num_classes)


# --- tensor files ----------------------------------------------------------


def write_tensor(path, array: np.ndarray) -> None:
    code = _CODES.get(array.dtype)
    if code is None:
        raise DataFormatError(f"unsupported dtype {array.dtype}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, code, array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(np.ascontiguousarray(array).tobytes())


def read_tensor_header(path) -> tuple[np.dtype, tuple[int, ...], int]:
    """(dtype, dims, header_size) parsed without touching the payload."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise ShortFileError(f"{path}: truncated header")
        if head[:4] != _MAGIC:
            raise BadMagicError(f"{path}: bad magic {head[:4]!r}")
        version, code, rank = struct.unpack("<III", head[4:16])
        if version != _VERSION:
            raise DataFormatError(f"{path}: unsupported version {version}")
        if code not in _DTYPES:
            raise DataFormatError(f"{path}: unknown dtype code {code}")
        raw = fh.read(8 * rank)
        if len(raw) < 8 * rank:
            raise ShortFileError(f"{path}: truncated dims")
        dims = struct.unpack(f"<{rank}Q", raw)
    return _DTYPES[code], dims, 16 + 8 * rank


def read_tensor(path) -> np.ndarray:
    dtype, dims, header = read_tensor_header(path)
    count = 1
    for d in dims:
        count *= d
    with open(path, "rb") as fh:
        fh.seek(header)
        payload = fh.read(count * dtype.itemsize)
    if len(payload) < count * dtype.itemsize:
        raise ShortFileError(
            f"{path}: short file, wanted {count * dtype.itemsize} payload bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def expected_file_size(path) -> int:
    dtype, dims, header = read_tensor_header(path)
    count = 1
    for d in dims:
        count *= d
    return header + count * dtype.itemsize


# --- manifests --------------------------------------------------------------


def _manifest_path(path) -> str:
    return os.path.join(path, "manifest.json") if os.path.isdir(path) else str(path)


def save(dataset: BiModalDataset, out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "schema_version": 1,
        "num_classes": dataset.num_classes,
        "modalities": {
            "x": {"shape": list(dataset.x.shape[1:])},
            "y": {"shape": list(dataset.y.shape[1:])},
        },
        "splits": {},
    }
    for name in SPLIT_ORDER:
        if name not in dataset.splits:
            continue
        xs, ys, zs = dataset.split_arrays(name)
        files = {
            "x": f"{name}_x.rntf",
            "y": f"{name}_y.rntf",
            "labels": f"{name}_labels.rntf",
        }
        write_tensor(os.path.join(out_dir, files["x"]), xs)
        write_tensor(os.path.join(out_dir, files["y"]), ys)
        write_tensor(os.path.join(out_dir, files["labels"]), zs.astype(np.int64))
        manifest["splits"][name] = {"count": len(zs), **files}
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_manifest_obj(path):
    mpath = _manifest_path(path)
    if not os.path.exists(mpath):
        raise ManifestError(f"no manifest at {mpath}")
    with open(mpath) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as err:
            raise ManifestError(f"{mpath}: {err.msg} at line {err.lineno}") from None
    for key in ("schema_version", "num_classes", "modalities", "splits"):
        if key not in manifest:
            raise ManifestError(f"{mpath}: missing '{key}'")
    if manifest["schema_version"] != 1:
        raise ManifestError(f"{mpath}: unsupported schema_version {manifest['schema_version']}")
    return manifest, os.path.dirname(mpath)


def validate_manifest(path) -> dict:
    """Header-and-size checks only; payloads are never read."""
    manifest, base = _load_manifest_obj(path)
    summary = {"num_classes": manifest["num_classes"], "splits": {}}
    for name, entry in manifest["splits"].items():
        count = entry["count"]
        for modality in ("x", "y"):
            fpath = os.path.join(base, entry[modality])
            dtype, dims, _ = read_tensor_header(fpath)
            want = tuple([count] + list(manifest["modalities"][modality]["shape"]))
            if dims != want:
                raise ManifestError(
                    f"{fpath}: manifest claims shape {want}, file header says {dims}"
                )
            if dtype != np.dtype("<f4"):
                raise ManifestError(f"{fpath}: modality tensors must be float32")
            actual = os.path.getsize(fpath)
            expected = expected_file_size(fpath)
            if actual != expected:
                raise ShortFileError(f"{fpath}: size {actual} != expected {expected}")
        lpath = os.path.join(base, entry["labels"])
        dtype, dims, _ = read_tensor_header(lpath)
        if dims != (count,):
            raise ManifestError(f"{lpath}: manifest claims {count} labels, header says {dims}")
        if dtype != np.dtype("<i8"):
            raise ManifestError(f"{lpath}: labels must be int64")
        if os.path.getsize(lpath) != expected_file_size(lpath):
            raise ShortFileError(f"{lpath}: wrong size for {count} labels")
        summary["splits"][name] = count
    return summary


def load_manifest(path) -> BiModalDataset:
    manifest, base = _load_manifest_obj(path)
    xs, ys, zs = [], [], []
    splits = {}
    pos = 0
    for name in SPLIT_ORDER:
        if name not in manifest["splits"]:
            continue
        entry = manifest["splits"][name]
        x = read_tensor(os.path.join(base, entry["x"]))
        y = read_tensor(os.path.join(base, entry["y"]))
        z = read_tensor(os.path.join(base, entry["labels"]))
        count = entry["count"]
        for label, arr in (("x", x), ("y", y), ("labels", z)):
            if len(arr) != count:
                raise ManifestError(
                    f"{entry[label]}: manifest claims {count} samples, file has {len(arr)}"
                )
        xs.append(x.astype(np.float32, copy=False))
        ys.append(y.astype(np.float32, copy=False))
        zs.append(z.astype(np.int64, copy=False))
        splits[name] = (pos, pos + count)
        pos += count
    if not splits:
        raise ManifestError("manifest names no splits")
    return BiModalDataset(
        x=np.concatenate(xs),
        y=np.concatenate(ys),
        labels=np.concatenate(zs),
        splits=splits,
        num_classes=manifest["num_classes"],
    )


# --- batching ---------------------------------------------------------------


def batches(dataset: BiModalDataset, split: str, batch_size: int, rng: Rng):
    """One epoch of shuffled batches; the last partial batch is included."""
    xs, ys, zs = dataset.split_arrays(split)
    n = len(zs)
    if n == 0:
        raise ManifestError(f"split '{split}' is empty")
    order = np.arange(n)
    rng.shuffle(order)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        yield xs[idx], ys[idx], zs[idx]


def batch_stream(dataset: BiModalDataset, split: str, batch_size: int, rng: Rng):
    """Endless epochs, reshuffled from the same stream each time."""
    while True:
        yield from batches(dataset, split, batch_size, rng)
