"""Shared-weight registry: parameters persist across sampled architectures.

Keys encode structural position only (scope, modality, cell, layer, op kind,
fusion depth), so two architectures that place the same op at the same
position reuse one parameter set. Optimizer moments live next to each
tensor and persist the same way.

Snapshot format (little-endian, file extension .rnps):

    magic   b"RNPS"
    version u32 = 1
    rng     u64   init-stream state
    count   u32   number of entries
    entry   key_len u16, key utf8,
            n_tensors u8, then per tensor:
              name_len u16, name utf8,
              rank u8, dims u64 * rank,
              float32 payload,
              adam step u64, adam m float32 payload, adam v float32 payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .engine.adam import AdamState
from .engine.tensor import Tensor
from .rng import Rng

_MAGIC = b"RNPS"
_VERSION = 1


class SnapshotFormatError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ParamKey:
    scope: str  # "feature" | "fusion" | "head"
    modality: int = 0  # 1 or 2 in feature scope
    cell: int = 0  # 1..C in feature scope; 0 for the stem
    layer: int = 0  # 1..L in feature scope; 0 for the stem
    op: str = ""  # op kind name or "stem" in feature scope
    depth: int = 0  # 1..D in fusion scope

    def canonical(self) -> str:
        if self.scope == "feature":
            return f"feature:m{self.modality}:c{self.cell}:l{self.layer}:{self.op}"
        if self.scope == "fusion":
            return f"fusion:d{self.depth}"
        if self.scope == "head":
            return "head"
        raise ValueError(f"unknown scope '{self.scope}'")

    @classmethod
    def parse(cls, text: str) -> ParamKey:
        if text == "head":
            return cls("head")
        parts = text.split(":")
        if parts[0] == "fusion" and len(parts) == 2 and parts[1].startswith("d"):
            return cls("fusion", depth=int(parts[1][1:]))
        if parts[0] == "feature" and len(parts) == 5:
            return cls(
                "feature",
                modality=int(parts[1][1:]),
                cell=int(parts[2][1:]),
                layer=int(parts[3][1:]),
                op=parts[4],
            )
        raise SnapshotFormatError(f"unparseable parameter key '{text}'")


@dataclass
class ParamEntry:
    tensors: dict[str, Tensor] = field(default_factory=dict)
    adam: dict[str, AdamState] = field(default_factory=dict)

    def size(self) -> int:
        return sum(t.data.size for t in self.tensors.values())


class ParamStore:
    """Single-writer registry; snapshots may be taken between training steps."""

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.rng = Rng(seed)
        self.dtype = np.dtype(dtype)
        self.entries: dict[ParamKey, ParamEntry] = {}

    def get_or_init(
        self,
        key: ParamKey,
        shapes: dict[str, tuple[int, ...]],
        rng: Rng | None = None,
        zero_names: tuple[str, ...] = (),
    ) -> dict[str, Tensor]:
        """Allocate on first use, return the existing tensors untouched after.

        Tensors named 'bias' or listed in zero_names start at zero; everything
        else draws from U(-sqrt(6/fan_in), +sqrt(6/fan_in)) with
        fan_in = prod(shape[1:]).
        """
        entry = self.entries.get(key)
        if entry is not None:
            have = {name: t.shape for name, t in entry.tensors.items()}
            want = {name: tuple(s) for name, s in shapes.items()}
            if have != want:
                raise ValueError(
                    f"shape conflict for key {key.canonical()}: allocated {have}, requested {want}"
                )
            return entry.tensors
        rng = rng or self.rng
        entry = ParamEntry()
        for name, shape in shapes.items():
            shape = tuple(shape)
            if name == "bias" or name in zero_names:
                data = np.zeros(shape, dtype=self.dtype)
            else:
                fan_in = 1
                for dim in shape[1:]:
                    fan_in *= dim
                bound = float(np.sqrt(6.0 / fan_in))
                size = int(np.prod(shape))
                u = rng.uniform_array(size)
                data = ((u * 2.0 - 1.0) * bound).astype(self.dtype).reshape(shape)
            tensor = Tensor(data, requires_grad=True)
            entry.tensors[name] = tensor
            entry.adam[name] = AdamState.for_param(data)
        self.entries[key] = entry
        return entry.tensors

    def count_params(self, scope: str | None = None) -> int:
        return sum(e.size() for k, e in self.entries.items() if scope is None or k.scope == scope)

    def snapshot(self) -> bytes:
        if self.dtype != np.float32:
            raise SnapshotFormatError(f"snapshots are float32-only, store is {self.dtype}")
        chunks = [_MAGIC, struct.pack("<IQ", _VERSION, self.rng.state)]
        keys = sorted(self.entries)
        chunks.append(struct.pack("<I", len(keys)))
        for key in keys:
            entry = self.entries[key]
            name = key.canonical().encode()
            chunks.append(struct.pack("<H", len(name)) + name)
            chunks.append(struct.pack("<B", len(entry.tensors)))
            for tname, tensor in entry.tensors.items():
                raw = tname.encode()
                chunks.append(struct.pack("<H", len(raw)) + raw)
                dims = tensor.shape
                chunks.append(struct.pack("<B", len(dims)) + struct.pack(f"<{len(dims)}Q", *dims))
                chunks.append(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
                state = entry.adam[tname]
                chunks.append(struct.pack("<Q", state.t))
                chunks.append(np.ascontiguousarray(state.m, dtype="<f4").tobytes())
                chunks.append(np.ascontiguousarray(state.v, dtype="<f4").tobytes())
        return b"".join(chunks)

    @classmethod
    def restore(cls, blob: bytes) -> ParamStore:
        reader = _Reader(blob)
        if reader.take(4) != _MAGIC:
            raise SnapshotFormatError("bad magic: not a parameter snapshot")
        version, rng_state = struct.unpack("<IQ", reader.take(12))
        if version != _VERSION:
            raise SnapshotFormatError(f"unsupported snapshot version {version}")
        store = cls()
        store.rng.state = rng_state
        (count,) = struct.unpack("<I", reader.take(4))
        for _ in range(count):
            (key_len,) = struct.unpack("<H", reader.take(2))
            key = ParamKey.parse(reader.take(key_len).decode())
            (n_tensors,) = struct.unpack("<B", reader.take(1))
            entry = ParamEntry()
            for _ in range(n_tensors):
                (name_len,) = struct.unpack("<H", reader.take(2))
                tname = reader.take(name_len).decode()
                (rank,) = struct.unpack("<B", reader.take(1))
                dims = struct.unpack(f"<{rank}Q", reader.take(8 * rank))
                size = 1
                for d in dims:
                    size *= d
                data = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(dims).copy()
                (t,) = struct.unpack("<Q", reader.take(8))
                m = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(dims).copy()
                v = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(dims).copy()
                entry.tensors[tname] = Tensor(data, requires_grad=True)
                entry.adam[tname] = AdamState(m=m, v=v, t=t)
            store.entries[key] = entry
        if reader.pos != len(blob):
            raise SnapshotFormatError(f"trailing bytes after entry {count}")
        return store

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.snapshot())

    @classmethod
    def load(cls, path) -> ParamStore:
        with open(path, "rb") as fh:
            return cls.restore(fh.read())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise SnapshotFormatError(
                f"short file: wanted {n} bytes at offset {self.pos}, have {len(self.blob) - self.pos}"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out
