"""Cell and fusion search space: types, uniform samplers, exact counting, canonical JSON.

Draw order is part of the contract so that a seed pins the sampled
architecture byte-for-byte:

* cell, layer l = 1..L:  operation (1 draw), activation (1 draw), then the
  l-1 skip bits for earlier layers in ascending order (1 draw each);
* fusion, depth d = 1..D:  tap bits for modality x over cells 1..min(d, C1),
  then modality y over cells 1..min(d, C2), then the activation draw. A
  depth-1 tap set that comes up all-zero is redrawn (both modalities); with
  p == 0 the redraw would never end, so the first x tap is forced instead;
* an architecture is cell for modality 1, cell for modality 2, fusion, in
  that order from a single stream.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum

from .rng import Rng

SCHEMA_VERSION = 1


class SpecFormatError(ValueError):
    """Malformed architecture JSON; message names the offending field."""


class OperationKind(Enum):
    CONV3X3 = "conv3x3"
    CONV5X5 = "conv5x5"
    SEP_CONV3X3 = "sep_conv3x3"
    SEP_CONV5X5 = "sep_conv5x5"
    MAX_POOL3X3 = "max_pool3x3"
    AVG_POOL3X3 = "avg_pool3x3"


class ActivationKind(Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"
    SIGMOID = "sigmoid"


_OPS = tuple(OperationKind)
_ACTS = tuple(ActivationKind)


@dataclass(frozen=True)
class LayerSpec:
    op: OperationKind
    activation: ActivationKind
    skips: tuple[int, ...]  # one bit per earlier layer; layer 1 has ()


@dataclass(frozen=True)
class CellSpec:
    layers: tuple[LayerSpec, ...]

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class FusionLayerSpec:
    activation: ActivationKind
    taps_x: tuple[int, ...]  # bit per cell 1..min(d, C1)
    taps_y: tuple[int, ...]  # bit per cell 1..min(d, C2)


@dataclass(frozen=True)
class FusionSpec:
    layers: tuple[FusionLayerSpec, ...]

    @property
    def depth(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class ArchitectureSpec:
    cell_x: CellSpec
    cell_y: CellSpec
    repeats: tuple[int, int]
    fusion: FusionSpec
    width: int
    fusion_width: int
    num_classes: int


@dataclass(frozen=True)
class SearchSpaceConfig:
    num_layers: int = 5
    fusion_depth: int = 3
    repeats: tuple[int, int] = (3, 3)
    skip_prob: float = 0.5
    width: int = 16
    fusion_width: int = 64
    num_classes: int = 16

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")
        if min(self.repeats) < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.fusion_depth < max(self.repeats):
            raise ValueError(
                f"fusion_depth {self.fusion_depth} below max cell repeats {max(self.repeats)}"
            )
        if not 0.0 <= self.skip_prob <= 1.0:
            raise ValueError(f"skip_prob must be in [0, 1], got {self.skip_prob}")
        for name in ("width", "fusion_width", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def sample_cell(cfg: SearchSpaceConfig, rng: Rng, modality: int) -> CellSpec:
    """One cell: per layer, uniform op, uniform activation, Bernoulli skip bits."""
    del modality  # both modalities share one op/activation set in v1
    layers = []
    for l in range(1, cfg.num_layers + 1):
        op = _OPS[rng.randrange(len(_OPS))]
        act = _ACTS[rng.randrange(len(_ACTS))]
        skips = tuple(int(rng.bernoulli(cfg.skip_prob)) for _ in range(l - 1))
        layers.append(LayerSpec(op, act, skips))
    return CellSpec(tuple(layers))


def _draw_fusion_masks(cfg: SearchSpaceConfig, rng: Rng, d: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    c1, c2 = cfg.repeats
    taps_x = tuple(int(rng.bernoulli(cfg.skip_prob)) for _ in range(min(d, c1)))
    taps_y = tuple(int(rng.bernoulli(cfg.skip_prob)) for _ in range(min(d, c2)))
    return taps_x, taps_y


def sample_fusion(cfg: SearchSpaceConfig, rng: Rng) -> FusionSpec:
    """Fusion stack: Bernoulli tap masks per depth, uniform activation per depth.

    Depth 1 has no carried-in feature, so an empty tap set there is
    meaningless; it is redrawn, except at p == 0 where the first x tap is
    forced deterministically.
    """
    layers = []
    for d in range(1, cfg.fusion_depth + 1):
        taps_x, taps_y = _draw_fusion_masks(cfg, rng, d)
        if d == 1:
            if cfg.skip_prob == 0.0:
                taps_x = (1,) + taps_x[1:]
            else:
                while not any(taps_x) and not any(taps_y):
                    taps_x, taps_y = _draw_fusion_masks(cfg, rng, d)
        act = _ACTS[rng.randrange(len(_ACTS))]
        layers.append(FusionLayerSpec(act, taps_x, taps_y))
    return FusionSpec(tuple(layers))


def sample_architecture(cfg: SearchSpaceConfig, rng: Rng) -> ArchitectureSpec:
    cell_x = sample_cell(cfg, rng, modality=1)
    cell_y = sample_cell(cfg, rng, modality=2)
    fusion = sample_fusion(cfg, rng)
    return ArchitectureSpec(
        cell_x=cell_x,
        cell_y=cell_y,
        repeats=cfg.repeats,
        fusion=fusion,
        width=cfg.width,
        fusion_width=cfg.fusion_width,
        num_classes=cfg.num_classes,
    )


def cell_cardinality(num_layers: int) -> int:
    """Exact count of raw cell configurations: 6^L * 4^L * 2^(L(L-1)/2)."""
    if num_layers < 1:
        raise ValueError(f"num_layers must be >= 1, got {num_layers}")
    L = num_layers
    return 6**L * 4**L * 2 ** (L * (L - 1) // 2)


def fusion_cardinality(depth: int, repeats: int) -> int:
    """Exact count of raw fusion configurations the sampler can emit.

    Counts activations times tap masks, 4^D * 2^(2 * sum_d min(d, C)),
    before the depth-1 all-zero redraw; the redraw folds rejected masks onto
    accepted ones and is documented rather than counted.
    """
    if not depth >= repeats >= 1:
        raise ValueError(f"need depth >= repeats >= 1, got ({depth}, {repeats})")
    tap_bits = 2 * sum(min(d, repeats) for d in range(1, depth + 1))
    return 4**depth * 2**tap_bits


def validate(spec: ArchitectureSpec, cfg: SearchSpaceConfig | None = None) -> list[str]:
    """Collect every invariant violation; an empty list means the spec is sound."""
    problems = []
    c1, c2 = spec.repeats
    if c1 < 1 or c2 < 1:
        problems.append(f"repeats below 1: {spec.repeats}")
    for name, cell in (("x", spec.cell_x), ("y", spec.cell_y)):
        if cell.num_layers < 1:
            problems.append(f"cell {name} has no layers")
        for idx, layer in enumerate(cell.layers, start=1):
            if len(layer.skips) != idx - 1:
                problems.append(
                    f"skip vector length: cell {name} layer {idx} has "
                    f"{len(layer.skips)} bits, expected {idx - 1}"
                )
    if spec.fusion.depth < max(c1, c2):
        problems.append(
            f"fusion depth below cell count: depth {spec.fusion.depth} < {max(c1, c2)}"
        )
    for d, layer in enumerate(spec.fusion.layers, start=1):
        if len(layer.taps_x) != min(d, c1):
            problems.append(
                f"taps_x length at depth {d}: got {len(layer.taps_x)}, expected {min(d, c1)}"
            )
        if len(layer.taps_y) != min(d, c2):
            problems.append(
                f"taps_y length at depth {d}: got {len(layer.taps_y)}, expected {min(d, c2)}"
            )
        if d == 1 and not any(layer.taps_x) and not any(layer.taps_y):
            problems.append("fusion depth 1 has no taps set")
    for name in ("width", "fusion_width", "num_classes"):
        if getattr(spec, name) < 1:
            problems.append(f"{name} below 1")
    if cfg is not None:
        if spec.cell_x.num_layers != cfg.num_layers or spec.cell_y.num_layers != cfg.num_layers:
            problems.append(
                f"layer count mismatch with config: expected {cfg.num_layers}"
            )
        if spec.repeats != cfg.repeats:
            problems.append(f"repeats mismatch with config: {spec.repeats} != {cfg.repeats}")
        if spec.fusion.depth != cfg.fusion_depth:
            problems.append(
                f"fusion depth mismatch with config: {spec.fusion.depth} != {cfg.fusion_depth}"
            )
    return problems


# --- canonical JSON -------------------------------------------------------


def _cell_to_obj(cell: CellSpec) -> list[dict]:
    return [
        {"op": l.op.value, "activation": l.activation.value, "skips": list(l.skips)}
        for l in cell.layers
    ]


def to_json_obj(spec: ArchitectureSpec) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "cells": {"x": _cell_to_obj(spec.cell_x), "y": _cell_to_obj(spec.cell_y)},
        "repeats": list(spec.repeats),
        "fusion": [
            {
                "activation": l.activation.value,
                "taps_x": list(l.taps_x),
                "taps_y": list(l.taps_y),
            }
            for l in spec.fusion.layers
        ],
        "width": spec.width,
        "fusion_width": spec.fusion_width,
        "num_classes": spec.num_classes,
    }


def serialize(spec: ArchitectureSpec) -> str:
    """Canonical form: sorted keys, compact separators, integers only."""
    return json.dumps(to_json_obj(spec), sort_keys=True, separators=(",", ":"))


def canonical_hash(spec: ArchitectureSpec) -> str:
    """64-bit digest over canonical bytes, as 16 hex chars."""
    return hashlib.blake2b(serialize(spec).encode(), digest_size=8).hexdigest()


def _want(obj, key, kind, path):
    if not isinstance(obj, dict) or key not in obj:
        raise SpecFormatError(f"{path}: missing field '{key}'")
    val = obj[key]
    if kind is int and (not isinstance(val, int) or isinstance(val, bool)):
        raise SpecFormatError(f"{path}.{key}: expected integer, got {type(val).__name__}")
    if kind in (list, dict, str) and not isinstance(val, kind):
        raise SpecFormatError(f"{path}.{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def _bits(raw, path) -> tuple[int, ...]:
    if not isinstance(raw, list) or any(b not in (0, 1) or isinstance(b, bool) for b in raw):
        raise SpecFormatError(f"{path}: expected a list of 0/1 bits")
    return tuple(raw)


def _cell_from_obj(raw: list, path: str) -> CellSpec:
    layers = []
    for i, item in enumerate(raw):
        lp = f"{path}[{i}]"
        op_name = _want(item, "op", str, lp)
        act_name = _want(item, "activation", str, lp)
        try:
            op = OperationKind(op_name)
        except ValueError:
            raise SpecFormatError(f"{lp}.op: unknown operation '{op_name}'") from None
        try:
            act = ActivationKind(act_name)
        except ValueError:
            raise SpecFormatError(f"{lp}.activation: unknown activation '{act_name}'") from None
        skips = _bits(_want(item, "skips", list, lp), f"{lp}.skips")
        if len(skips) != i:
            raise SpecFormatError(f"{lp}.skips: expected length {i}, got {len(skips)}")
        layers.append(LayerSpec(op, act, skips))
    if not layers:
        raise SpecFormatError(f"{path}: cell has no layers")
    return CellSpec(tuple(layers))


def deserialize(text: str) -> ArchitectureSpec:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise SpecFormatError(f"line {err.lineno} column {err.colno}: {err.msg}") from None
    version = _want(obj, "schema_version", int, "$")
    if version != SCHEMA_VERSION:
        raise SpecFormatError(f"$.schema_version: unsupported version {version}")
    cells = _want(obj, "cells", dict, "$")
    cell_x = _cell_from_obj(_want(cells, "x", list, "$.cells"), "$.cells.x")
    cell_y = _cell_from_obj(_want(cells, "y", list, "$.cells"), "$.cells.y")
    repeats_raw = _want(obj, "repeats", list, "$")
    if len(repeats_raw) != 2 or not all(isinstance(r, int) and r >= 1 for r in repeats_raw):
        raise SpecFormatError("$.repeats: expected two positive integers")
    fusion_layers = []
    for d, item in enumerate(_want(obj, "fusion", list, "$"), start=1):
        fp = f"$.fusion[{d - 1}]"
        act_name = _want(item, "activation", str, fp)
        try:
            act = ActivationKind(act_name)
        except ValueError:
            raise SpecFormatError(f"{fp}.activation: unknown activation '{act_name}'") from None
        taps_x = _bits(_want(item, "taps_x", list, fp), f"{fp}.taps_x")
        taps_y = _bits(_want(item, "taps_y", list, fp), f"{fp}.taps_y")
        fusion_layers.append(FusionLayerSpec(act, taps_x, taps_y))
    if not fusion_layers:
        raise SpecFormatError("$.fusion: fusion has no layers")
    spec = ArchitectureSpec(
        cell_x=cell_x,
        cell_y=cell_y,
        repeats=(repeats_raw[0], repeats_raw[1]),
        fusion=FusionSpec(tuple(fusion_layers)),
        width=_want(obj, "width", int, "$"),
        fusion_width=_want(obj, "fusion_width", int, "$"),
        num_classes=_want(obj, "num_classes", int, "$"),
    )
    problems = validate(spec)
    if problems:
        raise SpecFormatError(problems[0])
    return spec
