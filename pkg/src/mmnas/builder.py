"""Compile an architecture spec into an executable forward/backward network.

Per modality: a 3x3 stem conv maps input channels to the working width,
then the cell repeats. Inside a cell, layer l always consumes layer l-1
(layer 1 consumes the cell input) and adds every skip-selected earlier
output elementwise; a skip bit aimed at the immediately preceding layer is
absorbed by that always-present chain edge. After every cell except the
last, a 2x2 stride-2 max-pool halves the resolution. Every cell output is
tapped through global average pooling into a width-sized vector, taken
before the reduction.

The fusion stack at depth d concatenates the selected taps from cells
1..min(d, C_m) of both modalities (unselected slots enter as zero blocks so
the depth's weight matrix keeps a static shape) plus the previous fusion
output for d > 1, applies the depth's linear map, then its activation.
A linear head maps the last fusion output to class logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import ops
from .engine.tensor import Tensor
from .params import ParamKey, ParamStore
from .space import ArchitectureSpec, CellSpec, OperationKind, validate

REDUCE_KERNEL = 2
REDUCE_STRIDE = 2


class BuildError(RuntimeError):
    pass


_ACT_COLORS = {"identity": "orange", "tanh": "yellow", "sigmoid": "green", "relu": "pink"}


def _op_shapes(op: OperationKind, width: int) -> dict[str, tuple[int, ...]]:
    if op is OperationKind.CONV3X3:
        return {"weight": (width, width, 3, 3), "bias": (width,)}
    if op is OperationKind.CONV5X5:
        return {"weight": (width, width, 5, 5), "bias": (width,)}
    if op is OperationKind.SEP_CONV3X3:
        return {"dw_weight": (width, 3, 3), "pw_weight": (width, width), "bias": (width,)}
    if op is OperationKind.SEP_CONV5X5:
        return {"dw_weight": (width, 5, 5), "pw_weight": (width, width), "bias": (width,)}
    return {}  # pooling ops carry no parameters


def fusion_input_dim(spec: ArchitectureSpec, depth: int) -> int:
    c1, c2 = spec.repeats
    dim = spec.width * (min(depth, c1) + min(depth, c2))
    if depth > 1:
        dim += spec.fusion_width
    return dim


def spec_param_keys(spec: ArchitectureSpec) -> tuple[list[ParamKey], list[ParamKey]]:
    """Keys this spec touches: (feature side, fusion side incl. head)."""
    feature = []
    for modality, cell in ((1, spec.cell_x), (2, spec.cell_y)):
        feature.append(ParamKey("feature", modality=modality, op="stem"))
        repeats = spec.repeats[modality - 1]
        for c in range(1, repeats + 1):
            for l, layer in enumerate(cell.layers, start=1):
                if _op_shapes(layer.op, spec.width):
                    feature.append(
                        ParamKey("feature", modality=modality, cell=c, layer=l, op=layer.op.value)
                    )
    fusion = [ParamKey("fusion", depth=d) for d in range(1, spec.fusion.depth + 1)]
    fusion.append(ParamKey("head"))
    return feature, fusion


@dataclass
class NodeInfo:
    name: str
    kind: str  # stem | layer | reduce | tap | fusion | head
    op: str | None = None
    activation: str | None = None
    inputs: list[str] = field(default_factory=list)


class CompiledNet:
    def __init__(self, spec: ArchitectureSpec, store: ParamStore, input_shapes):
        self.spec = spec
        self.store = store
        self.input_shapes = input_shapes  # ((cx, hx, wx), (cy, hy, wy))
        self.nodes: list[NodeInfo] = []
        self.param_refs: list[tuple[ParamKey, str, Tensor]] = []
        self.tap_resolutions: tuple[list[int], list[int]] = ([], [])

    def parameters(self) -> list[tuple[ParamKey, str, Tensor]]:
        return self.param_refs

    def _cell_params(self, modality: int, cell_idx: int, layer_idx: int, op: OperationKind):
        key = ParamKey("feature", modality=modality, cell=cell_idx, layer=layer_idx, op=op.value)
        return self.store.entries[key].tensors

    def _apply_op(self, op: OperationKind, x: Tensor, params: dict[str, Tensor]) -> Tensor:
        if op is OperationKind.CONV3X3:
            return ops.conv2d(x, params["weight"], params["bias"], padding=1)
        if op is OperationKind.CONV5X5:
            return ops.conv2d(x, params["weight"], params["bias"], padding=2)
        if op is OperationKind.SEP_CONV3X3:
            return ops.sep_conv2d(x, params["dw_weight"], params["pw_weight"], params["bias"], padding=1)
        if op is OperationKind.SEP_CONV5X5:
            return ops.sep_conv2d(x, params["dw_weight"], params["pw_weight"], params["bias"], padding=2)
        if op is OperationKind.MAX_POOL3X3:
            return ops.max_pool(x, k=3, stride=1, padding=1)
        if op is OperationKind.AVG_POOL3X3:
            return ops.avg_pool(x, k=3, stride=1, padding=1)
        raise BuildError(f"unhandled op {op}")

    def _run_cell(self, cell: CellSpec, modality: int, cell_idx: int, x: Tensor) -> Tensor:
        outs: list[Tensor] = []
        for l, layer in enumerate(cell.layers, start=1):
            if l == 1:
                inp = x
            else:
                inp = outs[l - 2]  # chain edge
                for j, bit in enumerate(layer.skips, start=1):
                    if bit and j != l - 1:
                        inp = ops.add(inp, outs[j - 1])
            if _op_shapes(layer.op, self.spec.width):
                params = self._cell_params(modality, cell_idx, l, layer.op)
            else:
                params = {}
            z = self._apply_op(layer.op, inp, params)
            outs.append(ops.ACTIVATIONS[layer.activation.value](z))
        return outs[-1]

    def _extract_taps(self, data: np.ndarray, modality: int) -> list[Tensor]:
        spec = self.spec
        cell = spec.cell_x if modality == 1 else spec.cell_y
        repeats = spec.repeats[modality - 1]
        stem = self.store.entries[ParamKey("feature", modality=modality, op="stem")].tensors
        h = ops.conv2d(Tensor(data), stem["weight"], stem["bias"], padding=1)
        taps = []
        for c in range(1, repeats + 1):
            cell_out = self._run_cell(cell, modality, c, h)
            taps.append(ops.global_avg_pool(cell_out))
            if c < repeats:
                h = ops.max_pool(cell_out, k=REDUCE_KERNEL, stride=REDUCE_STRIDE, padding=0)
        return taps

    def forward_fusion(self, taps_x: list[Tensor], taps_y: list[Tensor]) -> Tensor:
        spec = self.spec
        c1, c2 = spec.repeats
        batch = taps_x[0].shape[0]
        # one shared zero block stands in for every unselected tap slot
        zeros = Tensor(np.zeros((batch, spec.width), dtype=self.store.dtype))
        f_prev = None
        for d, flayer in enumerate(spec.fusion.layers, start=1):
            blocks: list[Tensor] = []
            for taps, mask, repeats in ((taps_x, flayer.taps_x, c1), (taps_y, flayer.taps_y, c2)):
                for c in range(min(d, repeats)):
                    blocks.append(taps[c] if mask[c] else zeros)
            if d > 1:
                blocks.append(f_prev)
            params = self.store.entries[ParamKey("fusion", depth=d)].tensors
            z = ops.linear(ops.concat(blocks, axis=1), params["weight"], params["bias"])
            f_prev = ops.ACTIVATIONS[flayer.activation.value](z)
        head = self.store.entries[ParamKey("head")].tensors
        return ops.linear(f_prev, head["weight"], head["bias"])

    def forward(self, x: np.ndarray, y: np.ndarray) -> Tensor:
        x = np.ascontiguousarray(x, dtype=self.store.dtype)
        y = np.ascontiguousarray(y, dtype=self.store.dtype)
        taps_x = self._extract_taps(x, modality=1)
        taps_y = self._extract_taps(y, modality=2)
        return self.forward_fusion(taps_x, taps_y)


def build(spec: ArchitectureSpec, store: ParamStore, input_shapes) -> CompiledNet:
    """Allocate (or re-bind) every parameter the spec touches and lay out the plan."""
    problems = validate(spec)
    if problems:
        raise BuildError(f"invalid spec: {problems[0]}")
    for name, (shape, repeats) in (
        ("x", (input_shapes[0], spec.repeats[0])),
        ("y", (input_shapes[1], spec.repeats[1])),
    ):
        _, h, w = shape
        need = 2 ** (repeats - 1)
        if h < need or w < need:
            raise BuildError(
                f"modality {name} input {h}x{w} too small for {repeats} cells: "
                f"needs at least {need}x{need} to survive {repeats - 1} 2x2 stride-2 reductions"
            )

    net = CompiledNet(spec, store, input_shapes)
    width = spec.width

    for modality, cell in ((1, spec.cell_x), (2, spec.cell_y)):
        mname = "x" if modality == 1 else "y"
        in_ch, h, w = input_shapes[modality - 1]
        stem_key = ParamKey("feature", modality=modality, op="stem")
        stem = store.get_or_init(stem_key, {"weight": (width, in_ch, 3, 3), "bias": (width,)})
        net.nodes.append(NodeInfo(f"{mname}.stem", "stem", op="conv3x3", inputs=[mname]))
        for tname, tensor in stem.items():
            net.param_refs.append((stem_key, tname, tensor))
        repeats = spec.repeats[modality - 1]
        res = h
        prev = f"{mname}.stem"
        for c in range(1, repeats + 1):
            for l, layer in enumerate(cell.layers, start=1):
                shapes = _op_shapes(layer.op, width)
                node = NodeInfo(
                    f"{mname}.c{c}.l{l}",
                    "layer",
                    op=layer.op.value,
                    activation=layer.activation.value,
                    inputs=[prev if l == 1 else f"{mname}.c{c}.l{l - 1}"]
                    + [
                        f"{mname}.c{c}.l{j}"
                        for j, bit in enumerate(layer.skips, start=1)
                        if bit and j != l - 1
                    ],
                )
                net.nodes.append(node)
                if shapes:
                    key = ParamKey(
                        "feature", modality=modality, cell=c, layer=l, op=layer.op.value
                    )
                    tensors = store.get_or_init(key, shapes)
                    for tname, tensor in tensors.items():
                        net.param_refs.append((key, tname, tensor))
            last = f"{mname}.c{c}.l{cell.num_layers}"
            net.nodes.append(NodeInfo(f"{mname}.tap{c}", "tap", inputs=[last]))
            net.tap_resolutions[modality - 1].append(res)
            if c < repeats:
                net.nodes.append(NodeInfo(f"{mname}.reduce{c}", "reduce", inputs=[last]))
                prev = f"{mname}.reduce{c}"
                res = res // 2
    c1, c2 = spec.repeats
    for d, flayer in enumerate(spec.fusion.layers, start=1):
        key = ParamKey("fusion", depth=d)
        tensors = store.get_or_init(
            key, {"weight": (spec.fusion_width, fusion_input_dim(spec, d)), "bias": (spec.fusion_width,)}
        )
        for tname, tensor in tensors.items():
            net.param_refs.append((key, tname, tensor))
        inputs = [f"x.tap{c}" for c in range(1, min(d, c1) + 1) if flayer.taps_x[c - 1]]
        inputs += [f"y.tap{c}" for c in range(1, min(d, c2) + 1) if flayer.taps_y[c - 1]]
        if d > 1:
            inputs.append(f"fusion.d{d - 1}")
        net.nodes.append(
            NodeInfo(f"fusion.d{d}", "fusion", activation=flayer.activation.value, inputs=inputs)
        )
    head_key = ParamKey("head")
    # zero-started head: fresh nets emit uniform logits (loss exactly ln K)
    tensors = store.get_or_init(
        head_key,
        {"weight": (spec.num_classes, spec.fusion_width), "bias": (spec.num_classes,)},
        zero_names=("weight",),
    )
    for tname, tensor in tensors.items():
        net.param_refs.append((head_key, tname, tensor))
    net.nodes.append(NodeInfo("head", "head", inputs=[f"fusion.d{spec.fusion.depth}"]))
    return net


def param_count_split(spec: ArchitectureSpec, store: ParamStore) -> tuple[int, int]:
    """(feature params, fusion params incl. head) for the keys this spec touches."""
    feature_keys, fusion_keys = spec_param_keys(spec)
    try:
        feature = sum(store.entries[k].size() for k in feature_keys)
        fusion = sum(store.entries[k].size() for k in fusion_keys)
    except KeyError as err:
        raise BuildError(f"spec not built against this store: missing {err.args[0]}") from None
    return feature, fusion


def to_dot(spec: ArchitectureSpec) -> str:
    """Graphviz text: one cluster per modality cell, one for the fusion stack."""
    lines = ["digraph architecture {", "  rankdir=TB;", "  node [style=filled];"]
    for mname, cell, repeats in (("x", spec.cell_x, spec.repeats[0]), ("y", spec.cell_y, spec.repeats[1])):
        lines.append(f"  subgraph cluster_{mname} {{")
        lines.append(f'    label="modality {mname} cell (x{repeats})";')
        lines.append(f'    {mname}_in [label="input", fillcolor=white];')
        for l, layer in enumerate(cell.layers, start=1):
            color = _ACT_COLORS[layer.activation.value]
            lines.append(
                f'    {mname}_l{l} [label="{layer.op.value}\\n{layer.activation.value}", fillcolor={color}];'
            )
            src = f"{mname}_in" if l == 1 else f"{mname}_l{l - 1}"
            lines.append(f"    {src} -> {mname}_l{l};")
            for j, bit in enumerate(layer.skips, start=1):
                if bit and j != l - 1:
                    lines.append(f"    {mname}_l{j} -> {mname}_l{l};")
        lines.append("  }")
    lines.append("  subgraph cluster_fusion {")
    lines.append('    label="fusion";')
    c1, c2 = spec.repeats
    for d, flayer in enumerate(spec.fusion.layers, start=1):
        color = _ACT_COLORS[flayer.activation.value]
        lines.append(f'    f{d} [label="fuse {d}\\n{flayer.activation.value}", fillcolor={color}];')
        if d > 1:
            lines.append(f"    f{d - 1} -> f{d};")
    lines.append("  }")
    for d, flayer in enumerate(spec.fusion.layers, start=1):
        for c in range(1, min(d, c1) + 1):
            if flayer.taps_x[c - 1]:
                lines.append(f"  x_tap{c} -> f{d};")
        for c in range(1, min(d, c2) + 1):
            if flayer.taps_y[c - 1]:
                lines.append(f"  y_tap{c} -> f{d};")
    for mname, repeats in (("x", c1), ("y", c2)):
        for c in range(1, repeats + 1):
            lines.append(f'  {mname}_tap{c} [label="{mname} tap {c}", fillcolor=lightgray];')
    lines.append("  head [label=classifier, fillcolor=white];")
    lines.append(f"  f{spec.fusion.depth} -> head;")
    lines.append("}")
    return "\n".join(lines) + "\n"
