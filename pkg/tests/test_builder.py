from __future__ import annotations

import numpy as np
import pytest

import oracles
from mmnas import space
from mmnas.builder import BuildError, build, param_count_split, spec_param_keys, to_dot
from mmnas.engine import Tensor, ops
from mmnas.params import ParamKey, ParamStore
from mmnas.rng import Rng
from mmnas.space import (
    ActivationKind as A,
    ArchitectureSpec,
    CellSpec,
    FusionLayerSpec,
    FusionSpec,
    LayerSpec,
    OperationKind as O,
    SearchSpaceConfig,
)


def make_spec(layers_x, layers_y, repeats, fusion_layers, width, fusion_width, num_classes):
    return ArchitectureSpec(
        cell_x=CellSpec(tuple(LayerSpec(*l) for l in layers_x)),
        cell_y=CellSpec(tuple(LayerSpec(*l) for l in layers_y)),
        repeats=repeats,
        fusion=FusionSpec(tuple(FusionLayerSpec(*f) for f in fusion_layers)),
        width=width,
        fusion_width=fusion_width,
        num_classes=num_classes,
    )


def tiny_spec(width=3, fusion_width=4, num_classes=2):
    layers = [(O.CONV3X3, A.TANH, ()), (O.MAX_POOL3X3, A.RELU, (1,))]
    fusion = [(A.TANH, (1,), (1,)), (A.IDENTITY, (1, 1), (0, 1))]
    return make_spec(layers, layers, (2, 2), fusion, width, fusion_width, num_classes)


def test_tap_resolutions_16_8_4():
    cfg = SearchSpaceConfig(num_layers=2, repeats=(3, 3), fusion_depth=3, width=16)
    spec = space.sample_architecture(cfg, Rng(4))
    store = ParamStore(seed=0)
    net = build(spec, store, ((1, 16, 16), (1, 16, 16)))
    assert net.tap_resolutions[0] == [16, 8, 4]
    assert net.tap_resolutions[1] == [16, 8, 4]
    x = np.zeros((2, 1, 16, 16), dtype=np.float32)
    taps = net._extract_taps(x, modality=1)
    assert [t.shape for t in taps] == [(2, 16)] * 3


def test_default_scale_shapes_build():
    cfg = SearchSpaceConfig(num_layers=5, repeats=(3, 3), fusion_depth=3, width=16)
    spec = space.sample_architecture(cfg, Rng(11))
    store = ParamStore(seed=1)
    build(spec, store, ((1, 28, 28), (1, 112, 112)))


def test_input_too_small_names_bound():
    cfg = SearchSpaceConfig(num_layers=1, repeats=(3, 3), fusion_depth=3)
    spec = space.sample_architecture(cfg, Rng(0))
    store = ParamStore(seed=0)
    with pytest.raises(BuildError, match="needs at least 4x4"):
        build(spec, store, ((1, 3, 3), (1, 16, 16)))


def test_invalid_spec_rejected():
    spec = tiny_spec()
    bad = ArchitectureSpec(
        cell_x=spec.cell_x,
        cell_y=spec.cell_y,
        repeats=(3, 3),  # fusion depth 2 < 3
        fusion=spec.fusion,
        width=spec.width,
        fusion_width=spec.fusion_width,
        num_classes=spec.num_classes,
    )
    with pytest.raises(BuildError, match="fusion depth below cell count"):
        build(bad, ParamStore(seed=0), ((1, 8, 8), (1, 8, 8)))


def test_identity_cells_taps_equal_stem_pipeline():
    # one conv3x3+identity layer per cell; with identity kernels the cell is
    # a no-op, so each tap is the pooled stem output after the reductions
    layers = [(O.CONV3X3, A.IDENTITY, ())]
    fusion = [(A.IDENTITY, (1,), (0,)), (A.IDENTITY, (1, 1), (1, 1))]
    spec = make_spec(layers, layers, (2, 2), fusion, width=3, fusion_width=4, num_classes=2)
    store = ParamStore(seed=5)
    net = build(spec, store, ((1, 8, 8), (1, 8, 8)))
    for c in (1, 2):
        key = ParamKey("feature", modality=1, cell=c, layer=1, op="conv3x3")
        w = store.entries[key].tensors["weight"]
        w.data[:] = 0.0
        for ch in range(3):
            w.data[ch, ch, 1, 1] = 1.0
        store.entries[key].tensors["bias"].data[:] = 0.0

    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 1, 8, 8)).astype(np.float32)
    taps = net._extract_taps(x, modality=1)

    stem = store.entries[ParamKey("feature", modality=1, op="stem")].tensors
    s = oracles.conv2d(x.astype(np.float64), stem["weight"].data.astype(np.float64),
                       stem["bias"].data.astype(np.float64), 1, 1)
    want_tap1 = s.mean(axis=(2, 3))
    reduced = oracles.max_pool(s, 2, 2, 0)
    want_tap2 = reduced.mean(axis=(2, 3))
    np.testing.assert_allclose(taps[0].data, want_tap1, rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(taps[1].data, want_tap2, rtol=1e-5, atol=1e-6)


def test_fusion_identity_block_passes_tap_through():
    # depth 1, only the x tap selected, identity activation, weight = identity
    layers = [(O.CONV3X3, A.TANH, ())]
    fusion = [(A.IDENTITY, (1,), (0,))]
    spec = make_spec(layers, layers, (1, 1), fusion, width=3, fusion_width=3, num_classes=2)
    store = ParamStore(seed=6)
    net = build(spec, store, ((1, 6, 6), (1, 6, 6)))
    fus = store.entries[ParamKey("fusion", depth=1)].tensors
    fus["weight"].data[:] = 0.0
    fus["weight"].data[:, :3] = np.eye(3)
    fus["bias"].data[:] = 0.0

    tap_x = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    tap_y = Tensor(np.full((2, 3), 7.0, dtype=np.float32))
    head = store.entries[ParamKey("head")].tensors
    head["weight"].data[:] = np.eye(2, 3)
    head["bias"].data[:] = 0.0
    logits = net.forward_fusion([tap_x], [tap_y])
    np.testing.assert_allclose(logits.data, tap_x.data[:, :2], atol=1e-6)


def test_fusion_depth1_output_width():
    spec = tiny_spec(fusion_width=5)
    store = ParamStore(seed=7)
    net = build(spec, store, ((1, 8, 8), (1, 8, 8)))
    taps = [Tensor(np.zeros((4, 3), dtype=np.float32)) for _ in range(2)]
    # run just depth 1 by hand through the stored weights
    params = store.entries[ParamKey("fusion", depth=1)].tensors
    merged = ops.concat([taps[0], taps[0]], axis=1)
    out = ops.linear(merged, params["weight"], params["bias"])
    assert out.shape == (4, 5)


def straight_line_logits(spec, store, x, y):
    """Independent full-precision re-implementation of the compiled forward."""
    def run_modality(data, cell, modality, repeats):
        stem = store.entries[ParamKey("feature", modality=modality, op="stem")].tensors
        h = oracles.conv2d(data, stem["weight"].data.astype(np.float64),
                           stem["bias"].data.astype(np.float64), 1, 1)
        taps = []
        for c in range(1, repeats + 1):
            outs = []
            for l, layer in enumerate(cell.layers, start=1):
                if l == 1:
                    inp = h
                else:
                    inp = outs[l - 2].copy()
                    for j, bit in enumerate(layer.skips, start=1):
                        if bit and j != l - 1:
                            inp = inp + outs[j - 1]
                key = ParamKey("feature", modality=modality, cell=c, layer=l, op=layer.op.value)
                if layer.op is O.CONV3X3:
                    t = store.entries[key].tensors
                    z = oracles.conv2d(inp, t["weight"].data.astype(np.float64),
                                       t["bias"].data.astype(np.float64), 1, 1)
                elif layer.op is O.SEP_CONV3X3:
                    t = store.entries[key].tensors
                    mid = oracles.depthwise(inp, t["dw_weight"].data.astype(np.float64), 1, 1)
                    z = np.einsum("oc,nchw->nohw", t["pw_weight"].data.astype(np.float64), mid)
                    z = z + t["bias"].data.astype(np.float64)[None, :, None, None]
                elif layer.op is O.MAX_POOL3X3:
                    z = oracles.max_pool(inp, 3, 1, 1)
                elif layer.op is O.AVG_POOL3X3:
                    z = oracles.avg_pool(inp, 3, 1, 1)
                else:
                    raise AssertionError(layer.op)
                if layer.activation is A.RELU:
                    z = np.maximum(z, 0.0)
                elif layer.activation is A.TANH:
                    z = np.tanh(z)
                elif layer.activation is A.SIGMOID:
                    z = 1.0 / (1.0 + np.exp(-z))
                outs.append(z)
            taps.append(outs[-1].mean(axis=(2, 3)))
            if c < repeats:
                h = oracles.max_pool(outs[-1], 2, 2, 0)
        return taps

    taps_x = run_modality(x.astype(np.float64), spec.cell_x, 1, spec.repeats[0])
    taps_y = run_modality(y.astype(np.float64), spec.cell_y, 2, spec.repeats[1])
    width = spec.width
    f_prev = None
    for d, flayer in enumerate(spec.fusion.layers, start=1):
        blocks = []
        for c in range(1, min(d, spec.repeats[0]) + 1):
            blocks.append(taps_x[c - 1] if flayer.taps_x[c - 1] else np.zeros_like(taps_x[0]))
        for c in range(1, min(d, spec.repeats[1]) + 1):
            blocks.append(taps_y[c - 1] if flayer.taps_y[c - 1] else np.zeros_like(taps_y[0]))
        if d > 1:
            blocks.append(f_prev)
        merged = np.concatenate(blocks, axis=1)
        t = store.entries[ParamKey("fusion", depth=d)].tensors
        z = merged @ t["weight"].data.astype(np.float64).T + t["bias"].data.astype(np.float64)
        if flayer.activation is A.RELU:
            f_prev = np.maximum(z, 0.0)
        elif flayer.activation is A.TANH:
            f_prev = np.tanh(z)
        elif flayer.activation is A.SIGMOID:
            f_prev = 1.0 / (1.0 + np.exp(-z))
        else:
            f_prev = z
    t = store.entries[ParamKey("head")].tensors
    return f_prev @ t["weight"].data.astype(np.float64).T + t["bias"].data.astype(np.float64)


def test_full_net_matches_straight_line_oracle():
    layers_x = [(O.CONV3X3, A.RELU, ()), (O.SEP_CONV3X3, A.TANH, (1,)), (O.AVG_POOL3X3, A.SIGMOID, (1, 0))]
    layers_y = [(O.MAX_POOL3X3, A.TANH, ()), (O.CONV3X3, A.RELU, (0,)), (O.SEP_CONV3X3, A.IDENTITY, (1, 1))]
    fusion = [(A.TANH, (1,), (1,)), (A.SIGMOID, (1, 0), (0, 1))]
    spec = make_spec(layers_x, layers_y, (2, 2), fusion, width=3, fusion_width=4, num_classes=3)
    store = ParamStore(seed=8, dtype=np.float64)
    net = build(spec, store, ((1, 8, 8), (2, 8, 8)))
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 1, 8, 8))
    y = rng.standard_normal((2, 2, 8, 8))
    got = net.forward(x, y).data
    want = straight_line_logits(spec, store, x, y)
    assert oracles.rel_err(got, want) < 1e-6


def test_mask_equivalence_zero_block_vs_sliced_weights():
    # dropping a tap by mask equals physically removing its block and weight columns
    layers = [(O.CONV3X3, A.TANH, ())]
    fusion = [(A.TANH, (1,), (1,)), (A.IDENTITY, (1, 0), (0, 1))]
    spec = make_spec(layers, layers, (2, 2), fusion, width=3, fusion_width=4, num_classes=2)
    store = ParamStore(seed=9, dtype=np.float64)
    net = build(spec, store, ((1, 8, 8), (1, 8, 8)))
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 1, 8, 8))
    y = rng.standard_normal((2, 1, 8, 8))
    got = net.forward(x, y).data

    taps_x = [t.data for t in net._extract_taps(np.asarray(x), 1)]
    taps_y = [t.data for t in net._extract_taps(np.asarray(y), 2)]
    w = spec.width
    # depth 1: both taps selected
    t1 = store.entries[ParamKey("fusion", depth=1)].tensors
    f1 = np.tanh(np.concatenate([taps_x[0], taps_y[0]], axis=1) @ t1["weight"].data.T + t1["bias"].data)
    # depth 2 mask (1,0),(0,1): keep x tap 1, y tap 2, carry; slice the weight columns
    t2 = store.entries[ParamKey("fusion", depth=2)].tensors
    w2 = t2["weight"].data
    cols = np.concatenate([w2[:, 0:w], w2[:, 3 * w : 4 * w], w2[:, 4 * w :]], axis=1)
    f2 = np.concatenate([taps_x[0], taps_y[1], f1], axis=1) @ cols.T + t2["bias"].data
    th = store.entries[ParamKey("head")].tensors
    want = f2 @ th["weight"].data.T + th["bias"].data
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_param_count_split_hand_arithmetic():
    # width 4, 1-channel inputs, one conv3x3 cell per modality, D=1, fw=8, K=2
    layers = [(O.CONV3X3, A.RELU, ())]
    fusion = [(A.RELU, (1,), (1,))]
    spec = make_spec(layers, layers, (1, 1), fusion, width=4, fusion_width=8, num_classes=2)
    store = ParamStore(seed=10)
    build(spec, store, ((1, 8, 8), (1, 8, 8)))
    feature, fusion_params = param_count_split(spec, store)
    # stems 2*(4*1*9+4) = 80, cells 2*(4*4*9+4) = 296, W1 8*8+8 = 72, head 2*8+2 = 18
    assert feature == 80 + 296 == 376
    assert fusion_params == 72 + 18 == 90


def test_param_count_split_requires_built_store():
    spec = tiny_spec()
    with pytest.raises(BuildError, match="not built"):
        param_count_split(spec, ParamStore(seed=0))


def test_sep_conv_param_count_416():
    layers = [(O.SEP_CONV3X3, A.RELU, ())]
    fusion = [(A.RELU, (1,), (1,))]
    spec = make_spec(layers, layers, (1, 1), fusion, width=16, fusion_width=4, num_classes=2)
    store = ParamStore(seed=11)
    build(spec, store, ((16, 8, 8), (16, 8, 8)))
    key = ParamKey("feature", modality=1, cell=1, layer=1, op="sep_conv3x3")
    assert store.entries[key].size() == 16 * 9 + 16 * 16 + 16 == 416


def test_second_build_allocates_nothing():
    cfg = SearchSpaceConfig(num_layers=3, repeats=(2, 2), fusion_depth=2, width=4, fusion_width=8)
    spec = space.sample_architecture(cfg, Rng(13))
    store = ParamStore(seed=12)
    build(spec, store, ((1, 8, 8), (1, 8, 8)))
    before = store.count_params()
    net2 = build(spec, store, ((1, 8, 8), (1, 8, 8)))
    assert store.count_params() == before
    assert net2.param_refs[0][2] is store.entries[net2.param_refs[0][0]].tensors[net2.param_refs[0][1]]


def test_build_is_pure_function_of_spec():
    cfg = SearchSpaceConfig(num_layers=3, repeats=(2, 2), fusion_depth=2, width=4, fusion_width=8)
    spec = space.sample_architecture(cfg, Rng(14))
    store = ParamStore(seed=13)
    a = build(spec, store, ((1, 8, 8), (1, 8, 8)))
    b = build(spec, store, ((1, 8, 8), (1, 8, 8)))
    assert [n.__dict__ for n in a.nodes] == [n.__dict__ for n in b.nodes]
    assert [(k, n) for k, n, _ in a.param_refs] == [(k, n) for k, n, _ in b.param_refs]


def test_end_to_end_gradient_check():
    layers = [(O.CONV3X3, A.TANH, ()), (O.SEP_CONV3X3, A.SIGMOID, (1,))]
    fusion = [(A.TANH, (1,), (1,))]
    spec = make_spec(layers, layers, (1, 1), fusion, width=2, fusion_width=3, num_classes=2)
    store = ParamStore(seed=15, dtype=np.float64)
    net = build(spec, store, ((1, 6, 6), (1, 6, 6)))
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 1, 6, 6))
    y = rng.standard_normal((2, 1, 6, 6))
    labels = np.array([0, 1])

    def loss_value():
        return float(ops.softmax_cross_entropy(net.forward(x, y), labels).data)

    loss = ops.softmax_cross_entropy(net.forward(x, y), labels)
    loss.backward()
    for key, name, tensor in net.parameters():
        ana = tensor.grad
        num = oracles.numeric_grad(loss_value, tensor.data, h=1e-5)
        err = oracles.rel_err(ana, num)
        assert err < 1e-4, f"{key.canonical()}/{name}: {err:.2e}"


def test_spec_param_keys_cover_everything_built():
    cfg = SearchSpaceConfig(num_layers=3, repeats=(2, 2), fusion_depth=2, width=4, fusion_width=8)
    spec = space.sample_architecture(cfg, Rng(16))
    store = ParamStore(seed=16)
    build(spec, store, ((1, 8, 8), (1, 8, 8)))
    feature, fusion = spec_param_keys(spec)
    assert set(feature) | set(fusion) == set(store.entries)


def test_dot_export_mentions_ops_and_colors():
    cfg = SearchSpaceConfig()
    spec = space.sample_architecture(cfg, Rng(17))
    dot = to_dot(spec)
    assert dot.startswith("digraph")
    assert "cluster_x" in dot and "cluster_fusion" in dot
    assert "fillcolor" in dot
    for layer in spec.cell_x.layers:
        assert layer.op.value in dot
