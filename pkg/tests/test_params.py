from __future__ import annotations

import numpy as np
import pytest

from mmnas.params import ParamKey, ParamStore, SnapshotFormatError


def conv_key(modality=1, cell=1, layer=1, op="conv3x3"):
    return ParamKey("feature", modality=modality, cell=cell, layer=layer, op=op)


def test_same_key_returns_same_identity():
    store = ParamStore(seed=1)
    key = conv_key()
    first = store.get_or_init(key, {"weight": (4, 4, 3, 3), "bias": (4,)})
    second = store.get_or_init(key, {"weight": (4, 4, 3, 3), "bias": (4,)})
    assert first["weight"] is second["weight"]
    first["weight"].data[0, 0, 0, 0] = 99.0
    assert second["weight"].data[0, 0, 0, 0] == 99.0


def test_conv3x3_width16_scalar_count():
    store = ParamStore(seed=2)
    store.get_or_init(conv_key(), {"weight": (16, 16, 3, 3), "bias": (16,)})
    assert store.count_params() == 16 * 16 * 9 + 16 == 2320


def test_distinct_ops_get_distinct_params():
    store = ParamStore(seed=3)
    a = store.get_or_init(conv_key(op="conv3x3"), {"weight": (4, 4, 3, 3), "bias": (4,)})
    b = store.get_or_init(conv_key(op="max_pool3x3"), {})
    c = store.get_or_init(conv_key(op="conv5x5"), {"weight": (4, 4, 5, 5), "bias": (4,)})
    assert len(store.entries) == 3
    assert a["weight"].shape != c["weight"].shape
    assert b == {}


def test_shape_conflict_names_key_and_shapes():
    store = ParamStore(seed=4)
    store.get_or_init(conv_key(), {"weight": (4, 4, 3, 3), "bias": (4,)})
    with pytest.raises(ValueError, match=r"feature:m1:c1:l1:conv3x3.*4, 4, 3, 3.*8, 4, 3, 3"):
        store.get_or_init(conv_key(), {"weight": (8, 4, 3, 3), "bias": (8,)})


def test_init_bounds_follow_fan_in():
    store = ParamStore(seed=5)
    tensors = store.get_or_init(conv_key(), {"weight": (16, 16, 3, 3), "bias": (16,)})
    bound = np.sqrt(6.0 / (16 * 9))
    w = tensors["weight"].data
    assert np.abs(w).max() <= bound
    assert np.abs(w).max() > 0.5 * bound  # actually spread out
    assert np.all(tensors["bias"].data == 0.0)


def test_empty_store_counts_zero():
    assert ParamStore(seed=0).count_params() == 0


def test_count_respects_scope_filter():
    store = ParamStore(seed=6)
    store.get_or_init(conv_key(), {"weight": (2, 2, 3, 3), "bias": (2,)})  # 38
    store.get_or_init(ParamKey("fusion", depth=1), {"weight": (3, 4), "bias": (3,)})  # 15
    store.get_or_init(ParamKey("head"), {"weight": (2, 3), "bias": (2,)})  # 8
    assert store.count_params("feature") == 38
    assert store.count_params("fusion") == 15
    assert store.count_params("head") == 8
    assert store.count_params() == 61


def test_hand_built_two_layer_store_total():
    store = ParamStore(seed=7)
    store.get_or_init(conv_key(layer=1), {"weight": (8, 8, 3, 3), "bias": (8,)})
    store.get_or_init(
        conv_key(layer=2, op="sep_conv3x3"),
        {"dw_weight": (8, 3, 3), "pw_weight": (8, 8), "bias": (8,)},
    )
    # 8*8*9 + 8 = 584 and 8*9 + 64 + 8 = 144
    assert store.count_params() == 584 + 144


def test_snapshot_restore_round_trip_bit_identical():
    store = ParamStore(seed=8)
    store.get_or_init(conv_key(), {"weight": (4, 4, 3, 3), "bias": (4,)})
    store.get_or_init(ParamKey("fusion", depth=2), {"weight": (6, 10), "bias": (6,)})
    entry = store.entries[conv_key()]
    entry.adam["weight"].t = 5
    entry.adam["weight"].m[:] = 0.25
    entry.adam["weight"].v[:] = 0.5

    blob = store.snapshot()
    back = ParamStore.restore(blob)
    assert back.count_params() == store.count_params()
    assert back.rng.state == store.rng.state
    for key, orig in store.entries.items():
        copy = back.entries[key]
        for name, tensor in orig.tensors.items():
            assert np.array_equal(copy.tensors[name].data, tensor.data)
            assert copy.adam[name].t == orig.adam[name].t
            assert np.array_equal(copy.adam[name].m, orig.adam[name].m)
            assert np.array_equal(copy.adam[name].v, orig.adam[name].v)
    assert back.snapshot() == blob


def test_restore_rejects_bad_magic_and_short_file():
    store = ParamStore(seed=9)
    store.get_or_init(conv_key(), {"weight": (2, 2, 3, 3), "bias": (2,)})
    blob = store.snapshot()
    with pytest.raises(SnapshotFormatError, match="bad magic"):
        ParamStore.restore(b"XXXX" + blob[4:])
    with pytest.raises(SnapshotFormatError, match="short file"):
        ParamStore.restore(blob[:-4])
    with pytest.raises(SnapshotFormatError, match="unsupported snapshot version"):
        ParamStore.restore(blob[:4] + b"\x09\x00\x00\x00" + blob[8:])


def test_key_ordering_and_parse_round_trip():
    keys = [
        ParamKey("head"),
        ParamKey("fusion", depth=3),
        conv_key(modality=2, cell=1, layer=4, op="avg_pool3x3"),
        conv_key(modality=1, cell=3, layer=1, op="stem"),
    ]
    for key in keys:
        assert ParamKey.parse(key.canonical()) == key
    assert sorted(keys) == sorted(keys, key=lambda k: (k.scope, k.modality, k.cell, k.layer, k.op, k.depth))


def test_allocation_draws_advance_store_rng():
    a = ParamStore(seed=10)
    b = ParamStore(seed=10)
    a.get_or_init(conv_key(), {"weight": (2, 2, 3, 3), "bias": (2,)})
    b.get_or_init(conv_key(), {"weight": (2, 2, 3, 3), "bias": (2,)})
    assert np.array_equal(
        a.entries[conv_key()].tensors["weight"].data,
        b.entries[conv_key()].tensors["weight"].data,
    )
    assert a.rng.state == b.rng.state != ParamStore(seed=10).rng.state
