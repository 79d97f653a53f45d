"""Budgeted random search with shared weights and short per-architecture training.

Per run, three independent streams derive from the seed in a fixed order:
architecture sampling, batch shuffling, then parameter initialization (used
only when the caller does not hand in a store). Each sampled architecture
trains for a fixed number of steps on the shared store, is scored by
validation accuracy, and replaces the incumbent when its accuracy is
greater than or equal (ties favor the later architecture; the empty
incumbent scores -inf). Build failures are logged and skipped but still
consume one unit of the budget.

The serialized run record is canonical JSON. Wall-clock timings are kept
in memory and written only when explicitly requested, so two runs with the
same inputs produce byte-identical record files.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import space as space_mod
from .builder import BuildError, CompiledNet, build, param_count_split
from .data import BiModalDataset, batch_stream, batches
from .engine import ops
from .engine.adam import adam_step
from .params import ParamStore
from .rng import Rng
from .space import ArchitectureSpec, SearchSpaceConfig

RECORD_SCHEMA_VERSION = 1
EVAL_BATCH = 256


@dataclass
class SearchConfig:
    budget: int = 100
    steps: int | None = None  # None: one pass over 10% of the training split
    batch_size: int = 32
    lr: float = 1e-4
    final_epochs: int = 50
    final_lr: float = 1e-3
    seed: int = 0
    space: SearchSpaceConfig = field(default_factory=SearchSpaceConfig)

    def resolve_steps(self, n_train: int) -> int:
        if self.steps is not None:
            return self.steps
        return max(1, math.ceil(0.1 * n_train / self.batch_size))


@dataclass
class ArchLogEntry:
    index: int
    spec_hash: str
    steps: int
    val_accuracy: float | None = None
    new_params: int = 0
    wall_time: float = 0.0
    error: str | None = None


@dataclass
class RunRecord:
    seed: int
    budget: int
    steps: int
    batch_size: int
    lr: float
    final_epochs: int
    space: SearchSpaceConfig
    log: list[ArchLogEntry] = field(default_factory=list)
    best_spec: ArchitectureSpec | None = None
    best_spec_hash: str | None = None
    best_val_accuracy: float = float("-inf")
    feature_params: int | None = None
    fusion_params: int | None = None
    final_test_accuracy: float | None = None
    total_wall_time: float = 0.0

    @property
    def accuracy(self) -> float | None:
        """Headline accuracy: final test accuracy when present, else best validation."""
        if self.final_test_accuracy is not None:
            return self.final_test_accuracy
        if self.best_spec is not None:
            return self.best_val_accuracy
        return None


def collect_adam(net: CompiledNet):
    params, grads_of, states = [], [], []
    for key, name, tensor in net.parameters():
        params.append(tensor)
        states.append(net.store.entries[key].adam[name])
    return params, states


def train_steps(net: CompiledNet, stream, steps: int, lr: float) -> list[float]:
    """Exactly `steps` optimizer updates on consecutive batches from the stream.

    Parameters the loss never reached (e.g. a cell whose tap no fusion layer
    selected) have no gradient and are skipped, not decayed.
    """
    tensors, states = collect_adam(net)
    losses = []
    for _ in range(steps):
        xb, yb, zb = next(stream)
        loss = ops.softmax_cross_entropy(net.forward(xb, yb), zb)
        for t in tensors:
            t.zero_grad()
        loss.backward()
        live = [(t, s) for t, s in zip(tensors, states) if t.grad is not None]
        adam_step([t.data for t, _ in live], [t.grad for t, _ in live], [s for _, s in live], lr)
        losses.append(float(loss.data))
    return losses


def evaluate(net: CompiledNet, dataset: BiModalDataset, split: str) -> float:
    """Fraction correct over the whole split, in fixed order."""
    xs, ys, zs = dataset.split_arrays(split)
    if len(zs) == 0:
        raise ValueError(f"split '{split}' is empty")
    correct = 0
    for i in range(0, len(zs), EVAL_BATCH):
        logits = net.forward(xs[i : i + EVAL_BATCH], ys[i : i + EVAL_BATCH])
        correct += int((np.argmax(logits.data, axis=1) == zs[i : i + EVAL_BATCH]).sum())
    return correct / len(zs)


def _check_dataset(cfg: SearchConfig, dataset: BiModalDataset) -> None:
    if dataset.num_classes != cfg.space.num_classes:
        raise ValueError(
            f"dataset has {dataset.num_classes} classes but the search space is "
            f"configured for {cfg.space.num_classes}"
        )
    for split in ("train", "val"):
        if split not in dataset.splits or dataset.split_count(split) == 0:
            raise ValueError(f"dataset needs a non-empty '{split}' split")


def run_search(cfg: SearchConfig, dataset: BiModalDataset, store: ParamStore | None = None) -> RunRecord:
    _check_dataset(cfg, dataset)
    seeds = Rng(cfg.seed)
    arch_rng = Rng(seeds.next64())
    shuffle_rng = Rng(seeds.next64())
    if store is None:
        store = ParamStore(seed=seeds.next64())

    steps = cfg.resolve_steps(dataset.split_count("train"))
    record = RunRecord(
        seed=cfg.seed,
        budget=cfg.budget,
        steps=steps,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        final_epochs=cfg.final_epochs,
        space=cfg.space,
    )
    input_shapes = (dataset.x.shape[1:], dataset.y.shape[1:])
    stream = batch_stream(dataset, "train", cfg.batch_size, shuffle_rng)

    run_start = time.perf_counter()
    for e in range(1, cfg.budget + 1):
        spec = space_mod.sample_architecture(cfg.space, arch_rng)
        spec_hash = space_mod.canonical_hash(spec)
        t0 = time.perf_counter()
        before = store.count_params()
        try:
            net = build(spec, store, input_shapes)
        except BuildError as err:
            record.log.append(
                ArchLogEntry(index=e, spec_hash=spec_hash, steps=0, error=str(err),
                             wall_time=time.perf_counter() - t0)
            )
            continue
        train_steps(net, stream, steps, cfg.lr)
        accuracy = evaluate(net, dataset, "val")
        record.log.append(
            ArchLogEntry(
                index=e,
                spec_hash=spec_hash,
                steps=steps,
                val_accuracy=accuracy,
                new_params=store.count_params() - before,
                wall_time=time.perf_counter() - t0,
            )
        )
        if accuracy >= record.best_val_accuracy:
            record.best_spec = spec
            record.best_spec_hash = spec_hash
            record.best_val_accuracy = accuracy
    record.total_wall_time = time.perf_counter() - run_start
    if record.best_spec is not None:
        record.feature_params, record.fusion_params = param_count_split(record.best_spec, store)
    return record


def final_train(
    spec: ArchitectureSpec,
    dataset: BiModalDataset,
    epochs: int,
    lr: float = 1e-3,
    batch_size: int = 32,
    seed: int = 0,
    warm_start: bool = False,
    store: ParamStore | None = None,
):
    """Train the chosen architecture; fresh parameters unless warm-starting.

    Returns (net, test_accuracy, store).
    """
    if dataset.num_classes != spec.num_classes:
        raise ValueError(
            f"dataset has {dataset.num_classes} classes, architecture expects {spec.num_classes}"
        )
    seeds = Rng(seed)
    shuffle_rng = Rng(seeds.next64())
    if warm_start:
        if store is None:
            raise ValueError("warm_start needs the store that trained during the search")
    else:
        store = ParamStore(seed=seeds.next64())
    net = build(spec, store, (dataset.x.shape[1:], dataset.y.shape[1:]))
    tensors, states = collect_adam(net)
    for _ in range(epochs):
        for xb, yb, zb in batches(dataset, "train", batch_size, shuffle_rng):
            loss = ops.softmax_cross_entropy(net.forward(xb, yb), zb)
            for t in tensors:
                t.zero_grad()
            loss.backward()
            live = [(t, s) for t, s in zip(tensors, states) if t.grad is not None]
            adam_step([t.data for t, _ in live], [t.grad for t, _ in live], [s for _, s in live], lr)
    accuracy = evaluate(net, dataset, "test")
    return net, accuracy, store


def run_multi_seed(cfg: SearchConfig, dataset: BiModalDataset, seeds: list[int]) -> list[RunRecord]:
    """Independent searches, one fresh store per seed, identical budget otherwise."""
    if len(seeds) < 2:
        raise ValueError("multi-seed analysis needs at least 2 seeds")
    records = []
    for seed in seeds:
        record = run_search(replace(cfg, seed=seed), dataset)
        if cfg.final_epochs > 0 and record.best_spec is not None:
            _, test_accuracy, _ = final_train(
                record.best_spec,
                dataset,
                epochs=cfg.final_epochs,
                lr=cfg.final_lr,
                batch_size=cfg.batch_size,
                seed=seed,
            )
            record.final_test_accuracy = test_accuracy
        records.append(record)
    return records


# --- run record JSON ---------------------------------------------------------


def record_to_json(record: RunRecord, include_timing: bool = False) -> str:
    space_cfg = record.space
    obj = {
        "schema_version": RECORD_SCHEMA_VERSION,
        "seed": record.seed,
        "search": {
            "budget": record.budget,
            "steps": record.steps,
            "batch_size": record.batch_size,
            "lr": record.lr,
            "final_epochs": record.final_epochs,
        },
        "space": {
            "num_layers": space_cfg.num_layers,
            "fusion_depth": space_cfg.fusion_depth,
            "repeats": list(space_cfg.repeats),
            "skip_prob": space_cfg.skip_prob,
            "width": space_cfg.width,
            "fusion_width": space_cfg.fusion_width,
            "num_classes": space_cfg.num_classes,
        },
        "log": [
            {
                "index": e.index,
                "spec_hash": e.spec_hash,
                "steps": e.steps,
                "val_accuracy": e.val_accuracy,
                "new_params": e.new_params,
                "error": e.error,
            }
            for e in record.log
        ],
        "best": None,
        "final": None,
    }
    if record.best_spec is not None:
        obj["best"] = {
            "spec": space_mod.to_json_obj(record.best_spec),
            "spec_hash": record.best_spec_hash,
            "val_accuracy": record.best_val_accuracy,
            "feature_params": record.feature_params,
            "fusion_params": record.fusion_params,
        }
    if record.final_test_accuracy is not None:
        obj["final"] = {"test_accuracy": record.final_test_accuracy}
    if include_timing:
        obj["timing"] = {
            "total_seconds": record.total_wall_time,
            "per_arch_seconds": [e.wall_time for e in record.log],
        }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def record_from_json(text: str) -> RunRecord:
    obj = json.loads(text)
    if obj.get("schema_version") != RECORD_SCHEMA_VERSION:
        raise ValueError(f"unsupported run record schema {obj.get('schema_version')}")
    sp = obj["space"]
    record = RunRecord(
        seed=obj["seed"],
        budget=obj["search"]["budget"],
        steps=obj["search"]["steps"],
        batch_size=obj["search"]["batch_size"],
        lr=obj["search"]["lr"],
        final_epochs=obj["search"]["final_epochs"],
        space=SearchSpaceConfig(
            num_layers=sp["num_layers"],
            fusion_depth=sp["fusion_depth"],
            repeats=tuple(sp["repeats"]),
            skip_prob=sp["skip_prob"],
            width=sp["width"],
            fusion_width=sp["fusion_width"],
            num_classes=sp["num_classes"],
        ),
        log=[
            ArchLogEntry(
                index=e["index"],
                spec_hash=e["spec_hash"],
                steps=e["steps"],
                val_accuracy=e["val_accuracy"],
                new_params=e["new_params"],
                error=e["error"],
            )
            for e in obj["log"]
        ],
    )
    best = obj.get("best")
    if best is not None:
        record.best_spec = space_mod.deserialize(json.dumps(best["spec"]))
        record.best_spec_hash = best["spec_hash"]
        record.best_val_accuracy = best["val_accuracy"]
        record.feature_params = best["feature_params"]
        record.fusion_params = best["fusion_params"]
    final = obj.get("final")
    if final is not None:
        record.final_test_accuracy = final["test_accuracy"]
    timing = obj.get("timing")
    if timing is not None:
        record.total_wall_time = timing["total_seconds"]
    return record


def replay_best(log: list[ArchLogEntry]) -> str | None:
    """Re-derive the winning hash from the log through the >= tie rule."""
    best_hash = None
    best_acc = float("-inf")
    for entry in log:
        if entry.error is None and entry.val_accuracy is not None and entry.val_accuracy >= best_acc:
            best_acc = entry.val_accuracy
            best_hash = entry.spec_hash
    return best_hash
