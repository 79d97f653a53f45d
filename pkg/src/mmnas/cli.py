"""Single entry point for the whole workflow.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 runtime
failure. Errors print one machine-parsable line to stderr prefixed
"error:". Results go to stdout or the requested output files; progress and
the effective configuration echo go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import space as space_mod
from .rng import Rng
from .space import SearchSpaceConfig

# Heavy dependencies (the JIT kernels in particular) load lazily inside the
# commands that need them, keeping metadata commands fast.


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        self.exit(1)


def _space_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--L", type=int, default=5, help="layers per cell")
    p.add_argument("--D", type=int, default=3, help="fusion network depth")
    p.add_argument("--C", type=int, default=3, help="cell repeats per modality")
    p.add_argument("--p", type=float, default=0.5, help="skip connection probability")
    p.add_argument("--width", type=int, default=16, help="channels per cell layer")
    p.add_argument("--fusion-width", type=int, default=64, help="fusion hidden size")
    p.add_argument("--classes", type=int, default=None, help="class count (default: from data)")


def _space_config(args, num_classes: int) -> SearchSpaceConfig:
    return SearchSpaceConfig(
        num_layers=args.L,
        fusion_depth=args.D,
        repeats=(args.C, args.C),
        skip_prob=args.p,
        width=args.width,
        fusion_width=args.fusion_width,
        num_classes=num_classes,
    )


def build_parser() -> Parser:
    parser = Parser(prog="mmnas", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, help_text):
        return sub.add_parser(
            name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )

    p = cmd("gen-data", "generate the synthetic bi-modal dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k-a", type=int, default=4, help="row-band factor (modality x)")
    p.add_argument("--k-b", type=int, default=4, help="column-band factor (modality y)")
    p.add_argument("--sigma", type=float, default=0.25, help="pixel noise level")
    p.add_argument("--image-size", type=int, default=16, help="square image side")
    p.add_argument("--sizes", default="4000,500,2000", help="train,val,test sample counts")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--config", default=None, help="JSON config merged under explicit flags")

    p = cmd("cardinality", "print exact search-space sizes")
    p.add_argument("--L", type=int, default=5, help="layers per cell")
    p.add_argument("--D", type=int, default=3, help="fusion network depth")
    p.add_argument("--C", type=int, default=3, help="cell repeats")
    p.add_argument("--config", default=None, help="JSON config merged under explicit flags")

    p = cmd("sample", "sample one architecture")
    p.add_argument("--seed", type=int, default=0, help="sampler seed")
    p.add_argument("--out", default=None, help="write architecture JSON here (default stdout)")
    _space_flags(p)
    p.add_argument("--config", default=None, help="JSON config merged under explicit flags")

    p = cmd("search", "budgeted random search with weight sharing")
    p.add_argument("--data", required=True, help="dataset directory or manifest path")
    p.add_argument("--budget", type=int, default=100, help="architectures to sample")
    p.add_argument("--steps", default="auto", help="training steps per architecture, or 'auto' (10%% of train)")
    p.add_argument("--batch-size", type=int, default=32, help="training batch size")
    p.add_argument("--lr", type=float, default=1e-4, help="search-phase learning rate")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    p.add_argument("--out", required=True, help="run record JSON path")
    p.add_argument("--best-arch", default=None, help="also write the winning architecture JSON here")
    p.add_argument("--save-store", default=None, help="also snapshot the shared store here (.rnps)")
    p.add_argument("--timing", action="store_true", help="include wall-clock timing in the record")
    _space_flags(p)
    p.add_argument("--config", default=None, help="JSON config merged under explicit flags")

    p = cmd("train", "train one architecture to convergence")
    p.add_argument("--arch", required=True, help="architecture JSON")
    p.add_argument("--data", required=True, help="dataset directory or manifest path")
    p.add_argument("--epochs", type=int, default=50, help="training epochs")
    p.add_argument("--lr", type=float, default=1e-3, help="learning rate")
    p.add_argument("--batch-size", type=int, default=32, help="batch size")
    p.add_argument("--seed", type=int, default=0, help="init/shuffle seed")
    p.add_argument("--out", required=True, help="parameter snapshot path (.rnps)")
    p.add_argument("--init-params", default=None, help="warm-start from this snapshot")
    p.add_argument("--config", default=None, help="JSON config merged under explicit flags")

    p = cmd("eval", "evaluate a trained architecture")
    p.add_argument("--arch", required=True, help="architecture JSON")
    p.add_argument("--params", required=True, help="parameter snapshot (.rnps)")
    p.add_argument("--data", required=True, help="dataset directory or manifest path")
    p.add_argument("--split", default="test", choices=("train", "val", "test"), help="split to score")
    p.add_argument("--config", default=None, help="JSON config merged under explicit flags")

    p = cmd("report", "variance tables and architecture summaries")
    p.add_argument("--runs", nargs="*", default=[], help="run record JSON files")
    p.add_argument("--format", default="markdown", choices=("markdown", "csv"), help="table format")
    p.add_argument("--arch", default=None, help="architecture JSON to summarize")
    p.add_argument("--dot", default=None, help="write the architecture DOT graph here")
    p.add_argument("--out", default=None, help="write output here instead of stdout")
    p.add_argument("--config", default=None, help="JSON config merged under explicit flags")

    cmd("method-card", "print the human-intervention method card")
    return parser


def _merge_config(parser: Parser, args: argparse.Namespace, argv: list[str]) -> argparse.Namespace:
    """Config-file values fill in wherever the flag was not given explicitly."""
    config_path = getattr(args, "config", None)
    if not config_path:
        return args
    try:
        with open(config_path) as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {config_path}", 2) from None
    except json.JSONDecodeError as err:
        raise CliError(f"config file {config_path}: {err.msg} at line {err.lineno}", 2) from None
    if not isinstance(config, dict):
        raise CliError(f"config file {config_path}: expected a JSON object", 2)
    valid = set(vars(args))
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token.split("=", 1)[0].lstrip("-").replace("-", "_"))
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest not in valid:
            raise CliError(f"config file {config_path}: unknown option '{key}'", 1)
        if dest not in explicit:
            setattr(args, dest, value)
    return args


def _echo_config(args: argparse.Namespace) -> None:
    shown = {k: v for k, v in vars(args).items() if k != "config"}
    print(f"config: {json.dumps(shown, sort_keys=True, default=str)}", file=sys.stderr)


def _write_or_print(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_dataset(path):
    from . import data as data_mod

    try:
        return data_mod.load_manifest(path)
    except FileNotFoundError as err:
        raise CliError(f"data file missing: {err}", 2) from None


def _load_arch(path) -> space_mod.ArchitectureSpec:
    try:
        with open(path) as fh:
            return space_mod.deserialize(fh.read())
    except FileNotFoundError:
        raise CliError(f"architecture file not found: {path}", 2) from None


def cmd_gen_data(args) -> int:
    from . import data as data_mod

    sizes = tuple(int(s) for s in str(args.sizes).split(","))
    if len(sizes) != 3:
        raise CliError(f"--sizes wants train,val,test, got '{args.sizes}'", 1)
    cfg = data_mod.SyntheticConfig(
        k_a=args.k_a, k_b=args.k_b, image_size=args.image_size,
        sigma=args.sigma, counts=sizes, seed=args.seed,
    )
    dataset = data_mod.generate_synthetic(cfg)
    manifest = data_mod.save(dataset, args.out)
    print(manifest)
    return 0


def cmd_cardinality(args) -> int:
    print(f"cells: {space_mod.cell_cardinality(args.L)}")
    print(f"fusion: {space_mod.fusion_cardinality(args.D, args.C)}")
    return 0


def cmd_sample(args) -> int:
    cfg = _space_config(args, args.classes if args.classes is not None else 16)
    spec = space_mod.sample_architecture(cfg, Rng(args.seed))
    text = space_mod.serialize(spec) + "\n"
    _write_or_print(text, args.out)
    if args.out:
        print(args.out, file=sys.stderr)
    return 0


def cmd_search(args) -> int:
    from . import search as search_mod
    from .params import ParamStore

    dataset = _load_dataset(args.data)
    classes = args.classes if args.classes is not None else dataset.num_classes
    steps = None if str(args.steps) == "auto" else int(args.steps)
    cfg = search_mod.SearchConfig(
        budget=args.budget,
        steps=steps,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        space=_space_config(args, classes),
    )
    seeds = Rng(cfg.seed)
    seeds.next64(), seeds.next64()
    store = ParamStore(seed=seeds.next64())
    record = search_mod.run_search(cfg, dataset, store)
    with open(args.out, "w") as fh:
        fh.write(search_mod.record_to_json(record, include_timing=args.timing) + "\n")
    if args.best_arch and record.best_spec is not None:
        with open(args.best_arch, "w") as fh:
            fh.write(space_mod.serialize(record.best_spec) + "\n")
    if args.save_store:
        store.save(args.save_store)
    best = record.best_spec_hash or "none"
    print(
        f"searched {record.budget} architectures in {record.total_wall_time:.1f}s; "
        f"best {best} val accuracy {record.best_val_accuracy:.4f}",
        file=sys.stderr,
    )
    print(args.out)
    return 0


def cmd_train(args) -> int:
    from . import search as search_mod
    from .params import ParamStore

    spec = _load_arch(args.arch)
    dataset = _load_dataset(args.data)
    warm = args.init_params is not None
    store = ParamStore.load(args.init_params) if warm else None
    _, accuracy, store = search_mod.final_train(
        spec,
        dataset,
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        warm_start=warm,
        store=store,
    )
    store.save(args.out)
    print(f"test accuracy: {accuracy:.6f}")
    return 0


def cmd_eval(args) -> int:
    from . import search as search_mod
    from .builder import build, spec_param_keys
    from .params import ParamStore

    spec = _load_arch(args.arch)
    dataset = _load_dataset(args.data)
    store = ParamStore.load(args.params)
    feature, fusion = spec_param_keys(spec)
    missing = [k for k in feature + fusion if k not in store.entries]
    if missing:
        raise CliError(f"snapshot is missing parameters for key {missing[0].canonical()}", 2)
    net = build(spec, store, (dataset.x.shape[1:], dataset.y.shape[1:]))
    accuracy = search_mod.evaluate(net, dataset, args.split)
    print(f"{args.split} accuracy: {accuracy:.6f}")
    return 0


def cmd_report(args) -> int:
    from . import report as report_mod
    from . import search as search_mod

    pieces = []
    if args.runs:
        records = []
        for path in args.runs:
            try:
                with open(path) as fh:
                    records.append(search_mod.record_from_json(fh.read()))
            except FileNotFoundError:
                raise CliError(f"run record not found: {path}", 2) from None
        table = report_mod.aggregate(records)
        pieces.append(report_mod.emit_table(table, args.format))
        if args.format == "markdown":
            pieces.extend(report_mod.emit_run_summary(r) for r in records)
    if args.arch:
        spec = _load_arch(args.arch)
        summary, dot = report_mod.emit_arch_summary(spec)
        pieces.append(summary)
        if args.dot:
            with open(args.dot, "w") as fh:
                fh.write(dot)
    if not pieces:
        raise CliError("report needs --runs and/or --arch", 1)
    _write_or_print("\n".join(pieces), args.out)
    return 0


def cmd_method_card(args) -> int:
    from . import report as report_mod

    sys.stdout.write(report_mod.emit_method_card())
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "cardinality": cmd_cardinality,
    "sample": cmd_sample,
    "search": cmd_search,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
    "method-card": cmd_method_card,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(parser, args, argv)
        if args.command != "method-card":
            _echo_config(args)
        return COMMANDS[args.command](args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except FileNotFoundError as err:
        print(f"error: missing file: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        # covers spec/data/snapshot format errors too, all ValueError subclasses
        print(f"error: {err}", file=sys.stderr)
        return 2
    except RuntimeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
