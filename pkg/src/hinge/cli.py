"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, HingeError

SYNOPSIS = """usage: hinge <command> [options]

commands:
  prepare     ingest a dataset into a prepared directory (graph.hngg, pairs.bin, manifest.txt)
  train       train and evaluate (--config, --ns, --cross, --all-pairs, --seed)
  eval        evaluate a checkpoint on the test split
  bench-conv  time FFT against naive interaction, CSV on stdout
  sample      dump sampled neighbourhoods for one anchor
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hinge", add_help=True, usage=SYNOPSIS)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    pr = sub.add_parser("prepare")
    pr.add_argument("--format", default="movielens", choices=["movielens", "edgelist", "toy", "planted-and",
                                                              "ns-planted"])
    pr.add_argument("--data", help="input directory (movielens) or edge-list file")
    pr.add_argument("--pairs", help="labelled pairs TSV for --format edgelist: source, target, label")
    pr.add_argument("--source-type", default="user")
    pr.add_argument("--target-type", default="item")
    pr.add_argument("--movie-neighbors", type=int, default=30)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", required=True)

    tr = sub.add_parser("train")
    tr.add_argument("--config", required=True)
    tr.add_argument("--data", help="prepared directory (overrides data= in the config)")
    tr.add_argument("--out", help="output directory (overrides out= in the config)")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--ns", action="store_true")
    tr.add_argument("--cross", action="store_true")
    tr.add_argument("--all-pairs", action="store_true")
    tr.add_argument("--max-epochs", type=int)
    tr.add_argument("--no-topn", action="store_true")

    ev = sub.add_parser("eval")
    ev.add_argument("--config", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data")
    ev.add_argument("--seed", type=int)

    bc = sub.add_parser("bench-conv")
    bc.add_argument("--I", default="16,32,64", help="comma-separated path lengths")
    bc.add_argument("--L", type=int, default=256)
    bc.add_argument("--E", type=int, default=64)
    bc.add_argument("--repeat", type=int, default=3)
    bc.add_argument("--out")

    sa = sub.add_parser("sample")
    sa.add_argument("--data", required=True)
    sa.add_argument("--metapath", required=True)
    sa.add_argument("--anchor", type=int, required=True)
    sa.add_argument("--L", type=int, default=16)
    sa.add_argument("--seed", type=int, default=0)
    sa.add_argument("--epoch", type=int, default=0)
    sa.add_argument("--out", help="write an HNGB path buffer instead of text")
    return p


def _load_config(args):
    from .data import read_config
    from .trainer import TrainConfig

    values = read_config(args.config)
    base = Path(args.config).parent
    if getattr(args, "seed", None) is not None:
        values["seed"] = str(args.seed)
    for flag, key in (("ns", "ns_enabled"), ("cross", "cross_enabled"), ("all_pairs", "all_pairs_enabled")):
        if getattr(args, flag, False):
            values[key] = "true"
    if getattr(args, "max_epochs", None) is not None:
        values["max_epochs"] = str(args.max_epochs)
    data = getattr(args, "data", None) or values.get("data")
    if not data:
        raise ConfigError("no dataset: pass --data or set data= in the config")
    data_path = Path(data)
    if not data_path.is_absolute() and not getattr(args, "data", None):
        data_path = base / data_path
    out = getattr(args, "out", None) or values.get("out")
    out_path = None
    if out:
        out_path = Path(out)
        if not out_path.is_absolute() and not getattr(args, "out", None):
            out_path = base / out_path
    return TrainConfig.from_dict(values), data_path, out_path


def cmd_prepare(args) -> int:
    from . import synthetic
    from .data import Dataset, LabeledPairs, default_data_dir, ingest_movielens, save_dataset
    from .graph import load_edge_list

    if args.format == "movielens":
        src = Path(args.data) if args.data else default_data_dir() / "ml-100k"
        ds = ingest_movielens(src, movie_neighbors=args.movie_neighbors)
    elif args.format == "edgelist":
        if not args.data or not args.pairs:
            raise UsageError("prepare --format edgelist needs --data EDGES and --pairs PAIRS")
        g, interner = load_edge_list(args.data, freeze=True)
        pairs = _read_pairs(args.pairs, interner, args.source_type, args.target_type)
        ds = Dataset(g, pairs, args.source_type, args.target_type, {"dataset": Path(args.data).name})
        Path(args.out).mkdir(parents=True, exist_ok=True)
        interner.save(Path(args.out) / "interner.tsv")
    elif args.format == "toy":
        ds = synthetic.toy_dataset(args.seed)
    elif args.format == "planted-and":
        ds = synthetic.planted_and(args.seed)
    else:
        ds = synthetic.ns_planted(args.seed)
    save_dataset(ds, args.out)
    print(f"prepared {args.out}: {len(ds.pairs)} pairs, checksum {ds.graph.checksum()[:16]}")
    return 0


def _read_pairs(path, interner, source_type, target_type):
    from .data import LabeledPairs
    from .errors import MalformedLine, MissingData, MissingFile

    p = Path(path)
    if not p.exists():
        raise MissingFile(f"missing file: {p}")
    src, dst, lab = [], [], []
    with open(p, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("0", "1"):
                raise MalformedLine(p, lineno, "expected source<TAB>target<TAB>0|1")
            try:
                src.append(interner.lookup(source_type, parts[0]))
                dst.append(interner.lookup(target_type, parts[1]))
            except KeyError:
                raise MalformedLine(p, lineno, "unknown node id") from None
            lab.append(int(parts[2]))
    if not lab:
        raise MissingData(f"{p} holds no pairs")
    return LabeledPairs(src, dst, lab)


def cmd_train(args) -> int:
    from .data import load_dataset
    from .pipeline import run

    cfg, data, out = _load_config(args)
    ds = load_dataset(data)
    _, result, _ = run(ds, cfg, out_dir=out, topn=not args.no_topn)
    test = result.test
    print(" ".join(f"{k}={v:.4f}" for k, v in test.items()) + f" best_epoch={result.best_epoch}")
    return 0


def cmd_eval(args) -> int:
    from .data import load_dataset, split
    from .pipeline import build_model, build_provider
    from .tensor import load_checkpoint
    from .trainer import evaluate_ctr

    cfg, data, _ = _load_config(args)
    ds = load_dataset(data)
    tr, va, te = split(ds.pairs, cfg.split, cfg.seed)
    model = build_model(ds, cfg)
    load_checkpoint(model.store, args.checkpoint)
    provider = build_provider(ds, model, cfg, tr)
    m = evaluate_ctr(model, provider, te, cfg.eval_batch_size)
    print(" ".join(f"{k}={v:.4f}" for k, v in m.items()))
    return 0


def cmd_bench(args) -> int:
    from .interaction import benchmark, write_benchmark

    try:
        Is = [int(x) for x in str(args.I).split(",") if x]
    except ValueError:
        raise UsageError("--I takes comma-separated integers") from None
    rows = benchmark(Is, L=args.L, E=args.E, repeat=args.repeat)
    write_benchmark(rows, sys.stdout)
    if args.out:
        write_benchmark(rows, args.out)
    return 0


def cmd_sample(args) -> int:
    from .data import load_dataset
    from .sampler import sample_paths, save_paths

    ds = load_dataset(args.data)
    g = ds.graph
    try:
        mp = g.metapath(args.metapath)
    except HingeError as exc:
        raise UsageError(str(exc)) from None
    if not 0 <= args.anchor < g.num_nodes(mp.type(0)):
        raise UsageError(f"anchor {args.anchor} out of range for {mp.type(0).name}")
    batch = sample_paths(g, g.node(mp.type(0), args.anchor), mp, args.L, args.seed, args.epoch)
    if args.out:
        save_paths(args.out, batch.paths)
        return 0
    codes = [t.code for t in mp.types]
    for row, mask in zip(batch.paths, batch.pad_mask):
        print(" ".join(f"{c}{'pad' if m else v}" for c, v, m in zip(codes, row, mask)))
    return 0


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "eval": cmd_eval, "bench-conv": cmd_bench,
            "sample": cmd_sample}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args = _parser().parse_args(argv)
        if not args.command:
            raise UsageError("missing command")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"{exc}\n\n{SYNOPSIS}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
