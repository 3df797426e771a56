"""Command-line surface: synth, train, embed, index, query, evaluate,
bench.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 runtime
error. Every command is deterministic given identical inputs and seeds.
"""

import argparse
import sys

import numpy as np

from . import bench as bench_mod
from . import io as dio
from . import metrics, retrieval, trainer
from .encoder import MlpEncoder
from .io import DataFormatError

__all__ = ["main"]

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _build_parser():
    parser = _Parser(prog="ctlkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--views", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--queries-per-class", type=int, default=1)
    p.add_argument("--train-classes", type=int, default=0)
    p.add_argument("--format", choices=("text", "binary"), default="binary")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("train", help="train an encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--loss-log")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("embed", help="run the eval-mode encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("index", help="build a retrieval index")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("instance", "centroid"),
                   required=True)
    p.add_argument("--cross-view", action="store_true")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("query", help="rank queries against an index")
    p.add_argument("--index", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--topk", type=int, required=True)
    p.add_argument("--cross-view", action="store_true")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("evaluate", help="compute mAP and Acc@K")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("instance", "centroid"),
                   required=True)
    p.add_argument("--cross-view", action="store_true")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("bench", help="instance vs centroid benchmark")
    p.add_argument("--data", required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("-o", "--output", required=True)
    return parser


def _load_data(path):
    with open(path, "rb") as fh:
        head = fh.read(4)
    fmt = "binary" if head == b"CTLE" else "text"
    return dio.load_dataset(path, format=fmt)


def _cmd_synth(args):
    ds = dio.generate_synthetic(
        num_classes=args.classes, samples_per_class=args.per_class,
        dim=args.dim, noise_sigma=args.sigma, num_views=args.views,
        seed=args.seed, queries_per_class=args.queries_per_class,
        train_classes=args.train_classes)
    dio.save_dataset(ds, args.output, format=args.format)
    print(f"wrote {len(ds)} records (dim {ds.dim}) to {args.output}")


def _cmd_train(args):
    ds = _load_data(args.data)
    try:
        cfg = trainer.load_config(args.config)
    except ValueError as exc:
        raise DataFormatError(f"{args.config}: {exc}") from exc
    enc, log = trainer.train(ds, cfg)
    enc.save(args.output)
    if args.loss_log:
        trainer.write_loss_log(log, args.loss_log)
    final = log[-1].total if log else float("nan")
    print(f"trained {cfg.epochs} epochs; final total loss {final:.6g}; "
          f"checkpoint at {args.output}")


def _cmd_embed(args):
    ds = _load_data(args.data)
    enc = MlpEncoder.load(args.checkpoint)
    _, normalized = enc.embed(ds.vectors.astype(np.float64))
    out = dio.Dataset(
        dim=enc.out_dim,
        ids=ds.ids.copy(),
        class_ids=ds.class_ids.copy(),
        view_ids=ds.view_ids.copy(),
        splits=ds.splits.copy(),
        vectors=normalized.astype(np.float32),
    )
    dio.save_dataset(out, args.output, format="binary")
    print(f"embedded {len(out)} records to dim {out.dim} at {args.output}")


def _save_index(ds, mode, path):
    # The index file carries the gallery subset; the index itself is
    # rebuilt on load (cheap, and keeps cross-view variants available).
    rows = ds.split_rows("gallery")
    with open(path, "wb") as fh:
        np.savez(fh, mode=mode, dim=ds.dim, ids=ds.ids[rows],
                 class_ids=ds.class_ids[rows], view_ids=ds.view_ids[rows],
                 splits=ds.splits[rows], vectors=ds.vectors[rows])


def _load_index(path):
    with np.load(path, allow_pickle=False) as data:
        ds = dio.Dataset(
            dim=int(data["dim"]), ids=data["ids"],
            class_ids=data["class_ids"], view_ids=data["view_ids"],
            splits=data["splits"], vectors=data["vectors"])
        mode = str(data["mode"])
    if mode == "instance":
        return retrieval.build_instance_index(ds)
    return retrieval.build_centroid_index(ds)


def _cmd_index(args):
    ds = _load_data(args.data)
    # Validate the build before writing.
    if args.mode == "instance":
        index = retrieval.build_instance_index(ds)
    else:
        index = retrieval.build_centroid_index(ds)
    _save_index(ds, args.mode, args.output)
    print(f"{args.mode} index with {index.num_candidates} candidates "
          f"written to {args.output}")


def _cmd_query(args):
    index = _load_index(args.index)
    ds = _load_data(args.data)
    results = []
    for row in ds.split_rows("query"):
        rec = ds.record(row)
        try:
            results.append(retrieval.query_topk(
                index, rec, k=args.topk, cross_view=args.cross_view))
        except retrieval.UnjudgeableQueryError:
            continue
    retrieval.write_rankings(results, args.output)
    print(f"wrote rankings for {len(results)} queries to {args.output}")


def _cmd_evaluate(args):
    ds = _load_data(args.data)
    report = metrics.evaluate(ds, mode=args.mode,
                              cross_view=args.cross_view)
    metrics.write_report(report, args.output)
    print(report.to_table())


def _cmd_bench(args):
    ds = _load_data(args.data)
    report = bench_mod.bench_retrieval(ds, repeats=args.repeats,
                                       name=args.data)
    bench_mod.write_bench_csv(report, args.output)
    for mode, mb in report.modes.items():
        print(f"{mode}: candidates={mb.candidates} "
              f"bytes={mb.payload_bytes} eval_s={mb.eval_seconds:.4f}")


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "embed": _cmd_embed,
    "index": _cmd_index,
    "query": _cmd_query,
    "evaluate": _cmd_evaluate,
    "bench": _cmd_bench,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except (DataFormatError, FileNotFoundError, IsADirectoryError,
            PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic contract
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
