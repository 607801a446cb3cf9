"""Command-line entry points tying ingestion, training, and evaluation
into reproducible runs.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evaluate as ev
from .data import (DataError, load_checkpoint, load_dataset, parse_metapath,
                   read_embeddings, write_dataset, write_embeddings)
from .graph import Metapath, SchemaError, validate_metapath
from .metapaths import build_tables, dump_instance_table, enumerate_instances
from .model import ModelConfig, forward, init_params
from .tensor import grad_check
from .train import TrainConfig, semi_supervised_loss, train, write_manifest

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--attn-vec-dim", type=int, default=128)
    p.add_argument("--out-dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--encoder", choices=("mean", "linear", "rotation"), default="rotation")
    p.add_argument("--dropout", type=float, default=0.5)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--weight-decay", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=30)
    p.add_argument("--neg-per-pos", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="magnn",
                                 description="Metapath-aggregated heterogeneous graph embedding")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--linkpred", action="store_true",
                   help="bipartite user/artist graph instead of the labeled movie graph")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--movies", type=int, default=300)
    p.add_argument("--directors", type=int, default=300)
    p.add_argument("--actors", type=int, default=300)
    p.add_argument("--users", type=int, default=100)
    p.add_argument("--artists", type=int, default=100)
    p.add_argument("--blocks", type=int, default=5)
    p.add_argument("--p-in", type=float, default=None)
    p.add_argument("--p-out", type=float, default=None)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--crew-noise", type=float, default=None)

    p = sub.add_parser("enumerate", help="enumerate metapath instances")
    p.add_argument("--schema", required=True)
    p.add_argument("--metapath", required=True)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump", default=None, help="write a binary instance table dump")

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--schema", default=None, help="dataset schema (defaults to a built-in toy graph)")
    p.add_argument("--metapaths", default=None, help="comma-separated metapath strings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-3)
    _add_model_flags(p)

    p = sub.add_parser("train", help="train and export embeddings")
    p.add_argument("--schema", required=True)
    p.add_argument("--metapaths", required=True, help="comma-separated metapath strings")
    p.add_argument("--mode", choices=("semi-supervised", "unsupervised"),
                   default="semi-supervised")
    p.add_argument("--positive-relation", default=None)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate exported embeddings")
    p.add_argument("--schema", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--task", choices=("classify", "cluster", "linkpred"), required=True)
    p.add_argument("--fractions", default="0.2,0.4,0.6,0.8")
    p.add_argument("--relation", default=None, help="linkpred: relation naming the pair types")
    p.add_argument("--positives", default=None, help="linkpred: positive test pair file")
    p.add_argument("--negatives", default=None, help="linkpred: negative test pair file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="directory for reports.jsonl")

    p = sub.add_parser("ablation", help="train and evaluate model variants")
    p.add_argument("--schema", required=True)
    p.add_argument("--metapaths", required=True)
    p.add_argument("--variants", default=",".join(ev.ABLATION_VARIANTS))
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    _add_train_flags(p)

    return ap


def _model_config(args, metapaths) -> ModelConfig:
    return ModelConfig(
        hidden_dim=args.hidden_dim, attn_vec_dim=args.attn_vec_dim,
        out_dim=args.out_dim, num_heads=args.heads, num_layers=args.layers,
        encoder=args.encoder, dropout=args.dropout, metapaths=metapaths)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        mode=getattr(args, "mode", "semi-supervised"),
        learning_rate=args.lr, weight_decay=args.weight_decay,
        max_epochs=args.epochs, patience=args.patience, dropout=args.dropout,
        seed=args.seed, negatives_per_positive=args.neg_per_pos,
        positive_relation=getattr(args, "positive_relation", None))


def _parse_metapaths(graph, text: str):
    """Parse comma-separated metapath strings and group them by target type."""
    by_type: dict[int, list[Metapath]] = {}
    for part in text.split(","):
        path = validate_metapath(graph, parse_metapath(part.strip(), graph.schema))
        by_type.setdefault(path.types[0], []).append(path)
    return by_type


def _load(schema_path: str):
    graph, warnings = load_dataset(schema_path)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return graph


def _toy_graph():
    return ev.synth_hetgraph(classes=3, movies=30, directors=10, actors=12,
                             p_in=0.2, p_out=0.02, seed=7)


# ---------------------------------------------------------------------------
# subcommand bodies

def cmd_synth(args) -> int:
    if args.linkpred:
        graph, _, _ = ev.synth_linkpred_graph(
            users=args.users, artists=args.artists, blocks=args.blocks,
            p_in=args.p_in if args.p_in is not None else 0.7,
            p_out=args.p_out if args.p_out is not None else 0.01, seed=args.seed)
    else:
        graph = ev.synth_hetgraph(
            classes=args.classes, movies=args.movies, directors=args.directors,
            actors=args.actors,
            p_in=args.p_in if args.p_in is not None else 0.05,
            p_out=args.p_out if args.p_out is not None else 0.005,
            feature_noise=args.noise, crew_noise=args.crew_noise, seed=args.seed)
    schema_path = write_dataset(graph, args.out)
    print(f"wrote {schema_path}")
    return 0


def cmd_enumerate(args) -> int:
    graph = _load(args.schema)
    path = validate_metapath(graph, parse_metapath(args.metapath, graph.schema))
    table = enumerate_instances(graph, path, cap=args.cap, seed=args.seed)
    lengths = np.diff(table.offsets)
    print(f"metapath {args.metapath}: {table.num_instances} instances over "
          f"{table.num_targets} targets")
    if table.num_targets:
        print(f"block sizes: min {lengths.min()} mean {lengths.mean():.2f} "
              f"max {lengths.max()}; empty targets: {(lengths == 0).sum()}")
    if args.dump:
        dump_instance_table(table, args.dump)
        print(f"wrote {args.dump}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.schema:
        graph = _load(args.schema)
        if not args.metapaths:
            print("gradcheck with --schema requires --metapaths", file=sys.stderr)
            return EXIT_CONFIG
        metapaths = _parse_metapaths(graph, args.metapaths)
    else:
        graph = _toy_graph()
        metapaths = ev.default_movie_metapaths(graph)

    cfg = _model_config(args, metapaths)
    cfg.dropout = 0.0
    labeled = [t for t, y in graph.labels.items() if y is not None]
    if labeled:
        cfg.classify = True
        t_lab = labeled[0]
        cfg.out_dim = int(graph.labels[t_lab].max()) + 1
    tables = build_tables(graph, metapaths, seed=args.seed)
    params = init_params(graph, cfg, seed=args.seed)

    def loss_fn():
        out = forward(graph, tables, params, cfg, train=False)
        if labeled:
            idx = graph.masks.get(t_lab, {}).get("train")
            if idx is None:
                idx = np.arange(graph.num_nodes(t_lab))
            return semi_supervised_loss(out[t_lab], graph.labels[t_lab], idx)
        total = None
        for t in sorted(out):
            s = out[t]
            import magnn.tensor as T
            term = T.tsum(T.mul(s, s))
            total = term if total is None else T.add(total, term)
        return total

    err = grad_check(loss_fn, params.tensors(), step=args.step, seed=args.seed)
    print(f"max relative gradient error: {err:.3e}")
    return 0 if err < args.threshold else EXIT_NUMERIC


def cmd_train(args) -> int:
    graph = _load(args.schema)
    metapaths = _parse_metapaths(graph, args.metapaths)
    cfg = _model_config(args, metapaths)
    tc = _train_config(args)
    tables = build_tables(graph, metapaths, cap=args.cap, seed=args.seed)
    params, report = train(graph, tables, cfg, tc)

    os.makedirs(args.out, exist_ok=True)
    from .data import save_checkpoint
    save_checkpoint(os.path.join(args.out, "checkpoint.bin"), params, cfg, graph.schema)
    out = forward(graph, tables, params, cfg, train=False)
    write_embeddings(os.path.join(args.out, "embeddings.txt"),
                     {t: h.data for t, h in out.items()}, graph.schema)
    run_config = {"command": "train", "schema": args.schema,
                  "metapaths": args.metapaths, "mode": args.mode,
                  "positive_relation": args.positive_relation,
                  "cap": args.cap, "seed": args.seed,
                  "model": {k: v for k, v in cfg.__dict__.items() if k != "metapaths"},
                  "train": {k: v for k, v in tc.__dict__.items()}}
    write_manifest(os.path.join(args.out, "manifest.json"), run_config, report)
    print(f"best epoch {report.best_epoch} (stopped {report.stopped_epoch}); "
          f"val loss {report.val_losses[report.best_epoch - 1]:.4f}")
    print(f"artifacts in {args.out}")
    return 0


def _emit_reports(reports, out_dir):
    for r in reports:
        print(r.to_json())
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "reports.jsonl"), "w") as f:
            for r in reports:
                f.write(r.to_json() + "\n")


def cmd_eval(args) -> int:
    graph = _load(args.schema)
    emb = read_embeddings(args.embeddings, graph.schema)
    reports = []
    if args.task in ("classify", "cluster"):
        labeled = [t for t, y in graph.labels.items() if y is not None]
        if not labeled:
            print("dataset has no labels", file=sys.stderr)
            return EXIT_DATA
        t_lab = labeled[0]
        test_idx = graph.masks.get(t_lab, {}).get("test")
        if test_idx is None:
            test_idx = np.arange(graph.num_nodes(t_lab))
        x = emb[t_lab][test_idx]
        y = graph.labels[t_lab][test_idx]
        if args.task == "classify":
            for frac in [float(s) for s in args.fractions.split(",")]:
                macro, micro = ev.linear_probe(x, y, frac, seed=args.seed)
                reports.append(ev.EvalReport(
                    "classify", {"macro_f1": macro, "micro_f1": micro},
                    train_fraction=frac, runs=10))
        else:
            k = int(y.max()) + 1
            nmi, ari = ev.cluster_eval(x, y, max(k, 2), seed=args.seed)
            reports.append(ev.EvalReport("cluster", {"nmi": nmi, "ari": ari}))
    else:
        if not (args.relation and args.positives and args.negatives):
            print("linkpred requires --relation, --positives, --negatives", file=sys.stderr)
            return EXIT_CONFIG
        rel = graph.schema.relations[graph.schema.relation_id(args.relation)]
        from .data import _parse_edge_file
        pos = np.array(_parse_edge_file(args.positives), dtype=np.int64).reshape(-1, 2)
        neg = np.array(_parse_edge_file(args.negatives), dtype=np.int64).reshape(-1, 2)
        auc, ap = ev.link_predict_eval(
            emb, (rel.source, rel.target, pos[:, 0], pos[:, 1]),
            (rel.source, rel.target, neg[:, 0], neg[:, 1]))
        reports.append(ev.EvalReport("linkpred", {"auc": auc, "ap": ap}))
    _emit_reports(reports, args.out)
    return 0


def cmd_ablation(args) -> int:
    graph = _load(args.schema)
    metapaths = _parse_metapaths(graph, args.metapaths)
    cfg = _model_config(args, metapaths)
    tc = _train_config(args)
    reports = []
    for variant in [v.strip() for v in args.variants.split(",")]:
        reports.append(ev.ablation_run(variant, graph, metapaths, cfg, tc, cap=args.cap))
    _emit_reports(reports, args.out)
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "enumerate": cmd_enumerate,
    "gradcheck": cmd_gradcheck,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablation": cmd_ablation,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (SchemaError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
