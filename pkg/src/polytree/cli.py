"""Command-line interface.

Subcommands: train, predict, evaluate, inspect, boundary, synth.
Exit codes: 0 success, 1 data/runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict

import numpy as np

from .data import Dataset, load_delimited, load_sparse, standardize, synth_circles
from .errors import PolytreeError
from .metrics import evaluate, tree_stats
from .model_io import LoadedModel, load_model, save_model
from .objective import PriorConfig
from .pipeline import train_model
from .topology import GrowthConfig
from .train import AnnealSchedule, TrainConfig
from .tree import (
    CLASSIFICATION,
    LeafNode,
    branch_nodes,
    predict_batch,
    route_indices,
    split_probability_batch,
)


def _add_data_flags(parser, with_valid=False):
    parser.add_argument("--data", required=True, help="training/input data file")
    if with_valid:
        parser.add_argument("--valid", help="validation data file")
        parser.add_argument("--test", help="held-out test data file")
    parser.add_argument(
        "--format", choices=["csv", "sparse"], default="csv", help="input file format"
    )
    parser.add_argument("--has-header", action="store_true", help="first csv line is a header")
    parser.add_argument(
        "--label-column", type=int, default=0, help="csv column holding the label"
    )


def _load(path, fmt, classify, has_header=False, label_column=0) -> Dataset:
    if fmt == "sparse":
        return load_sparse(path, classify=classify)
    return load_delimited(
        path, has_header=has_header, label_column=label_column, classify=classify
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polytree",
        description="Decision trees with convex-polytope splits trained by gradient descent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="grow, refine, and save a tree")
    _add_data_flags(p, with_valid=True)
    p.add_argument("--task", choices=["classify", "regress"], default="classify")
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--min-samples", type=int, default=16)
    p.add_argument("--truncation", type=int, default=50, help="max experts per node")
    p.add_argument("--restarts", type=int, default=3, help="stump fits per node")
    p.add_argument("--gamma0", type=float, default=1.0)
    p.add_argument("--c0", type=float, default=0.05)
    p.add_argument("--a-beta", type=float, default=1.0)
    p.add_argument("--b-beta", type=float, default=1.0)
    p.add_argument("--reg-weight", type=float, default=0.01)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=4096)
    p.add_argument("--epochs", type=int, default=600)
    p.add_argument("--lambda-start", type=float, default=1.0)
    p.add_argument("--lambda-end", type=float, default=64.0)
    p.add_argument("--patience", type=int, default=0, help="early-stop patience in epochs (0 off)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output model file (JSON)")

    p = sub.add_parser("predict", help="write per-row predictions")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--out", help="predictions file (default stdout)")

    p = sub.add_parser("evaluate", help="score a model on labeled data")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--metric", choices=["ACC", "AUC", "RMSE"], help="override the task default")

    p = sub.add_parser("inspect", help="print model structure and shrinkage stats")
    p.add_argument("--model", required=True)
    p.add_argument("--full", action="store_true", help="also print every expert's parameters")

    p = sub.add_parser("boundary", help="export a 2-d decision grid")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", type=int, default=200, help="grid resolution per axis")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate the concentric-circles dataset")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--r-inner", type=float, default=0.45)
    p.add_argument("--r-outer", type=float, default=0.85)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    return parser


def _history_path(model_path: str) -> str:
    base, _ = os.path.splitext(model_path)
    return base + ".history.tsv"


def cmd_train(args) -> int:
    classify = args.task == "classify"
    train = _load(args.data, args.format, classify, args.has_header, args.label_column)
    valid = (
        _load(args.valid, args.format, classify, args.has_header, args.label_column)
        if args.valid
        else None
    )
    test = (
        _load(args.test, args.format, classify, args.has_header, args.label_column)
        if args.test
        else None
    )
    train, transform = standardize(train)
    if valid is not None:
        valid = transform.apply(valid)
    if test is not None:
        test = transform.apply(test)

    prior = PriorConfig(
        gamma0=args.gamma0,
        c0=args.c0,
        a_beta=args.a_beta,
        b_beta=args.b_beta,
        reg_weight=args.reg_weight,
    )
    config = TrainConfig(
        truncation_k=args.truncation,
        prior=prior,
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        early_stop_patience=args.patience,
        anneal=AnnealSchedule(
            lambda_start=args.lambda_start,
            lambda_end=args.lambda_end,
            total_epochs=max(args.epochs, 1),
        ),
    )
    growth = GrowthConfig(
        max_depth=args.max_depth,
        min_samples=args.min_samples,
        stump_train=config,
        stump_restarts=args.restarts,
    )
    tree, history = train_model(train, valid, growth, config)

    metadata = {
        "config": {
            "task": args.task,
            "max_depth": args.max_depth,
            "min_samples": args.min_samples,
            "stump_restarts": args.restarts,
            "truncation_k": args.truncation,
            "prior": asdict(prior),
            "learning_rate": args.lr,
            "batch_size": args.batch,
            "epochs": args.epochs,
            "lambda_start": args.lambda_start,
            "lambda_end": args.lambda_end,
            "early_stop_patience": args.patience,
        },
        "seed": args.seed,
        "final_lambda": float(tree.annealing_lambda),
    }
    save_model(args.out, tree, standardizer=transform, metadata=metadata)
    with open(_history_path(args.out), "w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain_loss\tval_metric\tlambda\n")
        for rec in history:
            fh.write(f"{rec.epoch}\t{rec.train_loss!r}\t{rec.val_metric!r}\t{rec.lam!r}\n")

    stats = tree_stats(tree)
    print(f"model written to {args.out}")
    print(f"history written to {_history_path(args.out)}")
    print(f"depth {stats.depth} leaves {stats.leaf_count}")
    if test is not None:
        report = evaluate(tree, test)
        print(f"test {report.metric_kind} {report.value:.4f}")
    return 0


def _load_for_model(args, loaded: LoadedModel, classify) -> Dataset:
    data = _load(args.data, args.format, classify, args.has_header, args.label_column)
    if data.feature_dim != loaded.tree.feature_dim:
        raise PolytreeError(
            f"model expects {loaded.tree.feature_dim} features, data has {data.feature_dim}"
        )
    if loaded.standardizer is not None:
        data = loaded.standardizer.apply(data)
    return data


def cmd_predict(args) -> int:
    loaded = load_model(args.model)
    data = _load_for_model(args, loaded, classify=False)
    pred = predict_batch(loaded.tree, data.features)
    lines = []
    if loaded.tree.task == CLASSIFICATION:
        classes = np.argmax(pred, axis=1)
        for i in range(data.n):
            scores = "\t".join(repr(float(v)) for v in pred[i])
            lines.append(f"{classes[i]}\t{scores}")
    else:
        lines = [repr(float(v)) for v in pred]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_evaluate(args) -> int:
    loaded = load_model(args.model)
    classify = loaded.tree.task == CLASSIFICATION
    data = _load_for_model(args, loaded, classify=classify)
    report = evaluate(loaded.tree, data, metric=args.metric)
    print(f"metric {report.metric_kind} {report.value:.6f}")
    print(f"depth {report.tree_stats.depth}")
    print(f"leaves {report.tree_stats.leaf_count}")
    counts = " ".join(str(c) for c in report.tree_stats.effective_experts_per_node)
    print(f"effective_experts {counts}")
    return 0


def cmd_inspect(args) -> int:
    loaded = load_model(args.model)
    tree = loaded.tree
    stats = tree_stats(tree)
    if tree.task == CLASSIFICATION:
        print(f"task classification classes {tree.n_classes}")
    else:
        print("task regression")
    print(f"feature_dim {tree.feature_dim}")
    print(f"depth {stats.depth}")
    print(f"leaves {stats.leaf_count}")

    branch_ids = {id(b): i for i, b in enumerate(branch_nodes(tree))}
    leaf_counter = [0]

    def walk(node, indent):
        pad = "  " * indent
        if isinstance(node, LeafNode):
            j = leaf_counter[0]
            leaf_counter[0] += 1
            if tree.task == CLASSIFICATION and node.distribution is not None:
                payload = "dist " + " ".join(f"{v:.4f}" for v in node.distribution)
            elif node.mean is not None:
                payload = f"mean {node.mean:.6f}"
            else:
                payload = "unfinalized"
            print(f"{pad}leaf {j}: n={node.sample_count} {payload}")
            return
        i = branch_ids[id(node)]
        r = node.r
        effective = int(np.sum(r > 0.01 * r.max()))
        print(
            f"{pad}node {i}: experts={node.n_experts} effective={effective} p0={node.p0:.6f}"
        )
        if args.full:
            for k in range(node.n_experts):
                beta = " ".join(f"{v:.6f}" for v in node.beta[k])
                print(f"{pad}  expert {k}: r={r[k]:.6g} beta=[{beta}]")
        walk(node.left, indent + 1)
        walk(node.right, indent + 1)

    walk(tree.root, 0)
    return 0


def cmd_boundary(args) -> int:
    loaded = load_model(args.model)
    tree = loaded.tree
    if tree.feature_dim != 2:
        raise PolytreeError(
            f"boundary export needs a 2-feature model, this one has {tree.feature_dim}"
        )
    g = args.grid
    if g < 2:
        raise PolytreeError("grid must be at least 2")
    axis = np.linspace(-1.0, 1.0, g)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    raw = np.column_stack([xx.ravel(), yy.ravel()])
    grid = Dataset.from_raw(raw, np.zeros(raw.shape[0]))
    if loaded.standardizer is not None:
        grid = loaded.standardizer.apply(grid)
    leaf_idx, _ = route_indices(tree, grid.features)
    pred = predict_batch(tree, grid.features)
    branches = branch_nodes(tree)
    probs = [split_probability_batch(b, grid.features) for b in branches]
    with open(args.out, "w", encoding="utf-8") as fh:
        node_cols = "".join(f"\tnode{i}_prob" for i in range(len(branches)))
        value_col = "class" if tree.task == CLASSIFICATION else "value"
        fh.write(f"x1\tx2\tleaf\t{value_col}{node_cols}\n")
        values = np.argmax(pred, axis=1) if tree.task == CLASSIFICATION else pred
        for i in range(raw.shape[0]):
            node_vals = "".join(f"\t{float(probs[j][i])!r}" for j in range(len(branches)))
            value = int(values[i]) if tree.task == CLASSIFICATION else repr(float(values[i]))
            fh.write(
                f"{float(raw[i, 0])!r}\t{float(raw[i, 1])!r}\t{leaf_idx[i]}\t{value}{node_vals}\n"
            )
    print(f"grid written to {args.out}")
    return 0


def cmd_synth(args) -> int:
    dataset = synth_circles(args.n, args.r_inner, args.r_outer, args.seed)
    raw = dataset.features[:, :-1]
    with open(args.out, "w", encoding="utf-8") as fh:
        for i in range(dataset.n):
            fh.write(f"{dataset.labels[i]},{float(raw[i, 0])!r},{float(raw[i, 1])!r}\n")
    print(f"dataset written to {args.out}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "inspect": cmd_inspect,
    "boundary": cmd_boundary,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (PolytreeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
