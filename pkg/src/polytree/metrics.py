"""Evaluation metrics and model-size statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricUndefinedError
from .tree import (
    CLASSIFICATION,
    TreeModel,
    branch_nodes,
    leaf_nodes,
    predict_batch,
    tree_depth,
)

ACC = "ACC"
AUC = "AUC"
RMSE = "RMSE"


@dataclass
class TreeStats:
    depth: int
    leaf_count: int
    effective_experts_per_node: list[int]


@dataclass
class MetricReport:
    metric_kind: str
    value: float
    tree_stats: TreeStats


def effective_expert_counts(tree: TreeModel) -> list[int]:
    """Per branch node, the number of experts with r above 1% of the node max."""
    counts = []
    for node in branch_nodes(tree):
        r = node.r
        counts.append(int(np.sum(r > 0.01 * r.max())))
    return counts


def tree_stats(tree: TreeModel) -> TreeStats:
    return TreeStats(
        depth=tree_depth(tree),
        leaf_count=len(leaf_nodes(tree)),
        effective_experts_per_node=effective_expert_counts(tree),
    )


def accuracy(predicted_classes, labels) -> float:
    predicted_classes = np.asarray(predicted_classes)
    labels = np.asarray(labels)
    return float(np.mean(predicted_classes == labels))


def auc_score(scores, labels) -> float:
    """Rank-based Mann-Whitney AUC with tie correction.

    Tied scores get the average rank, which makes each tied
    positive-negative pair contribute exactly 1/2.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC needs both a positive and a negative sample")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < sorted_scores.shape[0]:
        j = i
        while j + 1 < sorted_scores.shape[0] and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[np.asarray(labels) == 1]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def rmse(predicted, targets) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    return float(np.sqrt(np.mean((predicted - targets) ** 2)))


def default_metric(tree: TreeModel) -> str:
    if tree.task == CLASSIFICATION:
        return AUC if tree.n_classes == 2 else ACC
    return RMSE


def evaluate(tree: TreeModel, dataset, metric=None) -> MetricReport:
    """Score a finalized tree on a dataset.

    The metric defaults by task: AUC for binary classification, ACC for
    multi-class, RMSE for regression.
    """
    kind = metric or default_metric(tree)
    pred = predict_batch(tree, dataset.features)
    if kind == ACC:
        value = accuracy(np.argmax(pred, axis=1), dataset.labels)
    elif kind == AUC:
        if tree.n_classes != 2:
            raise MetricUndefinedError("AUC is defined for binary classification only")
        value = auc_score(pred[:, 1], dataset.labels)
    elif kind == RMSE:
        value = rmse(pred, dataset.labels)
    else:
        raise ValueError(f"unknown metric {kind!r}")
    return MetricReport(metric_kind=kind, value=value, tree_stats=tree_stats(tree))
