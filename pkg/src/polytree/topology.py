"""Greedy topology learning.

Each node trains a depth-1 committee stump on its data, picks the
deterministic probability threshold that minimizes the weighted
impurity of the induced two-way partition, splits the data hard at that
threshold, and recurses. Node parameters are kept as trained (no
refinement during growth); the threshold is folded into the node as its
annealing offset p0, so the fixed 0.5 rule at test time reproduces the
selected cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .data import Dataset
from .errors import DegenerateSplitError
from .objective import PriorConfig
from .tree import (
    CLASSIFICATION,
    LeafNode,
    TreeModel,
    annealed_probability_batch,
    inverse_softplus,
)
from .train import TrainConfig, fit_parameters, make_stump

# logit() needs q_thr strictly inside (0, 1); saturated thresholds are
# clamped to this margin
_Q_EPS = 1e-9


@dataclass
class GrowthConfig:
    max_depth: int = 4
    min_samples: int = 16
    stump_train: TrainConfig = field(default_factory=TrainConfig)
    # stump fits restart from this many seeds; the restart with the lowest
    # split impurity wins. The entropy objective is nonconvex and a single
    # run can lock into a one-facet cut.
    stump_restarts: int = 3

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples < 2:
            raise ValueError("min_samples must be >= 2")
        if self.stump_restarts < 1:
            raise ValueError("stump_restarts must be >= 1")


@dataclass
class ThresholdChoice:
    q_thr: float
    split_index: int  # points with the split_index smallest probabilities go left
    score: float  # weighted impurity of the induced partition


def _entropy_of_counts(counts: np.ndarray) -> float:
    total = counts.sum()
    frac = counts[counts > 0] / total
    return float(-np.sum(frac * np.log(frac)))


def select_threshold(probabilities, labels, task) -> ThresholdChoice:
    """Best cut of the probability-sorted points.

    Scores every cut position n0 in 1..n-1 by the size-weighted impurity
    of the two sides (label entropy for classification, target variance
    for regression) and returns the minimizing cut, with q_thr the
    midpoint of the bracketing probabilities. Ties prefer the most
    balanced split, then the smaller n0.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    n = p.shape[0]
    if n < 2:
        raise DegenerateSplitError("need at least 2 points to split")
    if np.all(p == p[0]):
        raise DegenerateSplitError("all probabilities identical; nothing to threshold")
    order = np.argsort(p, kind="mergesort")
    sorted_p = p[order]
    sorted_labels = np.asarray(labels)[order]

    best = None
    for n0 in range(1, n):
        if task == CLASSIFICATION:
            left = _entropy_of_counts(np.bincount(sorted_labels[:n0]))
            right = _entropy_of_counts(np.bincount(sorted_labels[n0:]))
        else:
            left = float(np.var(sorted_labels[:n0]))
            right = float(np.var(sorted_labels[n0:]))
        score = (n0 / n) * left + ((n - n0) / n) * right
        key = (score, abs(2 * n0 - n), n0)
        if best is None or key < best:
            best = key
    score, _, n0 = best
    q_thr = 0.5 * (sorted_p[n0 - 1] + sorted_p[n0])
    return ThresholdChoice(q_thr=float(q_thr), split_index=n0, score=float(score))


def _is_pure(dataset: Dataset) -> bool:
    if dataset.task == CLASSIFICATION:
        return np.all(dataset.labels == dataset.labels[0])
    return np.var(dataset.labels) == 0.0


def _node_seed(base_seed: int, path: tuple[int, ...]) -> int:
    seq = np.random.SeedSequence((int(base_seed) & 0xFFFFFFFF, *path))
    return int(seq.generate_state(1)[0])


def grow_tree(
    train: Dataset,
    valid: Dataset | None,
    config: GrowthConfig,
    prior: PriorConfig,
) -> TreeModel:
    """Greedy recursive construction of the tree structure.

    Splitting stops at max_depth, below min_samples, on pure labels, and
    on degenerate thresholds (constant probabilities or a cut that fails
    to separate). Leaves are left unfinalized; run fit_parameters and
    finalize_leaves on the result for the full training pipeline.
    """
    stump_cfg = replace(config.stump_train, prior=prior)

    def build(node_train: Dataset, node_valid: Dataset | None, depth: int, path):
        if (
            depth >= config.max_depth
            or node_train.n < config.min_samples
            or _is_pure(node_train)
        ):
            return LeafNode()
        best = None
        for restart in range(config.stump_restarts):
            # restart tags start at 2 so derived seeds cannot collide with
            # the {0,1}-valued child-path tuples
            cfg = replace(stump_cfg, seed=_node_seed(stump_cfg.seed, path + (restart + 2,)))
            rng = np.random.default_rng(cfg.seed)
            stump = make_stump(rng, node_train, cfg.truncation_k, prior)
            fit_parameters(stump, node_train, node_valid, cfg)
            # The cut is selected on the annealed probabilities: they order
            # the points exactly like the raw committee probability (both
            # are monotone in g) but keep floating-point resolution near
            # the boundary, where the raw probability saturates at 1.
            probabilities = annealed_probability_batch(
                stump.root, node_train.features, stump.annealing_lambda
            )
            try:
                choice = select_threshold(probabilities, node_train.labels, node_train.task)
            except DegenerateSplitError:
                continue
            if best is None or choice.score < best[0].score:
                best = (choice, stump, probabilities)
        if best is None:
            return LeafNode()
        choice, stump, probabilities = best
        node = stump.root
        lam = stump.annealing_lambda
        left_mask = probabilities <= choice.q_thr
        if left_mask.all() or not left_mask.any():
            return LeafNode()

        # Fold the threshold into the node as its offset p0: the annealed
        # cut corresponds to g = softplus(u_stump) + logit(q_thr)/lam, so
        # setting softplus(logit_p0) to that value makes the fixed 0.5
        # rule reproduce this partition. The implied raw-probability
        # threshold is 1 - exp(-g_thr).
        valid_left = valid_right = None
        if node_valid is not None and node_valid.n > 0:
            vmask = annealed_probability_batch(node, node_valid.features, lam) <= choice.q_thr
            if vmask.any():
                valid_left = node_valid.subset(vmask)
            if not vmask.all():
                valid_right = node_valid.subset(~vmask)
        q = min(max(choice.q_thr, _Q_EPS), 1.0 - _Q_EPS)
        g_stump = float(kernels.softplus(np.array([node.logit_p0]))[0])
        g_thr = g_stump + math.log(q / (1.0 - q)) / lam
        node.logit_p0 = float(np.clip(inverse_softplus(max(g_thr, 1e-12)), -36.0, 36.0))
        node.left = build(node_train.subset(left_mask), valid_left, depth + 1, path + (0,))
        node.right = build(node_train.subset(~left_mask), valid_right, depth + 1, path + (1,))
        return node

    root = build(train, valid, 0, ())
    return TreeModel(
        root=root,
        task=train.task,
        feature_dim=train.feature_dim,
        n_classes=train.n_classes,
    )
