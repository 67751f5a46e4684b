"""Stochastic gradient training of tree parameters.

Given a fixed topology, every branch parameter (expert weights, log
importance weights, annealing offsets) is optimized jointly by Adam on
minibatches of the data objective plus the shrinkage penalty, while the
annealing exponent lambda is stepped from soft toward near-deterministic
routing. Leaves are finalized afterwards from a deterministic pass over
the training set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import DataError, NumericError
from .metrics import accuracy, auc_score, rmse
from .objective import PriorConfig, total_loss_and_gradient
from .tree import (
    CLASSIFICATION,
    BranchNode,
    LeafNode,
    TreeModel,
    committee_log_complement_batch,
    inverse_softplus,
    parameter_count,
    parameter_vector,
    route_indices,
    set_parameter_vector,
)


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float

    @classmethod
    def new(cls, n_params, learning_rate=0.01, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        return cls(
            first_moment=np.zeros(n_params, dtype=np.float64),
            second_moment=np.zeros(n_params, dtype=np.float64),
            step_count=0,
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(state: OptimizerState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameter vector."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or grad.shape != state.first_moment.shape:
        raise ValueError("parameter, gradient, and moment vectors must be aligned")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient passed to the optimizer")
    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad**2
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


@dataclass
class AnnealSchedule:
    """Nondecreasing lambda schedule hitting lambda_end at the last epoch."""

    lambda_start: float = 1.0
    lambda_end: float = 64.0
    growth: str = "geometric"
    total_epochs: int = 1

    def __post_init__(self):
        if not 0.0 < self.lambda_start <= self.lambda_end:
            raise ValueError("need 0 < lambda_start <= lambda_end")
        if self.growth not in ("linear", "geometric"):
            raise ValueError(f"unknown growth {self.growth!r}")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be positive")

    def at(self, epoch: int) -> float:
        if self.total_epochs == 1:
            return self.lambda_end
        frac = min(max(epoch, 0), self.total_epochs - 1) / (self.total_epochs - 1)
        if self.growth == "linear":
            return self.lambda_start + frac * (self.lambda_end - self.lambda_start)
        return self.lambda_start * (self.lambda_end / self.lambda_start) ** frac


@dataclass
class TrainConfig:
    """Everything the parameter-fitting loop needs."""

    truncation_k: int = 50
    prior: PriorConfig = field(default_factory=PriorConfig)
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    anneal: AnnealSchedule | None = None
    batch_size: int = 128
    epochs: int = 100
    seed: int = 0
    early_stop_patience: int = 0  # 0 disables early stopping

    def __post_init__(self):
        if self.truncation_k < 1:
            raise ValueError("truncation_k must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be nonnegative")

    def schedule(self) -> AnnealSchedule:
        if self.anneal is not None:
            return self.anneal
        return AnnealSchedule(total_epochs=max(self.epochs, 1))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    lam: float


def new_branch_node(rng, feature_dim, k, prior: PriorConfig, logit_p0=0.0) -> BranchNode:
    """Fresh committee: small random expert weights, importance weights at
    the truncated prior mean gamma0 / (k * c0)."""
    dim = feature_dim + 1
    beta = rng.normal(0.0, 0.1 / math.sqrt(dim), size=(k, dim))
    log_r = np.full(k, math.log(prior.gamma0 / (k * prior.c0)), dtype=np.float64)
    return BranchNode(beta, log_r, logit_p0=logit_p0)


def make_stump(rng, dataset: Dataset, k, prior: PriorConfig) -> TreeModel:
    """Depth-1 tree with unfinalized leaves, ready for fit_parameters.

    The annealing offset starts at the median committee value over the
    data, softplus(logit_p0) = median g(x), so routing begins balanced
    around probability 0.5 where the objective has usable gradients.
    """
    root = new_branch_node(rng, dataset.feature_dim, k, prior)
    g = committee_log_complement_batch(root, dataset.features)
    med = float(np.clip(np.median(g), 1e-6, 30.0))
    root.logit_p0 = inverse_softplus(med)
    root.left = LeafNode()
    root.right = LeafNode()
    return TreeModel(
        root=root,
        task=dataset.task,
        feature_dim=dataset.feature_dim,
        n_classes=dataset.n_classes,
    )


def _leaf_statistics(tree: TreeModel, train: Dataset):
    """Hard-routing class counts or target means per leaf on the training set."""
    idx, leaves = route_indices(tree, train.features)
    n_leaves = len(leaves)
    if tree.task == CLASSIFICATION:
        counts = np.zeros((n_leaves, tree.n_classes), dtype=np.float64)
        np.add.at(counts, (idx, train.labels), 1.0)
        return idx, leaves, counts
    sums = np.bincount(idx, weights=train.labels, minlength=n_leaves)
    sizes = np.bincount(idx, minlength=n_leaves).astype(np.float64)
    return idx, leaves, (sums, sizes)


def _validation_metric(tree: TreeModel, train: Dataset, eval_set: Dataset) -> float:
    """Early-stopping metric, higher is better: AUC for binary trees, ACC
    for multi-class, negative RMSE for regression. Leaf statistics come
    from hard-routing the training set; leaves themselves are untouched."""
    idx_train, leaves, stats = _leaf_statistics(tree, train)
    idx_eval, _ = route_indices(tree, eval_set.features)
    if tree.task == CLASSIFICATION:
        counts = stats
        totals = counts.sum(axis=1, keepdims=True)
        dist = np.where(totals > 0, counts / np.maximum(totals, 1.0), 1.0 / tree.n_classes)
        scores = dist[idx_eval]
        if tree.n_classes == 2:
            labels = eval_set.labels
            if 0 < int(np.sum(labels == 1)) < labels.shape[0]:
                return auc_score(scores[:, 1], labels)
        return accuracy(np.argmax(scores, axis=1), eval_set.labels)
    sums, sizes = stats
    overall = float(train.labels.mean())
    means = np.where(sizes > 0, sums / np.maximum(sizes, 1.0), overall)
    return -rmse(means[idx_eval], eval_set.labels)


def fit_parameters(
    tree: TreeModel, train: Dataset, valid: Dataset | None, config: TrainConfig
) -> tuple[TreeModel, list[EpochRecord]]:
    """Minibatch Adam over all branch parameters (the whole tree jointly).

    Each epoch shuffles the data with the seeded generator, steps through
    minibatches at the scheduled lambda, and records the epoch's mean
    step loss plus the validation metric. The penalty is rescaled by the
    batch fraction so a full epoch applies it exactly once. If the
    early-stop patience runs out, the best-validation parameters are
    restored.
    """
    if train.n == 0:
        raise DataError("training set is empty")
    if tree.task == CLASSIFICATION and int(train.labels.max()) >= tree.n_classes:
        raise DataError("label out of range for the tree's class count")
    batch_size = min(config.batch_size, train.n)
    history: list[EpochRecord] = []
    n_params = parameter_count(tree)
    if config.epochs == 0 or n_params == 0:
        return tree, history

    eval_set = valid if valid is not None and valid.n > 0 else train
    schedule = config.schedule()
    # The shrinkage penalty is held at zero for the first half of training
    # and ramped in linearly over the second. Applied at full strength from
    # the start it would dominate the (initially tiny, importance-weight-
    # scaled) data gradients, and Adam's per-coordinate normalization would
    # decay every expert at the full learning rate before the committee can
    # organize.
    span = max(config.epochs - 1, 1)
    rng = np.random.default_rng(config.seed)
    params = parameter_vector(tree)
    state = OptimizerState.new(
        n_params,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
    )
    best_metric = -math.inf
    best_params = params.copy()
    best_epoch = -1

    for epoch in range(config.epochs):
        lam = schedule.at(epoch)
        tree.annealing_lambda = lam
        perm = rng.permutation(train.n)
        losses = []
        ramp = min(1.0, max(0.0, (epoch / span - 0.5) / 0.35))
        for start in range(0, train.n, batch_size):
            batch = train.subset(perm[start : start + batch_size])
            step_prior = replace(
                config.prior,
                reg_weight=config.prior.reg_weight * ramp * batch.n / train.n,
            )
            set_parameter_vector(tree, params)
            objective = total_loss_and_gradient(tree, batch, lam, step_prior)
            params = adam_step(state, params, objective.gradient)
            losses.append(objective.value)
        set_parameter_vector(tree, params)

        val_metric = _validation_metric(tree, train, eval_set)
        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                val_metric=val_metric,
                lam=lam,
            )
        )
        if val_metric > best_metric:
            best_metric = val_metric
            best_params = params.copy()
            best_epoch = epoch
        elif config.early_stop_patience > 0 and epoch - best_epoch >= config.early_stop_patience:
            params = best_params
            set_parameter_vector(tree, params)
            break

    return tree, history


def finalize_leaves(tree: TreeModel, train: Dataset) -> TreeModel:
    """Deterministically route the training set and set leaf parameters.

    Classification leaves get the raw empirical class distribution of
    their arrivals; a leaf with no arrivals falls back to the uniform
    distribution. Regression leaves get the mean arriving target, with
    the global training mean as the empty-leaf fallback.
    """
    _, leaves, stats = _leaf_statistics(tree, train)
    if tree.task == CLASSIFICATION:
        counts = stats
        for j, leaf in enumerate(leaves):
            total = counts[j].sum()
            if total > 0:
                leaf.distribution = counts[j] / total
            else:
                leaf.distribution = np.full(tree.n_classes, 1.0 / tree.n_classes)
            leaf.sample_count = int(total)
            leaf.mean = None
    else:
        sums, sizes = stats
        overall = float(train.labels.mean())
        for j, leaf in enumerate(leaves):
            leaf.mean = float(sums[j] / sizes[j]) if sizes[j] > 0 else overall
            leaf.sample_count = int(sizes[j])
            leaf.distribution = None
    return tree
