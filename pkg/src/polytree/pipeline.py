"""End-to-end training: grow the topology, refine all parameters, finalize leaves."""

from __future__ import annotations

from dataclasses import replace

from .data import Dataset
from .topology import GrowthConfig, grow_tree
from .train import AnnealSchedule, TrainConfig, EpochRecord, finalize_leaves, fit_parameters
from .tree import TreeModel


def refinement_config(config: TrainConfig) -> TrainConfig:
    """Joint-refinement settings derived from the growth-phase settings.

    Refinement starts from an already organized, sharply-routing tree, so
    it runs fewer epochs at a reduced learning rate and with the annealing
    exponent starting warm (a quarter of its final value): restarting from
    a soft lambda dissolves the grown structure before re-finding it, and
    full-rate updates do the same.
    """
    schedule = config.schedule()
    epochs = max(1, config.epochs // 3)
    return replace(
        config,
        epochs=epochs,
        learning_rate=0.4 * config.learning_rate,
        anneal=AnnealSchedule(
            lambda_start=max(schedule.lambda_start, schedule.lambda_end / 4.0),
            lambda_end=schedule.lambda_end,
            growth=schedule.growth,
            total_epochs=epochs,
        ),
    )


def train_model(
    train: Dataset,
    valid: Dataset | None,
    growth: GrowthConfig,
    config: TrainConfig,
) -> tuple[TreeModel, list[EpochRecord]]:
    """Greedy growth, then joint gradient refinement of every node, then
    leaf finalization from a deterministic pass over the training set."""
    tree = grow_tree(train, valid, growth, config.prior)
    tree, history = fit_parameters(tree, train, valid, refinement_config(config))
    finalize_leaves(tree, train)
    return tree, history
