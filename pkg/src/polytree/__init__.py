"""Decision trees with convex-polytope splits, trained by gradient descent.

Each internal node splits through a committee of weighted linear
experts combined by a probabilistic OR; the region routed left is a
convex set bounded by a convex polytope. Parameters are learned end to
end on a mutual-information objective (classification) or a
variance-reduction objective (regression) with a truncated
gamma-process shrinkage penalty; the topology is grown greedily.
"""

from . import errors
from .data import Dataset, Standardizer, load_delimited, load_sparse, standardize, synth_circles
from .metrics import MetricReport, TreeStats, evaluate, tree_stats
from .model_io import LoadedModel, load_model, save_model
from .objective import (
    BatchObjective,
    PriorConfig,
    conditional_entropy,
    leaf_class_distribution,
    leaf_mass,
    prior_penalty,
    regression_objective,
    total_loss_and_gradient,
)
from .pipeline import train_model
from .topology import GrowthConfig, ThresholdChoice, grow_tree, select_threshold
from .train import (
    AnnealSchedule,
    EpochRecord,
    OptimizerState,
    TrainConfig,
    adam_step,
    finalize_leaves,
    fit_parameters,
    make_stump,
    new_branch_node,
)
from .tree import (
    BranchNode,
    Expert,
    LeafNode,
    TreeModel,
    annealed_probability,
    committee_log_complement,
    leaf_arrival_probabilities,
    predict,
    predict_batch,
    route_deterministic,
    split_probability,
)

__version__ = "0.1.0"
