"""Tree domain types, the committee split function, routing, and inference.

A branch node holds a committee of weighted linear experts. Expert k
votes "Yes" on x with probability 1 - (1 + exp(beta_k'x))^(-r_k); the
committee votes "Yes" if at least one expert does, which gives the split
probability

    f(x) = 1 - exp(-g(x)),   g(x) = sum_k r_k * ln(1 + exp(beta_k'x)).

The sublevel set {x : f(x) <= q} is a convex region bounded by a convex
polytope whose facets are the experts' hyperplanes. Feature vectors
carry a trailing constant-1 bias coordinate, so all weight vectors have
length d+1 for a model of feature dimension d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    DimensionError,
    TreeStructureError,
    UnfinalizedLeafError,
)

CLASSIFICATION = "classification"
REGRESSION = "regression"

# exp() underflows/overflows outside this band; log_r beyond it cannot
# represent a strictly positive finite importance weight
_LOG_R_MIN = -745.0
_LOG_R_MAX = 709.0


@dataclass
class Expert:
    """One polytope facet: a weight vector and its importance weight.

    beta has d+1 coordinates, the last multiplying the constant bias
    feature. The importance r = exp(log_r) is kept in log space so it
    stays strictly positive under unconstrained optimization.
    """

    beta: np.ndarray
    log_r: float

    @property
    def r(self) -> float:
        return math.exp(self.log_r)


class BranchNode:
    """A committee of experts plus the annealing offset p0.

    Parameters are stored as stacked arrays for the numeric kernels:
    beta is (k, d+1), log_r is (k,). The `experts` property exposes the
    per-facet view as Expert value objects (copies, not views).
    """

    def __init__(self, beta, log_r, logit_p0=0.0, left=None, right=None):
        beta = np.array(beta, dtype=np.float64, copy=True)
        if beta.ndim != 2 or beta.shape[0] < 1:
            raise TreeStructureError(
                f"expert weights must be a (k, d+1) matrix with k >= 1, got shape {beta.shape}"
            )
        log_r = np.array(log_r, dtype=np.float64, copy=True).reshape(-1)
        if log_r.shape[0] != beta.shape[0]:
            raise TreeStructureError(
                f"{beta.shape[0]} experts but {log_r.shape[0]} importance weights"
            )
        self.beta = beta
        self.log_r = log_r
        self.logit_p0 = float(logit_p0)
        self.left = left
        self.right = right

    @classmethod
    def from_experts(cls, experts, logit_p0=0.0, left=None, right=None):
        beta = np.stack([np.asarray(e.beta, dtype=np.float64) for e in experts])
        log_r = np.array([e.log_r for e in experts], dtype=np.float64)
        return cls(beta, log_r, logit_p0=logit_p0, left=left, right=right)

    @property
    def n_experts(self) -> int:
        return self.beta.shape[0]

    @property
    def experts(self) -> list[Expert]:
        return [
            Expert(beta=self.beta[k].copy(), log_r=float(self.log_r[k]))
            for k in range(self.n_experts)
        ]

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.log_r)

    @property
    def p0(self) -> float:
        return float(kernels.sigmoid(np.array([self.logit_p0]))[0])


class LeafNode:
    """Terminal node: a class distribution or a mean response.

    Both payloads are None until leaf finalization routes the training
    set through the tree and fills them in.
    """

    def __init__(self, distribution=None, mean=None, sample_count=0):
        self.distribution = (
            None if distribution is None else np.asarray(distribution, dtype=np.float64)
        )
        self.mean = None if mean is None else float(mean)
        self.sample_count = int(sample_count)

    @property
    def finalized(self) -> bool:
        return self.distribution is not None or self.mean is not None


@dataclass
class TreeModel:
    """A binary tree of BranchNodes and LeafNodes.

    task is "classification" (with n_classes) or "regression".
    feature_dim is d, the number of features before the bias coordinate.
    annealing_lambda is the training-time sharpening exponent; it is kept
    on the model so inference-time routing has a concrete lambda, though
    the 0.5-threshold decision itself does not depend on its value.
    """

    root: object
    task: str
    feature_dim: int
    n_classes: int | None = None
    annealing_lambda: float = 1.0

    def __post_init__(self):
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise TreeStructureError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION and (self.n_classes is None or self.n_classes < 2):
            raise TreeStructureError("classification trees need n_classes >= 2")


def _as_matrix(x, dim):
    """Coerce one vector or a batch to a (n, dim) float64 matrix."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionError(
            f"expected feature vectors of length {dim}, got shape {x.shape}"
        )
    return x, single


def committee_log_complement_batch(node: BranchNode, x: np.ndarray) -> np.ndarray:
    """g(x) = -ln(1 - f(x)) = sum_k r_k * ln(1 + exp(beta_k'x)) for a batch."""
    x, _ = _as_matrix(x, node.beta.shape[1])
    z = x @ node.beta.T
    g, _ = kernels.committee_forward(z, node.r)
    return g


def committee_log_complement(node: BranchNode, x) -> float:
    return float(committee_log_complement_batch(node, x)[0])


def split_probability_batch(node: BranchNode, x) -> np.ndarray:
    """Committee "Yes" probability f(x) = 1 - exp(-g(x)) for a batch."""
    return -np.expm1(-committee_log_complement_batch(node, x))


def split_probability(node: BranchNode, x) -> float:
    return float(split_probability_batch(node, x)[0])


def annealed_probability_batch(node: BranchNode, x, lam: float) -> np.ndarray:
    """Sharpened split probability f_lam(x) = 1 / (1 + ((1-f)/(1-p0))^lam).

    Evaluated in the equivalent stable form sigmoid(lam * (g + ln(1-p0)))
    with ln(1-p0) = -softplus(logit_p0).
    """
    if not lam > 0.0:
        raise ValueError(f"annealing lambda must be positive, got {lam}")
    g = committee_log_complement_batch(node, x)
    log1m_p0 = -float(kernels.softplus(np.array([node.logit_p0]))[0])
    return kernels.sigmoid(lam * (g + log1m_p0))


def annealed_probability(node: BranchNode, x, lam: float) -> float:
    return float(annealed_probability_batch(node, x, lam)[0])


def inverse_softplus(y: float) -> float:
    """u with ln(1 + exp(u)) = y, for y > 0."""
    if y > 30.0:
        return y
    return math.log(math.expm1(y))


def branch_nodes(tree: TreeModel) -> list[BranchNode]:
    """All branch nodes in preorder. Parameter packing follows this order."""
    out = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if isinstance(node, BranchNode):
            out.append(node)
            stack.append(node.right)
            stack.append(node.left)
    return out


def leaf_nodes(tree: TreeModel) -> list[LeafNode]:
    """All leaves in left-to-right preorder. Leaf ids index this list."""
    out = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if isinstance(node, LeafNode):
            out.append(node)
        else:
            stack.append(node.right)
            stack.append(node.left)
    return out


def tree_depth(tree: TreeModel) -> int:
    def depth(node):
        if isinstance(node, LeafNode):
            return 0
        return 1 + max(depth(node.left), depth(node.right))

    return depth(tree.root)


def arrival_matrix(tree: TreeModel, x, lam: float) -> tuple[np.ndarray, list[LeafNode]]:
    """Per-leaf arrival probabilities for a batch.

    Returns (p, leaves) with p[n, j] the probability that sample n
    reaches leaves[j]: the product over the root-to-leaf path of
    q_v(1|x) = annealed probability at v on "Yes" edges and
    q_v(0|x) = 1 - q_v(1|x) on "No" edges.
    """
    x, _ = _as_matrix(x, tree.feature_dim + 1)
    n = x.shape[0]
    leaves = leaf_nodes(tree)
    index = {id(leaf): j for j, leaf in enumerate(leaves)}
    p = np.zeros((n, len(leaves)), dtype=np.float64)

    def walk(node, upstream):
        if isinstance(node, LeafNode):
            p[:, index[id(node)]] = upstream
            return
        if not isinstance(node, BranchNode):
            raise TreeStructureError(f"unexpected node type {type(node).__name__}")
        if node.left is None or node.right is None:
            raise TreeStructureError("branch node is missing a child")
        q1 = annealed_probability_batch(node, x, lam)
        walk(node.left, upstream * (1.0 - q1))
        walk(node.right, upstream * q1)

    walk(tree.root, np.ones(n, dtype=np.float64))
    return p, leaves


def leaf_arrival_probabilities(tree: TreeModel, x, lam: float) -> dict:
    """Arrival probability of one sample at every leaf; values sum to 1."""
    p, leaves = arrival_matrix(tree, np.asarray(x, dtype=np.float64)[None, :], lam)
    return {leaf: float(p[0, j]) for j, leaf in enumerate(leaves)}


def route_indices(tree: TreeModel, x) -> tuple[np.ndarray, list[LeafNode]]:
    """Deterministic leaf index for a batch.

    At each branch, samples go to the right ("Yes") child iff the
    annealed probability exceeds 0.5; ties route left, matching the
    "<= threshold" definition of the left region.
    """
    x, _ = _as_matrix(x, tree.feature_dim + 1)
    leaves = leaf_nodes(tree)
    index = {id(leaf): j for j, leaf in enumerate(leaves)}
    out = np.empty(x.shape[0], dtype=np.int64)

    def walk(node, idx):
        if idx.size == 0:
            return
        if isinstance(node, LeafNode):
            out[idx] = index[id(node)]
            return
        q1 = annealed_probability_batch(node, x[idx], tree.annealing_lambda)
        go_right = q1 > 0.5
        walk(node.left, idx[~go_right])
        walk(node.right, idx[go_right])

    walk(tree.root, np.arange(x.shape[0]))
    return out, leaves


def route_deterministic(tree: TreeModel, x) -> LeafNode:
    idx, leaves = route_indices(tree, np.asarray(x, dtype=np.float64)[None, :])
    return leaves[int(idx[0])]


def predict_batch(tree: TreeModel, x) -> np.ndarray:
    """Routed-leaf predictions: (n, n_classes) distributions or (n,) means."""
    idx, leaves = route_indices(tree, x)
    if tree.task == CLASSIFICATION:
        table = np.empty((len(leaves), tree.n_classes), dtype=np.float64)
        for j, leaf in enumerate(leaves):
            if leaf.distribution is None:
                raise UnfinalizedLeafError("leaf has no class distribution; finalize the tree first")
            table[j] = leaf.distribution
        return table[idx]
    table = np.empty(len(leaves), dtype=np.float64)
    for j, leaf in enumerate(leaves):
        if leaf.mean is None:
            raise UnfinalizedLeafError("leaf has no mean value; finalize the tree first")
        table[j] = leaf.mean
    return table[idx]


def predict(tree: TreeModel, x):
    """Single-sample prediction: class distribution vector or mean value."""
    out = predict_batch(tree, np.asarray(x, dtype=np.float64)[None, :])
    if tree.task == CLASSIFICATION:
        return out[0]
    return float(out[0])


def check_tree(tree: TreeModel, require_finalized=False) -> None:
    """Validate every structural invariant; raise TreeStructureError on failure."""
    dim = tree.feature_dim + 1

    def walk(node):
        if isinstance(node, LeafNode):
            if tree.task == CLASSIFICATION and node.distribution is not None:
                dist = node.distribution
                if dist.shape != (tree.n_classes,):
                    raise TreeStructureError(
                        f"leaf distribution has shape {dist.shape}, expected ({tree.n_classes},)"
                    )
                if np.any(dist < 0.0) or abs(float(dist.sum()) - 1.0) > 1e-9:
                    raise TreeStructureError("leaf distribution must be nonnegative and sum to 1")
            if node.sample_count < 0:
                raise TreeStructureError("leaf sample_count must be nonnegative")
            if require_finalized and not node.finalized:
                raise TreeStructureError("tree contains unfinalized leaves")
            return
        if not isinstance(node, BranchNode):
            raise TreeStructureError(f"unexpected node type {type(node).__name__}")
        if node.left is None or node.right is None:
            raise TreeStructureError("branch node is missing a child")
        if node.beta.shape[1] != dim:
            raise TreeStructureError(
                f"branch expects vectors of length {node.beta.shape[1]}, model says {dim}"
            )
        if not np.all(np.isfinite(node.beta)):
            raise TreeStructureError("expert weights must be finite")
        if not np.all(np.isfinite(node.log_r)):
            raise TreeStructureError("log importance weights must be finite")
        if np.any(node.log_r <= _LOG_R_MIN) or np.any(node.log_r >= _LOG_R_MAX):
            raise TreeStructureError("importance weights must be strictly positive and finite")
        if not math.isfinite(node.logit_p0):
            raise TreeStructureError("logit_p0 must be finite")
        p0 = node.p0
        if not 0.0 < p0 < 1.0:
            raise TreeStructureError("p0 must lie strictly inside (0, 1)")
        walk(node.left)
        walk(node.right)

    walk(tree.root)


def parameter_count(tree: TreeModel) -> int:
    nodes = branch_nodes(tree)
    return sum(b.beta.size for b in nodes) + sum(b.n_experts for b in nodes) + len(nodes)


def parameter_vector(tree: TreeModel) -> np.ndarray:
    """Flatten all parameters: every beta, then every log_r, then every logit_p0.

    Nodes are taken in preorder; gradient vectors follow the same layout.
    """
    nodes = branch_nodes(tree)
    parts = [b.beta.ravel() for b in nodes]
    parts += [b.log_r for b in nodes]
    parts.append(np.array([b.logit_p0 for b in nodes], dtype=np.float64))
    if not nodes:
        return np.zeros(0, dtype=np.float64)
    return np.concatenate(parts)


def set_parameter_vector(tree: TreeModel, vec: np.ndarray) -> None:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (parameter_count(tree),):
        raise DimensionError(
            f"parameter vector has shape {vec.shape}, expected ({parameter_count(tree)},)"
        )
    nodes = branch_nodes(tree)
    pos = 0
    for b in nodes:
        size = b.beta.size
        b.beta[...] = vec[pos : pos + size].reshape(b.beta.shape)
        pos += size
    for b in nodes:
        b.log_r[...] = vec[pos : pos + b.n_experts]
        pos += b.n_experts
    for b in nodes:
        b.logit_p0 = float(vec[pos])
        pos += 1
