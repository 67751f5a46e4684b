import numpy as np
import pytest

from polytree.tree import BranchNode, LeafNode, TreeModel


def random_branch(rng, d, k, beta_scale=0.8, logr_scale=0.7):
    return BranchNode(
        beta=rng.normal(scale=beta_scale, size=(k, d + 1)),
        log_r=rng.normal(scale=logr_scale, size=k),
        logit_p0=rng.normal(scale=0.8),
    )


def random_tree(rng, d=3, kmax=5, max_depth=3, task="classification", n_classes=2,
                leaf_prob=0.3):
    """Random topology with random committee parameters, unfinalized leaves."""

    def build(level):
        if level == max_depth or (level > 0 and rng.random() < leaf_prob):
            return LeafNode()
        node = random_branch(rng, d, int(rng.integers(1, kmax + 1)))
        node.left = build(level + 1)
        node.right = build(level + 1)
        return node

    root = build(0)
    if isinstance(root, LeafNode):
        root = random_branch(rng, d, 1)
        root.left = LeafNode()
        root.right = LeafNode()
    return TreeModel(
        root=root,
        task=task,
        feature_dim=d,
        n_classes=n_classes if task == "classification" else None,
        annealing_lambda=2.0,
    )


def biased_point(rng, d):
    """Random feature vector with the constant bias coordinate appended."""
    return np.append(rng.normal(size=d), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
