import math

import numpy as np
import pytest

from polytree.data import Dataset
from polytree.objective import (
    SMOOTHING,
    PriorConfig,
    conditional_entropy,
    leaf_class_distribution,
    leaf_mass,
    prior_penalty,
    regression_objective,
    total_loss_and_gradient,
)
from polytree.tree import (
    BranchNode,
    LeafNode,
    TreeModel,
    leaf_arrival_probabilities,
    leaf_nodes,
)

from conftest import random_branch, random_tree


def single_leaf_tree(task="classification", n_classes=2):
    return TreeModel(root=LeafNode(), task=task, feature_dim=2,
                     n_classes=n_classes if task == "classification" else None)


def class_batch(rng, n, d=2, labels=None, n_classes=2):
    x = rng.normal(size=(n, d))
    if labels is None:
        labels = rng.integers(0, n_classes, size=n)
    return Dataset.from_raw(x, np.asarray(labels), n_classes=n_classes)


def dense_arrival(tree, batch, lam):
    """Independent per-sample, per-leaf arrival matrix via the public map."""
    leaves = leaf_nodes(tree)
    p = np.zeros((batch.n, len(leaves)))
    for i in range(batch.n):
        probs = leaf_arrival_probabilities(tree, batch.features[i], lam)
        for j, leaf in enumerate(leaves):
            p[i, j] = probs[leaf]
    return p, leaves


class TestLeafMass:
    def test_single_leaf_gets_batch_size(self, rng):
        tree = single_leaf_tree()
        batch = class_batch(rng, 7)
        (mass,) = leaf_mass(tree, batch, 1.0).values()
        assert mass == pytest.approx(7.0, abs=1e-12)

    def test_symmetric_depth_one(self, rng):
        node = BranchNode(beta=[[0.0, 0.0, 0.0]], log_r=[0.0], logit_p0=0.0,
                          left=LeafNode(), right=LeafNode())
        tree = TreeModel(root=node, task="classification", feature_dim=2, n_classes=2)
        batch = class_batch(rng, 10)
        masses = leaf_mass(tree, batch, 1.0)
        assert masses[node.left] == pytest.approx(5.0, abs=1e-9)
        assert masses[node.right] == pytest.approx(5.0, abs=1e-9)

    def test_matches_dense_oracle(self, rng):
        tree = random_tree(rng, max_depth=2, leaf_prob=0.0)
        batch = class_batch(rng, 4, d=3)
        p, leaves = dense_arrival(tree, batch, 2.0)
        masses = leaf_mass(tree, batch, 2.0)
        for j, leaf in enumerate(leaves):
            assert masses[leaf] == pytest.approx(float(p[:, j].sum()), abs=1e-12)

    def test_masses_sum_to_n(self, rng):
        for _ in range(20):
            tree = random_tree(rng)
            batch = class_batch(rng, int(rng.integers(1, 30)), d=3)
            total = sum(leaf_mass(tree, batch, 1.5).values())
            assert total == pytest.approx(batch.n, abs=1e-8)


class TestLeafClassDistribution:
    def test_single_leaf_empirical(self, rng):
        tree = single_leaf_tree()
        batch = class_batch(rng, 4, labels=[0, 0, 1, 1])
        (pi,) = leaf_class_distribution(tree, batch, 1.0).values()
        assert pi == pytest.approx([0.5, 0.5], abs=1e-7)

    def test_two_point_soft_assignment(self):
        # arrivals 0.8 (class 0) and 0.2 (class 1) -> pi ~ (0.8, 0.2)
        # built from a sharp single-expert split of two points
        node = BranchNode(beta=[[10.0, 0.0]], log_r=[0.0], logit_p0=0.0,
                          left=LeafNode(), right=LeafNode())
        tree = TreeModel(root=node, task="classification", feature_dim=1, n_classes=2)
        batch = Dataset.from_raw([[-0.5], [0.5]], [0, 1], n_classes=2)
        dists = leaf_class_distribution(tree, batch, 1.0)
        probs0 = leaf_arrival_probabilities(tree, batch.features[0], 1.0)
        probs1 = leaf_arrival_probabilities(tree, batch.features[1], 1.0)
        left = node.left
        expected0 = probs0[left] / (probs0[left] + probs1[left])
        assert dists[left][0] == pytest.approx(expected0, abs=1e-6)
        assert dists[left].sum() == pytest.approx(1.0, abs=1e-12)

    def test_matches_dense_oracle(self, rng):
        # brute-force evaluation of the smoothed soft distribution
        tree = random_tree(rng, max_depth=2, leaf_prob=0.0, n_classes=3)
        batch = class_batch(rng, 20, d=3, n_classes=3)
        p, leaves = dense_arrival(tree, batch, 1.7)
        dists = leaf_class_distribution(tree, batch, 1.7)
        for j, leaf in enumerate(leaves):
            for c in range(3):
                num = sum(p[i, j] for i in range(20) if batch.labels[i] == c) + SMOOTHING
                den = p[:, j].sum() + 3 * SMOOTHING
                assert dists[leaf][c] == pytest.approx(num / den, abs=1e-12)


class TestConditionalEntropy:
    def test_single_leaf_max_binary_entropy(self, rng):
        tree = single_leaf_tree()
        batch = class_batch(rng, 4, labels=[0, 0, 1, 1])
        assert conditional_entropy(tree, batch, 1.0) == pytest.approx(math.log(2), abs=1e-6)

    def test_pure_split_reaches_smoothing_floor(self):
        node = BranchNode(beta=[[60.0, 0.0]], log_r=[math.log(5.0)], logit_p0=0.0,
                          left=LeafNode(), right=LeafNode())
        tree = TreeModel(root=node, task="classification", feature_dim=1, n_classes=2)
        batch = Dataset.from_raw([[-1.0], [-0.8], [0.8], [1.0]], [0, 0, 1, 1], n_classes=2)
        h = conditional_entropy(tree, batch, 64.0)
        assert 0.0 <= h <= 2 * 2 * SMOOTHING * math.log(1.0 / SMOOTHING) + 1e-9

    def test_four_point_chain_oracle(self, rng):
        # hand evaluation of the estimator chain: arrival probabilities ->
        # leaf masses -> smoothed distributions -> weighted entropy
        node = random_branch(rng, 2, 3)
        node.left, node.right = LeafNode(), LeafNode()
        tree = TreeModel(root=node, task="classification", feature_dim=2, n_classes=2)
        batch = class_batch(rng, 4, labels=[0, 1, 1, 0])
        lam = 1.3
        p, _ = dense_arrival(tree, batch, lam)
        expected = 0.0
        for j in range(2):
            mass = p[:, j].sum()
            h = 0.0
            for c in range(2):
                num = sum(p[i, j] for i in range(4) if batch.labels[i] == c) + SMOOTHING
                pi = num / (mass + 2 * SMOOTHING)
                h -= pi * math.log(pi)
            expected += (mass / 4.0) * h
        assert conditional_entropy(tree, batch, lam) == pytest.approx(expected, abs=1e-12)

    def test_bounds(self, rng):
        for _ in range(30):
            n_classes = int(rng.integers(2, 5))
            tree = random_tree(rng, n_classes=n_classes)
            batch = class_batch(rng, int(rng.integers(2, 25)), d=3, n_classes=n_classes)
            h = conditional_entropy(tree, batch, float(rng.uniform(0.5, 8)))
            assert 0.0 <= h <= math.log(n_classes) + 1e-9


class TestRegressionObjective:
    def test_single_leaf_two_points(self, rng):
        tree = single_leaf_tree(task="regression")
        batch = Dataset.from_raw(rng.normal(size=(2, 2)), [1.0, 3.0])
        assert regression_objective(tree, batch, 1.0) == pytest.approx(2.0, abs=1e-6)

    def test_symmetric_depth_one(self, rng):
        node = BranchNode(beta=[[0.0, 0.0, 0.0]], log_r=[0.0], logit_p0=0.0,
                          left=LeafNode(), right=LeafNode())
        tree = TreeModel(root=node, task="regression", feature_dim=2)
        batch = Dataset.from_raw(rng.normal(size=(2, 2)), [1.0, 3.0])
        assert regression_objective(tree, batch, 1.0) == pytest.approx(2.0, abs=1e-6)

    def test_one_leaf_equals_total_squared_deviation(self, rng):
        tree = single_leaf_tree(task="regression")
        y = rng.normal(size=12)
        batch = Dataset.from_raw(rng.normal(size=(12, 2)), y)
        assert regression_objective(tree, batch, 1.0) == pytest.approx(
            float(np.sum((y - y.mean()) ** 2)), abs=1e-9
        )

    def test_matches_dense_oracle(self, rng):
        tree = random_tree(rng, max_depth=2, leaf_prob=0.0, task="regression")
        y = rng.normal(size=10)
        batch = Dataset.from_raw(rng.normal(size=(10, 3)), y)
        lam = 2.4
        p, _ = dense_arrival(tree, batch, lam)
        expected = 0.0
        for j in range(p.shape[1]):
            mu = float(p[:, j] @ y) / (p[:, j].sum() + SMOOTHING)
            expected += float(p[:, j] @ (y - mu) ** 2)
        assert regression_objective(tree, batch, lam) == pytest.approx(expected, abs=1e-10)


class TestPriorPenalty:
    def test_unit_weights_zero_betas(self):
        # gamma0 = k kills the log term; all beta = 0 kills the ridge term;
        # what is left is sum c0 * r = k
        k = 4
        node = BranchNode(beta=np.zeros((k, 3)), log_r=np.zeros(k),
                          left=LeafNode(), right=LeafNode())
        tree = TreeModel(root=node, task="regression", feature_dim=2)
        prior = PriorConfig(gamma0=float(k), c0=1.0, a_beta=1.0, b_beta=1.0, reg_weight=1.0)
        assert prior_penalty(tree, prior) == pytest.approx(float(k), abs=1e-12)

    def test_log_term_rewards_vanishing_r(self):
        # with gamma0/k < 1 the -(gamma0/k - 1) ln r term dominates as
        # r -> 0+ and drives the penalty down without bound: the truncated
        # Gamma(alpha < 1) density diverges at zero, which is what makes it
        # a shrinkage prior. The gradient d/dlog_r = (1 - gamma0/k) + c0*r
        # stays strictly positive, always pushing unused weights down.
        node = BranchNode(beta=np.zeros((2, 3)), log_r=[0.0, 0.0],
                          left=LeafNode(), right=LeafNode())
        tree = TreeModel(root=node, task="regression", feature_dim=2)
        prior = PriorConfig(gamma0=1.0, c0=1.0)  # gamma0/k = 0.5 < 1
        values = []
        for log_r in (-5.0, -20.0, -100.0):
            node.log_r[:] = log_r
            values.append(prior_penalty(tree, prior))
        assert values[0] > values[1] > values[2]

    def test_term_by_term_oracle(self):
        # k=2, gamma0=1, c0=2, r=(0.5, 2.0), one beta coordinate 1.0,
        # a_beta=1, b_beta=1; direct formula evaluation
        beta = np.zeros((2, 3))
        beta[0, 0] = 1.0
        node = BranchNode(beta=beta, log_r=np.log([0.5, 2.0]),
                          left=LeafNode(), right=LeafNode())
        tree = TreeModel(root=node, task="regression", feature_dim=2)
        prior = PriorConfig(gamma0=1.0, c0=2.0, a_beta=1.0, b_beta=1.0, reg_weight=1.0)
        expected = 0.0
        for r in (0.5, 2.0):
            expected += -(1.0 / 2 - 1.0) * math.log(r) + 2.0 * r
        expected += (1.0 + 0.5) * math.log(1.0 + 1.0**2 / 2.0)
        assert prior_penalty(tree, prior) == pytest.approx(expected, abs=1e-12)

    def test_invariant_under_expert_permutation(self, rng):
        k = 5
        beta = rng.normal(size=(k, 4))
        log_r = rng.normal(size=k)
        prior = PriorConfig(gamma0=2.0, c0=1.3, a_beta=0.7, b_beta=1.1, reg_weight=0.8)
        perm = rng.permutation(k)
        t1 = TreeModel(root=BranchNode(beta, log_r, left=LeafNode(), right=LeafNode()),
                       task="regression", feature_dim=3)
        t2 = TreeModel(root=BranchNode(beta[perm], log_r[perm], left=LeafNode(), right=LeafNode()),
                       task="regression", feature_dim=3)
        assert prior_penalty(t1, prior) == pytest.approx(prior_penalty(t2, prior), abs=1e-12)

    def test_reg_weight_scales_linearly(self, rng):
        tree = random_tree(rng)
        base = PriorConfig(reg_weight=1.0)
        half = PriorConfig(reg_weight=0.5)
        assert prior_penalty(tree, half) == pytest.approx(0.5 * prior_penalty(tree, base))


class TestTotalLoss:
    def test_prior_only_gradient_at_unit_r(self, rng):
        # gamma0 = k and c0 = 1 leave d/dlog_r = c0 * r = 1 per expert when
        # the entropy term is flat (both leaves identical by symmetry)
        k = 3
        node = BranchNode(beta=np.zeros((k, 3)), log_r=np.zeros(k), logit_p0=0.0,
                          left=LeafNode(), right=LeafNode())
        tree = TreeModel(root=node, task="classification", feature_dim=2, n_classes=2)
        batch = class_batch(rng, 8, labels=[0, 1] * 4)
        prior = PriorConfig(gamma0=float(k), c0=1.0, reg_weight=1.0)
        obj = total_loss_and_gradient(tree, batch, 1.0, prior)
        logr_grad = obj.gradient[k * 3 : k * 3 + k]
        assert logr_grad == pytest.approx(np.ones(k), abs=1e-9)

    def test_symmetric_tree_beta_gradient_zero(self, rng):
        # all beta = 0 and balanced labels: entropy is stationary in beta
        node = BranchNode(beta=np.zeros((2, 3)), log_r=np.zeros(2), logit_p0=0.0,
                          left=LeafNode(), right=LeafNode())
        tree = TreeModel(root=node, task="classification", feature_dim=2, n_classes=2)
        x = rng.normal(size=(6, 2))
        batch = Dataset.from_raw(np.vstack([x, x]), [0] * 6 + [1] * 6, n_classes=2)
        prior = PriorConfig(reg_weight=0.0)
        obj = total_loss_and_gradient(tree, batch, 1.0, prior)
        assert np.allclose(obj.gradient[: 2 * 3], 0.0, atol=1e-12)

    def test_value_consistency(self, rng):
        tree = random_tree(rng, task="classification")
        batch = class_batch(rng, 9, d=3)
        prior = PriorConfig(gamma0=1.5, c0=0.8, reg_weight=0.4)
        obj = total_loss_and_gradient(tree, batch, 2.0, prior)
        assert obj.value == pytest.approx(
            conditional_entropy(tree, batch, 2.0) + prior_penalty(tree, prior), abs=1e-12
        )
        assert obj.gradient.shape == (len(np.asarray(obj.gradient)),)

    def test_rejects_empty_batch(self, rng):
        tree = random_tree(rng)
        batch = class_batch(rng, 3, d=3)
        with pytest.raises(Exception):
            total_loss_and_gradient(tree, batch.subset(np.zeros(0, dtype=int)), 1.0, PriorConfig())
