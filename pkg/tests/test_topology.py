import numpy as np
import pytest

from polytree.data import Dataset
from polytree.errors import DegenerateSplitError
from polytree.objective import PriorConfig
from polytree.topology import GrowthConfig, grow_tree, select_threshold
from polytree.train import AnnealSchedule, TrainConfig, finalize_leaves
from polytree.tree import LeafNode, check_tree, leaf_nodes, tree_depth


def entropy_of_labels(labels):
    counts = np.bincount(labels)
    frac = counts[counts > 0] / counts.sum()
    return float(-np.sum(frac * np.log(frac)))


def brute_force_best(probabilities, labels, task):
    """Independent enumeration of every cut of the probability-sorted points."""
    order = np.argsort(probabilities, kind="mergesort")
    sorted_labels = np.asarray(labels)[order]
    n = len(sorted_labels)
    best_score, best_n0 = None, None
    for n0 in range(1, n):
        if task == "classification":
            left = entropy_of_labels(sorted_labels[:n0])
            right = entropy_of_labels(sorted_labels[n0:])
        else:
            left = float(np.var(sorted_labels[:n0]))
            right = float(np.var(sorted_labels[n0:]))
        score = (n0 / n) * left + ((n - n0) / n) * right
        key = (score, abs(2 * n0 - n), n0)
        if best_score is None or key < best_score:
            best_score, best_n0 = key, n0
    return best_score[0], best_n0


def small_train_config(seed=0, epochs=40, k=4):
    return TrainConfig(
        truncation_k=k,
        prior=PriorConfig(reg_weight=0.0),
        learning_rate=0.05,
        batch_size=4096,
        epochs=epochs,
        seed=seed,
        anneal=AnnealSchedule(1.0, 32.0, "geometric", epochs),
    )


class TestSelectThreshold:
    def test_perfect_binary_split(self):
        choice = select_threshold([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1], "classification")
        assert choice.split_index == 2
        assert choice.score == 0.0
        assert choice.q_thr == pytest.approx(0.5)

    def test_perfect_variance_split(self):
        choice = select_threshold([0.1, 0.2, 0.8, 0.9], [1.0, 1.0, 5.0, 5.0], "regression")
        assert choice.split_index == 2
        assert choice.score == 0.0

    def test_unsorted_input_is_sorted_internally(self):
        choice = select_threshold([0.9, 0.1, 0.8, 0.2], [1, 0, 1, 0], "classification")
        assert choice.score == 0.0
        assert choice.q_thr == pytest.approx(0.5)

    def test_all_identical_probabilities_degenerate(self):
        with pytest.raises(DegenerateSplitError):
            select_threshold([0.4, 0.4, 0.4], [0, 1, 0], "classification")

    def test_bracketing_invariant(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 60))
            p = rng.random(n)
            labels = rng.integers(0, 3, size=n)
            choice = select_threshold(p, labels, "classification")
            sorted_p = np.sort(p)
            assert sorted_p[choice.split_index - 1] <= choice.q_thr <= sorted_p[choice.split_index]

    def test_matches_brute_force_classification(self, rng):
        # oracle: exhaustive enumeration over all cuts, exact score equality
        for _ in range(60):
            n = int(rng.integers(5, 200))
            p = rng.random(n)
            labels = rng.integers(0, 3, size=n)
            choice = select_threshold(p, labels, "classification")
            score, n0 = brute_force_best(p, labels, "classification")
            assert choice.score == score
            assert choice.split_index == n0

    def test_matches_brute_force_regression(self, rng):
        for _ in range(60):
            n = int(rng.integers(5, 200))
            p = rng.random(n)
            targets = rng.normal(size=n)
            choice = select_threshold(p, targets, "regression")
            score, n0 = brute_force_best(p, targets, "regression")
            assert choice.score == score
            assert choice.split_index == n0

    def test_monotone_impurity(self, rng):
        # the chosen split never scores worse than the unsplit node
        for _ in range(40):
            n = int(rng.integers(4, 80))
            p = rng.random(n)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                continue
            choice = select_threshold(p, labels, "classification")
            assert choice.score <= entropy_of_labels(labels) + 1e-12

    def test_tie_prefers_balance(self):
        # scores tie across all cuts of a pure-label set; the balanced cut wins
        choice = select_threshold([0.1, 0.2, 0.3, 0.4], [1, 1, 1, 1], "classification")
        assert choice.split_index == 2


def separable_blobs(rng, n=60):
    x = np.vstack([
        rng.normal(loc=(-1.5, 0.0), scale=0.3, size=(n // 2, 2)),
        rng.normal(loc=(1.5, 0.0), scale=0.3, size=(n - n // 2, 2)),
    ])
    y = np.array([0] * (n // 2) + [1] * (n - n // 2))
    return Dataset.from_raw(x, y, n_classes=2)


class TestGrowTree:
    def test_max_depth_one_gives_single_branch(self, rng):
        ds = separable_blobs(rng)
        growth = GrowthConfig(max_depth=1, min_samples=2, stump_train=small_train_config())
        tree = grow_tree(ds, None, growth, PriorConfig(reg_weight=0.0))
        assert tree_depth(tree) == 1
        assert len(leaf_nodes(tree)) == 2
        check_tree(tree)

    def test_pure_labels_become_single_leaf(self, rng):
        ds = Dataset.from_raw(rng.normal(size=(30, 2)), [1] * 30, n_classes=2)
        growth = GrowthConfig(max_depth=3, min_samples=2, stump_train=small_train_config())
        tree = grow_tree(ds, None, growth, PriorConfig(reg_weight=0.0))
        assert isinstance(tree.root, LeafNode)
        assert len(leaf_nodes(tree)) == 1

    def test_min_samples_stops_recursion(self, rng):
        ds = separable_blobs(rng, n=20)
        growth = GrowthConfig(max_depth=5, min_samples=21, stump_train=small_train_config())
        tree = grow_tree(ds, None, growth, PriorConfig(reg_weight=0.0))
        assert isinstance(tree.root, LeafNode)

    def test_partition_complete_and_depth_bounded(self, rng):
        x = rng.uniform(-1, 1, size=(120, 2))
        y = ((x[:, 0] > 0) ^ (x[:, 1] > 0)).astype(np.int64)  # XOR pattern forces depth
        ds = Dataset.from_raw(x, y, n_classes=2)
        growth = GrowthConfig(max_depth=2, min_samples=4,
                              stump_train=small_train_config(epochs=60))
        tree = grow_tree(ds, None, growth, PriorConfig(reg_weight=0.0))
        assert tree_depth(tree) <= 2
        finalize_leaves(tree, ds)
        # every training point lands in exactly one leaf
        assert sum(leaf.sample_count for leaf in leaf_nodes(tree)) == ds.n

    def test_deterministic_given_seed(self, rng):
        from polytree.tree import parameter_vector

        ds = separable_blobs(rng, n=50)
        trees = [
            grow_tree(ds, None,
                      GrowthConfig(max_depth=2, min_samples=4,
                                   stump_train=small_train_config(seed=7)),
                      PriorConfig(reg_weight=0.0))
            for _ in range(2)
        ]
        assert np.array_equal(parameter_vector(trees[0]), parameter_vector(trees[1]))

    def test_node_p0_reproduces_partition(self, rng):
        # the folded-in threshold makes deterministic routing agree with
        # the hard partition used during growth
        from polytree.tree import route_indices

        ds = separable_blobs(rng)
        growth = GrowthConfig(max_depth=1, min_samples=2, stump_train=small_train_config())
        tree = grow_tree(ds, None, growth, PriorConfig(reg_weight=0.0))
        finalize_leaves(tree, ds)
        idx, leaves = route_indices(tree, ds.features)
        counts = np.bincount(idx, minlength=2)
        # both sides nonempty and the split separates the blobs
        assert counts.min() > 0
        left_labels = ds.labels[idx == 0]
        right_labels = ds.labels[idx == 1]
        assert min(
            max(np.mean(left_labels == 0), np.mean(left_labels == 1)),
            max(np.mean(right_labels == 0), np.mean(right_labels == 1)),
        ) > 0.9
