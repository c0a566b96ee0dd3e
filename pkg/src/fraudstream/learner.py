"""Balanced random forests and the feedback/delayed ensemble.

The forest trains one group of trees per data partition: fraud rows are
shared with every partition, genuine rows are split across partitions, and
each tree sees all frauds plus a fresh without-replacement genuine subsample
of matching size. Scores from a feedback forest (trained on recently
investigated cards) and a window of per-day delayed forests (trained once
labels mature) are blended into the final score.

Randomness is explicit: a single seed drives partition seeds, per-tree
subsamples, and per-split feature draws through a fixed protocol, so a fit is
reproducible regardless of how the partition loop is executed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .transactions import FRAUD, GENUINE


class FraudStarvationError(RuntimeError):
    """Training set has no fraud rows; a balanced forest cannot be built."""


class EnsembleError(RuntimeError):
    """Ensemble misuse: no trained component, or out-of-order model rolls."""


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 20
    min_samples_leaf: int = 5
    features_per_split: int | None = None  # None means floor(sqrt(n_features))

    def resolve_features(self, n_features: int) -> int:
        if self.features_per_split is not None:
            return min(self.features_per_split, n_features)
        return max(1, int(np.sqrt(n_features)))


@dataclass(frozen=True)
class EnsembleConfig:
    feedback_days: int = 14
    delayed_models: int = 13
    delay_days: int = 7
    feedback_weight: float = 0.5
    trees_per_partition: int = 25
    num_partitions: int = 4
    balance_ratio: float = 1.0
    tree: TreeParams = field(default_factory=TreeParams)


@dataclass
class CartTree:
    """Binary gini decision tree in flat-array form.

    feature[i] < 0 marks a leaf; value[i] is the fraud fraction at node i.
    Rows with x[feature] <= threshold descend left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        return _traverse(self.feature, self.threshold, self.left, self.right, self.value, X)


def _traverse(
    feature: np.ndarray,
    threshold: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    value: np.ndarray,
    X: np.ndarray,
) -> np.ndarray:
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        cur = node[active]
        at_leaf = feature[cur] < 0
        if at_leaf.any():
            active = active[~at_leaf]
            if active.size == 0:
                break
            cur = node[active]
        go_left = X[active, feature[cur]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
    return value[node]


def train_tree(X: np.ndarray, y: np.ndarray, params: TreeParams, rng: np.random.Generator) -> CartTree:
    """Grow one gini CART tree.

    Feature subsets are drawn per node in `rng` order; among equal-impurity
    splits the earlier-drawn feature and the earlier position win, which makes
    the tree a pure function of (X, y, params, rng state).
    """
    n_rows, n_features = X.shape
    mtry = params.resolve_features(n_features)
    min_leaf = params.min_samples_leaf

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        n = idx.size
        frauds = int(y[idx].sum())
        value[node] = frauds / n
        if depth >= params.max_depth or n < 2 * min_leaf or frauds == 0 or frauds == n:
            return node

        feats = rng.choice(n_features, size=mtry, replace=False)
        best_gini = np.inf
        best_feature = -1
        best_threshold = 0.0
        for f in feats:
            xs = X[idx, f]
            order = np.argsort(xs, kind="stable")
            xs_sorted = xs[order]
            cum_frauds = np.cumsum(y[idx][order])
            # Split after position i keeps rows 0..i on the left.
            i = np.arange(min_leaf - 1, n - min_leaf)
            valid = xs_sorted[i] != xs_sorted[i + 1]
            if not valid.any():
                continue
            i = i[valid]
            nl = (i + 1).astype(np.float64)
            nr = n - nl
            fl = cum_frauds[i].astype(np.float64)
            fr = frauds - fl
            weighted = 2.0 * (fl * (nl - fl) / nl + fr * (nr - fr) / nr) / n
            k = int(np.argmin(weighted))
            if weighted[k] < best_gini:
                best_gini = float(weighted[k])
                pos = int(i[k])
                best_feature = int(f)
                best_threshold = float((xs_sorted[pos] + xs_sorted[pos + 1]) / 2.0)
        if best_feature < 0:
            return node

        mask = X[idx, best_feature] <= best_threshold
        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(n_rows), 0)
    return CartTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
    )


def predict_forest(trees: Sequence[CartTree], X: np.ndarray) -> np.ndarray:
    if not trees:
        raise EnsembleError("forest has no trees")
    scores = np.zeros(X.shape[0], dtype=np.float64)
    for tree in trees:
        scores += tree.predict_score(X)
    return scores / len(trees)


class BalancedRandomForest(BaseEstimator, ClassifierMixin):
    """Partitioned balanced random forest scoring fraud probability.

    fit() broadcasts fraud rows to every partition, splits genuine rows into
    `num_partitions` contiguous blocks, and grows `trees_per_partition` trees
    per block, each on all frauds plus a without-replacement genuine subsample
    of size round(balance_ratio * n_frauds), capped at the block size.
    """

    def __init__(
        self,
        trees_per_partition: int = 25,
        num_partitions: int = 4,
        max_depth: int = 20,
        min_samples_leaf: int = 5,
        features_per_split: int | None = None,
        balance_ratio: float = 1.0,
        random_state: int | None = None,
    ) -> None:
        self.trees_per_partition = trees_per_partition
        self.num_partitions = num_partitions
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.features_per_split = features_per_split
        self.balance_ratio = balance_ratio
        self.random_state = random_state

    def fit(self, X: np.ndarray, y: np.ndarray) -> "BalancedRandomForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError(f"expected X (n, d) and y (n,), got {X.shape} and {y.shape}")
        fraud_idx = np.flatnonzero(y == FRAUD)
        genuine_idx = np.flatnonzero(y == GENUINE)
        if fraud_idx.size + genuine_idx.size != y.size:
            raise ValueError("labels must be 0 or 1")
        if fraud_idx.size == 0:
            raise FraudStarvationError(f"no fraud rows among {y.size} training rows")
        if genuine_idx.size == 0:
            raise ValueError(f"no genuine rows among {y.size} training rows")

        params = TreeParams(
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            features_per_split=self.features_per_split,
        )
        root = np.random.default_rng(self.random_state)
        partition_seeds = root.integers(0, 2**63, size=self.num_partitions)
        genuine_parts = np.array_split(genuine_idx, self.num_partitions)
        target = max(1, round(self.balance_ratio * fraud_idx.size))

        trees: list[CartTree] = []
        tree_train_counts: list[int] = []
        partition_sizes: list[int] = []
        genuine_used: set[int] = set()
        for p in range(self.num_partitions):
            prng = np.random.default_rng(partition_seeds[p])
            part = genuine_parts[p]
            partition_sizes.append(int(part.size))
            cap = min(part.size, target)
            for _ in range(self.trees_per_partition):
                pick = prng.choice(part.size, size=cap, replace=False)
                tree_seed = int(prng.integers(0, 2**63))
                sample = np.concatenate([fraud_idx, part[pick]])
                genuine_used.update(int(g) for g in part[pick])
                trees.append(train_tree(X[sample], y[sample], params, np.random.default_rng(tree_seed)))
                tree_train_counts.append(int(sample.size))

        self.trees_ = trees
        self.tree_train_counts_ = tree_train_counts
        self.partition_sizes_ = partition_sizes
        self.training_size_ = int(fraud_idx.size + len(genuine_used))
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([GENUINE, FRAUD])
        return self

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        """Fraud probability per row (mean of per-tree leaf fractions)."""
        X = np.asarray(X, dtype=np.float64)
        return predict_forest(self.trees_, X)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        p = self.predict_score(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_score(X) >= 0.5).astype(np.int64)


def train_balanced_forest(
    X: np.ndarray,
    y: np.ndarray,
    config: EnsembleConfig,
    random_state: int | None,
    trained_on_day: int | None = None,
) -> BalancedRandomForest:
    forest = BalancedRandomForest(
        trees_per_partition=config.trees_per_partition,
        num_partitions=config.num_partitions,
        max_depth=config.tree.max_depth,
        min_samples_leaf=config.tree.min_samples_leaf,
        features_per_split=config.tree.features_per_split,
        balance_ratio=config.balance_ratio,
        random_state=random_state,
    ).fit(X, y)
    forest.trained_on_day_ = trained_on_day
    return forest


class FeedbackDelayedEnsemble:
    """Blend of a feedback forest and a sliding window of delayed forests.

    combined = w * feedback + (1 - w) * delayed, where the delayed score is a
    training-size-weighted average over at most `max_delayed` per-day forests.
    When one side is missing the other is used alone.
    """

    def __init__(self, feedback_weight: float = 0.5, max_delayed: int = 13) -> None:
        if not 0.0 <= feedback_weight <= 1.0:
            raise EnsembleError(f"feedback_weight must be in [0,1], got {feedback_weight}")
        if max_delayed < 1:
            raise EnsembleError(f"max_delayed must be positive, got {max_delayed}")
        self.feedback_weight = feedback_weight
        self.max_delayed = max_delayed
        self.feedback: BalancedRandomForest | None = None
        self.delayed: list[BalancedRandomForest] = []

    def set_feedback(self, forest: BalancedRandomForest) -> None:
        self.feedback = forest

    def roll_delayed(self, forest: BalancedRandomForest) -> None:
        """Append the newest per-day forest, evicting the oldest past the cap."""
        if self.delayed:
            last = self.delayed[-1].trained_on_day_
            new = forest.trained_on_day_
            if last is not None and new is not None and new <= last:
                raise EnsembleError(f"delayed model for day {new} rolled after day {last}")
        self.delayed.append(forest)
        if len(self.delayed) > self.max_delayed:
            self.delayed.pop(0)

    def delayed_weights(self) -> np.ndarray:
        if not self.delayed:
            raise EnsembleError("no delayed models")
        sizes = np.asarray([f.training_size_ for f in self.delayed], dtype=np.float64)
        return sizes / sizes.sum()

    def score_feedback(self, X: np.ndarray) -> np.ndarray:
        if self.feedback is None:
            raise EnsembleError("no feedback model")
        return self.feedback.predict_score(X)

    def score_delayed(self, X: np.ndarray) -> np.ndarray:
        weights = self.delayed_weights()
        out = np.zeros(X.shape[0], dtype=np.float64)
        for w, forest in zip(weights, self.delayed):
            out += w * forest.predict_score(X)
        return out

    def score(self, X: np.ndarray) -> np.ndarray:
        has_feedback = self.feedback is not None
        has_delayed = bool(self.delayed)
        if has_feedback and has_delayed:
            w = self.feedback_weight
            return w * self.score_feedback(X) + (1.0 - w) * self.score_delayed(X)
        if has_feedback:
            return self.score_feedback(X)
        if has_delayed:
            return self.score_delayed(X)
        raise EnsembleError("ensemble has no trained component")


class EnsembleScorer:
    """Flattened snapshot of an ensemble for fast per-batch scoring.

    All trees across all forests are packed into single node arrays; one
    traversal pass per tree scores a whole batch.
    """

    def __init__(self, ensemble: FeedbackDelayedEnsemble) -> None:
        self.has_feedback = ensemble.feedback is not None
        self.has_delayed = bool(ensemble.delayed)
        if not self.has_feedback and not self.has_delayed:
            raise EnsembleError("ensemble has no trained component")
        self.feedback_weight = ensemble.feedback_weight
        self._groups: list[tuple[list[CartTree], float, str]] = []
        if self.has_feedback:
            assert ensemble.feedback is not None
            self._groups.append((ensemble.feedback.trees_, 1.0, "feedback"))
        if self.has_delayed:
            for w, forest in zip(ensemble.delayed_weights(), ensemble.delayed):
                self._groups.append((forest.trees_, float(w), "delayed"))

    def score_batch(self, X: np.ndarray) -> dict[str, np.ndarray | None]:
        """Scores for one batch: feedback, delayed, and the blend."""
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        feedback: np.ndarray | None = np.zeros(n) if self.has_feedback else None
        delayed: np.ndarray | None = np.zeros(n) if self.has_delayed else None
        for trees, weight, kind in self._groups:
            acc = np.zeros(n, dtype=np.float64)
            for tree in trees:
                acc += tree.predict_score(X)
            acc /= len(trees)
            if kind == "feedback":
                feedback = acc
            else:
                assert delayed is not None
                delayed += weight * acc
        if feedback is not None and delayed is not None:
            w = self.feedback_weight
            combined = w * feedback + (1.0 - w) * delayed
        elif feedback is not None:
            combined = feedback.copy()
        else:
            assert delayed is not None
            combined = delayed.copy()
        return {"feedback": feedback, "delayed": delayed, "combined": combined}


def tree_to_dict(tree: CartTree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
    }


def tree_from_dict(obj: dict) -> CartTree:
    return CartTree(
        feature=np.asarray(obj["feature"], dtype=np.int32),
        threshold=np.asarray(obj["threshold"], dtype=np.float64),
        left=np.asarray(obj["left"], dtype=np.int32),
        right=np.asarray(obj["right"], dtype=np.int32),
        value=np.asarray(obj["value"], dtype=np.float64),
    )


def forest_to_dict(forest: BalancedRandomForest) -> dict:
    return {
        "params": forest.get_params(),
        "trees": [tree_to_dict(t) for t in forest.trees_],
        "tree_train_counts": forest.tree_train_counts_,
        "partition_sizes": forest.partition_sizes_,
        "training_size": forest.training_size_,
        "n_features_in": forest.n_features_in_,
        "trained_on_day": getattr(forest, "trained_on_day_", None),
    }


def forest_from_dict(obj: dict) -> BalancedRandomForest:
    forest = BalancedRandomForest(**obj["params"])
    forest.trees_ = [tree_from_dict(t) for t in obj["trees"]]
    forest.tree_train_counts_ = list(obj["tree_train_counts"])
    forest.partition_sizes_ = list(obj["partition_sizes"])
    forest.training_size_ = int(obj["training_size"])
    forest.n_features_in_ = int(obj["n_features_in"])
    forest.classes_ = np.array([GENUINE, FRAUD])
    forest.trained_on_day_ = obj.get("trained_on_day")
    return forest


def ensemble_to_dict(ensemble: FeedbackDelayedEnsemble) -> dict:
    return {
        "feedback_weight": ensemble.feedback_weight,
        "max_delayed": ensemble.max_delayed,
        "feedback": None if ensemble.feedback is None else forest_to_dict(ensemble.feedback),
        "delayed": [forest_to_dict(f) for f in ensemble.delayed],
    }


def ensemble_from_dict(obj: dict) -> FeedbackDelayedEnsemble:
    ensemble = FeedbackDelayedEnsemble(
        feedback_weight=float(obj["feedback_weight"]),
        max_delayed=int(obj["max_delayed"]),
    )
    if obj["feedback"] is not None:
        ensemble.feedback = forest_from_dict(obj["feedback"])
    ensemble.delayed = [forest_from_dict(f) for f in obj["delayed"]]
    return ensemble
