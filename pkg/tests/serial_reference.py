"""Loop-based reference implementations used as test oracles.

These rebuild the forest-training protocol with plain Python control flow and
per-row prediction walks, deliberately sharing no code with the package. Any
drift between the two shows up as a prediction mismatch.
"""

from __future__ import annotations

import numpy as np


def _resolve_mtry(features_per_split: int | None, n_features: int) -> int:
    if features_per_split is not None:
        return min(features_per_split, n_features)
    return max(1, int(np.sqrt(n_features)))


def serial_train_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_samples_leaf: int,
    mtry: int,
    rng: np.random.Generator,
) -> list[dict]:
    n_features = X.shape[1]
    nodes: list[dict] = []

    def build(idx: np.ndarray, depth: int) -> int:
        me = len(nodes)
        nodes.append({"feature": -1, "threshold": 0.0, "left": -1, "right": -1, "value": 0.0})
        n = len(idx)
        frauds = int(y[idx].sum())
        nodes[me]["value"] = frauds / n
        if depth >= max_depth or n < 2 * min_samples_leaf or frauds == 0 or frauds == n:
            return me

        feats = rng.choice(n_features, size=mtry, replace=False)
        best_gini = None
        best_feature = -1
        best_threshold = 0.0
        for f in feats:
            xs = X[idx, f]
            order = np.argsort(xs, kind="stable")
            xs_sorted = xs[order]
            ys_sorted = y[idx][order]
            cum = 0
            cum_frauds = []
            for label in ys_sorted:
                cum += int(label)
                cum_frauds.append(cum)
            for i in range(min_samples_leaf - 1, n - min_samples_leaf):
                if xs_sorted[i] == xs_sorted[i + 1]:
                    continue
                nl = np.float64(i + 1)
                nr = np.float64(n) - nl
                fl = np.float64(cum_frauds[i])
                fr = frauds - fl
                weighted = 2.0 * (fl * (nl - fl) / nl + fr * (nr - fr) / nr) / n
                if best_gini is None or weighted < best_gini:
                    best_gini = weighted
                    best_feature = int(f)
                    best_threshold = float((xs_sorted[i] + xs_sorted[i + 1]) / 2.0)
        if best_feature < 0:
            return me

        mask = X[idx, best_feature] <= best_threshold
        nodes[me]["feature"] = best_feature
        nodes[me]["threshold"] = best_threshold
        nodes[me]["left"] = build(idx[mask], depth + 1)
        nodes[me]["right"] = build(idx[~mask], depth + 1)
        return me

    build(np.arange(X.shape[0]), 0)
    return nodes


def serial_train_forest(
    X: np.ndarray,
    y: np.ndarray,
    trees_per_partition: int,
    num_partitions: int,
    max_depth: int,
    min_samples_leaf: int,
    features_per_split: int | None,
    balance_ratio: float,
    random_state: int | None,
) -> list[list[dict]]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    fraud_idx = np.flatnonzero(y == 1)
    genuine_idx = np.flatnonzero(y == 0)
    mtry = _resolve_mtry(features_per_split, X.shape[1])
    root = np.random.default_rng(random_state)
    partition_seeds = root.integers(0, 2**63, size=num_partitions)
    parts = np.array_split(genuine_idx, num_partitions)
    target = max(1, round(balance_ratio * len(fraud_idx)))

    trees = []
    for p in range(num_partitions):
        prng = np.random.default_rng(partition_seeds[p])
        part = parts[p]
        cap = min(len(part), target)
        for _ in range(trees_per_partition):
            pick = prng.choice(len(part), size=cap, replace=False)
            tree_seed = int(prng.integers(0, 2**63))
            sample = np.concatenate([fraud_idx, part[pick]])
            trees.append(
                serial_train_tree(
                    X[sample], y[sample], max_depth, min_samples_leaf, mtry,
                    np.random.default_rng(tree_seed),
                )
            )
    return trees


def serial_predict(trees: list[list[dict]], X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    acc = np.zeros(X.shape[0], dtype=np.float64)
    for nodes in trees:
        pred = np.empty(X.shape[0], dtype=np.float64)
        for r in range(X.shape[0]):
            node = 0
            while nodes[node]["feature"] >= 0:
                if X[r, nodes[node]["feature"]] <= nodes[node]["threshold"]:
                    node = nodes[node]["left"]
                else:
                    node = nodes[node]["right"]
            pred[r] = nodes[node]["value"]
        acc += pred
    return acc / len(trees)


def serial_auc(scores, labels) -> float:
    """Pairwise Mann-Whitney AUC: wins + half-ties over all fraud/genuine pairs."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    if not pos or not neg:
        raise ValueError("both classes required")
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))
