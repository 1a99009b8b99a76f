"""Gradient-boosted regression tree teacher.

Trees are grown best-first (leaf-wise) with exact greedy split search:
every boosting round fits one binary tree to the negative gradients of
the objective at the current ensemble prediction.  Besides predictions,
each node carries the expected tree output over the training samples
routed through it; path-differencing those expectations is what the
attribution module consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .data import Dataset, Task
from .errors import DataError, NumericalError
from .mathutil import log_loss, sigmoid
from .serialize import decode_array, encode_array, load_container, save_container

GBDT_MODEL_VERSION = 1


class Objective(Enum):
    LOGISTIC_BINARY = "logistic_binary"
    SQUARED_ERROR = "squared_error"


@dataclass(frozen=True)
class TreeNode:
    """One node of a binary regression tree.

    Internal nodes route left when ``x[feature_index] <= threshold``.
    ``expected_value`` is the sample-count-weighted mean of the fitted
    leaf values reachable below the node; at a leaf it equals the leaf
    value itself.
    """

    is_leaf: bool
    expected_value: float
    sample_count: int
    feature_index: int = -1
    threshold: float = math.nan
    left: int = -1
    right: int = -1
    leaf_value: float = math.nan


@dataclass(frozen=True)
class Tree:
    """A fitted tree: node array (index 0 = root) plus leaf/feature views."""

    nodes: list[TreeNode]
    leaf_ids: list[int]
    leaf_values: np.ndarray
    used_features: list[int]

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ids)


@dataclass(frozen=True)
class GbdtConfig:
    n_trees: int = 100
    max_leaves: int = 32
    min_samples_leaf: int = 20
    learning_rate: float = 0.1
    min_gain: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise DataError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_leaves < 2:
            raise DataError(f"max_leaves must be >= 2, got {self.max_leaves}")
        if self.min_samples_leaf < 1:
            raise DataError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if not (0.0 < self.learning_rate <= 1.0):
            raise DataError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.min_gain < 0.0:
            raise DataError(f"min_gain must be >= 0, got {self.min_gain}")


@dataclass(frozen=True)
class GbdtModel:
    """Boosted ensemble: raw score = base_score + lr * sum of leaf values."""

    trees: list[Tree]
    learning_rate: float
    base_score: float
    task: Task
    objective: Objective
    round_losses: list[float] | None = field(default=None, compare=False, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def fit_gbdt(d: Dataset, c: GbdtConfig) -> GbdtModel:
    """Train the boosted-tree teacher on a dataset.

    Classification datasets use binary logistic loss with one Newton step
    per leaf; regression uses squared error with mean-residual leaves.
    The returned model records the per-round training loss.
    """
    if d.n_samples == 0:
        raise DataError("cannot fit a GBDT on an empty dataset")
    X, y = d.features, d.labels
    if d.task is Task.CLASSIFICATION:
        objective = Objective.LOGISTIC_BINARY
        p = min(max(float(np.mean(y)), 1e-12), 1.0 - 1e-12)
        base_score = math.log(p / (1.0 - p))
    else:
        objective = Objective.SQUARED_ERROR
        base_score = float(np.mean(y))

    raw = np.full(d.n_samples, base_score, dtype=np.float64)
    trees: list[Tree] = []
    losses: list[float] = []
    for _ in range(c.n_trees):
        if objective is Objective.LOGISTIC_BINARY:
            prob = sigmoid(raw)
            grad = y - prob
            hess = prob * (1.0 - prob)
        else:
            grad = y - raw
            hess = np.ones_like(raw)
        tree = _grow_tree(X, grad, hess, c)
        trees.append(tree)
        raw = raw + c.learning_rate * tree.leaf_values[_leaf_slots(tree, X)]
        if not np.all(np.isfinite(raw)):
            raise NumericalError(f"non-finite ensemble score after tree {len(trees)}")
        if objective is Objective.LOGISTIC_BINARY:
            losses.append(log_loss(y, raw))
        else:
            losses.append(float(np.mean((y - raw) ** 2)))
    return GbdtModel(trees, c.learning_rate, base_score, d.task, objective, losses)


class _Split:
    __slots__ = ("gain", "feature", "threshold")

    def __init__(self, gain, feature, threshold):
        self.gain = gain
        self.feature = feature
        self.threshold = threshold


def _grow_tree(X: np.ndarray, grad: np.ndarray, hess: np.ndarray, c: GbdtConfig) -> Tree:
    """Grow one tree best-first: always split the leaf with the largest gain."""
    n_samples = X.shape[0]
    # Node records built mutably, frozen into TreeNode at the end.
    kind = [True]
    feature = [-1]
    threshold = [math.nan]
    left = [-1]
    right = [-1]
    counts = [n_samples]
    members = {0: np.arange(n_samples)}
    open_splits: dict[int, _Split] = {}

    best = _best_split(X, grad, np.arange(n_samples), c)
    if best is not None:
        open_splits[0] = best

    n_leaves = 1
    while n_leaves < c.max_leaves and open_splits:
        # Highest gain wins; equal gains go to the node created first.
        node = min(open_splits, key=lambda i: (-open_splits[i].gain, i))
        split = open_splits.pop(node)
        idx = members.pop(node)
        mask = X[idx, split.feature] <= split.threshold
        left_idx, right_idx = idx[mask], idx[~mask]

        for child_idx in (left_idx, right_idx):
            child = len(kind)
            kind.append(True)
            feature.append(-1)
            threshold.append(math.nan)
            left.append(-1)
            right.append(-1)
            counts.append(len(child_idx))
            members[child] = child_idx
        left[node] = len(kind) - 2
        right[node] = len(kind) - 1
        kind[node] = False
        feature[node] = split.feature
        threshold[node] = split.threshold
        n_leaves += 1

        if n_leaves < c.max_leaves:
            for child in (left[node], right[node]):
                cand = _best_split(X, grad, members[child], c)
                if cand is not None:
                    open_splits[child] = cand

    # Leaf values: one Newton step, sum(grad) / sum(hess) over routed samples.
    n_nodes = len(kind)
    leaf_value = np.full(n_nodes, math.nan)
    for node, idx in members.items():
        h = float(np.sum(hess[idx]))
        leaf_value[node] = float(np.sum(grad[idx])) / h if h > 0 else 0.0

    # Expected values bottom-up: leaves take their fitted value, internal
    # nodes the count-weighted mean of their children (children always have
    # larger indices than their parent).
    expected = np.empty(n_nodes)
    for node in range(n_nodes - 1, -1, -1):
        if kind[node]:
            expected[node] = leaf_value[node]
        else:
            l, r = left[node], right[node]
            expected[node] = (
                counts[l] * expected[l] + counts[r] * expected[r]
            ) / counts[node]

    nodes = [
        TreeNode(
            is_leaf=kind[i],
            expected_value=float(expected[i]),
            sample_count=int(counts[i]),
            feature_index=feature[i],
            threshold=threshold[i],
            left=left[i],
            right=right[i],
            leaf_value=float(leaf_value[i]) if kind[i] else math.nan,
        )
        for i in range(n_nodes)
    ]
    leaf_ids = [i for i in range(n_nodes) if kind[i]]
    leaf_values = np.array([leaf_value[i] for i in leaf_ids], dtype=np.float64)
    used = sorted({feature[i] for i in range(n_nodes) if not kind[i]})
    return Tree(nodes, leaf_ids, leaf_values, used)


def _best_split(X: np.ndarray, grad: np.ndarray, idx: np.ndarray, c: GbdtConfig) -> _Split | None:
    """Exact greedy scan: maximal residual sum-of-squares reduction.

    Ties are broken toward the lower feature index, then the lower
    threshold, so training is fully deterministic.
    """
    n = idx.shape[0]
    if n < 2 * c.min_samples_leaf or n < 2:
        return None
    g = grad[idx]
    total = float(np.sum(g))
    total_sq = float(np.sum(g * g))
    parent_sse = total_sq - total * total / n

    node_X = X[idx]  # one gather; per-feature column views are then cheap
    best: _Split | None = None
    for f in range(X.shape[1]):
        x = node_X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        gs = g[order]
        cg = np.cumsum(gs)
        cg2 = np.cumsum(gs * gs)
        sizes = np.arange(1, n)
        valid = xs[:-1] != xs[1:]
        valid &= sizes >= c.min_samples_leaf
        valid &= (n - sizes) >= c.min_samples_leaf
        if not valid.any():
            continue
        left_sse = cg2[:-1] - cg[:-1] ** 2 / sizes
        right_sse = (total_sq - cg2[:-1]) - (total - cg[:-1]) ** 2 / (n - sizes)
        gains = np.where(valid, parent_sse - left_sse - right_sse, -np.inf)
        pos = int(np.argmax(gains))
        gain = float(gains[pos])
        if gain > c.min_gain and (best is None or gain > best.gain):
            best = _Split(gain, f, float(xs[pos]))
    return best


def _leaf_slots(t: Tree, X: np.ndarray) -> np.ndarray:
    """Leaf position (index into leaf_ids) reached by every row of X."""
    n = X.shape[0]
    if t.nodes and not t.nodes[0].is_leaf:
        max_feature = max(nd.feature_index for nd in t.nodes if not nd.is_leaf)
        if X.shape[1] <= max_feature:
            raise DataError(
                f"samples have {X.shape[1]} features but the tree splits on "
                f"feature {max_feature}"
            )
    slot_of_node = {node: pos for pos, node in enumerate(t.leaf_ids)}
    out = np.empty(n, dtype=np.int64)
    stack = [(0, np.arange(n))]
    while stack:
        node, rows = stack.pop()
        if rows.size == 0:
            continue
        nd = t.nodes[node]
        if nd.is_leaf:
            out[rows] = slot_of_node[node]
            continue
        mask = X[rows, nd.feature_index] <= nd.threshold
        stack.append((nd.left, rows[mask]))
        stack.append((nd.right, rows[~mask]))
    return out


def leaf_index(t: Tree, x: np.ndarray) -> np.ndarray:
    """One-hot vector over the tree's leaves marking the leaf x reaches."""
    x = np.asarray(x, dtype=np.float64)
    slot = int(_leaf_slots(t, x.reshape(1, -1))[0])
    hot = np.zeros(t.n_leaves, dtype=np.float64)
    hot[slot] = 1.0
    return hot


def leaf_onehots(t: Tree, X: np.ndarray) -> np.ndarray:
    """Stacked one-hot leaf indicators for a whole sample matrix."""
    slots = _leaf_slots(t, np.asarray(X, dtype=np.float64))
    hot = np.zeros((X.shape[0], t.n_leaves), dtype=np.float64)
    hot[np.arange(X.shape[0]), slots] = 1.0
    return hot


def leaf_prediction(t: Tree, x: np.ndarray) -> float:
    """The leaf value x reaches; identical to dot(leaf_index, leaf_values)."""
    x = np.asarray(x, dtype=np.float64)
    slot = int(_leaf_slots(t, x.reshape(1, -1))[0])
    return float(t.leaf_values[slot])


def leaf_predictions(t: Tree, X: np.ndarray) -> np.ndarray:
    return t.leaf_values[_leaf_slots(t, np.asarray(X, dtype=np.float64))]


def predict(m: GbdtModel, x: np.ndarray) -> float:
    """Raw (pre-link) ensemble score for a single sample."""
    return float(predict_many(m, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def predict_many(m: GbdtModel, X: np.ndarray) -> np.ndarray:
    """Raw ensemble scores for a sample matrix."""
    X = np.asarray(X, dtype=np.float64)
    raw = np.full(X.shape[0], m.base_score, dtype=np.float64)
    for tree in m.trees:
        raw += m.learning_rate * leaf_predictions(tree, X)
    return raw


def predict_proba(m: GbdtModel, x: np.ndarray) -> float:
    return float(sigmoid(predict(m, x)))


def predict_proba_many(m: GbdtModel, X: np.ndarray) -> np.ndarray:
    return sigmoid(predict_many(m, X))


def group_used_features(trees: list[Tree]) -> list[int]:
    """Sorted union of the feature indices used by a subset of trees."""
    if not trees:
        raise DataError("group_used_features requires a non-empty tree subset")
    used: set[int] = set()
    for t in trees:
        used.update(t.used_features)
    return sorted(used)


def save_gbdt(path: str | Path, m: GbdtModel, config: GbdtConfig | None = None) -> None:
    """Persist the model as flat per-tree node arrays; bit-exact round trip."""
    tree_payloads = []
    for t in m.trees:
        tree_payloads.append(
            {
                "is_leaf": encode_array(np.array([nd.is_leaf for nd in t.nodes], dtype=np.uint8)),
                "feature": encode_array(np.array([nd.feature_index for nd in t.nodes], dtype=np.int64)),
                "threshold": encode_array(np.array([nd.threshold for nd in t.nodes], dtype=np.float64)),
                "left": encode_array(np.array([nd.left for nd in t.nodes], dtype=np.int64)),
                "right": encode_array(np.array([nd.right for nd in t.nodes], dtype=np.int64)),
                "leaf_value": encode_array(np.array([nd.leaf_value for nd in t.nodes], dtype=np.float64)),
                "expected": encode_array(np.array([nd.expected_value for nd in t.nodes], dtype=np.float64)),
                "count": encode_array(np.array([nd.sample_count for nd in t.nodes], dtype=np.int64)),
            }
        )
    payload = {
        "trees": tree_payloads,
        "learning_rate": encode_array(np.array([m.learning_rate])),
        "base_score": encode_array(np.array([m.base_score])),
        "task": m.task.value,
        "objective": m.objective.value,
        "config": None
        if config is None
        else {
            "n_trees": config.n_trees,
            "max_leaves": config.max_leaves,
            "min_samples_leaf": config.min_samples_leaf,
            "learning_rate": encode_array(np.array([config.learning_rate])),
            "min_gain": encode_array(np.array([config.min_gain])),
            "seed": config.seed,
        },
    }
    save_container(path, "gbdt-model", GBDT_MODEL_VERSION, payload)


def load_gbdt(path: str | Path) -> GbdtModel:
    payload = load_container(path, "gbdt-model", GBDT_MODEL_VERSION)
    trees = []
    for tp in payload["trees"]:
        is_leaf = decode_array(tp["is_leaf"]).astype(bool)
        feature = decode_array(tp["feature"])
        threshold = decode_array(tp["threshold"])
        left = decode_array(tp["left"])
        right = decode_array(tp["right"])
        leaf_value = decode_array(tp["leaf_value"])
        expected = decode_array(tp["expected"])
        count = decode_array(tp["count"])
        nodes = [
            TreeNode(
                is_leaf=bool(is_leaf[i]),
                expected_value=float(expected[i]),
                sample_count=int(count[i]),
                feature_index=int(feature[i]),
                threshold=float(threshold[i]),
                left=int(left[i]),
                right=int(right[i]),
                leaf_value=float(leaf_value[i]),
            )
            for i in range(len(is_leaf))
        ]
        leaf_ids = [i for i in range(len(nodes)) if nodes[i].is_leaf]
        leaf_values = np.array([nodes[i].leaf_value for i in leaf_ids], dtype=np.float64)
        used = sorted({nodes[i].feature_index for i in range(len(nodes)) if not nodes[i].is_leaf})
        trees.append(Tree(nodes, leaf_ids, leaf_values, used))
    return GbdtModel(
        trees=trees,
        learning_rate=float(decode_array(payload["learning_rate"])[0]),
        base_score=float(decode_array(payload["base_score"])[0]),
        task=Task(payload["task"]),
        objective=Objective(payload["objective"]),
    )
