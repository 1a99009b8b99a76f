"""Structure-based local attributions for the boosted-tree teacher.

Walking a sample's decision path and differencing the node expected
values yields one contribution per split feature; the root expectation
becomes the bias.  Contributions are additive: bias plus the feature
sum reproduces the tree's (and, scaled, the ensemble's) raw output.
Classification models are attributed in raw log-odds space, where this
additivity holds.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .gbdt import GbdtModel, Tree


@dataclass(frozen=True)
class AttributionVector:
    """Per-feature contributions for one sample plus a bias scalar.

    Entries are zero for every feature that does not appear on the
    sample's decision path.
    """

    values: np.ndarray
    bias: float

    def total(self) -> float:
        return float(self.bias + np.sum(self.values))


def attribute_tree(t: Tree, x: np.ndarray) -> AttributionVector:
    """Path contributions of a single tree for a single sample."""
    x = np.asarray(x, dtype=np.float64)
    values, bias = attribute_tree_many(t, x.reshape(1, -1))
    return AttributionVector(values[0], bias)


def attribute_tree_many(t: Tree, X: np.ndarray) -> tuple[np.ndarray, float]:
    """Vectorized per-tree attribution: (n_samples, n_features) plus bias.

    The bias (root expected value) is shared by every sample of the tree.
    """
    X = np.asarray(X, dtype=np.float64)
    n, n_features = X.shape
    values = np.zeros((n, n_features), dtype=np.float64)
    root = t.nodes[0]
    if not root.is_leaf:
        max_feature = max(nd.feature_index for nd in t.nodes if not nd.is_leaf)
        if n_features <= max_feature:
            raise DataError(
                f"samples have {n_features} features but the tree splits on "
                f"feature {max_feature}"
            )
    stack = [(0, np.arange(n))]
    while stack:
        node, rows = stack.pop()
        nd = t.nodes[node]
        if nd.is_leaf or rows.size == 0:
            continue
        mask = X[rows, nd.feature_index] <= nd.threshold
        for child, child_rows in ((nd.left, rows[mask]), (nd.right, rows[~mask])):
            if child_rows.size:
                delta = t.nodes[child].expected_value - nd.expected_value
                values[child_rows, nd.feature_index] += delta
            stack.append((child, child_rows))
    return values, root.expected_value


def attribute_ensemble(m: GbdtModel, x: np.ndarray) -> AttributionVector:
    """Teacher attributions: learning-rate-scaled sum over all trees.

    bias + sum(values) equals the raw ensemble prediction for x.
    """
    x = np.asarray(x, dtype=np.float64)
    values, bias = attribute_ensemble_many(m, x.reshape(1, -1))
    return AttributionVector(values[0], bias)


def attribute_ensemble_many(m: GbdtModel, X: np.ndarray) -> tuple[np.ndarray, float]:
    X = np.asarray(X, dtype=np.float64)
    values = np.zeros(X.shape, dtype=np.float64)
    bias = m.base_score
    for tree in m.trees:
        tree_values, tree_bias = attribute_tree_many(tree, X)
        values += m.learning_rate * tree_values
        bias += m.learning_rate * tree_bias
    return values, float(bias)


def attribute_group(m: GbdtModel, tree_indices: list[int], x: np.ndarray) -> AttributionVector:
    """Attribution restricted to a subset of trees (no base-score term)."""
    x = np.asarray(x, dtype=np.float64)
    values, bias = attribute_group_many(m, tree_indices, x.reshape(1, -1))
    return AttributionVector(values[0], bias)


def attribute_group_many(
    m: GbdtModel, tree_indices: list[int], X: np.ndarray
) -> tuple[np.ndarray, float]:
    if len(tree_indices) == 0:
        raise DataError("attribute_group requires a non-empty tree subset")
    X = np.asarray(X, dtype=np.float64)
    values = np.zeros(X.shape, dtype=np.float64)
    bias = 0.0
    for i in tree_indices:
        tree_values, tree_bias = attribute_tree_many(m.trees[i], X)
        values += m.learning_rate * tree_values
        bias += m.learning_rate * tree_bias
    return values, float(bias)


def export_attributions(
    path: str | Path, feature_names: list[str], values: np.ndarray, biases: np.ndarray
) -> None:
    """Write one attribution row per sample: feature columns plus "bias".

    Floats are written with shortest round-trip precision, so identical
    inputs always produce identical bytes.
    """
    values = np.asarray(values, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != len(feature_names):
        raise DataError(
            f"attribution matrix shape {values.shape} does not match "
            f"{len(feature_names)} feature names"
        )
    if biases.shape != (values.shape[0],):
        raise DataError("biases must hold one scalar per attribution row")
    lines = [",".join([*feature_names, "bias"])]
    for row, bias in zip(values, biases):
        cells = [repr(float(v)) for v in row]
        cells.append(repr(float(bias)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_attributions(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Read an attribution CSV back: (feature names, values, biases)."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"attribution file not found: {p}")
    lines = p.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0]:
        raise DataError(f"{p}: empty attribution file")
    header = lines[0].split(",")
    if header[-1] != "bias":
        raise DataError(f"{p}: last column must be 'bias', found {header[-1]!r}")
    names = header[:-1]
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataError(f"{p}: row {line_no} has {len(cells)} cells, expected {len(header)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise DataError(f"{p}: non-numeric value at row {line_no}") from None
    if not rows:
        raise DataError(f"{p}: no attribution rows")
    table = np.asarray(rows, dtype=np.float64)
    return names, table[:, :-1], table[:, -1]
