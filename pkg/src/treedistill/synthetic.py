"""Deterministic synthetic datasets used by the demos and the test suite.

``make_tree_task`` builds a tabular problem whose target is an additive
combination of axis-aligned threshold rules, i.e. something a small tree
ensemble can represent essentially exactly.  ``make_digit_images``
draws crude 28x28 "handwritten" shapes (rings for digit 0, strokes for
1, 4 and 7) on an ink-free black background, so pixel attributions can
be compared against actual ink positions.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Dataset, Task, write_idx_images, write_idx_labels


def make_tree_task(
    n_samples: int,
    n_features: int = 20,
    n_rules: int = 8,
    noise: float = 0.05,
    seed: int = 0,
    task: Task = Task.REGRESSION,
) -> Dataset:
    """Tabular dataset whose target is a sum of threshold rules.

    Each rule contributes ``weight * 1[x_f <= t]``, with a few pairwise
    rule products mixed in for depth-2 structure.  Classification
    variants threshold the clean score at its median.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n_samples, n_features))
    features = rng.integers(0, n_features, size=n_rules)
    thresholds = rng.uniform(-0.6, 0.6, size=n_rules)
    weights = rng.normal(0.0, 1.0, size=n_rules)
    indicators = (X[:, features] <= thresholds).astype(np.float64)
    score = indicators @ weights
    n_pairs = max(1, n_rules // 4)
    pair_weights = rng.normal(0.0, 1.0, size=n_pairs)
    for p in range(n_pairs):
        a, b = rng.integers(0, n_rules, size=2)
        score += pair_weights[p] * indicators[:, a] * indicators[:, b]
    names = [f"f{i}" for i in range(n_features)]
    if task is Task.CLASSIFICATION:
        labels = (score >= np.median(score)).astype(np.float64)
        flip = rng.uniform(size=n_samples) < noise
        labels[flip] = 1.0 - labels[flip]
        return Dataset(X, labels, names, Task.CLASSIFICATION)
    labels = score + noise * rng.normal(size=n_samples)
    return Dataset(X, labels, names, Task.REGRESSION)


def save_tree_task_csv(path: str | Path, d: Dataset, label_column: str = "label") -> None:
    """Write a dataset as the CSV shape load_csv expects."""
    lines = [",".join([*d.feature_names, label_column])]
    for row, label in zip(d.features, d.labels):
        cells = [repr(float(v)) for v in row]
        cells.append(repr(float(label)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _ink(canvas: np.ndarray, rows: np.ndarray, cols: np.ndarray, rng: np.random.Generator) -> None:
    inside = (rows >= 0) & (rows < 28) & (cols >= 0) & (cols < 28)
    rows, cols = rows[inside], cols[inside]
    intensity = rng.integers(150, 256, size=rows.shape[0])
    canvas[rows, cols] = np.maximum(canvas[rows, cols], intensity)


def _draw_zero(canvas: np.ndarray, rng: np.random.Generator) -> None:
    cy, cx = rng.integers(12, 17, size=2)
    ry = rng.integers(6, 10)
    rx = rng.integers(4, 8)
    t = np.linspace(0.0, 2.0 * np.pi, 220)
    for radius_scale in (1.0, 0.85):
        rows = np.rint(cy + radius_scale * ry * np.sin(t)).astype(int)
        cols = np.rint(cx + radius_scale * rx * np.cos(t)).astype(int)
        _ink(canvas, rows, cols, rng)


def _draw_one(canvas: np.ndarray, rng: np.random.Generator) -> None:
    col = rng.integers(10, 18)
    slant = rng.uniform(-0.15, 0.15)
    rows = np.arange(4, 24)
    cols = np.rint(col + slant * (rows - 14)).astype(int)
    _ink(canvas, rows, cols, rng)
    _ink(canvas, rows, cols + 1, rng)


def _draw_four(canvas: np.ndarray, rng: np.random.Generator) -> None:
    vcol = rng.integers(14, 19)
    rows = np.arange(4, 24)
    _ink(canvas, rows, np.full_like(rows, vcol), rng)
    bar_row = rng.integers(12, 16)
    cols = np.arange(6, vcol + 3)
    _ink(canvas, np.full_like(cols, bar_row), cols, rng)
    diag_rows = np.arange(4, bar_row + 1)
    diag_cols = np.rint(np.linspace(vcol - 6, 7, diag_rows.shape[0])).astype(int)
    _ink(canvas, diag_rows, diag_cols, rng)


def _draw_seven(canvas: np.ndarray, rng: np.random.Generator) -> None:
    top_row = rng.integers(4, 7)
    cols = np.arange(7, 21)
    _ink(canvas, np.full_like(cols, top_row), cols, rng)
    rows = np.arange(top_row, 24)
    diag_cols = np.rint(np.linspace(19, 10, rows.shape[0])).astype(int)
    _ink(canvas, rows, diag_cols, rng)


_DRAWERS = {0: _draw_zero, 1: _draw_one, 4: _draw_four, 7: _draw_seven}


def make_digit_images(n_samples: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic digit pictures: (n, 28, 28) uint8 images and digit labels.

    Backgrounds are exactly zero, so "ink pixels" are well defined.
    Digits are drawn from {0, 1, 4, 7} uniformly at random.
    """
    rng = np.random.default_rng(seed)
    choices = np.array(sorted(_DRAWERS))
    digits = choices[rng.integers(0, len(choices), size=n_samples)]
    images = np.zeros((n_samples, 28, 28), dtype=np.uint8)
    for i, digit in enumerate(digits):
        _DRAWERS[int(digit)](images[i], rng)
    return images, digits.astype(np.uint8)


def write_digit_idx(out_dir: str | Path, n_samples: int, seed: int = 0) -> tuple[Path, Path]:
    """Generate digit images and persist them as an IDX pair."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images, digits = make_digit_images(n_samples, seed=seed)
    images_path = out_dir / "digits-images-idx3-ubyte"
    labels_path = out_dir / "digits-labels-idx1-ubyte"
    write_idx_images(images_path, images)
    write_idx_labels(labels_path, digits)
    return images_path, labels_path
