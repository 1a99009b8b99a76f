"""Agreement and prediction-quality metrics.

Attribution agreement between the teacher's structure-based explanations
and the student's learned ones is measured per sample by top-k coverage
(set overlap of the k most important features) and by NDCG graded on the
teacher's ranking.  Prediction quality uses AUC for classification and
MSE for regression.  Importance means absolute attribution value; exact
zeros never rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attribution import AttributionVector
from .errors import DataError


@dataclass(frozen=True)
class RankedFeatures:
    """Feature indices ordered most-important-first, with their magnitudes."""

    indices: list[int]
    magnitudes: np.ndarray


@dataclass(frozen=True)
class MetricsReport:
    ndcg_at: dict[int, float]
    coverage_at: dict[int, float]
    auc: float | None
    mse: float | None
    n_samples: int

    def __post_init__(self):
        for k, v in self.ndcg_at.items():
            if not (0.0 <= v <= 1.0 + 1e-12):
                raise DataError(f"NDCG@{k} out of range: {v}")
        for k, v in self.coverage_at.items():
            if not (0.0 <= v <= 1.0 + 1e-12):
                raise DataError(f"coverage@{k} out of range: {v}")
        if self.auc is not None and not (0.0 <= self.auc <= 1.0 + 1e-12):
            raise DataError(f"AUC out of range: {self.auc}")
        if self.mse is not None and self.mse < 0.0:
            raise DataError(f"MSE out of range: {self.mse}")


def rank_features(values: np.ndarray, k: int) -> list[int]:
    """Indices of the k largest |values|, ties to the lower index; zeros excluded."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    values = np.asarray(values, dtype=np.float64)
    magnitudes = np.abs(values)
    order = np.lexsort((np.arange(values.shape[0]), -magnitudes))
    ranked = [int(i) for i in order if magnitudes[i] > 0.0]
    return ranked[:k]


def topk(a: AttributionVector, k: int) -> RankedFeatures:
    """The k most important features of an attribution vector."""
    indices = rank_features(a.values, k)
    return RankedFeatures(indices, np.abs(a.values[indices]))


def coverage_ck(teacher: AttributionVector, student: AttributionVector, k: int) -> float:
    """Top-k coverage: |top-k(teacher) ∩ top-k(student)| / k."""
    return _coverage(teacher.values, student.values, k)


def _coverage(teacher_values: np.ndarray, student_values: np.ndarray, k: int) -> float:
    if teacher_values.shape != student_values.shape:
        raise DataError(
            f"attribution dimensions differ: {teacher_values.shape} vs {student_values.shape}"
        )
    top_teacher = set(rank_features(teacher_values, k))
    top_student = set(rank_features(student_values, k))
    return len(top_teacher & top_student) / k


def ndcg_at_k(teacher: AttributionVector, student: AttributionVector, k: int) -> float:
    """Rank agreement graded by the teacher's ordering.

    The student's top-k list is scored with relevance
    ``max(0, k - teacher_rank)`` (teacher_rank counted from 0 over the
    teacher's full nonzero magnitude ordering), discounted by
    ``log2(position + 1)``.  The ideal DCG reorders those same relevance
    values; an all-zero ideal scores 1.0 by convention.
    """
    return _ndcg(teacher.values, student.values, k)


def _ndcg(teacher_values: np.ndarray, student_values: np.ndarray, k: int) -> float:
    if teacher_values.shape != student_values.shape:
        raise DataError(
            f"attribution dimensions differ: {teacher_values.shape} vs {student_values.shape}"
        )
    teacher_rank = {j: r for r, j in enumerate(rank_features(teacher_values, teacher_values.shape[0]))}
    candidate = rank_features(student_values, k)
    relevance = [max(0, k - teacher_rank[j]) if j in teacher_rank else 0 for j in candidate]
    dcg = sum(rel / math.log2(i + 1) for i, rel in enumerate(relevance, start=1))
    ideal = sum(rel / math.log2(i + 1) for i, rel in enumerate(sorted(relevance, reverse=True), start=1))
    if ideal == 0.0:
        return 1.0
    return dcg / ideal


def auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney AUC; tied scores contribute half credit."""
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise DataError(f"labels {labels.shape} and scores {scores.shape} must be equal-length vectors")
    n_pos = int(np.sum(labels == 1.0))
    n_neg = int(np.sum(labels == 0.0))
    if n_pos + n_neg != labels.shape[0]:
        raise DataError("labels must be exactly 0.0 or 1.0")
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes present")
    ranks = _average_ranks(scores)
    rank_sum = float(np.sum(ranks[labels == 1.0]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ties averaged."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.shape[0]:
        j = i
        while j + 1 < scores.shape[0] and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def mse(targets: np.ndarray, predictions: np.ndarray) -> float:
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if targets.shape != predictions.shape:
        raise DataError(f"length mismatch: {targets.shape} vs {predictions.shape}")
    if targets.size == 0:
        raise DataError("mse of empty input")
    return float(np.mean((targets - predictions) ** 2))


@dataclass(frozen=True)
class SampleAgreement:
    """Attribution-agreement metrics for a single sample."""

    ndcg: dict[int, float]
    coverage: dict[int, float]


def sample_agreement(
    teacher_values: np.ndarray, student_values: np.ndarray, ks: list[int]
) -> SampleAgreement:
    return SampleAgreement(
        ndcg={k: _ndcg(teacher_values, student_values, k) for k in ks},
        coverage={k: _coverage(teacher_values, student_values, k) for k in ks},
    )


def aggregate(
    samples: list[SampleAgreement], auc_value: float | None = None, mse_value: float | None = None
) -> MetricsReport:
    """Arithmetic means of the per-sample metrics, per cutoff."""
    if not samples:
        raise DataError("cannot aggregate an empty sample set")
    ks = sorted(samples[0].ndcg)
    return MetricsReport(
        ndcg_at={k: float(np.mean([s.ndcg[k] for s in samples])) for k in ks},
        coverage_at={k: float(np.mean([s.coverage[k] for s in samples])) for k in ks},
        auc=auc_value,
        mse=mse_value,
        n_samples=len(samples),
    )


def agreement_report(
    teacher_matrix: np.ndarray,
    student_matrix: np.ndarray,
    ks: list[int],
    auc_value: float | None = None,
    mse_value: float | None = None,
) -> MetricsReport:
    """Row-wise agreement between two attribution matrices, averaged."""
    teacher_matrix = np.asarray(teacher_matrix, dtype=np.float64)
    student_matrix = np.asarray(student_matrix, dtype=np.float64)
    if teacher_matrix.shape != student_matrix.shape:
        raise DataError(
            f"attribution matrices differ in shape: "
            f"{teacher_matrix.shape} vs {student_matrix.shape}"
        )
    samples = [
        sample_agreement(t, s, ks) for t, s in zip(teacher_matrix, student_matrix)
    ]
    return aggregate(samples, auc_value=auc_value, mse_value=mse_value)


def format_report(r: MetricsReport) -> str:
    """Flat ``name = value`` text, one metric per line."""
    lines = []
    for k in sorted(r.ndcg_at):
        lines.append(f"ndcg@{k} = {r.ndcg_at[k]!r}")
    for k in sorted(r.coverage_at):
        lines.append(f"avg_c@{k} = {r.coverage_at[k]!r}")
    if r.auc is not None:
        lines.append(f"auc = {r.auc!r}")
    if r.mse is not None:
        lines.append(f"mse = {r.mse!r}")
    lines.append(f"n_samples = {r.n_samples}")
    return "\n".join(lines) + "\n"


def write_report(path: str | Path, r: MetricsReport) -> None:
    Path(path).write_text(format_report(r), encoding="utf-8")


def parse_report(path: str | Path) -> dict[str, float]:
    """Read a report file back into a flat name -> value mapping."""
    out: dict[str, float] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        name, _, value = line.partition(" = ")
        if not value:
            raise DataError(f"malformed report line: {line!r}")
        out[name.strip()] = float(value)
    return out
