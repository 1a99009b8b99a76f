"""Making the distilled student explain its own predictions.

Two routes to the same artifact, an affine head that maps the student's
concatenated group embeddings onto teacher-style attribution vectors:

* independent: distill first, then regress the head post hoc against the
  teacher's structure-based attributions (closed-form ridge by default);
* joint: learn the embeddings themselves under a two-view loss that mixes
  the leaf-value fit with the attribution fit, then distill structure
  nets exactly as in the plain pipeline.

Either way the prediction head and the interpretation head share every
parameter below them, so one forward pass serves both outputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .attribution import AttributionVector, attribute_ensemble_many
from .data import Dataset
from .distill import (
    DistillConfig,
    DistillReport,
    Gbdt2nnModel,
    GroupEmbeddingNet,
    TreeGroup,
    TwoViewHistory,
    assemble,
    distill_gbdt2nn,
    fit_structure_nets,
    group_leaf_onehots,
    group_leaf_value_sums,
    online_update,
    student_group_embeddings,
    student_from_payload,
    student_predict_many,
    student_to_payload,
    train_two_view_embeddings,
)
from .errors import DataError
from .gbdt import GbdtModel, predict_many
from .nn import TrainConfig
from .serialize import decode_array, encode_array, load_container, save_container

logger = logging.getLogger(__name__)

MIXED_MODEL_VERSION = 1


class InterpretMethod(Enum):
    INDEPENDENT = "independent"
    JOINT = "joint"


@dataclass
class InterpretationHead:
    """Affine map from concatenated group embeddings to attribution space."""

    weights: np.ndarray  # (k * embedding_dim, n_features)
    bias: np.ndarray  # (n_features,)


@dataclass
class MixedModel:
    """Two-output model: the student predictor plus its explanation head."""

    student: Gbdt2nnModel
    head: InterpretationHead
    method: InterpretMethod


@dataclass(frozen=True)
class JointConfig:
    """Two-view trade-off plus the distillation settings it builds on.

    ``prediction_weight`` scales the leaf-value view; its complement
    scales the attribution view.  1.0 reproduces the plain pipeline.
    """

    prediction_weight: float = 0.7
    distill: DistillConfig = DistillConfig()

    def __post_init__(self):
        if not (0.0 <= self.prediction_weight <= 1.0):
            raise DataError(
                f"prediction_weight must be in [0, 1], got {self.prediction_weight}"
            )


def student_feature_union(s: Gbdt2nnModel) -> list[int]:
    """Sorted union of the features any group's structure net consumes."""
    used: set[int] = set()
    for sg in s.groups:
        used.update(sg.net.selected_features)
    return sorted(used)


def concat_embeddings(s: Gbdt2nnModel, x: np.ndarray) -> np.ndarray:
    """Group embeddings concatenated in group order for one sample."""
    x = np.asarray(x, dtype=np.float64)
    return concat_embeddings_many(s, x.reshape(1, -1))[0]


def concat_embeddings_many(s: Gbdt2nnModel, X: np.ndarray) -> np.ndarray:
    return np.hstack(student_group_embeddings(s, X))


def ridge_fit(
    inputs: np.ndarray, targets: np.ndarray, penalty: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form affine least squares with an (intercept-free) ridge.

    Returns (weights, bias) minimizing ``|inputs @ weights + bias - targets|^2
    + penalty * |weights|^2``.  Singular normal equations fall back to a
    heavier ridge, with a warning.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    design = np.hstack([inputs, np.ones((inputs.shape[0], 1))])
    gram = design.T @ design
    penalty_matrix = np.eye(design.shape[1])
    penalty_matrix[-1, -1] = 0.0
    rhs = design.T @ targets
    try:
        beta = np.linalg.solve(gram + penalty * penalty_matrix, rhs)
    except np.linalg.LinAlgError:
        heavier = max(penalty * 1e6, 1e-3)
        logger.warning("normal equations singular; retrying with ridge %.1e", heavier)
        beta = np.linalg.solve(gram + heavier * penalty_matrix, rhs)
    return beta[:-1], beta[-1]


def fit_interpretation_head(
    s: Gbdt2nnModel,
    d: Dataset,
    teacher: GbdtModel,
    ridge_penalty: float = 1e-6,
) -> InterpretationHead:
    """Closed-form ridge fit of the affine head onto teacher attributions.

    Only features in the union of the groups' selected features are fitted;
    the rest cannot influence the student and keep exactly zero columns.
    """
    X = d.features
    used = student_feature_union(s)
    embeddings = concat_embeddings_many(s, X)
    target_values, _ = attribute_ensemble_many(teacher, X)

    weights = np.zeros((embeddings.shape[1], d.n_features))
    bias = np.zeros(d.n_features)
    if used:
        fitted_w, fitted_b = ridge_fit(embeddings, target_values[:, used], ridge_penalty)
        weights[:, used] = fitted_w
        bias[used] = fitted_b
    return InterpretationHead(weights, bias)


def explain(mm: MixedModel, x: np.ndarray) -> AttributionVector:
    """The student's own attribution vector for one sample (bias fixed at 0)."""
    values = explain_many(mm, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    return AttributionVector(values, 0.0)


def explain_many(mm: MixedModel, X: np.ndarray) -> np.ndarray:
    if mm.head is None:
        raise DataError("interpretation head has not been fitted")
    return concat_embeddings_many(mm.student, X) @ mm.head.weights + mm.head.bias


def predict_and_explain(mm: MixedModel, x: np.ndarray) -> tuple[float, AttributionVector]:
    """Both outputs from one shared forward pass over the group nets."""
    x = np.asarray(x, dtype=np.float64)
    group_embeddings = student_group_embeddings(mm.student, x.reshape(1, -1))
    raw = mm.student.base_score
    for sg, emb in zip(mm.student.groups, group_embeddings):
        raw += float(emb[0] @ sg.head_weights + sg.head_bias)
    concat = np.hstack(group_embeddings)
    values = (concat @ mm.head.weights + mm.head.bias)[0]
    return raw, AttributionVector(values, 0.0)


@dataclass
class JointFitResult:
    embed_nets: list[GroupEmbeddingNet]
    head: InterpretationHead
    history: TwoViewHistory
    feature_union: list[int]


def fit_joint(
    teacher: GbdtModel, groups: list[TreeGroup], d: Dataset, jc: JointConfig
) -> JointFitResult:
    """Learn group embeddings, prediction heads, and the interpretation head
    together under the two-view loss; structure distillation follows
    separately, exactly as in the plain pipeline."""
    X = d.features
    c = jc.distill
    onehots = [group_leaf_onehots(teacher, g, X) for g in groups]
    leaf_targets = [group_leaf_value_sums(teacher, g, X) for g in groups]
    used = sorted(set().union(*[set(g.selected_features) for g in groups]))
    target_values, _ = attribute_ensemble_many(teacher, X)
    attr_targets = target_values[:, used] if used else np.zeros((X.shape[0], 0))

    result = train_two_view_embeddings(
        onehots,
        leaf_targets,
        c.embedding_dim,
        c.embed_train,
        prediction_weight=jc.prediction_weight,
        attribution_targets=attr_targets,
    )
    width = len(groups) * c.embedding_dim
    weights = np.zeros((width, d.n_features))
    bias = np.zeros(d.n_features)
    if used:
        weights[:, used] = result.interp_weights
        bias[used] = result.interp_bias
    head = InterpretationHead(weights, bias)
    return JointFitResult(result.embed_nets, head, result.history, used)


def distill_independent(
    teacher: GbdtModel, d: Dataset, c: DistillConfig, epoch_callback=None
) -> tuple[MixedModel, DistillReport]:
    """Plain distillation followed by the post-hoc interpretation head."""
    student, report = distill_gbdt2nn(teacher, d, c, epoch_callback=epoch_callback)
    head = fit_interpretation_head(student, d, teacher)
    return MixedModel(student, head, InterpretMethod.INDEPENDENT), report


def distill_joint(
    teacher: GbdtModel, d: Dataset, jc: JointConfig, epoch_callback=None
) -> tuple[MixedModel, DistillReport]:
    """Joint two-view training, then the usual structure distillation."""
    from .distill import group_trees

    c = jc.distill
    groups = group_trees(teacher, c)
    joint = fit_joint(teacher, groups, d, jc)
    nets, structure_losses = fit_structure_nets(
        groups, joint.embed_nets, teacher, d, c, epoch_callback=epoch_callback
    )
    parts = [
        (g, net, e.head_weights, e.head_bias)
        for g, net, e in zip(groups, nets, joint.embed_nets)
    ]
    student = assemble(teacher, parts)
    fidelity = float(
        np.mean((student_predict_many(student, d.features) - predict_many(teacher, d.features)) ** 2)
    )
    report = DistillReport(joint.history.total, structure_losses, fidelity)
    return MixedModel(student, joint.head, InterpretMethod.JOINT), report


def online_update_mixed(mm: MixedModel, batch: Dataset, c: TrainConfig) -> MixedModel:
    """Fine-tune the student's structure nets; both heads stay untouched."""
    return MixedModel(online_update(mm.student, batch, c), mm.head, mm.method)


def save_mixed_model(path: str | Path, mm: MixedModel) -> None:
    payload = {
        "student": student_to_payload(mm.student),
        "head_weights": encode_array(mm.head.weights),
        "head_bias": encode_array(mm.head.bias),
        "method": mm.method.value,
    }
    save_container(path, "mixed-model", MIXED_MODEL_VERSION, payload)


def load_mixed_model(path: str | Path) -> MixedModel:
    payload = load_container(path, "mixed-model", MIXED_MODEL_VERSION)
    return MixedModel(
        student_from_payload(payload["student"]),
        InterpretationHead(
            decode_array(payload["head_weights"]), decode_array(payload["head_bias"])
        ),
        InterpretMethod(payload["method"]),
    )
