"""Distilling the boosted-tree teacher into grouped neural networks.

The pipeline has two stages.  First, for every (randomly partitioned)
group of trees, a linear embedding layer plus a scalar head is trained
so that the head applied to the embedding of the group's concatenated
one-hot leaf indicators reproduces the group's summed leaf values.
Second, a small MLP over the group's tree-selected features is fitted
to those frozen embeddings, replacing the tree-structure lookup.  The
student's raw score is the base score plus the sum of the group heads
applied to the structure-net outputs.

The embedding stage is written as a two-view trainer: a prediction view
(leaf-value fit) and an optional attribution view used by the joint
interpretation method.  With prediction weight 1.0 the attribution view
is skipped entirely, which makes the plain distillation path and the
joint path bit-identical in that limit.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, Task
from .errors import DataError, NumericalError
from .gbdt import (
    GbdtModel,
    Objective,
    group_used_features,
    leaf_onehots,
    leaf_predictions,
    predict_many,
)
from .mathutil import sigmoid
from .nn import (
    Activation,
    AdamState,
    Layer,
    Loss,
    Mlp,
    Optimizer,
    TrainConfig,
    _forward_cached,
    forward_many,
    init_mlp,
    loss_and_gradients,
    loss_value,
    mlp_from_payload,
    mlp_to_payload,
    sgd_step,
)
from .serialize import decode_array, encode_array, load_container, save_container

logger = logging.getLogger(__name__)

STUDENT_MODEL_VERSION = 1


def derive_seed(*parts: int) -> int:
    """Stable integer seed derived from a tuple of integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass(frozen=True)
class TreeGroup:
    """A contiguous chunk of the shuffled tree list plus its feature/leaf dims."""

    tree_indices: list[int]
    selected_features: list[int]
    total_leaf_dim: int


@dataclass
class GroupEmbeddingNet:
    """Linear map from concatenated leaf one-hots to the dense embedding,
    plus the scalar head that reproduces the group's summed leaf values."""

    embed: Mlp
    head_weights: np.ndarray
    head_bias: float


@dataclass
class GroupDistillNet:
    """MLP from the group's tree-selected raw features to the embedding."""

    net: Mlp
    selected_features: list[int]


@dataclass
class StudentGroup:
    group: TreeGroup
    net: GroupDistillNet
    head_weights: np.ndarray
    head_bias: float


@dataclass
class Gbdt2nnModel:
    """The assembled student: raw score = base_score + sum of group heads."""

    groups: list[StudentGroup]
    base_score: float
    learning_rate: float
    task: Task
    objective: Objective


@dataclass(frozen=True)
class DistillConfig:
    n_groups: int = 5
    embedding_dim: int = 20
    hidden_sizes: tuple[int, ...] = (100, 100)
    embed_train: TrainConfig = TrainConfig(
        epochs=60, batch_size=256, learning_rate=5e-3, optimizer=Optimizer.ADAM, loss=Loss.MSE
    )
    # Structure targets are piecewise constant; big batches and many epochs
    # fit them much more tightly than small-batch schedules.
    distill_train: TrainConfig = TrainConfig(
        epochs=1000, batch_size=4096, learning_rate=1e-2, optimizer=Optimizer.ADAM, loss=Loss.MSE
    )
    seed: int = 0

    def __post_init__(self):
        if self.n_groups < 1:
            raise DataError(f"n_groups must be >= 1, got {self.n_groups}")
        if self.embedding_dim < 1:
            raise DataError(f"embedding_dim must be >= 1, got {self.embedding_dim}")


def group_trees(m: GbdtModel, c: DistillConfig) -> list[TreeGroup]:
    """Equal random partition of the tree indices into n_groups chunks."""
    n_trees = m.n_trees
    if c.n_groups > n_trees:
        raise DataError(f"cannot form {c.n_groups} groups from {n_trees} trees")
    order = np.random.default_rng(c.seed).permutation(n_trees)
    groups = []
    for chunk in np.array_split(order, c.n_groups):
        indices = [int(i) for i in chunk]
        trees = [m.trees[i] for i in indices]
        selected = group_used_features(trees) if any(t.used_features for t in trees) else []
        total_leaf_dim = sum(t.n_leaves for t in trees)
        groups.append(TreeGroup(indices, selected, total_leaf_dim))
    return groups


def group_leaf_onehots(m: GbdtModel, g: TreeGroup, X: np.ndarray) -> np.ndarray:
    """Concatenated one-hot leaf indicators of the group's trees, (n, total_leaf_dim)."""
    return np.hstack([leaf_onehots(m.trees[i], X) for i in g.tree_indices])


def group_leaf_value_sums(m: GbdtModel, g: TreeGroup, X: np.ndarray) -> np.ndarray:
    """Embedding-head regression target: learning-rate-scaled sum of the
    group's leaf predictions, so group heads add up to the teacher's raw
    score (minus base score)."""
    total = np.zeros(X.shape[0], dtype=np.float64)
    for i in g.tree_indices:
        total += leaf_predictions(m.trees[i], X)
    return m.learning_rate * total


@dataclass
class TwoViewHistory:
    """Per-epoch losses, plus per-step head-gradient magnitudes."""

    total: list[float] = field(default_factory=list)
    prediction: list[float] = field(default_factory=list)
    attribution: list[float] = field(default_factory=list)
    prediction_head_grad_max: list[float] = field(default_factory=list)
    attribution_head_grad_max: list[float] = field(default_factory=list)


@dataclass
class TwoViewResult:
    embed_nets: list[GroupEmbeddingNet]
    interp_weights: np.ndarray | None
    interp_bias: np.ndarray | None
    history: TwoViewHistory


def train_two_view_embeddings(
    onehots: list[np.ndarray],
    leaf_sum_targets: list[np.ndarray],
    embedding_dim: int,
    c: TrainConfig,
    prediction_weight: float = 1.0,
    attribution_targets: np.ndarray | None = None,
) -> TwoViewResult:
    """Train per-group embeddings and heads under the two-view loss.

    The loss is ``pw * mean_over_groups(prediction MSE)`` plus
    ``(1 - pw) * attribution MSE`` where the attribution view regresses an
    affine head over the concatenated embeddings onto teacher attributions.
    A view with zero weight is skipped outright, so ``pw == 1.0`` with no
    attribution targets is exactly the plain embedding trainer.
    """
    if not (0.0 <= prediction_weight <= 1.0):
        raise DataError(f"prediction weight must be in [0, 1], got {prediction_weight}")
    if attribution_targets is not None and attribution_targets.shape[1] == 0:
        # No attributable features: the attribution view is identically zero.
        attribution_targets = None
    elif prediction_weight < 1.0 and attribution_targets is None:
        raise DataError("attribution view has weight but no targets were given")
    if c.epochs < 1:
        raise DataError("embedding training requires at least one epoch")
    k = len(onehots)
    n = onehots[0].shape[0]
    for hot, target in zip(onehots, leaf_sum_targets):
        if hot.shape[0] != n or target.shape[0] != n:
            raise DataError("all groups must cover the same samples")

    # A view whose weight is exactly zero is skipped outright (its parameters
    # stay at their seeded initial values), so the boundary weights reproduce
    # the single-view trainers bit for bit.
    use_pred = prediction_weight > 0.0
    have_attr = attribution_targets is not None
    use_attr = prediction_weight < 1.0 and have_attr

    rng = np.random.default_rng(np.random.SeedSequence([c.seed, 0]))
    embed_w, embed_b, head_w, head_b = [], [], [], []
    for hot in onehots:
        dim = hot.shape[1]
        bound = math.sqrt(6.0 / (dim + embedding_dim))
        embed_w.append(rng.uniform(-bound, bound, size=(dim, embedding_dim)))
        embed_b.append(np.zeros(embedding_dim))
        bound = math.sqrt(6.0 / (embedding_dim + 1))
        head_w.append(rng.uniform(-bound, bound, size=embedding_dim))
        head_b.append(np.zeros(1))
    params = []
    for j in range(k):
        params.extend([embed_w[j], embed_b[j], head_w[j], head_b[j]])

    interp_w = interp_b = None
    if have_attr:
        # Drawn from a separate stream so the batch order below stays
        # identical whether or not an attribution head exists.
        rng_interp = np.random.default_rng(np.random.SeedSequence([c.seed, 1]))
        n_targets = attribution_targets.shape[1]
        bound = math.sqrt(6.0 / (k * embedding_dim + n_targets))
        interp_w = rng_interp.uniform(-bound, bound, size=(k * embedding_dim, n_targets))
        interp_b = np.zeros(n_targets)
        params.extend([interp_w, interp_b])

    adam = AdamState(params) if c.optimizer is Optimizer.ADAM else None
    history = TwoViewHistory()
    for epoch in range(c.epochs):
        order = rng.permutation(n)
        sums = {"total": 0.0, "prediction": 0.0, "attribution": 0.0}
        for start in range(0, n, c.batch_size):
            batch = order[start : start + c.batch_size]
            n_b = batch.shape[0]
            embeddings = [onehots[j][batch] @ embed_w[j] + embed_b[j] for j in range(k)]
            grads_embed = [np.zeros_like(e) for e in embeddings]
            grads = []

            pred_loss = 0.0
            pred_grad_max = 0.0
            pred_grads = []
            if use_pred:
                for j in range(k):
                    pred = embeddings[j] @ head_w[j] + head_b[j][0]
                    err = pred - leaf_sum_targets[j][batch]
                    pred_loss += float(np.mean(err**2))
                    d_pred = prediction_weight * (2.0 / (k * n_b)) * err
                    gw = embeddings[j].T @ d_pred
                    gb = np.array([d_pred.sum()])
                    pred_grads.append((gw, gb))
                    pred_grad_max = max(pred_grad_max, float(np.abs(gw).max()), float(np.abs(gb).max()))
                    grads_embed[j] += np.outer(d_pred, head_w[j])
                pred_loss /= k

            attr_loss = 0.0
            attr_grad_max = 0.0
            attr_grads = None
            if use_attr:
                concat = np.hstack(embeddings)
                fitted = concat @ interp_w + interp_b
                err = fitted - attribution_targets[batch]
                attr_loss = float(np.mean(err**2))
                d_fit = (1.0 - prediction_weight) * (2.0 / err.size) * err
                gw2 = concat.T @ d_fit
                gb2 = d_fit.sum(axis=0)
                attr_grads = (gw2, gb2)
                attr_grad_max = max(float(np.abs(gw2).max()), float(np.abs(gb2).max()))
                d_concat = d_fit @ interp_w.T
                for j in range(k):
                    grads_embed[j] += d_concat[:, j * embedding_dim : (j + 1) * embedding_dim]

            for j in range(k):
                gw = onehots[j][batch].T @ grads_embed[j]
                gb = grads_embed[j].sum(axis=0)
                if use_pred:
                    grads.extend([gw, gb, pred_grads[j][0], pred_grads[j][1]])
                else:
                    grads.extend([gw, gb, np.zeros_like(head_w[j]), np.zeros(1)])
            if have_attr:
                if use_attr:
                    grads.extend([attr_grads[0], attr_grads[1]])
                else:
                    grads.extend([np.zeros_like(interp_w), np.zeros_like(interp_b)])

            total = prediction_weight * pred_loss + (1.0 - prediction_weight) * attr_loss
            if not np.isfinite(total):
                raise NumericalError(f"embedding loss became non-finite at epoch {epoch + 1}")
            if adam is not None:
                adam.step(params, grads, c)
            else:
                sgd_step(params, grads, c)
            sums["total"] += total * n_b
            sums["prediction"] += pred_loss * n_b
            sums["attribution"] += attr_loss * n_b
            history.prediction_head_grad_max.append(pred_grad_max)
            history.attribution_head_grad_max.append(attr_grad_max)
        history.total.append(sums["total"] / n)
        history.prediction.append(sums["prediction"] / n)
        history.attribution.append(sums["attribution"] / n)

    nets = []
    for j in range(k):
        embed = Mlp([Layer(embed_w[j], embed_b[j], Activation.IDENTITY)])
        nets.append(GroupEmbeddingNet(embed, head_w[j], float(head_b[j][0])))
    return TwoViewResult(nets, interp_w, interp_b, history)


def fit_embeddings(
    m: GbdtModel, groups: list[TreeGroup], d: Dataset, c: DistillConfig
) -> tuple[list[GroupEmbeddingNet], TwoViewHistory]:
    """Baseline embedding stage: leaf-value view only, all groups at once."""
    X = d.features
    onehots = [group_leaf_onehots(m, g, X) for g in groups]
    targets = [group_leaf_value_sums(m, g, X) for g in groups]
    result = train_two_view_embeddings(
        onehots, targets, c.embedding_dim, c.embed_train, prediction_weight=1.0
    )
    return result.embed_nets, result.history


def fit_group_embedding(m: GbdtModel, g: TreeGroup, d: Dataset, c: DistillConfig) -> GroupEmbeddingNet:
    """Embedding stage for a single group (convenience wrapper)."""
    if not g.tree_indices:
        raise DataError("cannot fit an embedding for an empty tree group")
    nets, _ = fit_embeddings(m, [g], d, c)
    return nets[0]


def fit_group_structure(
    g: TreeGroup, e: GroupEmbeddingNet, m: GbdtModel, d: Dataset, c: DistillConfig
) -> GroupDistillNet:
    """Distill one group's tree-structure function into an MLP."""
    nets, _ = fit_structure_nets([g], [e], m, d, c)
    return nets[0]


def fit_structure_nets(
    groups: list[TreeGroup],
    embed_nets: list[GroupEmbeddingNet],
    m: GbdtModel,
    d: Dataset,
    c: DistillConfig,
    epoch_callback=None,
) -> tuple[list[GroupDistillNet], list[list[float]]]:
    """Train every group's structure net against its frozen embedding targets.

    Groups advance epoch by epoch in lockstep; after each epoch an optional
    ``epoch_callback(epoch, provisional_student)`` sees the student as it
    stands (read-only: the nets keep training in place).  Returns the nets
    and per-group per-epoch training losses.
    """
    if len(groups) != len(embed_nets):
        raise DataError(f"{len(groups)} groups but {len(embed_nets)} embedding nets")
    X = d.features
    cfg = c.distill_train
    if cfg.epochs < 1:
        raise DataError("structure distillation requires at least one epoch")
    nets, targets, inputs, states, rngs = [], [], [], [], []
    for gi, (g, e) in enumerate(zip(groups, embed_nets)):
        if not g.selected_features:
            logger.warning(
                "tree group %d uses no features; its structure net is a learned constant", gi
            )
        onehots = group_leaf_onehots(m, g, X)
        targets.append(forward_many(e.embed, onehots))
        inputs.append(X[:, g.selected_features])
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, gi]))
        dims = [len(g.selected_features), *c.hidden_sizes, c.embedding_dim]
        acts = [Activation.RELU] * len(c.hidden_sizes) + [Activation.IDENTITY]
        net = init_mlp(dims, acts, rng)
        nets.append(net)
        params = [a for layer in net.layers for a in (layer.weights, layer.bias)]
        states.append(AdamState(params) if cfg.optimizer is Optimizer.ADAM else None)
        rngs.append(rng)

    n = X.shape[0]
    losses: list[list[float]] = [[] for _ in groups]
    for epoch in range(cfg.epochs):
        for gi, net in enumerate(nets):
            params = [a for layer in net.layers for a in (layer.weights, layer.bias)]
            order = rngs[gi].permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                value, grads = loss_and_gradients(net, inputs[gi][batch], targets[gi][batch], Loss.MSE)
                if not np.isfinite(value):
                    raise NumericalError(
                        f"structure distillation diverged for group {gi} at epoch {epoch + 1}"
                    )
                flat = [g_ for pair in grads for g_ in pair]
                if states[gi] is not None:
                    states[gi].step(params, flat, cfg)
                else:
                    sgd_step(params, flat, cfg)
                total += value * batch.shape[0]
            losses[gi].append(total / n)
        if epoch_callback is not None:
            parts = [
                (g, GroupDistillNet(net, list(g.selected_features)), e.head_weights, e.head_bias)
                for g, net, e in zip(groups, nets, embed_nets)
            ]
            epoch_callback(epoch, assemble(m, parts))
    return (
        [GroupDistillNet(net, list(g.selected_features)) for net, g in zip(nets, groups)],
        losses,
    )


def assemble(
    m: GbdtModel, parts: list[tuple[TreeGroup, GroupDistillNet, np.ndarray, float]]
) -> Gbdt2nnModel:
    """Combine per-group structure nets and heads into the student model."""
    if not parts:
        raise DataError("cannot assemble a student from zero groups")
    groups = []
    for group, net, head_weights, head_bias in parts:
        if net.net.output_dim != head_weights.shape[0]:
            raise DataError(
                f"head width {head_weights.shape[0]} does not match embedding "
                f"width {net.net.output_dim}"
            )
        groups.append(StudentGroup(group, net, np.asarray(head_weights, dtype=np.float64), float(head_bias)))
    return Gbdt2nnModel(groups, m.base_score, m.learning_rate, m.task, m.objective)


def student_group_embeddings(s: Gbdt2nnModel, X: np.ndarray) -> list[np.ndarray]:
    """Each group's structure-net output for a sample matrix."""
    X = np.asarray(X, dtype=np.float64)
    return [forward_many(sg.net.net, X[:, sg.net.selected_features]) for sg in s.groups]


def student_predict_many(s: Gbdt2nnModel, X: np.ndarray) -> np.ndarray:
    """Raw student scores for a sample matrix."""
    raw = np.full(np.asarray(X).shape[0], s.base_score, dtype=np.float64)
    for sg, emb in zip(s.groups, student_group_embeddings(s, X)):
        raw += emb @ sg.head_weights + sg.head_bias
    return raw


def student_predict(s: Gbdt2nnModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    needed = max((max(sg.net.selected_features, default=-1) for sg in s.groups), default=-1)
    if x.shape[0] <= needed:
        raise DataError(f"sample has {x.shape[0]} features but the student uses feature {needed}")
    return float(student_predict_many(s, x.reshape(1, -1))[0])


def student_predict_proba(s: Gbdt2nnModel, x: np.ndarray) -> float:
    return float(sigmoid(student_predict(s, x)))


def student_predict_proba_many(s: Gbdt2nnModel, X: np.ndarray) -> np.ndarray:
    return sigmoid(student_predict_many(s, X))


@dataclass
class DistillReport:
    embedding_losses: list[float]
    structure_losses: list[list[float]]
    fidelity_train_mse: float


def distill_gbdt2nn(
    m: GbdtModel, d: Dataset, c: DistillConfig, epoch_callback=None
) -> tuple[Gbdt2nnModel, DistillReport]:
    """Full baseline pipeline: group, embed, distill structure, assemble."""
    groups = group_trees(m, c)
    embed_nets, embed_history = fit_embeddings(m, groups, d, c)
    nets, structure_losses = fit_structure_nets(
        groups, embed_nets, m, d, c, epoch_callback=epoch_callback
    )
    parts = [
        (g, net, e.head_weights, e.head_bias) for g, net, e in zip(groups, nets, embed_nets)
    ]
    student = assemble(m, parts)
    fidelity = float(np.mean((student_predict_many(student, d.features) - predict_many(m, d.features)) ** 2))
    return student, DistillReport(embed_history.total, structure_losses, fidelity)


def online_update(s: Gbdt2nnModel, batch: Dataset, c: TrainConfig) -> Gbdt2nnModel:
    """Fine-tune only the structure nets on a new batch, heads frozen.

    Returns a new model; the input model is never mutated.  A zero-epoch
    config returns an untouched copy.
    """
    if batch.task is not s.task:
        raise DataError(f"batch task {batch.task} does not match model task {s.task}")
    updated = copy.deepcopy(s)
    if c.epochs == 0:
        return updated
    X, y = batch.features, batch.labels
    n = X.shape[0]
    task_loss = Loss.BCE_WITH_LOGITS if s.task is Task.CLASSIFICATION else Loss.MSE

    nets = [sg.net.net for sg in updated.groups]
    inputs = [X[:, sg.net.selected_features] for sg in updated.groups]
    params = [a for net in nets for layer in net.layers for a in (layer.weights, layer.bias)]
    adam = AdamState(params) if c.optimizer is Optimizer.ADAM else None
    rng = np.random.default_rng(c.seed)
    for epoch in range(c.epochs):
        order = rng.permutation(n)
        for start in range(0, n, c.batch_size):
            rows = order[start : start + c.batch_size]
            caches = [_forward_cached(net, inp[rows]) for net, inp in zip(nets, inputs)]
            raw = np.full(rows.shape[0], updated.base_score, dtype=np.float64)
            for sg, (_, post) in zip(updated.groups, caches):
                raw += post[-1] @ sg.head_weights + sg.head_bias
            value = loss_value(task_loss, raw.reshape(-1, 1), y[rows].reshape(-1, 1))
            if not np.isfinite(value):
                raise NumericalError(f"online update diverged at epoch {epoch + 1}")
            if task_loss is Loss.MSE:
                d_raw = 2.0 * (raw - y[rows]) / rows.shape[0]
            else:
                d_raw = (sigmoid(raw) - y[rows]) / rows.shape[0]
            grads = []
            for sg, net, (pre, post) in zip(updated.groups, nets, caches):
                grad_out = np.outer(d_raw, sg.head_weights)
                grads.extend(_backprop_only(net, pre, post, grad_out))
            if adam is not None:
                adam.step(params, grads, c)
            else:
                sgd_step(params, grads, c)
    return updated


def _backprop_only(net: Mlp, pre, post, grad_out) -> list[np.ndarray]:
    """Layer-parameter gradients given the gradient at the network output."""
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        grad_z = grad_out * (pre[i] > 0.0) if layer.activation is Activation.RELU else grad_out
        grads[i] = (post[i].T @ grad_z, grad_z.sum(axis=0))
        if i > 0:
            grad_out = grad_z @ layer.weights.T
    return [g for pair in grads for g in pair]


def student_task_loss(s: Gbdt2nnModel, d: Dataset) -> float:
    """Task loss of the student on a dataset (BCE for classification, MSE otherwise)."""
    raw = student_predict_many(s, d.features)
    loss = Loss.BCE_WITH_LOGITS if s.task is Task.CLASSIFICATION else Loss.MSE
    return loss_value(loss, raw.reshape(-1, 1), d.labels.reshape(-1, 1))


def student_to_payload(s: Gbdt2nnModel) -> dict:
    return {
        "groups": [
            {
                "tree_indices": sg.group.tree_indices,
                "selected_features": sg.group.selected_features,
                "total_leaf_dim": sg.group.total_leaf_dim,
                "net": mlp_to_payload(sg.net.net),
                "head_weights": encode_array(sg.head_weights),
                "head_bias": encode_array(np.array([sg.head_bias])),
            }
            for sg in s.groups
        ],
        "base_score": encode_array(np.array([s.base_score])),
        "learning_rate": encode_array(np.array([s.learning_rate])),
        "task": s.task.value,
        "objective": s.objective.value,
    }


def student_from_payload(payload: dict) -> Gbdt2nnModel:
    groups = []
    for gp in payload["groups"]:
        group = TreeGroup(
            [int(i) for i in gp["tree_indices"]],
            [int(i) for i in gp["selected_features"]],
            int(gp["total_leaf_dim"]),
        )
        net = GroupDistillNet(mlp_from_payload(gp["net"]), list(group.selected_features))
        groups.append(
            StudentGroup(
                group,
                net,
                decode_array(gp["head_weights"]),
                float(decode_array(gp["head_bias"])[0]),
            )
        )
    return Gbdt2nnModel(
        groups,
        float(decode_array(payload["base_score"])[0]),
        float(decode_array(payload["learning_rate"])[0]),
        Task(payload["task"]),
        Objective(payload["objective"]),
    )


def save_student(path: str | Path, s: Gbdt2nnModel) -> None:
    save_container(path, "student-model", STUDENT_MODEL_VERSION, student_to_payload(s))


def load_student(path: str | Path) -> Gbdt2nnModel:
    return student_from_payload(load_container(path, "student-model", STUDENT_MODEL_VERSION))
