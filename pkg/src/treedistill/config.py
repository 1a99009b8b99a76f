"""Pipeline configuration: flat INI-style sections, human editable.

A config file drives the whole workflow.  ``default_config_text`` emits
a fully commented reference with every key at its default, which is also
what ``treedistill print-config`` prints.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .data import SplitSpec, Task
from .distill import DistillConfig
from .errors import ConfigError
from .gbdt import GbdtConfig
from .interpret import InterpretMethod, JointConfig
from .nn import Loss, Optimizer, TrainConfig


@dataclass(frozen=True)
class DatasetSection:
    format: str  # "csv" | "idx"
    path: str = ""
    label_column: str = "label"
    task: Task = Task.CLASSIFICATION
    binarize_threshold: float | None = None
    images_path: str = ""
    labels_path: str = ""
    digit: int = 0
    split: SplitSpec = SplitSpec(0.8, seed=0, shuffle=True)


@dataclass(frozen=True)
class InterpretSection:
    method: InterpretMethod = InterpretMethod.INDEPENDENT
    prediction_weight: float = 0.7
    ridge_penalty: float = 1e-6


@dataclass(frozen=True)
class EvalSection:
    k_list: tuple[int, ...] = (1, 3, 5, 10)
    split: str = "test"  # which half the explanation/evaluation runs on
    out_dir: str = "out"


@dataclass(frozen=True)
class PipelineConfig:
    dataset: DatasetSection
    gbdt: GbdtConfig
    distill: DistillConfig
    interpret: InterpretSection
    eval: EvalSection

    def joint_config(self) -> JointConfig:
        return JointConfig(self.interpret.prediction_weight, self.distill)


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    if raw == "":
        return default
    try:
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in raw.split(",") if part.strip())


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    fmt = _get(parser, "dataset", "format", str, "csv").lower()
    if fmt not in ("csv", "idx"):
        raise ConfigError(f"[dataset] format must be csv or idx, got {fmt!r}")
    task_raw = _get(parser, "dataset", "task", str, "classification").lower()
    try:
        task = Task(task_raw)
    except ValueError:
        raise ConfigError(f"[dataset] task must be classification or regression, got {task_raw!r}") from None
    dataset = DatasetSection(
        format=fmt,
        path=_get(parser, "dataset", "path", str, ""),
        label_column=_get(parser, "dataset", "label_column", str, "label"),
        task=task,
        binarize_threshold=_get(parser, "dataset", "binarize_threshold", float, None),
        images_path=_get(parser, "dataset", "images_path", str, ""),
        labels_path=_get(parser, "dataset", "labels_path", str, ""),
        digit=_get(parser, "dataset", "digit", int, 0),
        split=SplitSpec(
            train_fraction=_get(parser, "dataset", "train_fraction", float, 0.8),
            seed=_get(parser, "dataset", "split_seed", int, 0),
            shuffle=_get(parser, "dataset", "shuffle", bool, True),
        ),
    )

    gbdt = GbdtConfig(
        n_trees=_get(parser, "gbdt", "n_trees", int, 100),
        max_leaves=_get(parser, "gbdt", "max_leaves", int, 32),
        min_samples_leaf=_get(parser, "gbdt", "min_samples_leaf", int, 1),
        learning_rate=_get(parser, "gbdt", "learning_rate", float, 0.1),
        min_gain=_get(parser, "gbdt", "min_gain", float, 0.0),
        seed=_get(parser, "gbdt", "seed", int, 0),
    )

    def train_cfg(prefix: str, defaults: TrainConfig) -> TrainConfig:
        opt_raw = _get(parser, "distill", f"{prefix}_optimizer", str, defaults.optimizer.value)
        try:
            optimizer = Optimizer(opt_raw.lower())
        except ValueError:
            raise ConfigError(f"[distill] {prefix}_optimizer must be sgd or adam, got {opt_raw!r}") from None
        return TrainConfig(
            epochs=_get(parser, "distill", f"{prefix}_epochs", int, defaults.epochs),
            batch_size=_get(parser, "distill", f"{prefix}_batch_size", int, defaults.batch_size),
            learning_rate=_get(parser, "distill", f"{prefix}_learning_rate", float, defaults.learning_rate),
            optimizer=optimizer,
            seed=_get(parser, "distill", "seed", int, 0),
            loss=Loss.MSE,
        )

    base = DistillConfig()
    distill = DistillConfig(
        n_groups=_get(parser, "distill", "n_groups", int, base.n_groups),
        embedding_dim=_get(parser, "distill", "embedding_dim", int, base.embedding_dim),
        hidden_sizes=_get(parser, "distill", "hidden_sizes", _int_tuple, base.hidden_sizes),
        embed_train=train_cfg("embed", base.embed_train),
        distill_train=train_cfg("distill", base.distill_train),
        seed=_get(parser, "distill", "seed", int, 0),
    )

    method_raw = _get(parser, "interpret", "method", str, "independent").lower()
    try:
        method = InterpretMethod(method_raw)
    except ValueError:
        raise ConfigError(
            f"[interpret] method must be independent or joint, got {method_raw!r}"
        ) from None
    interpret = InterpretSection(
        method=method,
        prediction_weight=_get(parser, "interpret", "prediction_weight", float, 0.7),
        ridge_penalty=_get(parser, "interpret", "ridge_penalty", float, 1e-6),
    )

    k_list = _get(parser, "eval", "k_list", _int_tuple, (1, 3, 5, 10))
    if not k_list or any(k < 1 for k in k_list):
        raise ConfigError(f"[eval] k_list must be non-empty positive integers, got {k_list}")
    eval_split = _get(parser, "eval", "split", str, "test").lower()
    if eval_split not in ("train", "test"):
        raise ConfigError(f"[eval] split must be train or test, got {eval_split!r}")
    eval_section = EvalSection(
        k_list=k_list,
        split=eval_split,
        out_dir=_get(parser, "eval", "out_dir", str, "out"),
    )
    return PipelineConfig(dataset, gbdt, distill, interpret, eval_section)


def override_seed(cfg: PipelineConfig, seed: int) -> PipelineConfig:
    """Force every component seed to one value (the --seed flag)."""
    from dataclasses import replace

    return PipelineConfig(
        dataset=replace(cfg.dataset, split=replace(cfg.dataset.split, seed=seed)),
        gbdt=replace(cfg.gbdt, seed=seed),
        distill=replace(
            cfg.distill,
            seed=seed,
            embed_train=replace(cfg.distill.embed_train, seed=seed),
            distill_train=replace(cfg.distill.distill_train, seed=seed),
        ),
        interpret=cfg.interpret,
        eval=cfg.eval,
    )


def default_config_text() -> str:
    """The generated configuration reference: every key at its default."""
    return """\
# treedistill pipeline configuration (INI syntax; all keys optional
# unless marked required; values shown are the defaults)

[dataset]
format = csv                # csv | idx
path =                      # required for csv: the CSV file
label_column = label
task = classification       # classification | regression (csv only)
binarize_threshold =        # optional: labels >= threshold become class 1
images_path =               # required for idx: IDX3 image file
labels_path =               # required for idx: IDX1 label file
digit = 0                   # idx only: the one-vs-rest digit
train_fraction = 0.8
split_seed = 0
shuffle = true

[gbdt]
n_trees = 100
max_leaves = 32
min_samples_leaf = 20
learning_rate = 0.1
min_gain = 0.0
seed = 0

[distill]
n_groups = 5
embedding_dim = 20
hidden_sizes = 100,100      # structure-net hidden layers
embed_epochs = 60
embed_batch_size = 256
embed_learning_rate = 0.005
embed_optimizer = adam      # adam | sgd
distill_epochs = 1000
distill_batch_size = 4096
distill_learning_rate = 0.01
distill_optimizer = adam
seed = 0

[interpret]
method = independent        # independent | joint
prediction_weight = 0.7     # joint only: weight of the leaf-value view
ridge_penalty = 1e-6        # independent only: head regression ridge

[eval]
k_list = 1,3,5,10
split = test                # which half explanations are computed on
out_dir = out
"""
