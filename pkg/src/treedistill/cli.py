"""Command-line pipeline: train-gbdt, distill, explain, evaluate, visualize.

Subcommands hand work off through files only; every output is
byte-deterministic for a fixed config and seed.  Logs go to stderr,
machine-readable artifacts to files, and each subcommand prints exactly
one JSON summary line on stdout.  Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .attribution import attribute_ensemble_many, export_attributions, load_attributions
from .config import PipelineConfig, default_config_text, load_config, override_seed
from .data import Dataset, Task, binarize_label, load_csv, load_idx_binary_digit, split
from .distill import student_predict_many
from .errors import ConfigError, DataError, NumericalError
from .gbdt import fit_gbdt, load_gbdt, predict_many, save_gbdt
from .interpret import (
    InterpretMethod,
    distill_independent,
    distill_joint,
    explain_many,
    load_mixed_model,
    save_mixed_model,
)
from .visualize import importance_mask, importance_overlay, write_pgm

logger = logging.getLogger("treedistill")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems map to exit code 1, not argparse's 2
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="treedistill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="pipeline config file (INI)")
        p.add_argument("--out-dir", default=None, help="output directory (default: [eval] out_dir)")
        p.add_argument("--seed", type=int, default=None, help="override every component seed")

    p = sub.add_parser("train-gbdt", help="train the boosted-tree teacher")
    add_common(p)

    p = sub.add_parser("distill", help="distill the teacher into the student")
    add_common(p)
    p.add_argument("--teacher", default=None, help="teacher model file (default: <out>/teacher.model)")

    p = sub.add_parser("explain", help="write teacher and student attribution CSVs")
    add_common(p)
    p.add_argument("--teacher", default=None)
    p.add_argument("--student", default=None, help="student model file (default: <out>/student.model)")
    p.add_argument("--split", choices=("train", "test"), default=None)

    p = sub.add_parser("evaluate", help="score student explanations against the teacher's")
    add_common(p, config_required=False)
    p.add_argument("--teacher-csv", required=True)
    p.add_argument("--student-csv", required=True)
    p.add_argument("--k-list", default=None, help="comma-separated cutoffs, e.g. 1,3,5,10")

    p = sub.add_parser("visualize", help="render top-k pixel importances as PGM images")
    add_common(p)
    p.add_argument("--attributions", required=True, help="attribution CSV to visualize")
    p.add_argument("--sample", type=int, required=True, help="row index within the split")
    p.add_argument("--k", type=int, required=True, help="number of top pixels")
    p.add_argument("--split", choices=("train", "test"), default=None)

    sub.add_parser("print-config", help="print the default configuration reference")
    return parser


def _prepare(args) -> tuple[PipelineConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = override_seed(cfg, args.seed)
    out_dir = Path(args.out_dir if args.out_dir is not None else cfg.eval.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, out_dir


def _load_full_dataset(cfg: PipelineConfig) -> Dataset:
    ds = cfg.dataset
    if ds.format == "csv":
        if not ds.path:
            raise ConfigError("[dataset] path is required for csv format")
        if ds.binarize_threshold is not None:
            raw = load_csv(ds.path, ds.label_column, Task.REGRESSION)
            return binarize_label(raw, ds.binarize_threshold)
        return load_csv(ds.path, ds.label_column, ds.task)
    if not ds.images_path or not ds.labels_path:
        raise ConfigError("[dataset] images_path and labels_path are required for idx format")
    return load_idx_binary_digit(ds.images_path, ds.labels_path, ds.digit)


def _train_test(cfg: PipelineConfig) -> tuple[Dataset, Dataset]:
    return split(_load_full_dataset(cfg), cfg.dataset.split)


def _pick_split(cfg: PipelineConfig, flag: str | None, train: Dataset, test: Dataset) -> Dataset:
    which = flag if flag is not None else cfg.eval.split
    return train if which == "train" else test


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _cmd_train_gbdt(args) -> int:
    cfg, out_dir = _prepare(args)
    train, _ = _train_test(cfg)
    logger.info("training teacher on %d samples, %d features", train.n_samples, train.n_features)
    model = fit_gbdt(train, cfg.gbdt)
    model_path = out_dir / "teacher.model"
    save_gbdt(model_path, model, cfg.gbdt)
    log_path = out_dir / "gbdt_training_log.csv"
    lines = ["round,train_loss"]
    lines += [f"{i},{loss!r}" for i, loss in enumerate(model.round_losses or [], start=1)]
    log_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _emit(
        {
            "command": "train-gbdt",
            "model": str(model_path),
            "training_log": str(log_path),
            "n_trees": model.n_trees,
            "final_train_loss": (model.round_losses or [None])[-1],
        }
    )
    return EXIT_OK


def _cmd_distill(args) -> int:
    cfg, out_dir = _prepare(args)
    teacher_path = Path(args.teacher) if args.teacher else out_dir / "teacher.model"
    teacher = load_gbdt(teacher_path)
    train, test = _train_test(cfg)

    eval_curve: list[float] = []
    eval_metric = "auc" if train.task is Task.CLASSIFICATION else "mse"

    def track(epoch, student):
        raw = student_predict_many(student, test.features)
        if eval_metric == "auc":
            eval_curve.append(metrics.auc(test.labels, raw))
        else:
            eval_curve.append(metrics.mse(test.labels, raw))

    if cfg.interpret.method is InterpretMethod.JOINT:
        mixed, report = distill_joint(teacher, train, cfg.joint_config(), epoch_callback=track)
    else:
        mixed, report = distill_independent(teacher, train, cfg.distill, epoch_callback=track)

    student_path = out_dir / "student.model"
    save_mixed_model(student_path, mixed)

    curves_path = out_dir / "training_curves.csv"
    rows = ["epoch,split,metric,value"]
    for epoch, value in enumerate(report.embedding_losses, start=1):
        rows.append(f"{epoch},train,embedding_loss,{value!r}")
    for gi, losses in enumerate(report.structure_losses):
        for epoch, value in enumerate(losses, start=1):
            rows.append(f"{epoch},train,structure_loss_group{gi},{value!r}")
    for epoch, value in enumerate(eval_curve, start=1):
        rows.append(f"{epoch},test,{eval_metric},{value!r}")
    curves_path.write_text("\n".join(rows) + "\n", encoding="utf-8")

    report_path = out_dir / "distill_report.txt"
    lines = [
        f"method = {mixed.method.value}",
        f"fidelity_train_raw_mse = {report.fidelity_train_mse!r}",
        f"final_embedding_loss = {report.embedding_losses[-1]!r}",
    ]
    for gi, losses in enumerate(report.structure_losses):
        lines.append(f"final_structure_loss_group{gi} = {losses[-1]!r}")
    report_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    logger.info("fidelity (student vs teacher raw MSE, train split): %g", report.fidelity_train_mse)
    _emit(
        {
            "command": "distill",
            "student": str(student_path),
            "curves": str(curves_path),
            "report": str(report_path),
            "method": mixed.method.value,
            "fidelity_train_raw_mse": report.fidelity_train_mse,
            "final_embedding_loss": report.embedding_losses[-1],
        }
    )
    return EXIT_OK


def _cmd_explain(args) -> int:
    cfg, out_dir = _prepare(args)
    teacher_path = Path(args.teacher) if args.teacher else out_dir / "teacher.model"
    student_path = Path(args.student) if args.student else out_dir / "student.model"
    teacher = load_gbdt(teacher_path)
    mixed = load_mixed_model(student_path)
    train, test = _train_test(cfg)
    part = _pick_split(cfg, args.split, train, test)

    teacher_values, teacher_bias = attribute_ensemble_many(teacher, part.features)
    teacher_csv = out_dir / "teacher_attributions.csv"
    biases = np.full(part.n_samples, teacher_bias)
    export_attributions(teacher_csv, part.feature_names, teacher_values, biases)

    raw = predict_many(teacher, part.features)
    completeness = float(np.abs(biases + teacher_values.sum(axis=1) - raw).max())

    student_values = explain_many(mixed, part.features)
    student_csv = out_dir / f"student_attributions_{mixed.method.value}.csv"
    export_attributions(student_csv, part.feature_names, student_values, np.zeros(part.n_samples))

    _emit(
        {
            "command": "explain",
            "teacher_csv": str(teacher_csv),
            "student_csv": str(student_csv),
            "method": mixed.method.value,
            "rows": part.n_samples,
            "teacher_completeness_max_error": completeness,
        }
    )
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    if args.config:
        cfg, out_dir = _prepare(args)
        k_list = cfg.eval.k_list
    else:
        out_dir = Path(args.out_dir or "out")
        out_dir.mkdir(parents=True, exist_ok=True)
        k_list = (1, 3, 5, 10)
    if args.k_list:
        try:
            k_list = tuple(int(part) for part in args.k_list.split(",") if part.strip())
        except ValueError:
            raise ConfigError(f"--k-list: cannot parse {args.k_list!r}") from None
        if not k_list or any(k < 1 for k in k_list):
            raise ConfigError(f"--k-list must be positive integers, got {args.k_list!r}")

    teacher_names, teacher_values, _ = load_attributions(args.teacher_csv)
    student_names, student_values, _ = load_attributions(args.student_csv)
    if teacher_names != student_names:
        raise DataError("attribution CSVs have different feature columns")
    report = metrics.agreement_report(teacher_values, student_values, list(k_list))
    report_path = out_dir / "metrics_report.txt"
    metrics.write_report(report_path, report)
    summary = {
        "command": "evaluate",
        "report": str(report_path),
        "n_samples": report.n_samples,
    }
    for k in sorted(report.ndcg_at):
        summary[f"ndcg@{k}"] = report.ndcg_at[k]
    for k in sorted(report.coverage_at):
        summary[f"avg_c@{k}"] = report.coverage_at[k]
    _emit(summary)
    return EXIT_OK


def _cmd_visualize(args) -> int:
    cfg, out_dir = _prepare(args)
    if args.k < 1:
        raise ConfigError(f"--k must be >= 1, got {args.k}")
    _, values, _ = load_attributions(args.attributions)
    train, test = _train_test(cfg)
    part = _pick_split(cfg, args.split, train, test)
    if values.shape[0] != part.n_samples:
        raise DataError(
            f"attribution CSV has {values.shape[0]} rows but the {args.split or cfg.eval.split} "
            f"split has {part.n_samples} samples"
        )
    if not (0 <= args.sample < part.n_samples):
        raise DataError(f"sample index {args.sample} outside 0..{part.n_samples - 1}")

    attr = values[args.sample]
    pixels = part.features[args.sample]
    mask = importance_mask(attr, part.n_features, args.k)
    overlay = importance_overlay(attr, pixels, args.k)
    mask_path = out_dir / f"sample{args.sample}_top{args.k}_mask.pgm"
    overlay_path = out_dir / f"sample{args.sample}_top{args.k}_overlay.pgm"
    write_pgm(mask_path, mask)
    write_pgm(overlay_path, overlay)
    white = int(np.sum(mask == 255))
    if white < args.k:
        logger.info("drawn %d pixels: only %d attributions are nonzero", white, white)
    _emit(
        {
            "command": "visualize",
            "mask": str(mask_path),
            "overlay": str(overlay_path),
            "sample": args.sample,
            "k": args.k,
            "white_pixels": white,
        }
    )
    return EXIT_OK


_COMMANDS = {
    "train-gbdt": _cmd_train_gbdt,
    "distill": _cmd_distill,
    "explain": _cmd_explain,
    "evaluate": _cmd_evaluate,
    "visualize": _cmd_visualize,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "print-config":
            print(default_config_text(), end="")
            return EXIT_OK
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
