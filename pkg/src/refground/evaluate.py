"""Inference accuracy, per-query logs, and the ablation driver."""

import csv
import itertools
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import TrainConfig
from .core import Dataset, compute_iou
from .model import GroundingModel
from .synth import query_type
from .train import load_checkpoint, train

IOU_THRESHOLD = 0.5

LOG_COLUMNS = (
    "scene", "query", "type", "selected", "gt_index", "iou", "correct",
    "w_subject", "w_location", "w_context", "survivors",
)


@dataclass
class EvalReport:
    accuracy: float
    n_queries: int
    n_correct: int
    per_type: dict
    mean_survivors: float
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _as_model(model_or_path, dataset):
    if isinstance(model_or_path, GroundingModel):
        return model_or_path
    model, _, _, _ = load_checkpoint(model_or_path, dataset)
    return model


def evaluate(model_or_path, dataset: Dataset, log_path=None) -> EvalReport:
    """Accuracy under IoU > 0.5 between the selected and true boxes.

    Pure inference: deterministic, no reconstruction parameters touched.
    Every query must carry gt_index. A per-query log row is produced for
    each prediction; pass log_path to persist it as CSV.
    """
    model = _as_model(model_or_path, dataset)
    rows = []
    correct = 0
    total = 0
    survivors = []
    per_type = {}
    for si, scene in enumerate(dataset):
        ctx = model.scene_context(scene)
        for qi, query in enumerate(scene.queries):
            if query.gt_index is None:
                raise ValueError(f"scene {si} query {qi}: missing gt_index, cannot evaluate")
            result = model.ground(ctx, query)
            iou = compute_iou(scene.proposals[result.selected].box, scene.proposals[query.gt_index].box)
            hit = iou > IOU_THRESHOLD
            qtype = query_type(query, dataset)
            bucket = per_type.setdefault(qtype, {"correct": 0, "total": 0})
            bucket["total"] += 1
            bucket["correct"] += int(hit)
            correct += int(hit)
            total += 1
            survivors.append(int(result.keep_mask.sum()))
            rows.append({
                "scene": si,
                "query": qi,
                "type": qtype,
                "selected": result.selected,
                "gt_index": query.gt_index,
                "iou": iou,
                "correct": int(hit),
                "w_subject": float(result.cue_weights[0]),
                "w_location": float(result.cue_weights[1]),
                "w_context": float(result.cue_weights[2]),
                "survivors": int(result.keep_mask.sum()),
            })
    for bucket in per_type.values():
        bucket["accuracy"] = bucket["correct"] / bucket["total"]
    if log_path is not None:
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    report = EvalReport(
        accuracy=correct / total if total else 0.0,
        n_queries=total,
        n_correct=correct,
        per_type=per_type,
        mean_survivors=float(np.mean(survivors)) if survivors else 0.0,
        config=model.config.to_dict(),
    )
    return report


# Ablation toggles: each maps to (enabled, disabled) config edits applied
# on top of the base config.


def _toggle_edits(base: TrainConfig):
    return {
        "adp": (
            {"alpha": base.alpha if base.alpha > 0 else 0.01, "beta": base.beta if base.beta > 0 else 1.0},
            {"alpha": 0.0, "beta": 0.0},
        ),
        "lan": ({"gamma": base.gamma if base.gamma > 0 else 1.0}, {"gamma": 0.0}),
        "att": ({"lambda_": base.lambda_ if base.lambda_ > 0 else 1.0}, {"lambda_": 0.0}),
        "ent": ({"use_entity_supervision": True}, {"use_entity_supervision": False}),
        "scxtp": ({"context_mode": "scxtp"}, {"context_mode": "mcxtp"}),
        "loc": ({"use_location": True}, {"use_location": False}),
        "cxt": ({"use_context": True}, {"use_context": False}),
        "hsf": ({"filter_mode": "hard"}, {"filter_mode": "none"}),
        "ssf": ({"filter_mode": "soft"}, {"filter_mode": "none"}),
        "distp": ({"distance_penalty": True}, {"distance_penalty": False}),
    }


def ablation_config(base: TrainConfig, states: dict) -> TrainConfig:
    edits = {}
    table = _toggle_edits(base)
    for name, enabled in states.items():
        if name not in table:
            raise ValueError(f"invalid toggle {name!r}; known: {sorted(table)}")
        edits.update(table[name][0 if enabled else 1])
    return base.replace(**edits)


def run_ablation(train_dataset: Dataset, eval_dataset: Dataset, base_config: TrainConfig,
                 toggles, out_dir=None, log_cb=None):
    """Train and evaluate one model per on/off combination of the toggles.

    All runs share the base config seed. Returns one result row per
    combination; the empty toggle list gives the single baseline row.
    """
    toggles = list(toggles)
    known = _toggle_edits(base_config)
    for name in toggles:
        if name not in known:
            raise ValueError(f"invalid toggle {name!r}; known: {sorted(known)}")
    rows = []
    for bits in itertools.product((False, True), repeat=len(toggles)):
        states = dict(zip(toggles, bits))
        config = ablation_config(base_config, states)
        result = train(train_dataset, config)
        report = evaluate(result.model, eval_dataset)
        row = {
            "toggles": states,
            "accuracy": report.accuracy,
            "n_queries": report.n_queries,
            "mean_survivors": report.mean_survivors,
            "per_type": report.per_type,
        }
        rows.append(row)
        if log_cb is not None:
            log_cb(row)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "ablation.json"), "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1)
        with open(os.path.join(out_dir, "ablation.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(toggles) + ["accuracy", "n_queries", "mean_survivors"])
            for row in rows:
                writer.writerow([int(row["toggles"][t]) for t in toggles]
                                + [row["accuracy"], row["n_queries"], row["mean_survivors"]])
    return rows
