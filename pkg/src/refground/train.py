"""Weakly supervised training: one adaptive-moment update per image,
stepped learning rate, CSV metrics, and zip checkpoints.

Scene order is a fresh seeded permutation per epoch, derived from the
config seed and the epoch index alone, so any iteration's scene is
recomputable and resumption is exact. Queries are stripped of their
ground-truth index before they reach the model.
"""

import csv
import io
import json
import math
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .core import Dataset
from .entity import WordVectorTable, attribute_class_weights
from .model import GroundingModel, default_word_table

METRIC_COLUMNS = (
    "iteration", "loss_sub", "loss_obj", "L_s", "L_l", "L_c", "loss_avis",
    "loss_alan", "loss_adp", "loss_lan", "loss_att", "loss_clb", "total", "lr",
)

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def lr_at(step: int, config: TrainConfig) -> float:
    """Learning rate for update ``step`` (0-based): the initial rate
    divided by the decay factor once per completed decay interval."""
    return config.learning_rate / config.lr_decay_factor ** (step // config.lr_decay_every)


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in sorted(self.params):
            p = self.params[name]
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    model: GroundingModel
    adam: Adam
    config: TrainConfig
    iteration: int
    rows: list = field(default_factory=list)
    checkpoint_path: str | None = None
    metrics_path: str | None = None


def _epoch_permutation(seed, epoch, n):
    return np.random.default_rng([seed, 17, epoch]).permutation(n)


def _mean_bundle_row(iteration, bundles, lr):
    row = {"iteration": iteration, "lr": lr}
    for name in METRIC_COLUMNS[1:-1]:
        row[name] = float(np.mean([getattr(b, name) for b in bundles]))
    return row


def _check_finite(bundles, iteration):
    for b in bundles:
        for name, value in b.terms().items():
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss term {name}={value} at iteration {iteration}")


def load_word_table(config: TrainConfig, dataset: Dataset) -> WordVectorTable:
    if config.word_vectors:
        return WordVectorTable.from_text_file(config.word_vectors)
    return default_word_table(dataset.vocab, dataset.categories)


def _run(model, adam, dataset, config, start_iteration, out_dir, log_cb=None):
    scenes = list(dataset)
    if not scenes:
        raise TrainingError("training dataset is empty")
    contexts = [model.scene_context(s) for s in scenes]
    stripped = [[q.for_training() for q in s.queries] for s in scenes]
    attr_weights = attribute_class_weights(dataset.attribute_counts()) if dataset.attribute_vocab else None

    rows = []
    writer = None
    csv_fh = None
    metrics_path = None
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.csv")
        csv_fh = open(metrics_path, "w", newline="", encoding="utf-8")
        writer = csv.DictWriter(csv_fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
    try:
        n = len(scenes)
        perm = None
        for it in range(start_iteration, config.max_iterations):
            epoch, pos = divmod(it, n)
            if pos == 0 or perm is None:
                perm = _epoch_permutation(config.seed, epoch, n)
            idx = int(perm[pos])
            total, bundles = model.image_step(contexts[idx], stripped[idx], attr_weights)
            _check_finite(bundles, it)
            lr = lr_at(it, config)
            model.zero_grad()
            total.backward()
            adam.step(lr)
            row = _mean_bundle_row(it, bundles, lr)
            rows.append(row)
            if writer is not None:
                writer.writerow(row)
            if log_cb is not None:
                log_cb(it, row)
    finally:
        if csv_fh is not None:
            csv_fh.close()

    ckpt_path = None
    if out_dir is not None:
        import os

        ckpt_path = os.path.join(out_dir, "checkpoint.rgz")
        save_checkpoint(ckpt_path, model, adam, config.max_iterations)
    return TrainResult(model, adam, config, config.max_iterations, rows, ckpt_path, metrics_path)


def train(dataset: Dataset, config: TrainConfig, out_dir=None, word_table=None, log_cb=None) -> TrainResult:
    """Train from scratch on a dataset; gt_index is never consulted."""
    table = word_table if word_table is not None else load_word_table(config, dataset)
    model = GroundingModel(config, dataset, table)
    adam = Adam(model.params)
    return _run(model, adam, dataset, config, 0, out_dir, log_cb)


def resume(checkpoint_path, dataset: Dataset, out_dir=None, max_iterations=None, config=None, word_table=None) -> TrainResult:
    """Continue training from a checkpoint as if it never stopped.

    ``max_iterations`` may extend the run; any other config change is a
    mismatch and is rejected.
    """
    model, adam, iteration, stored_config = load_checkpoint(checkpoint_path, dataset, word_table)
    if config is not None:
        want = config.to_dict()
        have = stored_config.to_dict()
        want.pop("max_iterations")
        have.pop("max_iterations")
        if want != have:
            diff = [k for k in want if want[k] != have[k]]
            raise CheckpointError(f"config mismatch on resume: {diff}")
        max_iterations = config.max_iterations if max_iterations is None else max_iterations
    run_config = stored_config if max_iterations is None else stored_config.replace(max_iterations=max_iterations)
    if run_config.max_iterations < iteration:
        raise CheckpointError(f"checkpoint is at iteration {iteration}, beyond max_iterations {run_config.max_iterations}")
    return _run(model, adam, dataset, run_config, iteration, out_dir)


# -- checkpoint I/O ---------------------------------------------------------
#
# A checkpoint is a zip archive:
#   manifest.json        metadata, config, model card, array index
#   arrays/<file>.bin    raw little-endian C-order array bytes
# Every array entry in the manifest records name, dtype (numpy byte-order
# string, always little-endian), shape, and its file. Adam state stores
# the same layout for the first and second moments plus the step count.


def _array_bytes(arr):
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    return np.ascontiguousarray(le).tobytes()


def save_checkpoint(path, model: GroundingModel, adam: Adam | None, iteration: int) -> None:
    entries = []
    blobs = {}

    def put(kind, name, arr):
        file = f"arrays/{kind}/{len(blobs)}.bin"
        blobs[file] = _array_bytes(arr)
        entries.append({
            "kind": kind,
            "name": name,
            "dtype": arr.dtype.newbyteorder("<").str,
            "shape": list(arr.shape),
            "file": file,
        })

    for name in sorted(model.params):
        put("param", name, model.params[name].data)
    adam_meta = None
    if adam is not None:
        for name in sorted(adam.m):
            put("adam_m", name, adam.m[name])
            put("adam_v", name, adam.v[name])
        adam_meta = {"t": adam.t, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps}
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "iteration": iteration,
        "config": model.config.to_dict(),
        "model": {
            "vocab": model.vocab,
            "categories": model.categories,
            "attribute_vocab": model.attribute_vocab,
            "subject_dim": model.subject_dim,
            "context_dim": model.context_dim,
        },
        "adam": adam_meta,
        "rng_state": json.loads(json.dumps(model.init_rng_state, default=int)),
        "arrays": entries,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1))
        for file, blob in blobs.items():
            zf.writestr(file, blob)


def read_manifest(path) -> dict:
    with zipfile.ZipFile(path, "r") as zf:
        return json.loads(zf.read("manifest.json"))


def load_checkpoint(path, dataset: Dataset, word_table=None):
    """Rebuild (model, adam, iteration, config) from an archive.

    The dataset must carry the same vocabularies and feature dimensions
    the checkpoint was trained with.
    """
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {manifest.get('format_version')}")
        config = TrainConfig.from_dict(manifest["config"])
        card = manifest["model"]
        for key, have in (
            ("vocab", list(dataset.vocab)),
            ("categories", list(dataset.categories)),
            ("attribute_vocab", list(dataset.attribute_vocab)),
            ("subject_dim", dataset.subject_dim),
            ("context_dim", dataset.context_dim),
        ):
            if card[key] != have:
                raise CheckpointError(f"dataset does not match checkpoint: {key} differs")
        table = word_table if word_table is not None else load_word_table(config, dataset)
        model = GroundingModel(config, dataset, table)
        adam = Adam(model.params)
        loaded = {"param": {}, "adam_m": {}, "adam_v": {}}
        for entry in manifest["arrays"]:
            raw = zf.read(entry["file"])
            arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
            loaded[entry["kind"]][entry["name"]] = arr
        for name, arr in loaded["param"].items():
            if name not in model.params or model.params[name].data.shape != arr.shape:
                raise CheckpointError(f"parameter {name} does not fit the rebuilt model")
            model.params[name].data = arr.astype(model.dtype, copy=False)
        if manifest["adam"] is not None:
            adam.t = manifest["adam"]["t"]
            adam.beta1 = manifest["adam"]["beta1"]
            adam.beta2 = manifest["adam"]["beta2"]
            adam.eps = manifest["adam"]["eps"]
            for name, arr in loaded["adam_m"].items():
                adam.m[name] = arr.astype(model.dtype, copy=False)
            for name, arr in loaded["adam_v"].items():
                adam.v[name] = arr.astype(model.dtype, copy=False)
    return model, adam, manifest["iteration"], config
