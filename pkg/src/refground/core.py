"""Shared domain types, geometry, and dataset I/O.

A dataset is JSON Lines: record 0 is a header carrying the vocabularies
and feature dimensions, every following record is one scene. Floats are
serialized with full round-trip precision, so save -> load is an exact
identity on all numeric fields.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed dataset files or inconsistent records."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in image pixel coordinates, corners (tl, br)."""

    x_tl: float
    y_tl: float
    x_br: float
    y_br: float

    def __post_init__(self):
        for v in (self.x_tl, self.y_tl, self.x_br, self.y_br):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {self}")
        if not (self.x_br > self.x_tl and self.y_br > self.y_tl):
            raise ValueError(f"box must have positive width and height, got {self}")

    @property
    def width(self):
        return self.x_br - self.x_tl

    @property
    def height(self):
        return self.y_br - self.y_tl

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return (0.5 * (self.x_tl + self.x_br), 0.5 * (self.y_tl + self.y_br))


def compute_iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x_br, b.x_br) - max(a.x_tl, b.x_tl)
    iy = min(a.y_br, b.y_br) - max(a.y_tl, b.y_tl)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _check_feature(name, vec, dim):
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or (dim is not None and arr.shape[0] != dim):
        raise ValueError(f"{name} must be a vector of length {dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Proposal:
    """Candidate region: box, provider category id, provider features."""

    box: Box
    category_id: int
    subject_feature: np.ndarray
    context_raw_feature: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "subject_feature", _check_feature("subject_feature", self.subject_feature, None))
        object.__setattr__(self, "context_raw_feature", _check_feature("context_raw_feature", self.context_raw_feature, None))
        if self.category_id < 0:
            raise ValueError("category_id must be nonnegative")


@dataclass(frozen=True)
class Query:
    """Token sequence with parsed entity fields.

    gt_index is evaluation-only; training code receives queries through
    ``for_training()`` which strips it.
    """

    tokens: tuple
    subject_word: int | None = None
    object_word: int | None = None
    attribute_labels: frozenset = frozenset()
    gt_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "attribute_labels", frozenset(int(a) for a in self.attribute_labels))
        if len(self.tokens) < 1:
            raise ValueError("query must contain at least one token")
        if any(t < 0 for t in self.tokens):
            raise ValueError("token ids must be nonnegative")

    def for_training(self) -> "Query":
        """View of this query with the ground-truth index removed."""
        return replace(self, gt_index=None)


@dataclass(frozen=True)
class Scene:
    """One image: size, proposals, attached queries."""

    width: float
    height: float
    proposals: tuple
    queries: tuple

    def __post_init__(self):
        object.__setattr__(self, "proposals", tuple(self.proposals))
        object.__setattr__(self, "queries", tuple(self.queries))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("scene dimensions must be positive")
        if len(self.proposals) < 1:
            raise ValueError("scene needs at least one proposal")
        if len(self.queries) < 1:
            raise ValueError("scene needs at least one query")
        for p in self.proposals:
            b = p.box
            if b.x_tl < 0 or b.y_tl < 0 or b.x_br > self.width or b.y_br > self.height:
                raise ValueError(f"proposal box {b} exceeds scene bounds {self.width}x{self.height}")
        n = len(self.proposals)
        for q in self.queries:
            if q.gt_index is not None and not (0 <= q.gt_index < n):
                raise ValueError(f"gt_index {q.gt_index} out of range for {n} proposals")

    @property
    def n_proposals(self):
        return len(self.proposals)


@dataclass
class Dataset:
    """Header vocabularies plus a list of scenes.

    Behaves as a sequence of scenes; header fields ride along so loss
    weights and model dimensions can be derived without a side channel.
    """

    vocab: list
    attribute_vocab: list
    categories: list
    subject_dim: int
    context_dim: int
    scenes: list = field(default_factory=list)

    def __len__(self):
        return len(self.scenes)

    def __getitem__(self, i):
        return self.scenes[i]

    def __iter__(self):
        return iter(self.scenes)

    @property
    def unk_id(self):
        return self.vocab.index("unk") if "unk" in self.vocab else None

    def token_id(self, word):
        try:
            return self.vocab.index(word)
        except ValueError:
            unk = self.unk_id
            if unk is None:
                raise DatasetError(f"word {word!r} not in vocabulary and no 'unk' entry")
            return unk

    def attribute_counts(self):
        """Occurrences of each attribute label over all queries."""
        counts = np.zeros(len(self.attribute_vocab), dtype=np.int64)
        for scene in self.scenes:
            for q in scene.queries:
                for a in q.attribute_labels:
                    counts[a] += 1
        return counts

    def n_queries(self):
        return sum(len(s.queries) for s in self.scenes)


def _scene_to_record(scene: Scene) -> dict:
    return {
        "width": scene.width,
        "height": scene.height,
        "proposals": [
            {
                "box": [p.box.x_tl, p.box.y_tl, p.box.x_br, p.box.y_br],
                "category": p.category_id,
                "subject_feature": p.subject_feature.tolist(),
                "context_feature": p.context_raw_feature.tolist(),
            }
            for p in scene.proposals
        ],
        "queries": [
            {
                "tokens": list(q.tokens),
                "subject_word": q.subject_word,
                "object_word": q.object_word,
                "attributes": sorted(q.attribute_labels),
                "gt_index": q.gt_index,
            }
            for q in scene.queries
        ],
    }


def _scene_from_record(rec: dict, dataset: Dataset, lineno: int) -> Scene:
    def fail(msg):
        raise DatasetError(f"line {lineno}: {msg}")

    try:
        proposals = []
        for j, p in enumerate(rec["proposals"]):
            box = Box(*[float(v) for v in p["box"]])
            cat = int(p["category"])
            if cat >= len(dataset.categories):
                fail(f"proposal {j}: category {cat} outside vocabulary of {len(dataset.categories)}")
            sub = _check_feature("subject_feature", p["subject_feature"], dataset.subject_dim)
            ctx = _check_feature("context_feature", p["context_feature"], dataset.context_dim)
            proposals.append(Proposal(box, cat, sub, ctx))
        queries = []
        for j, q in enumerate(rec["queries"]):
            tokens = [int(t) for t in q["tokens"]]
            if any(t >= len(dataset.vocab) for t in tokens):
                fail(f"query {j}: token id outside vocabulary of {len(dataset.vocab)}")
            for a in q.get("attributes", []):
                if not (0 <= int(a) < len(dataset.attribute_vocab)):
                    fail(f"query {j}: attribute label {a} outside vocabulary")
            for key in ("subject_word", "object_word"):
                w = q.get(key)
                if w is not None and not (0 <= int(w) < len(dataset.vocab)):
                    fail(f"query {j}: {key} {w} outside vocabulary")
            queries.append(
                Query(
                    tokens=tokens,
                    subject_word=q.get("subject_word"),
                    object_word=q.get("object_word"),
                    attribute_labels=frozenset(q.get("attributes", [])),
                    gt_index=q.get("gt_index"),
                )
            )
        return Scene(float(rec["width"]), float(rec["height"]), proposals, queries)
    except DatasetError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        fail(str(exc))


def load_dataset(path) -> Dataset:
    """Parse a JSONL dataset file; malformed records raise with their line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in (line.strip() for line in fh) if ln]
    if not lines:
        return Dataset(vocab=[], attribute_vocab=[], categories=[], subject_dim=0, context_dim=0)
    try:
        header = json.loads(lines[0])
        dims = header["feature_dims"]
        dataset = Dataset(
            vocab=list(header["vocab"]),
            attribute_vocab=list(header["attribute_vocab"]),
            categories=list(header["categories"]),
            subject_dim=int(dims["subject"]),
            context_dim=int(dims["context"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"line 1: bad header record: {exc}") from exc
    for lineno, raw in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: invalid JSON: {exc}") from exc
        dataset.scenes.append(_scene_from_record(rec, dataset, lineno))
    return dataset


def save_dataset(dataset, path) -> None:
    """Write a Dataset (or a bare scene list, then with no header) as JSONL."""
    with open(path, "w", encoding="utf-8") as fh:
        if isinstance(dataset, Dataset):
            header = {
                "vocab": dataset.vocab,
                "attribute_vocab": dataset.attribute_vocab,
                "categories": dataset.categories,
                "feature_dims": {"subject": dataset.subject_dim, "context": dataset.context_dim},
            }
            fh.write(json.dumps(header) + "\n")
            scenes = dataset.scenes
        else:
            scenes = list(dataset)
        for scene in scenes:
            fh.write(json.dumps(_scene_to_record(scene)) + "\n")
