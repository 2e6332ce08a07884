"""Entity supervision utilities: word vectors, similarity targets,
candidate filtering, and context pooling.

The learned attention heads live in the model; this module holds the
pieces that are pure numpy, shared between the model and the tests.
"""

import numpy as np


class WordVectorTable:
    """Lookup from word string to a fixed vector, with a zero unk row."""

    def __init__(self, vectors, dim):
        self.vectors = dict(vectors)
        self.dim = int(dim)
        self._unk = np.zeros(self.dim, dtype=np.float64)

    @classmethod
    def from_text_file(cls, path):
        """Plain text table, one 'word v1 v2 ... vD' line per word."""
        vectors = {}
        dim = None
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                word, values = parts[0], parts[1:]
                if dim is None:
                    dim = len(values)
                if len(values) != dim:
                    raise ValueError(f"{path} line {lineno}: expected {dim} values, got {len(values)}")
                vectors[word] = np.array([float(v) for v in values], dtype=np.float64)
        if dim is None:
            raise ValueError(f"{path}: empty word vector file")
        return cls(vectors, dim)

    @classmethod
    def orthogonal(cls, words):
        """One-hot table over the given words; used by the synthetic bench."""
        words = list(dict.fromkeys(words))
        dim = len(words)
        eye = np.eye(dim, dtype=np.float64)
        return cls({w: eye[k] for k, w in enumerate(words)}, dim)

    def vector(self, word):
        if word is None:
            return self._unk
        return self.vectors.get(word, self._unk)


def cosine_01(a, b) -> float:
    """Cosine similarity clamped to [0, 1]; 0 for a zero-norm side."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), 0.0, 1.0))


def semantic_similarity(category_ids, entity_word, vocab, category_names, table: WordVectorTable) -> np.ndarray:
    """Clamped cosine between each proposal's category and an entity word.

    entity_word is a vocabulary token id or None; None gives all zeros.
    """
    n = len(category_ids)
    if entity_word is None:
        return np.zeros(n, dtype=np.float64)
    target = table.vector(vocab[entity_word])
    by_cat = {}
    out = np.empty(n, dtype=np.float64)
    for i, cat in enumerate(category_ids):
        if cat not in by_cat:
            by_cat[cat] = cosine_01(table.vector(category_names[cat]), target)
        out[i] = by_cat[cat]
    return out


def supervision_target(sim, mask=None) -> np.ndarray:
    """Clamp similarities to [0, 1] and normalize to the simplex.

    An all-zero row falls back to uniform over the valid entries, so the
    target always lives on the same simplex as a softmaxed score.
    """
    sim = np.clip(np.asarray(sim, dtype=np.float64), 0.0, 1.0)
    if mask is None:
        mask = np.ones_like(sim, dtype=bool)
    sim = np.where(mask, sim, 0.0)
    total = sim.sum()
    count = int(mask.sum())
    if count == 0:
        return np.zeros_like(sim)
    if total == 0.0:
        return np.where(mask, 1.0 / count, 0.0)
    return sim / total


def apply_filter(subject_scores, mode, threshold):
    """Derive the candidate filter from subject attention scores.

    'hard' keeps proposals whose max-normalized score reaches the
    threshold (the argmax always survives), returning a boolean mask.
    'soft' returns the scores themselves as multiplicative weights.
    'none' keeps everything.
    """
    scores = np.asarray(subject_scores, dtype=np.float64)
    if mode == "none":
        return np.ones(scores.shape[0], dtype=bool)
    if mode == "hard":
        return scores / scores.max() >= threshold
    if mode == "soft":
        return scores.copy()
    raise ValueError(f"unknown filter mode {mode!r}")


def penalized_object_scores(scores, distances, image_diag, mask=None) -> np.ndarray:
    """Scale object scores down with target-candidate center distance."""
    scores = np.asarray(scores, dtype=np.float64)
    out = scores * (1.0 - np.asarray(distances, dtype=np.float64) / image_diag)
    if mask is not None:
        out = np.where(mask, out, -np.inf)
    return out


def select_context_index(scores, mode, distances=None, image_diag=None, distance_penalty=False, mask=None):
    """Argmax candidate slot for the max-pooling modes; ties take the
    lowest slot. Returns None when no valid candidate exists."""
    scores = np.asarray(scores, dtype=np.float64)
    if mask is not None and not mask.any():
        return None
    if scores.size == 0:
        return None
    if distance_penalty:
        if distances is None or image_diag is None:
            raise ValueError("distance penalty needs distances and the image diagonal")
        scores = penalized_object_scores(scores, distances, image_diag, mask)
    elif mask is not None:
        scores = np.where(mask, scores, -np.inf)
    return int(np.argmax(scores))


def pool_context(pair_features, scores, mode, distances=None, image_diag=None, distance_penalty=False, mask=None):
    """Pool candidate pair features into one context feature.

    'scxtp' blends all candidates with their object scores; the max modes
    select a single row. Returns (feature, selected_slot_or_None); an
    empty candidate set gives a zero vector.
    """
    feats = np.asarray(pair_features, dtype=np.float64)
    if feats.shape[0] == 0 or (mask is not None and not mask.any()):
        return np.zeros(feats.shape[1] if feats.ndim == 2 else 0, dtype=np.float64), None
    if mode == "scxtp":
        weights = np.asarray(scores, dtype=np.float64)
        if mask is not None:
            weights = np.where(mask, weights, 0.0)
        return weights @ feats, None
    if mode in ("mcxtp", "5cxtp"):
        sel = select_context_index(scores, mode, distances, image_diag, distance_penalty, mask)
        return feats[sel].copy(), sel
    raise ValueError(f"unknown context mode {mode!r}")


def attribute_class_weights(counts) -> np.ndarray:
    """Reciprocal-frequency class weights, scaled to mean 1 for uniform
    counts; unseen labels are weighted as if they appeared once."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0 or counts.size == 0:
        return np.ones_like(counts)
    return total / (counts.size * np.maximum(counts, 1.0))
