"""Per-proposal cue features: absolute/relative location and context pairs.

Everything here is a pure function of the scene geometry and the provider
features, computed once per scene and cached by the training loop. The
offset convention is neighbor minus target, x offsets scaled by the
target's width and y offsets by its height.
"""

from dataclasses import dataclass

import numpy as np

from .core import Box, Scene

LOCATION_DIM = 30
MAX_SAME_CATEGORY_NEIGHBORS = 5
MAX_CONTEXT_CANDIDATES_5CXTP = 5

CONTEXT_MODES = ("5cxtp", "mcxtp", "scxtp")
CONTEXT_LOCATION_KINDS = ("relative", "absolute", "both")


def encode_absolute_location(box: Box, width: float, height: float) -> np.ndarray:
    """Normalized corners plus relative area: 5 values in [0, 1]."""
    return np.array(
        [
            box.x_tl / width,
            box.y_tl / height,
            box.x_br / width,
            box.y_br / height,
            box.area / (width * height),
        ],
        dtype=np.float64,
    )


def relative_offset(target: Box, neighbor: Box) -> np.ndarray:
    """Corner offsets of neighbor relative to target, plus area ratio."""
    return np.array(
        [
            (neighbor.x_tl - target.x_tl) / target.width,
            (neighbor.y_tl - target.y_tl) / target.height,
            (neighbor.x_br - target.x_br) / target.width,
            (neighbor.y_br - target.y_br) / target.height,
            neighbor.area / target.area,
        ],
        dtype=np.float64,
    )


def _center_distances(scene: Scene, i: int) -> np.ndarray:
    ci = np.array(scene.proposals[i].box.center)
    centers = np.array([p.box.center for p in scene.proposals])
    return np.sqrt(((centers - ci) ** 2).sum(axis=1))


def _ranked_neighbors(scene: Scene, i: int, want_same_category: bool) -> list:
    """Indices j != i filtered by category match, nearest center first.

    Stable sort keeps proposal order for exact distance ties.
    """
    cat_i = scene.proposals[i].category_id
    dist = _center_distances(scene, i)
    candidates = [
        j
        for j in range(scene.n_proposals)
        if j != i and (scene.proposals[j].category_id == cat_i) == want_same_category
    ]
    order = np.argsort([dist[j] for j in candidates], kind="stable")
    return [candidates[k] for k in order]


def encode_relative_location(i: int, scene: Scene) -> np.ndarray:
    """Offsets to up to 5 nearest same-category proposals, zero padded."""
    target = scene.proposals[i].box
    out = np.zeros(5 * MAX_SAME_CATEGORY_NEIGHBORS, dtype=np.float64)
    for slot, j in enumerate(_ranked_neighbors(scene, i, want_same_category=True)[:MAX_SAME_CATEGORY_NEIGHBORS]):
        out[5 * slot : 5 * slot + 5] = relative_offset(target, scene.proposals[j].box)
    return out


def encode_location(i: int, scene: Scene) -> np.ndarray:
    """Full 30-dim location feature: absolute part then relative part."""
    absolute = encode_absolute_location(scene.proposals[i].box, scene.width, scene.height)
    return np.concatenate([absolute, encode_relative_location(i, scene)])


def context_location_dim(kind: str) -> int:
    if kind not in CONTEXT_LOCATION_KINDS:
        raise ValueError(f"unknown context location kind {kind!r}")
    return 10 if kind == "both" else 5


def _context_location(i: int, j: int, scene: Scene, kind: str) -> np.ndarray:
    rel = relative_offset(scene.proposals[i].box, scene.proposals[j].box)
    if kind == "relative":
        return rel
    absolute = encode_absolute_location(scene.proposals[j].box, scene.width, scene.height)
    if kind == "absolute":
        return absolute
    return np.concatenate([rel, absolute])


def assemble_context_pairs(i: int, scene: Scene, mode: str, location_kind: str = "relative"):
    """Context candidate pair features for one target proposal.

    Returns (features (M, D_v + loc), indices (M,), mask (M,), dist (M,)).
    Mode '5cxtp' takes the five nearest different-category proposals and
    zero pads; 'mcxtp'/'scxtp' take all other proposals. M = 0 when no
    candidate exists.
    """
    if mode not in CONTEXT_MODES:
        raise ValueError(f"unknown context mode {mode!r}")
    d_v = scene.proposals[i].context_raw_feature.shape[0]
    d_loc = context_location_dim(location_kind)
    dist_all = _center_distances(scene, i)
    if mode == "5cxtp":
        picked = _ranked_neighbors(scene, i, want_same_category=False)[:MAX_CONTEXT_CANDIDATES_5CXTP]
        m = MAX_CONTEXT_CANDIDATES_5CXTP
    else:
        picked = [j for j in range(scene.n_proposals) if j != i]
        m = len(picked)
    feats = np.zeros((m, d_v + d_loc), dtype=np.float64)
    indices = np.full(m, -1, dtype=np.int64)
    mask = np.zeros(m, dtype=bool)
    dist = np.zeros(m, dtype=np.float64)
    for slot, j in enumerate(picked):
        feats[slot, :d_v] = scene.proposals[j].context_raw_feature
        feats[slot, d_v:] = _context_location(i, j, scene, location_kind)
        indices[slot] = j
        mask[slot] = True
        dist[slot] = dist_all[j]
    return feats, indices, mask, dist


@dataclass
class CueFeatures:
    """Batched per-proposal cue features for one scene."""

    subject: np.ndarray        # (N, D_s)
    location: np.ndarray       # (N, 30)
    context_pairs: np.ndarray  # (N, M, D_v + loc)
    context_pair_index: np.ndarray  # (N, M), -1 at padded slots
    context_pair_mask: np.ndarray   # (N, M) bool
    context_pair_dist: np.ndarray   # (N, M)
    context_raw: np.ndarray    # (N, M, D_v), the candidate appearance part
    image_diag: float

    @property
    def n_proposals(self):
        return self.subject.shape[0]

    @property
    def has_context(self):
        return bool(self.context_pair_mask.any())


def build_cue_features(scene: Scene, mode: str, location_kind: str = "relative") -> CueFeatures:
    n = scene.n_proposals
    d_v = scene.proposals[0].context_raw_feature.shape[0]
    subject = np.stack([p.subject_feature for p in scene.proposals])
    location = np.stack([encode_location(i, scene) for i in range(n)])
    per_target = [assemble_context_pairs(i, scene, mode, location_kind) for i in range(n)]
    m = max((feats.shape[0] for feats, _, _, _ in per_target), default=0)
    d_pair = d_v + context_location_dim(location_kind)
    pairs = np.zeros((n, m, d_pair), dtype=np.float64)
    index = np.full((n, m), -1, dtype=np.int64)
    mask = np.zeros((n, m), dtype=bool)
    dist = np.zeros((n, m), dtype=np.float64)
    for i, (feats, idx, msk, dst) in enumerate(per_target):
        k = feats.shape[0]
        pairs[i, :k] = feats
        index[i, :k] = idx
        mask[i, :k] = msk
        dist[i, :k] = dst
    raw = pairs[:, :, :d_v].copy()
    diag = float(np.hypot(scene.width, scene.height))
    return CueFeatures(subject, location, pairs, index, mask, dist, raw, diag)
