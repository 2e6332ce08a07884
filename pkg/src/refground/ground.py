"""Proposal ranking: per-cue matching scores, their weighted combination,
and argmax selection."""

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, softmax, tsum
from .nn import Mlp2, ParamBuilder


@dataclass
class GroundingResult:
    """Inference output for one query (plain numpy)."""

    cue_scores: dict           # cue -> (N,) softmaxed over kept proposals
    cue_weights: np.ndarray    # (3,)
    combined_scores: np.ndarray  # (N,) convex combination, pre filter
    final_scores: np.ndarray   # (N,) what the argmax runs on
    selected: int
    keep_mask: np.ndarray      # (N,) bool


class CueMatcher:
    """Scores (query vector, proposal feature) pairs with a two-layer
    perceptron; softmax over the kept proposals."""

    def __init__(self, builder: ParamBuilder, name, query_dim, feature_dim, hidden):
        self.mlp = Mlp2(builder, name, query_dim + feature_dim, hidden)

    def __call__(self, query_tiled, features, keep_mask):
        from .autograd import concat

        logits = self.mlp(concat([query_tiled, features], axis=1))
        return softmax(logits, axis=0, mask=keep_mask.reshape(-1, 1))


def combine_scores(cue_scores, cue_weights, soft_weights=None):
    """Final ranking scores from per-cue scores and cue weights.

    cue_scores: dict of (N, 1) tensors; cue_weights: (1, 3) tensor ordered
    subject/location/context (zero at inactive cues). With soft filtering
    the combination is multiplied by the subject attention scores, then
    renormalized so downstream pooling still sees a distribution; that
    rescaling never moves the argmax. Ties pick the lowest index.
    """
    from .lang import CUES

    total = None
    for k, cue in enumerate(CUES):
        if cue not in cue_scores:
            continue
        term = cue_weights[0:1, k : k + 1] * cue_scores[cue]
        total = term if total is None else total + term
    combined = total
    if soft_weights is not None:
        weighted = combined * soft_weights
        total = weighted / tsum(weighted)
    selected = int(np.argmax(total.data))
    return combined, total, selected
