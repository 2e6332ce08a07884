"""Reconstruction losses that stand in for missing region labels.

Two teacher-forced LSTM decoders score the query likelihood: one from the
fused language features, one from the attentively pooled visual features.
The conditioning vector enters the decoder at step 0 only; a begin token
owned by the decoder starts the teacher-forced sequence, and every query
token is scored, so a uniform decoder over V words costs exactly
len(query) * ln V.
"""

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, clamp, concat, cross_entropy_sum, embedding, lstm, matmul, mean, weighted_bce_logits
from .nn import Linear, ParamBuilder


def mse(a, b):
    d = a - b
    return mean(d * d)


class SequenceDecoder:
    """One-layer LSTM decoder used only to score sequence likelihoods."""

    def __init__(self, builder: ParamBuilder, name, vocab_size, embed_dim, hidden_dim):
        self.vocab_size = vocab_size
        self.bos_id = vocab_size  # extra embedding row, never predicted
        self.embed = builder.make(f"{name}.embed", vocab_size + 1, embed_dim)
        self.wx = builder.make(f"{name}.wx", embed_dim, 4 * hidden_dim)
        self.wh = builder.make(f"{name}.wh", hidden_dim, 4 * hidden_dim)
        self.b = builder.make(f"{name}.b", 4 * hidden_dim)
        self.out = Linear(builder, f"{name}.out", hidden_dim, vocab_size)

    def nll(self, conditioning, tokens):
        """Negative log-likelihood of the token sequence.

        conditioning: (1, embed_dim) tensor fed at the first step only;
        the following steps are teacher forced. Sum over steps.
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.size < 1:
            raise ValueError("cannot score an empty sequence")
        ids = np.concatenate([[self.bos_id], tokens[:-1]])
        x = concat([conditioning, embedding(self.embed, ids)], axis=0)
        hidden = lstm(x, self.wx, self.wh, self.b)
        logits = self.out(hidden[1:, :])
        return cross_entropy_sum(logits, tokens)


def attribute_loss(pooled_subject, labels, n_attributes, class_weights, head: Linear):
    """Weighted multi-label BCE on the pooled subject feature.

    Queries without attribute labels are skipped upstream; logits are
    clamped to +-30 before the loss.
    """
    target = np.zeros(n_attributes, dtype=np.float64)
    for a in labels:
        target[a] = 1.0
    logits = clamp(head(pooled_subject).reshape(n_attributes), -30.0, 30.0)
    return weighted_bce_logits(logits, target, class_weights)


@dataclass
class LossBundle:
    """Named scalar loss terms with their mixing coefficients.

    Composition (exact, in this order):
        loss_avis = w_s * L_s + w_l * L_l + w_c * L_c
        loss_adp  = alpha * loss_avis + beta * loss_alan
        loss_clb  = loss_adp + gamma * loss_lan + lambda_ * loss_att
        total     = loss_sub + loss_obj + loss_clb
    """

    loss_sub: float
    loss_obj: float
    L_s: float
    L_l: float
    L_c: float
    loss_avis: float
    loss_alan: float
    loss_adp: float
    loss_lan: float
    loss_att: float
    loss_clb: float
    total: float
    alpha: float
    beta: float
    gamma: float
    lambda_: float
    cue_weights: tuple = (0.0, 0.0, 0.0)

    TERM_FIELDS = (
        "loss_sub", "loss_obj", "L_s", "L_l", "L_c", "loss_avis", "loss_alan",
        "loss_adp", "loss_lan", "loss_att", "loss_clb", "total",
    )

    def terms(self):
        return {name: getattr(self, name) for name in self.TERM_FIELDS}


def compose_losses(loss_sub, loss_obj, cue_losses, cue_weights, loss_alan, loss_lan, loss_att,
                   alpha, beta, gamma, lambda_) -> LossBundle:
    """Assemble the bundle from raw term values; the composition identities
    hold exactly in float arithmetic."""
    for name, value in [("alpha", alpha), ("beta", beta), ("gamma", gamma), ("lambda", lambda_)]:
        if value < 0:
            raise ValueError(f"{name} must be nonnegative, got {value}")
    l_s, l_l, l_c = (float(v) for v in cue_losses)
    w_s, w_l, w_c = (float(v) for v in cue_weights)
    loss_avis = w_s * l_s + w_l * l_l + w_c * l_c
    loss_adp = alpha * loss_avis + beta * float(loss_alan)
    loss_clb = loss_adp + gamma * float(loss_lan) + lambda_ * float(loss_att)
    total = float(loss_sub) + float(loss_obj) + loss_clb
    return LossBundle(
        loss_sub=float(loss_sub),
        loss_obj=float(loss_obj),
        L_s=l_s,
        L_l=l_l,
        L_c=l_c,
        loss_avis=loss_avis,
        loss_alan=float(loss_alan),
        loss_adp=loss_adp,
        loss_lan=float(loss_lan),
        loss_att=float(loss_att),
        loss_clb=loss_clb,
        total=total,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        lambda_=lambda_,
        cue_weights=(w_s, w_l, w_c),
    )
