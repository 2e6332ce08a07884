"""Query encoder: token embeddings, a bidirectional LSTM, one attention
head per cue, and the cue-weight head.

Each cue head scores every hidden state with a linear layer, softmaxes
over time, and pools the word embeddings with those weights (pooling the
hidden states instead is available behind ``attend_hidden_states``). The
cue weights come from a softmax over a linear map of the first and last
hidden states, restricted to the active cues.
"""

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, concat, embedding, flip0, lstm, softmax, transpose
from .nn import ParamBuilder

CUES = ("subject", "location", "context")


@dataclass
class QueryEncoding:
    """Per-cue pooled query vectors plus attention diagnostics."""

    subject: Tensor          # (1, D)
    location: Tensor         # (1, D)
    context: Tensor          # (1, D)
    cue_weights: Tensor      # (1, 3), zeros at inactive cues
    word_attention: dict     # cue -> (T, 1)
    hidden: Tensor           # (T, 2H)
    boundary: Tensor         # (1, 4H), first and last hidden state

    def cue(self, name):
        return getattr(self, name)


class LanguageEncoder:
    def __init__(self, builder: ParamBuilder, vocab_size, embed_dim, hidden_dim,
                 attend_hidden_states=False, active_cues=(True, True, True), max_len=16):
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.attend_hidden_states = attend_hidden_states
        self.active_cues = np.asarray(active_cues, dtype=bool).reshape(1, 3)
        self.max_len = max_len
        self.query_dim = 2 * hidden_dim if attend_hidden_states else embed_dim
        self.table = builder.make("embed.table", vocab_size, embed_dim)
        self.fwd_wx = builder.make("enc.fwd.wx", embed_dim, 4 * hidden_dim)
        self.fwd_wh = builder.make("enc.fwd.wh", hidden_dim, 4 * hidden_dim)
        self.fwd_b = builder.make("enc.fwd.b", 4 * hidden_dim)
        self.bwd_wx = builder.make("enc.bwd.wx", embed_dim, 4 * hidden_dim)
        self.bwd_wh = builder.make("enc.bwd.wh", hidden_dim, 4 * hidden_dim)
        self.bwd_b = builder.make("enc.bwd.b", 4 * hidden_dim)
        self.attn = {cue: (builder.make(f"attn.{cue}.w", 2 * hidden_dim, 1),
                           builder.make(f"attn.{cue}.b", 1)) for cue in CUES}
        self.cue_w = builder.make("cueweights.w", 4 * hidden_dim, 3)
        self.cue_b = builder.make("cueweights.b", 3)

    def embed_tokens(self, tokens) -> Tensor:
        """Embedding rows for a token id sequence, shape (T, D)."""
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim != 1 or tokens.size == 0:
            raise ValueError("tokens must be a nonempty 1-d id sequence")
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            raise ValueError(f"token id outside vocabulary of {self.vocab_size}")
        return embedding(self.table, tokens)

    def encode(self, tokens) -> QueryEncoding:
        if len(tokens) > self.max_len:
            raise ValueError(f"query length {len(tokens)} exceeds max_len {self.max_len}")
        e = self.embed_tokens(tokens)
        t = e.shape[0]
        h_fwd = lstm(e, self.fwd_wx, self.fwd_wh, self.fwd_b)
        h_bwd = flip0(lstm(flip0(e), self.bwd_wx, self.bwd_wh, self.bwd_b))
        hidden = concat([h_fwd, h_bwd], axis=1)
        source = hidden if self.attend_hidden_states else e
        pooled = {}
        attention = {}
        for cue in CUES:
            w, b = self.attn[cue]
            alpha = softmax(hidden @ w + b, axis=0)
            attention[cue] = alpha
            pooled[cue] = transpose(alpha) @ source
        boundary = concat([hidden[0:1, :], hidden[t - 1 : t, :]], axis=1)
        cue_weights = softmax(boundary @ self.cue_w + self.cue_b, axis=1, mask=self.active_cues)
        return QueryEncoding(
            subject=pooled["subject"],
            location=pooled["location"],
            context=pooled["context"],
            cue_weights=cue_weights,
            word_attention=attention,
            hidden=hidden,
            boundary=boundary,
        )
