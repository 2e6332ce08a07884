"""The grounding network: entity attention, cue matching, adaptive
combination, and the reconstruction losses, over one scene at a time.

Proposal features enter the graph as constants; only parameters (and
everything derived from them) carry gradients. The ground-truth index
never reaches this module during training: ``image_step`` asserts it was
stripped.
"""

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, concat, mean, relu, rowwise_weighted_sum, softmax, tile_rows, transpose, tsum
from .config import TrainConfig
from .core import Dataset, Query, Scene
from .entity import (
    WordVectorTable,
    apply_filter,
    semantic_similarity,
    select_context_index,
    supervision_target,
)
from .features import CueFeatures, build_cue_features, context_location_dim
from .ground import CueMatcher, GroundingResult, combine_scores
from .lang import CUES, LanguageEncoder
from .nn import Linear, ParamBuilder
from .reconstruct import SequenceDecoder, attribute_loss, compose_losses, mse


@dataclass
class SceneContext:
    """A scene with its cue features, ready for the network."""

    scene: Scene
    feats: CueFeatures
    subject_t: Tensor
    location_t: Tensor
    pairs_t: np.ndarray       # (N, M, Dc) kept as numpy for the pooling op
    pair_flat_t: Tensor       # (N*M, D_v) candidate appearance rows
    categories: np.ndarray


def default_word_table(vocab, categories) -> WordVectorTable:
    """Orthogonal toy vectors over the vocabulary and category names; the
    unk word stays out so it maps to the zero vector."""
    words = [w for w in vocab if w != "unk"] + [c for c in categories if c not in vocab]
    return WordVectorTable.orthogonal(words)


class GroundingModel:
    def __init__(self, config: TrainConfig, dataset: Dataset, word_table: WordVectorTable | None = None):
        self.config = config
        self.vocab = list(dataset.vocab)
        self.categories = list(dataset.categories)
        self.attribute_vocab = list(dataset.attribute_vocab)
        self.subject_dim = dataset.subject_dim
        self.context_dim = dataset.context_dim
        self.context_feat_dim = dataset.context_dim + context_location_dim(config.context_location)
        self.n_attributes = len(self.attribute_vocab)
        self.dtype = np.dtype(config.dtype)
        self.table = word_table if word_table is not None else default_word_table(self.vocab, self.categories)
        self.word_dim = self.table.dim
        self.active_cues = (True, config.use_location, config.use_context)

        rng = np.random.default_rng(config.seed)
        builder = ParamBuilder(rng, self.dtype)
        self.encoder = LanguageEncoder(
            builder,
            vocab_size=len(self.vocab),
            embed_dim=config.embed_dim,
            hidden_dim=config.hidden_dim,
            attend_hidden_states=config.attend_hidden_states,
            active_cues=self.active_cues,
            max_len=config.max_len,
        )
        qd = self.encoder.query_dim
        self.entity_subject = CueMatcher(builder, "entity.subject", self.word_dim, self.subject_dim, config.entity_hidden)
        self.entity_object = CueMatcher(builder, "entity.object", self.word_dim, self.context_dim, config.entity_hidden)
        feature_dims = {"subject": self.subject_dim, "location": 30, "context": self.context_feat_dim}
        self.match = {cue: CueMatcher(builder, f"match.{cue}", qd, feature_dims[cue], config.match_hidden) for cue in CUES}
        self.avis = {cue: Linear(builder, f"avis.{cue}", feature_dims[cue], qd) for cue in CUES}
        self.alan_fuse = Linear(builder, "alan.fuse", 3 * qd, config.embed_dim)
        self.alan_decoder = SequenceDecoder(builder, "alan.dec", len(self.vocab), config.embed_dim, config.hidden_dim)
        self.lan_fuse = Linear(builder, "lan.fuse", self.subject_dim + 30 + self.context_feat_dim, config.embed_dim)
        self.lan_decoder = SequenceDecoder(builder, "lan.dec", len(self.vocab), config.embed_dim, config.hidden_dim)
        self.attr_head = Linear(builder, "attr", self.subject_dim, max(self.n_attributes, 1))
        self.params = builder.params
        self.init_rng_state = rng.bit_generator.state

    # -- plumbing ---------------------------------------------------------

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def _const(self, arr):
        return Tensor(np.ascontiguousarray(np.asarray(arr, dtype=self.dtype)))

    def scene_context(self, scene: Scene) -> SceneContext:
        feats = build_cue_features(scene, self.config.context_mode, self.config.context_location)
        n, m = feats.context_pair_mask.shape
        pair_flat = feats.context_raw.reshape(n * m, self.context_dim) if m else np.zeros((0, self.context_dim))
        return SceneContext(
            scene=scene,
            feats=feats,
            subject_t=self._const(feats.subject),
            location_t=self._const(feats.location),
            pairs_t=feats.context_pairs.astype(self.dtype),
            pair_flat_t=self._const(pair_flat),
            categories=np.array([p.category_id for p in scene.proposals], dtype=np.int64),
        )

    def _word(self, token):
        return None if token is None else self.vocab[token]

    # -- entity attention --------------------------------------------------

    def _subject_attention(self, ctx: SceneContext, query: Query):
        """Subject scores (N, 1) plus the supervision target, or a uniform
        constant when the query has no subject word."""
        n = ctx.feats.n_proposals
        if query.subject_word is None:
            return self._const(np.full((n, 1), 1.0 / n)), None
        emb = self._const(self.table.vector(self._word(query.subject_word)).reshape(1, -1))
        scores = self.entity_subject(tile_rows(emb, n), ctx.subject_t, np.ones(n, dtype=bool))
        sim = semantic_similarity(ctx.categories, query.subject_word, self.vocab, self.categories, self.table)
        target = supervision_target(sim).reshape(n, 1)
        return scores, target

    def _object_attention(self, ctx: SceneContext, query: Query):
        """Object scores (N, M) over context candidates plus target."""
        n, m = ctx.feats.context_pair_mask.shape
        mask = ctx.feats.context_pair_mask
        if not ctx.feats.has_context:
            return None, None
        if query.object_word is None:
            counts = mask.sum(axis=1, keepdims=True)
            uniform = np.where(mask, 1.0 / np.maximum(counts, 1), 0.0)
            return self._const(uniform), None
        emb = self._const(self.table.vector(self._word(query.object_word)).reshape(1, -1))
        logits = self.entity_object.mlp(concat([tile_rows(emb, n * m), ctx.pair_flat_t], axis=1))
        scores = softmax(logits.reshape(n, m), axis=1, mask=mask)
        percat = semantic_similarity(
            np.arange(len(self.categories)), query.object_word, self.vocab, self.categories, self.table
        )
        sim = np.where(mask, percat[ctx.categories[np.maximum(ctx.feats.context_pair_index, 0)]], 0.0)
        target = np.stack([supervision_target(sim[i], mask[i]) for i in range(n)])
        return scores, target

    # -- context pooling ----------------------------------------------------

    def _pool_context(self, ctx: SceneContext, object_scores):
        """Per-target context feature r_c (N, Dc); tensor in soft pooling,
        constant rows in the max modes."""
        n = ctx.feats.n_proposals
        if not ctx.feats.has_context or object_scores is None:
            return self._const(np.zeros((n, self.context_feat_dim)))
        if self.config.context_mode == "scxtp":
            return rowwise_weighted_sum(object_scores, ctx.pairs_t)
        rows = np.zeros((n, self.context_feat_dim), dtype=self.dtype)
        for i in range(n):
            sel = select_context_index(
                object_scores.data[i],
                self.config.context_mode,
                distances=ctx.feats.context_pair_dist[i],
                image_diag=ctx.feats.image_diag,
                distance_penalty=self.config.distance_penalty,
                mask=ctx.feats.context_pair_mask[i],
            )
            if sel is not None:
                rows[i] = ctx.pairs_t[i, sel]
        return self._const(rows)

    # -- grounding ----------------------------------------------------------

    def score_query(self, ctx: SceneContext, query: Query):
        """Run entity attention, filtering, cue matching, and combination.

        Returns a dict with every intermediate the training step or the
        evaluator needs.
        """
        n = ctx.feats.n_proposals
        cfg = self.config
        enc = self.encoder.encode(query.tokens)
        subject_scores, subject_target = self._subject_attention(ctx, query)
        object_scores, object_target = self._object_attention(ctx, query)

        score_np = subject_scores.data[:, 0]
        if cfg.filter_mode == "hard":
            keep = apply_filter(score_np, "hard", cfg.filter_threshold)
            soft_weights = None
        elif cfg.filter_mode == "soft":
            keep = np.ones(n, dtype=bool)
            soft_weights = subject_scores
        else:
            keep = np.ones(n, dtype=bool)
            soft_weights = None

        context_feats = self._pool_context(ctx, object_scores)
        cue_scores = {"subject": self.match["subject"](tile_rows(enc.subject, n), ctx.subject_t, keep)}
        if cfg.use_location:
            cue_scores["location"] = self.match["location"](tile_rows(enc.location, n), ctx.location_t, keep)
        if cfg.use_context:
            if ctx.feats.has_context:
                cue_scores["context"] = self.match["context"](tile_rows(enc.context, n), context_feats, keep)
            else:
                uniform = np.where(keep, 1.0 / keep.sum(), 0.0).reshape(n, 1)
                cue_scores["context"] = self._const(uniform)
        combined, final, selected = combine_scores(cue_scores, enc.cue_weights, soft_weights)
        return {
            "encoding": enc,
            "subject_scores": subject_scores,
            "subject_target": subject_target,
            "object_scores": object_scores,
            "object_target": object_target,
            "keep": keep,
            "context_feats": context_feats,
            "cue_scores": cue_scores,
            "combined": combined,
            "final": final,
            "selected": selected,
        }

    def ground(self, ctx_or_scene, query: Query) -> GroundingResult:
        """Pure inference: rank proposals and pick the argmax."""
        ctx = ctx_or_scene if isinstance(ctx_or_scene, SceneContext) else self.scene_context(ctx_or_scene)
        out = self.score_query(ctx, query)
        cue_np = {cue: s.data[:, 0].copy() for cue, s in out["cue_scores"].items()}
        return GroundingResult(
            cue_scores=cue_np,
            cue_weights=out["encoding"].cue_weights.data[0].copy(),
            combined_scores=out["combined"].data[:, 0].copy(),
            final_scores=out["final"].data[:, 0].copy(),
            selected=out["selected"],
            keep_mask=out["keep"].copy(),
        )

    # -- losses ---------------------------------------------------------------

    def loss_terms(self, ctx: SceneContext, query: Query, attr_weights=None, include_all=False):
        """Raw loss term tensors for one query.

        By default, terms whose coefficient is exactly 0 are skipped so
        they contribute neither compute nor gradient; ``include_all``
        forces every term that is defined for the query (entity terms
        still need the entity word, the attribute term needs labels).
        Returns (terms dict, score_query output).
        """
        cfg = self.config
        out = self.score_query(ctx, query)
        enc = out["encoding"]
        final = out["final"]
        terms = {}

        if cfg.use_entity_supervision or include_all:
            if out["subject_target"] is not None:
                terms["loss_sub"] = mse(out["subject_scores"], self._const(out["subject_target"]))
            if out["object_target"] is not None:
                diff = out["object_scores"] - self._const(out["object_target"])
                terms["loss_obj"] = tsum(diff * diff) / float(ctx.feats.context_pair_mask.sum())

        pooled = {}

        def pool(cue, feats_t):
            if cue not in pooled:
                pooled[cue] = transpose(final) @ feats_t
            return pooled[cue]

        cue_feats = {"subject": ctx.subject_t, "location": ctx.location_t, "context": out["context_feats"]}
        cue_term = {"subject": "L_s", "location": "L_l", "context": "L_c"}
        if cfg.alpha != 0.0 or include_all:
            for k, cue in enumerate(CUES):
                if not self.active_cues[k]:
                    continue
                v = self.avis[cue](pool(cue, cue_feats[cue]))
                terms[cue_term[cue]] = mse(v, enc.cue(cue))

        if cfg.beta != 0.0 or include_all:
            fused = relu(self.alan_fuse(concat([enc.subject, enc.location, enc.context], axis=1)))
            terms["loss_alan"] = self.alan_decoder.nll(fused, query.tokens)

        if cfg.gamma != 0.0 or include_all:
            blocks = [ctx.subject_t]
            blocks.append(ctx.location_t if cfg.use_location else self._const(np.zeros_like(ctx.feats.location)))
            blocks.append(out["context_feats"] if cfg.use_context
                          else self._const(np.zeros((ctx.feats.n_proposals, self.context_feat_dim))))
            r_vis = relu(self.lan_fuse(concat(blocks, axis=1)))
            f_vis = transpose(final) @ r_vis
            terms["loss_lan"] = self.lan_decoder.nll(f_vis, query.tokens)

        if (cfg.lambda_ != 0.0 or include_all) and query.attribute_labels and self.n_attributes > 0:
            weights = attr_weights if attr_weights is not None else np.ones(self.n_attributes)
            terms["loss_att"] = attribute_loss(
                pool("subject", ctx.subject_t), query.attribute_labels, self.n_attributes, weights, self.attr_head
            )
        return terms, out

    def query_loss(self, ctx: SceneContext, query: Query, attr_weights=None):
        """Loss graph for one query; returns (total tensor, bundle, out)."""
        cfg = self.config
        terms, out = self.loss_terms(ctx, query, attr_weights)
        enc = out["encoding"]

        avis_t = None
        if cfg.alpha != 0.0:
            for k, cue in enumerate(CUES):
                name = {"subject": "L_s", "location": "L_l", "context": "L_c"}[cue]
                if name in terms:
                    w = enc.cue_weights[0:1, k : k + 1].reshape(())
                    avis_t = w * terms[name] if avis_t is None else avis_t + w * terms[name]

        pieces = []
        for name in ("loss_sub", "loss_obj"):
            if cfg.use_entity_supervision and name in terms:
                pieces.append(terms[name])
        if avis_t is not None:
            pieces.append(cfg.alpha * avis_t)
        for name, coeff in (("loss_alan", cfg.beta), ("loss_lan", cfg.gamma), ("loss_att", cfg.lambda_)):
            if coeff != 0.0 and name in terms:
                pieces.append(terms[name] if coeff == 1.0 else coeff * terms[name])
        total_t = pieces[0] if pieces else self._const(np.zeros(()))
        for t in pieces[1:]:
            total_t = total_t + t

        def val(name):
            return float(terms[name].item()) if name in terms else 0.0

        ent_on = cfg.use_entity_supervision
        bundle = compose_losses(
            loss_sub=val("loss_sub") if ent_on else 0.0,
            loss_obj=val("loss_obj") if ent_on else 0.0,
            cue_losses=(val("L_s"), val("L_l"), val("L_c")),
            cue_weights=tuple(float(w) for w in enc.cue_weights.data[0]),
            loss_alan=val("loss_alan"),
            loss_lan=val("loss_lan"),
            loss_att=val("loss_att"),
            alpha=cfg.alpha,
            beta=cfg.beta,
            gamma=cfg.gamma,
            lambda_=cfg.lambda_,
        )
        return total_t, bundle, out

    def image_step(self, ctx: SceneContext, queries, attr_weights=None):
        """Mean training loss over one image's queries.

        Every query must have gt_index stripped; this is the weak
        supervision firewall.
        """
        if not queries:
            raise ValueError("image_step needs at least one query")
        for q in queries:
            if q.gt_index is not None:
                raise AssertionError("training query carries gt_index; strip with Query.for_training()")
        total = None
        bundles = []
        for q in queries:
            t, bundle, _ = self.query_loss(ctx, q, attr_weights)
            bundles.append(bundle)
            total = t if total is None else total + t
        return total / float(len(queries)), bundles
