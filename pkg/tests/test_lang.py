import numpy as np
import pytest

from refground.lang import CUES, LanguageEncoder
from refground.nn import ParamBuilder
from conftest import finite_difference_check, golden_model, load_golden


def make_encoder(seed=0, vocab=11, de=6, dh=5, **kw):
    builder = ParamBuilder(np.random.default_rng(seed), np.float64)
    enc = LanguageEncoder(builder, vocab, de, dh, **kw)
    return enc, builder.params


def test_embed_same_token_identical_rows():
    enc, _ = make_encoder()
    rows = enc.embed_tokens([4, 4, 2]).data
    np.testing.assert_array_equal(rows[0], rows[1])
    assert not np.array_equal(rows[0], rows[2])


def test_embed_rejects_out_of_range():
    enc, _ = make_encoder(vocab=5)
    with pytest.raises(ValueError):
        enc.embed_tokens([5])
    with pytest.raises(ValueError):
        enc.embed_tokens([-1])
    with pytest.raises(ValueError):
        enc.embed_tokens([])


def test_encode_rejects_too_long():
    enc, _ = make_encoder(max_len=3)
    with pytest.raises(ValueError, match="max_len"):
        enc.encode([1, 1, 1, 1])


def test_single_token_attention_is_one_and_pools_embedding():
    enc, _ = make_encoder()
    out = enc.encode([3])
    for cue in CUES:
        np.testing.assert_array_equal(out.word_attention[cue].data, [[1.0]])
    e = enc.embed_tokens([3]).data
    for cue in CUES:
        np.testing.assert_allclose(out.cue(cue).data, e, atol=1e-15)


def test_cue_weights_on_simplex(rng):
    enc, _ = make_encoder(seed=3)
    for _ in range(20):
        tokens = rng.integers(0, 11, size=rng.integers(1, 8))
        out = enc.encode(tokens)
        w = out.cue_weights.data
        assert w.sum() == pytest.approx(1.0, abs=1e-6)
        assert (w >= 0).all()


def test_word_attention_sums_to_one(rng):
    enc, _ = make_encoder(seed=5)
    for _ in range(10):
        tokens = rng.integers(0, 11, size=rng.integers(1, 8))
        out = enc.encode(tokens)
        for cue in CUES:
            a = out.word_attention[cue].data
            assert a.sum() == pytest.approx(1.0, abs=1e-6)
            assert (a >= 0).all()


def test_pooled_vector_is_convex_combination(rng):
    enc, _ = make_encoder(seed=7)
    for _ in range(10):
        tokens = rng.integers(0, 11, size=rng.integers(2, 8))
        out = enc.encode(tokens)
        e = enc.embed_tokens(tokens).data
        lo, hi = e.min(axis=0), e.max(axis=0)
        for cue in CUES:
            q = out.cue(cue).data[0]
            assert (q >= lo - 1e-12).all() and (q <= hi + 1e-12).all()


def test_inactive_cue_weight_is_exactly_zero():
    enc, _ = make_encoder(active_cues=(True, True, False))
    out = enc.encode([1, 2, 3])
    assert out.cue_weights.data[0, 2] == 0.0
    assert out.cue_weights.data.sum() == pytest.approx(1.0, abs=1e-12)


def test_vocabulary_permutation_invariance(rng):
    enc, params = make_encoder(seed=9, vocab=8)
    tokens = [1, 5, 2, 5]
    before = enc.encode(tokens)
    perm = rng.permutation(8)
    # word i moves to id perm[i]; its embedding row moves with it
    table = params["embed.table"].data
    new_table = np.empty_like(table)
    new_table[perm] = table
    params["embed.table"].data = new_table
    remapped = [int(perm[t]) for t in tokens]
    after = enc.encode(remapped)
    for cue in CUES:
        np.testing.assert_allclose(after.cue(cue).data, before.cue(cue).data, atol=1e-12)
    np.testing.assert_allclose(after.cue_weights.data, before.cue_weights.data, atol=1e-12)


def test_attend_hidden_states_variant_changes_query_dim():
    enc, _ = make_encoder(attend_hidden_states=True, de=6, dh=5)
    assert enc.query_dim == 10
    out = enc.encode([1, 2])
    assert out.subject.shape == (1, 10)


def test_encoder_gradients(rng, pure_backend):
    enc, params = make_encoder(seed=11, vocab=7, de=4, dh=3)
    tokens = [1, 3, 5]
    c = rng.normal(size=(1, 4))
    c3 = rng.normal(size=(1, 3))

    def loss():
        import refground.autograd as ag

        out = enc.encode(tokens)
        return ag.mean(out.subject * c) + ag.mean(out.location * c) + ag.mean(
            out.cue_weights * c3
        )

    finite_difference_check(loss, list(params.values()), rng, n_coords=3)


def test_golden_embed(pure_backend):
    model, _, _ = golden_model()
    golden = load_golden("lang_embed")
    rows = model.encoder.embed_tokens(golden["tokens"]).data
    np.testing.assert_allclose(rows, golden["rows"], rtol=0, atol=0)


def test_golden_encode(pure_backend):
    model, _, _ = golden_model()
    golden = load_golden("lang_encode")
    out = model.encoder.encode(golden["tokens"])
    np.testing.assert_allclose(out.subject.data, golden["subject"], atol=1e-15)
    np.testing.assert_allclose(out.location.data, golden["location"], atol=1e-15)
    np.testing.assert_allclose(out.context.data, golden["context"], atol=1e-15)
    np.testing.assert_allclose(out.cue_weights.data, golden["cue_weights"], atol=1e-15)
    for cue in CUES:
        np.testing.assert_allclose(out.word_attention[cue].data, golden["word_attention"][cue], atol=1e-15)
