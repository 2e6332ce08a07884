import numpy as np
import pytest

from refground.core import save_dataset
from refground.synth import (
    SPATIAL_WORDS,
    SynthConfig,
    generate,
    parse_template_query,
    query_type,
    satisfiers,
)


def small_config(**kw):
    base = dict(seed=42, n_scenes=10, proposals_per_scene=6, grid=(3, 4), eval_scenes=4)
    base.update(kw)
    return SynthConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(query_mix=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        SynthConfig(proposals_per_scene=20, grid=(3, 4))
    with pytest.raises(ValueError):
        SynthConfig(noise_sigma=-0.1)


def test_deterministic_generation_byte_level(tmp_path):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    t1, _ = generate(small_config())
    t2, _ = generate(small_config())
    save_dataset(t1, p1)
    save_dataset(t2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_ground_truth_unique_by_brute_force():
    train, evals = generate(small_config(n_scenes=30))
    checked = 0
    for ds in (train, evals):
        for scene in ds:
            for q in scene.queries:
                sat = satisfiers(scene, q, ds)
                assert sat == [q.gt_index]
                checked += 1
    assert checked >= 100


def test_referent_category_always_duplicated():
    train, _ = generate(small_config(n_scenes=20))
    for scene in train:
        cats = [p.category_id for p in scene.proposals]
        for q in scene.queries:
            ref_cat = scene.proposals[q.gt_index].category_id
            assert cats.count(ref_cat) >= 2


def test_pure_subject_mix():
    train, _ = generate(small_config(query_mix=(1.0, 0.0, 0.0)))
    ds = train
    for scene in train:
        for q in scene.queries:
            assert query_type(q, ds) == "subject"
            assert q.object_word is None


def test_location_query_referent_is_extremal():
    train, _ = generate(small_config(query_mix=(0.0, 1.0, 0.0), n_scenes=15))
    for scene in train:
        for q in scene.queries:
            words = [train.vocab[t] for t in q.tokens]
            word = next(w for w in words if w in SPATIAL_WORDS)
            cat_name = train.vocab[q.subject_word]
            cat = train.categories.index(cat_name)
            members = [j for j, p in enumerate(scene.proposals) if p.category_id == cat]
            centers = np.array([scene.proposals[j].box.center for j in members])
            if word == "left":
                expected = members[int(np.argmin(centers[:, 0]))]
            elif word == "right":
                expected = members[int(np.argmax(centers[:, 0]))]
            elif word == "top":
                expected = members[int(np.argmin(centers[:, 1]))]
            elif word == "bottom":
                expected = members[int(np.argmax(centers[:, 1]))]
            else:
                d = np.hypot(centers[:, 0] - scene.width / 2, centers[:, 1] - scene.height / 2)
                expected = members[int(np.argmin(d))]
            assert q.gt_index == expected


def test_context_query_referent_minimizes_distance():
    train, _ = generate(small_config(query_mix=(0.0, 0.0, 1.0), n_scenes=15))
    for scene in train:
        for q in scene.queries:
            subj_cat = train.categories.index(train.vocab[q.subject_word])
            obj_cat = train.categories.index(train.vocab[q.object_word])
            members = [j for j, p in enumerate(scene.proposals) if p.category_id == subj_cat]
            others = [j for j, p in enumerate(scene.proposals) if p.category_id == obj_cat]
            centers = lambda idx: np.array([scene.proposals[j].box.center for j in idx])
            mc, oc = centers(members), centers(others)
            d = [np.min(np.hypot(*(oc - c).T)) for c in mc]
            assert q.gt_index == members[int(np.argmin(d))]


def test_features_are_onehot_plus_noise():
    train, _ = generate(small_config(noise_sigma=0.0))
    for scene in train:
        for p in scene.proposals:
            assert p.subject_feature.shape == (8,)
            assert sorted(p.subject_feature.tolist())[-2:] == [1.0, 1.0]
            assert p.subject_feature[p.category_id] == 1.0


def test_parse_template_subject():
    train, _ = generate(small_config())
    red = train.vocab.index("red")
    circle = train.vocab.index("circle")
    subj, obj, attrs = parse_template_query([red, circle], train)
    assert subj == circle and obj is None
    assert attrs == frozenset({train.attribute_vocab.index("red")})


def test_parse_template_context():
    train, _ = generate(small_config())
    circle = train.vocab.index("circle")
    square = train.vocab.index("square")
    near = train.vocab.index("near")
    subj, obj, attrs = parse_template_query([circle, near, square], train)
    assert subj == circle and obj == square and attrs == frozenset()


def test_parse_garbage_returns_nulls():
    train, _ = generate(small_config())
    unk = train.vocab.index("unk")
    assert parse_template_query([unk, unk, unk, unk], train) == (None, None, frozenset())
    assert parse_template_query([0], train) == (None, None, frozenset())
    assert parse_template_query([9999], train) == (None, None, frozenset())


def test_generated_parses_match_fields():
    train, _ = generate(small_config(n_scenes=15))
    for scene in train:
        for q in scene.queries:
            subj, obj, attrs = parse_template_query(list(q.tokens), train)
            assert subj == q.subject_word
            assert obj == q.object_word
            assert attrs == q.attribute_labels


def test_eval_split_disjoint_generation():
    train, evals = generate(small_config())
    assert len(evals) == 4
    # different split ids draw different scenes
    t0 = train[0].proposals[0].subject_feature
    e0 = evals[0].proposals[0].subject_feature
    assert not np.allclose(t0, e0)
