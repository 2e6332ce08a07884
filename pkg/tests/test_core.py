import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refground.core import Box, Dataset, DatasetError, Proposal, Query, Scene, compute_iou, load_dataset, save_dataset
from conftest import tiny_dataset, tiny_scene


# -- boxes and IoU -----------------------------------------------------------

def test_box_rejects_degenerate():
    with pytest.raises(ValueError):
        Box(0, 0, 0, 10)
    with pytest.raises(ValueError):
        Box(0, 0, 10, 0)
    with pytest.raises(ValueError):
        Box(5, 5, 4, 10)
    with pytest.raises(ValueError):
        Box(0, 0, float("inf"), 10)


def test_iou_identical_boxes():
    b = Box(3, 4, 10, 12)
    assert compute_iou(b, b) == 1.0


def test_iou_disjoint():
    assert compute_iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0


def test_iou_partial_overlap_analytic():
    # intersection 5x5 = 25, union 100 + 100 - 25 = 175
    value = compute_iou(Box(0, 0, 10, 10), Box(5, 5, 15, 15))
    assert value == pytest.approx(25.0 / 175.0, abs=1e-12)


def rasterized_iou(a: Box, b: Box, size=64):
    """Pixel-counting oracle for integer-coordinate boxes."""
    xs, ys = np.meshgrid(np.arange(size) + 0.5, np.arange(size) + 0.5)

    def inside(box):
        return (xs >= box.x_tl) & (xs < box.x_br) & (ys >= box.y_tl) & (ys < box.y_br)

    ia, ib = inside(a), inside(b)
    union = np.logical_or(ia, ib).sum()
    if union == 0:
        return 0.0
    return np.logical_and(ia, ib).sum() / union


int_boxes = st.tuples(
    st.integers(0, 62), st.integers(0, 62), st.integers(1, 63), st.integers(1, 63)
).map(lambda t: Box(t[0], t[1], t[0] + t[2] if t[0] + t[2] <= 64 else 64, t[1] + t[3] if t[1] + t[3] <= 64 else 64))


@settings(max_examples=200, deadline=None)
@given(int_boxes, int_boxes)
def test_iou_matches_rasterized_oracle(a, b):
    assert compute_iou(a, b) == pytest.approx(rasterized_iou(a, b), abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(int_boxes, int_boxes)
def test_iou_symmetric_and_bounded(a, b):
    ab = compute_iou(a, b)
    assert ab == compute_iou(b, a)
    assert 0.0 <= ab <= 1.0
    identical = (a.x_tl, a.y_tl, a.x_br, a.y_br) == (b.x_tl, b.y_tl, b.x_br, b.y_br)
    assert (ab == 1.0) == identical


# -- dataset I/O -------------------------------------------------------------

def random_dataset(seed, n_scenes=10):
    rng = np.random.default_rng(seed)
    ds = Dataset(
        vocab=["a", "b", "c", "unk"],
        attribute_vocab=["x", "y"],
        categories=["a", "b"],
        subject_dim=3,
        context_dim=2,
    )
    for _ in range(n_scenes):
        n = int(rng.integers(1, 5))
        proposals = []
        for _ in range(n):
            x0, y0 = rng.uniform(0, 50, 2)
            w, h = rng.uniform(1, 40, 2)
            proposals.append(
                Proposal(Box(x0, y0, x0 + w, y0 + h), int(rng.integers(0, 2)),
                         rng.normal(size=3), rng.normal(size=2))
            )
        queries = [
            Query(
                tokens=rng.integers(0, 4, size=rng.integers(1, 5)).tolist(),
                subject_word=int(rng.integers(0, 4)) if rng.random() < 0.8 else None,
                object_word=int(rng.integers(0, 4)) if rng.random() < 0.3 else None,
                attribute_labels=frozenset(rng.integers(0, 2, size=rng.integers(0, 3)).tolist()),
                gt_index=int(rng.integers(0, n)) if rng.random() < 0.9 else None,
            )
            for _ in range(int(rng.integers(1, 4)))
        ]
        ds.scenes.append(Scene(100.0, 100.0, proposals, queries))
    return ds


def test_roundtrip_identity(tmp_path):
    ds = random_dataset(5)
    path = tmp_path / "data.jsonl"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.vocab == ds.vocab
    assert back.attribute_vocab == ds.attribute_vocab
    assert back.categories == ds.categories
    assert (back.subject_dim, back.context_dim) == (ds.subject_dim, ds.context_dim)
    assert len(back) == len(ds)
    for s1, s2 in zip(ds, back):
        assert (s1.width, s1.height) == (s2.width, s2.height)
        for p1, p2 in zip(s1.proposals, s2.proposals):
            assert p1.box == p2.box
            assert p1.category_id == p2.category_id
            np.testing.assert_array_equal(p1.subject_feature, p2.subject_feature)
            np.testing.assert_array_equal(p1.context_raw_feature, p2.context_raw_feature)
        for q1, q2 in zip(s1.queries, s2.queries):
            assert q1 == q2


def test_roundtrip_is_bit_exact_on_second_pass(tmp_path):
    ds = random_dataset(11)
    p1, p2 = tmp_path / "one.jsonl", tmp_path / "two.jsonl"
    save_dataset(ds, p1)
    save_dataset(load_dataset(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_file_gives_empty_dataset(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    ds = load_dataset(path)
    assert len(ds) == 0


def test_save_bare_empty_list(tmp_path):
    path = tmp_path / "none.jsonl"
    save_dataset([], path)
    assert path.read_text() == ""


def test_unk_tokens_preserved(tmp_path):
    ds = tiny_dataset()
    unk = ds.vocab.index("unk")
    scene = ds[0]
    q = Query(tokens=(unk, unk, 1), subject_word=None, gt_index=0)
    ds.scenes[0] = Scene(scene.width, scene.height, scene.proposals, list(scene.queries) + [q])
    path = tmp_path / "unk.jsonl"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back[0].queries[-1].tokens == (unk, unk, 1)


def test_gt_index_out_of_range_names_line(tmp_path):
    ds = tiny_dataset(n_scenes=1)
    path = tmp_path / "bad.jsonl"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    record = json.loads(lines[1])
    record["queries"][0]["gt_index"] = 5
    path.write_text(lines[0] + "\n" + json.dumps(record) + "\n")
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(path)


def test_feature_dim_mismatch_rejected(tmp_path):
    ds = tiny_dataset(n_scenes=1)
    path = tmp_path / "bad.jsonl"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    record = json.loads(lines[1])
    record["proposals"][0]["subject_feature"] = [1.0, 2.0]
    path.write_text(lines[0] + "\n" + json.dumps(record) + "\n")
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(path)


def test_token_out_of_vocab_rejected(tmp_path):
    ds = tiny_dataset(n_scenes=1)
    path = tmp_path / "bad.jsonl"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    record = json.loads(lines[1])
    record["queries"][0]["tokens"] = [99]
    path.write_text(lines[0] + "\n" + json.dumps(record) + "\n")
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(path)


def test_invalid_json_line_reported(tmp_path):
    ds = tiny_dataset(n_scenes=1)
    path = tmp_path / "bad.jsonl"
    save_dataset(ds, path)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("{not json\n")
    with pytest.raises(DatasetError, match="line 3"):
        load_dataset(path)


# -- domain types ------------------------------------------------------------

def test_scene_validates_bounds():
    box = Box(0, 0, 200, 10)
    prop = Proposal(box, 0, np.ones(2), np.ones(2))
    with pytest.raises(ValueError, match="exceeds"):
        Scene(100.0, 100.0, [prop], [Query(tokens=(0,))])


def test_query_for_training_strips_gt():
    q = Query(tokens=(1, 2), gt_index=3)
    assert q.for_training().gt_index is None
    assert q.gt_index == 3


def test_query_needs_tokens():
    with pytest.raises(ValueError):
        Query(tokens=())


def test_attribute_counts():
    ds = tiny_dataset(n_scenes=2)
    counts = ds.attribute_counts()
    assert counts.tolist() == [2, 0]
