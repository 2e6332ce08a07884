import json
import pathlib

import numpy as np
import pytest

from refground import kernels
from refground.config import TrainConfig
from refground.core import Box, Dataset, Proposal, Query, Scene

GOLDEN_DIR = pathlib.Path(__file__).parent / "golden"


def load_golden(name):
    with open(GOLDEN_DIR / f"{name}.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def golden_synth_dataset():
    from refground.synth import SynthConfig, generate

    config = SynthConfig(
        seed=1234, n_scenes=6, proposals_per_scene=5, grid=(3, 3),
        n_categories=3, n_colors=3, queries_per_scene=2, eval_scenes=2,
    )
    return generate(config)[0]


def golden_train_config(**kw):
    base = dict(
        embed_dim=8, hidden_dim=8, match_hidden=16, entity_hidden=16,
        dtype="float64", seed=99, max_iterations=50,
    )
    base.update(kw)
    return TrainConfig(**base)


def golden_model():
    from refground.model import GroundingModel

    ds = golden_synth_dataset()
    config = golden_train_config()
    return GroundingModel(config, ds), ds, config


@pytest.fixture
def pure_backend():
    previous = kernels.backend_name()
    kernels.use("pure")
    yield
    kernels.use(previous)


def finite_difference_check(make_loss, tensors, rng, n_coords=4, eps=1e-5, rtol=1e-3, atol=1e-8):
    """Compare analytic gradients against central differences.

    ``make_loss`` rebuilds the scalar loss from scratch; ``tensors`` are
    the parameters to perturb. A few coordinates per tensor are sampled.
    Returns the worst relative error over all checked coordinates.
    """
    for t in tensors:
        t.grad = None
    make_loss().backward()
    grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    worst = 0.0
    for t, g in zip(tensors, grads):
        for _ in range(n_coords):
            idx = tuple(rng.integers(0, s) for s in t.data.shape)
            orig = t.data[idx]
            t.data[idx] = orig + eps
            up = make_loss().item()
            t.data[idx] = orig - eps
            down = make_loss().item()
            t.data[idx] = orig
            fd = (up - down) / (2.0 * eps)
            an = g[idx]
            err = abs(fd - an)
            if err > atol + rtol * max(abs(fd), abs(an)):
                raise AssertionError(
                    f"gradient mismatch at {idx} of shape {t.data.shape}: fd={fd:.8g} analytic={an:.8g}"
                )
            worst = max(worst, err / max(abs(fd), abs(an), 1e-12))
    return worst


def tiny_scene(rng=None, n=3, d=4, with_context_query=True):
    """Small handmade scene with one query of each template family."""
    rng = rng or np.random.default_rng(0)
    boxes = [Box(5 + 30 * i, 10 + 7 * i, 30 + 30 * i, 40 + 7 * i) for i in range(n)]
    cats = [0, 0, 1][:n]
    proposals = [
        Proposal(boxes[i], cats[i], rng.normal(size=d), rng.normal(size=d)) for i in range(n)
    ]
    queries = [Query(tokens=(0, 1), subject_word=0, attribute_labels=frozenset({0}), gt_index=0)]
    if with_context_query:
        queries.append(Query(tokens=(0, 2, 1), subject_word=0, object_word=1, gt_index=1))
    return Scene(120.0, 80.0, proposals, queries)


def tiny_dataset(n_scenes=2, n=3, d=4):
    rng = np.random.default_rng(3)
    ds = Dataset(
        vocab=["thing", "stuff", "near", "unk"],
        attribute_vocab=["shiny", "dull"],
        categories=["thing", "stuff"],
        subject_dim=d,
        context_dim=d,
    )
    for _ in range(n_scenes):
        ds.scenes.append(tiny_scene(rng, n=n, d=d))
    return ds


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
