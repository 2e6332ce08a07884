"""Regenerate the golden files from fixed-seed reference runs.

Run from the tests/ directory: python golden/regen.py
Goldens are computed at float64 with the pure kernel backend pinned, so
they are reproducible bit for bit on one machine.
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent))

from refground import kernels

kernels.use("pure")

from conftest import golden_model, golden_synth_dataset, golden_train_config  # noqa: E402
from refground.train import train  # noqa: E402

OUT = pathlib.Path(__file__).resolve().parent


def dump(name, payload):
    with open(OUT / f"{name}.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
    print(f"wrote {name}.json")


def main():
    model, ds, config = golden_model()

    emb = model.encoder.embed_tokens([3, 1])
    dump("lang_embed", {"tokens": [3, 1], "rows": emb.data.tolist()})

    enc = model.encoder.encode([2, 5, 7])
    dump("lang_encode", {
        "tokens": [2, 5, 7],
        "subject": enc.subject.data.tolist(),
        "location": enc.location.data.tolist(),
        "context": enc.context.data.tolist(),
        "cue_weights": enc.cue_weights.data.tolist(),
        "word_attention": {cue: a.data.tolist() for cue, a in enc.word_attention.items()},
    })

    scene = ds[0]
    ctx = model.scene_context(scene)
    query = scene.queries[0].for_training()
    scores, target = model._subject_attention(ctx, query)
    dump("entity_attention", {
        "scores": scores.data.tolist(),
        "target": np.asarray(target).tolist(),
    })

    out = model.score_query(ctx, query)
    dump("cue_matching", {
        "subject": out["cue_scores"]["subject"].data.tolist(),
        "location": out["cue_scores"]["location"].data.tolist(),
        "context": out["cue_scores"]["context"].data.tolist(),
        "final": out["final"].data.tolist(),
        "selected": out["selected"],
    })

    fused = model._const(np.linspace(-0.5, 0.5, model.config.embed_dim).reshape(1, -1))
    nll = model.alan_decoder.nll(fused, [1, 4, 2])
    dump("decoder_nll", {"tokens": [1, 4, 2], "nll": float(nll.item())})

    result = train(ds, config)
    dump("train_curve", {
        "total": [row["total"] for row in result.rows],
        "loss_lan": [row["loss_lan"] for row in result.rows],
        "lr": [row["lr"] for row in result.rows],
    })


if __name__ == "__main__":
    main()
