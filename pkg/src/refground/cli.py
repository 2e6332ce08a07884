"""Command line interface.

Verbs: generate (synthetic benchmark), train, evaluate, ablate, report.
Config files are JSON or TOML. Exit code 0 on success, 2 on validation
errors (bad config, malformed dataset, mismatched checkpoint).
"""

import argparse
import json
import os
import sys

from .config import PRESETS, TrainConfig
from .core import DatasetError, load_dataset, save_dataset
from .synth import SynthConfig, SynthesisError, generate
from .train import CheckpointError, TrainingError, resume, train

EXIT_VALIDATION = 2


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _train_config(args) -> TrainConfig:
    data = dict(PRESETS.get(getattr(args, "preset", None) or "balanced", {}))
    data.update(_load_config_file(args.config))
    for key in ("seed", "iterations", "alpha", "beta", "gamma"):
        value = getattr(args, key, None)
        if value is not None:
            data["max_iterations" if key == "iterations" else key] = value
    return TrainConfig.from_dict(data)


def cmd_generate(args):
    data = _load_config_file(args.config)
    config = SynthConfig(**data)
    train_ds, eval_ds = generate(config)
    os.makedirs(args.out, exist_ok=True)
    train_path = os.path.join(args.out, "train.jsonl")
    eval_path = os.path.join(args.out, "eval.jsonl")
    save_dataset(train_ds, train_path)
    save_dataset(eval_ds, eval_path)
    print(f"wrote {len(train_ds)} train scenes ({train_ds.n_queries()} queries) to {train_path}")
    print(f"wrote {len(eval_ds)} eval scenes ({eval_ds.n_queries()} queries) to {eval_path}")
    return 0


def cmd_train(args):
    dataset = load_dataset(args.data)
    config = _train_config(args)
    every = max(1, args.log_every)

    def log_cb(it, row):
        if it % every == 0 or it == config.max_iterations - 1:
            print(f"iter {it}: total={row['total']:.4f} lr={row['lr']:.2e}")

    if args.resume:
        result = resume(args.resume, dataset, out_dir=args.out, max_iterations=config.max_iterations)
    else:
        result = train(dataset, config, out_dir=args.out, log_cb=log_cb)
    print(f"finished at iteration {result.iteration}; checkpoint: {result.checkpoint_path}")
    return 0


def cmd_evaluate(args):
    from .evaluate import evaluate

    dataset = load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "predictions.csv")
    report = evaluate(args.checkpoint, dataset, log_path=log_path)
    report_path = os.path.join(args.out, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    print(f"accuracy {report.accuracy:.4f} over {report.n_queries} queries")
    for qtype, bucket in sorted(report.per_type.items()):
        print(f"  {qtype}: {bucket['accuracy']:.4f} ({bucket['correct']}/{bucket['total']})")
    print(f"wrote {log_path} and {report_path}")
    return 0


def cmd_ablate(args):
    from .evaluate import run_ablation

    train_ds = load_dataset(args.train_data)
    eval_ds = load_dataset(args.eval_data)
    config = _train_config(args)
    toggles = [t for t in (args.toggles or "").split(",") if t]

    def log_cb(row):
        state = " ".join(f"{k}={'on' if v else 'off'}" for k, v in row["toggles"].items())
        print(f"[{state}] accuracy={row['accuracy']:.4f}")

    rows = run_ablation(train_ds, eval_ds, config, toggles, out_dir=args.out, log_cb=log_cb)
    print(f"wrote {len(rows)} rows to {args.out}/ablation.csv")
    return 0


def cmd_report(args):
    import csv

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(args.metrics, "r", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("metrics file is empty", file=sys.stderr)
        return EXIT_VALIDATION
    os.makedirs(args.out, exist_ok=True)
    steps = [int(r["iteration"]) for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for name in ("total", "loss_sub", "loss_obj", "loss_alan", "loss_lan"):
        if name in rows[0]:
            axes[0].plot(steps, [float(r[name]) for r in rows], label=name)
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("loss")
    axes[0].legend(fontsize=8)
    axes[1].plot(steps, [float(r["lr"]) for r in rows])
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("learning rate")
    axes[1].set_yscale("log")
    fig.tight_layout()
    out_path = os.path.join(args.out, "training.png")
    fig.savefig(out_path, dpi=120)
    print(f"wrote {out_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="refground", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic benchmark")
    p.add_argument("--config", help="SynthConfig as JSON or TOML")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainConfig as JSON or TOML")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--log-every", type=int, default=200)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="train/evaluate over toggle combinations")
    p.add_argument("--train-data", required=True)
    p.add_argument("--eval-data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--toggles", help="comma separated, e.g. adp,ent,scxtp")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("report", help="render a metrics CSV to plots")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DatasetError, CheckpointError, SynthesisError, TrainingError, ValueError, TypeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
