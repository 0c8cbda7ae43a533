"""``chgh`` command-line entry point.

Exit codes: 0 success, 1 user error (one-line message), 2 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import traceback
from pathlib import Path

from .errors import UserError

USAGE_EPILOG = """subcommands:
  build-corpus  turn jd/we JSONL files into shares, gaps and skill graphs
  synth         generate a synthetic market from a spec file
  train         train a model on a corpus directory
  eval          evaluate a checkpoint on a split
  ablate        train and compare the five ablation variants
  report        plot skill trends and write metric tables
"""

OUT_ENV = "CHGH_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError(f"{self.prog}: {message}")


def _out_dir(args, default_name: str) -> Path:
    if args.out is not None:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV]) / default_name
    raise UserError(f"--out is required (or set {OUT_ENV})")


def _require_dir(path, what: str) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise UserError(f"{what} not found: {path}")
    return path


def _write_json(path: Path, obj) -> None:
    from ._io import atomic_write_text

    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_build_corpus(args) -> int:
    from .corpus import build_corpus

    for p in (args.jd, args.we):
        if not Path(p).is_file():
            raise UserError(f"input not found: {p}")
    out = _out_dir(args, "corpus")
    data = build_corpus(args.jd, args.we, out, epsilon=args.epsilon, min_count=args.min_count,
                        train_end=args.train_end)
    print(f"{out}: {len(data.vocab)} skills x {data.n_steps} steps")
    return 0


def cmd_synth(args) -> int:
    from .config import load_kv
    from .synth import MarketSpec, generate_market, write_market

    spec = load_kv(args.spec, MarketSpec)
    if args.seed is not None:
        spec = MarketSpec(**{**spec.__dict__, "seed": args.seed})
    out = _out_dir(args, "synth")
    market = generate_market(spec)
    write_market(market, out)
    print(f"{out}: {len(market.jd)} job descriptions, {len(market.we)} work experiences")
    return 0


def cmd_train(args) -> int:
    from .config import ModelConfig, load_kv
    from .corpus import CorpusArtifacts
    from .training import train

    config = load_kv(args.config, ModelConfig) if args.config else ModelConfig()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    data_dir = _require_dir(args.data, "corpus directory")
    data = CorpusArtifacts.load(data_dir)
    out = _out_dir(args, "checkpoint")

    def progress(row):
        if args.verbose:
            print(json.dumps(row), file=sys.stderr)

    result = train(config, data, data_dir=str(data_dir.resolve()), progress=progress)
    result.checkpoint.save(out)
    best = result.checkpoint.history[result.checkpoint.epoch - 1] if result.checkpoint.epoch else {}
    status = "aborted (non-finite loss), kept last good state" if result.aborted else "done"
    print(f"{out}: {status}; best epoch {result.checkpoint.epoch}, val J-ACC {best.get('val_jacc', float('nan')):.4f}")
    return 0


def cmd_eval(args) -> int:
    from .corpus import CorpusArtifacts
    from .labels import LabelMatrix, labels_to_csv, predicted_classes
    from .training import Checkpoint, evaluate_samples, predict
    from .data import build_samples

    ckpt = Checkpoint.load(_require_dir(args.ckpt, "checkpoint"))
    data_dir = args.data or ckpt.data_dir
    if data_dir is None:
        raise UserError("checkpoint does not record its corpus; pass --data")
    data = CorpusArtifacts.load(_require_dir(data_dir, "corpus directory"))
    import torch

    samples = build_samples(data, ckpt.config, torch.float64 if ckpt.config.float64 else torch.float32)
    if args.split not in samples:
        raise UserError(f"unknown split {args.split!r}; choose from {', '.join(samples)}")
    model = ckpt.build_model()
    metrics = evaluate_samples(model, samples[args.split])
    text = json.dumps(metrics, indent=2, sort_keys=True)
    if args.out is None:
        print(text)
        return 0
    out = Path(args.out)
    _write_json(out / "metrics.json", metrics)
    # predicted classes for the last target of the split
    ps, pd, _, _ = predict(model, samples[args.split][-1:])
    m = ckpt.config.n_classes
    labels = [LabelMatrix.from_classes("supply", predicted_classes(ps), m),
              LabelMatrix.from_classes("demand", predicted_classes(pd), m)]
    from ._io import atomic_write_text

    atomic_write_text(out / "labels.csv", labels_to_csv(labels))
    print(f"{out}: J-ACC {metrics['joint_accuracy']:.4f}, ACC {metrics['accuracy']:.4f}")
    return 0


def cmd_ablate(args) -> int:
    from ._io import atomic_output_dir
    from .config import VARIANTS, ModelConfig, load_kv
    from .corpus import CorpusArtifacts
    from .training import ablation_csv, run_ablation

    config = load_kv(args.config, ModelConfig) if args.config else ModelConfig()
    data = CorpusArtifacts.load(_require_dir(args.data, "corpus directory"))
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise UserError(f"unknown variant(s) {', '.join(bad)}; choose from {', '.join(VARIANTS)}")
    if args.seeds < 1:
        raise UserError("--seeds must be at least 1")
    seeds = range(config.seed, config.seed + args.seeds)

    def progress(variant, seed, metrics):
        print(f"{variant} seed {seed}: J-ACC {metrics['joint_accuracy']:.4f}", file=sys.stderr)

    report = run_ablation(config, data, seeds=seeds, variants=variants, progress=progress)
    out = _out_dir(args, "ablation")
    with atomic_output_dir(out) as tmp:
        (tmp / "ablation.csv").write_text(ablation_csv(report))
        (tmp / "ablation.json").write_text(json.dumps(report, indent=2) + "\n")
    print(ablation_csv(report), end="")
    return 0


def cmd_report(args) -> int:
    from .corpus import CorpusArtifacts
    from .report import render_report
    from .training import Checkpoint

    ckpt = Checkpoint.load(_require_dir(args.ckpt, "checkpoint"))
    data_dir = args.data or ckpt.data_dir
    if data_dir is None:
        raise UserError("checkpoint does not record its corpus; pass --data")
    data = CorpusArtifacts.load(_require_dir(data_dir, "corpus directory"))
    skills = [s for s in (args.skills or "").split(",") if s]
    if args.ablation is not None and not Path(args.ablation).is_file():
        raise UserError(f"ablation table not found: {args.ablation}")
    written = render_report(ckpt, data, _out_dir(args, "report"), skills=skills, image=args.image,
                            ablation=args.ablation, split=args.split,
                            export_adjacency=args.export_adjacency, export_clusters=args.export_clusters)
    for kind, path in written.items():
        print(f"{kind}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chgh", description="Skill supply and demand trend forecasting.",
                     epilog=USAGE_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("build-corpus", help="build shares, gaps and graphs")
    p.add_argument("--jd", required=True, help="job-description JSONL")
    p.add_argument("--we", required=True, help="work-experience JSONL")
    p.add_argument("--out")
    p.add_argument("--epsilon", type=float, default=0.1, help="co-occurrence threshold (default 0.1)")
    p.add_argument("--min-count", type=int, default=50, help="drop skills with fewer mentions (default 50)")
    p.add_argument("--train-end", type=int, default=None, help="graphs use steps before this one")
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("synth", help="generate a synthetic market")
    p.add_argument("--spec", required=True, help="key = value market spec")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="key = value model config (defaults if omitted)")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--data", help="corpus directory (defaults to the one recorded in the checkpoint)")
    p.add_argument("--out", help="write metrics.json and labels.csv here instead of printing")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the ablation ladder")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--config")
    p.add_argument("--variants", help="comma-separated subset of the ladder")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="plots and metric tables")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--skills", help="comma-separated skill names to plot")
    p.add_argument("--image", help="image path; format follows the extension (default OUT/report.png)")
    p.add_argument("--ablation", help="ablation.csv to append to the metric table")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--export-adjacency", action="store_true", help="write learned edges as TSV")
    p.add_argument("--export-clusters", action="store_true", help="write hardened cluster memberships")
    p.set_defaults(func=cmd_report)
    return parser


def _stack_id(exc: BaseException) -> str:
    frames = traceback.extract_tb(exc.__traceback__)
    key = "|".join(f"{Path(f.filename).name}:{f.name}:{f.lineno}" for f in frames)
    return hashlib.sha1(f"{type(exc).__name__}|{key}".encode()).hexdigest()[:10]


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UserError as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        if "invalid choice" in msg or "required" in msg:
            parser.print_usage(sys.stderr)
        return 1
    except Exception as exc:
        frames = traceback.extract_tb(exc.__traceback__)
        where = f"{Path(frames[-1].filename).name}:{frames[-1].lineno}" if frames else "?"
        print(f"internal error [{_stack_id(exc)}] {type(exc).__name__} at {where}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
