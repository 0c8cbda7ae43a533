"""Trend panels per skill and metric tables for trained checkpoints."""
from __future__ import annotations

import csv
import difflib
import io
from pathlib import Path

import numpy as np
import torch

from ._io import atomic_write_text
from .corpus import CorpusArtifacts
from .data import build_samples
from .errors import UserError
from .labels import TREND_NAMES
from .training import ABLATION_FIELDS, Checkpoint, evaluate_samples


class UnknownSkillError(UserError):
    pass


def resolve_skills(names, vocab) -> list[int]:
    ids = []
    for name in names:
        if name not in vocab:
            near = difflib.get_close_matches(name, vocab.names, n=3)
            hint = f"; did you mean {', '.join(near)}?" if near else ""
            raise UnknownSkillError(f"unknown skill {name!r}{hint}")
        ids.append(vocab.id_of(name))
    return ids


def metrics_row(variant: str, metrics: dict) -> dict:
    return {"variant": variant, "acc": metrics["accuracy"], "f1": metrics["weighted_f1"],
            "auc": metrics["auc"], "jacc": metrics["joint_accuracy"]}


def metrics_table(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ABLATION_FIELDS)
    for row in rows:
        w.writerow([row["variant"]] + [repr(float(row[k])) for k in ABLATION_FIELDS[1:]])
    return buf.getvalue()


def read_metrics_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames[:5]) != list(ABLATION_FIELDS):
            raise UserError(f"{path}: expected header {','.join(ABLATION_FIELDS)}")
        return [{"variant": r["variant"], **{k: float(r[k]) for k in ABLATION_FIELDS[1:]}} for r in reader]


@torch.no_grad()
def final_step_outputs(checkpoint: Checkpoint, data: CorpusArtifacts, split: str = "test"):
    """Model output and sample for the last target step of ``split``."""
    model = checkpoint.build_model()
    dtype = torch.float64 if checkpoint.config.float64 else torch.float32
    sample = build_samples(data, checkpoint.config, dtype)[split][-1]
    return model(sample.supply, sample.demand, sample.gap), sample


def plot_panels(path, data: CorpusArtifacts, skill_ids: list[int], out, sample) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = len(skill_ids)
    fig, axes = plt.subplots(n, 1, figsize=(7, 2.6 * n), squeeze=False)
    steps = np.arange(data.n_steps)
    pred_s = out.y_s[0].argmax(-1).numpy()
    pred_d = out.y_d[0].argmax(-1).numpy()
    for ax, k in zip(axes[:, 0], skill_ids):
        ax.plot(steps, data.demand[k], color="tab:red", label="demand")
        ax.plot(steps, data.supply[k], color="tab:blue", label="supply")
        ax.axvline(sample.target, color="grey", lw=0.8, ls=":")
        true_d, true_s = int(sample.label_d[k]), int(sample.label_s[k])
        ax.set_title(
            f"{data.vocab.names[k]}  step {sample.target}: "
            f"demand {TREND_NAMES[pred_d[k]]} (true {TREND_NAMES[true_d]}), "
            f"supply {TREND_NAMES[pred_s[k]]} (true {TREND_NAMES[true_s]})",
            fontsize=8,
        )
        ax.set_ylabel("share")
        ax.legend(fontsize=7, loc="upper left")
    axes[-1, 0].set_xlabel("step")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{path.suffix}")
    fig.savefig(tmp)
    plt.close(fig)
    tmp.replace(path)


def adjacency_tsv(A_p: np.ndarray, names: list[str]) -> str:
    """Nonzero learned edges as ``src<TAB>dst<TAB>weight``; node labels carry a view prefix."""
    K = len(names)
    label = lambda i: f"{'supply' if i < K else 'demand'}:{names[i % K]}"
    rows, cols = np.nonzero(A_p)
    return "".join(f"{label(i)}\t{label(j)}\t{A_p[i, j]!r}\n" for i, j in zip(rows, cols))


def clusters_tsv(S: np.ndarray, names: list[str]) -> str:
    K = len(names)
    hard = S.argmax(-1)
    lines = ["view\tskill\tcluster\tweight\n"]
    for i, c in enumerate(hard):
        lines.append(f"{'supply' if i < K else 'demand'}\t{names[i % K]}\t{int(c)}\t{float(S[i, c])!r}\n")
    return "".join(lines)


def render_report(checkpoint: Checkpoint, data: CorpusArtifacts, out_dir, *, skills=(), image=None,
                  ablation=None, split: str = "test", export_adjacency: bool = False,
                  export_clusters: bool = False) -> dict:
    """Write ``metrics.csv`` (and optionally panels and debug tables) into ``out_dir``.

    Returns the paths written.
    """
    out_dir = Path(out_dir)
    skill_ids = resolve_skills(skills, data.vocab)
    dtype = torch.float64 if checkpoint.config.float64 else torch.float32
    samples = build_samples(data, checkpoint.config, dtype)
    rows = [metrics_row(checkpoint.config.variant, evaluate_samples(checkpoint.build_model(), samples[split]))]
    if ablation is not None:
        rows += read_metrics_table(ablation)
    written = {"table": out_dir / "metrics.csv"}
    atomic_write_text(written["table"], metrics_table(rows))

    if skill_ids or export_adjacency or export_clusters:
        out, sample = final_step_outputs(checkpoint, data, split)
        if skill_ids:
            written["image"] = Path(image) if image is not None else out_dir / "report.png"
            plot_panels(written["image"], data, skill_ids, out, sample)
        if export_adjacency and out.A_p is not None:
            written["adjacency"] = out_dir / "adjacency.tsv"
            atomic_write_text(written["adjacency"], adjacency_tsv(out.A_p[0].numpy(), data.vocab.names))
        if export_clusters and out.S is not None:
            written["clusters"] = out_dir / "clusters.tsv"
            atomic_write_text(written["clusters"], clusters_tsv(out.S[0].numpy(), data.vocab.names))
    return written
