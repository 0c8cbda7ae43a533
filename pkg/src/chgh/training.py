"""Losses, the training loop, evaluation, checkpoints and the ablation ladder."""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ._io import atomic_output_dir
from .config import VARIANTS, ModelConfig
from .corpus import CorpusArtifacts
from .data import Sample, build_samples
from .errors import ConfigError, DimensionError, NumericError
from .labels import classification_metrics, joint_accuracy, predicted_classes
from .model import CHGH
from .model.hierarchical import cluster_entropy_loss

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
_LOG_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# losses

@dataclass
class LossBundle:
    main: torch.Tensor
    cluster: torch.Tensor
    l2: torch.Tensor
    total: torch.Tensor

    def item(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach()) for k in ("main", "cluster", "l2", "total")}


def main_loss(y_s, y_d, labels_s, labels_d, mask=None) -> torch.Tensor:
    """Joint cross-entropy averaged over both views and the (masked) skills.

    ``labels_*`` are class-index tensors ``(…, K)`` or one-hot ``(…, K, m)``.
    """
    if y_s.shape != y_d.shape:
        raise DimensionError(f"prediction shapes differ: {tuple(y_s.shape)} vs {tuple(y_d.shape)}")
    m = y_s.shape[-1]

    def onehot(lab):
        lab = torch.as_tensor(lab)
        if lab.shape == y_s.shape:
            return lab.to(y_s.dtype)
        if lab.shape != y_s.shape[:-1]:
            raise DimensionError(f"labels {tuple(lab.shape)} do not match predictions {tuple(y_s.shape)}")
        return torch.nn.functional.one_hot(lab.long(), m).to(y_s.dtype)

    ce = -(onehot(labels_s) * torch.log(y_s.clamp_min(_LOG_FLOOR))).sum(-1)
    ce = ce - (onehot(labels_d) * torch.log(y_d.clamp_min(_LOG_FLOOR))).sum(-1)
    if mask is not None:
        mask = torch.as_tensor(mask, dtype=y_s.dtype).expand_as(ce)
        return (ce * mask).sum() / (2 * mask.sum())
    return ce.sum() / (2 * ce.numel())


def main_loss_from_logits(logits_s, logits_d, labels_s, labels_d, mask=None) -> torch.Tensor:
    """Same objective as :func:`main_loss`, evaluated stably from logits.

    Agrees with :func:`main_loss` whenever no true-class probability falls
    below the clamp floor; unlike the clamped form it keeps a gradient when the
    softmax saturates.
    """
    ce = torch.nn.functional.cross_entropy(logits_s.flatten(0, -2), labels_s.long().flatten(), reduction="none")
    ce = ce + torch.nn.functional.cross_entropy(logits_d.flatten(0, -2), labels_d.long().flatten(), reduction="none")
    ce = ce.view(labels_s.shape)
    if mask is not None:
        mask = torch.as_tensor(mask, dtype=ce.dtype).expand_as(ce)
        return (ce * mask).sum() / (2 * mask.sum())
    return ce.sum() / (2 * ce.numel())


def l2_penalty(model: torch.nn.Module) -> torch.Tensor:
    return sum((p * p).sum() for p in model.parameters())


def total_loss(main, cluster, l2, lambda1: float, lambda2: float) -> LossBundle:
    main, cluster, l2 = (torch.as_tensor(x, dtype=torch.get_default_dtype()) if not torch.is_tensor(x) else x
                         for x in (main, cluster, l2))
    total = main + lambda1 * cluster + lambda2 * l2
    if not torch.isfinite(total):
        raise NumericError(f"non-finite loss (main={float(main)}, cluster={float(cluster)}, l2={float(l2)})")
    return LossBundle(main, cluster, l2, total)


def compute_losses(model: CHGH, sample: Sample) -> tuple[LossBundle, object]:
    out = model(sample.supply, sample.demand, sample.gap)
    main = main_loss_from_logits(out.logits_s[0], out.logits_d[0], sample.label_s, sample.label_d, sample.mask)
    cluster = cluster_entropy_loss(out.S) if out.S is not None else main.new_zeros(())
    bundle = total_loss(main, cluster, l2_penalty(model), model.config.lambda1, model.config.lambda2)
    return bundle, out


# ---------------------------------------------------------------------------
# checkpoints

@dataclass
class Checkpoint:
    config: ModelConfig
    state: dict[str, torch.Tensor]
    epoch: int
    history: list[dict] = field(default_factory=list)
    skills: list[str] = field(default_factory=list)
    data_dir: str | None = None

    def build_model(self) -> CHGH:
        dtype = torch.float64 if self.config.float64 else torch.float32
        A_in = self.state["graph.A_in"]
        K = A_in.shape[0] // 2
        model = CHGH(self.config, A_in[:K, :K], A_in[K:, K:]).to(dtype)
        model.load_state_dict(self.state)
        model.eval()
        return model

    def save(self, out_dir) -> None:
        """Directory with ``params.npz`` (exact tensor values) and ``manifest.json``."""
        manifest = {
            "format_version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "epoch": self.epoch,
            "history": self.history,
            "skills": self.skills,
            "data_dir": self.data_dir,
            "param_shapes": {k: list(v.shape) for k, v in self.state.items()},
            "saved_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        with atomic_output_dir(out_dir) as tmp:
            np.savez(tmp / "params.npz", **{k: v.detach().cpu().numpy() for k, v in self.state.items()})
            (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, ckpt_dir) -> "Checkpoint":
        ckpt_dir = Path(ckpt_dir)
        if not (ckpt_dir / "manifest.json").exists() or not (ckpt_dir / "params.npz").exists():
            raise ConfigError(f"checkpoint not found: {ckpt_dir}")
        manifest = json.loads((ckpt_dir / "manifest.json").read_text())
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {manifest.get('format_version')}")
        with np.load(ckpt_dir / "params.npz") as blob:
            state = {k: torch.from_numpy(blob[k].copy()) for k in blob.files}
        return cls(ModelConfig(**manifest["config"]), state, manifest["epoch"], manifest["history"],
                   manifest.get("skills", []), manifest.get("data_dir"))


# ---------------------------------------------------------------------------
# training

def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % (2**32))


def init_model(config: ModelConfig, data: CorpusArtifacts) -> CHGH:
    dtype = torch.float64 if config.float64 else torch.float32
    seed_everything(config.seed)
    return CHGH(config, data.graph_supply, data.graph_demand).to(dtype)


def make_optimizer(model: CHGH, config: ModelConfig):
    base, hyper = model.param_groups()
    groups = [{"params": base, "lr": config.learning_rate}]
    if hyper:
        groups.append({"params": hyper, "lr": config.learning_rate * config.hyper_lr_mult})
    opt = torch.optim.Adam(groups, foreach=True)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=config.scheduler_step, gamma=config.scheduler_factor)
    return opt, sched


@dataclass
class TrainResult:
    checkpoint: Checkpoint  # best validation J-ACC
    final_state: dict[str, torch.Tensor]
    history: list[dict]
    aborted: bool = False


def _snapshot(model) -> dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def train(config: ModelConfig, data: CorpusArtifacts, *, samples=None, data_dir=None, model=None,
          eval_every: int = 1, progress=None) -> TrainResult:
    """Full-batch training (all skills per step, one step per training month).

    Keeps the parameters with the best validation J-ACC; stops early after
    ``config.patience`` epochs without improvement.  A non-finite loss stops
    training and returns the last good checkpoint.
    """
    dtype = torch.float64 if config.float64 else torch.float32
    samples = samples or build_samples(data, config, dtype)
    model = model or init_model(config, data)
    opt, sched = make_optimizer(model, config)
    order_rng = np.random.default_rng(config.seed)

    history: list[dict] = []
    best_state, best_jacc, best_epoch, stale = _snapshot(model), -1.0, 0, 0
    aborted = False
    for epoch in range(1, config.epochs + 1):
        model.train()
        sums = {"main": 0.0, "cluster": 0.0, "l2": 0.0, "total": 0.0}
        good_state = _snapshot(model)
        try:
            for i in order_rng.permutation(len(samples["train"])):
                bundle, _ = compute_losses(model, samples["train"][i])
                opt.zero_grad()
                bundle.total.backward()
                opt.step()
                for k, v in bundle.item().items():
                    sums[k] += v
        except NumericError as exc:
            log.error("epoch %d: %s; keeping last good parameters", epoch, exc)
            model.load_state_dict(good_state)
            aborted = True
            break
        n = len(samples["train"])
        row = {"epoch": epoch, "lr": opt.param_groups[0]["lr"], **{f"loss_{k}": v / n for k, v in sums.items()}}
        sched.step()
        if epoch % eval_every == 0 or epoch == config.epochs:
            val = evaluate_samples(model, samples["val"])
            row["val_jacc"] = val["joint_accuracy"]
            row["val_acc"] = val["accuracy"]
            if val["joint_accuracy"] > best_jacc:
                best_jacc, best_epoch, stale = val["joint_accuracy"], epoch, 0
                best_state = _snapshot(model)
            else:
                stale += eval_every
        history.append(row)
        if progress is not None:
            progress(row)
        if config.patience and stale >= config.patience:
            log.info("early stop at epoch %d (best val J-ACC %.4f at %d)", epoch, best_jacc, best_epoch)
            break
    skills = list(data.vocab.names)
    ckpt = Checkpoint(config, best_state, best_epoch, history, skills, str(data_dir) if data_dir else None)
    return TrainResult(ckpt, _snapshot(model), history, aborted)


# ---------------------------------------------------------------------------
# evaluation

@torch.no_grad()
def predict(model: CHGH, samples: list[Sample]):
    """Stacked ``(probs_s, probs_d, true_s, true_d)`` over all masked rows of ``samples``."""
    model.eval()
    ps, pd, ts, td = [], [], [], []
    for s in samples:
        out = model(s.supply, s.demand, s.gap)
        m = s.mask.numpy()
        ps.append(out.y_s[0].double().numpy()[m])
        pd.append(out.y_d[0].double().numpy()[m])
        ts.append(s.label_s.numpy()[m])
        td.append(s.label_d.numpy()[m])
    return np.concatenate(ps), np.concatenate(pd), np.concatenate(ts), np.concatenate(td)


def metrics_from_predictions(ps, pd, ts, td) -> dict:
    sup = classification_metrics(ps, ts)
    dem = classification_metrics(pd, td)
    jacc = joint_accuracy(predicted_classes(ps), predicted_classes(pd), ts, td)
    return {
        "supply": sup,
        "demand": dem,
        "accuracy": (sup["accuracy"] + dem["accuracy"]) / 2,
        "weighted_f1": (sup["weighted_f1"] + dem["weighted_f1"]) / 2,
        "auc": (sup["auc"] + dem["auc"]) / 2,
        "joint_accuracy": jacc,
        "n": int(len(ts)),
    }


def evaluate_samples(model: CHGH, samples: list[Sample]) -> dict:
    if not samples:
        raise ConfigError("cannot evaluate an empty split")
    return metrics_from_predictions(*predict(model, samples))


def evaluate(checkpoint: Checkpoint, data: CorpusArtifacts, split: str = "test") -> dict:
    """Metrics per view plus J-ACC for one split.  Dropout is disabled."""
    model = checkpoint.build_model()
    dtype = torch.float64 if checkpoint.config.float64 else torch.float32
    samples = build_samples(data, checkpoint.config, dtype)
    if split not in samples:
        raise ConfigError(f"unknown split {split!r}")
    return evaluate_samples(model, samples[split])


# ---------------------------------------------------------------------------
# ablation

ABLATION_FIELDS = ("variant", "acc", "f1", "auc", "jacc")


def run_ablation(config: ModelConfig, data: CorpusArtifacts, seeds=range(5), variants=VARIANTS, progress=None) -> list[dict]:
    """Train every variant on every seed; report test metrics averaged over seeds, in ladder order."""
    report = []
    for variant in variants:
        runs = []
        for seed in seeds:
            cfg = config.replace(variant=variant, seed=int(seed))
            res = train(cfg, data)
            metrics = evaluate_samples(res.checkpoint.build_model(), build_samples(data, cfg)["test"])
            runs.append(metrics)
            if progress is not None:
                progress(variant, seed, metrics)
        report.append({
            "variant": variant,
            "acc": float(np.mean([r["accuracy"] for r in runs])),
            "f1": float(np.mean([r["weighted_f1"] for r in runs])),
            "auc": float(np.mean([r["auc"] for r in runs])),
            "jacc": float(np.mean([r["joint_accuracy"] for r in runs])),
            "jacc_per_seed": [r["joint_accuracy"] for r in runs],
        })
    return report


def ablation_csv(report: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ABLATION_FIELDS)
    for row in report:
        w.writerow([row["variant"]] + [repr(float(row[k])) for k in ABLATION_FIELDS[1:]])
    return buf.getvalue()
