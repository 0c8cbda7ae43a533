"""Windowed training samples and train/validation/test splits.

A sample is one target month ``tau``: the model sees every skill's history
window ending at ``tau - 1`` and is asked for the trend classes at ``tau``.
Inputs are standardized per skill with the same window statistics the labels
use, so the network works on the scale the classes are defined on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .config import ModelConfig
from .corpus import CorpusArtifacts
from .errors import ConfigError
from .labels import trend_classes

SPLITS = ("train", "val", "test")


@dataclass
class Sample:
    target: int
    supply: torch.Tensor  # (K, L) standardized inputs
    demand: torch.Tensor
    gap: torch.Tensor
    label_s: torch.Tensor  # (K,) class indices
    label_d: torch.Tensor
    mask: torch.Tensor  # (K,) bool, skills scored for this split


def _zscore(window: np.ndarray) -> np.ndarray:
    mean = window.mean(axis=1, keepdims=True)
    std = window.std(axis=1, keepdims=True)
    safe = np.where(std > 0, std, 1.0)
    return np.where(std > 0, (window - mean) / safe, 0.0)


def temporal_boundaries(n_steps: int) -> tuple[int, int]:
    """First validation and first test month under an 8:1:1 split of the time axis."""
    return int(round(0.8 * n_steps)), int(round(0.9 * n_steps))


def split_targets(n_steps: int, config: ModelConfig) -> dict[str, list[int]]:
    first = max(config.min_seq_len, config.window)
    if config.split == "skill":
        targets = list(range(first, n_steps))
        if not targets:
            raise ConfigError(f"{n_steps} steps leave no target after {first} history steps")
        return {s: targets for s in SPLITS}
    b1, b2 = temporal_boundaries(n_steps)
    out = {"train": list(range(first, b1)), "val": list(range(max(first, b1), b2)), "test": list(range(max(first, b2), n_steps))}
    if not out["train"]:
        raise ConfigError(f"{n_steps} steps leave no training target after {first} history steps")
    if not out["val"] or b1 < config.min_seq_len:
        raise ConfigError(f"validation range [{b1}, {b2}) has less history than min_seq_len={config.min_seq_len} or is empty")
    return out


def skill_masks(n_skills: int, seed: int) -> dict[str, np.ndarray]:
    """Seeded 8:1:1 partition of skills (only used with ``split = skill``)."""
    perm = np.random.default_rng(seed).permutation(n_skills)
    a, b = int(round(0.8 * n_skills)), int(round(0.9 * n_skills))
    masks = {}
    for name, idx in zip(SPLITS, (perm[:a], perm[a:b], perm[b:])):
        m = np.zeros(n_skills, dtype=bool)
        m[idx] = True
        masks[name] = m
    return masks


def make_sample(demand, supply, target: int, config: ModelConfig, mask=None, dtype=torch.float32) -> Sample:
    lo = 0 if config.window == 0 else target - config.window
    win_d = demand[:, lo:target]
    win_s = supply[:, lo:target]
    z_d, z_s = _zscore(win_d), _zscore(win_s)
    lab_d = trend_classes(demand, target, config.window, config.n_classes)
    lab_s = trend_classes(supply, target, config.window, config.n_classes)
    K = demand.shape[0]
    mask = np.ones(K, dtype=bool) if mask is None else mask
    t = lambda a: torch.as_tensor(np.ascontiguousarray(a), dtype=dtype)
    return Sample(target, t(z_s), t(z_d), t(z_d - z_s),
                  torch.as_tensor(lab_s), torch.as_tensor(lab_d), torch.as_tensor(mask))


def build_samples(data: CorpusArtifacts, config: ModelConfig, dtype=torch.float32) -> dict[str, list[Sample]]:
    targets = split_targets(data.n_steps, config)
    masks = skill_masks(len(data.vocab), config.seed) if config.split == "skill" else {}
    return {
        split: [make_sample(data.demand, data.supply, tau, config, masks.get(split), dtype) for tau in taus]
        for split, taus in targets.items()
    }
