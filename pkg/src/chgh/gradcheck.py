"""Central finite-difference gradient checks in float64.

Relative error is measured per parameter group as
``||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||, floor)``, which stays
meaningful when individual entries are near zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .config import ModelConfig
from .data import Sample
from .errors import NumericError


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tol: float
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def failures(self) -> list[str]:
        return [g for g, e in self.errors.items() if not e < self.tol]

    @property
    def passed(self) -> bool:
        return not self.failures

    def raise_on_failure(self) -> None:
        if not self.passed:
            detail = ", ".join(f"{g}={self.errors[g]:.3g}" for g in self.failures)
            raise NumericError(f"gradient check failed (tol {self.tol:g}): {detail}")


def gradient_check(loss_fn, groups: dict[str, list[tuple[str, torch.Tensor]]], *, step: float = 1e-5,
                   tol: float = 1e-4, max_per_tensor: int | None = None, seed: int = 0,
                   floor: float = 1e-10) -> GradCheckReport:
    """Compare autograd against central differences of ``loss_fn()``.

    ``groups`` maps a group name to ``(name, tensor)`` pairs; tensors must be
    float64 leaves with ``requires_grad``.  ``max_per_tensor`` caps how many
    entries per tensor are perturbed (chosen at random).  Gradient hooks on the
    tensors apply to the analytic side, which is how a corrupted gradient is
    detected.
    """
    tensors = [t for members in groups.values() for _, t in members]
    for t in tensors:
        if t.dtype != torch.float64:
            raise NumericError("gradient checks need float64 tensors")
    loss = loss_fn()
    analytic = torch.autograd.grad(loss, tensors, allow_unused=True)
    analytic = {id(t): (g if g is not None else torch.zeros_like(t)) for t, g in zip(tensors, analytic)}

    rng = np.random.default_rng(seed)
    errors, checked = {}, {}
    with torch.no_grad():
        for group, members in groups.items():
            a_parts, n_parts = [], []
            for _, t in members:
                flat = t.view(-1)
                idx = np.arange(flat.numel())
                if max_per_tensor is not None and idx.size > max_per_tensor:
                    idx = np.sort(rng.choice(idx, size=max_per_tensor, replace=False))
                g = analytic[id(t)].reshape(-1)
                for i in idx:
                    orig = flat[i].item()
                    flat[i] = orig + step
                    up = float(loss_fn())
                    flat[i] = orig - step
                    down = float(loss_fn())
                    flat[i] = orig
                    n_parts.append((up - down) / (2 * step))
                    a_parts.append(float(g[i]))
            a, n = np.asarray(a_parts), np.asarray(n_parts)
            denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
            errors[group] = float(np.linalg.norm(a - n) / denom)
            checked[group] = len(a_parts)
    return GradCheckReport(errors, tol, checked)


def tiny_problem(n_skills: int = 8, n_steps: int = 6, d: int = 4, n_clusters: int = 3, m: int = 3,
                 seed: int = 0, **overrides):
    """A random float64 model and one sample at toy size, dropout off."""
    from .model import CHGH

    rng = np.random.default_rng(seed)
    kw = dict(d=d, c=n_clusters, heads=1, recurrent_layers=2, min_seq_len=2, n_classes=m, dropout=0.0,
              lambda1=0.1, lambda2=1e-3, seed=seed, float64=True)
    kw.update(overrides)
    config = ModelConfig(**kw)
    A = rng.random((2, n_skills, n_skills))
    A = np.where(A > 0.5, A, 0.0)
    torch.manual_seed(seed)
    model = CHGH(config, torch.as_tensor(A[0]), torch.as_tensor(A[1])).double()
    model.eval()
    t = lambda a: torch.as_tensor(a, dtype=torch.float64)
    supply, demand = rng.normal(size=(n_skills, n_steps)), rng.normal(size=(n_skills, n_steps))
    sample = Sample(n_steps, t(supply), t(demand), t(demand - supply),
                    torch.as_tensor(rng.integers(0, m, n_skills)), torch.as_tensor(rng.integers(0, m, n_skills)),
                    torch.ones(n_skills, dtype=torch.bool))
    return model, sample


def check_model(model, sample: Sample, **kwargs) -> GradCheckReport:
    """Gradient check of the total training loss over every parameter group of ``model``."""
    from .training import compute_losses

    groups = {g: [(n, p) for n, p in members if p.requires_grad]
              for g, members in model.named_parameter_groups().items()}
    return gradient_check(lambda: compute_losses(model, sample)[0].total, groups, **kwargs)
