"""Synthetic labour-market corpora with planted structure, plus brute-force oracles.

Each true cluster follows a latent trend (a piecewise-linear ramp with one
change-point plus a 12-month seasonal wave).  A skill's demand inclusion
probability follows its cluster's trend; its supply probability follows the
same trend ``lag`` months later.  Documents pick a dominant cluster first and
over-sample that cluster's skills, which plants co-occurrence structure while
keeping each skill's marginal inclusion probability exact.

The oracles at the bottom recount shares and co-occurrence ratios with plain
Python loops and share no code with :mod:`chgh.corpus`.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_output_dir
from .config import dump_kv
from .errors import ConfigError

log = logging.getLogger(__name__)

P_MIN, P_MAX = 0.01, 0.99


@dataclass
class MarketSpec:
    n_skills: int = 64
    n_clusters_true: int = 8
    n_steps: int = 24
    docs_per_step: int = 4000
    demand_supply_lag: int = 2
    trend_amplitude: float = 1.5
    noise_scale: float = 0.02
    seed: int = 0
    cluster_boost: float = 5.0
    base_share_low: float = 0.02
    base_share_high: float = 0.08
    start_month: str = "2017-09"

    def __post_init__(self):
        if self.n_skills < 1 or self.n_steps < 1 or self.docs_per_step < 0:
            raise ConfigError("n_skills and n_steps must be positive, docs_per_step nonnegative")
        if not 1 <= self.n_clusters_true <= self.n_skills:
            raise ConfigError("need 1 <= n_clusters_true <= n_skills")
        if self.demand_supply_lag < 0:
            raise ConfigError("lag must be >= 0")
        if self.trend_amplitude < 0 or self.noise_scale < 0 or self.cluster_boost < 1:
            raise ConfigError("amplitude and noise must be >= 0, cluster_boost >= 1")
        if not 0 < self.base_share_low <= self.base_share_high < 1:
            raise ConfigError("need 0 < base_share_low <= base_share_high < 1")


@dataclass
class Market:
    spec: MarketSpec
    jd: list[dict]
    we: list[dict]
    p_demand: np.ndarray  # (K, T) inclusion probabilities
    p_supply: np.ndarray
    cluster_of: np.ndarray  # (K,)
    trends: np.ndarray  # (C, T + lag) latent curves, index 0 is step -lag

    @property
    def skill_names(self) -> list[str]:
        return skill_names(self.spec.n_skills)


def skill_names(n: int) -> list[str]:
    return [f"skill_{k:03d}" for k in range(n)]


def _trend_curves(rng: np.random.Generator, n_clusters: int, times: np.ndarray, horizon: int) -> np.ndarray:
    curves = np.empty((n_clusters, len(times)))
    u = times / max(horizon - 1, 1)
    for c in range(n_clusters):
        change = rng.uniform(0.25, 0.75)
        s1, s2 = rng.uniform(-1.5, 1.5, size=2)
        ramp = np.where(u < change, s1 * (u - change), s2 * (u - change))
        phase = rng.uniform(0, 2 * np.pi)
        curves[c] = ramp + 0.3 * np.sin(2 * np.pi * times / 12 + phase)
    return curves - curves.mean(axis=1, keepdims=True)


def _probabilities(spec: MarketSpec, rng: np.random.Generator):
    K, C, T, lag = spec.n_skills, spec.n_clusters_true, spec.n_steps, spec.demand_supply_lag
    cluster_of = np.sort(rng.permutation(np.arange(K) % C))
    base = rng.uniform(spec.base_share_low, spec.base_share_high, size=K)
    loading = rng.uniform(0.5, 1.5, size=K)
    times = np.arange(-lag, T, dtype=np.float64)
    trends = _trend_curves(rng, C, times, T)
    curve_d = trends[cluster_of][:, lag:]
    curve_s = trends[cluster_of][:, : T] if lag else curve_d
    A = spec.trend_amplitude
    noise_d = spec.noise_scale * rng.standard_normal((K, T))
    noise_s = spec.noise_scale * rng.standard_normal((K, T))
    p_d = base[:, None] * np.exp(A * loading[:, None] * curve_d + noise_d)
    p_s = base[:, None] * np.exp(A * loading[:, None] * curve_s + noise_s)
    clipped = int(((p_d < P_MIN) | (p_d > P_MAX)).sum() + ((p_s < P_MIN) | (p_s > P_MAX)).sum())
    if clipped:
        log.warning("clipped %d inclusion probabilities to [%g, %g]", clipped, P_MIN, P_MAX)
    return np.clip(p_d, P_MIN, P_MAX), np.clip(p_s, P_MIN, P_MAX), cluster_of, trends


def _inclusion_table(p: np.ndarray, cluster_of: np.ndarray, n_clusters: int, boost: float) -> np.ndarray:
    """``(C, K)`` inclusion probabilities given the dominant cluster; averages back to ``p``."""
    if n_clusters == 1:
        return p[None, :].copy()
    boost = min(boost, n_clusters)
    q_in = np.minimum(P_MAX, boost * p)
    q_out = np.clip((p - q_in / n_clusters) / (1 - 1 / n_clusters), 0.0, 1.0)
    table = np.repeat(q_out[None, :], n_clusters, axis=0)
    member = cluster_of[None, :] == np.arange(n_clusters)[:, None]
    table[member] = np.broadcast_to(q_in, table.shape)[member]
    return table


def _sample_step(seed_seq, probs, cluster_of, spec, prefix, t, names, stamp):
    rng = np.random.default_rng(seed_seq)
    n = spec.docs_per_step
    table = _inclusion_table(probs[:, t], cluster_of, spec.n_clusters_true, spec.cluster_boost)
    dominant = rng.integers(0, spec.n_clusters_true, size=n)
    hits = rng.random((n, spec.n_skills)) < table[dominant]
    return [
        {"id": f"{prefix}{t}_{i}", "timestamp": stamp, "skills": [names[k] for k in np.flatnonzero(row)]}
        for i, row in enumerate(hits)
    ]


def _month_stamp(start: str, offset: int) -> str:
    y, m = (int(x) for x in start.split("-"))
    total = y * 12 + m - 1 + offset
    return f"{total // 12:04d}-{total % 12 + 1:02d}"


def generate_market(spec: MarketSpec) -> Market:
    """Sample both corpora.  Deterministic given ``spec.seed``."""
    root = np.random.SeedSequence(spec.seed)
    prob_seq, jd_seq, we_seq = root.spawn(3)
    p_d, p_s, cluster_of, trends = _probabilities(spec, np.random.default_rng(prob_seq))
    names = skill_names(spec.n_skills)
    jd, we = [], []
    for t, (sj, sw) in enumerate(zip(jd_seq.spawn(spec.n_steps), we_seq.spawn(spec.n_steps))):
        stamp = _month_stamp(spec.start_month, t)
        jd += _sample_step(sj, p_d, cluster_of, spec, "j", t, names, stamp)
        we += _sample_step(sw, p_s, cluster_of, spec, "w", t, names, stamp)
    return Market(spec, jd, we, p_d, p_s, cluster_of, trends)


def write_market(market: Market, out_dir) -> None:
    with atomic_output_dir(out_dir) as tmp:
        for name, docs in (("jd.jsonl", market.jd), ("we.jsonl", market.we)):
            with open(tmp / name, "w") as fh:
                for rec in docs:
                    fh.write(json.dumps(rec) + "\n")
        np.savez(tmp / "truth.npz", p_demand=market.p_demand, p_supply=market.p_supply,
                 cluster_of=market.cluster_of, trends=market.trends)
        (tmp / "spec.cfg").write_text(dump_kv(market.spec))
        (tmp / "truth.json").write_text(json.dumps({
            "spec": asdict(market.spec),
            "skills": market.skill_names,
            "cluster_of": market.cluster_of.tolist(),
        }, indent=2) + "\n")


# ---------------------------------------------------------------------------
# brute-force oracles

def oracle_shares(documents, n_skills: int, n_steps: int) -> np.ndarray:
    """Share matrix by scanning every (skill, step, document) triple."""
    out = np.zeros((n_skills, n_steps), dtype=np.float64)
    for t in range(n_steps):
        at_t = [doc for doc in documents if doc.timestep == t]
        if not at_t:
            continue
        for k in range(n_skills):
            hits = 0
            for doc in at_t:
                if k in doc.skills:
                    hits += 1
            out[k, t] = hits / len(at_t)
    return out


def oracle_graph(documents, n_skills: int, epsilon: float) -> np.ndarray:
    """Thresholded co-occurrence ratios by scanning every (i, j, document) triple."""
    out = np.zeros((n_skills, n_skills), dtype=np.float64)
    for i in range(n_skills):
        n_i = 0
        for doc in documents:
            if i in doc.skills:
                n_i += 1
        if n_i == 0:
            continue
        for j in range(n_skills):
            both = 0
            for doc in documents:
                if i in doc.skills and j in doc.skills:
                    both += 1
            r = both / n_i
            if r > epsilon:
                out[i, j] = r
    return out


def market_corpus(spec: MarketSpec, out_dir, *, epsilon: float = 0.1, min_count: int = 1):
    """Generate a market and run it through the corpus pipeline.

    Raw documents go to ``out_dir/raw``, artifacts to ``out_dir/corpus``.
    """
    from .corpus import build_corpus

    out_dir = Path(out_dir)
    market = generate_market(spec)
    write_market(market, out_dir / "raw")
    data = build_corpus(out_dir / "raw" / "jd.jsonl", out_dir / "raw" / "we.jsonl", out_dir / "corpus",
                        epsilon=epsilon, min_count=min_count)
    return market, data
