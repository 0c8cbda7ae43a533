import logging

import numpy as np
import pytest

from chgh.config import dump_kv, parse_kv
from chgh.errors import ConfigError
from chgh.synth import MarketSpec, generate_market, oracle_graph, oracle_shares, write_market


def empirical(docs, n_skills, n_steps):
    counts, totals = np.zeros((n_skills, n_steps)), np.zeros(n_steps)
    for d in docs:
        t = int(d["id"][1:].split("_")[0])
        totals[t] += 1
        for s in d["skills"]:
            counts[int(s.split("_")[1]), t] += 1
    return counts / totals


def test_deterministic_under_seed():
    spec = MarketSpec(n_skills=12, n_clusters_true=3, n_steps=6, docs_per_step=50, seed=7)
    a, b = generate_market(spec), generate_market(spec)
    assert a.jd == b.jd and a.we == b.we
    assert np.array_equal(a.p_demand, b.p_demand)
    c = generate_market(MarketSpec(n_skills=12, n_clusters_true=3, n_steps=6, docs_per_step=50, seed=8))
    assert c.jd != a.jd


def test_spec_validation():
    with pytest.raises(ConfigError):
        MarketSpec(n_skills=4, n_clusters_true=5)
    with pytest.raises(ConfigError):
        MarketSpec(demand_supply_lag=-1)


def test_spec_round_trips_through_config_format():
    spec = MarketSpec(n_skills=20, seed=3, trend_amplitude=0.5)
    assert parse_kv(dump_kv(spec), MarketSpec) == spec


def test_views_converge_without_noise_or_lag():
    spec = MarketSpec(n_skills=16, n_clusters_true=4, n_steps=8, docs_per_step=2000,
                      demand_supply_lag=0, noise_scale=0.0, seed=1)
    m = generate_market(spec)
    np.testing.assert_array_equal(m.p_demand, m.p_supply)
    D, S = empirical(m.jd, 16, 8), empirical(m.we, 16, 8)
    assert np.abs(D - S).max() < 0.05


def test_lag_shows_in_cross_correlation():
    spec = MarketSpec(n_skills=16, n_clusters_true=4, n_steps=36, docs_per_step=2000,
                      demand_supply_lag=3, noise_scale=0.0, seed=2)
    m = generate_market(spec)
    D, S = empirical(m.jd, 16, 36), empirical(m.we, 16, 36)
    peaks = []
    for k in range(16):
        if D[k].std() < 0.01:  # not trend-carrying
            continue
        scores = []
        for lag in range(7):
            a, b = D[k, : 36 - lag], S[k, lag:]
            scores.append(np.corrcoef(a, b)[0, 1])
        peaks.append(int(np.argmax(scores)))
    assert peaks and np.mean(np.array(peaks) == 3) >= 0.8


def test_flat_market_has_no_drift():
    spec = MarketSpec(n_skills=16, n_clusters_true=4, n_steps=10, docs_per_step=100,
                      trend_amplitude=0.0, noise_scale=0.0, seed=3)
    m = generate_market(spec)
    np.testing.assert_allclose(m.p_demand, m.p_demand[:, :1].repeat(10, axis=1))


def test_document_length_matches_spec():
    spec = MarketSpec(n_skills=32, n_clusters_true=4, n_steps=6, docs_per_step=1000, seed=4)
    m = generate_market(spec)
    for docs, p in ((m.jd, m.p_demand), (m.we, m.p_supply)):
        mean_len = np.mean([len(d["skills"]) for d in docs])
        target = p.sum(axis=0).mean()
        assert abs(mean_len - target) / target < 0.10


def test_clipping_is_logged(caplog):
    spec = MarketSpec(n_skills=8, n_clusters_true=2, n_steps=12, docs_per_step=5,
                      trend_amplitude=6.0, base_share_low=0.3, base_share_high=0.5, seed=5)
    with caplog.at_level(logging.WARNING, logger="chgh.synth"):
        m = generate_market(spec)
    assert "clipped" in caplog.text
    assert m.p_demand.max() <= 0.99 and m.p_demand.min() >= 0.01


def test_planted_clusters_show_in_cooccurrence():
    spec = MarketSpec(n_skills=24, n_clusters_true=4, n_steps=4, docs_per_step=1500, seed=6)
    m = generate_market(spec)
    from chgh.corpus import DocKind, Document

    docs = [Document(d["id"], DocKind.JOB_DESCRIPTION, 0, frozenset(int(s.split("_")[1]) for s in d["skills"]))
            for d in m.jd]
    A = oracle_graph(docs, 24, 0.0)
    same = m.cluster_of[:, None] == m.cluster_of[None, :]
    off = ~np.eye(24, dtype=bool)
    assert A[same & off].mean() > 3 * A[~same].mean()


def test_oracles_on_trivial_inputs():
    from chgh.corpus import DocKind, Document

    doc = Document("a", DocKind.JOB_DESCRIPTION, 1, frozenset({2}))
    shares = oracle_shares([doc], 3, 3)
    np.testing.assert_array_equal(shares, [[0, 0, 0], [0, 0, 0], [0, 1, 0]])
    assert not oracle_graph([], 3, 0.0).any()


def test_write_market(tmp_path):
    m = generate_market(MarketSpec(n_skills=8, n_clusters_true=2, n_steps=3, docs_per_step=10, seed=0))
    write_market(m, tmp_path / "mk")
    names = sorted(p.name for p in (tmp_path / "mk").iterdir())
    assert names == ["jd.jsonl", "spec.cfg", "truth.json", "truth.npz", "we.jsonl"]
    assert len((tmp_path / "mk" / "jd.jsonl").read_text().splitlines()) == 30
