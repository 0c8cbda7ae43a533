import math

import numpy as np
import pytest
import torch

from chgh import training
from chgh.config import ModelConfig
from chgh.data import build_samples, split_targets
from chgh.errors import ConfigError, DimensionError, NumericError
from chgh.gradcheck import check_model, gradient_check, tiny_problem
from chgh.model import CHGH
from chgh.training import (
    Checkpoint,
    compute_losses,
    evaluate,
    evaluate_samples,
    init_model,
    l2_penalty,
    main_loss,
    main_loss_from_logits,
    total_loss,
    train,
)


def quick(**kw):
    base = dict(d=8, heads=2, c=4, dropout=0.0, epochs=5, patience=0, seed=0)
    base.update(kw)
    return ModelConfig(**base)


# ---------------------------------------------------------------------------
# losses

def test_perfect_predictions_cost_nothing():
    labels = torch.tensor([0, 3, 1])
    y = torch.nn.functional.one_hot(labels, 5).double()
    assert main_loss(y, y, labels, labels).item() == 0.0


def test_uniform_predictions_cost_ln_m():
    y = torch.full((7, 5), 0.2, dtype=torch.float64)
    labels = torch.tensor([0, 1, 2, 3, 4, 0, 1])
    assert main_loss(y, y, labels, labels).item() == pytest.approx(math.log(5), rel=1e-12)


def test_three_skill_hand_sum():
    y_s = torch.tensor([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8], [0.3, 0.4, 0.3]], dtype=torch.float64)
    y_d = torch.tensor([[0.5, 0.25, 0.25], [0.6, 0.3, 0.1], [0.2, 0.2, 0.6]], dtype=torch.float64)
    lab_s, lab_d = torch.tensor([0, 2, 1]), torch.tensor([1, 0, 2])
    hand = -(math.log(0.7) + math.log(0.8) + math.log(0.4) + math.log(0.25) + math.log(0.6) + math.log(0.6)) / 6
    assert main_loss(y_s, y_d, lab_s, lab_d).item() == pytest.approx(hand, rel=1e-12)
    # one-hot labels give the same value
    oh = lambda l: torch.nn.functional.one_hot(l, 3)
    assert main_loss(y_s, y_d, oh(lab_s), oh(lab_d)).item() == pytest.approx(hand, rel=1e-12)


def test_clamp_keeps_zero_probability_finite():
    y = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    loss = main_loss(y, y, torch.tensor([1]), torch.tensor([1]))
    assert loss.item() == pytest.approx(-math.log(1e-12))


def test_logit_form_agrees():
    g = torch.Generator().manual_seed(0)
    ls, ld = torch.randn(10, 5, generator=g, dtype=torch.float64), torch.randn(10, 5, generator=g, dtype=torch.float64)
    lab_s, lab_d = torch.randint(0, 5, (10,), generator=g), torch.randint(0, 5, (10,), generator=g)
    mask = torch.arange(10) % 3 != 0
    a = main_loss(ls.softmax(-1), ld.softmax(-1), lab_s, lab_d, mask)
    b = main_loss_from_logits(ls, ld, lab_s, lab_d, mask)
    assert a.item() == pytest.approx(b.item(), rel=1e-12)


def test_loss_shape_errors():
    y = torch.full((3, 5), 0.2)
    with pytest.raises(DimensionError):
        main_loss(y, torch.full((3, 4), 0.25), torch.zeros(3), torch.zeros(3))
    with pytest.raises(DimensionError):
        main_loss(y, y, torch.zeros(4), torch.zeros(4))


def test_total_loss_arithmetic():
    b = total_loss(1.0, 2.0, 3.0, 0.5, 0.1)
    assert b.total.item() == pytest.approx(2.3)
    b = total_loss(torch.tensor(0.7), torch.tensor(5.0), torch.tensor(9.0), 0.0, 0.0)
    assert b.total.item() == pytest.approx(0.7)


@pytest.mark.parametrize("bad", [float("nan"), float("inf")])
def test_non_finite_loss_raises(bad):
    with pytest.raises(NumericError):
        total_loss(1.0, bad, 0.0, 0.5, 0.0)


def test_loss_recomposes_from_parts():
    model, sample = tiny_problem(lambda1=0.3, lambda2=0.01)
    bundle, out = compute_losses(model, sample)
    main = main_loss(out.y_s[0], out.y_d[0], sample.label_s, sample.label_d)
    ent = -(out.S * out.S.log()).sum(-1).mean()
    l2 = sum((p.detach() ** 2).sum() for p in model.parameters())
    assert bundle.main.item() == pytest.approx(main.item(), rel=1e-10)
    assert bundle.cluster.item() == pytest.approx(ent.item(), rel=1e-10)
    assert bundle.l2.item() == pytest.approx(l2.item(), rel=1e-12)
    assert bundle.total.item() == pytest.approx(main.item() + 0.3 * ent.item() + 0.01 * l2.item(), rel=1e-10)
    assert min(bundle.item().values()) >= 0


def test_l2_covers_every_parameter():
    model, _ = tiny_problem()
    names = {n for n, _ in model.named_parameters()}
    assert any("hyper" in n for n in names) and any(n.startswith("E") or ".E" in n for n in names)
    assert l2_penalty(model).detach().item() == pytest.approx(sum(float((p.detach() ** 2).sum()) for p in model.parameters()))


# ---------------------------------------------------------------------------
# splits and config

def test_temporal_split_is_ordered():
    t = split_targets(24, ModelConfig())
    assert t["train"] == list(range(5, 19)) and t["val"] == [19, 20, 21] and t["test"] == [22, 23]


def test_short_validation_window_is_rejected():
    with pytest.raises(ConfigError):
        split_targets(6, ModelConfig(min_seq_len=5))


def test_skill_split_partitions_skills(toy_corpus):
    samples = build_samples(toy_corpus, quick(split="skill"))
    masks = [samples[s][0].mask.numpy() for s in ("train", "val", "test")]
    assert (sum(m.astype(int) for m in masks) == 1).all()


# ---------------------------------------------------------------------------
# training loop

def test_zero_learning_rate_changes_nothing(toy_corpus):
    cfg = quick(learning_rate=0.0, epochs=3)
    before = {k: v.clone() for k, v in init_model(cfg, toy_corpus).state_dict().items()}
    res = train(cfg, toy_corpus)
    for k, v in res.final_state.items():
        assert torch.equal(v, before[k]), k


def test_history_is_deterministic(toy_corpus):
    cfg = quick(epochs=8, dropout=0.3)
    a, b = train(cfg, toy_corpus), train(cfg, toy_corpus)
    assert a.history == b.history
    for k in a.final_state:
        assert torch.equal(a.final_state[k], b.final_state[k])


def test_history_rows_obey_loss_identity(toy_corpus):
    cfg = quick(epochs=3, lambda1=0.5, lambda2=0.01)
    for row in train(cfg, toy_corpus).history:
        recomposed = row["loss_main"] + 0.5 * row["loss_cluster"] + 0.01 * row["loss_l2"]
        assert row["loss_total"] == pytest.approx(recomposed, rel=1e-5)


def test_early_stopping(toy_corpus):
    res = train(quick(epochs=50, patience=2, learning_rate=0.0), toy_corpus)
    assert len(res.history) == 3 and res.checkpoint.epoch == 1


def test_divergence_keeps_last_good_state(toy_corpus, monkeypatch):
    calls = {"n": 0}
    real = training.compute_losses
    n_train = len(build_samples(toy_corpus, quick())["train"])

    def flaky(model, sample):
        calls["n"] += 1
        if calls["n"] > n_train:  # fail during the second epoch
            raise NumericError("injected")
        return real(model, sample)

    monkeypatch.setattr(training, "compute_losses", flaky)
    res = train(quick(epochs=5), toy_corpus)
    assert res.aborted and len(res.history) == 1
    monkeypatch.setattr(training, "compute_losses", real)
    one = train(quick(epochs=1), toy_corpus)
    for k in one.final_state:
        assert torch.equal(res.final_state[k], one.final_state[k])


def test_checkpoint_round_trip(toy_corpus, tmp_path):
    res = train(quick(epochs=3), toy_corpus, data_dir=str(toy_corpus.path))
    res.checkpoint.save(tmp_path / "ck")
    loaded = Checkpoint.load(tmp_path / "ck")
    assert loaded.config == res.checkpoint.config and loaded.history == res.checkpoint.history
    s = build_samples(toy_corpus, loaded.config)["test"][0]
    a = res.checkpoint.build_model()(s.supply, s.demand, s.gap)
    b = loaded.build_model()(s.supply, s.demand, s.gap)
    assert torch.equal(a.y_s, b.y_s) and torch.equal(a.y_d, b.y_d)
    assert evaluate(res.checkpoint, toy_corpus) == evaluate(loaded, toy_corpus)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(ConfigError):
        Checkpoint.load(tmp_path)


# ---------------------------------------------------------------------------
# evaluation and variants

def test_chance_level_at_initialisation(toy_corpus):
    accs = []
    for seed in range(5):
        cfg = quick(seed=seed)
        m = evaluate_samples(init_model(cfg, toy_corpus).eval(), build_samples(toy_corpus, cfg)["train"])
        accs.append(m["accuracy"])
        assert m["joint_accuracy"] <= min(m["supply"]["accuracy"], m["demand"]["accuracy"])
    assert abs(np.mean(accs) - 0.2) <= 0.1


def test_full_variant_is_the_default(toy_corpus):
    a = init_model(quick(), toy_corpus)
    b = init_model(quick(variant="full"), toy_corpus)
    sa, sb = a.state_dict(), b.state_dict()
    assert sa.keys() == sb.keys() and all(torch.equal(sa[k], sb[k]) for k in sa)


def test_variant_wiring(toy_corpus):
    names = {v: {n for n, _ in init_model(quick(variant=v), toy_corpus).named_parameters()}
             for v in ("static", "adaptive", "cge", "hge", "full")}
    counts = {v: sum(p.numel() for p in init_model(quick(variant=v), toy_corpus).parameters()) for v in names}
    assert not any("alpha" in n or "beta" in n for n in names["static"])
    assert counts["static"] < counts["cge"]
    assert not any(n.startswith("hier") for n in names["cge"]) and any(n.startswith("hier") for n in names["hge"])
    assert not any("hyper" in n for n in names["hge"]) and any("hyper" in n for n in names["full"])


# ---------------------------------------------------------------------------
# gradient checks

def test_gradcheck_linear_toy():
    g = torch.Generator().manual_seed(0)
    W = torch.randn(3, 4, generator=g, dtype=torch.float64, requires_grad=True)
    x = torch.randn(4, 5, generator=g, dtype=torch.float64)
    c = torch.randn(3, 5, generator=g, dtype=torch.float64)
    report = gradient_check(lambda: ((W @ x) * c).sum(), {"W": [("W", W)]})
    assert report.worst < 1e-7


def test_gradcheck_catches_corrupted_gradient():
    W = torch.ones(3, dtype=torch.float64, requires_grad=True)
    W.register_hook(lambda g: g * 1.01)
    report = gradient_check(lambda: (W ** 2).sum(), {"W": [("W", W)]})
    assert not report.passed and report.failures == ["W"]
    with pytest.raises(NumericError, match="W="):
        report.raise_on_failure()


def test_gradcheck_needs_float64():
    W = torch.ones(2, requires_grad=True)
    with pytest.raises(NumericError):
        gradient_check(lambda: W.sum(), {"W": [("W", W)]})


def test_gradcheck_tiny_model_sampled():
    model, sample = tiny_problem()
    report = check_model(model, sample, max_per_tensor=3)
    assert report.passed, report.errors
    assert set(report.errors) == set(model.named_parameter_groups())
