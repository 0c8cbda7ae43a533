import numpy as np
import pytest
import torch

from chgh.errors import ConfigError, DimensionError
from chgh.gradcheck import gradient_check
from chgh.model.crossview import (
    CrossViewEncoder,
    block_diag_views,
    cross_view_augment,
    learn_adaptive_adjacency,
    row_normalize,
)


def oracle_adjacency(E_S, E_D, alpha, beta, delta):
    X = np.vstack([E_S, E_D])
    XA, XB = np.tanh(alpha * X), np.tanh(beta * X)
    M = np.maximum(XA @ XB.T - XB @ XA.T, 0)
    P = np.exp(M - M.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    return np.maximum(P - delta, 0)


def adjacency(E_S, E_D, alpha=1.0, beta=1.0, delta=0.05):
    t = lambda a: torch.as_tensor(a, dtype=torch.float64)
    return learn_adaptive_adjacency(t(E_S), t(E_D), t(alpha), t(beta), delta).numpy()


def test_full_saturation_gives_zero():
    rng = np.random.default_rng(0)
    assert not adjacency(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), delta=1.0).any()


def test_zero_embeddings_uniform():
    A = adjacency(np.zeros((2, 3)), np.zeros((2, 3)), delta=0.1)
    np.testing.assert_allclose(A, np.full((4, 4), 0.15))


def test_negative_delta_rejected():
    with pytest.raises(ConfigError):
        adjacency(np.zeros((2, 2)), np.zeros((2, 2)), delta=-0.1)


def test_matches_oracle_and_sparsifies_with_delta():
    rng = np.random.default_rng(1)
    E_S, E_D = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    np.testing.assert_allclose(adjacency(E_S, E_D, 1.0, 1.0, 0.05), oracle_adjacency(E_S, E_D, 1.0, 1.0, 0.05), atol=1e-12)
    np.testing.assert_allclose(adjacency(E_S, E_D, 0.7, 1.9, 0.05), oracle_adjacency(E_S, E_D, 0.7, 1.9, 0.05), atol=1e-12)
    counts = [(adjacency(E_S, E_D, 0.7, 1.9, d) > 0).sum() for d in (0.01, 0.05, 0.1, 0.3)]
    assert counts == sorted(counts, reverse=True)


def test_score_matrix_antisymmetric():
    rng = np.random.default_rng(2)
    X = np.tanh(rng.normal(size=(6, 3)))
    Y = np.tanh(2 * rng.normal(size=(6, 3)))
    raw = X @ Y.T - Y @ X.T
    np.testing.assert_allclose(raw, -raw.T)
    # off the diagonal at most one direction of each pair survives the rectifier
    pos = np.maximum(raw, 0)
    assert not (pos * pos.T).any()


def test_bounds_for_random_parameters():
    rng = np.random.default_rng(3)
    for _ in range(20):
        delta = rng.uniform(0, 0.5)
        A = adjacency(rng.normal(size=(5, 4)) * 3, rng.normal(size=(5, 4)), rng.normal(), rng.normal(), delta)
        assert (A >= 0).all() and (A <= 1 - delta + 1e-12).all()
        assert (A.sum(axis=1) <= 1 + 1e-12).all()


def test_block_diag_has_zero_off_blocks():
    A = block_diag_views(torch.ones(3, 3), 2 * torch.ones(3, 3))
    assert A.shape == (6, 6)
    assert not A[:3, 3:].any() and not A[3:, :3].any()
    with pytest.raises(DimensionError):
        block_diag_views(torch.ones(3, 3), torch.ones(2, 2))


def test_identity_propagation():
    torch.manual_seed(0)
    E_S, E_D = torch.randn(3, 4), torch.randn(3, 4)
    out_s, out_d = cross_view_augment(E_S, E_D, torch.zeros(6, 6), torch.eye(6), [(torch.eye(4), torch.eye(4))])
    assert torch.equal(out_s, E_S) and torch.equal(out_d, E_D)


def test_zero_embeddings_propagate_to_zero():
    torch.manual_seed(1)
    z = torch.zeros(3, 4)
    layers = [(torch.randn(4, 4), torch.randn(4, 4))] * 2
    out_s, out_d = cross_view_augment(z, z, torch.rand(6, 6), torch.rand(6, 6), layers)
    assert not out_s.any() and not out_d.any()


def test_single_layer_matches_dense_products():
    rng = np.random.default_rng(4)
    A_S = np.array([[1.0, 0.5, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 1.0]])
    A_D = np.array([[1.0, 0.0, 0.3], [0.0, 1.0, 0.0], [0.6, 0.0, 1.0]])
    A_p = rng.random((6, 6))
    E_S, E_D = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    W_p, W_in = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    A_in = np.block([[A_S, np.zeros((3, 3))], [np.zeros((3, 3)), A_D]])
    X = np.vstack([E_S, E_D])
    expected = A_p @ X @ W_p + A_in @ X @ W_in
    t = torch.as_tensor
    out_s, out_d = cross_view_augment(t(E_S), t(E_D), t(A_p), block_diag_views(t(A_S), t(A_D)), [(t(W_p), t(W_in))])
    np.testing.assert_allclose(np.vstack([out_s.numpy(), out_d.numpy()]), expected, atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        cross_view_augment(torch.zeros(3, 2), torch.zeros(3, 2), None, torch.eye(4), [(None, torch.eye(2))])


def test_row_normalize():
    A = torch.tensor([[2.0, 2.0], [0.0, 0.0]])
    assert torch.equal(row_normalize(A), torch.tensor([[0.5, 0.5], [0.0, 0.0]]))


def test_static_mode_has_no_learned_adjacency():
    A = torch.eye(3)
    static = CrossViewEncoder(4, A, A, mode="static")
    cross = CrossViewEncoder(4, A, A, mode="cross")
    names = {n for n, _ in static.named_parameters()}
    assert not any(n.startswith(("W_p", "alpha", "beta")) for n in names)
    assert sum(p.numel() for p in cross.parameters()) - sum(p.numel() for p in static.parameters()) == 2 * 16 + 2
    E = torch.randn(3, 4)
    assert static(E, E)[2] is None
    assert cross(E, E)[2].shape == (6, 6)


def test_adaptive_mode_is_block_diagonal():
    torch.manual_seed(2)
    enc = CrossViewEncoder(4, torch.eye(3), torch.eye(3), mode="adaptive", delta=0.0)
    A_p = enc.adjacency(torch.randn(3, 4), torch.randn(3, 4))
    assert not A_p[:3, 3:].any() and not A_p[3:, :3].any()


def test_gradient_check_composed():
    rng = np.random.default_rng(5)
    t = lambda a: torch.tensor(a, dtype=torch.float64, requires_grad=True)
    E_S, E_D = t(rng.normal(size=(3, 2))), t(rng.normal(size=(3, 2)))
    alpha, beta = t(1.3), t(0.6)
    W = [t(rng.normal(size=(2, 2))) for _ in range(4)]
    A_in = block_diag_views(torch.rand(3, 3, dtype=torch.float64), torch.rand(3, 3, dtype=torch.float64))

    def loss():
        A_p = learn_adaptive_adjacency(E_S, E_D, alpha, beta, 0.02)
        out_s, out_d = cross_view_augment(E_S, E_D, A_p, A_in, [(W[0], W[1]), (W[2], W[3])], torch.tanh)
        return (out_s ** 2).sum() + out_d.sum()

    groups = {"E": [("E_S", E_S), ("E_D", E_D)], "scales": [("alpha", alpha), ("beta", beta)],
              "W": [(f"W{i}", w) for i, w in enumerate(W)]}
    report = gradient_check(loss, groups)
    assert report.passed, report.errors
