"""Window-graph construction, normalization, and the correlation embedding."""

import numpy as np
import pytest

from agstn import graphs as G
from agstn import numcore as nc
from agstn.errors import BoundsError, ContractError
from agstn.graphs import GCNParams


def panel_of(rows):
    return np.asarray(rows, dtype=float)


# ---------------------------------------------------------------------------
# build_window_graph


def test_identical_windows_have_weight_one():
    vals = np.tile(np.arange(1.0, 7.0).reshape(-1, 1), (1, 2))
    g = G.build_window_graph(vals, 5, 6)
    assert g.weights[0, 1] == pytest.approx(1.0)


def test_orthogonal_windows_have_weight_zero():
    vals = np.zeros((6, 2))
    vals[0, 0] = 1.0
    vals[1, 1] = 1.0
    g = G.build_window_graph(vals, 5, 6)
    assert g.weights[0, 1] == 0.0


def test_cosine_hand_value():
    a = np.array([1.0, 2, 3, 4, 5, 6])
    vals = np.column_stack([a, a[::-1]])
    g = G.build_window_graph(vals, 5, 6)
    assert g.weights[0, 1] == pytest.approx(56.0 / 91.0, abs=1e-12)


def test_out_of_range_index():
    vals = np.random.default_rng(0).standard_normal((10, 3))
    with pytest.raises(BoundsError):
        G.build_window_graph(vals, 10, 6)
    with pytest.raises(BoundsError):
        G.build_window_graph(vals, -1, 6)


def test_single_sensor_rejected():
    with pytest.raises(ContractError):
        G.build_window_graph(np.ones((10, 1)), 5, 6)


def test_truncated_window_near_start():
    vals = np.random.default_rng(1).standard_normal((10, 3))
    g = G.build_window_graph(vals, 1, 6)   # only two rows available
    assert np.array_equal(g.weights, g.weights.T)
    assert np.all(np.diag(g.weights) == 1.0)


def test_zero_norm_window_gets_zero_offdiagonal():
    vals = np.zeros((6, 3))
    vals[:, 1] = np.arange(6.0) + 1
    vals[:, 2] = np.arange(6.0) + 2
    g = G.build_window_graph(vals, 5, 6)
    assert g.weights[0, 1] == 0.0 and g.weights[0, 2] == 0.0
    assert g.weights[0, 0] == 1.0


def test_graph_invariants_over_1000_random_panels():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        t_len = int(rng.integers(3, 15))
        n = int(rng.integers(2, 7))
        vals = rng.standard_normal((t_len, n)) * rng.uniform(0.1, 10)
        if rng.uniform() < 0.1:
            vals[:, 0] = 0.0   # occasionally plant a dead sensor
        t_j = int(rng.integers(1, t_len))
        g = G.build_window_graph(vals, t_j, int(rng.integers(2, 8)))
        w = g.weights
        assert np.array_equal(w, w.T)
        assert np.all(np.diag(w) == 1.0)
        assert w.min() >= 0.0 and w.max() <= 1.0


# ---------------------------------------------------------------------------
# normalize_adjacency


def test_normalize_identity_behavior():
    g = G.WindowGraph(np.eye(4), 0)
    norm = G.normalize_adjacency(g)
    np.testing.assert_allclose(norm, np.eye(4), atol=1e-7)


def test_normalize_two_node_all_ones():
    g = G.WindowGraph(np.ones((2, 2)), 0)
    norm = G.normalize_adjacency(g)
    np.testing.assert_allclose(norm, np.full((2, 2), 0.5), atol=1e-7)


def test_normalize_three_node_hand_case():
    a = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.5], [0.0, 0.5, 1.0]])
    norm = G.normalize_adjacency(G.WindowGraph(a, 0))
    assert norm[0, 1] == pytest.approx(0.5 / np.sqrt(1.5 * 2.0), abs=1e-4)


def test_normalize_preserves_symmetry_and_range():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 8))
        a = rng.uniform(0, 1, (n, n))
        a = 0.5 * (a + a.T)
        np.fill_diagonal(a, 1.0)
        norm = G.normalize_adjacency(G.WindowGraph(a, 0))
        np.testing.assert_allclose(norm, norm.T, atol=1e-15)
        assert norm.min() >= 0.0 and norm.max() <= 1.0 + 1e-12


def test_normalize_spectral_radius_bounded():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        a = rng.uniform(0, 1, (n, n))
        a = 0.5 * (a + a.T)
        np.fill_diagonal(a, 1.0)
        norm = G.normalize_adjacency(G.WindowGraph(a, 0))
        radius = np.abs(np.linalg.eigvalsh(norm)).max()
        assert radius <= 1.0 + 1e-6


def test_normalize_handles_zero_rows():
    a = np.zeros((3, 3))   # stabilizer keeps this finite
    norm = G.normalize_adjacency(G.WindowGraph(a, 0))
    assert np.all(np.isfinite(norm))


# ---------------------------------------------------------------------------
# gcn_layer


def test_gcn_identity_propagation():
    h = np.random.default_rng(5).standard_normal((4, 3))
    out = G.gcn_layer(np.eye(4), h, nc.constant(np.eye(3)))
    np.testing.assert_allclose(out.value, h, atol=1e-12)


def test_gcn_constant_features_under_uniform_degrees():
    a = np.full((3, 3), 1.0 / 3.0)   # uniform row sums
    h = np.tile([[2.0, -1.0]], (3, 1))
    out = G.gcn_layer(a, h, nc.constant(np.eye(2)))
    np.testing.assert_allclose(out.value, h, atol=1e-12)


def test_gcn_matches_explicit_triple_product():
    rng = np.random.default_rng(6)
    a = rng.uniform(0, 1, (3, 3))
    h = rng.standard_normal((3, 3))
    w = rng.standard_normal((3, 2))
    out = G.gcn_layer(a, h, nc.constant(w))
    np.testing.assert_allclose(out.value, a @ h @ w, atol=1e-12)


# ---------------------------------------------------------------------------
# stc_embed


def _random_instance(rng, n=3, tau=6, k=2, hidden=4):
    params = GCNParams(
        w0=nc.parameter(rng.standard_normal((1 + k, hidden))),
        w1=nc.parameter(rng.standard_normal((hidden, 1))),
    )
    vals = rng.standard_normal((tau + 10, n))
    gs = [G.build_window_graph(vals, 9 + j, tau) for j in range(tau)]
    feats = [rng.standard_normal((n, 1 + k)) for _ in range(tau)]
    return params, gs, feats


def test_stc_embed_shape():
    rng = np.random.default_rng(7)
    params, gs, feats = _random_instance(rng)
    out = G.stc_embed(gs, feats, params)
    assert out.shape == (3, 6)


def test_stc_embed_engineered_identity_tau_one():
    # identity adjacency, W0 slices the raw-value feature through a relu
    # stage, W1 maps it back: H equals the (nonnegative) raw column
    k, hidden = 2, 4
    w0 = np.zeros((1 + k, hidden))
    w0[0, 0] = 1.0
    w1 = np.zeros((hidden, 1))
    w1[0, 0] = 1.0
    params = GCNParams(w0=nc.parameter(w0), w1=nc.parameter(w1))
    x = np.array([[0.7], [0.1], [2.0]])
    feats = [np.hstack([x, np.random.default_rng(8).standard_normal((3, k))])]
    out = G.stc_embed([np.eye(3)], feats, params)
    np.testing.assert_allclose(out.value, x, atol=1e-12)


def test_stc_embed_permutation_equivariant():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n, tau, k = 4, 3, 2
        params, _, _ = _random_instance(rng, n=n, tau=tau, k=k)
        vals = rng.standard_normal((20, n))
        gs = [G.build_window_graph(vals, 10 + j, tau) for j in range(tau)]
        feats = [rng.standard_normal((n, 1 + k)) for _ in range(tau)]
        out = G.stc_embed(gs, feats, params).value

        perm = rng.permutation(n)
        vals_p = vals[:, perm]
        gs_p = [G.build_window_graph(vals_p, 10 + j, tau) for j in range(tau)]
        feats_p = [f[perm] for f in feats]
        out_p = G.stc_embed(gs_p, feats_p, params).value
        np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


def test_stc_embed_gradients_pass_finite_differences():
    rng = np.random.default_rng(10)
    params, gs, feats = _random_instance(rng)

    def f(ps):
        p = GCNParams(w0=ps[0], w1=ps[1])
        return nc.mean_all(G.stc_embed(gs, feats, p))

    report = nc.grad_check(f, [params.w0, params.w1], step=1e-5,
                           tolerance=1e-4, names=["w0", "w1"])
    assert report.passed, report.entries


def test_stc_embed_ignores_imf_when_zeroed():
    # zero IMF channels: output depends only on the raw column
    rng = np.random.default_rng(11)
    params, gs, _ = _random_instance(rng)
    raw = [rng.standard_normal((3, 1)) for _ in range(6)]
    feats_a = [np.hstack([r, np.zeros((3, 2))]) for r in raw]
    feats_b = [np.hstack([r, np.zeros((3, 2))]) for r in raw]
    out_a = G.stc_embed(gs, feats_a, params).value
    out_b = G.stc_embed(gs, feats_b, params).value
    np.testing.assert_array_equal(out_a, out_b)


def test_stc_embed_rejects_inconsistent_steps():
    rng = np.random.default_rng(12)
    params, gs, feats = _random_instance(rng)
    feats[2] = rng.standard_normal((5, 3))   # wrong sensor count
    with pytest.raises(ContractError):
        G.stc_embed(gs, feats, params)
