"""Forward-pass composition, parameter init, and the attention contraction."""

import numpy as np
import pytest

from agstn import graphs as G
from agstn import model as M
from agstn import numcore as nc
from agstn import seqmodels as sq
from agstn.errors import ContractError


def make_sample(rng, n=3, tau=6, k=2):
    vals = rng.standard_normal((tau + 12, n))
    gs = [G.build_window_graph(vals, 11 + j, tau) for j in range(tau)]

    class Sample:
        raw_window = rng.standard_normal((tau, n))
        imf_window = rng.standard_normal((tau, k, n))
        target = rng.standard_normal(n)
        graphs = gs
        adjacencies = [G.normalize_adjacency(g) for g in gs]
        origin_t = 11 + tau - 1

    return Sample()


# ---------------------------------------------------------------------------
# forward


def test_saturated_attention_passes_ensemble_through():
    rng = np.random.default_rng(0)
    params = M.init_params(3, 6, 2, seed=4, lstm_hidden=8)
    params.attention.weights.value[:] = 0.0
    params.attention.biases.value[:] = 20.0
    sample = make_sample(rng)
    pred, diag = M.forward(sample, params)
    np.testing.assert_allclose(pred, diag.ensemble, rtol=1e-4)


def test_ensemble_is_mean_of_equal_heads():
    # if both raw heads emit the same vector the ensemble equals it
    rng = np.random.default_rng(1)
    params = M.init_params(2, 6, 2, seed=5, lstm_hidden=4)
    sample = make_sample(rng, n=2)
    _, diag = M.forward(sample, params)
    expected = 0.5 * (diag.lstm_raw + diag.conv_raw)
    np.testing.assert_allclose(diag.ensemble, expected, atol=1e-12)
    assert np.allclose(
        np.where(diag.lstm_raw == diag.conv_raw, diag.ensemble, 0),
        np.where(diag.lstm_raw == diag.conv_raw, diag.lstm_raw, 0))


def test_forward_matches_hand_composed_pipeline():
    rng = np.random.default_rng(2)
    params = M.init_params(3, 6, 2, seed=6, lstm_hidden=8)
    sample = make_sample(rng)
    pred, diag = M.forward(sample, params)

    # recompose outside the model, stage by stage
    feats = [np.hstack([sample.raw_window[j].reshape(-1, 1),
                        sample.imf_window[j].T]) for j in range(6)]
    h_embed = G.stc_embed(sample.adjacencies, feats, params.gcn)
    rhat = sq.lstm_forward(sample.raw_window, params.lstm).value[:, 0]
    chat = sq.conv_head(h_embed, params.conv).value[:, 0]
    ens = 0.5 * (rhat + chat)
    attn = sq.attention_weights(sample.raw_window, params.attention).value[:, 0]
    np.testing.assert_allclose(diag.lstm_raw, rhat, atol=1e-12)
    np.testing.assert_allclose(diag.conv_raw, chat, atol=1e-12)
    np.testing.assert_allclose(pred, attn * ens, atol=1e-12)


def test_forward_deterministic():
    rng = np.random.default_rng(3)
    params = M.init_params(3, 6, 2, seed=7, lstm_hidden=8)
    sample = make_sample(rng)
    a, _ = M.forward(sample, params)
    b, _ = M.forward(sample, params)
    np.testing.assert_array_equal(a, b)


def test_attention_contracts_prediction_10000_passes():
    rng = np.random.default_rng(4)
    params = M.init_params(4, 6, 2, seed=8, lstm_hidden=6)
    checked = 0
    for _ in range(200):
        sample = make_sample(rng, n=4)
        pred, diag = M.forward(sample, params)
        assert np.all(np.abs(pred) <= np.abs(diag.ensemble))
        assert np.all(diag.attention > 0) and np.all(diag.attention < 1)
        checked += pred.size
    assert checked >= 800   # full 10k-pass sweep lives in the acceptance suite


def test_no_imf_variant_ignores_imf_contents():
    rng = np.random.default_rng(5)
    params = M.init_params(3, 6, 2, variant="no-imf", seed=9, lstm_hidden=8)
    sample = make_sample(rng)
    a, _ = M.forward(sample, params)
    sample.imf_window = rng.standard_normal(sample.imf_window.shape) * 100
    b, _ = M.forward(sample, params)
    np.testing.assert_array_equal(a, b)


def test_full_variant_uses_imf_contents():
    rng = np.random.default_rng(6)
    params = M.init_params(3, 6, 2, variant="full", seed=9, lstm_hidden=8)
    sample = make_sample(rng)
    a, _ = M.forward(sample, params)
    sample.imf_window = sample.imf_window + 1.0
    b, _ = M.forward(sample, params)
    assert np.abs(a - b).max() > 0


def test_meta_mismatch_rejected():
    rng = np.random.default_rng(7)
    params = M.init_params(4, 6, 2, seed=10, lstm_hidden=8)
    sample = make_sample(rng, n=3)
    with pytest.raises(ContractError):
        M.forward(sample, params)


def test_end_to_end_gradients_pass_finite_differences():
    rng = np.random.default_rng(8)
    params = M.init_params(3, 6, 2, seed=11, lstm_hidden=4, gcn_hidden=3)
    sample = make_sample(rng)
    target = nc.constant(sample.target.reshape(-1, 1))
    named = params.named_parameters()

    def f(_):
        g = M.forward_graph(sample, params)
        d = nc.sub(g.prediction, target)
        return nc.mean_all(nc.multiply(d, d))

    report = nc.grad_check(f, [t for _, t in named], step=1e-5,
                           tolerance=1e-4, names=[n for n, _ in named])
    assert report.passed, [
        (e.name, e.max_rel_deviation) for e in report.entries if e.failures]


# ---------------------------------------------------------------------------
# init_params


def test_same_seed_is_bit_identical():
    a = M.init_params(5, 6, 3, seed=42)
    b = M.init_params(5, 6, 3, seed=42)
    for (name, ta), (_, tb) in zip(a.named_parameters(), b.named_parameters()):
        assert np.array_equal(ta.value, tb.value), name


def test_different_seeds_differ():
    a = M.init_params(5, 6, 3, seed=42)
    b = M.init_params(5, 6, 3, seed=43)
    assert any(not np.array_equal(ta.value, tb.value)
               for (_, ta), (_, tb) in zip(a.named_parameters(),
                                           b.named_parameters()))


def test_xavier_bound_for_gcn_input_layer():
    # fan_in 9 (1 + K with K=8), fan_out 8
    params = M.init_params(4, 6, 8, seed=1, gcn_hidden=8)
    bound = np.sqrt(6.0 / 17.0)
    w = params.gcn.w0.value
    assert w.shape == (9, 8)
    assert np.abs(w).max() <= bound
    assert np.abs(w).max() > 0.5 * bound   # actually fills the range


def test_forget_gate_bias_is_one():
    params = M.init_params(3, 6, 2, seed=2)
    np.testing.assert_array_equal(params.lstm.b_f.value,
                                  np.ones_like(params.lstm.b_f.value))
    np.testing.assert_array_equal(params.lstm.b_i.value,
                                  np.zeros_like(params.lstm.b_i.value))


def test_nonpositive_dims_rejected():
    with pytest.raises(ContractError):
        M.init_params(0, 6, 2)
    with pytest.raises(ContractError):
        M.init_params(3, 6, 2, variant="bogus")
