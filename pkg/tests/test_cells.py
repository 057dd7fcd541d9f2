import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gssfcap.cells import (
    GATES,
    CellConfig,
    CellParams,
    CellState,
    embed,
    forward_step,
    gsscn_step,
    gst_step,
    init_params,
    init_state,
    lstm_step,
    param_count,
    param_shapes,
    project_logits,
    revise_hidden,
    semantic_context,
    step,
)
from gssfcap.errors import ConfigError, ContractError, NumericError, ShapeError
from gssfcap.linalg import sigmoid

from helpers import gsscn_as_lstm, gst_as_lstm, random_biases, tiny_config, tiny_params


def _state(params, seed=0):
    rng = np.random.default_rng(seed)
    return init_state(params, rng.normal(size=params.config.v_dim))


def test_config_validation():
    with pytest.raises(ConfigError):
        CellConfig("gru", 4, 3, 3, 6)
    with pytest.raises(ConfigError):
        CellConfig("gst", 4, 3, 3, 6)
    with pytest.raises(ConfigError):
        CellConfig("lstm", 4, 3, 3, 6, s=5)
    with pytest.raises(ConfigError):
        CellConfig("gsscn", 4, 3, 3, 6, s=5)
    with pytest.raises(ConfigError):
        CellConfig("lstm", 0, 3, 3, 6)
    assert CellConfig.build("gsscn", 12, 3, 3, 6, s=5).f == 3
    assert CellConfig.build("lstm", 4, 3, 3, 6, s=5, f=2).s is None
    cfg = tiny_config("gsscn")
    assert CellConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        CellConfig.from_dict({**cfg.to_dict(), "depth": 2})


def test_param_counts_by_hand():
    d, m, vd, V, s, f = 4, 3, 3, 6, 5, 2
    shared = 2 * (d * vd + d) + V * d + V * m
    lstm = shared + 4 * (d * m + d * d + d)
    gst = lstm + d * s + d * d
    gsscn = shared + 4 * (2 * d * f + d) + 4 * (2 * f * s + f * m + f * d)
    assert param_count(tiny_config("lstm")) == lstm
    assert param_count(tiny_config("gst")) == gst
    assert param_count(tiny_config("gsscn")) == gsscn
    for variant in ("lstm", "gst", "gsscn"):
        assert tiny_params(variant).size() == param_count(tiny_config(variant))


def test_param_shapes_order_and_names():
    names = list(param_shapes(tiny_config("gst")))
    assert names[:4] == ["W_h0", "b_h0", "W_c0", "b_c0"]
    assert names[-2:] == ["W_hy", "W_E"]
    assert {"W_hm", "W_hn"} <= set(names)
    assert {f"W_x{g}m" for g in GATES} <= set(param_shapes(tiny_config("gsscn")))


def test_params_immutable_and_validated():
    params = tiny_params("lstm")
    with pytest.raises(ValueError):
        params["W_xi"][0, 0] = 1.0
    with pytest.raises(ShapeError):
        params.replace(W_xi=np.zeros((2, 2)))
    with pytest.raises(NumericError):
        params.replace(W_xi=np.full((4, 3), np.nan))
    with pytest.raises(ShapeError):
        CellParams(params.config, {"W_xi": np.zeros((4, 3))})


def test_init_params_deterministic():
    a, b = tiny_params("gsscn", seed=3), tiny_params("gsscn", seed=3)
    assert all(a[n].tobytes() == b[n].tobytes() for n in a.names())
    assert not np.array_equal(a["W_xi"], tiny_params("gsscn", seed=4)["W_xi"])
    assert np.array_equal(a["b_i"], np.zeros(4))


def test_init_params_with_embeddings():
    table = np.arange(18, dtype=float).reshape(6, 3)
    params = init_params(tiny_config("lstm"), 0, table)
    np.testing.assert_array_equal(params["W_E"], table)
    with pytest.raises(ShapeError):
        init_params(tiny_config("lstm"), 0, np.zeros((5, 3)))


def test_init_state_formula():
    params = random_biases(tiny_params("lstm"), 1)
    v = np.array([0.2, -0.5, 1.0])
    st0 = init_state(params, v)
    np.testing.assert_allclose(st0.h, np.tanh(params["W_h0"] @ v + params["b_h0"]), atol=1e-15)
    np.testing.assert_allclose(st0.c, np.tanh(params["W_c0"] @ v + params["b_c0"]), atol=1e-15)
    assert st0.t == 0
    with pytest.raises(ShapeError):
        init_state(params, np.zeros(4))


def test_lstm_step_hand_oracle():
    # scalar cell, all weights 1, zero bias: compute each gate by hand
    cfg = CellConfig("lstm", 1, 1, 1, 2)
    ones = {n: np.ones(s) if len(s) == 2 else np.zeros(s) for n, s in param_shapes(cfg).items()}
    params = CellParams(cfg, ones)
    x, h, c = np.array([0.5]), np.array([0.2]), np.array([0.1])
    a = 0.7
    i = f = o = 1 / (1 + math.exp(-a))
    g = math.tanh(a)
    c_new = f * 0.1 + i * g
    h_new = o * math.tanh(c_new)
    out = lstm_step(params, x, CellState(h, c))
    assert out.c[0] == pytest.approx(c_new, abs=1e-15)
    assert out.h[0] == pytest.approx(h_new, abs=1e-15)
    assert out.t == 1


def test_gst_step_matches_manual_revision():
    params = random_biases(tiny_params("gst", seed=2), 2)
    rng = np.random.default_rng(0)
    s_hat, x = rng.uniform(size=5), rng.normal(size=3)
    st0 = _state(params)
    h_rev = revise_hidden(params, st0.h, s_hat)
    np.testing.assert_allclose(h_rev, (params["W_hm"] @ s_hat) * (params["W_hn"] @ st0.h), atol=1e-15)
    acts = {}
    for g in GATES:
        a = params[f"W_x{g}"] @ x + params[f"W_h{g}"] @ h_rev + params[f"b_{g}"]
        acts[g] = np.tanh(a) if g == "g" else sigmoid(a)
    c = acts["f"] * st0.c + acts["i"] * acts["g"]
    out = gst_step(params, x, st0, s_hat)
    np.testing.assert_allclose(out.c, c, atol=1e-14)
    np.testing.assert_allclose(out.h, acts["o"] * np.tanh(c), atol=1e-14)


def test_gsscn_step_matches_manual_factoring():
    params = random_biases(tiny_params("gsscn", seed=5), 5)
    rng = np.random.default_rng(1)
    s_hat, x = rng.uniform(size=5), rng.normal(size=3)
    st0 = _state(params)
    acts = {}
    for g in GATES:
        xs = (params[f"W_x{g}m"] @ s_hat) * (params[f"W_x{g}n"] @ x)
        hs = (params[f"W_h{g}m"] @ s_hat) * (params[f"W_h{g}n"] @ st0.h)
        a = params[f"W_x{g}"] @ xs + params[f"W_h{g}"] @ hs + params[f"b_{g}"]
        acts[g] = np.tanh(a) if g == "g" else sigmoid(a)
    c = acts["f"] * st0.c + acts["i"] * acts["g"]
    out = gsscn_step(params, x, st0, s_hat)
    np.testing.assert_allclose(out.c, c, atol=1e-14)
    np.testing.assert_allclose(out.h, acts["o"] * np.tanh(c), atol=1e-14)


def test_step_dispatch_and_contracts():
    lstm, gst = tiny_params("lstm"), tiny_params("gst")
    st0 = _state(lstm)
    x = np.zeros(3)
    np.testing.assert_array_equal(step(lstm, x, st0).h, lstm_step(lstm, x, st0).h)
    with pytest.raises(ContractError):
        lstm_step(gst, x, st0)
    with pytest.raises(ContractError):
        gst_step(gst, x, st0, None)
    with pytest.raises(ContractError):
        gsscn_step(gst, x, st0, np.zeros(5))
    with pytest.raises(ShapeError):
        step(gst, x, st0, np.zeros(4))
    with pytest.raises(ShapeError):
        step(lstm, np.zeros(2), st0)
    with pytest.raises(ContractError):
        revise_hidden(lstm, st0.h, np.zeros(5))


def test_batched_step_equals_rowwise():
    params = random_biases(tiny_params("gsscn", seed=1), 3)
    rng = np.random.default_rng(2)
    X, H, C, S = rng.normal(size=(3, 3)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.uniform(size=(3, 5))
    hb, cb, _ = forward_step(params, X, H, C, semantic_context(params, S))
    for r in range(3):
        h, c, _ = forward_step(params, X[r], H[r], C[r], semantic_context(params, S[r]))
        np.testing.assert_allclose(hb[r], h, atol=1e-15)
        np.testing.assert_allclose(cb[r], c, atol=1e-15)


def test_nonfinite_gate_reports_gate():
    params = tiny_params("lstm")
    st0 = CellState(np.full(4, np.inf), np.zeros(4))
    with np.errstate(invalid="ignore"), pytest.raises(NumericError, match="gate"):
        step(params, np.ones(3), st0)


def test_project_logits_and_embed():
    params = tiny_params("lstm")
    h = np.arange(4.0)
    np.testing.assert_allclose(project_logits(params, h), params["W_hy"] @ h, atol=1e-15)
    np.testing.assert_array_equal(embed(params, 2), params["W_E"][2])
    with pytest.raises(IndexError):
        embed(params, 6)
    with pytest.raises(IndexError):
        embed(params, -1)
    with pytest.raises(ShapeError):
        project_logits(params, np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["lstm", "gst", "gsscn"]), st.integers(0, 10_000), st.floats(0.1, 20.0))
def test_state_bounds(variant, seed, scale):
    # c grows at most by 1 per step; |h| <= 1 always
    params = random_biases(tiny_params(variant, seed=seed, scale=scale), seed)
    rng = np.random.default_rng(seed)
    st0 = _state(params, seed)
    s_hat = rng.uniform(size=5) if variant != "lstm" else None
    state = st0
    for t in range(1, 6):
        prev_c = state.c
        state = step(params, rng.normal(size=3), state, s_hat)
        assert (np.abs(state.h) <= 1.0).all()
        assert (np.abs(state.c) <= np.abs(prev_c) + 1.0 + 1e-12).all()
        assert (np.abs(state.c) <= 1.0 + t + 1e-12).all()


@pytest.mark.parametrize("seed", range(5))
def test_gst_unit_fusion_reduces_to_lstm(seed):
    gst, lstm, s_hat = gst_as_lstm(seed)
    rng = np.random.default_rng(seed + 100)
    a = b = _state(lstm, seed)
    for _ in range(4):
        x = rng.normal(size=3)
        a, b = step(gst, x, a, s_hat), step(lstm, x, b)
        np.testing.assert_allclose(a.h, b.h, rtol=0, atol=1e-12)
        np.testing.assert_allclose(a.c, b.c, rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gsscn_selected_factors_reduce_to_lstm(seed):
    gsscn, lstm, s_hat = gsscn_as_lstm(seed)
    rng = np.random.default_rng(seed + 200)
    a = b = _state(lstm, seed)
    for _ in range(4):
        x = rng.normal(size=3)
        a, b = step(gsscn, x, a, s_hat), step(lstm, x, b)
        np.testing.assert_allclose(a.h, b.h, rtol=0, atol=1e-12)
        np.testing.assert_allclose(a.c, b.c, rtol=0, atol=1e-12)
