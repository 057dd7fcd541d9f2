"""Small builders shared by the test modules."""

import numpy as np

from gssfcap.cells import GATES, CellConfig, CellParams, init_params, param_shapes
from gssfcap.data import BOS, EOS
from gssfcap.training import make_batch

DIMS = dict(d=4, m=3, v_dim=3, V=6, s=5, f=2)


def tiny_config(variant, **overrides):
    dims = {**DIMS, **overrides}
    return CellConfig.build(variant, dims["d"], dims["m"], dims["v_dim"], dims["V"], dims["s"], dims["f"])


def tiny_params(variant, seed=0, scale=1.0, **overrides):
    params = init_params(tiny_config(variant, **overrides), seed)
    if scale != 1.0:
        params = params.replace(**{n: params[n] * scale for n in params.names()})
    return params


def random_biases(params, seed):
    rng = np.random.default_rng(seed)
    return params.replace(**{n: rng.normal(0, 0.3, params[n].shape) for n in params.names() if n.startswith("b_")})


def tiny_batch(config, seed=0, lengths=(3, 2)):
    rng = np.random.default_rng(seed)
    B = len(lengths)
    seqs = [[BOS] + list(rng.integers(2, config.V, size=n - 1)) + [EOS] for n in lengths]
    vs = rng.normal(size=(B, config.v_dim))
    s_hats = None if config.s is None else rng.uniform(size=(B, config.s))
    return make_batch(vs, s_hats, seqs)


def enumerate_captions(params, v, S, max_len, sigma=1.0):
    """Every terminal sequence: ends at the first EOS or after ``max_len`` steps.

    Returns ``(tokens, log_prob)`` pairs, tokens starting with BOS. Scores are
    accumulated left to right, matching the decoder's summation order.
    """
    from gssfcap.decoding import _Runner

    runner = _Runner(params, v, S, sigma, None)
    out = []

    def walk(tokens, state, score):
        state, logp = runner.advance(state, tokens[-1])
        for tok in range(logp.size):
            seq, total = tokens + [tok], score + float(logp[tok])
            if tok == EOS or len(seq) - 1 == max_len:
                out.append((seq, total))
            else:
                walk(seq, state, total)

    walk([BOS], runner.initial, 0.0)
    return out


def brute_force_best(params, v, S, max_len, length_norm=True):
    def key(entry):
        seq, total = entry
        return (-(total / (len(seq) - 1) if length_norm else total), seq)

    return min(enumerate_captions(params, v, S, max_len), key=key)


def gst_as_lstm(seed):
    gst = random_biases(tiny_params("gst", seed=seed), seed)
    s_hat = np.random.default_rng(seed).uniform(0.1, 1.0, size=5)
    # W_hm s_hat = 1 and W_hn = I make the revision the identity
    W_hm = np.tile(1.0 / s_hat / 5.0, (4, 1))
    gst = gst.replace(W_hm=W_hm, W_hn=np.eye(4))
    shared = {n: gst[n] for n in param_shapes(tiny_config("lstm"))}
    return gst, CellParams(tiny_config("lstm"), shared), s_hat


def gsscn_as_lstm(seed):
    lstm = random_biases(tiny_params("lstm", seed=seed), seed)
    cfg = tiny_config("gsscn", f=4)
    tensors = {n: lstm[n] for n in ("W_h0", "b_h0", "W_c0", "b_c0", "W_hy", "W_E")}
    select = np.zeros((4, 5))
    select[:, 0] = 1.0
    for g in GATES:
        tensors[f"b_{g}"] = lstm[f"b_{g}"]
        tensors[f"W_x{g}"] = np.eye(4)
        tensors[f"W_h{g}"] = np.eye(4)
        tensors[f"W_x{g}m"] = select
        tensors[f"W_h{g}m"] = select
        tensors[f"W_x{g}n"] = lstm[f"W_x{g}"]
        tensors[f"W_h{g}n"] = lstm[f"W_h{g}"]
    return CellParams(cfg, tensors), lstm, np.ones(5)
