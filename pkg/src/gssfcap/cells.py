"""Recurrent cells: LSTM, GST-LSTM and GSSCN-LSTM.

All three share the initial-state MLPs, word embedding ``W_E`` and output
projection ``W_hy``. They differ in how the semantic vector (already
smoothed, written ``s_hat`` below) enters each step:

* ``lstm``  ignores it.
* ``gst``   revises the previous hidden state before the gates fire:
  ``h <- (W_hm @ s_hat) * (W_hn @ h)``.
* ``gsscn`` gives each gate ``* in {i, f, o, g}`` its own factored contexts
  ``x_* = (W_x*m @ s_hat) * (W_x*n @ x)`` and
  ``h_* = (W_h*m @ s_hat) * (W_h*n @ h)`` of width ``f``; the gate projections
  ``W_x*``, ``W_h*`` are then ``d x f``.

Step functions accept single vectors or row-stacked batches; every product is
written ``x @ W.T`` so both layouts go through the same code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from gssfcap.errors import ConfigError, ContractError, NumericError, ShapeError
from gssfcap.linalg import init_weights, sigmoid

VARIANTS = ("lstm", "gst", "gsscn")
GATES = ("i", "f", "o", "g")


@dataclass(frozen=True)
class CellConfig:
    variant: str
    d: int
    m: int
    v_dim: int
    V: int
    s: int | None = None
    f: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("d", "m", "v_dim", "V"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        needs_s = self.variant in ("gst", "gsscn")
        if needs_s and (self.s is None or self.s < 1):
            raise ConfigError(f"variant {self.variant} needs a positive semantic dim s")
        if not needs_s and self.s is not None:
            raise ConfigError("semantic dim s is only meaningful for gst/gsscn")
        if self.variant == "gsscn" and (self.f is None or self.f < 1):
            raise ConfigError("gsscn needs a positive factor dim f")
        if self.variant != "gsscn" and self.f is not None:
            raise ConfigError("factor dim f is only meaningful for gsscn")

    @classmethod
    def build(cls, variant, d, m, v_dim, V, s=None, f=None):
        """Like the constructor, but drops dims the variant does not use and
        fills the default factor width ``max(1, d // 4)``."""
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if variant == "lstm":
            s = None
        if variant != "gsscn":
            f = None
        elif f is None:
            f = max(1, d // 4)
        return cls(variant, d, m, v_dim, V, s, f)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "d": self.d, "m": self.m, "v_dim": self.v_dim,
                "V": self.V, "s": self.s, "f": self.f}

    @classmethod
    def from_dict(cls, data: Mapping) -> "CellConfig":
        unknown = set(data) - {"variant", "d", "m", "v_dim", "V", "s", "f"}
        if unknown:
            raise ConfigError(f"unknown cell config keys: {sorted(unknown)}")
        return cls(**data)


def param_shapes(config: CellConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter names and shapes, in a fixed order."""
    d, m, V, vd = config.d, config.m, config.V, config.v_dim
    shapes: dict[str, tuple[int, ...]] = {
        "W_h0": (d, vd), "b_h0": (d,),
        "W_c0": (d, vd), "b_c0": (d,),
    }
    in_x, in_h = (config.f, config.f) if config.variant == "gsscn" else (m, d)
    for g in GATES:
        shapes[f"W_x{g}"] = (d, in_x)
        shapes[f"W_h{g}"] = (d, in_h)
        shapes[f"b_{g}"] = (d,)
    if config.variant == "gst":
        shapes["W_hm"] = (d, config.s)
        shapes["W_hn"] = (d, d)
    elif config.variant == "gsscn":
        f, s = config.f, config.s
        for g in GATES:
            shapes[f"W_x{g}m"] = (f, s)
            shapes[f"W_x{g}n"] = (f, m)
            shapes[f"W_h{g}m"] = (f, s)
            shapes[f"W_h{g}n"] = (f, d)
    shapes["W_hy"] = (V, d)
    shapes["W_E"] = (V, m)
    return shapes


def param_count(config: CellConfig) -> int:
    return sum(math.prod(shape) for shape in param_shapes(config).values())


@dataclass(frozen=True)
class CellParams:
    """Immutable weight bundle; arrays are marked read-only."""

    config: CellConfig
    tensors: Mapping[str, np.ndarray]

    def __post_init__(self):
        expected = param_shapes(self.config)
        missing = set(expected) - set(self.tensors)
        extra = set(self.tensors) - set(expected)
        if missing or extra:
            raise ShapeError(f"parameter names mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        frozen = {}
        for name, shape in expected.items():
            arr = np.array(self.tensors[name], dtype=np.float64, copy=True)
            if arr.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
            if not np.isfinite(arr).all():
                raise NumericError(f"{name}: non-finite entries")
            arr.flags.writeable = False
            frozen[name] = arr
        object.__setattr__(self, "tensors", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def replace(self, **updates) -> "CellParams":
        merged = dict(self.tensors)
        merged.update(updates)
        return CellParams(self.config, merged)

    def size(self) -> int:
        return sum(arr.size for arr in self.tensors.values())


def init_params(config: CellConfig, seed: int = 0, embeddings: np.ndarray | None = None) -> CellParams:
    """Glorot-uniform matrices, zero biases.

    Every tensor gets its own seed derived from ``seed`` and its position, so
    adding a variant never perturbs the shared tensors of another.
    """
    tensors = {}
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(param_shapes(config)))
    for child, (name, shape) in zip(children, param_shapes(config).items()):
        sub_seed = int(child.generate_state(1)[0])
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = init_weights(shape[0], shape[1], "uniform", sub_seed)
    if embeddings is not None:
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.shape != (config.V, config.m):
            raise ShapeError(f"embedding table has shape {embeddings.shape}, expected {(config.V, config.m)}")
        tensors["W_E"] = embeddings
    return CellParams(config, tensors)


@dataclass(frozen=True)
class CellState:
    h: np.ndarray
    c: np.ndarray
    t: int = 0


def init_state(params: CellParams, v) -> CellState:
    """``h0 = tanh(W_h0 v + b_h0)``, ``c0 = tanh(W_c0 v + b_c0)``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1:] != (params.config.v_dim,):
        raise ShapeError(f"visual features have shape {v.shape}, expected last dim {params.config.v_dim}")
    h = np.tanh(v @ params["W_h0"].T + params["b_h0"])
    c = np.tanh(v @ params["W_c0"].T + params["b_c0"])
    return CellState(h, c, 0)


def semantic_context(params: CellParams, s_hat) -> dict[str, np.ndarray]:
    """Step-invariant projections of ``s_hat``, computed once per sequence."""
    variant = params.config.variant
    if variant == "lstm":
        return {}
    if s_hat is None:
        raise ContractError(f"variant {variant} needs smoothed semantic features")
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if s_hat.shape[-1:] != (params.config.s,):
        raise ShapeError(f"semantic features have shape {s_hat.shape}, expected last dim {params.config.s}")
    if variant == "gst":
        return {"s_hat": s_hat, "u": s_hat @ params["W_hm"].T}
    ctx = {"s_hat": s_hat}
    for g in GATES:
        ctx[f"ux_{g}"] = s_hat @ params[f"W_x{g}m"].T
        ctx[f"uh_{g}"] = s_hat @ params[f"W_h{g}m"].T
    return ctx


def forward_step(params: CellParams, x, h, c, ctx, check: bool = False):
    """One cell step. Returns ``(h_new, c_new, cache)``; the cache holds every
    intermediate the backward pass needs."""
    variant = params.config.variant
    cache = {"x": x, "h_prev": h, "c_prev": c}
    if variant == "gst":
        z = h @ params["W_hn"].T
        h_in = ctx["u"] * z
        cache["z"] = z
        cache["h_in"] = h_in
    else:
        h_in = h
    acts = {}
    for g in GATES:
        if variant == "gsscn":
            zx = x @ params[f"W_x{g}n"].T
            zh = h @ params[f"W_h{g}n"].T
            xs = ctx[f"ux_{g}"] * zx
            hs = ctx[f"uh_{g}"] * zh
            cache[f"zx_{g}"], cache[f"zh_{g}"] = zx, zh
            cache[f"xs_{g}"], cache[f"hs_{g}"] = xs, hs
            a = xs @ params[f"W_x{g}"].T + hs @ params[f"W_h{g}"].T + params[f"b_{g}"]
        else:
            a = x @ params[f"W_x{g}"].T + h_in @ params[f"W_h{g}"].T + params[f"b_{g}"]
        if check and not np.isfinite(a).all():
            raise NumericError(f"non-finite pre-activation in gate {g!r}")
        acts[g] = np.tanh(a) if g == "g" else sigmoid(a)
    c_new = acts["f"] * c + acts["i"] * acts["g"]
    tc = np.tanh(c_new)
    h_new = acts["o"] * tc
    if check and not np.isfinite(c_new).all():
        raise NumericError("non-finite memory cell")
    cache.update(acts)
    cache["tc"] = tc
    return h_new, c_new, cache


def _check_state(params: CellParams, x, state: CellState):
    cfg = params.config
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (cfg.m,):
        raise ShapeError(f"input has shape {x.shape}, expected last dim {cfg.m}")
    if state.h.shape[-1:] != (cfg.d,) or state.c.shape[-1:] != (cfg.d,):
        raise ShapeError(f"state dims {state.h.shape}/{state.c.shape} do not match d={cfg.d}")
    return x


def _run(params, x, state, s_hat):
    x = _check_state(params, x, state)
    ctx = semantic_context(params, s_hat)
    h, c, _ = forward_step(params, x, state.h, state.c, ctx, check=True)
    return CellState(h, c, state.t + 1)


def lstm_step(params: CellParams, x, state: CellState) -> CellState:
    if params.config.variant != "lstm":
        raise ContractError(f"lstm_step called with {params.config.variant} params")
    return _run(params, x, state, None)


def gst_step(params: CellParams, x, state: CellState, s_hat) -> CellState:
    if params.config.variant != "gst":
        raise ContractError(f"gst_step called with {params.config.variant} params")
    return _run(params, x, state, s_hat)


def gsscn_step(params: CellParams, x, state: CellState, s_hat) -> CellState:
    if params.config.variant != "gsscn":
        raise ContractError(f"gsscn_step called with {params.config.variant} params")
    return _run(params, x, state, s_hat)


def step(params: CellParams, x, state: CellState, s_hat=None) -> CellState:
    """Dispatch on the params' variant."""
    return _run(params, x, state, s_hat)


def revise_hidden(params: CellParams, h, s_hat) -> np.ndarray:
    """The GST fusion on its own: ``(W_hm s_hat) * (W_hn h)``."""
    if params.config.variant != "gst":
        raise ContractError("hidden-state revision exists only for gst params")
    return (np.asarray(s_hat) @ params["W_hm"].T) * (np.asarray(h) @ params["W_hn"].T)


def project_logits(params: CellParams, h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1:] != (params.config.d,):
        raise ShapeError(f"hidden state has shape {h.shape}, expected last dim {params.config.d}")
    return h @ params["W_hy"].T


def embed(params: CellParams, token_index: int) -> np.ndarray:
    V = params.config.V
    if not 0 <= token_index < V:
        raise IndexError(f"token index {token_index} outside vocabulary of size {V}")
    return params["W_E"][token_index]
