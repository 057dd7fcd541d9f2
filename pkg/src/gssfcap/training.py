"""Loss, hand-derived backpropagation through time, gradient checking and SGD.

Training uses teacher forcing: the ground-truth previous token is embedded at
every step. Smoothed semantic features are treated as constants (no gradient
flows into the smoothing). Dropout is inverted, so decoding needs no
rescaling, and is applied at four sites: the visual features, the initial
hidden state entering the decoder, each embedded input word, and each hidden
state leaving the decoder before the output projection.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from gssfcap.cells import (
    GATES,
    CellConfig,
    CellParams,
    forward_step,
    init_params,
    param_shapes,
    semantic_context,
)
from gssfcap.data import BOS, PAD, Dataset, Vocabulary, encode
from gssfcap.errors import ConfigError, ContractError, NumericError
from gssfcap.gssf import DEFAULT_SIGMA, smooth
from gssfcap.linalg import softmax

log = logging.getLogger(__name__)

LOSS_KINDS = ("cross_entropy", "squared_error")
LOSS_ALIASES = {"xent": "cross_entropy", "se": "squared_error",
                "cross_entropy": "cross_entropy", "squared_error": "squared_error"}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 50
    batch_size: int = 32
    dropout_rate: float = 0.5
    loss_kind: str = "cross_entropy"
    seed: int = 0
    grad_clip: float | None = None
    finetune_embeddings: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {self.dropout_rate}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigError("grad_clip must be positive when set")


def loss(y, y_true, kind: str = "cross_entropy") -> float:
    """Per-position loss of a probability vector against a one-hot target."""
    y = np.asarray(y, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.float64)
    if y.shape != y_true.shape:
        raise ContractError(f"prediction shape {y.shape} != target shape {y_true.shape}")
    if not (np.isin(y_true, (0.0, 1.0)).all() and y_true.sum() == 1.0):
        raise ContractError("target is not a one-hot vector")
    if kind == "squared_error":
        return 0.5 * float(np.sum((y - y_true) ** 2))
    if kind == "cross_entropy":
        return float(-np.log(y[int(np.argmax(y_true))]))
    raise ConfigError(f"unknown loss kind {kind!r}")


@dataclass
class Batch:
    """Teacher-forced batch. ``tokens[:, :-1]`` are inputs, ``tokens[:, 1:]``
    targets; positions at or beyond ``lengths`` are padding."""

    v: np.ndarray
    s_hat: np.ndarray | None
    tokens: np.ndarray
    lengths: np.ndarray

    @property
    def inputs(self):
        return self.tokens[:, :-1]

    @property
    def targets(self):
        return self.tokens[:, 1:]

    @property
    def mask(self):
        steps = np.arange(self.tokens.shape[1] - 1)
        return (steps[None, :] < self.lengths[:, None]).astype(np.float64)


def make_batch(vs, s_hats, sequences: Sequence[Sequence[int]]) -> Batch:
    """Pad BOS...EOS index sequences into a :class:`Batch`."""
    width = max(len(seq) for seq in sequences)
    tokens = np.full((len(sequences), width), PAD, dtype=np.int64)
    for row, seq in enumerate(sequences):
        if len(seq) < 2 or seq[0] != BOS:
            raise ContractError("sequences must start with BOS and hold at least one target")
        tokens[row, :len(seq)] = seq
    lengths = np.array([len(seq) - 1 for seq in sequences], dtype=np.int64)
    s = None if s_hats is None else np.asarray(s_hats, dtype=np.float64)
    return Batch(np.asarray(vs, dtype=np.float64), s, tokens, lengths)


@dataclass
class DropoutMasks:
    v: np.ndarray | None = None
    h0: np.ndarray | None = None
    x: np.ndarray | None = None
    y: np.ndarray | None = None

    @classmethod
    def sample(cls, config: CellConfig, batch: Batch, rate: float, rng: np.random.Generator):
        if rate == 0.0:
            return cls()
        B, T = batch.inputs.shape
        keep = 1.0 - rate

        def draw(shape):
            return (rng.random(shape) < keep) / keep

        return cls(draw((B, config.v_dim)), draw((B, config.d)),
                   draw((T, B, config.m)), draw((T, B, config.d)))


NO_DROPOUT = DropoutMasks()


def _forward(params: CellParams, batch: Batch, kind: str, masks: DropoutMasks):
    v = batch.v if masks.v is None else batch.v * masks.v
    h0 = np.tanh(v @ params["W_h0"].T + params["b_h0"])
    c0 = np.tanh(v @ params["W_c0"].T + params["b_c0"])
    h = h0 if masks.h0 is None else h0 * masks.h0
    c = c0
    ctx = semantic_context(params, batch.s_hat)
    inputs, targets, mask = batch.inputs, batch.targets, batch.mask
    n_positions = mask.sum()
    if n_positions == 0:
        raise ContractError("batch has no target positions")
    rows = np.arange(inputs.shape[0])
    caches = []
    total = 0.0
    for t in range(inputs.shape[1]):
        x = params["W_E"][inputs[:, t]]
        if masks.x is not None:
            x = x * masks.x[t]
        h, c, cache = forward_step(params, x, h, c, ctx)
        h_out = h if masks.y is None else h * masks.y[t]
        p = softmax(h_out @ params["W_hy"].T)
        weight = mask[:, t] / n_positions
        tgt = targets[:, t]
        if kind == "cross_entropy":
            per_pos = -np.log(np.maximum(p[rows, tgt], np.finfo(np.float64).tiny))
            dlogits = p.copy()
            dlogits[rows, tgt] -= 1.0
        else:
            diff = p.copy()
            diff[rows, tgt] -= 1.0
            per_pos = 0.5 * np.sum(diff * diff, axis=1)
            # softmax Jacobian applied to dL/dp = p - y
            dlogits = p * (diff - np.sum(diff * p, axis=1, keepdims=True))
        total += float(np.sum(per_pos * weight))
        cache.update(h_out=h_out, dlogits=dlogits * weight[:, None], tokens=inputs[:, t])
        caches.append(cache)
    state = {"v": v, "h0": h0, "c0": c0, "ctx": ctx}
    return total, caches, state


def batch_loss(params: CellParams, batch: Batch, kind: str = "cross_entropy",
               masks: DropoutMasks = NO_DROPOUT) -> float:
    """Mean per-position loss over all non-padding positions of the batch."""
    return _forward(params, batch, kind, masks)[0]


def backward(params: CellParams, batch: Batch, kind: str = "cross_entropy",
             masks: DropoutMasks = NO_DROPOUT) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and its gradient with respect to every parameter tensor."""
    cfg = params.config
    total, caches, state = _forward(params, batch, kind, masks)
    grads = {name: np.zeros(shape) for name, shape in param_shapes(cfg).items()}
    ctx = state["ctx"]
    B = batch.v.shape[0]
    dh_next = np.zeros((B, cfg.d))
    dc_next = np.zeros((B, cfg.d))
    dctx = {key: np.zeros_like(val) for key, val in ctx.items() if key != "s_hat"}

    for t in range(len(caches) - 1, -1, -1):
        k = caches[t]
        dl = k["dlogits"]
        grads["W_hy"] += dl.T @ k["h_out"]
        dh_out = dl @ params["W_hy"]
        dh = (dh_out if masks.y is None else dh_out * masks.y[t]) + dh_next
        i, f, o, g, tc = k["i"], k["f"], k["o"], k["g"], k["tc"]
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = {
            "i": dc * g * i * (1.0 - i),
            "f": dc * k["c_prev"] * f * (1.0 - f),
            "o": do * o * (1.0 - o),
            "g": dc * i * (1.0 - g * g),
        }
        dc_prev = dc * f
        x, h_prev = k["x"], k["h_prev"]
        dx = np.zeros_like(x)
        dh_prev = np.zeros_like(h_prev)
        if cfg.variant == "gsscn":
            for gate in GATES:
                a = da[gate]
                xs, hs = k[f"xs_{gate}"], k[f"hs_{gate}"]
                grads[f"W_x{gate}"] += a.T @ xs
                grads[f"W_h{gate}"] += a.T @ hs
                grads[f"b_{gate}"] += a.sum(axis=0)
                dxs = a @ params[f"W_x{gate}"]
                dhs = a @ params[f"W_h{gate}"]
                dzx = dxs * ctx[f"ux_{gate}"]
                dzh = dhs * ctx[f"uh_{gate}"]
                dctx[f"ux_{gate}"] += dxs * k[f"zx_{gate}"]
                dctx[f"uh_{gate}"] += dhs * k[f"zh_{gate}"]
                grads[f"W_x{gate}n"] += dzx.T @ x
                grads[f"W_h{gate}n"] += dzh.T @ h_prev
                dx += dzx @ params[f"W_x{gate}n"]
                dh_prev += dzh @ params[f"W_h{gate}n"]
        else:
            h_in = k["h_in"] if cfg.variant == "gst" else h_prev
            dh_in = np.zeros_like(h_prev)
            for gate in GATES:
                a = da[gate]
                grads[f"W_x{gate}"] += a.T @ x
                grads[f"W_h{gate}"] += a.T @ h_in
                grads[f"b_{gate}"] += a.sum(axis=0)
                dx += a @ params[f"W_x{gate}"]
                dh_in += a @ params[f"W_h{gate}"]
            if cfg.variant == "gst":
                dz = dh_in * ctx["u"]
                dctx["u"] += dh_in * k["z"]
                grads["W_hn"] += dz.T @ h_prev
                dh_prev = dz @ params["W_hn"]
            else:
                dh_prev = dh_in
        if masks.x is not None:
            dx = dx * masks.x[t]
        np.add.at(grads["W_E"], k["tokens"], dx)
        if not (np.isfinite(dh_prev).all() and np.isfinite(dc_prev).all()):
            raise NumericError(f"non-finite gradient flowing out of step {t}")
        dh_next, dc_next = dh_prev, dc_prev

    dh0 = dh_next if masks.h0 is None else dh_next * masks.h0
    dpre_h = dh0 * (1.0 - state["h0"] ** 2)
    dpre_c = dc_next * (1.0 - state["c0"] ** 2)
    grads["W_h0"] += dpre_h.T @ state["v"]
    grads["b_h0"] += dpre_h.sum(axis=0)
    grads["W_c0"] += dpre_c.T @ state["v"]
    grads["b_c0"] += dpre_c.sum(axis=0)

    s_hat = ctx.get("s_hat")
    if cfg.variant == "gst":
        grads["W_hm"] += dctx["u"].T @ s_hat
    elif cfg.variant == "gsscn":
        for gate in GATES:
            grads[f"W_x{gate}m"] += dctx[f"ux_{gate}"].T @ s_hat
            grads[f"W_h{gate}m"] += dctx[f"uh_{gate}"].T @ s_hat

    for name, grad in grads.items():
        if not np.isfinite(grad).all():
            raise NumericError(f"non-finite gradient for parameter {name}")
    return total, grads


def numerical_gradient(params: CellParams, batch: Batch, kind: str = "cross_entropy",
                       masks: DropoutMasks = NO_DROPOUT, eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences ``(J(w + eps) - J(w - eps)) / (2 eps)`` entry by entry."""
    tensors = {name: params[name].copy() for name in params.names()}
    out = {}
    for name, base in tensors.items():
        grad = np.zeros_like(base)
        flat = base.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            plus = batch_loss(CellParams(params.config, tensors), batch, kind, masks)
            flat[idx] = orig - eps
            minus = batch_loss(CellParams(params.config, tensors), batch, kind, masks)
            flat[idx] = orig
            grad.reshape(-1)[idx] = (plus - minus) / (2.0 * eps)
        out[name] = grad
    return out


REL_ERROR_FLOOR = 1e-8


def relative_errors(analytic: dict, numeric: dict) -> dict[str, np.ndarray]:
    """Elementwise ``|a - n| / max(|a|, |n|, 1e-8)``."""
    out = {}
    for name, a in analytic.items():
        n = numeric[name]
        out[name] = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_ERROR_FLOOR)
    return out


@dataclass
class GradCheckResult:
    max_error: float
    frac_within: float
    n_params: int
    worst: str
    per_param: dict[str, float] = field(repr=False, default_factory=dict)

    def passed(self, tol_most: float = 1e-4, tol_all: float = 1e-3, frac: float = 0.99) -> bool:
        return self.frac_within >= frac and self.max_error <= tol_all


def gradient_check(params: CellParams, batch: Batch, kind: str = "cross_entropy",
                   masks: DropoutMasks = NO_DROPOUT, eps: float = 1e-5,
                   tol: float = 1e-4) -> GradCheckResult:
    _, analytic = backward(params, batch, kind, masks)
    numeric = numerical_gradient(params, batch, kind, masks, eps)
    errors = relative_errors(analytic, numeric)
    flat = np.concatenate([e.reshape(-1) for e in errors.values()])
    per_param = {name: float(e.max()) for name, e in errors.items()}
    worst = max(per_param, key=per_param.get)
    return GradCheckResult(float(flat.max()), float(np.mean(flat <= tol)), int(flat.size),
                           worst, per_param)


def sgd_update(params: CellParams, grads: dict[str, np.ndarray], lr: float,
               grad_clip: float | None = None, frozen: Sequence[str] = ()) -> CellParams:
    """``W <- W - lr * grad``; optional global-norm clipping first."""
    scale = 1.0
    if grad_clip is not None:
        norm = math.sqrt(sum(float(np.sum(g * g)) for name, g in grads.items() if name not in frozen))
        if norm > grad_clip:
            scale = grad_clip / norm
    updated = {}
    for name in params.names():
        if name in frozen or name not in grads:
            continue
        g = grads[name]
        if g.shape != params[name].shape:
            raise ContractError(f"{name}: gradient shape {g.shape} != parameter shape {params[name].shape}")
        updated[name] = params[name] - (lr * scale) * g
    return params.replace(**updated)


def smoothed_features(dataset: Dataset, sigma: float = DEFAULT_SIGMA, radius: int | None = None) -> np.ndarray:
    return np.stack([smooth(item.S, sigma, radius) for item in dataset.items])


@dataclass
class TrainResult:
    params: CellParams
    trace: list[float]


def write_trace(trace: Sequence[float], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, value in enumerate(trace, start=1):
            writer.writerow([epoch, repr(float(value))])


def train(dataset: Dataset, cell_config: CellConfig, train_config: TrainConfig, vocab: Vocabulary,
          sigma: float = DEFAULT_SIGMA, radius: int | None = None, embeddings=None,
          params: CellParams | None = None, progress=None) -> TrainResult:
    """SGD over every (image, caption) pair for ``train_config.epochs`` epochs.

    ``progress``, if given, is called as ``progress(epoch, mean_loss)``.
    """
    if len(dataset) == 0:
        raise ConfigError("cannot train on an empty dataset")
    if cell_config.V != len(vocab):
        raise ConfigError(f"config vocabulary size {cell_config.V} != vocabulary length {len(vocab)}")
    if cell_config.v_dim != dataset.v_dim:
        raise ConfigError(f"config v_dim {cell_config.v_dim} != dataset v_dim {dataset.v_dim}")
    if cell_config.s is not None and cell_config.s != dataset.s_dim:
        raise ConfigError(f"config semantic dim {cell_config.s} != dataset s_dim {dataset.s_dim}")
    tc = train_config
    if params is None:
        params = init_params(cell_config, tc.seed, embeddings)
    vs = np.stack([item.v for item in dataset.items])
    s_hats = smoothed_features(dataset, sigma, radius) if cell_config.variant != "lstm" else None
    examples = [(idx, encode(vocab, cap)) for idx, item in enumerate(dataset.items) for cap in item.captions]
    frozen = () if tc.finetune_embeddings else ("W_E",)
    rng = np.random.default_rng(tc.seed)
    trace = []
    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(examples))
        weighted, positions = 0.0, 0
        for step, start in enumerate(range(0, len(order), tc.batch_size)):
            chunk = [examples[j] for j in order[start:start + tc.batch_size]]
            rows = [idx for idx, _ in chunk]
            batch = make_batch(vs[rows], None if s_hats is None else s_hats[rows], [seq for _, seq in chunk])
            masks = DropoutMasks.sample(cell_config, batch, tc.dropout_rate, rng)
            value, grads = backward(params, batch, tc.loss_kind, masks)
            if not math.isfinite(value):
                raise NumericError(f"loss diverged at epoch {epoch}, step {step}")
            try:
                params = sgd_update(params, grads, tc.learning_rate, tc.grad_clip, frozen)
            except NumericError as exc:
                raise NumericError(f"update overflowed at epoch {epoch}, step {step}: {exc}") from None
            n = int(batch.lengths.sum())
            weighted += value * n
            positions += n
        mean = weighted / positions
        trace.append(mean)
        if progress is not None:
            progress(epoch, mean)
        log.debug("epoch %d loss %.6f", epoch, mean)
    return TrainResult(params, trace)
