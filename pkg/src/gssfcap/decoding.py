"""Greedy and beam-search caption generation.

``max_len`` bounds the number of decoding steps, i.e. emitted tokens counting
a final EOS. Returned token lists exclude BOS and EOS.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from gssfcap.cells import CellParams, CellState, forward_step, init_state, semantic_context
from gssfcap.data import BOS, EOS
from gssfcap.errors import ConfigError, ShapeError
from gssfcap.gssf import DEFAULT_SIGMA, smooth
from gssfcap.linalg import log_softmax


class _Runner:
    """Steps one sequence through a cell with the semantic context cached."""

    def __init__(self, params: CellParams, v, S, sigma: float, radius: int | None):
        cfg = params.config
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (cfg.v_dim,):
            raise ShapeError(f"visual features have shape {v.shape}, expected ({cfg.v_dim},)")
        s_hat = None
        if cfg.variant != "lstm":
            if S is None:
                raise ShapeError(f"variant {cfg.variant} needs semantic features")
            S = np.asarray(S, dtype=np.float64)
            if S.shape != (cfg.s,):
                raise ShapeError(f"semantic features have shape {S.shape}, expected ({cfg.s},)")
            s_hat = smooth(S, sigma, radius)
        self.params = params
        self.ctx = semantic_context(params, s_hat)
        self.initial = init_state(params, v)

    def advance(self, state: CellState, token: int):
        """Feed ``token``; return the new state and next-token log-probabilities."""
        x = self.params["W_E"][token]
        h, c, _ = forward_step(self.params, x, state.h, state.c, self.ctx, check=True)
        logp = log_softmax(h @ self.params["W_hy"].T)
        return CellState(h, c, state.t + 1), logp


def greedy_decode(params: CellParams, v, S=None, max_len: int = 16,
                  sigma: float = DEFAULT_SIGMA, radius: int | None = None) -> list[int]:
    if max_len < 1:
        raise ConfigError("max_len must be >= 1")
    runner = _Runner(params, v, S, sigma, radius)
    state, token, out = runner.initial, BOS, []
    for _ in range(max_len):
        state, logp = runner.advance(state, token)
        token = int(np.argmax(logp))  # first maximum, i.e. lowest index on ties
        if token == EOS:
            break
        out.append(token)
    return out


@dataclass
class Hypothesis:
    tokens: list[int]
    log_prob: float
    state: CellState = field(repr=False)
    finished: bool = False

    @property
    def length(self) -> int:
        """Emitted tokens, EOS included, BOS excluded."""
        return len(self.tokens) - 1

    @property
    def caption(self) -> list[int]:
        body = self.tokens[1:]
        return body[:-1] if body and body[-1] == EOS else body

    def normalized(self) -> float:
        return self.log_prob / max(self.length, 1)


def repeats_ngram(tokens: Sequence[int], n: int) -> bool:
    """True if the last ``n`` tokens already occur as an earlier n-gram."""
    if n < 1 or len(tokens) < n:
        return False
    tail = tuple(tokens[-n:])
    return any(tuple(tokens[i:i + n]) == tail for i in range(len(tokens) - n))


@dataclass
class BeamResult:
    best: Hypothesis
    beam: list[Hypothesis]


def beam_decode(params: CellParams, v, S=None, beam_size: int = 5, max_len: int = 16,
                no_repeat_n: int | None = 2, length_norm: bool = True,
                sigma: float = DEFAULT_SIGMA, radius: int | None = None) -> BeamResult:
    """Length-bounded beam search over cumulative log-probabilities.

    Each step keeps the ``beam_size`` best extensions overall (ties go to the
    lexicographically smaller sequence); extensions ending in EOS, or reaching
    ``max_len``, leave the beam as finished. An extension that repeats an
    n-gram of size ``no_repeat_n`` within its own generated tokens is
    discarded (``None`` or 0 disables this). Finished hypotheses are ranked by
    ``log_prob / length`` when ``length_norm`` is set, else by ``log_prob``.
    """
    if beam_size < 1:
        raise ConfigError(f"beam_size must be >= 1, got {beam_size}")
    if max_len < 1:
        raise ConfigError("max_len must be >= 1")
    runner = _Runner(params, v, S, sigma, radius)
    alive = [Hypothesis([BOS], 0.0, runner.initial)]
    finished: list[Hypothesis] = []
    for step in range(max_len):
        candidates = []
        for hyp in alive:
            state, logp = runner.advance(hyp.state, hyp.tokens[-1])
            for tok in range(logp.size):
                tokens = hyp.tokens + [tok]
                if no_repeat_n and repeats_ngram(tokens[1:], no_repeat_n):
                    continue
                candidates.append((hyp.log_prob + float(logp[tok]), tokens, state))
        candidates.sort(key=lambda cand: (-cand[0], cand[1]))
        alive = []
        for score, tokens, state in candidates[:beam_size]:
            done = tokens[-1] == EOS or step == max_len - 1
            hyp = Hypothesis(tokens, score, state, done)
            (finished if done else alive).append(hyp)
        if not alive:
            break
    finished.extend(alive)

    def rank(hyp):
        return (-(hyp.normalized() if length_norm else hyp.log_prob), hyp.tokens)

    finished.sort(key=rank)
    return BeamResult(finished[0], finished)


def sequence_log_prob(params: CellParams, v, S, tokens: Sequence[int],
                      sigma: float = DEFAULT_SIGMA, radius: int | None = None) -> float:
    """Replay ``tokens`` (BOS first) through the cell and sum log-probabilities."""
    runner = _Runner(params, v, S, sigma, radius)
    state, total = runner.initial, 0.0
    for prev, tok in zip(tokens[:-1], tokens[1:]):
        state, logp = runner.advance(state, prev)
        total += float(logp[tok])
    return total


def write_generations(records, path) -> None:
    """JSON lines ``{image_id, tokens, text, log_prob}``."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"image_id": rec["image_id"], "tokens": list(rec["tokens"]),
                                 "text": rec["text"], "log_prob": rec["log_prob"]},
                                ensure_ascii=False) + "\n")


def read_generations(path) -> list[dict]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out
