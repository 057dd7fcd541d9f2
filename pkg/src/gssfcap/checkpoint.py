"""Checkpoint file: one UTF-8 JSON document.

Layout (format version 1)::

    {
      "format": "gssfcap-checkpoint",
      "version": 1,
      "config": {"variant": ..., "d": ..., "m": ..., "v_dim": ..., "V": ..., "s": ..., "f": ...},
      "sigma": 1.0,
      "radius": null | int,
      "vocab_sha256": "<hex digest of the newline-joined token list>",
      "vocab": {"itos": [...], "freq": {...}},
      "params": {"<canonical name>": {"shape": [...], "data": [row-major floats]}, ...},
      "meta": {...}               # free-form run information
    }

Floats are written with ``repr`` precision, so a load restores every
parameter bit for bit. Keys are sorted so equal checkpoints are equal files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gssfcap.cells import CellConfig, CellParams
from gssfcap.data import Vocabulary
from gssfcap.errors import ValidationError

FORMAT = "gssfcap-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    params: CellParams
    vocab: Vocabulary
    sigma: float
    radius: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def config(self) -> CellConfig:
        return self.params.config


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config": ckpt.config.to_dict(),
        "sigma": float(ckpt.sigma),
        "radius": ckpt.radius,
        "vocab_sha256": ckpt.vocab.digest(),
        "vocab": ckpt.vocab.to_dict(),
        "params": {name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
                   for name, arr in ckpt.params.tensors.items()},
        "meta": ckpt.meta,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_checkpoint(path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not a JSON checkpoint ({exc.msg})") from None
    if doc.get("format") != FORMAT:
        raise ValidationError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    config = CellConfig.from_dict(doc["config"])
    vocab = Vocabulary.from_dict(doc["vocab"])
    if vocab.digest() != doc.get("vocab_sha256"):
        raise ValidationError(f"{path}: vocabulary hash mismatch")
    tensors = {name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
               for name, entry in doc["params"].items()}
    params = CellParams(config, tensors)
    return Checkpoint(params, vocab, doc["sigma"], doc.get("radius"), doc.get("meta", {}))
