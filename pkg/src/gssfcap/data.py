"""Vocabulary, dataset I/O and the synthetic desk-scale dataset.

Dataset wire format (JSON lines, one image per line)::

    {"image_id": "synth-00000",
     "v": [float, ...],          # visual features, length v_dim
     "S": [float, ...],          # tag likelihoods in [0, 1], length s_dim
     "captions": ["a b c", ...]} # at least one nonempty caption

Tag order in ``S`` matters: smoothing treats adjacent indices as neighbours.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from gssfcap.errors import ConfigError, ValidationError

log = logging.getLogger(__name__)

BOS, EOS, UNK, PAD = 0, 1, 2, 3
SPECIALS = ("<bos>", "<eos>", "<unk>", "<pad>")

# presets for the two vocabularies the method was run with
MAX_VOCAB_BENGALI = 20000
MAX_VOCAB_ENGLISH = 8791


def tokenize(text: str) -> list[str]:
    """Lowercase, drop Unicode punctuation, split on whitespace."""
    kept = "".join(ch for ch in text.lower() if not unicodedata.category(ch).startswith("P"))
    return kept.split()


def _as_tokens(sentence) -> list[str]:
    return tokenize(sentence) if isinstance(sentence, str) else list(sentence)


@dataclass
class Vocabulary:
    itos: list[str]
    freq: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.itos[:4]) != SPECIALS:
            raise ValidationError(f"vocabulary must start with the reserved tokens {SPECIALS}")
        if len(set(self.itos)) != len(self.itos):
            raise ValidationError("vocabulary contains duplicate tokens")
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {"itos": list(self.itos), "freq": dict(self.freq)}

    @classmethod
    def from_dict(cls, data) -> "Vocabulary":
        return cls(list(data["itos"]), dict(data.get("freq", {})))


def build_vocab(sentences: Iterable, max_size: int = MAX_VOCAB_BENGALI,
                min_doc_frac: float = 0.0) -> Vocabulary:
    """Frequency-ranked vocabulary.

    Tokens are ranked by count (ties broken lexicographically). A token is
    kept if it fits in ``max_size`` (reserved tokens included) and appears in
    at least ``min_doc_frac`` of the sentences.
    """
    if max_size < len(SPECIALS) + 1:
        raise ConfigError(f"max_size must be >= {len(SPECIALS) + 1} to hold the reserved tokens")
    if not 0.0 <= min_doc_frac <= 1.0:
        raise ConfigError(f"min_doc_frac must lie in [0, 1], got {min_doc_frac}")
    counts: Counter = Counter()
    doc_counts: Counter = Counter()
    n_docs = 0
    for sentence in sentences:
        tokens = _as_tokens(sentence)
        n_docs += 1
        counts.update(tokens)
        doc_counts.update(set(tokens))
    if n_docs == 0:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    for special in SPECIALS:
        counts.pop(special, None)
    ranked = sorted(counts, key=lambda tok: (-counts[tok], tok))
    budget = max_size - len(SPECIALS)
    kept = [tok for tok in ranked if doc_counts[tok] / n_docs >= min_doc_frac][:budget]
    return Vocabulary(list(SPECIALS) + kept, {tok: counts[tok] for tok in kept})


def encode(vocab: Vocabulary, text) -> list[int]:
    return [BOS] + [vocab.index(tok) for tok in _as_tokens(text)] + [EOS]


def decode(vocab: Vocabulary, indices: Sequence[int]) -> str:
    """Inverse of :func:`encode`; BOS/EOS/PAD are dropped, UNK is kept as ``<unk>``."""
    return " ".join(vocab.itos[i] for i in indices if i not in (BOS, EOS, PAD))


@dataclass
class DatasetItem:
    image_id: str
    v: np.ndarray
    S: np.ndarray
    captions: list[str]

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "v": self.v.tolist(), "S": self.S.tolist(),
                "captions": list(self.captions)}

    def __eq__(self, other):
        if not isinstance(other, DatasetItem):
            return NotImplemented
        return (self.image_id == other.image_id and self.captions == other.captions
                and np.array_equal(self.v, other.v) and np.array_equal(self.S, other.S))


@dataclass
class Dataset:
    items: list[DatasetItem]
    v_dim: int
    s_dim: int

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def sentences(self) -> list[str]:
        return [cap for item in self.items for cap in item.captions]

    def summary(self, vocab: Vocabulary | None = None) -> dict:
        stats = {"items": len(self.items),
                 "captions": sum(len(item.captions) for item in self.items),
                 "v_dim": self.v_dim, "s_dim": self.s_dim}
        if vocab is not None:
            tokens = [tok for sent in self.sentences() for tok in tokenize(sent)]
            covered = sum(1 for tok in tokens if tok in vocab)
            stats["vocab_coverage"] = covered / len(tokens) if tokens else 0.0
        return stats

    def split(self, n_first: int) -> tuple["Dataset", "Dataset"]:
        return (Dataset(self.items[:n_first], self.v_dim, self.s_dim),
                Dataset(self.items[n_first:], self.v_dim, self.s_dim))


def _validate_item(raw, lineno: int, v_dim: int | None, s_dim: int | None) -> DatasetItem:
    if not isinstance(raw, dict):
        raise ValidationError(f"line {lineno}: expected a JSON object")
    image_id = raw.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise ValidationError(f"line {lineno}: missing or empty image_id")
    missing = {"v", "S", "captions"} - set(raw)
    if missing:
        raise ValidationError(f"item {image_id!r}: missing fields {sorted(missing)}")
    try:
        v = np.asarray(raw["v"], dtype=np.float64)
        S = np.asarray(raw["S"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"item {image_id!r}: features are not numeric arrays ({exc})") from None
    if v.ndim != 1 or (v_dim is not None and v.size != v_dim):
        raise ValidationError(f"item {image_id!r}: visual features have shape {v.shape}, expected ({v_dim},)")
    if S.ndim != 1 or (s_dim is not None and S.size != s_dim):
        raise ValidationError(f"item {image_id!r}: semantic features have shape {S.shape}, expected ({s_dim},)")
    if not np.isfinite(v).all():
        raise ValidationError(f"item {image_id!r}: visual features contain non-finite values")
    if not np.isfinite(S).all() or (S < 0).any() or (S > 1).any():
        raise ValidationError(f"item {image_id!r}: semantic likelihoods must lie in [0, 1]")
    captions = raw["captions"]
    if (not isinstance(captions, list) or not captions
            or not all(isinstance(c, str) and tokenize(c) for c in captions)):
        raise ValidationError(f"item {image_id!r}: captions must be a nonempty list of nonempty strings")
    return DatasetItem(image_id, v, S, list(captions))


def load_dataset(path, v_dim: int | None = None, s_dim: int | None = None) -> Dataset:
    """Read and validate a JSONL dataset.

    When ``v_dim``/``s_dim`` are omitted they are taken from the first item and
    enforced on the rest.
    """
    path = Path(path)
    items: list[DatasetItem] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            item = _validate_item(raw, lineno, v_dim, s_dim)
            if item.image_id in seen:
                raise ValidationError(f"item {item.image_id!r}: duplicate image_id")
            seen.add(item.image_id)
            v_dim, s_dim = item.v.size, item.S.size
            items.append(item)
    if not items:
        raise ValidationError(f"{path}: dataset is empty")
    dataset = Dataset(items, v_dim, s_dim)
    log.info("loaded %s: %s", path, dataset.summary())
    return dataset


def write_dataset(dataset: Dataset, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for item in dataset.items:
            fh.write(json.dumps(item.to_json(), ensure_ascii=False) + "\n")


FILLERS = ("a", "the", "one", "some")


def tag_word(index: int, vocab_size: int) -> str:
    return f"w{index % vocab_size}"


def synth_dataset(n_items: int, v_dim: int = 16, s_dim: int = 20, vocab_size: int = 20,
                  seed: int = 0, top_k: int = 5, captions_per_item: int = 1) -> Dataset:
    """Deterministic toy dataset with a planted caption rule.

    Each item activates ``top_k`` random tags with likelihoods in [0.5, 1]; the
    rest stay below 0.1. The first caption is the words of the active tags in
    order of decreasing likelihood. Extra captions prepend a filler word.
    Visual features are a fixed random projection of ``S`` plus noise, so they
    carry the same information less directly.
    """
    if min(n_items, v_dim, s_dim, vocab_size, top_k, captions_per_item) < 1:
        raise ConfigError("synth_dataset sizes must be positive")
    if top_k > s_dim:
        raise ConfigError(f"top_k={top_k} exceeds s_dim={s_dim}")
    if captions_per_item > len(FILLERS) + 1:
        raise ConfigError(f"at most {len(FILLERS) + 1} captions per item")
    rng = np.random.default_rng(seed)
    projection = rng.normal(size=(v_dim, s_dim)) / math.sqrt(s_dim)
    items = []
    for i in range(n_items):
        S = rng.uniform(0.0, 0.1, size=s_dim)
        active = rng.choice(s_dim, size=top_k, replace=False)
        S[active] = rng.uniform(0.5, 1.0, size=top_k)
        v = np.tanh(projection @ S + 0.1 * rng.normal(size=v_dim))
        words = [tag_word(j, vocab_size) for j in planted_order(S, top_k)]
        captions = [" ".join(words)]
        captions += [" ".join([FILLERS[k]] + words) for k in range(captions_per_item - 1)]
        items.append(DatasetItem(f"synth-{i:05d}", v, S, captions))
    return Dataset(items, v_dim, s_dim)


def planted_order(S, top_k: int) -> list[int]:
    """Indices of the ``top_k`` largest entries, largest first (ties by index)."""
    S = np.asarray(S)
    return [int(j) for j in np.lexsort((np.arange(S.size), -S))[:top_k]]


def load_embeddings(path, vocab: Vocabulary, m: int, seed: int = 0) -> np.ndarray:
    """GloVe-style text table -> ``[len(vocab), m]`` matrix.

    Each line is a token followed by ``m`` numbers. Vocabulary entries absent
    from the file get seeded uniform(-0.1, 0.1) vectors.
    """
    rng = np.random.default_rng(seed)
    table = rng.uniform(-0.1, 0.1, size=(len(vocab), m))
    found = 0
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != m + 1:
                raise ValidationError(f"{path}:{lineno}: expected a token and {m} numbers, got {len(parts) - 1}")
            token = parts[0]
            if token in vocab:
                try:
                    table[vocab.index(token)] = [float(x) for x in parts[1:]]
                except ValueError:
                    raise ValidationError(f"{path}:{lineno}: non-numeric embedding entry") from None
                found += 1
    log.info("embeddings: %d of %d vocabulary entries found in %s", found, len(vocab), path)
    return table
