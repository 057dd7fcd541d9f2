"""Translator interface used by the dual-language evaluation.

Directions are ``"L->E"`` (target language to English) and ``"E->L"``. Any
backend (a real MT service included) only has to provide ``translate``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol, Sequence

from gssfcap.errors import ContractError, ValidationError

L_TO_E = "L->E"
E_TO_L = "E->L"
DIRECTIONS = (L_TO_E, E_TO_L)
UNK_TOKEN = "<unk>"


class Translator(Protocol):
    def translate(self, tokens: Sequence[str], direction: str) -> list[str]: ...


def _check_direction(direction: str):
    if direction not in DIRECTIONS:
        raise ContractError(f"unknown translation direction {direction!r}; expected one of {DIRECTIONS}")


class IdentityTranslator:
    def translate(self, tokens, direction):
        _check_direction(direction)
        return list(tokens)


class DictionaryTranslator:
    """Token-by-token bijective dictionary.

    Unknown tokens become ``<unk>`` and are tallied in ``misses``.
    """

    def __init__(self, pairs):
        self.forward: dict[str, str] = {}
        self.backward: dict[str, str] = {}
        for src, dst in pairs:
            if src in self.forward or dst in self.backward:
                raise ValidationError(f"dictionary is not bijective at pair ({src!r}, {dst!r})")
            self.forward[src] = dst
            self.backward[dst] = src
        self.misses = 0

    @classmethod
    def from_file(cls, path) -> "DictionaryTranslator":
        """Two whitespace-separated UTF-8 columns: language-L token, English token."""
        pairs = []
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 2:
                    raise ValidationError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
                pairs.append((parts[0], parts[1]))
        return cls(pairs)

    def translate(self, tokens, direction):
        _check_direction(direction)
        table = self.forward if direction == L_TO_E else self.backward
        out = []
        for tok in tokens:
            if tok in table:
                out.append(table[tok])
            else:
                self.misses += 1
                out.append(UNK_TOKEN)
        return out
