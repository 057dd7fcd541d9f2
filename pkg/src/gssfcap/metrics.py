"""Corpus caption metrics: BLEU-1..4, ROUGE-L and CIDEr-D.

Candidates and references are token lists. Text is turned into tokens with
:func:`gssfcap.data.tokenize` (lowercase, punctuation removed, whitespace
split) before it reaches any metric.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from gssfcap.data import tokenize
from gssfcap.errors import DomainError, TranslationError, ValidationError
from gssfcap.translate import E_TO_L, L_TO_E

TABLE_COLUMNS = ("CIDEr-D", "Bleu_4", "Bleu_3", "Bleu_2", "Bleu_1", "ROUGE_L")


@dataclass
class EvalItem:
    image_id: str
    candidate: list[str]
    references: list[list[str]]


def make_corpus(candidates: Mapping[str, Sequence], references: Mapping[str, Sequence[Sequence]]) -> list[EvalItem]:
    """Pair candidates with references by image id. Strings are tokenized."""
    items = []
    for image_id, cand in candidates.items():
        if image_id not in references:
            raise ValidationError(f"no references for image {image_id!r}")
        cand = tokenize(cand) if isinstance(cand, str) else list(cand)
        refs = [tokenize(r) if isinstance(r, str) else list(r) for r in references[image_id]]
        items.append(EvalItem(image_id, cand, refs))
    return validate_corpus(items)


def validate_corpus(items: Sequence[EvalItem]) -> list[EvalItem]:
    if not items:
        raise DomainError("evaluation corpus has no candidates")
    seen = set()
    for item in items:
        if item.image_id in seen:
            raise ValidationError(f"duplicate image id {item.image_id!r} in corpus")
        seen.add(item.image_id)
        if not item.references or not any(item.references):
            raise ValidationError(f"item {item.image_id!r} has no nonempty reference")
    return list(items)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(cand_len: int, refs: Sequence[Sequence[str]]) -> int:
    # ties go to the shorter reference
    return min((abs(len(r) - cand_len), len(r)) for r in refs)[1]


def bleu(corpus: Sequence[EvalItem], n_max: int = 4) -> tuple[list[float], list[dict]]:
    """Corpus BLEU_1..BLEU_n_max and per-item clipped n-gram statistics.

    Clipped matches and candidate n-gram totals are summed over the corpus
    before taking precisions. The brevity penalty ``exp(1 - r/c)`` applies
    when the total candidate length ``c`` is below the summed closest
    reference length ``r``. A zero precision at any order makes that and all
    higher BLEU orders zero (no smoothing).
    """
    corpus = validate_corpus(corpus)
    matches = [0] * n_max
    totals = [0] * n_max
    cand_len = ref_len = 0
    details = []
    for item in corpus:
        cand = item.candidate
        cand_len += len(cand)
        ref_len += _closest_ref_length(len(cand), item.references)
        precisions = []
        for n in range(1, n_max + 1):
            counts = ngrams(cand, n)
            max_ref: Counter = Counter()
            for ref in item.references:
                max_ref |= ngrams(ref, n)
            clipped = sum(min(c, max_ref[g]) for g, c in counts.items())
            total = sum(counts.values())
            matches[n - 1] += clipped
            totals[n - 1] += total
            precisions.append(clipped / total if total else 0.0)
        details.append({"image_id": item.image_id, "precisions": precisions,
                        "closest_ref_len": _closest_ref_length(len(cand), item.references)})
    if cand_len == 0:
        bp = 0.0
    elif cand_len < ref_len:
        bp = math.exp(1.0 - ref_len / cand_len)
    else:
        bp = 1.0
    scores = []
    log_sum = 0.0
    for n in range(1, n_max + 1):
        m, t = matches[n - 1], totals[n - 1]
        if m == 0 or t == 0 or bp == 0.0:
            scores.extend([0.0] * (n_max - n + 1))
            break
        log_sum += math.log(m / t)
        scores.append(bp * math.exp(log_sum / n))
    return scores, details


def lcs_length(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_f(candidate: Sequence, reference: Sequence, beta: float = 1.2) -> float:
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    return (1 + beta ** 2) * p * r / (r + beta ** 2 * p)


def rouge_l(corpus: Sequence[EvalItem], beta: float = 1.2) -> tuple[float, list[dict]]:
    """Mean over items of the best LCS F-measure against any reference."""
    corpus = validate_corpus(corpus)
    details = []
    for item in corpus:
        fs = [rouge_l_f(item.candidate, ref, beta) for ref in item.references]
        lcs = [lcs_length(item.candidate, ref) for ref in item.references]
        details.append({"image_id": item.image_id, "rouge_l": max(fs), "lcs": lcs})
    return sum(d["rouge_l"] for d in details) / len(details), details


def _tfidf(counts_by_n: list[Counter], df: list[Counter], log_n_docs: float):
    vecs, norms = [], []
    for n, counts in enumerate(counts_by_n):
        vec = {g: tf * (log_n_docs - math.log(max(1.0, df[n][g]))) for g, tf in counts.items()}
        vecs.append(vec)
        norms.append(sum(w * w for w in vec.values()))
    return vecs, norms


def cider_d(corpus: Sequence[EvalItem], n_max: int = 4, sigma_len: float = 6.0) -> tuple[float, list[dict], list[str]]:
    """CIDEr-D with document frequencies taken from the references.

    Per order ``n``: TF-IDF vectors (``idf = log(N / df)``, N the number of
    items), candidate weights clipped at the reference weights, cosine
    similarity times ``exp(-(len_c - len_r)^2 / (2 sigma_len^2))``, averaged
    over references. The item score is the mean over orders times 10 and the
    corpus score is the mean over items. Returns ``(score, details, warnings)``.
    """
    corpus = validate_corpus(corpus)
    warnings = []
    df = [Counter() for _ in range(n_max)]
    for item in corpus:
        for n in range(1, n_max + 1):
            seen = set()
            for ref in item.references:
                seen.update(ngrams(ref, n))
            df[n - 1].update(seen)
    if len(corpus) == 1:
        warnings.append("CIDEr-D on a single-item corpus: every idf is zero, so the score is 0")
    log_n = math.log(float(len(corpus)))
    details = []
    for item in corpus:
        cvec, cnorm = _tfidf([ngrams(item.candidate, n) for n in range(1, n_max + 1)], df, log_n)
        per_n = [0.0] * n_max
        for ref in item.references:
            rvec, rnorm = _tfidf([ngrams(ref, n) for n in range(1, n_max + 1)], df, log_n)
            delta = len(item.candidate) - len(ref)
            penalty = math.exp(-(delta ** 2) / (2.0 * sigma_len ** 2))
            for n in range(n_max):
                dot = sum(min(w, rvec[n].get(g, 0.0)) * rvec[n].get(g, 0.0) for g, w in cvec[n].items())
                denom = math.sqrt(cnorm[n] * rnorm[n])
                if denom > 0:
                    per_n[n] += penalty * dot / denom
        per_n = [val / len(item.references) for val in per_n]
        score = 10.0 * sum(per_n) / n_max
        details.append({"image_id": item.image_id, "cider_d": score, "cosine_by_order": per_n})
    return sum(d["cider_d"] for d in details) / len(details), details, warnings


@dataclass
class EvalReport:
    scores: dict[str, float]
    items: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    skipped: int = 0
    translation_misses: int = 0

    def to_dict(self) -> dict:
        return {"scores": self.scores, "items": self.items, "warnings": self.warnings,
                "skipped": self.skipped, "translation_misses": self.translation_misses}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    def table_row(self, label: str = "") -> str:
        cells = [f"{self.scores[col]:>8.4f}" for col in TABLE_COLUMNS]
        return f"{label:<12}" + "".join(f"{c:>10}" for c in cells)


def format_table(reports: Mapping[str, EvalReport]) -> str:
    """Aligned plain-text table, one row per labelled report."""
    header = f"{'':<12}" + "".join(f"{col:>10}" for col in TABLE_COLUMNS)
    rows = [report.table_row(label) for label, report in reports.items()]
    return "\n".join([header, "-" * len(header), *rows]) + "\n"


def evaluate(corpus: Sequence[EvalItem], n_max: int = 4, sigma_len: float = 6.0) -> EvalReport:
    corpus = validate_corpus(corpus)
    bleu_scores, bleu_items = bleu(corpus, n_max)
    rouge, rouge_items = rouge_l(corpus)
    cider, cider_items, warnings = cider_d(corpus, n_max, sigma_len)
    scores = {f"Bleu_{n}": s for n, s in enumerate(bleu_scores, start=1)}
    scores["ROUGE_L"] = rouge
    scores["CIDEr-D"] = cider
    items = []
    for b, r, c in zip(bleu_items, rouge_items, cider_items):
        items.append({"image_id": b["image_id"], "precisions": b["precisions"],
                      "lcs": r["lcs"], "rouge_l": r["rouge_l"],
                      "cider_d": c["cider_d"], "cosine_by_order": c["cosine_by_order"]})
    return EvalReport(scores, items, warnings)


def evaluate_e1_e2(generated_L: Mapping[str, Sequence[str]], refs_L: Mapping[str, Sequence],
                   refs_E: Mapping[str, Sequence], translator) -> tuple[EvalReport, EvalReport]:
    """Score generations in both language spaces.

    E1 compares the language-L generations with the language-L references.
    E2 translates each generation to English and compares with the English
    references. Items whose translation fails are skipped in E2 and counted.
    """
    e1 = evaluate(make_corpus(generated_L, refs_L))
    misses_before = getattr(translator, "misses", 0)
    translated, skipped = {}, 0
    for image_id, cand in generated_L.items():
        tokens = tokenize(cand) if isinstance(cand, str) else list(cand)
        try:
            translated[image_id] = translator.translate(tokens, L_TO_E)
        except TranslationError:
            skipped += 1
    if not translated:
        raise DomainError("every generation failed to translate")
    e2 = evaluate(make_corpus(translated, refs_E))
    e2.skipped = skipped
    e2.translation_misses = getattr(translator, "misses", 0) - misses_before
    if skipped:
        e2.warnings.append(f"{skipped} item(s) skipped after translation failure")
    return e1, e2


def translate_references(refs_E: Mapping[str, Sequence], translator) -> dict[str, list[list[str]]]:
    """English references into language L, for building the E1 reference set."""
    out = {}
    for image_id, refs in refs_E.items():
        out[image_id] = [translator.translate(tokenize(r) if isinstance(r, str) else list(r), E_TO_L)
                         for r in refs]
    return out
