"""Hand-computed metric corpora with their closed-form scores."""

import math

# two items, brevity penalty active: c = 7, r = 5 + 5
BLEU_CANDIDATES = {"1": "a b c d", "2": "x y z"}
BLEU_REFERENCES = {"1": ["a b c d e", "a b"], "2": ["x y w z q"]}
BLEU_BP = math.exp(1.0 - 10.0 / 7.0)
BLEU_PRECISIONS = (7 / 7, 4 / 5, 2 / 3, 1 / 1)
BLEU_EXPECTED = [BLEU_BP * math.prod(BLEU_PRECISIONS[:n]) ** (1.0 / n) for n in range(1, 5)]

# repeated-word candidate: clipped unigram precision 1/3, no penalty since c > r
REPEAT_CANDIDATES = {"1": "the the the"}
REPEAT_REFERENCES = {"1": ["the cat"]}
REPEAT_EXPECTED = [1.0 / 3.0, 0.0, 0.0, 0.0]

# LCS("a b c d", "a c d") = 3, P = 3/4, R = 1
ROUGE_CANDIDATE = "a b c d"
ROUGE_REFERENCE = "a c d"
ROUGE_EXPECTED = (1 + 1.2 ** 2) * 0.75 * 1.0 / (1.0 + 1.2 ** 2 * 0.75)

# unigram CIDEr-D over three items; df: a, b, d, e -> 2 and c -> 1
CIDER_CANDIDATES = {"1": "a b c", "2": "b d", "3": "e"}
CIDER_REFERENCES = {"1": ["a b d", "a c"], "2": ["b d e"], "3": ["a e"]}
_L, _K = math.log(1.5), math.log(3.0)
_P = math.exp(-1.0 / 72.0)
_ITEM1 = 10 * (2 * _L ** 2 / math.sqrt((2 * _L ** 2 + _K ** 2) * 3 * _L ** 2)
               + _P * (_L ** 2 + _K ** 2) / math.sqrt((2 * _L ** 2 + _K ** 2) * (_L ** 2 + _K ** 2))) / 2
_ITEM2 = 10 * _P * 2 / math.sqrt(6)
_ITEM3 = 10 * _P / math.sqrt(2)
CIDER_EXPECTED_ITEMS = (_ITEM1, _ITEM2, _ITEM3)
CIDER_EXPECTED = sum(CIDER_EXPECTED_ITEMS) / 3

# identity corpus: every candidate equals its only reference
IDENTITY = {"1": "a man rides a horse", "2": "two dogs play in snow", "3": "a red bus on the road"}
