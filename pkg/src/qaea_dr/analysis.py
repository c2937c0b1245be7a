"""Generated-text analyses: diversity metrics, noise robustness, counts.

Diversity metric definitions are stated here precisely so results are
self-consistent: lower scores mean more diverse text on every metric.
Token-level BERT matching is out of scope, so the embedding-based score
is a mean pairwise sentence-embedding cosine and is named accordingly
rather than claiming equivalence with token-matching variants.
"""

from __future__ import annotations

import math
import random
import string
import zlib
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .augment import GenerationRecord
from .embed import EmbeddingProvider, embed_texts
from .errors import ValidationError
from .llm import TASK_EE, TASK_QAG
from .textproc import ngrams, tokenize
from .vdb import cosine

_NOISE_ALPHABET = string.ascii_letters + string.digits


@dataclass(frozen=True)
class DiversityScores:
    compression_ratio: float
    self_bleu: float
    self_embed_score: float
    self_repetition: float


@dataclass(frozen=True)
class NoiseSpec:
    percentage: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.percentage < 0:
            raise ValidationError(f"noise percentage must be >= 0, got {self.percentage}")


@dataclass(frozen=True)
class UnitCountStats:
    mean_qa_per_doc: float
    mean_events_per_doc: float


def _token_lengths(total: int, rng: random.Random) -> list[int]:
    """Split a character budget into token lengths, preferring 5..12."""
    lengths: list[int] = []
    remaining = total
    while remaining > 0:
        if remaining <= 12:
            lengths.append(remaining)
            break
        length = rng.randint(5, 12)
        if 0 < remaining - length < 5:
            length = remaining - 5
        lengths.append(length)
        remaining -= length
    return lengths


def inject_noise(text: str, spec: NoiseSpec) -> tuple[str, list[str]]:
    """Insert random alphanumeric tokens at word boundaries.

    Token characters total exactly round(percentage * len(text));
    delimiting spaces are not counted against the budget. The original
    text survives as a character subsequence (insertion only). Returns
    the noisy text and the token list for retention measurement.
    """
    if not text:
        raise ValidationError("cannot inject noise into empty text")
    rng = random.Random(spec.seed)
    budget = round(spec.percentage * len(text))
    if budget == 0:
        return text, []

    tokens = [
        "".join(rng.choice(_NOISE_ALPHABET) for _ in range(n))
        for n in _token_lengths(budget, rng)
    ]

    # candidate gaps: position 0, after any whitespace run, and the end
    gaps = [0, len(text)]
    for i, ch in enumerate(text):
        if ch.isspace() and (i + 1 == len(text) or not text[i + 1].isspace()):
            gaps.append(i + 1)
    gaps = sorted(set(gaps))

    insertions = sorted(
        ((rng.choice(gaps), tok) for tok in tokens), key=lambda pair: pair[0]
    )
    out: list[str] = []
    cursor = 0
    for pos, tok in insertions:
        out.append(text[cursor:pos])
        if pos == len(text):
            out.append(" " + tok)
        else:
            out.append(tok + " ")
        cursor = pos
    out.append(text[cursor:])
    return "".join(out), tokens


def retained_noise(generated_texts: Sequence[str], noise_tokens: Sequence[str]) -> float:
    """Fraction of noise tokens appearing verbatim in the generated texts."""
    if not noise_tokens:
        return 0.0
    blob = "\n".join(generated_texts)
    found = sum(1 for tok in noise_tokens if tok in blob)
    return found / len(noise_tokens)


def _modified_precision(
    candidate: list[str], references: list[list[str]], n: int
) -> tuple[int, int]:
    cand_counts = Counter(ngrams(candidate, n))
    total = sum(cand_counts.values())
    if total == 0:
        return 0, 0
    max_ref: Counter = Counter()
    for ref in references:
        for gram, count in Counter(ngrams(ref, n)).items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    clipped = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
    return clipped, total


def _bleu(candidate: list[str], references: list[list[str]], max_n: int = 4) -> float:
    """Clipped n-gram BLEU, uniform weights, standard brevity penalty.

    No smoothing: a zero precision zeroes the score. Orders the candidate
    is too short to populate are dropped and the weights renormalized,
    so identical short texts still score 1.
    """
    log_sum = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        clipped, total = _modified_precision(candidate, references, n)
        if total == 0:
            continue
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
        orders += 1
    if orders == 0:
        return 0.0
    c = len(candidate)
    r = min((len(ref) for ref in references), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c > r else math.exp(1 - r / c) if c > 0 else 0.0
    return bp * math.exp(log_sum / orders)


def self_bleu(texts: Sequence[str]) -> float:
    """Mean BLEU of each text against all the others as references."""
    if len(texts) < 2:
        raise ValidationError("self-BLEU needs at least two texts")
    token_lists = [tokenize(t) for t in texts]
    scores = []
    for i, candidate in enumerate(token_lists):
        references = [tok for j, tok in enumerate(token_lists) if j != i]
        scores.append(_bleu(candidate, references))
    return sum(scores) / len(scores)


def compression_ratio(texts: Sequence[str]) -> float:
    """Raw bytes over DEFLATE-compressed bytes of the joined texts."""
    if not texts:
        raise ValidationError("compression ratio needs at least one text")
    blob = "\n".join(texts).encode("utf-8")
    return len(blob) / len(zlib.compress(blob))


def self_repetition(texts: Sequence[str]) -> float:
    """Fraction of distinct 4-grams that occur in more than one text."""
    if len(texts) < 2:
        raise ValidationError("self-repetition needs at least two texts")
    gram_texts: dict[tuple[str, ...], int] = {}
    for tokens in (tokenize(t) for t in texts):
        for gram in set(ngrams(tokens, 4)):
            gram_texts[gram] = gram_texts.get(gram, 0) + 1
    if not gram_texts:
        return 0.0
    shared = sum(1 for count in gram_texts.values() if count > 1)
    return shared / len(gram_texts)


def self_embed_score(texts: Sequence[str], provider: EmbeddingProvider) -> float:
    """Mean pairwise cosine similarity of the texts' embeddings."""
    if len(texts) < 2:
        raise ValidationError("self embedding score needs at least two texts")
    embeddings = embed_texts(list(texts), provider)
    total = 0.0
    pairs = 0
    for i in range(len(embeddings)):
        for j in range(i + 1, len(embeddings)):
            total += cosine(embeddings[i], embeddings[j])
            pairs += 1
    return total / pairs


def diversity_scores(
    texts: Sequence[str], provider: EmbeddingProvider
) -> DiversityScores:
    return DiversityScores(
        compression_ratio=compression_ratio(texts),
        self_bleu=self_bleu(texts),
        self_embed_score=self_embed_score(texts, provider),
        self_repetition=self_repetition(texts),
    )


def unit_count_stats(records: Sequence[GenerationRecord]) -> UnitCountStats:
    """Mean generated units per successfully augmented document, per task."""
    def mean_for(task: str) -> float:
        counts = [len(r.units) for r in records if r.task == task and not r.failed]
        return sum(counts) / len(counts) if counts else 0.0

    return UnitCountStats(
        mean_qa_per_doc=mean_for(TASK_QAG),
        mean_events_per_doc=mean_for(TASK_EE),
    )
