"""Tokenization helpers shared by the hashing embedder and text metrics.

Tokenization is deliberately simple: lowercase, split on Unicode
whitespace, and break CJK runs into single characters so Chinese text
gets usable tokens without a segmenter.
"""

from __future__ import annotations

# Main CJK blocks; enough to route Chinese/Japanese text through
# per-character tokenization.
_CJK_RANGES = (
    (0x4E00, 0x9FFF),    # CJK Unified Ideographs
    (0x3400, 0x4DBF),    # CJK Extension A
    (0xF900, 0xFAFF),    # CJK Compatibility Ideographs
    (0x3040, 0x30FF),    # Hiragana + Katakana
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; CJK characters become single-char tokens."""
    tokens: list[str] = []
    for chunk in text.lower().split():
        run: list[str] = []
        for ch in chunk:
            if _is_cjk(ch):
                if run:
                    tokens.append("".join(run))
                    run = []
                tokens.append(ch)
            else:
                run.append(ch)
        if run:
            tokens.append("".join(run))
    return tokens


def ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    """All contiguous n-grams of the token list (empty if too short)."""
    if len(tokens) < n:
        return []
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def split_sentences(text: str) -> list[str]:
    """Split on sentence-final punctuation, keeping the terminator."""
    sentences: list[str] = []
    buf: list[str] = []
    for ch in text:
        buf.append(ch)
        if ch in ".!?。！？":
            sentence = "".join(buf).strip()
            if sentence:
                sentences.append(sentence)
            buf = []
    tail = "".join(buf).strip()
    if tail:
        sentences.append(tail)
    return sentences
