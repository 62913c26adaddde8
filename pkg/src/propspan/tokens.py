"""Tokenization with character offsets and the span <-> BIO tag codec.

Character offsets are the common currency: annotations are character
ranges over article text, models see token sequences, and everything
here keeps the two views convertible without loss.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import NamedTuple

O, B, I = 0, 1, 2
TAG_NAMES = ("O", "B", "I")

PAD, UNK, BOS, EOS, BOP, EOP = "[PAD]", "[UNK]", "[BOS]", "[EOS]", "[BOP]", "[EOP]"
SPECIAL_TOKENS = (PAD, UNK, BOS, EOS, BOP, EOP)

_PUNCT = set(string.punctuation) | set("‘’“”–—…")


class Token(NamedTuple):
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class Span:
    """A character range in one article, optionally labeled with a technique."""

    article_id: str
    start: int
    end: int
    technique: int | None = None

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"degenerate span ({self.start}, {self.end})")

    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class TokenizedText:
    text: str
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


def tokenize(text: str) -> TokenizedText:
    """Whitespace words with punctuation characters split into single tokens."""
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _PUNCT:
            tokens.append(Token(ch, i, i + 1))
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in _PUNCT:
            j += 1
        tokens.append(Token(text[i:j], i, j))
        i = j
    return TokenizedText(text=text, tokens=tuple(tokens))


def merge_spans(spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Union of overlapping/touching-by-overlap character ranges, sorted."""
    if not spans:
        return []
    ordered = sorted(spans)
    merged = [ordered[0]]
    for s, e in ordered[1:]:
        ls, le = merged[-1]
        if s < le:  # strict overlap only; abutting spans stay separate
            merged[-1] = (ls, max(le, e))
        else:
            merged.append((s, e))
    return merged


def spans_to_tags(tt: TokenizedText, spans: list[Span]) -> list[int]:
    """BIO tags for the union-merged spans; snaps outward to token boundaries."""
    for sp in spans:
        if sp.end > len(tt.text):
            raise ValueError(f"span ({sp.start}, {sp.end}) outside text of length {len(tt.text)}")
    tags = [O] * len(tt.tokens)
    for ms, me in merge_spans([(sp.start, sp.end) for sp in spans]):
        run_started = False
        for j, tok in enumerate(tt.tokens):
            if tok.start < me and tok.end > ms:
                if tags[j] != O:
                    run_started = True  # token straddles two merged spans; keep run going
                    continue
                tags[j] = I if run_started else B
                run_started = True
    return tags


def tags_to_spans(tt: TokenizedText, tags: list[int], article_id: str = "") -> list[Span]:
    """Inverse codec; a bare I after O opens a span (lenient decode)."""
    if len(tags) != len(tt.tokens):
        raise ValueError(f"{len(tags)} tags for {len(tt.tokens)} tokens")
    spans: list[Span] = []
    run_start: int | None = None
    last_end = 0
    for tok, tag in zip(tt.tokens, tags):
        if tag == B or (tag == I and run_start is None):
            if run_start is not None:
                spans.append(Span(article_id, run_start, last_end))
            run_start = tok.start
            last_end = tok.end
        elif tag == I:
            last_end = tok.end
        else:
            if run_start is not None:
                spans.append(Span(article_id, run_start, last_end))
                run_start = None
    if run_start is not None:
        spans.append(Span(article_id, run_start, last_end))
    return spans


def span_token_range(tt: TokenizedText, span: Span) -> tuple[int, int]:
    """Half-open token index range intersecting the span (outward snap)."""
    first = last = None
    for j, tok in enumerate(tt.tokens):
        if tok.start < span.end and tok.end > span.start:
            if first is None:
                first = j
            last = j
    if first is None:
        raise ValueError(f"span ({span.start}, {span.end}) covers no token")
    return first, last + 1


@dataclass(frozen=True)
class ContextWindow:
    """Token-index window around a span: [start, end) with the span at [span_start, span_end)."""

    start: int
    end: int
    span_start: int
    span_end: int


def extend_context(tt: TokenizedText, span: Span, max_tokens: int,
                   truncate: bool = False) -> ContextWindow:
    """Grow the span's token range equally left and right up to ``max_tokens``.

    Budget left over at a document boundary moves to the other side, so the
    window always has min(max_tokens, len(doc)) tokens.
    """
    s0, s1 = span_token_range(tt, span)
    span_len = s1 - s0
    n = len(tt.tokens)
    if span_len > max_tokens:
        if not truncate:
            raise ValueError(f"span of {span_len} tokens exceeds budget {max_tokens}")
        return ContextWindow(s0, s0 + max_tokens, s0, s0 + max_tokens)
    budget = max_tokens - span_len
    left = min(budget // 2, s0)
    right = min(budget - left, n - s1)
    left = min(budget - right, s0)
    return ContextWindow(s0 - left, s1 + right, s0, s1)


def inject_markers(window_tokens: list[str], span_start: int, span_end: int,
                   max_len: int | None = None) -> list[str]:
    """[BOS] left [BOP] span [EOP] right [EOS], optionally padded/truncated.

    ``span_start``/``span_end`` index into ``window_tokens``. Truncation drops
    context from the right, then from the left; the marked span is never cut.
    """
    if not (0 <= span_start < span_end <= len(window_tokens)):
        raise ValueError(f"span range ({span_start}, {span_end}) outside window "
                         f"of {len(window_tokens)} tokens")
    left = list(window_tokens[:span_start])
    mid = list(window_tokens[span_start:span_end])
    right = list(window_tokens[span_end:])
    if max_len is not None:
        fixed = len(mid) + 4
        if fixed > max_len:
            raise ValueError(f"marked span needs {fixed} tokens, budget is {max_len}")
        over = fixed + len(left) + len(right) - max_len
        if over > 0:
            cut = min(over, len(right))
            right = right[:len(right) - cut]
            over -= cut
        if over > 0:
            left = left[over:]
    seq = [BOS] + left + [BOP] + mid + [EOP] + right + [EOS]
    if max_len is not None and len(seq) < max_len:
        seq = seq + [PAD] * (max_len - len(seq))
    return seq


class Vocab:
    """Deterministic token <-> id mapping with the fixed special rows first."""

    def __init__(self, words: list[str]):
        self.itos: list[str] = list(SPECIAL_TOKENS) + [w for w in words if w not in SPECIAL_TOKENS]
        self.stoi: dict[str, int] = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate words in vocabulary")

    @classmethod
    def build(cls, token_iterables) -> "Vocab":
        seen = set()
        for toks in token_iterables:
            seen.update(toks)
        return cls(sorted(seen - set(SPECIAL_TOKENS)))

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: list[str]) -> list[int]:
        unk = self.stoi[UNK]
        return [self.stoi.get(t, unk) for t in tokens]

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]
