"""Byte-pair-encoding subword model.

learn_bpe() iterates most-frequent-adjacent-pair merging over a word
frequency map; apply_bpe() replays the merges on a token and enforces a
vocabulary count threshold by recursively splitting rare subwords back into
their merge parts.  Words are learned with an explicit end-of-word marker
symbol; emitted subwords carry a join marker ("@@") on every non-final piece
so that revert_bpe() can losslessly restore the original tokens.

Reserved strings: the break token, context-prefixed tokens, and any token
containing the end-of-word or join marker are never segmented (they pass
through apply_bpe verbatim).  Tokens that *end* with the join marker cannot
be represented unambiguously and are outside the format's domain.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import DEFAULT_BREAK_TOKEN, DEFAULT_CONTEXT_PREFIX
from .errors import ConfigError, MalformedSegmentationError

DEFAULT_EOW_MARKER = "</w>"
DEFAULT_JOIN_MARKER = "@@"


@dataclass(frozen=True)
class BpeConfig:
    """Code size and application settings for one experiment."""

    num_merges: int = 300
    joint: bool = False
    vocab_threshold: int = 0

    def __post_init__(self):
        if self.num_merges < 0:
            raise ConfigError("num_merges must be >= 0")
        if self.vocab_threshold < 0:
            raise ConfigError("vocab_threshold must be >= 0")


@dataclass
class BpeModel:
    """Ordered merge rules plus the subword vocabulary of the learning corpus.

    subword_vocab is keyed by emitted form (join marker included on non-final
    pieces), which is what the application threshold is checked against.
    """

    merges: tuple[tuple[str, str], ...]
    subword_vocab: dict[str, int]
    eow_marker: str = DEFAULT_EOW_MARKER
    join_marker: str = DEFAULT_JOIN_MARKER

    _ranks: dict = field(default=None, repr=False, compare=False)
    _reverse: dict = field(default=None, repr=False, compare=False)
    _cache: dict = field(default=None, repr=False, compare=False)

    @property
    def ranks(self) -> dict[tuple[str, str], int]:
        if self._ranks is None:
            ranks = {}
            for i, pair in enumerate(self.merges):
                ranks.setdefault(pair, i)
            object.__setattr__(self, "_ranks", ranks)
        return self._ranks

    @property
    def reverse(self) -> dict[str, tuple[str, str]]:
        # first-learned merge wins when two merges concatenate to the same string
        if self._reverse is None:
            rev = {}
            for left, right in self.merges:
                rev.setdefault(left + right, (left, right))
            object.__setattr__(self, "_reverse", rev)
        return self._reverse


def _pair_sort_key(pair: tuple[str, str], eow: str):
    # content merges win ties against marker merges; plain string order otherwise
    left, right = pair
    return (eow in left, eow in right, left, right)


def _merge_word(word: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    """Merge all non-overlapping occurrences of `pair`, left to right."""
    left, right = pair
    merged = left + right
    out = []
    i = 0
    while i < len(word):
        if i + 1 < len(word) and word[i] == left and word[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)


def _emit(symbols: Sequence[str], eow: str, join: str) -> list[str]:
    """Convert internal symbols (eow convention) to emitted subwords."""
    if not symbols:
        return []
    if symbols[-1] == eow:
        body = list(symbols[:-1])
    else:
        body = list(symbols[:-1]) + [symbols[-1][: -len(eow)]]
    if not body:
        return []
    return [s + join for s in body[:-1]] + [body[-1]]


def learn_bpe(
    word_frequencies: Mapping[str, int],
    num_merges: int,
    eow_marker: str = DEFAULT_EOW_MARKER,
    join_marker: str = DEFAULT_JOIN_MARKER,
) -> BpeModel:
    """Learn merge operations from a word frequency map.

    Performs min(num_merges, available) merges; at each step the most
    frequent adjacent symbol pair is merged, ties broken lexicographically on
    (left, right) with marker-bearing symbols ordered last.
    """
    vocab: dict[tuple[str, ...], int] = {}
    for word, count in word_frequencies.items():
        if count <= 0:
            raise ConfigError("word frequency for %r must be > 0" % word)
        vocab[tuple(word) + (eow_marker,)] = vocab.get(tuple(word) + (eow_marker,), 0) + count

    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        stats: Counter = Counter()
        for word, count in vocab.items():
            for pair in zip(word, word[1:]):
                stats[pair] += count
        if not stats:
            break
        best_count = max(stats.values())
        best = min(
            (p for p, c in stats.items() if c == best_count),
            key=lambda p: _pair_sort_key(p, eow_marker),
        )
        merges.append(best)
        vocab = {_merge_word(word, best): count for word, count in vocab.items()}

    counts: Counter = Counter()
    for word, count in vocab.items():
        for piece in _emit(word, eow_marker, join_marker):
            counts[piece] += count
    return BpeModel(
        merges=tuple(merges),
        subword_vocab=dict(counts),
        eow_marker=eow_marker,
        join_marker=join_marker,
    )


def default_protected(token: str) -> bool:
    """Tokens apply_bpe must pass through unsegmented."""
    return (
        token == DEFAULT_BREAK_TOKEN
        or token.startswith(DEFAULT_CONTEXT_PREFIX)
        or DEFAULT_EOW_MARKER in token
        or DEFAULT_JOIN_MARKER in token
    )


def _enforce_threshold(model: BpeModel, word: tuple[str, ...], threshold: int) -> tuple[str, ...]:
    """Split symbols whose emitted form is rarer than `threshold`.

    Splitting replaces a symbol by its two merge parts; the scan restarts
    because splitting the word-final symbol shifts finality (and thus the
    emitted form) onto its left part.  Original characters and the bare
    end-of-word marker are never split.
    """
    symbols = list(word)
    while True:
        pieces = _emit(symbols, model.eow_marker, model.join_marker)
        content = symbols[:-1] if symbols and symbols[-1] == model.eow_marker else symbols
        for idx, (sym, piece) in enumerate(zip(content, pieces)):
            if model.subword_vocab.get(piece, 0) < threshold and sym in model.reverse:
                symbols[idx : idx + 1] = list(model.reverse[sym])
                break
        else:
            return tuple(symbols)


def apply_bpe(
    model: BpeModel,
    token: str,
    vocab_threshold: int = 0,
    protected=default_protected,
) -> list[str]:
    """Segment one token into emitted subwords.

    Merges are applied in learned order; subwords whose learning-corpus count
    falls below vocab_threshold are split back into their merge parts until
    every piece meets the threshold or is a single symbol.
    """
    if not token:
        raise ConfigError("cannot segment an empty token")
    if protected is not None and protected(token):
        return [token]

    cache = model._cache
    if cache is None:
        cache = {}
        object.__setattr__(model, "_cache", cache)
    key = (token, vocab_threshold)
    hit = cache.get(key)
    if hit is not None:
        return list(hit)

    word = tuple(token) + (model.eow_marker,)
    ranks = model.ranks
    while len(word) > 1:
        candidates = [
            (ranks[pair], pair) for pair in set(zip(word, word[1:])) if pair in ranks
        ]
        if not candidates:
            break
        word = _merge_word(word, min(candidates)[1])

    if vocab_threshold > 0:
        word = _enforce_threshold(model, word, vocab_threshold)
    pieces = _emit(word, model.eow_marker, model.join_marker)

    cache[key] = tuple(pieces)
    return pieces


def apply_bpe_line(model: BpeModel, tokens: Sequence[str], vocab_threshold: int = 0) -> list[str]:
    """Segment every token of a line, preserving order."""
    out: list[str] = []
    for tok in tokens:
        out.extend(apply_bpe(model, tok, vocab_threshold))
    return out


def revert_bpe(subwords: Sequence[str], join_marker: str = DEFAULT_JOIN_MARKER) -> list[str]:
    """Undo segmentation: glue subwords at join markers back into tokens."""
    tokens: list[str] = []
    current: list[str] = []
    for sw in subwords:
        if sw.endswith(join_marker) and len(sw) > len(join_marker):
            current.append(sw[: -len(join_marker)])
        else:
            current.append(sw)
            tokens.append("".join(current))
            current = []
    if current:
        raise MalformedSegmentationError(
            "dangling join marker at sequence end: %r" % (subwords[-1],)
        )
    return tokens


def word_frequencies(lines: Iterable[Sequence[str]], protected=default_protected) -> Counter:
    """Count word frequencies over tokenized lines, skipping protected tokens."""
    freqs: Counter = Counter()
    for tokens in lines:
        for tok in tokens:
            if protected is None or not protected(tok):
                freqs[tok] += 1
    return freqs


# ---------------------------------------------------------------------------
# Model file: one header line (version + conventions + section sizes), then
# merge pairs in learned order, then "subword<TAB>count" vocabulary entries.
# ---------------------------------------------------------------------------

_FORMAT_VERSION = "bpe-v1"


def save_bpe_model(model: BpeModel, path):
    lines = [
        "%s\teow=%s\tjoin=%s\tmerges=%d\tvocab=%d"
        % (_FORMAT_VERSION, model.eow_marker, model.join_marker, len(model.merges), len(model.subword_vocab))
    ]
    lines.extend("%s %s" % pair for pair in model.merges)
    lines.extend("%s\t%d" % (sw, c) for sw, c in sorted(model.subword_vocab.items()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_bpe_model(path) -> BpeModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise MalformedSegmentationError("empty model file: %s" % path)
    header = lines[0].split("\t")
    if header[0] != _FORMAT_VERSION or len(header) != 5:
        raise MalformedSegmentationError("unrecognized model header in %s" % path)
    eow = header[1].split("=", 1)[1]
    join = header[2].split("=", 1)[1]
    n_merges = int(header[3].split("=", 1)[1])
    n_vocab = int(header[4].split("=", 1)[1])
    if len(lines) != 1 + n_merges + n_vocab:
        raise MalformedSegmentationError("truncated model file: %s" % path)
    merges = []
    for line in lines[1 : 1 + n_merges]:
        left, right = line.split(" ")
        merges.append((left, right))
    vocab = {}
    for line in lines[1 + n_merges :]:
        sw, count = line.rsplit("\t", 1)
        vocab[sw] = int(count)
    return BpeModel(merges=tuple(merges), subword_vocab=vocab, eow_marker=eow, join_marker=join)
