"""Cross-sentential attention statistics.

For every output token, the attention distribution over source positions is
partitioned into external mass (context history, or other segments in the
two-sided model), internal mass (the token's own segment), and break-symbol
mass (excluded from both).  Aggregations per lowercased target word type
mirror the usual report layouts: mean masses, mean attention peaks, and the
proportion of occurrences whose external attention beats the internal one.

Averages in the mass/peak tables are micro-averaged over all token
occurrences, not over word types.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .decode import AttentionExport
from .errors import MalformedRecordError

MODEL_ONE_SIDED = "2+1"  # external = context positions before the focus
MODEL_TWO_SIDED = "2+2"  # external = source positions of other segments


@dataclass
class PartitionedAttention:
    """Attention of one output token split into position classes."""

    word: str
    position: int  # 1-based position within its output segment
    external: list[tuple[int, float]]
    internal: list[tuple[int, float]]
    breaks: list[tuple[int, float]]

    @property
    def external_mass(self) -> float:
        return sum(w for _, w in self.external)

    @property
    def internal_mass(self) -> float:
        return sum(w for _, w in self.internal)

    @property
    def break_mass(self) -> float:
        return sum(w for _, w in self.breaks)

    @property
    def external_peak(self) -> float:
        return max((w for _, w in self.external), default=0.0)

    @property
    def internal_peak(self) -> float:
        return max((w for _, w in self.internal), default=0.0)


def partition(export: AttentionExport, model_kind: str) -> list[PartitionedAttention]:
    """Split every output token's attention row into external/internal/break.

    One-sided models: external = positions before the source focus.
    Two-sided models: segments are delimited by break tokens on both sides
    and aligned by index; output break tokens themselves are skipped.
    """
    export.validate()
    out: list[PartitionedAttention] = []
    if model_kind == MODEL_ONE_SIDED:
        split = export.source_focus_start
        for t, token in enumerate(export.target_tokens):
            row = export.weights[t]
            external = [(s, float(row[s])) for s in range(split)]
            internal = [(s, float(row[s])) for s in range(split, len(row))]
            out.append(
                PartitionedAttention(
                    word=token.lower(),
                    position=t + 1,
                    external=external,
                    internal=internal,
                    breaks=[],
                )
            )
        return out

    if model_kind != MODEL_TWO_SIDED:
        raise MalformedRecordError("unknown model kind %r" % model_kind)

    break_tok = export.break_token
    src_segment = []
    seg = 0
    break_positions = set()
    for s, token in enumerate(export.source_tokens):
        if token == break_tok:
            break_positions.add(s)
            seg += 1
            src_segment.append(-1)
        else:
            src_segment.append(seg)

    target_segment = 0
    position_in_segment = 0
    for t, token in enumerate(export.target_tokens):
        if token == break_tok:
            target_segment += 1
            position_in_segment = 0
            continue
        position_in_segment += 1
        row = export.weights[t]
        external = []
        internal = []
        breaks = []
        for s in range(len(row)):
            w = float(row[s])
            if s in break_positions:
                breaks.append((s, w))
            elif src_segment[s] == target_segment:
                internal.append((s, w))
            else:
                external.append((s, w))
        out.append(
            PartitionedAttention(
                word=token.lower(),
                position=position_in_segment,
                external=external,
                internal=internal,
                breaks=breaks,
            )
        )
    return out


@dataclass
class WordTypeStats:
    word: str
    freq: int
    external: float
    internal: float
    proportion: float  # 100 * external / (external + internal)
    mean_position: float | None


@dataclass
class MajorityPeakStats:
    word: str
    freq_ext_peak: int
    freq: int
    proportion: float


@dataclass
class RankedStats:
    rows: list[WordTypeStats]
    average: WordTypeStats


def _proportion(external: float, internal: float) -> float:
    total = external + internal
    return 100.0 * external / total if total > 0 else 0.0


def _aggregate(partitions, min_freq, ext_of, int_of) -> RankedStats:
    by_word: dict[str, list[PartitionedAttention]] = {}
    for p in partitions:
        by_word.setdefault(p.word, []).append(p)

    rows = []
    for word, occs in by_word.items():
        if len(occs) < min_freq:
            continue
        ext = float(np.mean([ext_of(o) for o in occs]))
        internal = float(np.mean([int_of(o) for o in occs]))
        rows.append(
            WordTypeStats(
                word=word,
                freq=len(occs),
                external=ext,
                internal=internal,
                proportion=_proportion(ext, internal),
                mean_position=float(np.mean([o.position for o in occs])),
            )
        )
    rows.sort(key=lambda r: (-r.proportion, r.word))

    if partitions:
        avg_ext = float(np.mean([ext_of(p) for p in partitions]))
        avg_int = float(np.mean([int_of(p) for p in partitions]))
    else:
        avg_ext = avg_int = 0.0
    average = WordTypeStats(
        word="average",
        freq=len(list(partitions)),
        external=avg_ext,
        internal=avg_int,
        proportion=_proportion(avg_ext, avg_int),
        mean_position=None,
    )
    return RankedStats(rows=rows, average=average)


def word_mass_stats(partitions: Sequence[PartitionedAttention], min_freq: int = 5) -> RankedStats:
    """Mean external/internal attention mass per word type (frequency filter
    keeps types occurring at least min_freq times), ranked by proportion."""
    return _aggregate(partitions, min_freq, lambda p: p.external_mass, lambda p: p.internal_mass)


def word_peak_stats(partitions: Sequence[PartitionedAttention], min_freq: int = 5) -> RankedStats:
    """Like word_mass_stats but over per-occurrence attention peaks."""
    return _aggregate(partitions, min_freq, lambda p: p.external_peak, lambda p: p.internal_peak)


def majority_peak_stats(
    partitions: Sequence[PartitionedAttention],
    min_cases: int = 5,
    use_mass: bool = False,
) -> list[MajorityPeakStats]:
    """Occurrences whose external attention beats the internal one, per word.

    The comparison uses attention peaks by default (use_mass switches to
    total masses); words with fewer than min_cases qualifying occurrences are
    discarded; proportion = qualifying / total occurrences of the word.
    """
    by_word: dict[str, list[PartitionedAttention]] = {}
    for p in partitions:
        by_word.setdefault(p.word, []).append(p)
    rows = []
    for word, occs in by_word.items():
        if use_mass:
            wins = sum(1 for o in occs if o.external_mass > o.internal_mass)
        else:
            wins = sum(1 for o in occs if o.external_peak > o.internal_peak)
        if wins < min_cases:
            continue
        rows.append(
            MajorityPeakStats(word=word, freq_ext_peak=wins, freq=len(occs), proportion=wins / len(occs))
        )
    rows.sort(key=lambda r: (-r.proportion, r.word))
    return rows


def corpus_external_proportion(partitions: Sequence[PartitionedAttention]) -> float:
    """Total external mass / total (external + internal) mass."""
    ext = sum(p.external_mass for p in partitions)
    total = sum(p.external_mass + p.internal_mass for p in partitions)
    return ext / total if total > 0 else 0.0


# ---------------------------------------------------------------------------
# Report and heatmap rendering
# ---------------------------------------------------------------------------

def format_stats_table(stats: RankedStats, top: int | None = None) -> str:
    """TSV with the mass/peak table columns plus the average row."""
    lines = ["word\tfreq\texternal\tinternal\tprop.%\tpos"]
    rows = stats.rows if top is None else stats.rows[:top]
    for r in rows:
        lines.append(
            "%s\t%d\t%.3f\t%.3f\t%.1f\t%.2f" % (r.word, r.freq, r.external, r.internal, r.proportion, r.mean_position)
        )
    a = stats.average
    lines.append("average\t%d\t%.3f\t%.3f\t%.1f\t" % (a.freq, a.external, a.internal, a.proportion))
    return "\n".join(lines) + "\n"


def format_majority_table(rows: Sequence[MajorityPeakStats], top: int | None = None) -> str:
    lines = ["word\tproportion\tfreq ext peak\tfreq"]
    for r in rows if top is None else rows[:top]:
        lines.append("%s\t%.3f\t%d\t%d" % (r.word, r.proportion, r.freq_ext_peak, r.freq))
    return "\n".join(lines) + "\n"


def heatmap_tsv(export: AttentionExport) -> str:
    """Label row + one row per output token; break tokens labelled "||"."""
    export.validate()

    def label(token: str) -> str:
        return "||" if token == export.break_token else token

    lines = ["\t" + "\t".join(label(t) for t in export.source_tokens)]
    for t, token in enumerate(export.target_tokens):
        cells = ["%.6f" % w for w in export.weights[t]]
        lines.append(label(token) + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def heatmap_pgm(export: AttentionExport) -> str:
    """Plain (P2) grayscale image, one pixel per cell; weight 1 -> black."""
    export.validate()
    h = max(1, len(export.target_tokens))
    w = max(1, len(export.source_tokens))
    lines = ["P2", "%d %d" % (w, h), "255"]
    if len(export.target_tokens) == 0:
        lines.append(" ".join(["255"] * w))
    for t in range(len(export.target_tokens)):
        row = np.clip(export.weights[t], 0.0, 1.0)
        lines.append(" ".join(str(int(round(255 * (1.0 - v)))) for v in row))
    return "\n".join(lines) + "\n"
