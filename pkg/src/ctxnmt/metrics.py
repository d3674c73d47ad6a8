"""Translation evaluation: BLEU, chrF3, extended-segment scoring, pronoun
category evaluation, and the 2x2 chi-square test.

BLEU is corpus-level with clipped modified n-gram precisions (n = 1..4, flat
weights), exponential brevity penalty, and no smoothing; n-gram orders for
which the hypothesis corpus has no n-grams at all are dropped from the
geometric mean so that identity corpora of very short segments still score 1.

chrF operates on the character stream obtained by joining tokens with single
spaces (spaces participate in n-grams), n = 1..6, uniform average over
orders, with recall weighted by beta = 3.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import DEFAULT_BREAK_TOKEN
from .errors import InputError

TokenSeq = Sequence[str]

CHI_SQUARE_CRITICAL_05 = 3.841  # 1 degree of freedom


@dataclass(frozen=True)
class BleuScore:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_length: int
    ref_length: int


@dataclass(frozen=True)
class ChrFScore:
    score: float
    precision: float
    recall: float
    beta: float = 3.0
    max_n: int = 6


def _ngram_counts(tokens: TokenSeq, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: Sequence[TokenSeq], references: Sequence[TokenSeq], max_order: int = 4) -> BleuScore:
    """Corpus-level BLEU over tokenized hypothesis/reference lists."""
    if len(hypotheses) != len(references):
        raise InputError(
            "hypothesis/reference length mismatch: %d vs %d" % (len(hypotheses), len(references))
        )
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(min(c, ref_counts.get(g, 0)) for g, c in hyp_counts.items())

    precisions = tuple(
        (matches[i] / totals[i]) if totals[i] > 0 else 0.0 for i in range(max_order)
    )
    if hyp_len == 0:
        return BleuScore(0.0, precisions, 0.0, 0, ref_len)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    used = [precisions[i] for i in range(max_order) if totals[i] > 0]
    if not used or any(p == 0.0 for p in used):
        return BleuScore(0.0, precisions, bp, hyp_len, ref_len)
    log_mean = sum(math.log(p) for p in used) / len(used)
    return BleuScore(bp * math.exp(log_mean), precisions, bp, hyp_len, ref_len)


def _char_stream(tokens: TokenSeq) -> str:
    return " ".join(tokens)


def chrf(
    hypotheses: Sequence[TokenSeq],
    references: Sequence[TokenSeq],
    beta: float = 3.0,
    max_n: int = 6,
) -> ChrFScore:
    """Character n-gram F-score with recall weight beta (chrF3 by default)."""
    if len(hypotheses) != len(references):
        raise InputError(
            "hypothesis/reference length mismatch: %d vs %d" % (len(hypotheses), len(references))
        )
    hyp_totals = [0] * max_n
    ref_totals = [0] * max_n
    match_totals = [0] * max_n
    for hyp, ref in zip(hypotheses, references):
        hs = _char_stream(hyp)
        rs = _char_stream(ref)
        for n in range(1, max_n + 1):
            hyp_counts = _ngram_counts(hs, n)
            ref_counts = _ngram_counts(rs, n)
            hyp_totals[n - 1] += sum(hyp_counts.values())
            ref_totals[n - 1] += sum(ref_counts.values())
            match_totals[n - 1] += sum((hyp_counts & ref_counts).values())

    prec_terms = [match_totals[i] / hyp_totals[i] for i in range(max_n) if hyp_totals[i] > 0]
    rec_terms = [match_totals[i] / ref_totals[i] for i in range(max_n) if ref_totals[i] > 0]
    precision = sum(prec_terms) / len(prec_terms) if prec_terms else 0.0
    recall = sum(rec_terms) / len(rec_terms) if rec_terms else 0.0
    if precision + recall == 0.0:
        return ChrFScore(0.0, precision, recall, beta, max_n)
    b2 = beta * beta
    score = (1 + b2) * precision * recall / (b2 * precision + recall)
    return ChrFScore(score, precision, recall, beta, max_n)


def score_extended(
    hyp_units: Sequence[TokenSeq],
    ref_units: Sequence[TokenSeq],
    doc_ids: Sequence[str],
    window: int = 2,
    break_token: str = DEFAULT_BREAK_TOKEN,
) -> tuple[BleuScore, ChrFScore]:
    """Score sliding-window concatenations of aligned units.

    For every unit, up to `window` consecutive units ending at it (never
    crossing a document boundary) are concatenated on both sides; break
    tokens are removed before scoring.
    """
    if not (len(hyp_units) == len(ref_units) == len(doc_ids)):
        raise InputError("unit lists and doc ids must be aligned")

    def strip_breaks(tokens: TokenSeq) -> list[str]:
        return [t for t in tokens if t != break_token]

    hyp_segments = []
    ref_segments = []
    for i in range(len(hyp_units)):
        lo = i
        while lo > 0 and i - lo < window - 1 and doc_ids[lo - 1] == doc_ids[i]:
            lo -= 1
        hyp_cat: list[str] = []
        ref_cat: list[str] = []
        for j in range(lo, i + 1):
            hyp_cat.extend(strip_breaks(hyp_units[j]))
            ref_cat.extend(strip_breaks(ref_units[j]))
        hyp_segments.append(hyp_cat)
        ref_segments.append(ref_cat)
    return bleu(hyp_segments, ref_segments), chrf(hyp_segments, ref_segments)


# ---------------------------------------------------------------------------
# Pronoun evaluation
# ---------------------------------------------------------------------------

CATEGORY_POLITE_IMPERATIVE = "polite_imperative"
CATEGORY_POLITE_OTHER = "polite_other"
CATEGORY_FEM_SINGULAR = "feminine_singular"
CATEGORY_PLURAL = "plural"
CATEGORY_UNKNOWN = "unknown"

SIE_CATEGORIES = (
    CATEGORY_POLITE_IMPERATIVE,
    CATEGORY_POLITE_OTHER,
    CATEGORY_FEM_SINGULAR,
    CATEGORY_PLURAL,
)

# pronoun classes used for automatic correctness judgments: a translation is
# correct when it realizes the same class as the reference (or also drops the
# pronoun when the reference does)
SIE_PRONOUN_CLASSES: Mapping[str, tuple[str, ...]] = {
    "you": ("you",),
    "she_her": ("she", "her"),
    "it": ("it",),
    "they_them": ("they", "them"),
}

_SUBJECT_OPENERS = {
    "i", "you", "he", "she", "it", "we", "they", "there", "that", "this",
    "what", "who", "the", "a", "an", "no", "yes", "-",
}


@dataclass
class PronounOccurrence:
    """One occurrence of the ambiguous pronoun, with aligned translations."""

    source_tokens: tuple[str, ...]
    token: str
    token_index: int
    reference_tokens: tuple[str, ...]
    system_translations: dict[str, tuple[str, ...]] = field(default_factory=dict)
    category: str = CATEGORY_UNKNOWN
    correct: dict[str, bool] = field(default_factory=dict)
    untranslated: dict[str, bool] = field(default_factory=dict)


def _imperative_shaped(tokens: TokenSeq) -> bool:
    # heuristic: does not open with a subject-like token and looks like a
    # short command ("Kommen Sie !" -> "Come !")
    if not tokens:
        return False
    if tokens[0].lower() in _SUBJECT_OPENERS:
        return False
    return tokens[-1] in ("!", ".") or len(tokens) <= 4


def category_from_reference(reference_tokens: TokenSeq) -> str:
    """Assign the pronoun category from the reference translation."""
    low = [t.lower() for t in reference_tokens]
    cues = {"you", "she", "her", "it", "they", "them"}
    if not any(t in cues for t in low):
        if _imperative_shaped(reference_tokens):
            return CATEGORY_POLITE_IMPERATIVE
        return CATEGORY_UNKNOWN
    if "you" in low:
        return CATEGORY_POLITE_OTHER
    if "she" in low or "her" in low or "it" in low:
        return CATEGORY_FEM_SINGULAR
    if "they" in low or "them" in low:
        return CATEGORY_PLURAL
    return CATEGORY_UNKNOWN


def categorize_pronoun(occurrence: PronounOccurrence) -> str:
    """Categorize one occurrence on the basis of its reference translation."""
    return category_from_reference(occurrence.reference_tokens)


def pronoun_class(tokens: TokenSeq, classes: Mapping[str, tuple[str, ...]] = SIE_PRONOUN_CLASSES):
    """First pronoun class (in mapping priority order) realized in `tokens`.

    Priority order mirrors the category cascade, so a sentence containing
    both "you" and "them" is judged as a polite-you case.  Returns None when
    no class is realized.
    """
    low = {t.lower() for t in tokens}
    for name, forms in classes.items():
        if any(form in low for form in forms):
            return name
    return None


def judge_pronoun(
    reference_tokens: TokenSeq,
    hypothesis_tokens: TokenSeq,
    classes: Mapping[str, tuple[str, ...]] = SIE_PRONOUN_CLASSES,
) -> bool:
    """Automatic correctness: hypothesis realizes the reference's class."""
    return pronoun_class(hypothesis_tokens, classes) == pronoun_class(reference_tokens, classes)


def extract_pronoun_occurrences(
    source_units: Sequence[TokenSeq],
    reference_units: Sequence[TokenSeq],
    system_units: Mapping[str, Sequence[TokenSeq]],
    pronoun_forms: tuple[str, ...] = ("sie", "Sie"),
) -> list[PronounOccurrence]:
    """Collect occurrences of the ambiguous pronoun with aligned translations."""
    if len(source_units) != len(reference_units):
        raise InputError("source/reference unit counts differ")
    for name, units in system_units.items():
        if len(units) != len(source_units):
            raise InputError("system %r unit count differs from source" % name)
    occurrences = []
    for i, src in enumerate(source_units):
        for j, tok in enumerate(src):
            if tok in pronoun_forms:
                occ = PronounOccurrence(
                    source_tokens=tuple(src),
                    token=tok,
                    token_index=j,
                    reference_tokens=tuple(reference_units[i]),
                    system_translations={
                        name: tuple(units[i]) for name, units in system_units.items()
                    },
                )
                occ.category = categorize_pronoun(occ)
                occurrences.append(occ)
    return occurrences


def judge_occurrences(
    occurrences: Sequence[PronounOccurrence],
    classes: Mapping[str, tuple[str, ...]] = SIE_PRONOUN_CLASSES,
):
    """Fill per-system correctness for every occurrence (in place).

    Hypotheses with no pronoun of any class where the reference has one are
    counted wrong and flagged as untranslated/dropped.
    """
    for occ in occurrences:
        ref_class = pronoun_class(occ.reference_tokens, classes)
        for name, hyp in occ.system_translations.items():
            hyp_class = pronoun_class(hyp, classes)
            occ.correct[name] = hyp_class == ref_class
            occ.untranslated[name] = ref_class is not None and hyp_class is None


@dataclass
class PronounCategoryRow:
    category: str
    occurrences: int
    correct: dict[str, int]

    def accuracy(self, system: str):
        if self.occurrences == 0:
            return None
        return self.correct[system] / self.occurrences


@dataclass
class PronounReport:
    systems: tuple[str, ...]
    rows: list[PronounCategoryRow]
    total: PronounCategoryRow
    unknown_count: int

    def counts_2x2(self, system_a: str, system_b: str, category=None):
        """(correct_a, wrong_a, correct_b, wrong_b) over one or all categories."""
        rows = self.rows if category is None else [r for r in self.rows if r.category == category]
        n = sum(r.occurrences for r in rows)
        ca = sum(r.correct[system_a] for r in rows)
        cb = sum(r.correct[system_b] for r in rows)
        return ca, n - ca, cb, n - cb


def pronoun_accuracy(
    occurrences: Sequence[PronounOccurrence],
    systems: Sequence[str],
    categories: Sequence[str] = SIE_CATEGORIES,
) -> PronounReport:
    """Per-category and overall accuracy per system.

    Occurrences with category `unknown` are excluded from the table but counted.
    """
    rows = []
    for cat in categories:
        cat_occ = [o for o in occurrences if o.category == cat]
        rows.append(
            PronounCategoryRow(
                category=cat,
                occurrences=len(cat_occ),
                correct={s: sum(1 for o in cat_occ if o.correct.get(s)) for s in systems},
            )
        )
    unknown = sum(1 for o in occurrences if o.category not in categories)
    known = [o for o in occurrences if o.category in categories]
    total = PronounCategoryRow(
        category="all",
        occurrences=len(known),
        correct={s: sum(1 for o in known if o.correct.get(s)) for s in systems},
    )
    return PronounReport(systems=tuple(systems), rows=rows, total=total, unknown_count=unknown)


def chi_square_2x2(correct_a: int, wrong_a: int, correct_b: int, wrong_b: int):
    """Pearson chi-square without continuity correction, 1 d.f., p = 0.05.

    Returns (statistic, significant_at_0_05).
    """
    for v in (correct_a, wrong_a, correct_b, wrong_b):
        if v < 0:
            raise InputError("counts must be non-negative")
    a, b, c, d = correct_a, wrong_a, correct_b, wrong_b
    n = a + b + c + d
    margins = ((a + b), (c + d), (a + c), (b + d))
    if any(m == 0 for m in margins):
        raise InputError("chi-square undefined: zero row or column margin")
    stat = n * (a * d - b * c) ** 2 / (margins[0] * margins[1] * margins[2] * margins[3])
    return stat, stat > CHI_SQUARE_CRITICAL_05


# ---------------------------------------------------------------------------
# Report formatting (TSV; percentages with 1 decimal, metric scores with 2)
# ---------------------------------------------------------------------------

def format_score_report(rows: Sequence[tuple[str, BleuScore, ChrFScore]]) -> str:
    """One row per system: BLEU, chrF3, precision, recall (in %)."""
    lines = ["system\tBLEU\tchrF3\tprecision\trecall"]
    for name, b, c in rows:
        lines.append(
            "%s\t%.2f\t%.2f\t%.2f\t%.2f"
            % (name, 100 * b.score, 100 * c.score, 100 * c.precision, 100 * c.recall)
        )
    return "\n".join(lines) + "\n"


def format_pronoun_report(report: PronounReport) -> str:
    """One row per category: occurrences and accuracy per system."""
    header = ["category", "occurrences"] + list(report.systems)
    lines = ["\t".join(header)]

    def fmt(row: PronounCategoryRow) -> str:
        cells = [row.category, str(row.occurrences)]
        for s in report.systems:
            acc = row.accuracy(s)
            cells.append("" if acc is None else "%.1f" % (100 * acc))
        return "\t".join(cells)

    for row in report.rows:
        lines.append(fmt(row))
    lines.append(fmt(report.total))
    lines.append("unknown\t%d" % report.unknown_count + "\t" * len(report.systems))
    return "\n".join(lines) + "\n"
