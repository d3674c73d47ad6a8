"""Decoding: greedy and length-normalized beam search with attention capture,
optional coverage penalty, savepoint ensembling, and last-segment extraction
for two-sided context models.

Ensembles average the per-step output probability distributions of their
member checkpoints before taking the log; attention weights are averaged the
same way.  Break tokens are ordinary vocabulary items: nothing constrains
their generation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import DEFAULT_BREAK_TOKEN
from .errors import ConfigError, MalformedRecordError
from .model import (
    AttentionRecord,
    BOS_ID,
    EOS_ID,
    DecoderState,
    ModelParams,
    decode_step,
    encode,
    init_decoder_state,
)


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 8
    max_len_factor: float = 3.0
    max_len_constant: int = 5
    length_norm_alpha: float = 0.6
    coverage_beta: float = 0.0

    def __post_init__(self):
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        if not 0.0 <= self.length_norm_alpha <= 1.0:
            raise ConfigError("length normalization exponent must be in [0, 1]")
        if self.coverage_beta < 0.0:
            raise ConfigError("coverage penalty weight must be >= 0")

    def max_len(self, source_len: int) -> int:
        return int(self.max_len_factor * source_len) + self.max_len_constant


@dataclass
class Hypothesis:
    """One beam entry: tokens so far with accumulated log-probability."""

    token_ids: list[int]
    log_prob: float
    attention_rows: list[np.ndarray]
    finished: bool
    states: list[DecoderState]

    def score(self, config: BeamConfig) -> float:
        length = max(1, len(self.token_ids))
        value = self.log_prob / (length ** config.length_norm_alpha)
        if config.coverage_beta > 0.0 and self.attention_rows:
            coverage = np.sum(np.stack(self.attention_rows), axis=0)
            value += config.coverage_beta * np.sum(np.log(np.minimum(coverage, 1.0)))
        return value


@dataclass
class DecodeResult:
    target_ids: list[int]
    record: AttentionRecord
    truncated: bool = False
    log_prob: float = 0.0

    def target_tokens(self, params: ModelParams) -> list[str]:
        return [params.trg_vocab.token(i) for i in self.target_ids]


def _make_record(models: Sequence[ModelParams], source_ids, token_ids, rows) -> AttentionRecord:
    params = models[0]
    return AttentionRecord(
        source_tokens=[params.src_vocab.token(int(i)) for i in source_ids],
        target_tokens=[params.trg_vocab.token(int(i)) for i in token_ids],
        weights=np.stack(rows) if rows else np.zeros((0, len(source_ids))),
    )


def _ensemble_step(models, states, prev_id):
    """Average member probabilities; returns (new_states, log_probs, attention)."""
    new_states = []
    probs = None
    attn = None
    for params, state in zip(models, states):
        state, log_p, a = decode_step(params, state, prev_id)
        new_states.append(state)
        p = np.exp(log_p)
        probs = p if probs is None else probs + p
        attn = a.astype(np.float64) if attn is None else attn + a
    probs /= len(models)
    attn /= len(models)
    return new_states, np.log(np.maximum(probs, 1e-300)), attn


def _as_ensemble(params_or_ensemble) -> list[ModelParams]:
    if isinstance(params_or_ensemble, ModelParams):
        return [params_or_ensemble]
    models = list(params_or_ensemble)
    if not models:
        raise ConfigError("ensemble must contain at least one checkpoint")
    return models


def greedy_decode(params_or_ensemble, source_ids, max_len: int) -> DecodeResult:
    """Argmax decoding until EOS or max_len (truncation is flagged, not an error)."""
    models = _as_ensemble(params_or_ensemble)
    enc_states = [encode(m, source_ids) for m in models]
    states = [init_decoder_state(m, e) for m, e in zip(models, enc_states)]
    token_ids: list[int] = []
    rows: list[np.ndarray] = []
    log_prob = 0.0
    prev = BOS_ID
    truncated = False
    for _ in range(max_len):
        states, log_probs, attn = _ensemble_step(models, states, prev)
        nxt = int(np.argmax(log_probs))
        log_prob += float(log_probs[nxt])
        if nxt == EOS_ID:
            break
        token_ids.append(nxt)
        rows.append(attn)
        prev = nxt
    else:
        truncated = max_len > 0
    record = _make_record(models, source_ids, token_ids, rows)
    return DecodeResult(target_ids=token_ids, record=record, truncated=truncated, log_prob=log_prob)


def beam_search(params_or_ensemble, source_ids, config: BeamConfig) -> Hypothesis:
    """Standard length-normalized beam search over an ensemble.

    With beam_size 1 and alpha = beta = 0 the output is token-identical to
    greedy_decode.
    """
    models = _as_ensemble(params_or_ensemble)
    enc_states = [encode(m, source_ids) for m in models]
    start = Hypothesis(
        token_ids=[],
        log_prob=0.0,
        attention_rows=[],
        finished=False,
        states=[init_decoder_state(m, e) for m, e in zip(models, enc_states)],
    )
    beams = [start]
    max_len = config.max_len(len(source_ids))

    for _ in range(max_len):
        if all(h.finished for h in beams):
            break
        pool: list[Hypothesis] = [h for h in beams if h.finished]
        for hyp in beams:
            if hyp.finished:
                continue
            prev = hyp.token_ids[-1] if hyp.token_ids else BOS_ID
            states, log_probs, attn = _ensemble_step(models, hyp.states, prev)
            top = np.argsort(-log_probs, kind="stable")[: config.beam_size]
            for token_id in top:
                token_id = int(token_id)
                if token_id == EOS_ID:
                    pool.append(
                        Hypothesis(
                            token_ids=list(hyp.token_ids),
                            log_prob=hyp.log_prob + float(log_probs[token_id]),
                            attention_rows=list(hyp.attention_rows),
                            finished=True,
                            states=states,
                        )
                    )
                else:
                    pool.append(
                        Hypothesis(
                            token_ids=hyp.token_ids + [token_id],
                            log_prob=hyp.log_prob + float(log_probs[token_id]),
                            attention_rows=hyp.attention_rows + [attn],
                            finished=False,
                            states=states,
                        )
                    )
        pool.sort(key=lambda h: -h.score(config))
        beams = pool[: config.beam_size]

    finished = [h for h in beams if h.finished] or beams
    return max(finished, key=lambda h: h.score(config))


def beam_decode(params_or_ensemble, source_ids, config: BeamConfig) -> DecodeResult:
    """beam_search wrapped into the same result shape as greedy_decode."""
    models = _as_ensemble(params_or_ensemble)
    hyp = beam_search(models, source_ids, config)
    record = _make_record(models, source_ids, hyp.token_ids, hyp.attention_rows)
    return DecodeResult(
        target_ids=list(hyp.token_ids),
        record=record,
        truncated=not hyp.finished,
        log_prob=hyp.log_prob,
    )


SEGMENT_LAST = "last"
SEGMENT_ALL = "all"


def extract_scored_segment(tokens: Sequence[str], mode: str, break_token: str = DEFAULT_BREAK_TOKEN) -> list[str]:
    """Select the part of a decoded output that enters scoring.

    "last": tokens after the final break token (whole sequence if none);
    "all": the sequence with break tokens removed.
    """
    tokens = list(tokens)
    if mode == SEGMENT_LAST:
        for i in range(len(tokens) - 1, -1, -1):
            if tokens[i] == break_token:
                return tokens[i + 1 :]
        return tokens
    if mode == SEGMENT_ALL:
        return [t for t in tokens if t != break_token]
    raise ConfigError("unknown segment mode %r" % mode)


# ---------------------------------------------------------------------------
# Attention export: one self-contained JSON record per line, consumed by the
# attention statistics module.
# ---------------------------------------------------------------------------

@dataclass
class AttentionExport:
    """One decoded sentence with its attention matrix and geometry."""

    index: int
    doc_id: str
    index_in_doc: int
    source_tokens: list[str]
    target_tokens: list[str]
    weights: np.ndarray
    source_focus_start: int = 0
    break_token: str = DEFAULT_BREAK_TOKEN

    def validate(self):
        if not 0 <= self.source_focus_start <= len(self.source_tokens):
            raise MalformedRecordError(
                "source_focus_start %d out of range for %d source tokens"
                % (self.source_focus_start, len(self.source_tokens))
            )
        if self.weights.shape != (len(self.target_tokens), len(self.source_tokens)):
            raise MalformedRecordError("attention matrix shape mismatch in record %d" % self.index)


def write_attention_records(path, exports: Sequence[AttentionExport]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in exports:
            fh.write(
                json.dumps(
                    {
                        "index": ex.index,
                        "doc_id": ex.doc_id,
                        "index_in_doc": ex.index_in_doc,
                        "source_tokens": ex.source_tokens,
                        "target_tokens": ex.target_tokens,
                        "weights": [[float(w) for w in row] for row in ex.weights],
                        "source_focus_start": ex.source_focus_start,
                        "break_token": ex.break_token,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


def read_attention_records(path) -> list[AttentionExport]:
    exports = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecordError("bad attention record at %s:%d: %s" % (path, lineno, exc))
        export = AttentionExport(
            index=obj["index"],
            doc_id=obj.get("doc_id", ""),
            index_in_doc=obj.get("index_in_doc", 0),
            source_tokens=list(obj["source_tokens"]),
            target_tokens=list(obj["target_tokens"]),
            weights=np.array(obj["weights"], dtype=np.float64).reshape(
                len(obj["target_tokens"]), len(obj["source_tokens"])
            ),
            source_focus_start=obj.get("source_focus_start", 0),
            break_token=obj.get("break_token", DEFAULT_BREAK_TOKEN),
        )
        export.validate()
        exports.append(export)
    return exports
