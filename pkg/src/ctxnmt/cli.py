"""Experiment driver.

Subcommands cover the full pipeline: synth | prepare | bpe-learn | bpe-apply
| train | translate | score | attn-stats | pronoun-eval | heatmap.  Every
command writes a run manifest (config snapshot, input/output checksums,
toolkit version, timestamps) into the output directory.

Exit codes: 0 success, 2 configuration error, 3 malformed data or invalid
input, 4 numeric failure, 1 unexpected error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import attnstats as astats
from . import metrics
from .config import RunConfig, load_config, start_manifest
from .corpus import (
    ContextConfig,
    Marking,
    extend_corpus,
    generate_synthetic_corpus,
    read_extended_corpus,
    read_parallel_corpus,
    write_extended_corpus,
    write_parallel_corpus,
)
from .decode import (
    BeamConfig,
    AttentionExport,
    SEGMENT_ALL,
    SEGMENT_LAST,
    beam_decode,
    extract_scored_segment,
    greedy_decode,
    read_attention_records,
    write_attention_records,
)
from .errors import (
    ConfigError,
    CtxnmtError,
    InputError,
    MalformedCorpusError,
    MalformedRecordError,
    MalformedSegmentationError,
    NumericError,
)
from .model import (
    Vocabulary,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .subword import apply_bpe_line, learn_bpe, load_bpe_model, save_bpe_model, word_frequencies

_MODES = {
    "baseline": ContextConfig(0, 0, Marking.BREAK),
    "2+1-prefix": ContextConfig(1, 0, Marking.PREFIX),
    "2+1-break": ContextConfig(1, 0, Marking.BREAK),
    "2+2": ContextConfig(1, 1, Marking.BREAK),
}


def _load_base_config(args) -> RunConfig:
    config = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, rng_seed=args.seed)
    if getattr(args, "out", None):
        config = replace(config, out_dir=args.out)
    return config.seeded()


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_lines(path) -> list[list[str]]:
    return [line.split() for line in Path(path).read_text(encoding="utf-8").splitlines()]


def _write_lines(path, token_lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tokens in token_lines:
            fh.write(" ".join(tokens))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = _load_base_config(args)
    spec = replace(
        config.synth,
        num_docs=args.num_docs if args.num_docs is not None else config.synth.num_docs,
        units_per_doc=args.units_per_doc if args.units_per_doc is not None else config.synth.units_per_doc,
        rng_seed=config.rng_seed,
    )
    out = _out_dir(config)
    manifest = start_manifest("synth", config)
    units = generate_synthetic_corpus(spec)
    paths = [out / (args.prefix + ext) for ext in (".src", ".trg", ".docs")]
    write_parallel_corpus(units, *paths)
    for p in paths:
        manifest.add_output(p)
    manifest.write(out / "manifest-synth.json")
    print("synth: wrote %d units to %s" % (len(units), out))
    return 0


def _context_from_args(args, config: RunConfig) -> ContextConfig:
    if args.mode:
        return _MODES[args.mode]
    return config.context


def cmd_prepare(args) -> int:
    config = _load_base_config(args)
    context = _context_from_args(args, config)
    src = args.source or config.source_path
    trg = args.target or config.target_path
    docs = args.docs or config.docs_path
    units = read_parallel_corpus(src, trg, docs)
    examples = extend_corpus(units, context)
    out = _out_dir(config)
    manifest = start_manifest("prepare", config)
    for p in (src, trg, docs):
        manifest.add_input(p)
    paths = [out / (args.prefix + ext) for ext in (".src", ".trg", ".docs", ".meta")]
    write_extended_corpus(examples, *paths)
    for p in paths:
        manifest.add_output(p)
    manifest.write(out / "manifest-prepare.json")
    print("prepare: %d extended examples -> %s" % (len(examples), out))
    return 0


def cmd_bpe_learn(args) -> int:
    config = _load_base_config(args)
    lines = _read_lines(args.input[0])
    for extra in args.input[1:]:
        lines.extend(_read_lines(extra))
    num_merges = args.num_merges if args.num_merges is not None else config.bpe.num_merges
    model = learn_bpe(word_frequencies(lines), num_merges)
    out_model = Path(args.out_model)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    save_bpe_model(model, out_model)
    manifest = start_manifest("bpe-learn", config)
    for p in args.input:
        manifest.add_input(p)
    manifest.add_output(out_model)
    manifest.write(out_model.with_suffix(out_model.suffix + ".manifest.json"))
    print("bpe-learn: %d merges -> %s" % (len(model.merges), out_model))
    return 0


def cmd_bpe_apply(args) -> int:
    config = _load_base_config(args)
    model = load_bpe_model(args.model)
    threshold = args.vocab_threshold if args.vocab_threshold is not None else config.bpe.vocab_threshold
    lines = _read_lines(args.input)
    segmented = [apply_bpe_line(model, tokens, threshold) for tokens in lines]
    _write_lines(args.output, segmented)
    print("bpe-apply: %d lines -> %s" % (len(segmented), args.output))
    return 0


def _load_examples(src, trg, docs, meta):
    if meta and Path(meta).exists():
        return read_extended_corpus(src, trg, docs, meta)
    units = read_parallel_corpus(src, trg, docs)
    return extend_corpus(units, ContextConfig(0, 0, Marking.BREAK))


def cmd_train(args) -> int:
    config = _load_base_config(args)
    hp = config.hyper
    overrides = {}
    for name in ("embed_dim", "hidden_dim", "attention_dim", "learning_rate", "batch_size", "epochs",
                 "max_source_len", "max_target_len"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        hp = replace(hp, **overrides)
    hp = replace(hp, rng_seed=config.rng_seed)

    src = args.source or config.source_path
    trg = args.target or config.target_path
    docs = args.docs or config.docs_path
    examples = _load_examples(src, trg, docs, args.meta)

    src_vocab = Vocabulary.build((e.source_tokens for e in examples), max_size=args.vocab_cap)
    trg_vocab = Vocabulary.build((e.target_tokens for e in examples), max_size=args.vocab_cap)
    params = init_params(hp, src_vocab, trg_vocab)
    result = train(params, examples, hp, savepoint_schedule=args.savepoints)

    out = _out_dir(config)
    manifest = start_manifest("train", config)
    for p in (src, trg, docs, args.meta):
        manifest.add_input(p)
    for ckpt in result.checkpoints:
        path = out / ("checkpoint-%06d.ckpt" % ckpt.step)
        save_checkpoint(ckpt.params, path)
        manifest.checkpoints.append(str(path))
        manifest.add_output(path)
    loss_path = out / "losses.tsv"
    with open(loss_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step\tloss\n")
        for i, loss in enumerate(result.losses, start=1):
            fh.write("%d\t%.6f\n" % (i, loss))
    manifest.add_output(loss_path)
    manifest.write(out / "manifest-train.json")
    last = result.losses[-1] if result.losses else float("nan")
    print(
        "train: %d steps, %d checkpoints, %d skipped, final loss %.4f -> %s"
        % (len(result.losses), len(result.checkpoints), result.skipped, last, out)
    )
    return 0


def _beam_from_args(args, config: RunConfig) -> BeamConfig:
    beam = config.beam
    overrides = {}
    for arg_name, field_name in (
        ("beam_size", "beam_size"),
        ("alpha", "length_norm_alpha"),
        ("beta", "coverage_beta"),
        ("max_len_factor", "max_len_factor"),
        ("max_len_constant", "max_len_constant"),
    ):
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[field_name] = value
    return replace(beam, **overrides) if overrides else beam


def cmd_translate(args) -> int:
    config = _load_base_config(args)
    models = [load_checkpoint(p) for p in args.checkpoint]
    if not models:
        raise ConfigError("at least one --checkpoint is required")
    beam = _beam_from_args(args, config)
    src_lines = _read_lines(args.source)

    meta = []
    if args.meta and Path(args.meta).exists():
        for line in Path(args.meta).read_text(encoding="utf-8").splitlines():
            doc_id, idx, src_start, trg_start = line.split("\t")
            meta.append((doc_id, int(idx), int(src_start)))
    else:
        meta = [("", i, 0) for i in range(len(src_lines))]
    if len(meta) != len(src_lines):
        raise MalformedCorpusError("meta file does not align with source", path=args.meta)

    params = models[0]
    use_greedy = beam.beam_size == 1 and beam.length_norm_alpha == 0.0 and beam.coverage_beta == 0.0

    def translate_one(i):
        ids = params.src_vocab.encode(src_lines[i])
        if use_greedy:
            result = greedy_decode(models, ids, beam.max_len(len(ids)))
        else:
            result = beam_decode(models, ids, beam)
        return result

    indices = range(len(src_lines))
    if args.threads and args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(translate_one, indices))
    else:
        results = [translate_one(i) for i in indices]

    out = _out_dir(config)
    trg_path = out / (args.prefix + ".trg")
    attn_path = out / (args.prefix + ".attn.jsonl")
    _write_lines(trg_path, (r.target_tokens(params) for r in results))
    exports = []
    for i, r in enumerate(results):
        doc_id, idx, src_start = meta[i]
        exports.append(
            AttentionExport(
                index=i,
                doc_id=doc_id,
                index_in_doc=idx,
                source_tokens=list(src_lines[i]),
                target_tokens=r.target_tokens(params),
                weights=r.record.weights,
                source_focus_start=src_start,
                break_token=config.context.break_token,
            )
        )
    write_attention_records(attn_path, exports)

    manifest = start_manifest("translate", config)
    for p in [args.source, args.meta] + list(args.checkpoint):
        manifest.add_input(p)
    manifest.add_output(trg_path)
    manifest.add_output(attn_path)
    manifest.write(out / ("manifest-translate-%s.json" % args.prefix))
    truncated = sum(1 for r in results if r.truncated)
    print("translate: %d sentences (%d truncated) -> %s" % (len(results), truncated, trg_path))
    return 0


def cmd_score(args) -> int:
    config = _load_base_config(args)
    hyp = _read_lines(args.hyp)
    ref = _read_lines(args.ref)
    if args.segment_mode != "none":
        mode = SEGMENT_LAST if args.segment_mode == "last" else SEGMENT_ALL
        hyp = [extract_scored_segment(tokens, mode, config.context.break_token) for tokens in hyp]
    if args.regime == "extended":
        if not args.docs:
            raise ConfigError("--docs is required for the extended scoring regime")
        doc_ids = [line.strip() for line in Path(args.docs).read_text(encoding="utf-8").splitlines()]
        b, c = metrics.score_extended(hyp, ref, doc_ids, window=args.window, break_token=config.context.break_token)
    else:
        b, c = metrics.bleu(hyp, ref), metrics.chrf(hyp, ref)
    report = metrics.format_score_report([(args.name, b, c)])
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(report, encoding="utf-8")
        manifest = start_manifest("score", config)
        manifest.add_input(args.hyp)
        manifest.add_input(args.ref)
        manifest.add_output(args.report)
        manifest.write(Path(args.report).with_suffix(".manifest.json"))
    sys.stdout.write(report)
    return 0


def cmd_attn_stats(args) -> int:
    config = _load_base_config(args)
    analysis = config.analysis
    overrides = {}
    if args.min_freq is not None:
        overrides["min_freq"] = args.min_freq
    if args.min_cases is not None:
        overrides["min_cases"] = args.min_cases
    if args.use_mass:
        overrides["majority_use_mass"] = True
    if args.model_kind:
        overrides["model_kind"] = args.model_kind
    if overrides:
        analysis = replace(analysis, **overrides)

    exports = read_attention_records(args.attn)
    partitions = []
    for export in exports:
        partitions.extend(astats.partition(export, analysis.model_kind))

    mass = astats.word_mass_stats(partitions, analysis.min_freq)
    peaks = astats.word_peak_stats(partitions, analysis.min_freq)
    majority = astats.majority_peak_stats(partitions, analysis.min_cases, analysis.majority_use_mass)
    proportion = astats.corpus_external_proportion(partitions)

    out = _out_dir(config)
    outputs = {
        out / (args.prefix + "-mass.tsv"): astats.format_stats_table(mass),
        out / (args.prefix + "-peaks.tsv"): astats.format_stats_table(peaks),
        out / (args.prefix + "-majority.tsv"): astats.format_majority_table(majority),
        out / (args.prefix + "-summary.tsv"): (
            "measure\tvalue\n"
            "corpus_external_proportion\t%.6f\n"
            "table_average_proportion\t%.6f\n" % (proportion, mass.average.proportion / 100.0)
        ),
    }
    manifest = start_manifest("attn-stats", config)
    manifest.add_input(args.attn)
    for path, text in outputs.items():
        Path(path).write_text(text, encoding="utf-8")
        manifest.add_output(path)
    manifest.write(out / ("manifest-attn-stats-%s.json" % args.prefix))
    print(
        "attn-stats: %d records, %d occurrences, external proportion %.4f -> %s"
        % (len(exports), len(partitions), proportion, out)
    )
    return 0


def _parse_classes(spec: str):
    """Parse "name=form1|form2,name2=form3" into a class mapping."""
    classes = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ConfigError("--classes expects name=form|form,... got %r" % part)
        name, forms = part.split("=", 1)
        classes[name.strip()] = tuple(f.strip() for f in forms.split("|") if f.strip())
    return classes


def cmd_pronoun_eval(args) -> int:
    config = _load_base_config(args)
    source = _read_lines(args.source)
    ref = _read_lines(args.ref)
    systems = {}
    for spec in args.system:
        if "=" not in spec:
            raise ConfigError("--system expects name=path, got %r" % spec)
        name, path = spec.split("=", 1)
        systems[name] = _read_lines(path)
    forms = tuple(args.pronoun_forms.split(","))
    classes = _parse_classes(args.classes) if args.classes else metrics.SIE_PRONOUN_CLASSES
    occurrences = metrics.extract_pronoun_occurrences(source, ref, systems, forms)
    if args.classes:
        # custom class sets double as categories (one per class)
        for occ in occurrences:
            occ.category = metrics.pronoun_class(occ.reference_tokens, classes) or metrics.CATEGORY_UNKNOWN
        categories = list(classes)
    else:
        categories = list(metrics.SIE_CATEGORIES)
    metrics.judge_occurrences(occurrences, classes)
    report = metrics.pronoun_accuracy(occurrences, list(systems), categories)
    text = metrics.format_pronoun_report(report)
    out = _out_dir(config)
    report_path = out / (args.prefix + "-pronoun.tsv")
    report_path.write_text(text, encoding="utf-8")
    manifest = start_manifest("pronoun-eval", config)
    manifest.add_input(args.source)
    manifest.add_input(args.ref)
    manifest.add_output(report_path)

    if args.chi2:
        name_a, name_b = args.chi2
        a, b, c, d = report.counts_2x2(name_a, name_b)
        stat, significant = metrics.chi_square_2x2(a, b, c, d)
        chi_text = "systems\tstatistic\tsignificant_at_0.05\n%s vs %s\t%.4f\t%s\n" % (
            name_a, name_b, stat, significant,
        )
        chi_path = out / (args.prefix + "-chi2.tsv")
        chi_path.write_text(chi_text, encoding="utf-8")
        manifest.add_output(chi_path)
        sys.stdout.write(chi_text)

    if args.export_adjudication:
        lines = ["index\tcategory\tsource\treference\t" + "\t".join(systems)]
        for i, occ in enumerate(occurrences):
            cells = [str(i), occ.category, " ".join(occ.source_tokens), " ".join(occ.reference_tokens)]
            cells += [" ".join(occ.system_translations[s]) for s in systems]
            lines.append("\t".join(cells))
        Path(args.export_adjudication).write_text("\n".join(lines) + "\n", encoding="utf-8")
        manifest.add_output(args.export_adjudication)

    manifest.write(out / ("manifest-pronoun-%s.json" % args.prefix))
    sys.stdout.write(text)
    return 0


def cmd_heatmap(args) -> int:
    config = _load_base_config(args)
    exports = read_attention_records(args.attn)
    by_index = {e.index: e for e in exports}
    if args.index not in by_index:
        raise InputError("record index %d not present in %s" % (args.index, args.attn))
    export = by_index[args.index]
    out = _out_dir(config)
    tsv_path = out / ("heatmap-%04d.tsv" % args.index)
    tsv_path.write_text(astats.heatmap_tsv(export), encoding="utf-8")
    written = [tsv_path]
    if args.image:
        pgm_path = out / ("heatmap-%04d.pgm" % args.index)
        pgm_path.write_text(astats.heatmap_pgm(export), encoding="utf-8")
        written.append(pgm_path)
    manifest = start_manifest("heatmap", config)
    manifest.add_input(args.attn)
    for p in written:
        manifest.add_output(p)
    manifest.write(out / ("manifest-heatmap-%04d.json" % args.index))
    print("heatmap: wrote %s" % ", ".join(str(p) for p in written))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxnmt", description=__doc__)
    parser.add_argument("--version", action="version", version="ctxnmt %s (checkpoint v1, bpe v1)" % __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file (INI)")
        p.add_argument("--seed", type=int, help="master rng seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")

    p = sub.add_parser("synth", help="generate the synthetic pronoun corpus")
    common(p)
    p.add_argument("--num-docs", type=int)
    p.add_argument("--units-per-doc", type=int)
    p.add_argument("--prefix", default="synth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="build context-extended training data")
    common(p)
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--docs")
    p.add_argument("--mode", choices=sorted(_MODES))
    p.add_argument("--prefix", default="extended")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("bpe-learn", help="learn BPE merge operations")
    common(p)
    p.add_argument("--input", nargs="+", required=True, help="token files (several = joint codes)")
    p.add_argument("--num-merges", type=int)
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=cmd_bpe_learn)

    p = sub.add_parser("bpe-apply", help="apply a BPE model to a token file")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--vocab-threshold", type=int)
    p.set_defaults(func=cmd_bpe_apply)

    p = sub.add_parser("train", help="train the encoder-decoder")
    common(p)
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--docs")
    p.add_argument("--meta")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--attention-dim", dest="attention_dim", type=int)
    p.add_argument("--max-source-len", dest="max_source_len", type=int)
    p.add_argument("--max-target-len", dest="max_target_len", type=int)
    p.add_argument("--vocab-cap", type=int, default=60000)
    p.add_argument("--savepoints", type=int, default=4)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="decode a source file with checkpoints (ensemble)")
    common(p)
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--meta")
    p.add_argument("--prefix", default="hyp")
    p.add_argument("--beam-size", dest="beam_size", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--max-len-factor", dest="max_len_factor", type=float)
    p.add_argument("--max-len-constant", dest="max_len_constant", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("score", help="BLEU/chrF3 scoring")
    common(p)
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--docs")
    p.add_argument("--regime", choices=["plain", "extended"], default="plain")
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--segment-mode", choices=["none", "last", "all"], default="none",
                   help="preprocess hypothesis lines (for two-sided models)")
    p.add_argument("--name", default="system")
    p.add_argument("--report")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("attn-stats", help="attention statistics tables")
    common(p)
    p.add_argument("--attn", required=True)
    p.add_argument("--model-kind", dest="model_kind", choices=["2+1", "2+2"])
    p.add_argument("--min-freq", dest="min_freq", type=int)
    p.add_argument("--min-cases", dest="min_cases", type=int)
    p.add_argument("--use-mass", dest="use_mass", action="store_true")
    p.add_argument("--prefix", default="attn")
    p.set_defaults(func=cmd_attn_stats)

    p = sub.add_parser("pronoun-eval", help="pronoun category accuracy report")
    common(p)
    p.add_argument("--source", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--system", action="append", required=True, help="name=path (repeatable)")
    p.add_argument("--pronoun-forms", default="sie,Sie")
    p.add_argument("--classes", help="custom pronoun classes, e.g. 'he=he,she=she,it=it,they=they'")
    p.add_argument("--chi2", nargs=2, metavar=("SYS_A", "SYS_B"))
    p.add_argument("--export-adjudication")
    p.add_argument("--prefix", default="eval")
    p.set_defaults(func=cmd_pronoun_eval)

    p = sub.add_parser("heatmap", help="export one attention heatmap (TSV + PGM)")
    common(p)
    p.add_argument("--attn", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--no-image", dest="image", action="store_false", help="skip the PGM image")
    p.set_defaults(func=cmd_heatmap)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except (MalformedCorpusError, MalformedSegmentationError, MalformedRecordError, InputError) as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return 3
    except NumericError as exc:
        print("numeric failure: %s" % exc, file=sys.stderr)
        return 4
    except CtxnmtError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
