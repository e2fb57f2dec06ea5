"""Command-line entry points.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical abort (non-finite training loss).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import corpus as C
from . import evaluate as ev
from . import synth, tasks
from . import trainer as T
from .config import ConfigError, TrainConfig
from .model import CrossLingualModel, ModelError

log = logging.getLogger("xlingemb")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
PATH_KEYS = ("corpus", "output_dir", "segmentation", "pretrained", "char_split",
             "gold_dictionary", "gold_alignments")
REPEATABLE = ("corpus", "segmentation", "pretrained")


class UsageError(Exception):
    pass


# -- run configuration ---------------------------------------------------------

@dataclass
class RunConfig:
    train: TrainConfig
    corpora: list  # (src lang, src path, tgt lang, tgt path)
    output_dir: str
    segmentation: dict = field(default_factory=dict)
    pretrained: dict = field(default_factory=dict)
    char_split: tuple = ()
    gold_dictionary: str | None = None
    gold_alignments: str | None = None


def _lang_path(value, key, base):
    lang, sep, path = value.partition(":")
    if not sep or not lang or not path:
        raise ConfigError(f"{key}: expected lang:path, got {value!r}")
    return lang, os.path.join(base, path)


def _require_file(key, path):
    if not os.path.isfile(path):
        raise ConfigError(f"{key}: file not found: {path}")


def parse_run_config(path):
    """Read a flat ``key = value`` file; relative paths resolve against its directory."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    hyper, extra = {}, {k: [] for k in PATH_KEYS}
    with open(path, encoding="utf-8") as f:
        for k, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ConfigError(f"{path}:{k}: expected key = value")
            if key in PATH_KEYS:
                if key not in REPEATABLE and extra[key]:
                    raise ConfigError(f"{path}:{k}: {key} given twice")
                extra[key].append(value)
            elif key in hyper:
                raise ConfigError(f"{path}:{k}: {key} given twice")
            else:
                hyper[key] = value
    train = TrainConfig.from_mapping(hyper)
    if not extra["corpus"]:
        raise ConfigError("corpus: at least one 'corpus = lang:path lang:path' line is required")
    if not extra["output_dir"]:
        raise ConfigError("output_dir: missing")
    corpora = []
    for value in extra["corpus"]:
        sides = value.split()
        if len(sides) != 2:
            raise ConfigError(f"corpus: expected 'lang:path lang:path', got {value!r}")
        (sl, sp), (tl, tp) = (_lang_path(s, "corpus", base) for s in sides)
        if sl == tl:
            raise ConfigError(f"corpus: both sides are language {sl!r}")
        _require_file("corpus", sp)
        _require_file("corpus", tp)
        corpora.append((sl, sp, tl, tp))
    langs = {c[0] for c in corpora} | {c[2] for c in corpora}
    maps = {}
    for key in ("segmentation", "pretrained"):
        maps[key] = {}
        for value in extra[key]:
            lang, p = _lang_path(value, key, base)
            if lang not in langs:
                raise ConfigError(f"{key}: language {lang!r} has no corpus")
            _require_file(key, p)
            maps[key][lang] = p
    char_split = tuple(x for v in extra["char_split"] for x in v.replace(",", " ").split())
    gold = {}
    for key in ("gold_dictionary", "gold_alignments"):
        gold[key] = None
        if extra[key]:
            gold[key] = os.path.join(base, extra[key][0])
            _require_file(key, gold[key])
    if maps["segmentation"] and train.subword_mode == "none":
        raise ConfigError("segmentation: given but subword_mode is none")
    return RunConfig(train, corpora, os.path.join(base, extra["output_dir"][0]),
                     maps["segmentation"], maps["pretrained"], char_split, **gold)


# -- data loading --------------------------------------------------------------

def load_corpora(rc):
    """Read every corpus; each language gets one vocabulary over all its text."""
    texts = []
    by_lang = {}
    for sl, sp, tl, tp in rc.corpora:
        xs, ys = C.read_tokenised(sp), C.read_tokenised(tp)
        if len(xs) != len(ys):
            raise C.CorpusError(f"{sp} has {len(xs)} lines but {tp} has {len(ys)}")
        for k, (x, y) in enumerate(zip(xs, ys), start=1):
            if not x or not y:
                raise C.CorpusError(f"{sp} / {tp}: empty sentence on line {k}")
        texts.append((sl, xs, tl, ys))
        by_lang.setdefault(sl, []).extend(xs)
        by_lang.setdefault(tl, []).extend(ys)
    vocabs = {lang: C.Vocabulary.from_sentences(lang, sents) for lang, sents in by_lang.items()}
    corpora = [C.build_corpus(xs, ys, sl, tl, vocabs)[0] for sl, xs, tl, ys in texts]
    return corpora, vocabs, by_lang


def _subwords_for(rc, by_lang):
    cfg = rc.train
    if cfg.subword_mode == "none":
        return None
    if rc.segmentation:
        table = C.SubwordTable()
        for lang in sorted(rc.segmentation):
            C.read_segmentation(rc.segmentation[lang], lang, table)
        return table
    return C.induce_subwords(by_lang, cfg.subword_vocab_size, rc.char_split)


def _load_pretrained(rc):
    return {lang: ev.read_embeddings(p) for lang, p in rc.pretrained.items()}


# -- commands ------------------------------------------------------------------

def cmd_train(args):
    rc = parse_run_config(args.config)
    corpora, vocabs, by_lang = load_corpora(rc)
    cfg = rc.train
    subwords = _subwords_for(rc, by_lang)
    model = CrossLingualModel.initialise(cfg, vocabs, subwords, np.random.default_rng(cfg.seed),
                                         _load_pretrained(rc) or None)
    os.makedirs(rc.output_dir, exist_ok=True)
    dictionaries = []
    for c in corpora:
        pd = C.dice_dictionary(c, cfg.dice_min_count, cfg.dice_threshold)
        C.write_pseudo_dictionary(os.path.join(rc.output_dir, f"pseudo.{c.src_lang}-{c.tgt_lang}.tsv"),
                                  pd, vocabs[c.src_lang], vocabs[c.tgt_lang])
        dictionaries.append((c.src_lang, c.tgt_lang, pd))
    with open(os.path.join(rc.output_dir, "train.log"), "w", encoding="utf-8") as logf:
        checkpoints = T.train(model, corpora, cfg, log_file=logf)
    best = T.select_model(checkpoints, dictionaries, cfg.csls_k)
    for ck in checkpoints:
        T.save_checkpoint(ck, os.path.join(rc.output_dir, f"epoch{ck.epoch}.ckpt"))
    T.save_checkpoint(best, os.path.join(rc.output_dir, "best.ckpt"))
    with open(os.path.join(rc.output_dir, "best.txt"), "w", encoding="utf-8") as f:
        f.write(f"epoch{best.epoch}.ckpt\t{best.score}\n")
    score = "n/a" if best.score is None else f"{100 * best.score:.1f}"
    print(f"selected epoch {best.epoch} (pseudo-dictionary P@1 {score})")
    rows = _gold_report(rc, best.model, corpora[0])
    if rows:
        write_report(os.path.join(rc.output_dir, "report.tsv"), rows)
        print("  ".join(f"{k} {100 * v:.1f}" for k, v in rows))
    return EXIT_OK


def _gold_report(rc, model, corpus):
    """Scores of the selected model on the first corpus against the configured gold files."""
    rows = []
    s, t = corpus.src_lang, corpus.tgt_lang
    if rc.gold_dictionary:
        gold, _ = tasks.dictionary_to_ids(ev.read_dictionary(rc.gold_dictionary),
                                          model.vocabs[s], model.vocabs[t])
        if gold:
            res = tasks.model_bli(model, s, t, gold, ks=(1, 5), csls_k=rc.train.csls_k)
            rows += [("P@1", res.precision[1]), ("P@5", res.precision[5])]
    if rc.gold_alignments:
        sure, possible = ev.read_gold_alignments(rc.gold_alignments, n_sentences=len(corpus))
        links = tasks.align_corpus(model, s, t, corpus.pairs, contextual=True)
        _, _, aer = ev.alignment_metrics(links, sure, possible)
        rows.append(("1-AER", 1 - aer))
    return rows


def _langs(model, src, tgt):
    if src is None and tgt is None:
        if len(model.langs) != 2:
            raise UsageError("checkpoint has more than two languages; pass --src and --tgt")
        return model.langs[0], model.langs[1]
    for lang in (src, tgt):
        if lang not in model.vocabs:
            raise UsageError(f"language {lang!r} not in checkpoint (has {', '.join(model.langs)})")
    return src, tgt


def write_report(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for key, value in rows:
            f.write(f"{key}\t{value!r}\n")


def read_report(path):
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            key, value = line.rstrip("\n").split("\t")
            out[key] = float(value)
    return out


def cmd_bli(args):
    model = T.load_checkpoint(args.checkpoint).model
    src, tgt = _langs(model, args.src, args.tgt)
    gold_words = ev.read_dictionary(args.dictionary)
    gold, missing = tasks.dictionary_to_ids(gold_words, model.vocabs[src], model.vocabs[tgt])
    if not gold:
        raise ev.EvalError(f"{args.dictionary}: no entry is covered by the checkpoint vocabularies")
    ks = tuple(sorted(set(args.k)))
    res = tasks.model_bli(model, src, tgt, gold, ks=ks, csls_k=args.csls_k)
    print("  ".join(f"P@{k} {100 * res.precision[k]:.1f}" for k in ks))
    sv, tv = model.vocabs[src], model.vocabs[tgt]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write("source\tgold\t" + "\t".join(f"rank{r + 1}" for r in range(max(ks))) + "\n")
            for s in sorted(res.retrievals):
                golds = ",".join(sorted(tv.itos[t] for t in gold[s]))
                f.write(sv.itos[s] + "\t" + golds + "\t"
                        + "\t".join(tv.itos[t] for t in res.retrievals[s]) + "\n")
    if args.report:
        write_report(args.report, [(f"P@{k}", res.precision[k]) for k in ks]
                     + [("queries", res.n_queries), ("skipped", len(missing))])
    return EXIT_OK


def _encode_file(path, vocab):
    sents = C.read_tokenised(path)
    for k, s in enumerate(sents, start=1):
        if not s:
            raise C.CorpusError(f"{path}: empty sentence on line {k}")
    return sents, [vocab.encode(s) for s in sents]


def cmd_align(args):
    model = T.load_checkpoint(args.checkpoint).model
    src, tgt = _langs(model, args.src, args.tgt)
    xs_tok, xs = _encode_file(args.src_file, model.vocabs[src])
    ys_tok, ys = _encode_file(args.tgt_file, model.vocabs[tgt])
    if len(xs) != len(ys):
        raise C.CorpusError(f"{args.src_file} has {len(xs)} sentences but {args.tgt_file} has {len(ys)}")
    rate = tasks.unk_rate(xs + ys)
    if rate > 0:
        log.warning("%.1f%% of tokens are out of vocabulary", 100 * rate)
    contextual = not args.static
    links = tasks.align_corpus(model, src, tgt, list(zip(xs, ys)), contextual=contextual,
                               k=args.k, null=args.null_filter)
    if args.subword_merge:
        marker = model.subwords.marker if model.subwords is not None else C.MARKER
        links = [ev.merge_subword_alignments(a, ev.spans_from_pieces(x, marker),
                                             ev.spans_from_pieces(y, marker))
                 for a, x, y in zip(links, xs_tok, ys_tok)]
    if args.out:
        ev.write_pharaoh(args.out, links)
    else:
        for a in links:
            print(ev.format_pharaoh(a))
    return EXIT_OK


def cmd_score(args):
    predicted = ev.read_pharaoh(args.predicted)
    sure, possible = ev.read_gold_alignments(args.gold)
    if len(sure) > len(predicted):
        if predicted:
            raise ev.EvalError(f"gold mentions sentence {len(sure)} but {args.predicted} "
                               f"has {len(predicted)} lines")
        predicted = [set() for _ in sure]  # an empty prediction file aligns nothing
    sure += [set() for _ in range(len(predicted) - len(sure))]
    possible += [set() for _ in range(len(predicted) - len(possible))]
    p, r, aer = ev.alignment_metrics(predicted, sure, possible)
    print(f"Precision {100 * p:.1f}  Recall {100 * r:.1f}  AER {100 * aer:.1f}  1-AER {100 * (1 - aer):.1f}")
    if args.report:
        write_report(args.report, [("precision", p), ("recall", r), ("aer", aer), ("1-aer", 1 - aer)])
    return EXIT_OK


def cmd_export_emb(args):
    model = T.load_checkpoint(args.checkpoint).model
    langs = [args.lang] if args.lang else model.langs
    for lang in langs:
        if lang not in model.vocabs:
            raise UsageError(f"language {lang!r} not in checkpoint")
        table = model.embedding_table(lang)[tasks.N_RESERVED:]
        path = args.out if args.lang else f"{args.out}.{lang}.vec"
        ev.write_embeddings(path, model.vocabs[lang].words(), table)
    return EXIT_OK


def cmd_induce_subwords(args):
    corpora = {}
    for value in args.corpus:
        lang, sep, path = value.partition(":")
        if not sep:
            raise UsageError(f"--corpus expects lang:path, got {value!r}")
        corpora.setdefault(lang, []).extend(C.read_tokenised(path))
    table = C.induce_subwords(corpora, args.vocab_size, tuple(args.char_split or ()))
    for lang in sorted(corpora):
        C.write_segmentation(f"{args.out}.{lang}.seg", table, lang)
    print(f"{len(table)} pieces")
    return EXIT_OK


def cmd_synth(args):
    cc = synth.generate(args.vocab, args.sentences, args.reorder, args.seed)
    paths = synth.write(cc, args.out, args.src_lang, args.tgt_lang)
    for key in ("src", "tgt", "dict", "gold"):
        print(paths[key])
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="xlingemb", description="Cross-lingual word embeddings from small parallel corpora.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("induce-subwords", help="learn a shared subword inventory")
    s.add_argument("--corpus", action="append", required=True, metavar="LANG:PATH")
    s.add_argument("--vocab-size", type=int, default=1000)
    s.add_argument("--char-split", action="append", metavar="LANG")
    s.add_argument("--out", required=True, help="prefix; writes PREFIX.LANG.seg")
    s.set_defaults(func=cmd_induce_subwords)

    s = sub.add_parser("train", help="train from a key=value config")
    s.add_argument("config")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("export-emb", help="write static embeddings as text")
    s.add_argument("checkpoint")
    s.add_argument("--lang")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_emb)

    s = sub.add_parser("bli", help="bilingual lexicon induction P@k")
    s.add_argument("checkpoint")
    s.add_argument("dictionary")
    s.add_argument("--src")
    s.add_argument("--tgt")
    s.add_argument("--k", type=int, nargs="+", default=[1, 5])
    s.add_argument("--csls-k", type=int, default=10)
    s.add_argument("--out", help="TSV of per-query retrievals")
    s.add_argument("--report", help="TSV of metric values")
    s.set_defaults(func=cmd_bli)

    s = sub.add_parser("align", help="word-align a parallel corpus")
    s.add_argument("checkpoint")
    s.add_argument("src_file")
    s.add_argument("tgt_file")
    s.add_argument("--src")
    s.add_argument("--tgt")
    view = s.add_mutually_exclusive_group()
    view.add_argument("--static", action="store_true")
    view.add_argument("--contextual", action="store_true")
    s.add_argument("--null-filter", action="store_true")
    s.add_argument("--subword-merge", action="store_true")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--out")
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("score", help="precision, recall and AER")
    s.add_argument("predicted")
    s.add_argument("gold")
    s.add_argument("--report")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("synth", help="generate a cipher bitext")
    s.add_argument("--vocab", type=int, default=50)
    s.add_argument("--sentences", type=int, default=500)
    s.add_argument("--reorder", choices=synth.REORDER_MODES, default="identity")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--src-lang", default="src")
    s.add_argument("--tgt-lang", default="tgt")
    s.add_argument("--out", required=True, help="output prefix")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command")
    except UsageError as e:
        print(f"xlingemb: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="xlingemb: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, synth.SynthError) as e:
        print(f"xlingemb: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except T.TrainingDiverged as e:
        print(f"xlingemb: numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (C.CorpusError, ev.EvalError, T.CheckpointError, ModelError,
            OSError, UnicodeDecodeError) as e:
        print(f"xlingemb: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
