"""Evaluation tasks run against a trained model: static BLI and sentence alignment."""

from __future__ import annotations

import logging

import numpy as np

from . import evaluate as ev
from .corpus import RESERVED, UNK

log = logging.getLogger(__name__)

N_RESERVED = len(RESERVED)


def dictionary_to_ids(gold_words, src_vocab, tgt_vocab):
    """Map a word dictionary onto vocabulary ids, skipping what the vocabularies lack."""
    gold = {}
    missing = []
    for s, ts in gold_words.items():
        if s not in src_vocab:
            missing.append(s)
            continue
        ids = {tgt_vocab.stoi[t] for t in ts if t in tgt_vocab}
        if not ids:
            missing.append(s)
            continue
        gold[src_vocab.stoi[s]] = ids
    for s in missing:
        log.warning("dictionary entry %r not scorable with this vocabulary", s)
    return gold, missing


def model_bli(model, src_lang, tgt_lang, gold_ids, ks=(1, 5), csls_k=10, tables=None):
    """P@k on static subword-aware embeddings; reserved tokens are never candidates.

    ``gold_ids`` maps source word ids to target word id sets. Retrievals in
    the result are target word ids.
    """
    if tables is None:
        S = model.embedding_table(src_lang)
        T = model.embedding_table(tgt_lang)
    else:
        S, T = tables
    rows = {s - N_RESERVED: {t - N_RESERVED for t in ts if t >= N_RESERVED}
            for s, ts in gold_ids.items() if s >= N_RESERVED}
    res = ev.bli(S[N_RESERVED:], T[N_RESERVED:], rows, ks=ks, csls_k=csls_k)
    res.retrievals = {s + N_RESERVED: [t + N_RESERVED for t in r] for s, r in res.retrievals.items()}
    res.skipped = [s + N_RESERVED for s in res.skipped]
    return res


def sentence_vectors(model, lang, sentences, contextual=True, batch=64):
    """Per-sentence (len + 2, d) arrays including the BOS and EOS rows."""
    if not contextual:
        return model.static(lang, sentences)
    out = []
    for start in range(0, len(sentences), batch):
        out.extend(model.contextual(lang, sentences[start:start + batch]))
    return out


def align_sentence(src_vecs, tgt_vecs, k=3, null=False):
    """Symmetrised CSLS alignment of one sentence pair.

    ``*_vecs`` carry BOS in row 0 and EOS in the last row; those rows are
    excluded from candidates and only the BOS rows feed the null filter.
    """
    X, Y = src_vecs[1:-1], tgt_vecs[1:-1]
    fwd, bwd, S, C = ev.align_vectors(X, Y, k)
    links = ev.grow_diag_final_and(fwd, bwd, len(X), len(Y))
    if null:
        xb = ev.normalise_rows(X, True) @ ev.normalise_rows(src_vecs[:1], True)[0]
        yb = ev.normalise_rows(Y, True) @ ev.normalise_rows(tgt_vecs[:1], True)[0]
        links = ev.null_filter(links, C, S, xb, yb)
    return links


def align_corpus(model, src_lang, tgt_lang, pairs, contextual=True, k=3, null=False):
    """Alignments for a list of ``(src ids, tgt ids)`` pairs."""
    srcs = [x for x, _ in pairs]
    tgts = [y for _, y in pairs]
    sv = sentence_vectors(model, src_lang, srcs, contextual)
    tv = sentence_vectors(model, tgt_lang, tgts, contextual)
    return [align_sentence(a, b, k, null) for a, b in zip(sv, tv)]


def unk_rate(sentences):
    total = sum(len(s) for s in sentences)
    return 0.0 if total == 0 else sum(t == UNK for s in sentences for t in s) / total
