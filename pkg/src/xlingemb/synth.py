"""Synthetic cipher bitext: Zipfian source sentences, word-substitution targets."""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

REORDER_MODES = ("identity", "reverse", "swap-halves")
MIN_LEN, MAX_LEN = 3, 12


class SynthError(ValueError):
    pass


@dataclass
class CipherCorpus:
    src: list  # token lists
    tgt: list
    cipher: dict  # src word -> tgt word
    alignments: list  # per sentence: set of (src pos, tgt pos)


def positions(n, mode):
    """perm[j] = source position of target position j."""
    if mode == "identity":
        return list(range(n))
    if mode == "reverse":
        return list(range(n - 1, -1, -1))
    if mode == "swap-halves":
        h = n // 2
        return list(range(h, n)) + list(range(h))
    raise SynthError(f"unknown reorder mode {mode!r}; expected one of {', '.join(REORDER_MODES)}")


def _random_words(rng, n, length, exclude=()):
    letters = np.array(list(string.ascii_lowercase))
    seen = set(exclude)
    out = []
    while len(out) < n:
        w = "".join(rng.choice(letters, size=length))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def generate(vocab_size, n_sentences, reorder="identity", seed=0, exponent=1.0,
             min_len=MIN_LEN, max_len=MAX_LEN):
    """Cipher corpus with Zipf(exponent) word frequencies and uniform lengths."""
    if vocab_size < 2:
        raise SynthError(f"vocab size must be at least 2, got {vocab_size}")
    if n_sentences < 1:
        raise SynthError(f"sentence count must be positive, got {n_sentences}")
    if not 1 <= min_len <= max_len:
        raise SynthError(f"bad length range [{min_len}, {max_len}]")
    positions(1, reorder)
    rng = np.random.default_rng(seed)
    src_words = [f"s{i}" for i in range(vocab_size)]
    tgt_words = _random_words(rng, vocab_size, 5, exclude=src_words)
    cipher = dict(zip(src_words, tgt_words))
    weights = 1.0 / np.arange(1, vocab_size + 1) ** exponent
    weights /= weights.sum()
    src, tgt, aligns = [], [], []
    for _ in range(n_sentences):
        n = int(rng.integers(min_len, max_len + 1))
        ids = rng.choice(vocab_size, size=n, p=weights)
        x = [src_words[i] for i in ids]
        perm = positions(n, reorder)
        src.append(x)
        tgt.append([cipher[x[p]] for p in perm])
        aligns.append({(p, j) for j, p in enumerate(perm)})
    return CipherCorpus(src, tgt, cipher, aligns)


def write(corpus, prefix, src_lang="src", tgt_lang="tgt"):
    """Write ``prefix.{src,tgt}``, ``prefix.dict.tsv`` and ``prefix.gold``; return the paths."""
    from .evaluate import write_dictionary, write_gold_alignments

    paths = {
        "src": f"{prefix}.{src_lang}",
        "tgt": f"{prefix}.{tgt_lang}",
        "dict": f"{prefix}.dict.tsv",
        "gold": f"{prefix}.gold",
    }
    for key, sents in (("src", corpus.src), ("tgt", corpus.tgt)):
        with open(paths[key], "w", encoding="utf-8") as f:
            for s in sents:
                f.write(" ".join(s) + "\n")
    used = {w for s in corpus.src for w in s}
    write_dictionary(paths["dict"], [(s, t) for s, t in corpus.cipher.items() if s in used])
    write_gold_alignments(paths["gold"], corpus.alignments)
    return paths
