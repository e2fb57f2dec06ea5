"""Parallel text ingestion, vocabularies, shared subwords, oversampling, Dice dictionaries."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

BOS, EOS, UNK, PAD = 0, 1, 2, 3
RESERVED = ("<s>", "</s>", "<unk>", "<pad>")
MARKER = "@"
UNK_PIECE = "<unk>"


class CorpusError(ValueError):
    pass


class Vocabulary:
    """Word <-> id map for one language; ids 0..3 are BOS, EOS, UNK, PAD."""

    def __init__(self, lang, words=()):
        self.lang = lang
        self.itos = list(RESERVED)
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            self.add(w)

    def add(self, word):
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
        return self.stoi[word]

    @classmethod
    def from_sentences(cls, lang, sentences):
        """Build from tokenised sentences; most frequent first, ties by first appearance."""
        counts = Counter()
        first = {}
        for sent in sentences:
            for w in sent:
                counts[w] += 1
                first.setdefault(w, len(first))
        words = sorted(counts, key=lambda w: (-counts[w], first[w]))
        return cls(lang, words)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, word):
        return word in self.stoi

    def id(self, word):
        return self.stoi.get(word, UNK)

    def encode(self, tokens):
        return [self.stoi.get(w, UNK) for w in tokens]

    def words(self):
        """Non-reserved entries in id order."""
        return self.itos[len(RESERVED):]


@dataclass
class ParallelCorpus:
    """Line-aligned sentence pairs between two languages, as id lists."""

    src_lang: str
    tgt_lang: str
    pairs: list

    def __post_init__(self):
        for k, (x, y) in enumerate(self.pairs):
            if not x or not y:
                raise CorpusError(f"pair {k} has an empty side")

    def __len__(self):
        return len(self.pairs)


def read_tokenised(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n").lower().split() for line in f]


def load_parallel(src_path, tgt_path, src_lang, tgt_lang, vocabs=None):
    """Read two line-aligned files into a :class:`ParallelCorpus`.

    ``vocabs`` (a dict lang -> Vocabulary) is filled for languages not yet in
    it; tokens of languages already present map through their vocabulary, so
    unseen words become UNK. Returns ``(corpus, vocabs)``.
    """
    src = read_tokenised(src_path)
    tgt = read_tokenised(tgt_path)
    if len(src) != len(tgt):
        raise CorpusError(f"line counts differ: {src_path} has {len(src)}, {tgt_path} has {len(tgt)}")
    for k, (x, y) in enumerate(zip(src, tgt), start=1):
        if not x:
            raise CorpusError(f"{src_path}: empty line {k}")
        if not y:
            raise CorpusError(f"{tgt_path}: empty line {k}")
    return build_corpus(src, tgt, src_lang, tgt_lang, vocabs)


def build_corpus(src_sents, tgt_sents, src_lang, tgt_lang, vocabs=None):
    vocabs = {} if vocabs is None else vocabs
    if src_lang not in vocabs:
        vocabs[src_lang] = Vocabulary.from_sentences(src_lang, src_sents)
    if tgt_lang not in vocabs:
        vocabs[tgt_lang] = Vocabulary.from_sentences(tgt_lang, tgt_sents)
    sv, tv = vocabs[src_lang], vocabs[tgt_lang]
    pairs = [(sv.encode(x), tv.encode(y)) for x, y in zip(src_sents, tgt_sents)]
    return ParallelCorpus(src_lang, tgt_lang, pairs), vocabs


def extend_vocab(vocab, sentences):
    """Add words of ``sentences`` missing from ``vocab`` (frequency order)."""
    fresh = Vocabulary.from_sentences(vocab.lang, sentences)
    for w in fresh.words():
        vocab.add(w)
    return vocab


# -- subwords ----------------------------------------------------------------

@dataclass
class SubwordTable:
    """Shared piece inventory plus each language's word -> piece ids map."""

    pieces: list = field(default_factory=lambda: [UNK_PIECE])
    segmentations: dict = field(default_factory=dict)
    marker: str = MARKER

    def __post_init__(self):
        self.index = {p: i for i, p in enumerate(self.pieces)}

    @property
    def unk_id(self):
        return self.index[UNK_PIECE]

    def add_piece(self, piece):
        if piece not in self.index:
            self.index[piece] = len(self.pieces)
            self.pieces.append(piece)
        return self.index[piece]

    def __len__(self):
        return len(self.pieces)

    def q(self, lang, word):
        """Piece ids of ``word`` in ``lang``; segments on the fly when unseen."""
        seg = self.segmentations.get(lang, {})
        if word in seg:
            return seg[word]
        return segment_word(word, self)

    def ids_for_vocab(self, vocab):
        """Piece id lists indexed by word id; reserved tokens get no pieces."""
        out = [[] for _ in RESERVED]
        for w in vocab.words():
            out.append(self.q(vocab.lang, w))
        return out


def _initial_symbols(word, marker):
    return [marker + word[0]] + list(word[1:])


def _learn_merges(counts, max_pieces, marker, min_frequency=2):
    words = {w: _initial_symbols(w, marker) for w in counts}
    inventory = {s for syms in words.values() for s in syms}
    while len(inventory) < max_pieces:
        pairs = Counter()
        for w, syms in words.items():
            c = counts[w]
            for a, b in zip(syms, syms[1:]):
                pairs[a, b] += c
        if not pairs:
            break
        (a, b), freq = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))
        if freq < min_frequency:
            break
        merged = a + b
        for w, syms in words.items():
            if len(syms) < 2:
                continue
            out = []
            i = 0
            while i < len(syms):
                if i + 1 < len(syms) and syms[i] == a and syms[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            words[w] = out
        inventory.add(merged)
    return inventory


def induce_subwords(corpora, vocab_size=1000, char_split=(), marker=MARKER, min_frequency=2):
    """Learn a shared piece inventory by greedy pair merging, per language.

    ``corpora`` maps a language tag to its tokenised sentences. Languages in
    ``char_split`` are segmented into single characters with no merges.
    Spellings shared between languages share a piece id.
    """
    if not corpora:
        raise CorpusError("no corpora to induce subwords from")
    table = SubwordTable(marker=marker)
    for lang in sorted(corpora):
        counts = Counter(w for sent in corpora[lang] for w in sent)
        symbols = {s for w in counts for s in _initial_symbols(w, marker)}
        if lang in char_split:
            inventory = symbols
        else:
            if vocab_size < len(symbols):
                raise CorpusError(f"{lang}: vocab size {vocab_size} is below the "
                                  f"{len(symbols)} distinct (marked) characters")
            inventory = _learn_merges(counts, vocab_size, marker, min_frequency)
        for p in sorted(inventory):
            table.add_piece(p)
        view = SubwordTable(pieces=[UNK_PIECE] + sorted(inventory), marker=marker)
        seg = {}
        for w in counts:
            pieces = [view.pieces[i] for i in segment_word(w, view)]
            seg[w] = [table.index[p] for p in pieces]
        table.segmentations[lang] = seg
    return table


def segment_word(word, table):
    """Greedy longest match over ``table``; unknown characters become the UNK piece."""
    out = []
    pos = 0
    n = len(word)
    while pos < n:
        prefix = table.marker if pos == 0 else ""
        for end in range(n, pos, -1):
            pid = table.index.get(prefix + word[pos:end])
            if pid is not None:
                out.append(pid)
                pos = end
                break
        else:
            out.append(table.unk_id)
            pos += 1
    return out


def pieces_to_word(pieces, marker=MARKER):
    text = "".join(pieces)
    return text[len(marker):] if text.startswith(marker) else text


def write_segmentation(path, table, lang):
    with open(path, "w", encoding="utf-8") as f:
        for word, ids in table.segmentations[lang].items():
            f.write(word + "\t" + " ".join(table.pieces[i] for i in ids) + "\n")


def read_segmentation(path, lang, table=None, marker=MARKER):
    """Import ``word<TAB>piece piece ...`` lines into ``table`` for ``lang``."""
    table = SubwordTable(marker=marker) if table is None else table
    seg = table.segmentations.setdefault(lang, {})
    with open(path, encoding="utf-8") as f:
        for k, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                word, pieces = line.split("\t")
            except ValueError:
                raise CorpusError(f"{path}:{k}: expected word<TAB>pieces") from None
            ids = [table.add_piece(p) for p in pieces.split()]
            if not ids:
                raise CorpusError(f"{path}:{k}: word {word!r} has no pieces")
            seg[word.lower()] = ids
    return table


# -- oversampling ------------------------------------------------------------

def oversample(corpora, rng):
    """One epoch of ``(corpus index, pair index)`` items, shuffled.

    Every corpus contributes as many items as the largest one: whole copies
    of itself plus a remainder drawn without replacement.
    """
    if not corpora:
        raise CorpusError("need at least one corpus")
    target = max(len(c) for c in corpora)
    items = []
    for ci, c in enumerate(corpora):
        n = len(c)
        reps, rem = divmod(target, n)
        idx = np.concatenate([np.tile(np.arange(n), reps),
                              rng.choice(n, size=rem, replace=False)]) if rem else np.tile(np.arange(n), reps)
        items.extend((ci, int(i)) for i in idx)
    order = rng.permutation(len(items))
    return [items[i] for i in order]


# -- pseudo dictionary -------------------------------------------------------

@dataclass
class PseudoDictionary:
    entries: list  # (src id, tgt id, dice)

    def as_gold(self):
        gold = {}
        for s, t, _ in self.entries:
            gold.setdefault(s, set()).add(t)
        return gold

    def __len__(self):
        return len(self.entries)


def dice_dictionary(corpus, min_count=3, threshold=0.8):
    """Word pairs whose sentence-level Dice coefficient reaches ``threshold``.

    Counts are the number of aligned sentences containing a word (not token
    frequency); both words must reach ``min_count``.
    """
    if len(corpus) == 0:
        raise CorpusError("empty corpus")
    src_sets = [set(x) for x, _ in corpus.pairs]
    tgt_sets = [set(y) for _, y in corpus.pairs]
    n_x = Counter(w for s in src_sets for w in s)
    n_y = Counter(w for s in tgt_sets for w in s)
    keep_x = {w for w, c in n_x.items() if c >= min_count and w >= len(RESERVED)}
    keep_y = {w for w, c in n_y.items() if c >= min_count and w >= len(RESERVED)}
    n_xy = Counter()
    for xs, ys in zip(src_sets, tgt_sets):
        xs = xs & keep_x
        ys = ys & keep_y
        for x in xs:
            for y in ys:
                n_xy[x, y] += 1
    entries = []
    for (x, y), c in n_xy.items():
        d = 2.0 * c / (n_x[x] + n_y[y])
        if d >= threshold or math.isclose(d, threshold, rel_tol=0, abs_tol=1e-12):
            entries.append((x, y, d))
    entries.sort(key=lambda e: (e[0], e[1]))
    return PseudoDictionary(entries)


def write_pseudo_dictionary(path, pd, src_vocab, tgt_vocab):
    with open(path, "w", encoding="utf-8") as f:
        for s, t, d in pd.entries:
            f.write(f"{src_vocab.itos[s]}\t{tgt_vocab.itos[t]}\t{d:.4f}\n")
