from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlingemb import corpus as C


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return str(path)


# -- vocabulary and loading -------------------------------------------------------

def test_vocabulary_reserved_ids_and_frequency_order():
    v = C.Vocabulary.from_sentences("x", [["b", "a", "c"], ["a", "c", "d"], ["c"]])
    assert v.itos[:4] == list(C.RESERVED)
    assert (C.BOS, C.EOS, C.UNK, C.PAD) == (0, 1, 2, 3)
    # c:3, a:2, then b and d tie at 1 and keep first-appearance order
    assert v.words() == ["c", "a", "b", "d"]
    assert v.encode(["a", "zzz"]) == [5, C.UNK]


def test_load_parallel_lowercases_and_shares_vocab(tmp_path):
    s = write_lines(tmp_path / "a.src", ["The Cat", "the dog"])
    t = write_lines(tmp_path / "a.tgt", ["le chat", "le chien"])
    corpus, vocabs = C.load_parallel(s, t, "en", "fr")
    assert len(corpus) == 2
    assert vocabs["en"].itos[4] == "the"
    assert corpus.pairs[0][0] == [vocabs["en"].stoi["the"], vocabs["en"].stoi["cat"]]


def test_load_parallel_unequal_counts_names_both_files(tmp_path):
    s = write_lines(tmp_path / "a.src", ["a", "b", "c"])
    t = write_lines(tmp_path / "a.tgt", ["x", "y"])
    with pytest.raises(C.CorpusError, match=r"a\.src.*3.*a\.tgt.*2"):
        C.load_parallel(s, t, "s", "t")


def test_load_parallel_empty_line_names_line(tmp_path):
    s = write_lines(tmp_path / "a.src", ["a", "", "c"])
    t = write_lines(tmp_path / "a.tgt", ["x", "y", "z"])
    with pytest.raises(C.CorpusError, match="line 2"):
        C.load_parallel(s, t, "s", "t")


def test_existing_vocab_maps_unseen_to_unk(tmp_path):
    s = write_lines(tmp_path / "a.src", ["a b"])
    t = write_lines(tmp_path / "a.tgt", ["x y"])
    vocabs = {"s": C.Vocabulary("s", ["a"])}
    corpus, vocabs = C.load_parallel(s, t, "s", "t", vocabs)
    assert corpus.pairs[0][0] == [4, C.UNK]
    C.extend_vocab(vocabs["s"], [["b", "c", "c"]])
    assert vocabs["s"].words() == ["a", "c", "b"]


# -- subwords -----------------------------------------------------------------------

def test_induce_merges_frequent_pairs():
    table = C.induce_subwords({"x": [["lower", "lowest", "low", "low"]]}, vocab_size=30)
    pieces = [table.pieces[i] for i in table.segmentations["x"]["low"]]
    assert pieces == ["@low"]
    assert C.pieces_to_word([table.pieces[i] for i in table.segmentations["x"]["lowest"]]) == "lowest"


def test_induce_respects_inventory_cap_and_min_frequency():
    sents = [["abcd", "abce"], ["xyz"]]
    table = C.induce_subwords({"x": sents}, vocab_size=100)
    # "@a b" occurs twice and merges; pairs seen once never do
    assert "@ab" in table.index
    assert "yz" not in table.index and "@xy" not in table.index
    base = C.induce_subwords({"x": sents}, vocab_size=8)
    assert len(base) == 1 + 8  # UNK piece + inventory of exactly the marked characters


def test_induce_rejects_inventory_below_characters():
    with pytest.raises(C.CorpusError, match="distinct"):
        C.induce_subwords({"x": [["abc", "def"]]}, vocab_size=3)


def test_shared_pieces_across_languages_and_char_split():
    table = C.induce_subwords({"a": [["hello", "hello"]], "b": [["hello", "help"]]},
                              vocab_size=50, char_split=("b",))
    b_pieces = [table.pieces[i] for i in table.segmentations["b"]["hello"]]
    assert b_pieces == ["@h", "e", "l", "l", "o"]
    a_first = table.segmentations["a"]["hello"][0]
    assert table.pieces[a_first].startswith("@h")
    # identical spellings get identical ids in both languages
    assert table.index["@h"] == table.segmentations["b"]["help"][0]


def test_segment_unknown_character_uses_unk_piece():
    table = C.induce_subwords({"x": [["ab", "ab"]]}, vocab_size=10)
    ids = C.segment_word("abz", table)
    assert ids[-1] == table.unk_id
    assert table.q("x", "ab") == table.segmentations["x"]["ab"]
    assert table.q("x", "zz") == [table.unk_id, table.unk_id]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text(alphabet="abcde", min_size=1, max_size=8), min_size=1, max_size=20))
def test_segmentation_reassembles_every_training_word(words):
    table = C.induce_subwords({"x": [words]}, vocab_size=40)
    for w in set(words):
        ids = table.segmentations["x"][w]
        pieces = [table.pieces[i] for i in ids]
        assert pieces[0].startswith(C.MARKER)
        assert sum(p.startswith(C.MARKER) for p in pieces) == 1
        assert C.pieces_to_word(pieces) == w
        assert table.unk_id not in ids


def test_reserved_tokens_get_no_pieces():
    table = C.induce_subwords({"x": [["ab"]]}, vocab_size=10)
    lists = table.ids_for_vocab(C.Vocabulary("x", ["ab"]))
    assert lists[:4] == [[], [], [], []]
    assert lists[4] == table.segmentations["x"]["ab"]


def test_segmentation_file_round_trip(tmp_path):
    table = C.induce_subwords({"x": [["lower", "lowest", "low"]]}, vocab_size=20)
    path = tmp_path / "x.seg"
    C.write_segmentation(path, table, "x")
    back = C.read_segmentation(path, "x")
    for w, ids in table.segmentations["x"].items():
        assert [back.pieces[i] for i in back.segmentations["x"][w]] == [table.pieces[i] for i in ids]


def test_read_segmentation_rejects_malformed(tmp_path):
    p = tmp_path / "bad.seg"
    p.write_text("word piece\n", encoding="utf-8")
    with pytest.raises(C.CorpusError, match=":1"):
        C.read_segmentation(p, "x")


# -- oversampling ---------------------------------------------------------------------

def _corpus(n, lang="t"):
    return C.ParallelCorpus("s", lang, [([4], [4])] * n)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=4), st.integers(0, 1000))
def test_oversample_every_corpus_contributes_the_largest_size(sizes, seed):
    corpora = [_corpus(n) for n in sizes]
    items = C.oversample(corpora, np.random.default_rng(seed))
    per = Counter(c for c, _ in items)
    assert all(per[c] == max(sizes) for c in range(len(sizes)))
    for c, n in enumerate(sizes):
        uses = Counter(i for cc, i in items if cc == c)
        # every pair is used floor(max/n) or ceil(max/n) times
        lo = max(sizes) // n
        assert set(uses.values()) <= {lo, lo + 1}
        assert len(uses) == n or lo == 0


def test_oversample_rejects_no_corpora():
    with pytest.raises(C.CorpusError):
        C.oversample([], np.random.default_rng(0))


# -- Dice dictionary ------------------------------------------------------------------------

def _dice_oracle(pairs, min_count, threshold):
    out = []
    xs = {w for x, _ in pairs for w in x}
    ys = {w for _, y in pairs for w in y}
    for a in xs:
        for b in ys:
            if a < 4 or b < 4:
                continue
            na = sum(a in x for x, _ in pairs)
            nb = sum(b in y for _, y in pairs)
            nab = sum(a in x and b in y for x, y in pairs)
            if na < min_count or nb < min_count or nab == 0:
                continue
            d = 2 * nab / (na + nb)
            if d >= threshold - 1e-12:
                out.append((a, b, d))
    return sorted(out)


def test_dice_fixture():
    # word 4 and 7 always co-occur (3 times): dice 1.0; 5 appears in 3 sentences
    # with 8 in 2 of them and 8 appears 3 times: dice 2*2/6
    pairs = [([4, 5], [7, 8]), ([4, 5, 5], [7, 8, 8]), ([4, 5], [7, 9]), ([6], [8])]
    pd = C.dice_dictionary(C.ParallelCorpus("s", "t", pairs), min_count=3, threshold=0.6)
    assert pd.entries == [(4, 7, 1.0), (4, 8, 2 * 2 / 6), (5, 7, 1.0), (5, 8, 2 * 2 / 6)]
    assert pd.as_gold() == {4: {7, 8}, 5: {7, 8}}


def test_dice_counts_sentences_not_tokens():
    pairs = [([4, 4, 4], [5])] * 3
    pd = C.dice_dictionary(C.ParallelCorpus("s", "t", pairs), min_count=3, threshold=0.8)
    assert pd.entries == [(4, 5, 1.0)]


def test_dice_threshold_inclusive_and_reserved_excluded():
    pairs = [([4, C.UNK], [5, C.UNK])] * 4 + [([4], [6])]
    pd = C.dice_dictionary(C.ParallelCorpus("s", "t", pairs), min_count=1, threshold=0.8)
    assert pd.entries == [(4, 5, 2 * 4 / 9)]
    # dice exactly at the threshold is kept
    edge = [([4], [5])] * 2 + [([4], [6])] * 2
    pd2 = C.dice_dictionary(C.ParallelCorpus("s", "t", edge), min_count=1, threshold=2 * 2 / 6)
    assert [e[:2] for e in pd2.entries] == [(4, 5), (4, 6)]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.lists(st.integers(2, 9), min_size=1, max_size=4),
                          st.lists(st.integers(2, 9), min_size=1, max_size=4)),
                min_size=1, max_size=12),
       st.integers(1, 3), st.sampled_from([0.3, 0.5, 0.8, 1.0]))
def test_dice_matches_brute_force(pairs, min_count, threshold):
    pd = C.dice_dictionary(C.ParallelCorpus("s", "t", pairs), min_count, threshold)
    expect = _dice_oracle(pairs, min_count, threshold)
    assert [e[:2] for e in pd.entries] == [e[:2] for e in expect]
    assert np.allclose([e[2] for e in pd.entries], [e[2] for e in expect], rtol=0, atol=1e-12)


def test_pseudo_dictionary_file(tmp_path):
    v = C.Vocabulary("s", ["a"])
    w = C.Vocabulary("t", ["x"])
    path = tmp_path / "pd.tsv"
    C.write_pseudo_dictionary(path, C.PseudoDictionary([(4, 4, 2 / 3)]), v, w)
    assert path.read_text() == "a\tx\t0.6667\n"
