import numpy as np
import pytest

from xlingemb import cli
from xlingemb import corpus as C
from xlingemb import evaluate as ev
from xlingemb import synth, tasks
from xlingemb import trainer as T
from xlingemb.config import TrainConfig
from xlingemb.model import CrossLingualModel


def run(*argv):
    return cli.main([str(a) for a in argv])


def write_lines(path, lines):
    path.write_text("".join(" ".join(s) + "\n" for s in lines), encoding="utf-8")
    return path


# -- synth ----------------------------------------------------------------------------

def test_synth_identity_gold_is_diagonal():
    cc = synth.generate(10, 20, "identity", seed=0)
    for s, links in zip(cc.src, cc.alignments):
        assert links == {(i, i) for i in range(len(s))}


def test_synth_reverse_length_three():
    assert synth.positions(3, "reverse") == [2, 1, 0]
    cc = synth.generate(10, 50, "reverse", seed=1)
    k = next(k for k, s in enumerate(cc.src) if len(s) == 3)
    assert cc.alignments[k] == {(0, 2), (1, 1), (2, 0)}


def test_synth_swap_halves_and_lengths():
    assert synth.positions(5, "swap-halves") == [2, 3, 4, 0, 1]
    cc = synth.generate(20, 200, "swap-halves", seed=2)
    assert all(3 <= len(s) <= 12 for s in cc.src)
    assert all(len(s) == len(t) for s, t in zip(cc.src, cc.tgt))


def test_synth_is_deterministic_and_seed_sensitive():
    a = synth.generate(30, 40, "reverse", seed=5)
    b = synth.generate(30, 40, "reverse", seed=5)
    c = synth.generate(30, 40, "reverse", seed=6)
    assert (a.src, a.tgt, a.cipher) == (b.src, b.tgt, b.cipher)
    assert a.src != c.src


def test_synth_cipher_is_bijective_and_zipfian():
    cc = synth.generate(50, 2000, seed=0)
    assert len(set(cc.cipher.values())) == len(cc.cipher) == 50
    counts = {}
    for s in cc.src:
        for w in s:
            counts[w] = counts.get(w, 0) + 1
    # rank 1 is far more frequent than rank 10
    assert counts["s0"] > 5 * counts.get("s9", 1)


@pytest.mark.parametrize("mode", synth.REORDER_MODES)
def test_synth_files_are_mutually_consistent(tmp_path, mode):
    assert run("synth", "--vocab", 12, "--sentences", 30, "--reorder", mode,
               "--seed", 3, "--out", tmp_path / "c") == 0
    src = C.read_tokenised(tmp_path / "c.src")
    tgt = C.read_tokenised(tmp_path / "c.tgt")
    cipher = {s: next(iter(t)) for s, t in ev.read_dictionary(tmp_path / "c.dict.tsv").items()}
    sure, possible = ev.read_gold_alignments(tmp_path / "c.gold")
    assert sure == possible
    for x, y, gold in zip(src, tgt, sure):
        # gold is a position bijection and every link joins a word to its cipher image
        assert sorted(i for i, _ in gold) == sorted(j for _, j in gold) == list(range(len(x)))
        assert all(cipher[x[i]] == y[j] for i, j in gold)
        # so substituting through the links rebuilds the target exactly
        rebuilt = [None] * len(y)
        for i, j in gold:
            rebuilt[j] = cipher[x[i]]
        assert rebuilt == y


def test_synth_rejects_tiny_vocab(capsys):
    assert run("synth", "--vocab", 1, "--out", "x") == cli.EXIT_USAGE
    assert "vocab" in capsys.readouterr().err


# -- train ---------------------------------------------------------------------------

COPY = [["a", "b", "c"], ["c", "a"], ["b", "c", "a", "b"], ["a", "c"], ["b", "a"]] * 2


def copy_config(tmp, out="out", **extra):
    write_lines(tmp / "s.txt", COPY)
    write_lines(tmp / "t.txt", [["t" + w for w in s] for s in COPY])
    lines = ["# tiny copy task", "corpus = s:s.txt t:t.txt", f"output_dir = {out}",
             "dim = 8", "epochs = 3", "eval_every = 1", "batch_size = 4", "seed = 1",
             "dice_min_count = 2"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    path = tmp / f"{out}.cfg"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_train_minimal_config_writes_outputs(tmp_path, capsys):
    assert run("train", copy_config(tmp_path)) == 0
    out = tmp_path / "out"
    for name in ("best.ckpt", "epoch1.ckpt", "epoch2.ckpt", "epoch3.ckpt", "best.txt",
                 "pseudo.s-t.tsv", "train.log"):
        assert (out / name).is_file(), name
    assert len((out / "train.log").read_text().splitlines()) == 3
    assert "selected epoch" in capsys.readouterr().out
    best = T.load_checkpoint(out / "best.ckpt")
    marker = (out / "best.txt").read_text().split("\t")[0]
    assert marker == f"epoch{best.epoch}.ckpt"
    assert (out / marker).read_bytes() == (out / "best.ckpt").read_bytes()


def test_train_rerun_is_byte_identical(tmp_path):
    assert run("train", copy_config(tmp_path, "a")) == 0
    assert run("train", copy_config(tmp_path, "b")) == 0
    assert (tmp_path / "a" / "best.ckpt").read_bytes() == (tmp_path / "b" / "best.ckpt").read_bytes()


def test_train_missing_corpus_names_key(tmp_path, capsys):
    cfg = copy_config(tmp_path)
    cfg.write_text(cfg.read_text().replace("t.txt", "missing.txt"))
    assert run("train", cfg) == cli.EXIT_USAGE
    err = capsys.readouterr().err
    assert "corpus" in err and "missing.txt" in err


def test_train_config_errors(tmp_path, capsys):
    assert run("train", copy_config(tmp_path, bogus_key=1)) == cli.EXIT_USAGE
    assert "bogus_key" in capsys.readouterr().err
    assert run("train", copy_config(tmp_path, dim="eight")) == cli.EXIT_USAGE
    assert run("train", tmp_path / "nope.cfg") == cli.EXIT_USAGE


def test_train_unequal_corpus_is_data_error(tmp_path):
    cfg = copy_config(tmp_path)
    write_lines(tmp_path / "t.txt", COPY[:3])
    assert run("train", cfg) == cli.EXIT_DATA


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_numerical_abort_exit_code(tmp_path, capsys):
    assert run("train", copy_config(tmp_path, init_scale="1e300")) == cli.EXIT_NUMERIC
    assert "epoch 1" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert run() == cli.EXIT_USAGE
    assert run("frobnicate") == cli.EXIT_USAGE
    assert run("bli") == cli.EXIT_USAGE


# -- hand-built checkpoints -------------------------------------------------------------

WORDS = ["a", "b", "c", "d", "e", "f"]


def cipher_checkpoint(tmp_path, dim=16, seed=0, zero_encoder=False, zero_tables=False):
    """Static rows of each target word equal its source word's rows."""
    sents = [WORDS[:3], WORDS[3:], ["b", "f", "a", "e"]]
    corpus, vocabs = C.build_corpus(sents, [["t" + w for w in s] for s in sents], "s", "t")
    m = CrossLingualModel.initialise(TrainConfig(dim=dim), vocabs, rng=np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    E = rng.normal(size=m.params["emb.s"].shape)
    m.params["emb.s"][:] = E
    for w in WORDS:
        m.params["emb.t"][vocabs["t"].stoi["t" + w]] = E[vocabs["s"].stoi[w]]
    for r in range(tasks.N_RESERVED):
        m.params["emb.t"][r] = E[r]
    if zero_encoder:
        for k in m.params:
            if k.startswith("enc."):
                m.params[k][:] = 0.0
    if zero_tables:
        m.params["emb.s"][4:] = 0.0
        m.params["emb.t"][4:] = 0.0
    path = tmp_path / "m.ckpt"
    T.save_checkpoint(T.Checkpoint(m, 0), path)
    write_lines(tmp_path / "x.s", sents)
    write_lines(tmp_path / "x.t", [["t" + w for w in s] for s in sents])
    (tmp_path / "d.tsv").write_text("".join(f"{w}\tt{w}\n" for w in WORDS))
    return path, m


def test_bli_perfect_cipher(tmp_path, capsys):
    ck, _ = cipher_checkpoint(tmp_path)
    assert run("bli", ck, tmp_path / "d.tsv", "--out", tmp_path / "r.tsv",
               "--report", tmp_path / "rep.tsv") == 0
    assert capsys.readouterr().out.strip() == "P@1 100.0  P@5 100.0"
    rows = (tmp_path / "r.tsv").read_text().splitlines()
    assert rows[0].split("\t")[:3] == ["source", "gold", "rank1"]
    assert all(r.split("\t")[1] == r.split("\t")[2] for r in rows[1:])
    rep = cli.read_report(tmp_path / "rep.tsv")
    assert rep["P@1"] == 1.0 and rep["queries"] == 6


def test_bli_four_entry_fixture_matches_eval_oracle(tmp_path, capsys):
    ck, m = cipher_checkpoint(tmp_path)
    rng = np.random.default_rng(9)
    m.params["emb.t"][4:] += rng.normal(scale=1.5, size=m.params["emb.t"][4:].shape)
    T.save_checkpoint(T.Checkpoint(m, 0), ck)
    (tmp_path / "d4.tsv").write_text("a\tta\nb\ttc\nc\ttc\nd\ttf\n")
    assert run("bli", ck, tmp_path / "d4.tsv", "--report", tmp_path / "rep.tsv") == 0
    sv, tv = m.vocabs["s"], m.vocabs["t"]
    gold = {sv.stoi[s] - 4: {tv.stoi[t] - 4} for s, t in [("a", "ta"), ("b", "tc"), ("c", "tc"), ("d", "tf")]}
    expect = ev.bli(m.embedding_table("s")[4:], m.embedding_table("t")[4:], gold)
    rep = cli.read_report(tmp_path / "rep.tsv")
    assert rep["P@1"] == expect.precision[1] and rep["P@5"] == expect.precision[5]


def test_bli_empty_dictionary_is_data_error(tmp_path, capsys):
    ck, _ = cipher_checkpoint(tmp_path)
    (tmp_path / "none.tsv").write_text("zz\tqq\n")
    assert run("bli", ck, tmp_path / "none.tsv") == cli.EXIT_DATA
    assert "no entry" in capsys.readouterr().err


def test_align_identity_corpus_is_diagonal(tmp_path):
    ck, _ = cipher_checkpoint(tmp_path)
    out = tmp_path / "a.txt"
    assert run("align", ck, tmp_path / "x.s", tmp_path / "x.t", "--static", "--out", out) == 0
    got = ev.read_pharaoh(out)
    lengths = [len(s) for s in C.read_tokenised(tmp_path / "x.s")]
    assert got == [{(i, i) for i in range(n)} for n in lengths]


def test_align_null_filter_with_all_csls_nonpositive_gives_empty_lines(tmp_path):
    # every word shares one vector per side: all cosines tie, so every CSLS is 0
    ck, m = cipher_checkpoint(tmp_path)
    m.params["emb.s"][4:] = m.params["emb.s"][4]
    m.params["emb.t"][4:] = -m.params["emb.s"][4]
    T.save_checkpoint(T.Checkpoint(m, 0), ck)
    out = tmp_path / "a.txt"
    assert run("align", ck, tmp_path / "x.s", tmp_path / "x.t", "--static", "--null-filter",
               "--out", out) == 0
    assert out.read_text().splitlines() == ["", "", ""]


def test_align_static_equals_contextual_with_zero_encoder(tmp_path):
    ck, m = cipher_checkpoint(tmp_path, zero_encoder=True, zero_tables=True)
    u = m.contextual("s", [[4, 5, 6]])[0]
    assert not np.any(u)  # zero LSTM
    outs = []
    for view in ("--static", "--contextual"):
        path = tmp_path / f"{view[2:]}.txt"
        assert run("align", ck, tmp_path / "x.s", tmp_path / "x.t", view, "--out", path) == 0
        outs.append(path.read_text())
    assert outs[0] == outs[1]


def test_align_sentence_count_mismatch(tmp_path, capsys):
    ck, _ = cipher_checkpoint(tmp_path)
    write_lines(tmp_path / "short.t", [["ta"]])
    assert run("align", ck, tmp_path / "x.s", tmp_path / "short.t") == cli.EXIT_DATA
    assert "sentences" in capsys.readouterr().err


def test_align_subword_merge_groups_pieces(tmp_path):
    ck, _ = cipher_checkpoint(tmp_path)
    # "@a b" is one source word split over two tokens; the target has two words
    write_lines(tmp_path / "p.s", [["@a", "b"]])
    write_lines(tmp_path / "p.t", [["@ta", "@tb"]])
    out = tmp_path / "m.txt"
    assert run("align", ck, tmp_path / "p.s", tmp_path / "p.t", "--static", "--subword-merge",
               "--out", out) == 0
    links = ev.read_pharaoh(out)[0]
    assert links and all(i == 0 for i, _ in links)


def test_export_embeddings_round_trip(tmp_path):
    ck, m = cipher_checkpoint(tmp_path)
    assert run("export-emb", ck, "--out", tmp_path / "e") == 0
    table = ev.read_embeddings(tmp_path / "e.s.vec")
    words = m.vocabs["s"].words()
    assert list(table) == words
    assert np.allclose(np.array([table[w] for w in words]), m.embedding_table("s")[4:], atol=5e-7)
    first = (tmp_path / "e.s.vec").read_text().splitlines()[0]
    assert first == f"{len(words)} 16"
    assert run("export-emb", ck, "--lang", "zz", "--out", tmp_path / "z") == cli.EXIT_USAGE


def test_induce_subwords_writes_segmentations(tmp_path, capsys):
    write_lines(tmp_path / "a.txt", [["lower", "lowest", "low"]] * 3)
    write_lines(tmp_path / "b.txt", [["hello"]])
    assert run("induce-subwords", "--corpus", f"x:{tmp_path / 'a.txt'}", "--corpus",
               f"y:{tmp_path / 'b.txt'}", "--vocab-size", 30, "--char-split", "y",
               "--out", tmp_path / "sw") == 0
    seg = C.read_segmentation(tmp_path / "sw.y.seg", "y")
    assert [seg.pieces[i] for i in seg.segmentations["y"]["hello"]] == ["@h", "e", "l", "l", "o"]
    assert (tmp_path / "sw.x.seg").is_file()


# -- score --------------------------------------------------------------------------------

def test_score_perfect(tmp_path, capsys):
    (tmp_path / "p.txt").write_text("0-0 1-1\n0-1\n")
    ev.write_gold_alignments(tmp_path / "g.txt", [{(0, 0), (1, 1)}, {(0, 1)}])
    assert run("score", tmp_path / "p.txt", tmp_path / "g.txt", "--report", tmp_path / "r") == 0
    assert capsys.readouterr().out.strip() == \
        "Precision 100.0  Recall 100.0  AER 0.0  1-AER 100.0"
    assert cli.read_report(tmp_path / "r") == {"precision": 1.0, "recall": 1.0, "aer": 0.0,
                                               "1-aer": 1.0}


def test_score_hand_fixture_with_possible_links(tmp_path, capsys):
    # A = {(1,1),(2,2)}, S = {(1,1)}, P = {(1,1),(2,2),(2,3)}
    (tmp_path / "p.txt").write_text("1-1 2-2\n")
    ev.write_gold_alignments(tmp_path / "g.txt", [{(1, 1)}], [{(1, 1), (2, 2), (2, 3)}])
    assert run("score", tmp_path / "p.txt", tmp_path / "g.txt") == 0
    assert "AER 0.0" in capsys.readouterr().out


def test_score_empty_prediction_has_zero_recall(tmp_path, capsys):
    (tmp_path / "p.txt").write_text("")
    ev.write_gold_alignments(tmp_path / "g.txt", [{(0, 0)}, {(1, 1)}])
    assert run("score", tmp_path / "p.txt", tmp_path / "g.txt") == 0
    assert "Recall 0.0" in capsys.readouterr().out


def test_score_rejects_malformed_link_and_short_file(tmp_path, capsys):
    (tmp_path / "p.txt").write_text("0-0\n0-x\n")
    ev.write_gold_alignments(tmp_path / "g.txt", [{(0, 0)}, {(0, 0)}])
    assert run("score", tmp_path / "p.txt", tmp_path / "g.txt") == cli.EXIT_DATA
    assert "line 2" in capsys.readouterr().err
    (tmp_path / "p.txt").write_text("0-0\n")
    ev.write_gold_alignments(tmp_path / "g.txt", [{(0, 0)}, {(0, 0)}, {(0, 0)}])
    assert run("score", tmp_path / "p.txt", tmp_path / "g.txt") == cli.EXIT_DATA


def test_report_round_trip_is_lossless(tmp_path):
    rows = [("P@1", 1 / 3), ("x", 0.1 + 0.2), ("n", 7)]
    cli.write_report(tmp_path / "r", rows)
    assert cli.read_report(tmp_path / "r") == dict(rows)


# -- trained pipeline ---------------------------------------------------------------------

def test_train_report_uses_gold_files(tmp_path, capsys):
    cfg = copy_config(tmp_path)
    (tmp_path / "gd.tsv").write_text("a\tta\nb\ttb\n")
    ev.write_gold_alignments(tmp_path / "ga.txt",
                             [{(i, i) for i in range(len(s))} for s in COPY])
    cfg.write_text(cfg.read_text() + "gold_dictionary = gd.tsv\ngold_alignments = ga.txt\n")
    assert run("train", cfg) == 0
    rep = cli.read_report(tmp_path / "out" / "report.tsv")
    assert set(rep) == {"P@1", "P@5", "1-AER"}
    model = T.load_checkpoint(tmp_path / "out" / "best.ckpt").model
    corpora, _, _ = cli.load_corpora(cli.parse_run_config(cfg))
    sure, possible = ev.read_gold_alignments(tmp_path / "ga.txt")
    links = tasks.align_corpus(model, "s", "t", corpora[0].pairs)
    assert rep["1-AER"] == 1 - ev.alignment_metrics(links, sure, possible)[2]
