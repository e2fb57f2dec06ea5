"""Shared-encoder LSTM translation/reconstruction model with tied subword-aware embeddings.

Parameters live in a flat ``{name: ndarray}`` dict. Every forward pass runs
inside a :class:`Step`, which puts the parameters on a fresh tape and caches
the per-language embedding tables for that pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import numkit as nk
from .config import TrainConfig
from .corpus import BOS, EOS, PAD, RESERVED

FORWARD, BACKWARD = "fw", "bw"


class ModelError(ValueError):
    pass


@dataclass
class Memory:
    """Encoder output for a padded batch: static rows R, contextual rows U."""

    R: nk.Var
    U: nk.Var
    mask: np.ndarray  # (B, T) bool
    lengths: np.ndarray


def _with_boundaries(ids):
    return [BOS] + list(ids) + [EOS]


def pad_batch(seqs, pad=PAD):
    lengths = np.array([len(s) for s in seqs], dtype=np.intp)
    T = int(lengths.max()) if len(seqs) else 0
    out = np.full((len(seqs), T), pad, dtype=np.intp)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    mask = np.arange(T)[None, :] < lengths[:, None]
    return out, mask, lengths


def reversal_index(lengths, T):
    """Flat index that reverses each row's first ``length`` steps in a (B, T) grid."""
    B = len(lengths)
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    src = np.where(t < L, L - 1 - t, t)
    return (np.arange(B)[:, None] * T + src).ravel()


def _reverse_rows(x, lengths):
    B, T, D = x.value.shape
    flat = nk.reshape(x, (B * T, D))
    return nk.reshape(nk.take(flat, reversal_index(lengths, T)), (B, T, D))


class CrossLingualModel:
    """Parameters plus the forward computation for a fixed set of languages."""

    def __init__(self, config: TrainConfig, vocabs, subwords=None, params=None, frozen=None):
        self.config = config
        self.vocabs = dict(vocabs)
        self.langs = list(self.vocabs)
        self.subwords = subwords
        if config.subword_mode != "none" and subwords is None:
            raise ModelError(f"subword mode {config.subword_mode} needs a subword table")
        self.params = {} if params is None else params
        # frozen arrays: pretrained rows and their coverage masks, never trained
        self.frozen = {} if frozen is None else frozen
        self._piece_lists = {}
        if subwords is not None:
            for lang in self.langs:
                self._piece_lists[lang] = subwords.ids_for_vocab(self.vocabs[lang])
        self._avg = {}
        self._cnn_index = {}

    # -- construction ---------------------------------------------------------

    @classmethod
    def initialise(cls, config, vocabs, subwords=None, rng=None, pretrained=None):
        """Fresh parameters: uniform(-s, s) matrices, zero biases.

        ``pretrained`` maps a language to ``{word: vector}``; covered words
        are represented by ``a * row + b`` with the rows frozen.
        """
        rng = np.random.default_rng(config.seed) if rng is None else rng
        model = cls(config, vocabs, subwords)
        d = config.dim
        s = config.init_scale
        P = model.params

        def mat(*shape):
            return rng.uniform(-s, s, size=shape)

        for lang in model.langs:
            P[f"emb.{lang}"] = mat(len(vocabs[lang]), d)
        if config.subword_mode != "none":
            P["sub"] = mat(len(subwords), d)
        if config.subword_mode == "SW_cnn":
            P["cnn.w"] = mat(config.cnn_window * d, d)
            P["cnn.b"] = np.zeros(d)
        h = d // 2
        for k in range(config.enc_layers):
            for direction in (FORWARD, BACKWARD):
                pre = f"enc.{k}.{direction}"
                P[pre + ".wx"] = mat(d, 4 * h)
                P[pre + ".wh"] = mat(h, 4 * h)
                P[pre + ".b"] = np.zeros(4 * h)
        for lang in model.langs:
            for direction in model.directions:
                for k in range(config.dec_layers):
                    pre = f"dec.{lang}.{direction}.{k}"
                    P[pre + ".wx"] = mat(d, 4 * d)
                    P[pre + ".wh"] = mat(d, 4 * d)
                    P[pre + ".b"] = np.zeros(4 * d)
        P["proj"] = mat(d, d)
        for lang, table in (pretrained or {}).items():
            model.attach_pretrained(lang, table)
        if config.no_weight_tying:
            for lang in model.langs:
                P[f"out.{lang}"] = model.embedding_table(lang).copy()
        return model

    def attach_pretrained(self, lang, table):
        vocab = self.vocabs[lang]
        d = self.config.dim
        rows = np.zeros((len(vocab), d))
        cover = np.zeros((len(vocab), 1))
        for w, vec in table.items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (d,):
                raise ModelError(f"pretrained vector for {w!r} has dim {vec.shape}, model dim is {d}")
            i = vocab.stoi.get(w)
            if i is not None and i >= len(RESERVED):
                rows[i] = vec
                cover[i] = 1.0
        self.frozen[f"pre.{lang}"] = rows
        self.frozen[f"cover.{lang}"] = cover
        self.params.setdefault(f"adapter.{lang}.a", np.ones(d))
        self.params.setdefault(f"adapter.{lang}.b", np.zeros(d))

    @property
    def directions(self):
        return (FORWARD,) if self.config.no_backward_decoder else (FORWARD, BACKWARD)

    def parameter_count(self):
        return sum(p.size for p in self.params.values())

    # -- per-pass machinery ---------------------------------------------------

    def step(self, training=False, rng=None):
        return Step(self, training, rng)

    def embedding_table(self, lang):
        """Subword-aware embedding matrix of ``lang`` in evaluation mode."""
        st = self.step(training=False)
        return st.table(lang).value.copy()

    def averaging_matrix(self, lang):
        if lang not in self._avg:
            lists = self._piece_lists[lang]
            rows, cols, vals = [], [], []
            for i, q in enumerate(lists):
                for p in q:
                    rows.append(i)
                    cols.append(p)
                    vals.append(1.0 / len(q))
            self._avg[lang] = sparse.csr_matrix((vals, (rows, cols)),
                                                shape=(len(lists), len(self.subwords)))
        return self._avg[lang]

    def cnn_index(self, lang):
        """(V, L + 2*pad) piece ids padded with the zero row index, plus lengths."""
        if lang not in self._cnn_index:
            lists = self._piece_lists[lang]
            pad = self.config.cnn_window // 2
            zero_row = len(self.subwords)
            L = max(1, max(len(q) for q in lists))
            idx = np.full((len(lists), L + 2 * pad), zero_row, dtype=np.intp)
            lengths = np.zeros(len(lists))
            for i, q in enumerate(lists):
                idx[i, pad:pad + len(q)] = q
                lengths[i] = len(q)
            self._cnn_index[lang] = (idx, lengths, L)
        return self._cnn_index[lang]

    # -- evaluation helpers ---------------------------------------------------

    def contextual(self, lang, sentences):
        """Encoder states for each sentence (with BOS/EOS rows), evaluation mode."""
        if not sentences:
            return []
        st = self.step(training=False)
        mem = st.encode([(lang, s) for s in sentences])
        U = mem.U.value
        return [U[i, :n].copy() for i, n in enumerate(mem.lengths)]

    def static(self, lang, sentences):
        table = self.embedding_table(lang)
        return [table[_with_boundaries(s)] for s in sentences]


class Step:
    """One forward pass: parameters on a tape, dropout masks, cached tables."""

    def __init__(self, model, training, rng):
        if training and rng is None:
            raise ModelError("training passes need an rng")
        self.model = model
        self.config = model.config
        self.training = training
        self.rng = rng
        self.rate = model.config.effective_dropout if training else 0.0
        self.tape = nk.Tape()
        self.P = {name: self.tape.param(name, value) for name, value in model.params.items()}
        self._tables = {}
        self._out = {}
        self._sub = None
        self._global = None

    def drop(self, x):
        return nk.dropout(x, self.rate, self.training and self.rate > 0, self.rng)

    def subword_rows(self):
        if self._sub is None:
            self._sub = self.drop(self.P["sub"])
        return self._sub

    def subword_part(self, lang):
        mode = self.config.subword_mode
        m = self.model
        if mode == "SW_ave":
            return nk.const_matmul(m.averaging_matrix(lang), self.subword_rows())
        idx, lengths, L = m.cnn_index(lang)
        d = self.config.dim
        Z = nk.concat([self.subword_rows(), np.zeros((1, d))], axis=0)
        G = nk.take(Z, idx)  # (V, L + 2p, d)
        win = self.config.cnn_window
        cols = [nk.take(G, np.arange(o, o + L), axis=1) for o in range(win)]
        X = nk.concat(cols, axis=2)
        conv = nk.tanh(nk.matmul(X, self.P["cnn.w"]) + self.P["cnn.b"])
        valid = (np.arange(L)[None, :] < lengths[:, None]).astype(float)
        weights = (valid / np.maximum(lengths, 1.0)[:, None])[:, :, None]
        return nk.sum_(conv * weights, axis=1)

    def table(self, lang):
        """Subword-aware embedding matrix of ``lang`` (no dropout applied)."""
        if lang not in self._tables:
            if lang not in self.model.vocabs:
                raise ModelError(f"unknown language {lang!r}")
            E = self.P[f"emb.{lang}"]
            if self.config.subword_mode == "none":
                tab = E
            elif self.config.no_word_embedding_term:
                tab = self.subword_part(lang)
            else:
                tab = E + self.subword_part(lang)
            cover = self.model.frozen.get(f"cover.{lang}")
            if cover is not None:
                pre = self.model.frozen[f"pre.{lang}"]
                adapted = nk.mul(pre, self.P[f"adapter.{lang}.a"]) + self.P[f"adapter.{lang}.b"]
                tab = tab * (1.0 - cover) + adapted * cover
            self._tables[lang] = tab
        return self._tables[lang]

    def output_table(self, lang):
        if lang not in self._out:
            src = self.P[f"out.{lang}"] if self.config.no_weight_tying else self.table(lang)
            self._out[lang] = self.drop(src)
        return self._out[lang]

    def global_table(self):
        if self._global is None:
            offsets = {}
            parts = []
            n = 0
            for lang in self.model.langs:
                offsets[lang] = n
                t = self.table(lang)
                parts.append(t)
                n += t.value.shape[0]
            self._global = (nk.concat(parts, axis=0) if len(parts) > 1 else parts[0], offsets)
        return self._global

    def lookup(self, lang_ids):
        """Embed a padded batch whose rows may come from different languages."""
        table, offsets = self.global_table()
        seqs = [[offsets[lang] + i for i in ids] for lang, ids in lang_ids]
        pad_ids = [offsets[lang] + PAD for lang, _ in lang_ids]
        gid, mask, lengths = pad_batch(seqs)
        gid = np.where(mask, gid, np.array(pad_ids)[:, None])
        return nk.take(table, gid), mask, lengths

    # -- encoder ----------------------------------------------------------------

    def encode(self, sentences):
        """Encode ``[(lang, ids), ...]``; BOS and EOS are added here."""
        for lang, ids in sentences:
            if len(ids) == 0:
                raise ModelError("cannot encode an empty sentence")
        R, mask, lengths = self.lookup([(lang, _with_boundaries(ids)) for lang, ids in sentences])
        R = self.drop(R)
        x = R
        for k in range(self.config.enc_layers):
            pre = f"enc.{k}."
            fw = nk.lstm(x, self.P[pre + "fw.wx"], self.P[pre + "fw.wh"], self.P[pre + "fw.b"])
            rev = _reverse_rows(x, lengths)
            bw = nk.lstm(rev, self.P[pre + "bw.wx"], self.P[pre + "bw.wh"], self.P[pre + "bw.b"])
            x = nk.concat([fw, _reverse_rows(bw, lengths)], axis=2)
        return Memory(R=R, U=x, mask=mask, lengths=lengths)

    # -- decoder ----------------------------------------------------------------

    def attend(self, H, mem, index=None):
        """Attention of decoder states H (B, M, d) over the memory rows.

        Returns (u_bar, r_bar, alpha).
        """
        U, R, mask = mem.U, mem.R, mem.mask
        if index is not None:
            U, R, mask = nk.take(U, index), nk.take(R, index), mask[index]
        scores = nk.matmul(H, nk.transpose(U, (0, 2, 1)))
        alpha = nk.masked_softmax(scores, mask[:, None, :], axis=-1)
        return nk.matmul(alpha, U), nk.matmul(alpha, R), alpha

    def decoder_states(self, lang, direction, inputs):
        X, mask, _ = self.lookup([(lang, s) for s in inputs])
        x = self.drop(X)
        for k in range(self.config.dec_layers):
            pre = f"dec.{lang}.{direction}.{k}"
            x = nk.lstm(x, self.P[pre + ".wx"], self.P[pre + ".wh"], self.P[pre + ".b"])
        return x, mask

    def logits(self, H, u_bar, r_bar, lang):
        s = self.drop(nk.add_n([u_bar, r_bar, H]))
        h_out = nk.matmul(s, nk.transpose(self.P["proj"]))
        return nk.matmul(h_out, nk.transpose(self.output_table(lang)))

    def decode_loss(self, mem, targets, lang, direction, index=None):
        """Summed cross-entropy of ``targets`` (id lists in ``lang``) given memory rows.

        ``index`` picks the memory row for each target (defaults to 0..B-1).
        Forward decoding reads ``BOS y1..yM`` and predicts ``y1..yM EOS``;
        backward reads ``EOS yM..y1`` and predicts ``yM..y1 BOS``.
        """
        if any(len(y) == 0 for y in targets):
            raise ModelError("empty target sentence")
        if direction == FORWARD:
            inputs = [[BOS] + list(y) for y in targets]
            gold = [list(y) + [EOS] for y in targets]
        elif direction == BACKWARD:
            inputs = [[EOS] + list(y)[::-1] for y in targets]
            gold = [list(y)[::-1] + [BOS] for y in targets]
        else:
            raise ModelError(f"unknown direction {direction!r}")
        H, mask = self.decoder_states(lang, direction, inputs)
        u_bar, r_bar, _ = self.attend(H, mem, index)
        logits = self.logits(H, u_bar, r_bar, lang)
        gold_ids, _, _ = pad_batch(gold)
        return nk.cross_entropy(logits, gold_ids, mask)

    def output_distribution(self, h, u_bar, r_bar, lang):
        """Probabilities over the ``lang`` vocabulary for single vectors (evaluation helper)."""
        z = self.logits(self._row(h), self._row(u_bar), self._row(r_bar), lang)
        return nk.softmax(z).value[0, 0]

    def _row(self, v):
        if isinstance(v, nk.Var):
            return nk.reshape(v, (1, 1, -1))
        return self.tape.const(np.asarray(v, dtype=float).reshape(1, 1, -1))
