"""Training loop, model selection on the Dice pseudo-dictionary, checkpoint files."""

from __future__ import annotations

import json
import logging
import math
import struct
import sys
import zlib
from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .config import ConfigError, TrainConfig
from .corpus import PseudoDictionary, SubwordTable, Vocabulary, oversample
from .model import CrossLingualModel
from .tasks import model_bli

log = logging.getLogger(__name__)

MAGIC = b"XLEMBCKP"
VERSION = 1
POOL_BATCHES = 50


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch = epoch, batch


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: CrossLingualModel
    epoch: int
    score: float | None = None

    @property
    def config(self):
        return self.model.config


# -- loss ----------------------------------------------------------------------

def directed_loss(step, jobs):
    """Sum of J terms for ``[(src lang, x, tgt lang, y), ...]``.

    Each x is encoded once, then decoded into its own language
    (reconstruction) and into the target language (translation), in every
    enabled direction. Decodes into the same language are batched together.
    """
    cfg = step.config
    mem = step.encode([(sl, x) for sl, x, _, _ in jobs])
    groups = {}
    for row, (sl, x, tl, y) in enumerate(jobs):
        if not cfg.no_reconstruction:
            groups.setdefault(sl, []).append((row, x))
        groups.setdefault(tl, []).append((row, y))
    losses = []
    for lang in step.model.langs:
        if lang not in groups:
            continue
        rows = np.array([r for r, _ in groups[lang]], dtype=np.intp)
        targets = [y for _, y in groups[lang]]
        index = None if np.array_equal(rows, np.arange(len(jobs))) else rows
        for direction in step.model.directions:
            losses.append(step.decode_loss(mem, targets, lang, direction, index))
    return nk.add_n(losses) if len(losses) > 1 else losses[0]


def bitext_loss(step, pairs, src_lang, tgt_lang, mirrored=True):
    """J_{s,t} over a batch of ``(x, y)`` id-list pairs, plus J_{t,s} when ``mirrored``."""
    for lang in (src_lang, tgt_lang):
        if lang not in step.model.vocabs:
            raise ConfigError(f"unknown language {lang!r}")
    if not pairs:
        raise ValueError("empty batch")
    jobs = [(src_lang, x, tgt_lang, y) for x, y in pairs]
    if mirrored:
        jobs += [(tgt_lang, y, src_lang, x) for x, y in pairs]
    return directed_loss(step, jobs)


# -- batching ------------------------------------------------------------------

def make_batches(corpora, schedule, batch_size, rng):
    """Cut a shuffled epoch schedule into length-bucketed batches, then shuffle batch order."""
    pool = batch_size * POOL_BATCHES
    batches = []
    for start in range(0, len(schedule), pool):
        chunk = schedule[start:start + pool]
        lengths = [len(corpora[c].pairs[i][0]) + len(corpora[c].pairs[i][1]) for c, i in chunk]
        order = np.argsort(lengths, kind="stable")
        chunk = [chunk[k] for k in order]
        batches.extend(chunk[k:k + batch_size] for k in range(0, len(chunk), batch_size))
    perm = rng.permutation(len(batches))
    return [batches[k] for k in perm]


def batch_groups(corpora, batch):
    """Split a batch into per-corpus pair lists, in corpus order."""
    by = {}
    for c, i in batch:
        by.setdefault(c, []).append(corpora[c].pairs[i])
    return [(c, by[c]) for c in sorted(by)]


def snapshot(model):
    return CrossLingualModel(model.config, model.vocabs, model.subwords,
                             params={k: v.copy() for k, v in model.params.items()},
                             frozen=model.frozen)


def evaluation_loss(model, corpora):
    """Total loss of all corpora with dropout off."""
    total = 0.0
    for c in corpora:
        st = model.step(training=False)
        total += float(bitext_loss(st, c.pairs, c.src_lang, c.tgt_lang).value)
    return total


def train(model, corpora, config=None, log_file=None, rng=None, on_epoch=None):
    """Train in place; return checkpoints taken every ``eval_every`` epochs and at the end.

    ``log_file`` defaults to stdout; ``False`` silences the per-epoch log.
    ``on_epoch(epoch, model)`` is called after every epoch's updates.
    """
    config = model.config if config is None else config
    if not corpora:
        raise ValueError("need at least one parallel corpus")
    rng = np.random.default_rng([config.seed, 1]) if rng is None else rng
    out = sys.stdout if log_file is None else log_file
    if config.epochs == 0:
        return [Checkpoint(snapshot(model), 0)]
    adam = nk.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    checkpoints = []
    for epoch in range(1, config.epochs + 1):
        schedule = oversample(corpora, rng)
        batches = make_batches(corpora, schedule, config.batch_size, rng)
        epoch_loss = np.zeros(len(corpora))
        for b, batch in enumerate(batches):
            step = model.step(training=True, rng=rng)
            parts = []
            for c, pairs in batch_groups(corpora, batch):
                corpus = corpora[c]
                part = bitext_loss(step, pairs, corpus.src_lang, corpus.tgt_lang)
                parts.append(part)
                epoch_loss[c] += float(part.value)
            loss = nk.add_n(parts) if len(parts) > 1 else parts[0]
            value = float(loss.value)
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, b, value)
            grads = nk.tape_backward(step.tape, loss)
            grads = nk.clip_gradients(grads, config.clip)
            nk.adam_step(model.params, grads, adam)
        if out is not False:
            for c, corpus in enumerate(corpora):
                out.write(f"{epoch}\t{corpus.src_lang}-{corpus.tgt_lang}\t{epoch_loss[c]:.4f}\n")
            out.flush()
        if on_epoch is not None:
            on_epoch(epoch, model)
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            checkpoints.append(Checkpoint(snapshot(model), epoch))
    return checkpoints


# -- model selection -----------------------------------------------------------

def pseudo_dictionary_score(model, dictionaries, csls_k=10):
    """Mean P@1 over ``[(src lang, tgt lang, PseudoDictionary), ...]`` with entries."""
    scores = []
    for s, t, pd in dictionaries:
        if len(pd) == 0:
            continue
        scores.append(model_bli(model, s, t, pd.as_gold(), ks=(1,), csls_k=csls_k).precision[1])
    return float(np.mean(scores)) if scores else None


def select_model(checkpoints, dictionaries, csls_k=10):
    """Highest pseudo-dictionary P@1; ties keep the earliest epoch."""
    if not checkpoints:
        raise ValueError("no checkpoints to select from")
    usable = [(s, t, pd) for s, t, pd in dictionaries if len(pd) > 0]
    if not usable:
        log.warning("pseudo-dictionary is empty; selecting the last checkpoint")
        return checkpoints[-1]
    best = None
    for ck in checkpoints:
        ck.score = pseudo_dictionary_score(ck.model, usable, csls_k)
        if best is None or ck.score > best.score:
            best = ck
    return best


# -- checkpoint files ----------------------------------------------------------

def _block(data):
    return struct.pack("<I", len(data)) + data


def checkpoint_bytes(ck):
    model = ck.model
    config_text = "".join(f"{k}={v}\n" for k, v in model.config.to_items()).encode("utf-8")
    sub = None
    if model.subwords is not None:
        sub = {"pieces": model.subwords.pieces, "marker": model.subwords.marker,
               "segmentations": model.subwords.segmentations}
    meta = {"epoch": ck.epoch, "score": ck.score, "langs": model.langs,
            "vocabs": {lang: model.vocabs[lang].itos for lang in model.langs},
            "subwords": sub}
    meta_text = json.dumps(meta, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), _block(config_text), _block(meta_text)]
    tensors = [(k, v) for k, v in model.params.items()]
    tensors += [("frozen:" + k, v) for k, v in model.frozen.items()]
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(ck, path):
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(ck))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    with open(path, "rb") as f:
        data = f.read()
    return checkpoint_from_bytes(data)


def checkpoint_from_bytes(data):
    if len(data) < len(MAGIC) + 8 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, tail = data[:-4], data[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != struct.unpack("<I", tail)[0]:
        raise CheckpointError("checksum mismatch (file truncated or corrupted)")
    r = _Reader(body)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (n,) = r.unpack("<I")
    config_text = r.take(n).decode("utf-8")
    (n,) = r.unpack("<I")
    meta = json.loads(r.take(n).decode("utf-8"))
    items = dict(line.split("=", 1) for line in config_text.splitlines() if line)
    config = TrainConfig.from_mapping(items)
    (count,) = r.unpack("<I")
    params, frozen = {}, {}
    for _ in range(count):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
        if name.startswith("frozen:"):
            frozen[name[len("frozen:"):]] = arr
        else:
            params[name] = arr
    if r.pos != len(body):
        raise CheckpointError("trailing bytes after tensors")
    vocabs = {}
    for lang in meta["langs"]:
        v = Vocabulary(lang)
        for w in meta["vocabs"][lang][4:]:
            v.add(w)
        vocabs[lang] = v
    subwords = None
    if meta.get("subwords"):
        s = meta["subwords"]
        subwords = SubwordTable(pieces=list(s["pieces"]), marker=s["marker"],
                                segmentations={lang: dict(seg) for lang, seg in s["segmentations"].items()})
    model = CrossLingualModel(config, vocabs, subwords, params=params, frozen=frozen)
    return Checkpoint(model, meta["epoch"], meta["score"])


__all__ = [
    "Checkpoint", "CheckpointError", "PseudoDictionary", "TrainingDiverged", "bitext_loss",
    "checkpoint_bytes", "directed_loss", "evaluation_loss", "load_checkpoint", "make_batches",
    "save_checkpoint", "select_model", "snapshot", "train",
]
