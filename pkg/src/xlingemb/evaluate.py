"""CSLS retrieval, lexicon induction, word alignment and alignment scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class EvalError(ValueError):
    pass


# -- similarity --------------------------------------------------------------

def normalise_rows(X, allow_zero=False):
    """Unit-length rows; zero rows are an error unless ``allow_zero`` keeps them at zero."""
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if allow_zero:
        return X / np.where(norms == 0, 1.0, norms)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms[:, 0] == 0)
        raise EvalError(f"zero-norm embedding rows: {bad[:10].tolist()}")
    return X / norms


def cosine(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise EvalError("cosine of a zero vector")
    return float(x @ y / (nx * ny))


def csls(x, y, target_neighbours, source_neighbours):
    """CSLS of one pair given the neighbour vectors of each side.

    ``target_neighbours`` are the K target-side vectors nearest to ``x``;
    ``source_neighbours`` the K source-side vectors nearest to ``y``.
    """
    if len(target_neighbours) == 0 or len(source_neighbours) == 0:
        raise EvalError("CSLS needs non-empty neighbourhoods")
    r_t = np.mean([cosine(x, t) for t in target_neighbours])
    r_s = np.mean([cosine(s, y) for s in source_neighbours])
    return 2.0 * cosine(x, y) - r_t - r_s


def _mean_topk(C, k, axis):
    n = C.shape[axis]
    k = min(k, n)
    if k == 0:
        raise EvalError("empty candidate set")
    part = -np.partition(-C, k - 1, axis=axis)
    part = np.take(part, np.arange(k), axis=axis)
    return part.mean(axis=axis)


def csls_matrix(X, Y, k, allow_zero=False):
    """All-pairs CSLS between rows of X (source) and Y (target).

    Neighbourhoods are the ``k`` most cosine-similar rows on the other side,
    truncated to what exists. Returns (csls, cos). With ``allow_zero`` a zero
    row has cosine 0 with everything instead of raising.
    """
    C = normalise_rows(X, allow_zero) @ normalise_rows(Y, allow_zero).T
    r_t = _mean_topk(C, k, axis=1)
    r_s = _mean_topk(C, k, axis=0)
    return 2.0 * C - r_t[:, None] - r_s[None, :], C


# -- lexicon induction -------------------------------------------------------

@dataclass
class BLIResult:
    precision: dict
    n_queries: int
    retrievals: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)


def bli(src, tgt, gold, ks=(1, 5), csls_k=10):
    """Precision@k of CSLS retrieval.

    ``src``/``tgt`` are candidate matrices; ``gold`` maps a src row to the set
    of acceptable tgt rows. Rows outside ``src`` are skipped with a warning.
    Ties rank lower target rows first.
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    queries = []
    skipped = []
    for s, ts in sorted(gold.items()):
        if 0 <= s < len(src) and ts:
            queries.append((s, set(ts)))
        else:
            skipped.append(s)
    if skipped:
        log.warning("BLI: %d dictionary sources not in the vocabulary", len(skipped))
    if not queries:
        raise EvalError("no scorable dictionary entries")
    S, _ = csls_matrix(src, tgt, csls_k)
    top = max(ks)
    hits = {k: 0 for k in ks}
    retrievals = {}
    for s, ts in queries:
        order = np.argsort(-S[s], kind="stable")[:top]
        retrievals[s] = order.tolist()
        for k in ks:
            if ts.intersection(order[:k].tolist()):
                hits[k] += 1
    prec = {k: hits[k] / len(queries) for k in ks}
    return BLIResult(prec, len(queries), retrievals, skipped)


# -- alignment ---------------------------------------------------------------

def align_vectors(X, Y, k=3):
    """Directional CSLS-argmax alignments between two sentences' word vectors.

    Returns (forward, backward, csls, cos): forward links every source
    position to its best target, backward every target to its best source.
    Zero vectors (an untrained or zeroed encoder) are tolerated and tie at
    cosine 0, so argmax falls back to the lowest position.
    """
    S, C = csls_matrix(X, Y, k, allow_zero=True)
    fwd = {(i, int(j)) for i, j in enumerate(np.argmax(S, axis=1))}
    bwd = {(int(i), j) for j, i in enumerate(np.argmax(S, axis=0))}
    return fwd, bwd, S, C


_NEIGHBOURS = ((-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


def grow_diag_final_and(forward, backward, src_len=None, tgt_len=None):
    """Symmetrise two directional alignments (intersection, diagonal growth, final-and)."""
    forward, backward = set(forward), set(backward)
    union = forward | backward
    if src_len is None:
        src_len = 1 + max((i for i, _ in union), default=-1)
    if tgt_len is None:
        tgt_len = 1 + max((j for _, j in union), default=-1)
    links = forward & backward
    src_aligned = {i for i, _ in links}
    tgt_aligned = {j for _, j in links}

    def add(i, j):
        links.add((i, j))
        src_aligned.add(i)
        tgt_aligned.add(j)

    added = True
    while added:
        added = False
        for i in range(src_len):
            for j in range(tgt_len):
                if (i, j) not in links:
                    continue
                for di, dj in _NEIGHBOURS:
                    ni, nj = i + di, j + dj
                    if (ni, nj) in union and (ni, nj) not in links and (
                            ni not in src_aligned or nj not in tgt_aligned):
                        add(ni, nj)
                        added = True
    for directional in (forward, backward):
        for i in range(src_len):
            for j in range(tgt_len):
                if (i, j) in directional and i not in src_aligned and j not in tgt_aligned:
                    add(i, j)
    return links


def null_filter(links, cos, csls_scores, cos_src_bos, cos_tgt_bos):
    """Drop links with CSLS <= 0 or cosine no better than either side's BOS similarity.

    ``cos``/``csls_scores`` are (n, m) matrices; ``cos_src_bos[i]`` is the
    cosine of source word i with the source BOS state, ``cos_tgt_bos[j]`` of
    the target BOS state with target word j.
    """
    kept = set()
    for i, j in links:
        if csls_scores[i, j] <= 0:
            continue
        if cos[i, j] <= min(cos_src_bos[i], cos_tgt_bos[j]):
            continue
        kept.add((i, j))
    return kept


def spans_from_pieces(pieces, marker):
    """Group piece positions into words; a piece carrying ``marker`` starts a word."""
    spans = []
    for p, piece in enumerate(pieces):
        if piece.startswith(marker) or not spans:
            spans.append([p])
        else:
            spans[-1].append(p)
    return spans


def _owner(spans):
    owner = {}
    for w, span in enumerate(spans):
        for p in span:
            if p in owner:
                raise EvalError(f"piece {p} belongs to words {owner[p]} and {w}")
            owner[p] = w
    return owner


def merge_subword_alignments(links, src_spans, tgt_spans):
    """Word (i, j) is linked iff some piece of word i links to some piece of word j."""
    so, to = _owner(src_spans), _owner(tgt_spans)
    return {(so[a], to[b]) for a, b in links}


@dataclass
class AlignmentCounts:
    predicted: int = 0
    sure: int = 0
    hit_sure: int = 0
    hit_possible: int = 0

    def add(self, predicted, sure, possible):
        predicted = set(predicted)
        possible = set(possible) | set(sure)
        self.predicted += len(predicted)
        self.sure += len(sure)
        self.hit_sure += len(predicted & set(sure))
        self.hit_possible += len(predicted & possible)
        return self

    @property
    def precision(self):
        return 1.0 if self.predicted == 0 else self.hit_possible / self.predicted

    @property
    def recall(self):
        return 0.0 if self.sure == 0 else self.hit_sure / self.sure

    @property
    def aer(self):
        denom = self.predicted + self.sure
        if denom == 0:
            return 0.0
        return 1.0 - (self.hit_sure + self.hit_possible) / denom


def alignment_metrics(predicted, sure, possible):
    """(precision, recall, AER) for one sentence or, given lists of sets, micro-averaged."""
    if isinstance(predicted, (set, frozenset)):
        predicted, sure, possible = [predicted], [sure], [possible]
    if not (len(predicted) == len(sure) == len(possible)):
        raise EvalError("predicted and gold sentence counts differ")
    counts = AlignmentCounts()
    for a, s, p in zip(predicted, sure, possible):
        if not set(s) <= set(p):
            raise EvalError("sure links must also be possible links")
        counts.add(a, s, p)
    return counts.precision, counts.recall, counts.aer


# -- file formats ------------------------------------------------------------

def parse_pharaoh_line(line, lineno=None):
    links = set()
    for tok in line.split():
        try:
            a, b = tok.split("-")
            links.add((int(a), int(b)))
        except ValueError:
            where = f" on line {lineno}" if lineno is not None else ""
            raise EvalError(f"malformed link {tok!r}{where}") from None
    return links


def format_pharaoh(links):
    return " ".join(f"{i}-{j}" for i, j in sorted(links))


def read_pharaoh(path):
    with open(path, encoding="utf-8") as f:
        return [parse_pharaoh_line(line, k) for k, line in enumerate(f, start=1)]


def write_pharaoh(path, alignments):
    with open(path, "w", encoding="utf-8") as f:
        for links in alignments:
            f.write(format_pharaoh(links) + "\n")


def read_gold_alignments(path, n_sentences=None):
    """Read ``sent src tgt [S|P]`` lines (all 1-based) into 0-based sure/possible sets."""
    sure, possible = {}, {}
    top = 0
    with open(path, encoding="utf-8") as f:
        for k, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) not in (3, 4):
                raise EvalError(f"{path}:{k}: expected 'sent src tgt [S|P]'")
            try:
                sn, i, j = (int(x) for x in parts[:3])
            except ValueError:
                raise EvalError(f"{path}:{k}: non-integer field") from None
            flag = parts[3].upper() if len(parts) == 4 else "S"
            if flag not in ("S", "P"):
                raise EvalError(f"{path}:{k}: flag must be S or P, got {parts[3]!r}")
            link = (i - 1, j - 1)
            possible.setdefault(sn, set()).add(link)
            if flag == "S":
                sure.setdefault(sn, set()).add(link)
            top = max(top, sn)
    n = top if n_sentences is None else n_sentences
    return ([sure.get(s, set()) for s in range(1, n + 1)],
            [possible.get(s, set()) for s in range(1, n + 1)])


def write_gold_alignments(path, sure, possible=None):
    possible = sure if possible is None else possible
    with open(path, "w", encoding="utf-8") as f:
        for sn, (s, p) in enumerate(zip(sure, possible), start=1):
            for i, j in sorted(set(p) | set(s)):
                flag = "S" if (i, j) in s else "P"
                f.write(f"{sn} {i + 1} {j + 1} {flag}\n")


def read_dictionary(path):
    gold = {}
    with open(path, encoding="utf-8") as f:
        for k, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                parts = line.split()
            if len(parts) < 2:
                raise EvalError(f"{path}:{k}: expected src<TAB>tgt")
            gold.setdefault(parts[0].lower(), set()).add(parts[1].lower())
    return gold


def write_dictionary(path, pairs):
    with open(path, "w", encoding="utf-8") as f:
        for s, t in pairs:
            f.write(f"{s}\t{t}\n")


def write_embeddings(path, words, matrix):
    matrix = np.asarray(matrix)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(words)} {matrix.shape[1]}\n")
        for w, row in zip(words, matrix):
            f.write(w + " " + " ".join(f"{v:.6f}" for v in row) + "\n")


def read_embeddings(path):
    """Text embeddings; zero rows are rejected."""
    table = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise EvalError(f"{path}: first line must be 'vocab_size dim'")
        n, d = int(header[0]), int(header[1])
        for k, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != d + 1:
                raise EvalError(f"{path}:{k}: expected {d} values")
            vec = np.array([float(x) for x in parts[1:]])
            if not np.any(vec):
                raise EvalError(f"{path}:{k}: zero vector for {parts[0]!r}")
            table[parts[0]] = vec
    if len(table) != n:
        log.warning("%s: header says %d words, found %d", path, n, len(table))
    return table
