"""Distributed activity representations trained with skip-gram + negative sampling.

Each user's trail is split into sessions (30-minute gap by default) and the
sessions are the sentences: context windows never cross a session boundary.
All stochastic choices (frequent-activity subsampling, dynamic window
radii, negative draws) are pre-sampled with numpy from the configured seed,
so a deterministic single-worker run is reproducible bit-for-bit on either
kernel backend.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from cotrail._backend import kernels
from cotrail.datamodel import (DEFAULT_SESSION_GAP_SECONDS, TrailCorpus,
                               sessionize)

_LR_FLOOR_FACTOR = 1e-4


@dataclass
class TrainParams:
    dim: int = 300
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_count: int = 2
    subsample_threshold: float = 1e-3
    rng_seed: int = 0
    deterministic: bool = True
    workers: int = 4
    session_gap_seconds: int = DEFAULT_SESSION_GAP_SECONDS
    # Subtract the vocabulary-mean vector after training.  Small corpora
    # produce anisotropic embeddings (a shared direction inflates every
    # cosine, letting frequent background activities through any
    # similarity threshold); centering removes that common component.
    center: bool = True

    def validate(self) -> None:
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.negatives < 1:
            raise ValueError(f"negatives must be >= 1, got {self.negatives}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {self.min_count}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


class EmbeddingTable:
    """Dense vectors for every retained activity, plus a stable id order."""

    def __init__(self, dim: int, vocab_order: list[str], matrix: np.ndarray,
                 epoch_losses: list[float] | None = None):
        self.dim = dim
        self.vocab_order = list(vocab_order)
        self.matrix = matrix                       # (V, dim) float32
        self.index = {a: i for i, a in enumerate(self.vocab_order)}
        self.epoch_losses = epoch_losses or []

    def __len__(self) -> int:
        return len(self.vocab_order)

    def __contains__(self, activity: str) -> bool:
        return activity in self.index

    def vector(self, activity: str) -> np.ndarray:
        try:
            return self.matrix[self.index[activity]]
        except KeyError:
            raise KeyError(f"no vector for activity {activity!r}") from None

    def __getitem__(self, activity: str) -> np.ndarray:
        return self.vector(activity)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two equal-dimension, non-zero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def sgns_pair_loss_and_grad(center: np.ndarray, context: np.ndarray,
                            negatives: np.ndarray):
    """Loss and analytic gradients for one (center, context, negatives) triple.

    Reference implementation of the objective the training kernels descend:
    ``-log sigmoid(h.v) - sum_m log sigmoid(-h.u_m)``.  Returns
    ``(loss, grad_center, grad_context, grad_negatives)``.
    """
    h = np.asarray(center, dtype=np.float64)
    v = np.asarray(context, dtype=np.float64)
    u = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    f_pos = float(h @ v)
    f_neg = u @ h
    loss = float(np.logaddexp(0.0, -f_pos) + np.logaddexp(0.0, f_neg).sum())
    s_pos = 1.0 / (1.0 + np.exp(-f_pos))
    s_neg = 1.0 / (1.0 + np.exp(-f_neg))
    grad_center = (s_pos - 1.0) * v + s_neg @ u
    grad_context = (s_pos - 1.0) * h
    grad_negatives = np.outer(s_neg, h)
    return loss, grad_center, grad_context, grad_negatives


def _session_streams(corpus: TrailCorpus, gap_seconds: int) -> list[list[str]]:
    streams = []
    for user in corpus.users():
        for sess in sessionize(corpus.trails[user], gap_seconds):
            streams.append([ev.activity for ev in sess])
    return streams


def _epoch_draws(rng: np.random.Generator, tokens: np.ndarray,
                 offsets: np.ndarray, keep_prob: np.ndarray, window: int):
    """Subsample the stream and draw per-position dynamic windows."""
    keep = rng.random(len(tokens)) < keep_prob[tokens]
    kept_counts = np.add.reduceat(keep.astype(np.int64), offsets[:-1])
    new_tokens = tokens[keep]
    new_offsets = np.zeros(len(offsets), dtype=np.int64)
    np.cumsum(kept_counts, out=new_offsets[1:])
    windows = rng.integers(1, window + 1, size=len(new_tokens), dtype=np.int32)
    return new_tokens, new_offsets, windows


def _pair_count(offsets: np.ndarray, windows: np.ndarray) -> int:
    total = 0
    lengths = np.diff(offsets)
    pos = np.arange(len(windows), dtype=np.int64)
    starts = np.repeat(offsets[:-1], lengths)
    ends = starts + np.repeat(lengths, lengths)
    idx = pos - starts
    left = np.minimum(idx, windows)
    right = np.minimum(ends - 1 - pos, windows)
    total = int((left + right).sum())
    return total


def train(corpus: TrailCorpus, params: TrainParams) -> EmbeddingTable:
    """Train activity vectors over the corpus sessions.

    Deterministic mode runs the kernel on a single worker in a fixed pair
    order; parallel mode shards sessions across threads that update the
    shared matrices without locks (lost updates tolerated), which is faster
    but not reproducible.
    """
    params.validate()
    if not corpus.trails:
        raise ValueError("cannot train on an empty corpus")

    streams = _session_streams(corpus, params.session_gap_seconds)
    counts: dict[str, int] = {}
    for sent in streams:
        for a in sent:
            counts[a] = counts.get(a, 0) + 1
    vocab = [a for a, c in counts.items() if c >= params.min_count]
    if not vocab:
        raise ValueError(f"no activity reaches min_count={params.min_count}")
    # frequency-descending order (ties by id) keeps the negative-sampling
    # table head-heavy, matching the unigram^0.75 draw below
    vocab.sort(key=lambda a: (-counts[a], a))
    index = {a: i for i, a in enumerate(vocab)}
    freq = np.array([counts[a] for a in vocab], dtype=np.float64)

    token_list: list[np.ndarray] = []
    offsets = [0]
    for sent in streams:
        ids = [index[a] for a in sent if a in index]
        if len(ids) < 1:
            continue
        token_list.append(np.array(ids, dtype=np.int32))
        offsets.append(offsets[-1] + len(ids))
    if not token_list:
        raise ValueError("corpus has no usable sessions after min_count filtering")
    tokens = np.concatenate(token_list)
    offsets = np.array(offsets, dtype=np.int64)

    total_tokens = freq.sum()
    rel_freq = freq / total_tokens
    if params.subsample_threshold > 0:
        ratio = params.subsample_threshold / rel_freq
        keep_prob = np.minimum(1.0, np.sqrt(ratio) + ratio)
    else:
        keep_prob = np.ones(len(vocab))
    neg_cdf = np.cumsum(rel_freq ** 0.75)
    neg_cdf /= neg_cdf[-1]

    seed_seq = np.random.SeedSequence(params.rng_seed)
    init_rng = np.random.default_rng(seed_seq.spawn(1)[0])
    vec_in = ((init_rng.random((len(vocab), params.dim), dtype=np.float32) - 0.5)
              / np.float32(params.dim))
    vec_out = np.zeros((len(vocab), params.dim), dtype=np.float32)

    epoch_rngs = [np.random.default_rng(s) for s in seed_seq.spawn(params.epochs)]
    plans = []
    for e in range(params.epochs):
        s_tokens, s_offsets, s_windows = _epoch_draws(
            epoch_rngs[e], tokens, offsets, keep_prob, params.window)
        plans.append((s_tokens, s_offsets, s_windows, _pair_count(s_offsets, s_windows)))
    grand_total = sum(p[3] for p in plans) or 1

    lr0 = params.learning_rate
    lr_floor = lr0 * _LR_FLOOR_FACTOR
    losses: list[float] = []
    done = 0
    for e, (s_tokens, s_offsets, s_windows, n_pairs) in enumerate(plans):
        negs = np.searchsorted(
            neg_cdf, epoch_rngs[e].random((n_pairs, params.negatives)),
            side="right").astype(np.int32)
        lr_start = lr0 * (1.0 - done / grand_total)
        lr_end = lr0 * (1.0 - (done + n_pairs) / grand_total)
        if params.deterministic or params.workers == 1:
            loss, seen = kernels.sgns_epoch(vec_in, vec_out, s_tokens, s_offsets,
                                            s_windows, negs, lr_start, lr_end, lr_floor)
        else:
            loss, seen = _parallel_epoch(vec_in, vec_out, s_tokens, s_offsets,
                                         s_windows, negs, lr_start, lr_end,
                                         lr_floor, params.workers)
        losses.append(loss / max(seen, 1))
        done += n_pairs
    if params.center and len(vocab) >= 3:
        centered = vec_in - vec_in.mean(axis=0)
        if float(np.linalg.norm(centered, axis=1).min()) > 0.0:
            vec_in = centered
    return EmbeddingTable(params.dim, vocab, vec_in, epoch_losses=losses)


def _parallel_epoch(vec_in, vec_out, tokens, offsets, windows, negs,
                    lr_start, lr_end, lr_floor, workers):
    """Shard sessions across threads sharing the parameter matrices."""
    n_sent = len(offsets) - 1
    bounds = np.linspace(0, n_sent, workers + 1, dtype=np.int64)
    results = [None] * workers
    # per-shard negative rows start where the shard's first pair would fall
    # in sequential order, so each row is consumed exactly once
    pair_starts = np.zeros(workers + 1, dtype=np.int64)
    for w in range(workers):
        lo, hi = bounds[w], bounds[w + 1]
        sub_off = offsets[lo:hi + 1]
        sub_win = windows[sub_off[0]:sub_off[-1]]
        pair_starts[w + 1] = pair_starts[w] + (
            _pair_count(sub_off - sub_off[0], sub_win) if hi > lo else 0)

    def run(w):
        lo, hi = bounds[w], bounds[w + 1]
        if hi <= lo:
            results[w] = (0.0, 0)
            return
        sub_off = (offsets[lo:hi + 1] - offsets[lo]).astype(np.int64)
        sl = slice(int(offsets[lo]), int(offsets[hi]))
        results[w] = kernels.sgns_epoch(
            vec_in, vec_out, tokens[sl], sub_off, windows[sl],
            negs[int(pair_starts[w]):int(pair_starts[w + 1])],
            lr_start, lr_end, lr_floor)

    threads = [threading.Thread(target=run, args=(w,)) for w in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return (sum(r[0] for r in results), sum(r[1] for r in results))


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Text format: header ``dim vocab_size``, then ``id v1 ... v_dim`` lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{table.dim} {len(table)}\n")
        for i, a in enumerate(table.vocab_order):
            vals = " ".join(f"{x:.9g}" for x in table.matrix[i])
            fh.write(f"{a} {vals}\n")


def load_embeddings(path) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed embedding header")
        dim, size = int(header[0]), int(header[1])
        vocab: list[str] = []
        rows = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected id plus {dim} floats")
            vocab.append(parts[0])
            rows.append(np.array(parts[1:], dtype=np.float32))
    if len(vocab) != size:
        raise ValueError(f"{path}: header promised {size} rows, found {len(vocab)}")
    matrix = np.vstack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
    return EmbeddingTable(dim, vocab, matrix)
