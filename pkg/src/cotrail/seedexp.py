"""Seed-list construction and iterative embedding-based expansion.

The initial list ranks activities by conversion rate (fraction of an
activity's users whose own conversion follows the activity within a time
window), with a support floor against sparse-conversion noise and an
operator-supplied include/exclude pass replacing editorial curation.

Expansion then repeatedly adds activities that sit close in embedding
space to enough current seed members, keeping an iteration only while
validation AUC of the augmented conversion model improves by more than
``epsilon``; the loop also stops when no new neighbors exist or the
iteration cap is hit.  The final reported metric should always come from
the untouched test partition, never from the validation partition used to
steer acceptance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from cotrail import annindex
from cotrail.convmodel import (LrParams, SeedList, Split, evaluate_pipeline,
                               PROV_INITIAL, PROV_MANUAL, prov_iteration)
from cotrail.datamodel import TrailCorpus
from cotrail.embed import EmbeddingTable


@dataclass
class ExpansionParams:
    delta_sim: float = 0.5            # cosine threshold for "close"
    delta_nbr: int = 2                # minimum close seed members
    epsilon: float = 0.001            # minimum AUC improvement to accept
    max_iterations: int = 10
    k_initial: int = 50
    label_window_seconds: int = 60 * 86400
    min_support: int = 5

    def validate(self) -> None:
        if not 0.0 < self.delta_sim < 1.0:
            raise ValueError(f"delta_sim must be in (0,1), got {self.delta_sim}")
        if self.delta_nbr < 1:
            raise ValueError(f"delta_nbr must be >= 1, got {self.delta_nbr}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.k_initial < 1:
            raise ValueError(f"k_initial must be >= 1, got {self.k_initial}")
        if self.label_window_seconds <= 0:
            raise ValueError("label_window_seconds must be positive")
        if self.min_support < 1:
            raise ValueError(f"min_support must be >= 1, got {self.min_support}")


def conversion_rate(activity: str, corpus: TrailCorpus,
                    window_seconds: int) -> tuple[float, int]:
    """(rate, support) for one activity.

    Support counts users with at least one occurrence; the numerator counts
    those whose own conversion happens within ``window_seconds`` after some
    occurrence.  Zero support reports (0.0, 0).
    """
    if activity not in corpus.vocabulary:
        raise ValueError(f"unknown activity: {activity!r}")
    support = 0
    hits = 0
    for user in corpus.users():
        times = [ev.timestamp for ev in corpus.trails[user].events
                 if ev.activity == activity]
        if not times:
            continue
        support += 1
        label = corpus.labels[user]
        if label.converted and any(
                t <= label.conversion_time <= t + window_seconds for t in times):
            hits += 1
    if support == 0:
        return 0.0, 0
    return hits / support, support


def conversion_rates(corpus: TrailCorpus, window_seconds: int) -> dict[str, tuple[float, int]]:
    """(rate, support) for every activity, in one pass over the corpus."""
    support: dict[str, int] = {}
    hits: dict[str, int] = {}
    for user in corpus.users():
        label = corpus.labels[user]
        seen: set[str] = set()
        qualifying: set[str] = set()
        for ev in corpus.trails[user].events:
            seen.add(ev.activity)
            if (label.converted
                    and ev.timestamp <= label.conversion_time <= ev.timestamp + window_seconds):
                qualifying.add(ev.activity)
        for a in seen:
            support[a] = support.get(a, 0) + 1
        for a in qualifying:
            hits[a] = hits.get(a, 0) + 1
    return {a: (hits.get(a, 0) / n, n) for a, n in support.items()}


def initial_seedlist(corpus: TrailCorpus, params: ExpansionParams,
                     manual_include=(), manual_exclude=()) -> SeedList:
    """Top activities by conversion rate, plus/minus operator overrides.

    Ranking is by (rate desc, support desc, id asc) among activities with
    support >= ``min_support``; conversion-kind activities are never
    eligible.  ``manual_include`` ids are appended after the ranked block,
    ``manual_exclude`` ids are removed before ranking.
    """
    params.validate()
    if not any(lb.converted for lb in corpus.labels.values()):
        raise ValueError("corpus has no converters; cannot rank by conversion rate")
    conv_ids = corpus.conversion_activity_ids()
    excluded = set(manual_exclude) | conv_ids
    rates = conversion_rates(corpus, params.label_window_seconds)
    eligible = [(a, r, n) for a, (r, n) in rates.items()
                if n >= params.min_support and a not in excluded]
    if not eligible and not manual_include:
        raise ValueError(
            f"no activity reaches min_support={params.min_support}; cannot build a seed list")
    eligible.sort(key=lambda t: (-t[1], -t[2], t[0]))
    ranked = [a for a, _, _ in eligible[:params.k_initial]]
    seed = SeedList(activities=ranked,
                    provenance={a: PROV_INITIAL for a in ranked})
    include = [a for a in manual_include if a not in excluded]
    if include:
        seed = seed.extended(include, PROV_MANUAL)
    if not len(seed):
        raise ValueError("seed list is empty after exclusions")
    return seed


def neighbors(seed: SeedList, vocab, table: EmbeddingTable,
              index: annindex.LshIndex, delta_sim: float,
              delta_nbr: int) -> set[str]:
    """Activities outside the seed list close to >= delta_nbr seed members.

    Candidates come from the LSH buckets of each seed member; the final
    filter is exact cosine against every seed member, so the index only
    affects which candidates are considered.
    """
    if not len(seed):
        raise ValueError("neighbors() needs a non-empty seed list")
    seed_with_vec = [a for a in seed.activities if a in table.index]
    if not seed_with_vec:
        return set()
    candidates: set[str] = set()
    for a in seed_with_vec:
        candidates |= index.candidates(a)
    eligible = sorted((candidates & set(vocab)) - seed.as_set())
    if not eligible:
        return set()
    eligible = [a for a in eligible if a in table.index]
    if not eligible:
        return set()

    def unit_rows(ids):
        m = np.array([table.vector(a) for a in ids], dtype=np.float64)
        return m / np.linalg.norm(m, axis=1, keepdims=True)

    sims = unit_rows(eligible) @ unit_rows(seed_with_vec).T
    close_counts = (sims > delta_sim).sum(axis=1)
    return {a for a, n in zip(eligible, close_counts) if n >= delta_nbr}


def brute_force_neighbors(seed: SeedList, vocab, table: EmbeddingTable,
                          delta_sim: float, delta_nbr: int) -> set[str]:
    """Exact double loop over (vocab x seed); the oracle for :func:`neighbors`."""
    from cotrail.embed import cosine
    seed_vecs = [(a, table.vector(a)) for a in seed.activities if a in table.index]
    out = set()
    for a in vocab:
        if a in seed or a not in table.index:
            continue
        va = table.vector(a)
        n_close = sum(1 for _, vs in seed_vecs if cosine(va, vs) > delta_sim)
        if n_close >= delta_nbr:
            out.add(a)
    return out


@dataclass
class IterationRecord:
    iteration: int
    n_activities: int     # size of the accepted list, or of the rejected candidate
    n_new: int
    auc: float
    accepted: bool


@dataclass
class ExpansionTrace:
    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""

    def aucs(self) -> list[float]:
        return [r.auc for r in self.records]


def write_trace_csv(trace: ExpansionTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "n_activities", "n_new", "auc", "accepted"])
        for r in trace.records:
            writer.writerow([r.iteration, r.n_activities, r.n_new,
                             f"{r.auc:.6f}", str(r.accepted).lower()])


def adaptive_planes(vocab_size: int, target_bucket: int = 24) -> int:
    """Plane count giving roughly ``target_bucket`` ids per bucket."""
    if vocab_size <= target_bucket:
        return 1
    return max(1, min(annindex.MAX_PLANES,
                      int(np.ceil(np.log2(vocab_size / target_bucket)))))


def eligible_vocabulary(corpus: TrailCorpus) -> list[str]:
    """Corpus activities that may enter a seed list (conversion kinds out)."""
    return sorted(corpus.vocabulary - corpus.conversion_activity_ids())


def expand(corpus: TrailCorpus, s_initial: SeedList, params: ExpansionParams,
           table: EmbeddingTable, split: Split,
           lr_params: LrParams | None = None,
           index: annindex.LshIndex | None = None,
           eval_fn=None, neighbors_fn=None) -> tuple[SeedList, ExpansionTrace]:
    """AUC-gated iterative expansion of ``s_initial``.

    Each iteration gathers the current list's embedding neighbors and keeps
    them only if validation AUC improves by more than ``epsilon`` over the
    previous iteration.  Returns the last accepted list and the full trace;
    the returned list never contains a rejected neighbor batch.

    ``eval_fn(seed) -> auc`` and ``neighbors_fn(seed) -> set`` are
    injectable for replay tests; the defaults evaluate the conversion
    pipeline on the validation partition and query the LSH index.
    """
    params.validate()
    if not len(s_initial):
        raise ValueError("expansion needs a non-empty initial seed list")
    lr_params = lr_params or LrParams()

    if eval_fn is None:
        def eval_fn(seed):
            return evaluate_pipeline(corpus, seed, split, lr_params,
                                     partition="validation").auc
    if neighbors_fn is None:
        if index is None:
            index = annindex.build(table, n_tables=16,
                                   n_planes=adaptive_planes(len(table)),
                                   rng_seed=lr_params.rng_seed)
        vocab = eligible_vocabulary(corpus)

        def neighbors_fn(seed):
            return neighbors(seed, vocab, table, index,
                             params.delta_sim, params.delta_nbr)

    current = s_initial
    auc_prev = eval_fn(current)
    trace = ExpansionTrace()
    trace.records.append(IterationRecord(0, len(current), 0, auc_prev, True))
    i = 1
    while True:
        if i > params.max_iterations:
            trace.stop_reason = "max_iterations"
            break
        new_ids = set(neighbors_fn(current)) - current.as_set()
        if not new_ids:
            trace.records.append(IterationRecord(i, len(current), 0, auc_prev, False))
            trace.stop_reason = "no_candidates"
            break
        candidate = current.extended(new_ids, prov_iteration(i))
        auc_i = eval_fn(candidate)
        if auc_i > auc_prev + params.epsilon:
            current = candidate
            trace.records.append(IterationRecord(i, len(current), len(new_ids),
                                                 auc_i, True))
            auc_prev = auc_i
            i += 1
        else:
            trace.records.append(IterationRecord(i, len(candidate), len(new_ids),
                                                 auc_i, False))
            trace.stop_reason = "no_improvement"
            break
    return current, trace
