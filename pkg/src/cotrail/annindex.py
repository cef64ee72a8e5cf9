"""Random-hyperplane LSH over an embedding table, plus an exact scan oracle.

Signatures are sign patterns of projections onto random unit hyperplanes,
packed into integers.  The index only limits which candidates get scored;
every reported similarity is an exact cosine, and ties always break by
ascending activity id so queries are reproducible.
"""

from __future__ import annotations

import numpy as np

from cotrail.embed import EmbeddingTable

MAX_PLANES = 62  # signatures are packed into a signed 64-bit int


class LshIndex:
    def __init__(self, ids: list[str], unit_vectors: np.ndarray,
                 hyperplanes: np.ndarray, tables: list[dict[int, np.ndarray]],
                 rng_seed: int):
        self.ids = ids
        self.index = {a: i for i, a in enumerate(ids)}
        self.unit_vectors = unit_vectors          # (V, dim) float64, rows unit norm
        self.hyperplanes = hyperplanes            # (n_tables, n_planes, dim)
        self.tables = tables                      # per table: signature -> row indices
        self.rng_seed = rng_seed

    @property
    def n_tables(self) -> int:
        return self.hyperplanes.shape[0]

    @property
    def n_planes(self) -> int:
        return self.hyperplanes.shape[1]

    def _signatures(self, vec: np.ndarray) -> np.ndarray:
        proj = self.hyperplanes @ vec             # (n_tables, n_planes)
        bits = (proj >= 0).astype(np.int64)
        weights = 1 << np.arange(self.n_planes, dtype=np.int64)
        return bits @ weights

    def _query_vector(self, query) -> tuple[np.ndarray, int | None]:
        if isinstance(query, str):
            try:
                row = self.index[query]
            except KeyError:
                raise ValueError(f"unknown activity id: {query!r}") from None
            return self.unit_vectors[row], row
        vec = np.asarray(query, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValueError("cannot query with a zero vector")
        return vec / norm, None

    def candidate_rows(self, query) -> np.ndarray:
        """Union of the query's bucket across tables (the query row excluded)."""
        vec, self_row = self._query_vector(query)
        sigs = self._signatures(vec)
        buckets = []
        for t, sig in enumerate(sigs):
            hit = self.tables[t].get(int(sig))
            if hit is not None:
                buckets.append(hit)
        if not buckets:
            return np.array([], dtype=np.int64)
        rows = np.unique(np.concatenate(buckets))
        if self_row is not None:
            rows = rows[rows != self_row]
        return rows

    def candidates(self, query) -> set[str]:
        return {self.ids[r] for r in self.candidate_rows(query)}


def build(table: EmbeddingTable, n_tables: int = 8, n_planes: int = 16,
          rng_seed: int = 0) -> LshIndex:
    """Index every activity in ``table``; deterministic given ``rng_seed``."""
    if len(table) == 0:
        raise ValueError("cannot index an empty embedding table")
    if n_tables < 1:
        raise ValueError(f"n_tables must be >= 1, got {n_tables}")
    if not 1 <= n_planes <= MAX_PLANES:
        raise ValueError(f"n_planes must be in [1, {MAX_PLANES}], got {n_planes}")

    vectors = table.matrix.astype(np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        bad = table.vocab_order[int(np.argmin(norms))]
        raise ValueError(f"zero vector cannot be indexed: {bad!r}")
    unit = vectors / norms[:, None]

    rng = np.random.default_rng(rng_seed)
    planes = rng.standard_normal((n_tables, n_planes, table.dim))
    planes /= np.linalg.norm(planes, axis=2, keepdims=True)

    weights = 1 << np.arange(n_planes, dtype=np.int64)
    tables: list[dict[int, np.ndarray]] = []
    for t in range(n_tables):
        bits = (unit @ planes[t].T >= 0).astype(np.int64)
        sigs = bits @ weights
        order = np.argsort(sigs, kind="stable")
        bucket_map: dict[int, np.ndarray] = {}
        sorted_sigs = sigs[order]
        bounds = np.flatnonzero(np.diff(sorted_sigs)) + 1
        for chunk in np.split(order, bounds):
            bucket_map[int(sigs[chunk[0]])] = chunk
        tables.append(bucket_map)
    return LshIndex(list(table.vocab_order), unit, planes, tables, rng_seed)


def _rank(index_ids: list[str], unit: np.ndarray, rows: np.ndarray,
          qvec: np.ndarray, k: int) -> list[tuple[str, float]]:
    if len(rows) == 0 or k == 0:
        return []
    sims = unit[rows] @ qvec
    order = sorted(range(len(rows)), key=lambda i: (-sims[i], index_ids[rows[i]]))
    return [(index_ids[rows[i]], float(sims[i])) for i in order[:k]]


def query_topk(index: LshIndex, query, k: int) -> list[tuple[str, float]]:
    """Top-k of the query's LSH candidates by exact cosine, descending.

    ``query`` is an activity id (excluded from its own results) or a raw
    vector.  Fewer than k results are returned when the buckets are small.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    vec, _ = index._query_vector(query)
    rows = index.candidate_rows(query)
    return _rank(index.ids, index.unit_vectors, rows, vec, k)


def exact_topk(table: EmbeddingTable, query, k: int) -> list[tuple[str, float]]:
    """Full-scan top-k by cosine with the same tie rule as :func:`query_topk`."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    vectors = table.matrix.astype(np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero vector in table")
    unit = vectors / norms[:, None]
    self_row = None
    if isinstance(query, str):
        if query not in table.index:
            raise ValueError(f"unknown activity id: {query!r}")
        self_row = table.index[query]
        qvec = unit[self_row]
    else:
        qvec = np.asarray(query, dtype=np.float64)
        qn = float(np.linalg.norm(qvec))
        if qn == 0.0:
            raise ValueError("cannot query with a zero vector")
        qvec = qvec / qn
    rows = np.arange(len(table), dtype=np.int64)
    if self_row is not None:
        rows = rows[rows != self_row]
    return _rank(table.vocab_order, unit, rows, qvec, k)


def recall_at_k(index: LshIndex, table: EmbeddingTable, queries: list[str],
                k: int) -> float:
    """Mean fraction of the exact top-k retrieved by the index, over queries."""
    if not queries:
        raise ValueError("need at least one query")
    total = 0.0
    for q in queries:
        truth = {a for a, _ in exact_topk(table, q, k)}
        if not truth:
            continue
        got = {a for a, _ in query_topk(index, q, k)}
        total += len(truth & got) / len(truth)
    return total / len(queries)
