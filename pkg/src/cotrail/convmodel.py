"""Relevant-user detection, trail augmentation, LR conversion model and AUC.

A user is *relevant* to a seed list when their trail contains at least one
seed activity (conversion events never count).  Augmentation extends a
user's pre-cutoff activity multiset with the pre-cutoff activities of all
relevant users across the clusters the user belongs to.  An empty seed
list therefore reduces augmentation to the user's own trail: that is the
single-trail baseline the pipeline is compared against.

Splits are cluster-level: augmentation shares trails inside a cluster, so
splitting by user would leak evaluation trails into training.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from cotrail._backend import kernels
from cotrail.datamodel import TrailCorpus

PROV_INITIAL = "initial"
PROV_MANUAL = "manual"


def prov_iteration(i: int) -> str:
    return f"iter:{i}"


@dataclass
class SeedList:
    """Ordered, deduplicated activity ids with per-id provenance tags."""

    activities: list[str] = field(default_factory=list)
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.activities)) != len(self.activities):
            raise ValueError("seed list contains duplicate activity ids")
        for a in self.activities:
            self.provenance.setdefault(a, PROV_MANUAL)

    def __len__(self) -> int:
        return len(self.activities)

    def __contains__(self, activity: str) -> bool:
        return activity in self.provenance

    def as_set(self) -> frozenset[str]:
        return frozenset(self.activities)

    def extended(self, new_ids, tag: str) -> "SeedList":
        """A new seed list with ``new_ids`` (sorted, deduped) appended."""
        added = [a for a in sorted(set(new_ids)) if a not in self.provenance]
        prov = dict(self.provenance)
        for a in added:
            prov[a] = tag
        return SeedList(activities=self.activities + added, provenance=prov)

    def at_iteration(self, i: int) -> "SeedList":
        """Restrict to ids present after expansion iteration ``i``."""
        def keep(tag: str) -> bool:
            if not tag.startswith("iter:"):
                return True
            return int(tag.split(":", 1)[1]) <= i
        acts = [a for a in self.activities if keep(self.provenance[a])]
        return SeedList(activities=acts,
                        provenance={a: self.provenance[a] for a in acts})

    def max_iteration(self) -> int:
        tags = [int(t.split(":", 1)[1]) for t in self.provenance.values()
                if t.startswith("iter:")]
        return max(tags, default=0)


def load_seedlist(path) -> SeedList:
    """Plain text, one activity id per line; ``#`` starts a comment.

    A trailing ``# <tag>`` comment on an id line is read back as that id's
    provenance tag; bare ids default to "manual".
    """
    activities: list[str] = []
    provenance: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line, _, comment = raw.partition("#")
            activity = line.strip()
            if not activity:
                continue
            tag = comment.strip()
            activities.append(activity)
            provenance[activity] = tag if tag else PROV_MANUAL
    return SeedList(activities=activities, provenance=provenance)


def save_seedlist(seed: SeedList, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a in seed.activities:
            fh.write(f"{a}  # {seed.provenance[a]}\n")


def validate_seedlist(seed: SeedList, corpus: TrailCorpus) -> None:
    """Reject seed lists that contain conversion-kind activity ids."""
    bad = seed.as_set() & corpus.conversion_activity_ids()
    if bad:
        raise ValueError(f"seed list contains conversion activities: {sorted(bad)}")


def relevant_users(corpus: TrailCorpus, cluster_id: str, seed: SeedList) -> set[str]:
    """Members of the cluster whose trails contain >= 1 seed activity."""
    seed_set = seed.as_set()
    if not seed_set:
        return set()
    return {u for u in corpus.members_of(cluster_id)
            if corpus.activity_set(u) & seed_set}


def _relevant_by_cluster(corpus: TrailCorpus, seed: SeedList) -> dict[str, set[str]]:
    return {c: relevant_users(corpus, c, seed) for c in corpus.cluster_ids()}


def augment(corpus: TrailCorpus, user: str, seed: SeedList,
            cutoff_time: int | None,
            relevant_by_cluster: dict[str, set[str]] | None = None) -> Counter:
    """Multiset of pre-cutoff activities from the user plus relevant users.

    Conversion events are always excluded.  ``cutoff_time=None`` means no
    time restriction; otherwise only events strictly before the cutoff
    count.  ``relevant_by_cluster`` may carry a precomputed map to avoid
    recomputing relevant users per call.
    """
    if user not in corpus.trails:
        raise KeyError(f"unknown user: {user!r}")
    sources = {user}
    for cluster in corpus.clusters[user]:
        if relevant_by_cluster is not None:
            sources |= relevant_by_cluster[cluster]
        else:
            sources |= relevant_users(corpus, cluster, seed)
    bag: Counter = Counter()
    for src in sources:
        for ev in corpus.trails[src].events:
            if ev.kind == "conversion":
                continue
            if cutoff_time is not None and ev.timestamp >= cutoff_time:
                continue
            bag[ev.activity] += 1
    return bag


@dataclass(frozen=True)
class FeatureVector:
    """Presence-encoded activities: sorted vocabulary positions, value 1."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("feature indices must be strictly increasing")


def encode(augmented: Counter, vocab_map: dict[str, int]) -> FeatureVector:
    """Collapse a multiset to presence indices; out-of-vocabulary ids drop."""
    idx = sorted({vocab_map[a] for a in augmented if a in vocab_map})
    return FeatureVector(indices=tuple(idx))


@dataclass
class LrParams:
    learning_rate: float = 0.1
    l2: float = 1e-4
    epochs: int = 10
    rng_seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class LrModel:
    weights: np.ndarray
    bias: float
    hyperparams: LrParams
    loss_history: list[float] = field(default_factory=list)


def _to_csr(examples: list[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.zeros(len(examples) + 1, dtype=np.int64)
    for i, fv in enumerate(examples):
        indptr[i + 1] = indptr[i] + len(fv.indices)
    indices = np.fromiter((j for fv in examples for j in fv.indices),
                          dtype=np.int32, count=int(indptr[-1]))
    return indices, indptr


def lr_example_loss_and_grad(weights: np.ndarray, bias: float,
                             indices, y: float, l2: float):
    """Regularized per-example loss and its exact analytic gradient.

    Loss is ``logloss(sigmoid(bias + sum_i w_i), y) + l2/2 * ||w||^2``;
    returns ``(loss, grad_weights, grad_bias)`` with a dense weight
    gradient.  This is the objective each SGD step in
    :func:`train_lr` descends.
    """
    idx = np.asarray(indices, dtype=np.int64)
    z = bias + float(weights[idx].sum()) if len(idx) else bias
    loss = float(np.logaddexp(0.0, z) - y * z + 0.5 * l2 * float(weights @ weights))
    p = 1.0 / (1.0 + np.exp(-z))
    grad_w = l2 * weights.copy()
    np.add.at(grad_w, idx, p - y)
    return loss, grad_w, float(p - y)


def train_lr(examples, params: LrParams, n_features: int | None = None) -> LrModel:
    """SGD over shuffled examples; deterministic given the seed.

    ``examples`` is a sequence of ``(FeatureVector, label)`` pairs with
    boolean labels.  Raises on single-class data.  ``loss_history[0]`` is
    the mean data log-loss of the initial (zero) model, followed by one
    running-loss entry per epoch.
    """
    params.validate()
    fvs = [fv for fv, _ in examples]
    labels = np.array([1 if y else 0 for _, y in examples], dtype=np.int8)
    if len(labels) == 0 or labels.min() == labels.max():
        raise ValueError("training data must contain both classes")
    if n_features is None:
        n_features = 1 + max((max(fv.indices) for fv in fvs if fv.indices), default=-1)
    indices, indptr = _to_csr(fvs)
    if len(indices) and int(indices.max()) >= n_features:
        raise ValueError("feature index out of range")

    weights = np.zeros(n_features, dtype=np.float64)
    bias = 0.0
    history = [float(kernels.lr_logloss(weights, bias, indices, indptr, labels))]
    rng = np.random.default_rng(params.rng_seed)
    for _ in range(params.epochs):
        order = rng.permutation(len(labels)).astype(np.int64)
        loss, bias = kernels.lr_epoch(weights, bias, indices, indptr, labels,
                                      order, params.learning_rate, params.l2)
        history.append(loss / len(labels))
    return LrModel(weights=weights, bias=float(bias), hyperparams=params,
                   loss_history=history)


def predict(model: LrModel, fv: FeatureVector) -> float:
    """sigmoid(bias + sum of weights at the feature indices)."""
    z = model.bias
    if fv.indices:
        z += float(model.weights[np.asarray(fv.indices, dtype=np.int64)].sum())
    return float(1.0 / (1.0 + np.exp(-z)))


def auc(scores, labels) -> float:
    """Mann-Whitney rank AUC with ties counted 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d sequences")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class Split:
    """Cluster-id partitions; every corpus cluster appears exactly once."""

    train: frozenset[str]
    validation: frozenset[str]
    test: frozenset[str]

    def __post_init__(self):
        parts = [self.train, self.validation, self.test]
        total = sum(len(p) for p in parts)
        if total != len(self.train | self.validation | self.test):
            raise ValueError("split partitions overlap")

    def partition(self, name: str) -> frozenset[str]:
        try:
            return {"train": self.train, "validation": self.validation,
                    "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown partition {name!r}") from None


def make_split(corpus: TrailCorpus, rng_seed: int,
               fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)) -> Split:
    """Shuffle cluster ids and slice by the three fractions."""
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ValueError(f"fractions must be non-negative and sum to 1, got {fractions}")
    ids = corpus.cluster_ids()
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train = int(round(fractions[0] * len(ids)))
    n_val = int(round(fractions[1] * len(ids)))
    return Split(train=frozenset(shuffled[:n_train]),
                 validation=frozenset(shuffled[n_train:n_train + n_val]),
                 test=frozenset(shuffled[n_train + n_val:]))


def split_users(corpus: TrailCorpus, split: Split) -> dict[str, list[str]]:
    """Assign each user to the partition of their smallest cluster id.

    Single-cluster users (the normal case) land with their cluster; a
    multi-cluster user is pinned to one partition so no user is evaluated
    and trained on at once.
    """
    out = {"train": [], "validation": [], "test": []}
    for user in corpus.users():
        home = min(corpus.clusters[user])
        for name in ("train", "validation", "test"):
            if home in split.partition(name):
                out[name].append(user)
                break
        else:
            raise ValueError(f"cluster {home!r} missing from split")
    return out


@dataclass
class PipelineEval:
    auc: float
    n_relevant_per_converted_cluster: float
    n_features: int
    n_train: int = 0
    n_eval: int = 0


def relevant_users_per_converted_cluster(corpus: TrailCorpus, seed: SeedList) -> float:
    """Mean over converted clusters of |relevant members or converters|."""
    rel = _relevant_by_cluster(corpus, seed)
    converted_clusters = sorted({c for u in corpus.users() for c in corpus.clusters[u]
                                 if corpus.labels[u].converted})
    if not converted_clusters:
        return 0.0
    counts = []
    for cluster in converted_clusters:
        members = set(corpus.members_of(cluster))
        converters = {u for u in members if corpus.labels[u].converted}
        counts.append(len(rel[cluster] | converters))
    return float(np.mean(counts))


def _cutoff_times(corpus: TrailCorpus, rng_seed: int) -> dict[str, int]:
    """Converters cut at their conversion time; non-converters at a sampled time."""
    t_min, t_max = corpus.time_range()
    rng = np.random.default_rng(rng_seed)
    cutoffs: dict[str, int] = {}
    for user in corpus.users():
        label = corpus.labels[user]
        if label.converted:
            cutoffs[user] = label.conversion_time
        else:
            cutoffs[user] = int(rng.integers(t_min, t_max + 1))
    return cutoffs


def evaluate_pipeline(corpus: TrailCorpus, seed: SeedList, split: Split,
                      params: LrParams | None = None,
                      partition: str = "test") -> PipelineEval:
    """Train on the train clusters, report AUC on ``partition`` clusters.

    Features are presence encodings of augmented pre-cutoff trails; the
    feature vocabulary comes from the training split only.  Labels are the
    per-user conversion flags.
    """
    params = params or LrParams()
    if partition not in ("validation", "test"):
        raise ValueError(f"partition must be 'validation' or 'test', got {partition!r}")
    validate_seedlist(seed, corpus)
    users = split_users(corpus, split)
    train_users = users["train"]
    eval_users = users[partition]
    if not train_users or not eval_users:
        raise ValueError(f"degenerate split: {len(train_users)} train users, "
                         f"{len(eval_users)} {partition} users")

    vocab = sorted({a for u in train_users for a in corpus.activity_set(u)})
    vocab_map = {a: i for i, a in enumerate(vocab)}
    cutoffs = _cutoff_times(corpus, params.rng_seed)
    rel = _relevant_by_cluster(corpus, seed)

    def features(user: str) -> FeatureVector:
        bag = augment(corpus, user, seed, cutoffs[user], relevant_by_cluster=rel)
        return encode(bag, vocab_map)

    train_examples = [(features(u), corpus.labels[u].converted) for u in train_users]
    model = train_lr(train_examples, params, n_features=len(vocab_map))

    scores = [predict(model, features(u)) for u in eval_users]
    labels = [corpus.labels[u].converted for u in eval_users]
    return PipelineEval(
        auc=auc(scores, labels),
        n_relevant_per_converted_cluster=relevant_users_per_converted_cluster(corpus, seed),
        n_features=len(vocab_map),
        n_train=len(train_users),
        n_eval=len(eval_users),
    )
