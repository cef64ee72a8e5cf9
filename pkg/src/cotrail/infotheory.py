"""Conditional-entropy analysis of trail augmentation, closed-form and empirical.

Per-user binary variables: C = 1 when the user converts, R = 1 when the
relevant activity is present in the user's trail (own trail, or augmented
trail after augmentation).  Under the homogeneous-organization model — one
owner, ``researchers`` researchers, org conversion probability ``p`` and a
relevant activity done by every researcher of a converting organization —
the conditional entropy H(C|R) in bits is

    before augmentation:  H(B(p / (s - r*p))) * (1 - r*p/s)
    after augmentation:   H(B(1/s)) * p

where ``s`` is the organization size and B a Bernoulli distribution.  All
entropies are base-2.  Note the unweighted conditional term before
augmentation, H(B(p/(s - r*p))), is larger than the weighted value; the
empirical report exposes both so the two numbers are not conflated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from cotrail.convmodel import SeedList, augment, _relevant_by_cluster
from cotrail.datamodel import TrailCorpus


def binary_entropy(p: float) -> float:
    """Entropy in bits of a Bernoulli(p); 0*log(0) is taken as 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must be in [0,1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


@dataclass(frozen=True)
class OrgParams:
    """Homogeneous-organization parameters for the closed forms."""

    org_conv_prob: float   # probability an organization converts
    org_size: int          # users per organization (owner included)
    researchers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.org_conv_prob <= 1.0:
            raise ValueError(f"org_conv_prob must be in [0,1], got {self.org_conv_prob}")
        if self.org_size < 2:
            raise ValueError(f"org_size must be >= 2, got {self.org_size}")
        if not 1 <= self.researchers <= self.org_size - 1:
            raise ValueError(
                f"researchers must be in [1, org_size-1], got {self.researchers}")
        if self.researchers * self.org_conv_prob >= self.org_size:
            raise ValueError("researchers * org_conv_prob must be < org_size")

    @property
    def user_conv_prob(self) -> float:
        return self.org_conv_prob / self.org_size


def cond_entropy_before(params: OrgParams) -> float:
    """H(C|R) in bits when R is read off each user's own trail."""
    p, s, r = params.org_conv_prob, params.org_size, params.researchers
    return binary_entropy(p / (s - r * p)) * (1.0 - r * p / s)


def cond_entropy_after(org_conv_prob: float, org_size: int) -> float:
    """H(C|R) in bits once every member of a converting org carries R=1."""
    if not 0.0 <= org_conv_prob <= 1.0:
        raise ValueError(f"org_conv_prob must be in [0,1], got {org_conv_prob}")
    if org_size < 2:
        raise ValueError(f"org_size must be >= 2, got {org_size}")
    return binary_entropy(1.0 / org_size) * org_conv_prob


@dataclass
class EntropyReport:
    before_bits: float
    after_bits: float
    h_c_bits: float
    # conditional terms behind before_bits: H(C|R=0) unweighted, and P(R=0)
    before_unweighted_bits: float = 0.0
    p_r0: float = 0.0


def _stratified_entropy(pairs) -> tuple[float, float, float]:
    """(H(C|R), H(C|R=0) unweighted, P(R=0)) from (r, c) indicator pairs."""
    n = {0: 0, 1: 0}
    conv = {0: 0, 1: 0}
    total = 0
    for r, c in pairs:
        n[r] += 1
        conv[r] += c
        total += 1
    if total == 0:
        return 0.0, 0.0, 0.0
    h = 0.0
    for v in (0, 1):
        if n[v]:
            h += (n[v] / total) * binary_entropy(conv[v] / n[v])
    h0 = binary_entropy(conv[0] / n[0]) if n[0] else 0.0
    return h, h0, n[0] / total


def empirical_cond_entropy(corpus: TrailCorpus, seed: SeedList,
                           augmented: bool) -> float:
    """Plug-in H(C|R) in bits over the corpus, before or after augmentation."""
    h, _, _ = _empirical(corpus, seed, augmented)
    return h


def _empirical(corpus: TrailCorpus, seed: SeedList, augmented: bool):
    seed_set = seed.as_set()
    rel = _relevant_by_cluster(corpus, seed) if augmented else None
    pairs = []
    for user in corpus.users():
        if augmented:
            bag = augment(corpus, user, seed, cutoff_time=None,
                          relevant_by_cluster=rel)
            r = 1 if seed_set & bag.keys() else 0
        else:
            r = 1 if seed_set & corpus.activity_set(user) else 0
        c = 1 if corpus.labels[user].converted else 0
        pairs.append((r, c))
    return _stratified_entropy(pairs)


def empirical_report(corpus: TrailCorpus, seed: SeedList) -> EntropyReport:
    """Before/after empirical H(C|R) plus the marginal H(C), all in bits."""
    before, before_h0, p_r0 = _empirical(corpus, seed, augmented=False)
    after, _, _ = _empirical(corpus, seed, augmented=True)
    users = corpus.users()
    p_conv = sum(1 for u in users if corpus.labels[u].converted) / len(users)
    return EntropyReport(before_bits=before, after_bits=after,
                         h_c_bits=binary_entropy(p_conv),
                         before_unweighted_bits=before_h0, p_r0=p_r0)


@dataclass(frozen=True)
class SweepRow:
    org_size: int
    before_bits: float
    after_bits: float


def sweep(org_conv_prob: float, researchers: int, org_sizes) -> list[SweepRow]:
    """Closed-form before/after H(C|R) across organization sizes."""
    rows = []
    for s in org_sizes:
        params = OrgParams(org_conv_prob=org_conv_prob, org_size=int(s),
                           researchers=researchers)
        rows.append(SweepRow(org_size=int(s),
                             before_bits=cond_entropy_before(params),
                             after_bits=cond_entropy_after(org_conv_prob, int(s))))
    return rows
