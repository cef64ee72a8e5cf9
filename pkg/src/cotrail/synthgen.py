"""Synthetic corpus generator with planted ground truth.

Organizations are user clusters of homogeneous size (one owner, a fixed
number of researchers and non-researchers).  Each organization converts
independently with a configurable probability.  In a converting type-2
organization the planted relevant activities appear only in researcher
trails while the conversion event lands in the owner's trail; in a
converting type-1 organization the owner does the research and converts.
Non-converting organizations never contain planted relevant activities.

Every trail is padded with background noise drawn from a heavy-tailed
(Zipf) popularity distribution, and a pool of "near-relevant" distractor
activities is planted: distractors show up inside research sessions at a
low rate but also circulate in everyone's background traffic, so they are
attractive in embedding space yet useless for conversion prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from cotrail.datamodel import ConversionLabel, Event, TrailCorpus, UserTrail

CONVERSION_ACTIVITY = "conv_purchase"

ROLE_OWNER = "owner"
ROLE_RESEARCHER = "researcher"
ROLE_NON_RESEARCHER = "non_researcher"

TYPE1 = "type1"
TYPE2 = "type2"

#: Corpus time horizon: 90 days of integer-second timestamps.
HORIZON_SECONDS = 90 * 86400

_NOISE_KINDS = ("search", "site_visit", "content_view", "ad_interaction")
_NOISE_KIND_CDF = np.cumsum([0.3, 0.4, 0.2, 0.1])


class ConfigError(ValueError):
    """A synthetic-corpus configuration violates its invariants."""


@dataclass
class SynthConfig:
    """Knobs for :func:`generate`.

    ``orgs``/``researchers``/``non_researchers`` fix the cluster layout
    (every organization has exactly one owner, so the organization size is
    ``researchers + non_researchers + 1``).  ``org_conv_prob`` is the
    independent per-organization conversion probability.
    """

    orgs: int = 100
    researchers: int = 1
    non_researchers: int = 1
    org_conv_prob: float = 0.2
    type2_fraction: float = 0.5
    n_relevant: int = 20
    n_noise: int = 1000
    relevant_rate: float = 2.0     # expected relevant activities per research session
    trail_len: float = 40.0        # mean background events per user
    rng_seed: int = 0
    # distractor / co-occurrence shape (see module docstring)
    n_distractor: int | None = None      # defaults to n_relevant
    research_sessions: int = 3           # research sessions per converting researcher
    interest_size: int = 4               # planted activities each org researches
    distractor_session_rate: float = 0.05  # expected distractors per research session
    background_distractor_share: float = 0.3  # share of noise events that are distractors

    @property
    def org_size(self) -> int:
        return self.researchers + self.non_researchers + 1

    @property
    def user_conv_prob(self) -> float:
        return self.org_conv_prob / self.org_size

    @property
    def distractors(self) -> int:
        return self.n_relevant if self.n_distractor is None else self.n_distractor

    def validate(self) -> None:
        if self.orgs < 1:
            raise ConfigError(f"field orgs: must be >= 1, got {self.orgs}")
        if self.researchers < 1:
            if self.type2_fraction > 0:
                raise ConfigError(
                    f"field researchers: type2_fraction={self.type2_fraction} "
                    "requires at least one researcher per organization")
            raise ConfigError(f"field researchers: must be >= 1, got {self.researchers}")
        if self.non_researchers < 0:
            raise ConfigError(f"field non_researchers: must be >= 0, got {self.non_researchers}")
        if not 0.0 <= self.org_conv_prob <= 1.0:
            raise ConfigError(f"field p_o: must be in [0,1], got {self.org_conv_prob}")
        if not 0.0 <= self.type2_fraction <= 1.0:
            raise ConfigError(f"field type2_fraction: must be in [0,1], got {self.type2_fraction}")
        if self.n_relevant < 1:
            raise ConfigError(f"field n_relevant: must be >= 1, got {self.n_relevant}")
        if self.n_noise < 1:
            raise ConfigError(f"field n_noise: must be >= 1, got {self.n_noise}")
        if self.relevant_rate <= 0:
            raise ConfigError(f"field relevant_rate: must be > 0, got {self.relevant_rate}")
        if self.trail_len <= 0:
            raise ConfigError(f"field trail_len: must be > 0, got {self.trail_len}")
        if self.interest_size < 1:
            raise ConfigError(f"field interest_size: must be >= 1, got {self.interest_size}")
        if self.research_sessions < 1:
            raise ConfigError(f"field research_sessions: must be >= 1, got {self.research_sessions}")


@dataclass
class GroundTruth:
    """What the generator planted: relevant/distractor ids, roles, org types."""

    relevant_activities: set[str]
    distractor_activities: set[str]
    roles: dict[str, str]       # user id -> owner | researcher | non_researcher
    org_types: dict[str, str]   # cluster id -> type1 | type2


def save_truth(truth: GroundTruth, path) -> None:
    obj = {
        "relevant_activities": sorted(truth.relevant_activities),
        "distractor_activities": sorted(truth.distractor_activities),
        "roles": dict(sorted(truth.roles.items())),
        "org_types": dict(sorted(truth.org_types.items())),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_truth(path) -> GroundTruth:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return GroundTruth(
        relevant_activities=set(obj["relevant_activities"]),
        distractor_activities=set(obj["distractor_activities"]),
        roles=dict(obj["roles"]),
        org_types=dict(obj["org_types"]),
    )


def _sample_noise_ids(rng: np.random.Generator, n: int, bg_cdf: np.ndarray,
                      bg_ids: list[str], near_ids: list[str],
                      near_share: float) -> list[str]:
    """Background activity ids: Zipf-popular noise with a sprinkle of distractors."""
    picks = np.searchsorted(bg_cdf, rng.random(n), side="right")
    ids = [bg_ids[i] for i in picks]
    if near_ids and near_share > 0:
        mask = rng.random(n) < near_share
        if mask.any():
            repl = rng.integers(0, len(near_ids), size=int(mask.sum()))
            j = 0
            for i in np.flatnonzero(mask):
                ids[i] = near_ids[repl[j]]
                j += 1
    return ids


def _noise_events(rng: np.random.Generator, cfg: SynthConfig, bg_cdf: np.ndarray,
                  bg_ids: list[str], near_ids: list[str]) -> list[Event]:
    n = max(2, int(rng.poisson(cfg.trail_len)))
    times = np.sort(rng.integers(0, HORIZON_SECONDS, size=n))
    ids = _sample_noise_ids(rng, n, bg_cdf, bg_ids, near_ids,
                            cfg.background_distractor_share)
    kind_picks = np.searchsorted(_NOISE_KIND_CDF, rng.random(n), side="right")
    return [Event(activity=a, timestamp=int(t), kind=_NOISE_KINDS[min(k, 3)])
            for a, t, k in zip(ids, times, kind_picks)]


def _research_sessions(rng: np.random.Generator, cfg: SynthConfig,
                       interest: list[str], near_ids: list[str],
                       latest: int) -> list[Event]:
    """Bursts of relevant (plus occasional distractor) activity before ``latest``.

    Every call yields at least one relevant activity per session, so any
    researcher of a converting organization carries the relevant signal.
    """
    events: list[Event] = []
    for _ in range(cfg.research_sessions):
        start = int(rng.integers(0, max(1, latest)))
        n_rel = max(1, int(rng.poisson(cfg.relevant_rate)))
        ids = [interest[i] for i in rng.integers(0, len(interest), size=n_rel)]
        n_near = int(rng.poisson(cfg.distractor_session_rate))
        if near_ids and n_near:
            ids.extend(near_ids[i] for i in rng.integers(0, len(near_ids), size=n_near))
        gaps = rng.integers(5, 300, size=len(ids))
        t = start
        for a, g in zip(ids, gaps):
            events.append(Event(activity=a, timestamp=int(t), kind="search"))
            t += int(g)
    return events


def generate(config: SynthConfig) -> tuple[TrailCorpus, GroundTruth]:
    """Generate a corpus plus ground truth, fully determined by ``rng_seed``."""
    config.validate()
    rng = np.random.default_rng(config.rng_seed)

    rel_ids = [f"rel_{i:04d}" for i in range(config.n_relevant)]
    near_ids = [f"near_{i:04d}" for i in range(config.distractors)]
    bg_ids = [f"bg_{i:05d}" for i in range(config.n_noise)]
    zipf_w = 1.0 / np.arange(1, config.n_noise + 1, dtype=float)
    bg_cdf = np.cumsum(zipf_w / zipf_w.sum())

    is_type2 = rng.random(config.orgs) < config.type2_fraction
    converts = rng.random(config.orgs) < config.org_conv_prob

    trails: dict[str, UserTrail] = {}
    clusters: dict[str, frozenset[str]] = {}
    labels: dict[str, ConversionLabel] = {}
    roles: dict[str, str] = {}
    org_types: dict[str, str] = {}

    for o in range(config.orgs):
        cluster = f"org{o:05d}"
        org_types[cluster] = TYPE2 if is_type2[o] else TYPE1
        owner = f"{cluster}_own"
        res_users = [f"{cluster}_res{i}" for i in range(config.researchers)]
        non_users = [f"{cluster}_non{i}" for i in range(config.non_researchers)]
        members = [owner, *res_users, *non_users]
        for u in res_users:
            roles[u] = ROLE_RESEARCHER
        for u in non_users:
            roles[u] = ROLE_NON_RESEARCHER
        roles[owner] = ROLE_OWNER

        conv_time = None
        interest: list[str] = []
        if converts[o]:
            conv_time = int(rng.integers(int(0.6 * HORIZON_SECONDS), HORIZON_SECONDS))
            size = min(config.interest_size, config.n_relevant)
            interest = [rel_ids[i] for i in rng.choice(config.n_relevant, size=size,
                                                       replace=False)]
        research_deadline = (conv_time - 86400) if conv_time else 0

        for u in members:
            events = _noise_events(rng, config, bg_cdf, bg_ids, near_ids)
            if converts[o]:
                is_researcher = (u in res_users) if is_type2[o] else (u == owner)
                if is_researcher:
                    events.extend(_research_sessions(rng, config, interest, near_ids,
                                                     research_deadline))
                if u == owner:
                    events.append(Event(activity=CONVERSION_ACTIVITY,
                                        timestamp=conv_time, kind="conversion"))
            events.sort(key=lambda ev: ev.timestamp)
            trails[u] = UserTrail(user=u, events=events)
            clusters[u] = frozenset({cluster})
            if u == owner and converts[o]:
                labels[u] = ConversionLabel(user=u, converted=True, conversion_time=conv_time)
            else:
                labels[u] = ConversionLabel(user=u, converted=False)

    corpus = TrailCorpus(trails=trails, clusters=clusters, labels=labels)
    truth = GroundTruth(relevant_activities=set(rel_ids),
                        distractor_activities=set(near_ids),
                        roles=roles, org_types=org_types)
    return corpus, truth


def demo_two_org_corpus() -> tuple[TrailCorpus, GroundTruth]:
    """The hard-coded six-user, two-organization demo corpus.

    Organization 1 converts: its researcher performs the single relevant
    activity and its owner carries the conversion event.  Organization 2
    does nothing relevant and does not convert.  One converter among six
    users gives an empirical per-user conversion rate of 1/6.
    """
    day = 86400
    rel = "rel_research"

    def bg(user, *times):
        return [Event(activity=f"bg_{user}_{i}", timestamp=t, kind="site_visit")
                for i, t in enumerate(times)]

    trails = {
        "org1_own": UserTrail("org1_own", sorted(
            bg("org1_own", 2 * day, 3 * day)
            + [Event(activity=CONVERSION_ACTIVITY, timestamp=5 * day, kind="conversion")],
            key=lambda ev: ev.timestamp)),
        "org1_res": UserTrail("org1_res", sorted(
            bg("org1_res", day)
            + [Event(activity=rel, timestamp=2 * day + 600, kind="search")],
            key=lambda ev: ev.timestamp)),
        "org1_non": UserTrail("org1_non", bg("org1_non", day + 50, 4 * day)),
        "org2_own": UserTrail("org2_own", bg("org2_own", day, 6 * day)),
        "org2_res": UserTrail("org2_res", bg("org2_res", 2 * day, 5 * day)),
        "org2_non": UserTrail("org2_non", bg("org2_non", 3 * day)),
    }
    clusters = {u: frozenset({u.split("_")[0]}) for u in trails}
    labels = {u: ConversionLabel(user=u, converted=False) for u in trails}
    labels["org1_own"] = ConversionLabel(user="org1_own", converted=True,
                                         conversion_time=5 * day)
    corpus = TrailCorpus(trails=trails, clusters=clusters, labels=labels)
    truth = GroundTruth(
        relevant_activities={rel},
        distractor_activities=set(),
        roles={"org1_own": ROLE_OWNER, "org1_res": ROLE_RESEARCHER,
               "org1_non": ROLE_NON_RESEARCHER, "org2_own": ROLE_OWNER,
               "org2_res": ROLE_RESEARCHER, "org2_non": ROLE_NON_RESEARCHER},
        org_types={"org1": TYPE2, "org2": TYPE2},
    )
    return corpus, truth


@dataclass
class CorpusStats:
    n_users: int
    n_converters: int
    user_conv_rate: float          # converters / users
    n_converted_clusters: int
    relevant_users_per_converted_cluster: float  # converters included

    def as_dict(self) -> dict:
        return asdict(self)


def empirical_stats(corpus: TrailCorpus, truth: GroundTruth) -> CorpusStats:
    """Direct counts over a generated corpus against its ground truth.

    The per-cluster relevant-user count includes converters, matching the
    reporting convention used by the evaluation pipeline.
    """
    users = corpus.users()
    converters = [u for u in users if corpus.labels[u].converted]
    converted_clusters = sorted({c for u in converters for c in corpus.clusters[u]})
    counts = []
    for cluster in converted_clusters:
        n = 0
        for u in corpus.members_of(cluster):
            if corpus.labels[u].converted or (corpus.activity_set(u) & truth.relevant_activities):
                n += 1
        counts.append(n)
    mean_rel = float(np.mean(counts)) if counts else 0.0
    return CorpusStats(
        n_users=len(users),
        n_converters=len(converters),
        user_conv_rate=len(converters) / len(users) if users else 0.0,
        n_converted_clusters=len(converted_clusters),
        relevant_users_per_converted_cluster=mean_rel,
    )
