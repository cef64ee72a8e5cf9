"""Core domain types, the trail-corpus container, sessionization and file IO.

A corpus is stored as JSON Lines, one object per user::

    {"user": str, "clusters": [str], "converted": bool,
     "conv_time": int | null,
     "events": [{"a": str, "t": int, "k": str}, ...]}

Files are UTF-8 with LF line endings.  Timestamps are integer seconds.
Corpus values are treated as immutable after load; nothing in the pipeline
mutates a corpus in place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

EVENT_KINDS = ("search", "site_visit", "content_view", "ad_interaction", "conversion")

#: Split a trail into sessions wherever two consecutive events are at least
#: this many seconds apart (30 minutes).
DEFAULT_SESSION_GAP_SECONDS = 1800


class CorpusFormatError(ValueError):
    """A corpus file violates the line-oriented schema."""


@dataclass(frozen=True, slots=True)
class Event:
    activity: str
    timestamp: int
    kind: str = "site_visit"
    description: str = ""


@dataclass(slots=True)
class UserTrail:
    user: str
    events: list[Event]


@dataclass(slots=True)
class ConversionLabel:
    user: str
    converted: bool
    conversion_time: int | None = None


class TrailCorpus:
    """All users' trails plus cluster membership and conversion labels.

    ``clusters`` maps each user id to the set of cluster ids the user
    belongs to (multi-cluster users are allowed, singleton clusters are
    allowed).  ``vocabulary`` is always recomputed from the trails.
    """

    def __init__(self, trails: dict[str, UserTrail],
                 clusters: dict[str, frozenset[str]],
                 labels: dict[str, ConversionLabel]):
        if set(trails) != set(labels) or set(trails) != set(clusters):
            raise ValueError("trails, clusters and labels must cover the same user ids")
        self.trails = trails
        self.clusters = clusters
        self.labels = labels
        self.vocabulary: frozenset[str] = frozenset(
            ev.activity for tr in trails.values() for ev in tr.events)
        self._members: dict[str, tuple[str, ...]] | None = None
        self._activity_sets: dict[str, frozenset[str]] | None = None

    def users(self) -> list[str]:
        return sorted(self.trails)

    def cluster_ids(self) -> list[str]:
        return sorted({c for cs in self.clusters.values() for c in cs})

    def members_of(self, cluster_id: str) -> tuple[str, ...]:
        """Users belonging to ``cluster_id``, sorted (cached reverse index)."""
        if self._members is None:
            rev: dict[str, list[str]] = {}
            for user in self.users():
                for c in sorted(self.clusters[user]):
                    rev.setdefault(c, []).append(user)
            self._members = {c: tuple(sorted(us)) for c, us in rev.items()}
        try:
            return self._members[cluster_id]
        except KeyError:
            raise KeyError(f"unknown cluster id: {cluster_id!r}") from None

    def activity_set(self, user: str) -> frozenset[str]:
        """Distinct non-conversion activities in the user's trail (cached)."""
        if self._activity_sets is None:
            self._activity_sets = {
                u: frozenset(ev.activity for ev in tr.events if ev.kind != "conversion")
                for u, tr in self.trails.items()
            }
        return self._activity_sets[user]

    def conversion_activity_ids(self) -> frozenset[str]:
        return frozenset(ev.activity for tr in self.trails.values()
                         for ev in tr.events if ev.kind == "conversion")

    def time_range(self) -> tuple[int, int]:
        """(min, max) timestamp over all events; (0, 0) for an all-empty corpus."""
        times = [ev.timestamp for tr in self.trails.values() for ev in tr.events]
        if not times:
            return (0, 0)
        return (min(times), max(times))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrailCorpus):
            return NotImplemented
        return (self.trails == other.trails
                and self.clusters == other.clusters
                and self.labels == other.labels)

    def __repr__(self) -> str:
        return (f"TrailCorpus(users={len(self.trails)}, "
                f"clusters={len(self.cluster_ids())}, "
                f"vocabulary={len(self.vocabulary)})")


def sessionize(trail: UserTrail, gap_seconds: int = DEFAULT_SESSION_GAP_SECONDS) -> list[list[Event]]:
    """Partition a trail into sessions at gaps of ``gap_seconds`` or more.

    The concatenation of the returned sessions is exactly ``trail.events``:
    intra-session gaps are < ``gap_seconds`` and the gap between the last
    event of one session and the first of the next is >= ``gap_seconds``.
    """
    if gap_seconds <= 0:
        raise ValueError(f"gap_seconds must be positive, got {gap_seconds}")
    sessions: list[list[Event]] = []
    current: list[Event] = []
    prev_t: int | None = None
    for ev in trail.events:
        if prev_t is not None and ev.timestamp - prev_t >= gap_seconds:
            sessions.append(current)
            current = []
        current.append(ev)
        prev_t = ev.timestamp
    if current:
        sessions.append(current)
    return sessions


def _parse_activity(value, lineno: int, where: str) -> str:
    if not isinstance(value, str) or not value or any(c.isspace() for c in value):
        raise CorpusFormatError(
            f"line {lineno}: field {where}: activity id must be a non-empty "
            f"string without whitespace, got {value!r}")
    return value


def _parse_event(obj, lineno: int, pos: int) -> Event:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"line {lineno}: field events[{pos}]: expected object")
    for key in ("a", "t", "k"):
        if key not in obj:
            raise CorpusFormatError(f"line {lineno}: field events[{pos}].{key}: missing")
    activity = _parse_activity(obj["a"], lineno, f"events[{pos}].a")
    t = obj["t"]
    if isinstance(t, bool) or not isinstance(t, int) or t < 0:
        raise CorpusFormatError(
            f"line {lineno}: field events[{pos}].t: expected non-negative integer, got {t!r}")
    kind = obj["k"]
    if kind not in EVENT_KINDS:
        raise CorpusFormatError(
            f"line {lineno}: field events[{pos}].k: unknown kind {kind!r}")
    return Event(activity=activity, timestamp=t, kind=kind,
                 description=obj.get("d", ""))


def _parse_record(line: str, lineno: int) -> tuple[UserTrail, frozenset[str], ConversionLabel]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"line {lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"line {lineno}: expected a JSON object")
    for key in ("user", "clusters", "converted", "conv_time", "events"):
        if key not in obj:
            raise CorpusFormatError(f"line {lineno}: field {key}: missing")
    user = obj["user"]
    if not isinstance(user, str) or not user:
        raise CorpusFormatError(f"line {lineno}: field user: must be a non-empty string")
    clusters = obj["clusters"]
    if (not isinstance(clusters, list) or not clusters
            or not all(isinstance(c, str) and c for c in clusters)):
        raise CorpusFormatError(
            f"line {lineno}: field clusters: expected non-empty list of non-empty strings")
    converted = obj["converted"]
    if not isinstance(converted, bool):
        raise CorpusFormatError(f"line {lineno}: field converted: expected boolean")
    conv_time = obj["conv_time"]
    if converted:
        if isinstance(conv_time, bool) or not isinstance(conv_time, int):
            raise CorpusFormatError(
                f"line {lineno}: field conv_time: required integer when converted is true")
    elif conv_time is not None:
        raise CorpusFormatError(
            f"line {lineno}: field conv_time: must be null when converted is false")
    raw_events = obj["events"]
    if not isinstance(raw_events, list):
        raise CorpusFormatError(f"line {lineno}: field events: expected list")
    events = [_parse_event(e, lineno, i) for i, e in enumerate(raw_events)]
    for i in range(1, len(events)):
        if events[i].timestamp < events[i - 1].timestamp:
            raise CorpusFormatError(
                f"line {lineno}: field events[{i}].t: timestamps must be non-decreasing")
    label = ConversionLabel(user=user, converted=converted,
                            conversion_time=conv_time if converted else None)
    return UserTrail(user=user, events=events), frozenset(clusters), label


def load_corpus(path) -> TrailCorpus:
    """Load a JSON Lines corpus, validating each record.

    Raises :class:`CorpusFormatError` naming the line number and violated
    field on any malformed record, and on duplicate user ids.
    """
    trails: dict[str, UserTrail] = {}
    clusters: dict[str, frozenset[str]] = {}
    labels: dict[str, ConversionLabel] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            trail, cs, label = _parse_record(line, lineno)
            if trail.user in trails:
                raise CorpusFormatError(f"line {lineno}: duplicate user id {trail.user!r}")
            trails[trail.user] = trail
            clusters[trail.user] = cs
            labels[trail.user] = label
    return TrailCorpus(trails=trails, clusters=clusters, labels=labels)


def save_corpus(corpus: TrailCorpus, path) -> None:
    """Write a corpus as JSON Lines, one user per line, sorted by user id."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for user in corpus.users():
            trail = corpus.trails[user]
            label = corpus.labels[user]
            rec = {
                "user": user,
                "clusters": sorted(corpus.clusters[user]),
                "converted": label.converted,
                "conv_time": label.conversion_time,
                "events": [
                    {"a": ev.activity, "t": ev.timestamp, "k": ev.kind}
                    if not ev.description else
                    {"a": ev.activity, "t": ev.timestamp, "k": ev.kind, "d": ev.description}
                    for ev in trail.events
                ],
            }
            fh.write(json.dumps(rec, separators=(",", ":"), sort_keys=False))
            fh.write("\n")
