import json

import numpy as np
import pytest

from cotrail.datamodel import (CorpusFormatError, ConversionLabel, Event,
                               TrailCorpus, UserTrail, load_corpus,
                               save_corpus, sessionize)


def trail_at(times, user="u"):
    return UserTrail(user=user, events=[
        Event(activity=f"a{i}", timestamp=t) for i, t in enumerate(times)])


def naive_session_split(times, gap):
    """Independent one-pass reference: split indices wherever gap >= threshold."""
    sessions, current = [], []
    for i, t in enumerate(times):
        if current and t - times[i - 1] >= gap:
            sessions.append(current)
            current = []
        current.append(i)
    if current:
        sessions.append(current)
    return sessions


class TestSessionize:
    def test_all_gaps_below_threshold_single_session(self):
        sessions = sessionize(trail_at([0, 100, 1500]), gap_seconds=1800)
        assert [[e.timestamp for e in s] for s in sessions] == [[0, 100, 1500]]

    def test_gap_at_threshold_splits(self):
        sessions = sessionize(trail_at([0, 100, 2000]), gap_seconds=1800)
        assert [[e.timestamp for e in s] for s in sessions] == [[0, 100], [2000]]

    def test_empty_trail(self):
        assert sessionize(trail_at([])) == []

    def test_matches_naive_scan_on_random_gaps(self):
        rng = np.random.default_rng(0)
        gaps = rng.integers(0, 4000, size=10_000)
        times = np.cumsum(gaps).tolist()
        trail = trail_at(times)
        got = sessionize(trail, gap_seconds=1800)
        expected = naive_session_split(times, 1800)
        got_idx = [[trail.events.index(e) for e in s] for s in got]
        assert got_idx == expected

    def test_partition_property_random_corpora(self):
        # no event lost, duplicated or reordered, for several seeds and gaps
        for seed in range(5):
            rng = np.random.default_rng(seed)
            times = np.cumsum(rng.integers(0, 3000, size=500)).tolist()
            trail = trail_at(times)
            gap = int(rng.integers(1, 2500))
            sessions = sessionize(trail, gap_seconds=gap)
            flat = [e for s in sessions for e in s]
            assert flat == trail.events
            for s in sessions:
                for a, b in zip(s, s[1:]):
                    assert b.timestamp - a.timestamp < gap
            for s1, s2 in zip(sessions, sessions[1:]):
                assert s2[0].timestamp - s1[-1].timestamp >= gap

    def test_rejects_non_positive_gap(self):
        with pytest.raises(ValueError):
            sessionize(trail_at([0, 1]), gap_seconds=0)


def small_corpus():
    trails = {
        "alice": UserTrail("alice", [Event("search_widgets", 100, "search"),
                                     Event("visit_shop", 2500, "site_visit"),
                                     Event("conv_x", 9000, "conversion")]),
        "bob": UserTrail("bob", [Event("read_news", 50, "content_view")]),
        "carol": UserTrail("carol", [Event("search_widgets", 300, "search")]),
    }
    clusters = {
        "alice": frozenset({"org_a", "org_b"}),
        "bob": frozenset({"org_a"}),
        "carol": frozenset({"org_c"}),
    }
    labels = {
        "alice": ConversionLabel("alice", True, 9000),
        "bob": ConversionLabel("bob", False),
        "carol": ConversionLabel("carol", False),
    }
    return TrailCorpus(trails, clusters, labels)


class TestCorpusIO:
    def test_round_trip_identity(self, tmp_path):
        corpus = small_corpus()
        path = tmp_path / "c.jsonl"
        save_corpus(corpus, path)
        assert load_corpus(path) == corpus

    def test_multi_cluster_membership_preserved(self, tmp_path):
        corpus = small_corpus()
        path = tmp_path / "c.jsonl"
        save_corpus(corpus, path)
        again = load_corpus(path)
        assert again.clusters["alice"] == frozenset({"org_a", "org_b"})

    def test_missing_timestamp_names_line_and_field(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rec = {"user": "u1", "clusters": ["c"], "converted": False,
               "conv_time": None, "events": [{"a": "x", "k": "search"}]}
        path.write_text(json.dumps(rec) + "\n")
        with pytest.raises(CorpusFormatError, match=r"line 1.*events\[0\]\.t"):
            load_corpus(path)

    def test_duplicate_user_rejected(self, tmp_path):
        rec = {"user": "u1", "clusters": ["c"], "converted": False,
               "conv_time": None, "events": []}
        path = tmp_path / "dup.jsonl"
        path.write_text(json.dumps(rec) + "\n" + json.dumps(rec) + "\n")
        with pytest.raises(CorpusFormatError, match="line 2.*duplicate"):
            load_corpus(path)

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"user": "u1"\n')
        with pytest.raises(CorpusFormatError, match="line 1"):
            load_corpus(path)

    def test_conv_time_consistency_enforced(self, tmp_path):
        rec = {"user": "u1", "clusters": ["c"], "converted": True,
               "conv_time": None, "events": []}
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(rec) + "\n")
        with pytest.raises(CorpusFormatError, match="conv_time"):
            load_corpus(path)

    def test_unsorted_events_rejected(self, tmp_path):
        rec = {"user": "u1", "clusters": ["c"], "converted": False,
               "conv_time": None,
               "events": [{"a": "x", "t": 10, "k": "search"},
                          {"a": "y", "t": 5, "k": "search"}]}
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(rec) + "\n")
        with pytest.raises(CorpusFormatError, match="non-decreasing"):
            load_corpus(path)

    def test_unknown_kind_rejected(self, tmp_path):
        rec = {"user": "u1", "clusters": ["c"], "converted": False,
               "conv_time": None, "events": [{"a": "x", "t": 1, "k": "nope"}]}
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(rec) + "\n")
        with pytest.raises(CorpusFormatError, match=r"events\[0\]\.k"):
            load_corpus(path)


class TestCorpusInvariants:
    def test_vocabulary_matches_trails(self):
        corpus = small_corpus()
        recomputed = {ev.activity for tr in corpus.trails.values() for ev in tr.events}
        assert corpus.vocabulary == recomputed

    def test_user_sets_must_agree(self):
        trails = {"a": UserTrail("a", [])}
        labels = {"b": ConversionLabel("b", False)}
        with pytest.raises(ValueError):
            TrailCorpus(trails, {"a": frozenset({"c"})}, labels)

    def test_members_of_reverse_index(self):
        corpus = small_corpus()
        assert corpus.members_of("org_a") == ("alice", "bob")
        with pytest.raises(KeyError):
            corpus.members_of("nope")

    def test_activity_set_excludes_conversion_events(self):
        corpus = small_corpus()
        assert corpus.activity_set("alice") == {"search_widgets", "visit_shop"}

    def test_conversion_activity_ids(self):
        assert small_corpus().conversion_activity_ids() == {"conv_x"}

    def test_time_range(self):
        assert small_corpus().time_range() == (50, 9000)
