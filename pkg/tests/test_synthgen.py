import numpy as np
import pytest

from cotrail.datamodel import save_corpus
from cotrail.synthgen import (CONVERSION_ACTIVITY, ConfigError, SynthConfig,
                              demo_two_org_corpus, empirical_stats, generate,
                              load_truth, save_truth)


def base_config(**kw):
    defaults = dict(orgs=50, researchers=1, non_researchers=1, org_conv_prob=0.3,
                    type2_fraction=1.0, n_relevant=8, n_noise=100, trail_len=12.0,
                    rng_seed=5)
    defaults.update(kw)
    return SynthConfig(**defaults)


class TestConfigValidation:
    def test_invalid_p_o(self):
        with pytest.raises(ConfigError, match="p_o"):
            base_config(org_conv_prob=1.5).validate()

    def test_type2_without_researchers(self):
        with pytest.raises(ConfigError, match="researchers"):
            base_config(researchers=0, type2_fraction=0.5).validate()

    def test_org_size(self):
        assert base_config(researchers=2, non_researchers=3).org_size == 6


class TestDemoCorpus:
    def test_user_conversion_rate_is_one_sixth(self):
        corpus, truth = demo_two_org_corpus()
        stats = empirical_stats(corpus, truth)
        assert stats.n_users == 6
        assert stats.n_converters == 1
        assert stats.user_conv_rate == pytest.approx(1 / 6)

    def test_only_researcher_carries_relevant_activity(self):
        corpus, truth = demo_two_org_corpus()
        carriers = [u for u in corpus.users()
                    if corpus.activity_set(u) & truth.relevant_activities]
        assert carriers == ["org1_res"]

    def test_conversion_event_in_owner_trail(self):
        corpus, _ = demo_two_org_corpus()
        kinds = [ev.kind for ev in corpus.trails["org1_own"].events]
        assert "conversion" in kinds
        label = corpus.labels["org1_own"]
        assert label.converted and label.conversion_time == 5 * 86400


class TestGenerate:
    def test_zero_conversion_probability(self):
        corpus, truth = generate(base_config(org_conv_prob=0.0))
        assert not any(lb.converted for lb in corpus.labels.values())
        planted = {a for u in corpus.users()
                   for a in corpus.activity_set(u) & truth.relevant_activities}
        assert planted == set()
        stats = empirical_stats(corpus, truth)
        assert stats.relevant_users_per_converted_cluster == 0.0

    def test_user_conv_rate_close_to_p_o_over_s(self):
        cfg = base_config(orgs=1000, org_conv_prob=0.1, trail_len=5.0)
        corpus, truth = generate(cfg)
        stats = empirical_stats(corpus, truth)
        se = np.sqrt(cfg.org_conv_prob * (1 - cfg.org_conv_prob) / cfg.orgs) / cfg.org_size
        assert abs(stats.user_conv_rate - cfg.user_conv_prob) < 3 * se

    def test_at_most_one_converter_per_cluster(self):
        corpus, _ = generate(base_config(orgs=200, org_conv_prob=0.5))
        for cluster in corpus.cluster_ids():
            converters = [u for u in corpus.members_of(cluster)
                          if corpus.labels[u].converted]
            assert len(converters) <= 1

    def test_type2_separation(self):
        # converting type-2 org: owner trail has no planted relevant activity,
        # researcher trails do; conversion event only with the owner
        corpus, truth = generate(base_config(orgs=100, org_conv_prob=0.5))
        converted = [u for u in corpus.users() if corpus.labels[u].converted]
        assert converted
        for owner in converted:
            cluster = next(iter(corpus.clusters[owner]))
            assert truth.org_types[cluster] == "type2"
            assert not corpus.activity_set(owner) & truth.relevant_activities
            res = [u for u in corpus.members_of(cluster)
                   if truth.roles[u] == "researcher"]
            hit = set()
            for r in res:
                hit |= corpus.activity_set(r) & truth.relevant_activities
                assert not any(ev.kind == "conversion"
                               for ev in corpus.trails[r].events)
            assert hit

    def test_every_researcher_of_converting_type2_org_is_relevant(self):
        corpus, truth = generate(base_config(orgs=100, researchers=2,
                                             org_conv_prob=0.5))
        for owner in (u for u in corpus.users() if corpus.labels[u].converted):
            cluster = next(iter(corpus.clusters[owner]))
            for u in corpus.members_of(cluster):
                if truth.roles[u] == "researcher":
                    assert corpus.activity_set(u) & truth.relevant_activities

    def test_type1_research_in_owner_trail(self):
        corpus, truth = generate(base_config(orgs=100, type2_fraction=0.0,
                                             org_conv_prob=0.5))
        converted = [u for u in corpus.users() if corpus.labels[u].converted]
        assert converted
        for owner in converted:
            assert corpus.activity_set(owner) & truth.relevant_activities

    def test_non_converting_orgs_contain_no_relevant_activities(self):
        corpus, truth = generate(base_config(orgs=150, org_conv_prob=0.3))
        converted_clusters = {c for u in corpus.users() if corpus.labels[u].converted
                              for c in corpus.clusters[u]}
        for cluster in corpus.cluster_ids():
            if cluster in converted_clusters:
                continue
            for u in corpus.members_of(cluster):
                assert not corpus.activity_set(u) & truth.relevant_activities

    def test_conversion_after_research(self):
        corpus, truth = generate(base_config(orgs=100, org_conv_prob=0.5))
        for owner in (u for u in corpus.users() if corpus.labels[u].converted):
            cluster = next(iter(corpus.clusters[owner]))
            conv_t = corpus.labels[owner].conversion_time
            for u in corpus.members_of(cluster):
                rel_times = [ev.timestamp for ev in corpus.trails[u].events
                             if ev.activity in truth.relevant_activities]
                assert all(t < conv_t for t in rel_times)

    def test_same_seed_byte_identical_file(self, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_corpus(generate(base_config())[0], p1)
        save_corpus(generate(base_config())[0], p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seed_differs(self, tmp_path):
        c1, _ = generate(base_config(rng_seed=1))
        c2, _ = generate(base_config(rng_seed=2))
        assert c1 != c2

    def test_truth_round_trip(self, tmp_path):
        _, truth = generate(base_config())
        path = tmp_path / "truth.json"
        save_truth(truth, path)
        again = load_truth(path)
        assert again == truth


class TestEmpiricalStats:
    def test_counts_match_naive_rescan(self):
        corpus, truth = generate(base_config(orgs=120, org_conv_prob=0.4,
                                             type2_fraction=0.6))
        stats = empirical_stats(corpus, truth)
        # independent recount straight off the corpus structures
        users = list(corpus.trails)
        converters = [u for u in users if corpus.labels[u].converted]
        assert stats.n_users == len(users)
        assert stats.n_converters == len(converters)
        assert stats.user_conv_rate == pytest.approx(len(converters) / len(users))
        per_cluster = []
        for cluster in sorted({c for u in converters for c in corpus.clusters[u]}):
            count = 0
            for member in corpus.members_of(cluster):
                acts = {ev.activity for ev in corpus.trails[member].events
                        if ev.kind != "conversion"}
                if corpus.labels[member].converted or acts & truth.relevant_activities:
                    count += 1
            per_cluster.append(count)
        assert stats.n_converted_clusters == len(per_cluster)
        assert stats.relevant_users_per_converted_cluster == pytest.approx(
            float(np.mean(per_cluster)))

    def test_demo_relevant_users_including_converter(self):
        corpus, truth = demo_two_org_corpus()
        stats = empirical_stats(corpus, truth)
        assert stats.relevant_users_per_converted_cluster == 2.0
