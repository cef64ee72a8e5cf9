import math

import numpy as np
import pytest

from cotrail import synthgen
from cotrail.convmodel import SeedList
from cotrail.datamodel import ConversionLabel, Event, TrailCorpus, UserTrail
from cotrail.infotheory import (OrgParams, binary_entropy, cond_entropy_after,
                                cond_entropy_before, empirical_cond_entropy,
                                empirical_report, sweep)


class TestBinaryEntropy:
    def test_half_is_one_bit(self):
        assert binary_entropy(0.5) == 1.0

    def test_degenerate_probabilities(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_one_fifth(self):
        expected = -(0.2 * math.log2(0.2) + 0.8 * math.log2(0.8))
        assert binary_entropy(0.2) == pytest.approx(expected, abs=1e-12)
        assert binary_entropy(0.2) == pytest.approx(0.721928, abs=1e-6)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            binary_entropy(-0.01)
        with pytest.raises(ValueError):
            binary_entropy(1.01)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for p in rng.random(100):
            assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-12)

    def test_concave_with_max_at_half(self):
        grid = np.linspace(0.0, 1.0, 101)
        values = [binary_entropy(p) for p in grid]
        assert max(values) == pytest.approx(1.0)
        assert values[50] == max(values)
        # concavity on interior points
        for i in range(1, 100):
            assert values[i] >= (values[i - 1] + values[i + 1]) / 2 - 1e-12


def proportioned_corpus(orgs, org_size, researchers, converting):
    """Exactly ``converting`` type-2 orgs convert; every researcher of a
    converting org does the relevant activity once.  Built directly so it
    is independent of the sampling generator."""
    trails, clusters, labels = {}, {}, {}
    for o in range(orgs):
        cluster = f"c{o:04d}"
        conv = o < converting
        members = ([("own", "owner")] +
                   [(f"res{i}", "researcher") for i in range(researchers)] +
                   [(f"non{i}", "non_researcher")
                    for i in range(org_size - researchers - 1)])
        for name, role in members:
            user = f"{cluster}_{name}"
            events = [Event("filler", 100, "site_visit")]
            if conv and role == "researcher":
                events.append(Event("rel_act", 200, "search"))
            if conv and role == "owner":
                events.append(Event("conv_x", 5000, "conversion"))
            trails[user] = UserTrail(user, events)
            clusters[user] = frozenset({cluster})
            labels[user] = ConversionLabel(user, conv and role == "owner",
                                           5000 if conv and role == "owner" else None)
    return TrailCorpus(trails, clusters, labels)


class TestClosedForms:
    def test_before_formula_values(self):
        # p=1/2, s=3, r=1: H(B(0.2)) * 5/6
        got = cond_entropy_before(OrgParams(0.5, 3, 1))
        assert got == pytest.approx(binary_entropy(0.2) * 5 / 6, abs=1e-12)
        assert got == pytest.approx(0.60161, abs=1e-5)

    def test_after_formula_values(self):
        got = cond_entropy_after(0.5, 3)
        assert got == pytest.approx(binary_entropy(1 / 3) * 0.5, abs=1e-12)
        assert got == pytest.approx(0.4591, abs=1e-4)
        assert cond_entropy_after(0.1, 10) == pytest.approx(0.1 * binary_entropy(0.1),
                                                            abs=1e-12)
        assert cond_entropy_after(0.1, 10) == pytest.approx(0.04690, abs=1e-5)

    def test_zero_conversion_probability(self):
        assert cond_entropy_before(OrgParams(0.0, 3, 1)) == 0.0
        assert cond_entropy_after(0.0, 3) == 0.0

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            OrgParams(1.2, 3, 1)
        with pytest.raises(ValueError):
            OrgParams(0.5, 1, 1)
        with pytest.raises(ValueError):
            OrgParams(0.5, 3, 3)

    def test_before_matches_exactly_proportioned_corpus(self):
        # 10 orgs of which exactly 3 convert -> closed form at p = 0.3
        corpus = proportioned_corpus(orgs=10, org_size=3, researchers=1, converting=3)
        seed = SeedList(activities=["rel_act"])
        emp = empirical_cond_entropy(corpus, seed, augmented=False)
        assert emp == pytest.approx(cond_entropy_before(OrgParams(0.3, 3, 1)), abs=1e-9)

    def test_after_matches_exactly_proportioned_corpus(self):
        corpus = proportioned_corpus(orgs=10, org_size=3, researchers=1, converting=3)
        seed = SeedList(activities=["rel_act"])
        emp = empirical_cond_entropy(corpus, seed, augmented=True)
        assert emp == pytest.approx(cond_entropy_after(0.3, 3), abs=1e-9)

    def test_two_researcher_proportioned_corpus(self):
        corpus = proportioned_corpus(orgs=20, org_size=5, researchers=2, converting=8)
        seed = SeedList(activities=["rel_act"])
        emp = empirical_cond_entropy(corpus, seed, augmented=False)
        assert emp == pytest.approx(cond_entropy_before(OrgParams(0.4, 5, 2)), abs=1e-9)


class TestEmpiricalDemo:
    def test_before_augmentation(self):
        corpus, truth = synthgen.demo_two_org_corpus()
        seed = SeedList(activities=sorted(truth.relevant_activities))
        got = empirical_cond_entropy(corpus, seed, augmented=False)
        assert got == pytest.approx(binary_entropy(0.2) * 5 / 6, abs=1e-12)

    def test_after_augmentation(self):
        corpus, truth = synthgen.demo_two_org_corpus()
        seed = SeedList(activities=sorted(truth.relevant_activities))
        got = empirical_cond_entropy(corpus, seed, augmented=True)
        assert got == pytest.approx(0.4591, abs=1e-3)

    def test_report_carries_unweighted_term(self):
        corpus, truth = synthgen.demo_two_org_corpus()
        seed = SeedList(activities=sorted(truth.relevant_activities))
        rep = empirical_report(corpus, seed)
        assert rep.before_unweighted_bits == pytest.approx(binary_entropy(0.2), abs=1e-9)
        assert rep.p_r0 == pytest.approx(5 / 6)
        assert rep.h_c_bits == pytest.approx(binary_entropy(1 / 6), abs=1e-9)
        assert rep.before_bits <= 1.0 and rep.after_bits <= 1.0


class TestMonteCarloAgreement:
    def test_sampled_corpus_close_to_closed_forms(self):
        p_o, s = 0.2, 4
        cfg = synthgen.SynthConfig(orgs=4000, researchers=1, non_researchers=s - 2,
                                   org_conv_prob=p_o, type2_fraction=1.0,
                                   n_relevant=6, n_noise=100, trail_len=5.0,
                                   research_sessions=1, rng_seed=17)
        corpus, truth = synthgen.generate(cfg)
        seed = SeedList(activities=sorted(truth.relevant_activities))
        se_p = math.sqrt(p_o * (1 - p_o) / cfg.orgs)
        h = 1e-5
        d_before = (cond_entropy_before(OrgParams(p_o + h, s, 1))
                    - cond_entropy_before(OrgParams(p_o - h, s, 1))) / (2 * h)
        d_after = (cond_entropy_after(p_o + h, s)
                   - cond_entropy_after(p_o - h, s)) / (2 * h)
        before = empirical_cond_entropy(corpus, seed, augmented=False)
        after = empirical_cond_entropy(corpus, seed, augmented=True)
        assert abs(before - cond_entropy_before(OrgParams(p_o, s, 1))) \
            <= 3 * abs(d_before) * se_p
        assert abs(after - cond_entropy_after(p_o, s)) <= 3 * abs(d_after) * se_p


class TestSweep:
    def test_after_below_before_everywhere(self):
        rows = sweep(0.1, 1, range(3, 51))
        assert len(rows) == 48
        for r in rows:
            assert r.after_bits < r.before_bits

    def test_curves_decreasing_from_3_to_50(self):
        rows = sweep(0.1, 1, range(3, 51))
        assert rows[-1].before_bits < rows[0].before_bits
        assert rows[-1].after_bits < rows[0].after_bits

    def test_gap_shrinks_with_org_size(self):
        rows = {r.org_size: r for r in sweep(0.1, 1, [3, 50])}
        gap3 = rows[3].before_bits - rows[3].after_bits
        gap50 = rows[50].before_bits - rows[50].after_bits
        assert gap3 > gap50

    def test_single_row_consistent_with_closed_forms(self):
        row = sweep(0.1, 1, [3])[0]
        assert row.before_bits == cond_entropy_before(OrgParams(0.1, 3, 1))
        assert row.after_bits == cond_entropy_after(0.1, 3)

    def test_after_below_before_on_parameter_grid(self):
        for p_o in (0.05, 0.1, 0.2, 0.4):
            for r in (1, 2):
                for s in range(3, 51):
                    params = OrgParams(p_o, s, r)
                    assert cond_entropy_after(p_o, s) < cond_entropy_before(params)
