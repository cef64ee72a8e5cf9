"""Parity between the compiled kernels and the pure-Python fallback.

Both backends consume identical pre-sampled draws, so they must agree up
to float rounding of the inner products.
"""

import numpy as np
import pytest

from cotrail import _kernels_py

compiled = pytest.importorskip("cotrail._kernels",
                               reason="compiled kernels not built")


def sgns_inputs(seed=0, n_tokens=400, vocab=50, dim=16, n_neg=5, window=4):
    rng = np.random.default_rng(seed)
    vin = (rng.random((vocab, dim), dtype=np.float32) - 0.5) / dim
    vout = np.zeros((vocab, dim), dtype=np.float32)
    tokens = rng.integers(0, vocab, size=n_tokens).astype(np.int32)
    n_sent = 20
    cuts = np.sort(rng.choice(np.arange(1, n_tokens), size=n_sent - 1, replace=False))
    offsets = np.concatenate([[0], cuts, [n_tokens]]).astype(np.int64)
    windows = rng.integers(1, window + 1, size=n_tokens).astype(np.int32)
    # count pairs the same way the trainer does
    n_pairs = 0
    for s in range(len(offsets) - 1):
        lo, hi = offsets[s], offsets[s + 1]
        for c in range(lo, hi):
            w = windows[c]
            n_pairs += min(c - lo, w) + min(hi - 1 - c, w)
    negatives = rng.integers(0, vocab, size=(n_pairs, n_neg)).astype(np.int32)
    return vin, vout, tokens, offsets, windows, negatives


class TestSgnsParity:
    def test_updates_and_loss_agree(self):
        vin, vout, tokens, offsets, windows, negatives = sgns_inputs()
        vin_c, vout_c = vin.copy(), vout.copy()
        vin_p, vout_p = vin.copy(), vout.copy()
        loss_c, n_c = compiled.sgns_epoch(vin_c, vout_c, tokens, offsets, windows,
                                          negatives, 0.05, 0.01, 1e-6)
        loss_p, n_p = _kernels_py.sgns_epoch(vin_p, vout_p, tokens, offsets, windows,
                                             negatives, 0.05, 0.01, 1e-6)
        assert n_c == n_p == negatives.shape[0]
        assert loss_c == pytest.approx(loss_p, rel=1e-5)
        np.testing.assert_allclose(vin_c, vin_p, rtol=1e-3, atol=1e-6)
        np.testing.assert_allclose(vout_c, vout_p, rtol=1e-3, atol=1e-6)

    def test_pair_count_excludes_out_of_sentence_context(self):
        # a single 3-token sentence with window 5 yields 6 pairs, not more
        vin = np.full((3, 4), 0.1, dtype=np.float32)
        vout = np.zeros((3, 4), dtype=np.float32)
        tokens = np.array([0, 1, 2], dtype=np.int32)
        offsets = np.array([0, 3], dtype=np.int64)
        windows = np.full(3, 5, dtype=np.int32)
        negatives = np.zeros((6, 2), dtype=np.int32)
        for mod in (compiled, _kernels_py):
            _, n = mod.sgns_epoch(vin.copy(), vout.copy(), tokens, offsets,
                                  windows, negatives, 0.05, 0.05, 1e-6)
            assert n == 6

    def test_negative_equal_to_context_is_skipped(self):
        # one pair, all negatives equal the positive target: only the
        # positive update happens, so loss is exactly softplus(-h.v)
        vin = np.array([[0.2, -0.1]], dtype=np.float32)
        vout = np.array([[0.3, 0.4]], dtype=np.float32)
        tokens = np.array([0, 0], dtype=np.int32)
        offsets = np.array([0, 2], dtype=np.int64)
        windows = np.ones(2, dtype=np.int32)
        negatives = np.zeros((2, 3), dtype=np.int32)
        f = float(vin[0] @ vout[0])
        expected = 2 * np.log1p(np.exp(-f))  # two symmetric pairs, pre-update f
        for mod in (compiled, _kernels_py):
            loss, n = mod.sgns_epoch(vin.copy(), vout.copy(), tokens, offsets,
                                     windows, negatives, 0.0, 0.0, 0.0)
            assert n == 2
            # lr floor 0 means no movement, so both pairs see the same f
            assert loss == pytest.approx(expected, rel=1e-6)


def lr_inputs(seed=1, n=300, n_feat=40, nnz=6):
    rng = np.random.default_rng(seed)
    indptr = np.arange(0, (n + 1) * nnz, nnz, dtype=np.int64)
    indices = np.concatenate([
        np.sort(rng.choice(n_feat, size=nnz, replace=False)) for _ in range(n)
    ]).astype(np.int32)
    labels = (rng.random(n) < 0.4).astype(np.int8)
    order = rng.permutation(n).astype(np.int64)
    weights = rng.standard_normal(n_feat) * 0.01
    return weights, indices, indptr, labels, order


class TestLrParity:
    def test_epoch_agrees(self):
        weights, indices, indptr, labels, order = lr_inputs()
        w_c, w_p = weights.copy(), weights.copy()
        loss_c, bias_c = compiled.lr_epoch(w_c, 0.0, indices, indptr, labels,
                                           order, 0.1, 1e-4)
        loss_p, bias_p = _kernels_py.lr_epoch(w_p, 0.0, indices, indptr, labels,
                                              order, 0.1, 1e-4)
        assert loss_c == pytest.approx(loss_p, rel=1e-10)
        assert bias_c == pytest.approx(bias_p, rel=1e-10)
        np.testing.assert_allclose(w_c, w_p, rtol=1e-10)

    def test_logloss_agrees(self):
        weights, indices, indptr, labels, _ = lr_inputs(seed=2)
        a = compiled.lr_logloss(weights, 0.3, indices, indptr, labels)
        b = _kernels_py.lr_logloss(weights, 0.3, indices, indptr, labels)
        assert a == pytest.approx(b, rel=1e-12)

    def test_zero_l2_skips_decay(self):
        weights, indices, indptr, labels, order = lr_inputs(seed=3)
        w1, w2 = weights.copy(), weights.copy()
        compiled.lr_epoch(w1, 0.0, indices, indptr, labels, order, 0.1, 0.0)
        _kernels_py.lr_epoch(w2, 0.0, indices, indptr, labels, order, 0.1, 0.0)
        untouched = sorted(set(range(len(weights))) - set(indices.tolist()))
        if untouched:
            np.testing.assert_array_equal(w1[untouched], weights[untouched])
            np.testing.assert_array_equal(w2[untouched], weights[untouched])


class TestTrainParityAcrossBackends:
    def test_structural_agreement_on_tiny_corpus(self, monkeypatch):
        from cotrail import synthgen
        from cotrail import embed as embed_mod
        from cotrail.embed import TrainParams

        corpus, truth = synthgen.generate(synthgen.SynthConfig(
            orgs=120, org_conv_prob=0.4, type2_fraction=1.0, n_relevant=6,
            n_noise=60, trail_len=10.0, rng_seed=3))
        params = TrainParams(dim=16, epochs=3, min_count=2, rng_seed=4)

        tables = {}
        for name, mod in (("compiled", compiled), ("python", _kernels_py)):
            monkeypatch.setattr(embed_mod, "kernels", mod)
            tables[name] = embed_mod.train(corpus, params)
        for t in tables.values():
            assert np.all(np.isfinite(t.matrix))
        assert tables["compiled"].vocab_order == tables["python"].vocab_order
        # same draws, same math: vectors nearly identical across backends
        np.testing.assert_allclose(tables["compiled"].matrix,
                                   tables["python"].matrix, rtol=5e-2, atol=5e-4)
