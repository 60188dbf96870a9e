from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlitgen.contrastive import (
    ContrastiveConfig,
    LossReport,
    ProjectionParams,
    combined_loss,
    contrastive_backward,
    contrastive_loss,
    cosine_backward,
    cosine_sim,
    cross_entropy_loss,
    embed_sequence,
    grad_check,
    logsumexp,
    project,
    project_backward,
    softmax,
    softmax_backward,
)

RNG = np.random.default_rng(20260822)


class TestConfig:
    def test_defaults(self):
        cfg = ContrastiveConfig()
        assert cfg.temperature == 0.1
        assert cfg.contrastive_weight == 1.0
        assert cfg.include_positive_in_denominator is False

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            ContrastiveConfig(temperature=0.0)
        with pytest.raises(ValueError):
            ContrastiveConfig(temperature=-1.0)
        with pytest.raises(ValueError):
            ContrastiveConfig(contrastive_weight=-0.5)


class TestEmbedSequence:
    def test_gathers_columns(self):
        table = np.arange(12.0).reshape(3, 4)  # d=3, V=4
        out = embed_sequence([1, 3, 1], table)
        assert out.shape == (3, 3)
        np.testing.assert_array_equal(out[:, 0], table[:, 1])
        np.testing.assert_array_equal(out[:, 1], table[:, 3])
        np.testing.assert_array_equal(out[:, 2], table[:, 1])

    def test_rejects_out_of_range_ids(self):
        table = np.zeros((2, 4))
        with pytest.raises(ValueError):
            embed_sequence([4], table)
        with pytest.raises(ValueError):
            embed_sequence([-1], table)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            embed_sequence([], np.zeros((2, 4)))


class TestProjection:
    def test_init_ranges(self):
        params = ProjectionParams.init(16, np.random.default_rng(0))
        bound = 1.0 / math.sqrt(16)
        assert params.weight.shape == (16, 16)
        assert np.all(np.abs(params.weight) <= bound)
        assert np.all(params.bias == 0.0)

    def test_identity_weight_mean_pools(self):
        params = ProjectionParams(weight=np.eye(2), bias=np.zeros(2))
        cols = np.array([[1.0, 3.0], [2.0, 6.0]])
        np.testing.assert_allclose(project(cols, params), [2.0, 4.0])

    def test_relu_clips_negatives(self):
        params = ProjectionParams(weight=-np.eye(2), bias=np.zeros(2))
        cols = np.array([[1.0], [2.0]])
        np.testing.assert_array_equal(project(cols, params), [0.0, 0.0])

    def test_output_nonnegative(self):
        params = ProjectionParams.init(8, np.random.default_rng(3))
        cols = RNG.normal(size=(8, 5))
        assert np.all(project(cols, params) >= 0.0)

    def test_backward_matches_finite_differences(self):
        d, length = 4, 3
        params = ProjectionParams.init(d, np.random.default_rng(7))
        cols = RNG.normal(size=(d, length))
        dh = RNG.normal(size=d)

        def fn(flat):
            w = flat[: d * d].reshape(d, d)
            b = flat[d * d : d * d + d]
            c = flat[d * d + d :].reshape(d, length)
            h = project(c, ProjectionParams(weight=w, bias=b))
            loss = float(h @ dh)
            dw, db, dc = project_backward(c, ProjectionParams(weight=w, bias=b), dh)
            return loss, np.concatenate([dw.ravel(), db, dc.ravel()])

        point = np.concatenate([params.weight.ravel(), params.bias, cols.ravel()])
        assert grad_check(fn, point) < 1e-6


class TestCosine:
    def test_parallel_is_one(self):
        assert cosine_sim(np.array([1.0, 2.0]), np.array([2.0, 4.0])) == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        assert cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 3.0])) == pytest.approx(0.0)

    def test_opposite_is_minus_one(self):
        assert cosine_sim(np.array([1.0, 0.0]), np.array([-5.0, 0.0])) == pytest.approx(-1.0)

    def test_zero_vector_warns_and_returns_zero(self):
        with pytest.warns(RuntimeWarning):
            got = cosine_sim(np.zeros(3), np.array([1.0, 2.0, 3.0]))
        assert got == 0.0

    def test_zero_vector_backward_is_zero(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            da, db = cosine_backward(np.zeros(3), np.ones(3), 1.0)
        assert np.all(da == 0.0)
        assert np.all(db == 0.0)

    def test_backward_matches_finite_differences(self):
        a = RNG.normal(size=5)
        b = RNG.normal(size=5)

        def fn(flat):
            x, y = flat[:5], flat[5:]
            loss = cosine_sim(x, y)
            da, db = cosine_backward(x, y, 1.0)
            return loss, np.concatenate([da, db])

        assert grad_check(fn, np.concatenate([a, b])) < 1e-6


class TestSoftmaxLogsumexp:
    def test_logsumexp_of_equal_entries(self):
        z = np.full(4, 2.5)
        assert logsumexp(z) == pytest.approx(2.5 + math.log(4.0), abs=1e-12)

    def test_logsumexp_handles_large_values(self):
        assert np.isfinite(logsumexp(np.array([1000.0, 1000.0])))

    def test_logsumexp_empty_rejected(self):
        with pytest.raises(ValueError):
            logsumexp(np.array([]))

    def test_softmax_sums_to_one(self):
        p = softmax(RNG.normal(size=10))
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_softmax_backward_matches_finite_differences(self):
        z = RNG.normal(size=6)
        dp = RNG.normal(size=6)

        def fn(flat):
            p = softmax(flat)
            return float(p @ dp), softmax_backward(p, dp)

        assert grad_check(fn, z) < 1e-6


class TestContrastiveLoss:
    def test_aligned_positive_orthogonal_negative(self):
        # sim(pos)=1, sim(neg)=0, T=1: loss = -1 + logsumexp([0]) = -1
        cfg = ContrastiveConfig(temperature=1.0)
        anchor = np.array([1.0, 0.0])
        pos = np.array([2.0, 0.0])
        neg = np.array([0.0, 1.0])
        assert contrastive_loss(anchor, pos, [neg], cfg) == pytest.approx(-1.0, abs=1e-12)

    def test_equal_similarity_gives_log_k(self):
        # all sims equal: loss = -s/T + (s/T + ln K) = ln K exactly
        cfg = ContrastiveConfig(temperature=0.1)
        anchor = np.array([1.0, 1.0])
        copies = [np.array([2.0, 2.0]) for _ in range(4)]
        got = contrastive_loss(anchor, copies[0], copies[1:], cfg)
        assert got == pytest.approx(math.log(3.0), abs=1e-12)

    def test_indistinguishable_pair_included_positive(self):
        # positive in denominator, one identical negative: ln 2
        cfg = ContrastiveConfig(temperature=0.5, include_positive_in_denominator=True)
        anchor = np.array([1.0, 2.0])
        v = np.array([0.5, 1.0])
        got = contrastive_loss(anchor, v, [v.copy()], cfg)
        assert got == pytest.approx(math.log(2.0), abs=1e-12)

    def test_requires_a_negative(self):
        cfg = ContrastiveConfig()
        with pytest.raises(ValueError):
            contrastive_loss(np.ones(2), np.ones(2), [], cfg)

    def test_loss_decreases_as_positive_aligns(self):
        cfg = ContrastiveConfig(temperature=0.1)
        anchor = np.array([1.0, 0.0])
        neg = np.array([0.0, 1.0])
        worse = contrastive_loss(anchor, np.array([1.0, 1.0]), [neg], cfg)
        better = contrastive_loss(anchor, np.array([1.0, 0.1]), [neg], cfg)
        assert better < worse

    def test_loss_increases_as_negative_aligns(self):
        cfg = ContrastiveConfig(temperature=0.1)
        anchor = np.array([1.0, 0.0])
        pos = np.array([1.0, 0.2])
        mild = contrastive_loss(anchor, pos, [np.array([0.0, 1.0])], cfg)
        harsh = contrastive_loss(anchor, pos, [np.array([1.0, 0.1])], cfg)
        assert harsh > mild

    def test_scale_invariance_of_inputs(self):
        # cosine similarity ignores vector norms
        cfg = ContrastiveConfig(temperature=0.2)
        anchor = RNG.normal(size=4)
        pos = RNG.normal(size=4)
        negs = [RNG.normal(size=4) for _ in range(3)]
        a = contrastive_loss(anchor, pos, negs, cfg)
        b = contrastive_loss(anchor * 7.0, pos * 0.01, [n * 3.0 for n in negs], cfg)
        assert a == pytest.approx(b, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 32), st.sampled_from([0.05, 0.1, 1.0]))
    def test_log_k_identity_property(self, k, temperature):
        cfg = ContrastiveConfig(temperature=temperature, include_positive_in_denominator=True)
        anchor = np.array([0.3, 0.7, 0.1])
        v = np.array([0.6, 1.4, 0.2])
        negs = [v.copy() for _ in range(k - 1)]
        got = contrastive_loss(anchor, v, negs, cfg)
        assert got == pytest.approx(math.log(k), abs=1e-9)

    def test_backward_matches_finite_differences(self):
        cfg = ContrastiveConfig(temperature=0.3)
        d, k = 4, 3
        vecs = RNG.normal(size=(k + 2, d))

        def fn(flat):
            m = flat.reshape(k + 2, d)
            anchor, pos, negs = m[0], m[1], list(m[2:])
            loss = contrastive_loss(anchor, pos, negs, cfg)
            da, dp, dns = contrastive_backward(anchor, pos, negs, cfg)
            return loss, np.concatenate([da, dp] + dns)

        assert grad_check(fn, vecs.ravel()) < 1e-6

    def test_backward_with_positive_in_denominator(self):
        cfg = ContrastiveConfig(temperature=0.5, include_positive_in_denominator=True)
        d, k = 3, 2
        vecs = RNG.normal(size=(k + 2, d))

        def fn(flat):
            m = flat.reshape(k + 2, d)
            loss = contrastive_loss(m[0], m[1], list(m[2:]), cfg)
            da, dp, dns = contrastive_backward(m[0], m[1], list(m[2:]), cfg)
            return loss, np.concatenate([da, dp] + dns)

        assert grad_check(fn, vecs.ravel()) < 1e-6


class TestCrossEntropy:
    def test_uniform_quarter_probs(self):
        # mean of -ln(0.25) over any length is ln 4
        assert cross_entropy_loss([0.25, 0.25]) == pytest.approx(math.log(4.0), abs=1e-12)

    def test_hand_value(self):
        # mean of -ln 0.5 and -ln 0.25 is (3/2) ln 2
        got = cross_entropy_loss([0.5, 0.25])
        want = 1.5 * math.log(2.0)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(1.0397207708399179, abs=1e-15)

    def test_perfect_probs_give_zero(self):
        assert cross_entropy_loss([1.0, 1.0, 1.0]) == 0.0

    def test_rejects_zero_and_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy_loss([0.0])
        with pytest.raises(ValueError):
            cross_entropy_loss([1.5])
        with pytest.raises(ValueError):
            cross_entropy_loss([])


class TestCombinedLoss:
    def test_weighted_sum(self):
        cfg = ContrastiveConfig(contrastive_weight=0.5)
        report = combined_loss(2.0, 1.2, cfg)
        assert isinstance(report, LossReport)
        assert report.cross_entropy == 2.0
        assert report.contrastive == 1.2
        assert report.total == pytest.approx(2.0 + 0.5 * 1.2)
        assert report.contrastive_weight == 0.5

    def test_zero_weight_drops_contrastive_term(self):
        cfg = ContrastiveConfig(contrastive_weight=0.0)
        assert combined_loss(1.5, 99.0, cfg).total == 1.5

    def test_report_rejects_negative_ce(self):
        with pytest.raises(ValueError):
            LossReport(cross_entropy=-0.1, contrastive=0.0, total=-0.1, contrastive_weight=1.0)


class TestGradCheck:
    def test_quadratic_passes(self):
        def fn(x):
            return float(x @ x), 2.0 * x

        assert grad_check(fn, RNG.normal(size=6)) < 1e-8

    def test_wrong_gradient_fails(self):
        def fn(x):
            return float(x @ x), 3.0 * x  # deliberately wrong scale

        assert grad_check(fn, np.ones(4)) > 1e-2

    def test_constant_function_has_zero_error(self):
        def fn(x):
            return 1.0, np.zeros_like(x)

        assert grad_check(fn, RNG.normal(size=3)) == 0.0

    def test_rejects_shape_mismatch(self):
        def fn(x):
            return float(x.sum()), np.ones(len(x) + 1)

        with pytest.raises(ValueError):
            grad_check(fn, np.ones(3))

    def test_rejects_non_finite_loss(self):
        def fn(x):
            return math.inf, np.zeros_like(x)

        with pytest.raises(ValueError):
            grad_check(fn, np.ones(2))
