"""Post-hoc diagnostics over run results."""

import numpy as np
import pytest

from idslab.analysis import (
    acceptance_rate_series,
    noise_audit,
    overlap_matrix,
    rank_correlation_experiment,
    score_trace,
    usage_histogram,
)
from idslab.harness import IDSConfig, run
from idslab.model import init_model
from idslab.scoring import AcquisitionMethod, MethodConfig, compute_prototypes
from idslab.stream import SyntheticSourceSpec, synth_build


def small_source(seed=0, noise=0.0):
    return synth_build(
        SyntheticSourceSpec(
            num_classes=5, feature_dim=8, pool_size=2000, label_noise_rate=noise,
            seed=seed, val_per_class=8, test_per_class=8,
            separation=6.0, cluster_spread=1.0,
        )
    )


def small_run(method=AcquisitionMethod.PEAKS, seed=0, noise=0.0, **kw):
    config = IDSConfig(
        data_budget=120, initial_size=40, batch_size=8, total_updates=60,
        init_updates=10, lr=0.05, refresh_period=5,
        method=MethodConfig(method), seed=seed,
    )
    for key, value in kw.items():
        setattr(config, key, value)
    return run(config, small_source(seed=seed, noise=noise))


class TestOverlap:
    def test_identical_runs_full_overlap(self):
        a = small_run()
        b = small_run()
        report = overlap_matrix([a, b], labels=["a", "b"])
        np.testing.assert_allclose(report.selected_jaccard, 1.0)
        np.testing.assert_allclose(report.seen_jaccard, 1.0)

    def test_matrix_symmetric_unit_diagonal(self):
        results = [small_run(m) for m in
                   (AcquisitionMethod.PEAKS, AcquisitionMethod.RANDOM,
                    AcquisitionMethod.EL2N)]
        report = overlap_matrix(results)
        mat = report.selected_jaccard
        np.testing.assert_array_equal(mat, mat.T)
        np.testing.assert_allclose(np.diag(mat), 1.0)
        assert report.labels == ["peaks", "random", "el2n"]

    def test_initial_sets_excluded(self):
        a = small_run()
        chosen = set(a.selected_ids) - a.initial_ids
        report = overlap_matrix([a, a])
        assert report.selected_jaccard[0, 1] == 1.0
        assert len(chosen) == 80

    def test_permutation_invariant(self):
        results = [small_run(m) for m in
                   (AcquisitionMethod.PEAKS, AcquisitionMethod.RANDOM)]
        fwd = overlap_matrix(results).selected_jaccard[0, 1]
        rev = overlap_matrix(results[::-1]).selected_jaccard[0, 1]
        assert fwd == rev

    def test_hand_case(self):
        a = small_run()
        b = small_run()
        a.selected = [(0, 0), (1, 1), (2, 1), (3, 1)]
        b.selected = [(0, 0), (2, 1), (3, 1), (4, 1)]
        report = overlap_matrix([a, b], labels=["a", "b"])
        assert report.selected_jaccard[0, 1] == pytest.approx(0.5)


class TestScoreTrace:
    def test_constant_scores_are_all_one(self):
        np.testing.assert_allclose(score_trace([2.0] * 50, window=10), 1.0)

    def test_decaying_scores_peak_early(self):
        trace = score_trace(np.linspace(10, 1, 100), window=5)
        assert trace[0] == pytest.approx(1.0)
        assert trace[-1] < trace[0]
        assert trace.max() <= 1.0

    def test_window_one_scales_by_max(self):
        np.testing.assert_allclose(
            score_trace([1.0, 4.0, 2.0], window=1), [0.25, 1.0, 0.5]
        )

    def test_nonpositive_peak_rejected(self):
        with pytest.raises(ValueError):
            score_trace([-1.0, -2.0], window=1)


class TestAcceptanceSeries:
    def test_all_accepted(self):
        np.testing.assert_allclose(acceptance_rate_series([True] * 10, 4), 1.0)

    def test_alternating_even_windows(self):
        series = acceptance_rate_series([1, 0] * 10, 2)
        np.testing.assert_allclose(series[1::2], 0.5)


class TestRankCorrelation:
    def test_identity_pair_is_exactly_one(self):
        source = small_source()
        result_state_model = init_model(5, 8, scheme="gaussian", seed=3)
        protos = compute_prototypes(source.validation.features, source.validation.labels)
        rng = np.random.default_rng(0)
        rows = rng.integers(0, len(source.pool), size=200)
        corr = rank_correlation_experiment(
            result_state_model, source.pool.features[rows], source.pool.labels[rows],
            protos,
        )
        assert corr[("exact_delta", "peaks_v")] == 1.0

    def test_zero_model_reports_undefined_for_logit_score(self):
        source = small_source()
        protos = compute_prototypes(source.validation.features, source.validation.labels)
        corr = rank_correlation_experiment(
            init_model(5, 8), source.pool.features[:100], source.pool.labels[:100],
            protos,
        )
        # all-zero readout makes every logit product 0: correlation undefined
        assert corr[("exact_delta", "peaks")] is None
        assert corr[("exact_delta", "peaks_v")] == 1.0


class TestUsageHistogram:
    def test_equal_counts_zero_variance(self):
        summary = usage_histogram({1: 4, 2: 4, 3: 4})
        assert summary.variance == 0.0 and summary.std == 0.0

    def test_mean(self):
        summary = usage_histogram({1: 1, 2: 1, 3: 2})
        assert summary.mean == pytest.approx(4 / 3)
        assert summary.histogram == {1: 2, 2: 1}

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            usage_histogram({})


class TestNoiseAudit:
    def test_clean_source_audits_zero(self):
        result = small_run(noise=0.0)
        assert noise_audit(result.selected_ids, small_source(noise=0.0).pool) == 0.0

    def test_random_selection_tracks_noise_rate(self):
        result = small_run(AcquisitionMethod.RANDOM, noise=0.25, data_budget=400,
                           total_updates=120)
        frac = noise_audit(result.selected_ids, small_source(noise=0.25).pool)
        assert 0.15 <= frac <= 0.35

    def test_product_score_filters_noise_below_random(self):
        noisy = 0.25
        random_frac = noise_audit(
            small_run(AcquisitionMethod.RANDOM, noise=noisy).selected_ids,
            small_source(noise=noisy).pool,
        )
        peaks_frac = noise_audit(
            small_run(AcquisitionMethod.PEAKS, noise=noisy).selected_ids,
            small_source(noise=noisy).pool,
        )
        assert peaks_frac < random_frac

    def test_unknown_clean_labels_rejected(self):
        source = small_source()
        source.pool.clean_labels[:] = -1
        with pytest.raises(ValueError):
            noise_audit([0, 1, 2], source.pool)
