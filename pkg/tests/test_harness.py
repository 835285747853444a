"""End-to-end selection runs: the delta rule, phase invariants, determinism."""

import numpy as np
import pytest

import idslab.harness as harness
from idslab.harness import (
    IDSConfig,
    SourceExhaustedError,
    auto_delta,
    phase_initialize,
    read_run_result,
    run,
    write_run_result,
)
from idslab.scoring import AcquisitionMethod, MethodConfig
from idslab.stream import SyntheticSourceSpec, synth_build


def small_source(seed=0, pool_size=2000, noise=0.1, **kw):
    spec = SyntheticSourceSpec(
        num_classes=5, feature_dim=8, pool_size=pool_size, power_law_alpha=0.5,
        label_noise_rate=noise, seed=seed, val_per_class=8, test_per_class=8,
        separation=6.0, cluster_spread=1.0, **kw,
    )
    return synth_build(spec)


def small_config(seed=0, **kw):
    base = dict(
        data_budget=120, initial_size=40, batch_size=8, total_updates=60,
        init_updates=10, lr=0.05, refresh_period=5,
        method=MethodConfig(AcquisitionMethod.PEAKS), seed=seed,
    )
    base.update(kw)
    return IDSConfig(**base)


class TestAutoDelta:
    def test_worked_example(self):
        assert auto_delta(1000, 0, 200) == 10

    def test_with_initial_set(self):
        assert auto_delta(1200, 200, 400) == 5

    def test_ceil_floor_is_one(self):
        assert auto_delta(101, 100, 1000) == 1

    def test_errors(self):
        with pytest.raises(ValueError):
            auto_delta(100, 100, 10)
        with pytest.raises(ValueError):
            auto_delta(100, 0, 0)


class TestConfigValidation:
    def test_ok(self):
        small_config().validate()

    def test_initial_size_below_budget(self):
        with pytest.raises(ValueError):
            small_config(initial_size=120).validate()

    def test_delta_bounded_by_batch(self):
        with pytest.raises(ValueError):
            small_config(selection_increment=9).validate()

    def test_update_budget_must_cover_phases(self):
        # delta pinned at 2 forces 40 selection rounds into a 20-update budget
        with pytest.raises(ValueError):
            small_config(total_updates=20, selection_increment=2).validate()

    def test_deferred_merge_needs_finite_refresh(self):
        with pytest.raises(ValueError):
            small_config(deferred_merge=True, refresh_period=None).validate()

    def test_eval_period_defaults_to_refresh(self):
        assert small_config(refresh_period=7).eval_period == 7
        assert small_config(refresh_period=None).eval_period == 50


class TestRunInvariants:
    def test_budget_and_counts(self):
        result = run(small_config(), small_source())
        assert len(result.selected) == 120
        ids = [i for i, _ in result.selected]
        assert len(set(ids)) == 120
        assert sum(result.class_counts) == 120

    def test_initial_set_is_subset_with_step_zero(self):
        result = run(small_config(), small_source())
        initial = result.initial_ids
        assert len(initial) == 40
        assert initial <= set(result.selected_ids)

    def test_update_accounting(self):
        config = small_config()
        result = run(config, small_source())
        rounds = -(-(120 - 40) // config.delta)
        assert max(s for _, s in result.selected) == rounds
        assert max(result.candidate_log.step) == rounds
        # accuracy curve ends exactly at the total update budget
        assert result.accuracy_curve[-1][0] == config.total_updates

    def test_single_round_when_delta_covers_remainder(self):
        config = small_config(
            data_budget=48, selection_increment=8, total_updates=30
        )
        result = run(config, small_source())
        assert max(s for _, s in result.selected) == 1

    def test_partial_final_increment(self):
        # 80 to select with delta 6: 13 full rounds + a 2-example round
        config = small_config(selection_increment=6, total_updates=40)
        result = run(config, small_source())
        steps = [s for _, s in result.selected if s > 0]
        assert max(steps) == 14
        assert sum(1 for s in steps if s == 14) == 80 - 13 * 6

    def test_same_seed_identical_runs(self):
        a = run(small_config(), small_source())
        b = run(small_config(), small_source())
        assert a.selected == b.selected
        assert a.accuracy_curve == b.accuracy_curve
        assert a.candidate_log.score == b.candidate_log.score

    def test_clean_labels_never_influence_the_run(self):
        baseline = run(small_config(), small_source())
        blinded_source = small_source()
        blinded_source.pool.clean_labels[:] = -1  # ground truth withheld
        blinded = run(small_config(), blinded_source)
        assert blinded.selected == baseline.selected
        assert blinded.accuracy_curve == baseline.accuracy_curve
        assert blinded.candidate_log.score == baseline.candidate_log.score

    def test_methods_share_initial_set_for_a_seed(self):
        sets = []
        for method in (AcquisitionMethod.PEAKS, AcquisitionMethod.RANDOM,
                       AcquisitionMethod.EL2N):
            result = run(small_config(method=MethodConfig(method)), small_source())
            sets.append(result.initial_ids)
        assert sets[0] == sets[1] == sets[2]

    def test_random_with_full_rate_takes_first_draws(self):
        config = small_config(
            method=MethodConfig(AcquisitionMethod.RANDOM), selection_rate=100.0
        )
        result = run(config, small_source())
        assert all(result.candidate_log.accepted)
        assert len(result.candidate_log) == 120 - 40

    def test_batch_equals_new_examples_when_b_is_delta(self):
        config = small_config(
            batch_size=4, selection_increment=4, total_updates=60,
        )
        result = run(config, small_source())
        # no replay slots: initial examples are never revisited during selection
        for sid in result.initial_ids:
            assert result.usage_counts[sid] == 0
        for sid, step in result.selected:
            if step > 0:
                assert result.usage_counts[sid] == 1


class TestCandidateBatching:
    def test_remainder_discarded_after_quota(self):
        config = small_config(
            method=MethodConfig(AcquisitionMethod.RANDOM), selection_rate=100.0,
            candidate_batch_size=16,
        )
        result = run(config, small_source())
        # every decided candidate is accepted at p=100, so exactly delta
        # decisions happen per round and the rest of each batch is dropped
        steps = np.asarray(result.candidate_log.step)
        for r in range(1, max(steps) + 1):
            assert np.count_nonzero(steps == r) == min(config.delta, 80 - (r - 1) * config.delta)

    def test_batched_run_reaches_budget(self):
        result = run(small_config(candidate_batch_size=8), small_source())
        assert len(result.selected) == 120


class TestReplaySampling:
    def test_count_inverse_first_draw_probabilities(self):
        usage = np.zeros(100, dtype=np.int64)
        usage[:3] = [1, 1, 2]
        counts = np.zeros(3)
        for s in range(4000):
            rows = harness._count_inverse_rows([0, 1, 2], 1, usage, np.random.default_rng(s))
            counts[rows[0]] += 1
        freq = counts / 4000
        np.testing.assert_allclose(freq, [0.4, 0.4, 0.2], atol=0.03)

    def test_equal_counts_match_uniform_distribution(self):
        usage = np.full(50, 3, dtype=np.int64)
        rows = list(range(50))
        picks = np.zeros(50)
        for s in range(3000):
            got = harness._count_inverse_rows(rows, 1, usage, np.random.default_rng(s))
            picks[got[0]] += 1
        # all mass within 5 sigma of the uniform expectation
        sigma = np.sqrt(3000 * 0.02 * 0.98)
        assert np.all(np.abs(picks - 60) < 5 * sigma)

    def test_without_replacement_within_batch(self):
        usage = np.zeros(10, dtype=np.int64)
        rows = list(range(10))
        got = harness._count_inverse_rows(rows, 10, usage, np.random.default_rng(0))
        assert sorted(got.tolist()) == rows

    def test_count_inverse_reduces_usage_spread(self):
        uni = run(small_config(total_updates=80), small_source())
        inv = run(small_config(total_updates=80, replay_sampling="count_inverse"),
                  small_source())
        assert np.std(list(inv.usage_counts.values())) < np.std(
            list(uni.usage_counts.values())
        )


class TestDeferredMerge:
    def test_replay_pool_growth_patterns(self, monkeypatch):
        observed = {"immediate": [], "deferred": []}
        original = harness._replay_rows

        def spy(state, count, mode, rng):
            observed[mode_key].append(len(state.selected_rows))
            return original(state, count, mode, rng)

        monkeypatch.setattr(harness, "_replay_rows", spy)

        mode_key = "immediate"
        run(small_config(selection_increment=4, total_updates=60), small_source())
        mode_key = "deferred"
        run(small_config(selection_increment=4, total_updates=60, deferred_merge=True),
            small_source())

        immediate, deferred = observed["immediate"], observed["deferred"]
        # immediate: pool grows by delta every round
        assert immediate[:4] == [40, 44, 48, 52]
        # deferred: pool is frozen between refreshes (every 5 updates),
        # then absorbs the buffered examples at once
        assert deferred[:6] == [40, 40, 40, 40, 40, 60]

    def test_deferred_run_still_hits_budget_without_duplicates(self):
        result = run(small_config(deferred_merge=True), small_source())
        ids = result.selected_ids
        assert len(ids) == 120 and len(set(ids)) == 120


class TestExhaustion:
    def test_budget_met_on_tight_pool(self):
        source = small_source(pool_size=60)
        config = small_config(
            data_budget=59, initial_size=20, total_updates=100,
            selection_increment=2, batch_size=4,
            method=MethodConfig(AcquisitionMethod.RANDOM), selection_rate=100.0,
        )
        result = run(config, source)
        assert len(result.selected) == 59

    def test_exhaustion_raises_with_partial(self):
        source = small_source(pool_size=50)
        config = small_config(
            data_budget=120, initial_size=20, total_updates=200,
            selection_increment=2, batch_size=4,
            method=MethodConfig(AcquisitionMethod.RANDOM), selection_rate=100.0,
        )
        with pytest.raises(SourceExhaustedError) as err:
            run(config, source)
        partial = err.value.result
        assert partial.exhausted
        assert len(partial.selected) == 50


class TestEvaluationCurve:
    def test_eval_cadence(self):
        config = small_config(eval_every=10)
        result = run(config, small_source())
        test_updates = [u for u, split, _ in result.accuracy_curve if split == "test"]
        assert test_updates[0] == config.init_updates
        assert config.total_updates in test_updates
        assert all(u % 10 == 0 for u in test_updates)

    def test_validation_split_recorded(self):
        result = run(small_config(), small_source())
        splits = {s for _, s, _ in result.accuracy_curve}
        assert splits == {"test", "val"}

    def test_learning_beats_chance(self):
        result = run(small_config(), small_source())
        assert result.final_test_accuracy > 1.0 / 5


class TestResultSerialization:
    def test_roundtrip(self, tmp_path):
        result = run(small_config(), small_source())
        write_run_result(result, tmp_path / "r")
        back = read_run_result(tmp_path / "r")
        assert back.selected == result.selected
        assert back.class_counts == result.class_counts
        assert back.usage_counts == result.usage_counts
        assert back.refresh_count == result.refresh_count
        assert back.candidate_log.id == result.candidate_log.id
        assert back.candidate_log.score == pytest.approx(result.candidate_log.score)
        assert back.accuracy_curve == result.accuracy_curve
        assert back.final_test_accuracy == result.final_test_accuracy
