"""Data sources: synthetic generation, exclusion draws, file formats, splits."""

import numpy as np
import pytest

from idslab.stream import (
    BadMagicError,
    Dataset,
    LabelRangeError,
    NonFiniteFeatureError,
    PoolSource,
    SyntheticSourceSpec,
    TruncatedPayloadError,
    draw_excluding,
    load_embeddings,
    split,
    synth_build,
    write_embeddings,
    write_embeddings_csv,
)


def small_spec(**kw):
    base = dict(
        num_classes=4, feature_dim=6, pool_size=500, seed=9,
        val_per_class=5, test_per_class=5,
    )
    base.update(kw)
    return SyntheticSourceSpec(**base)


def tiny_dataset(n=10, d=3, c=4, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(
        ids=np.arange(n, dtype=np.int64) * 7 + 1,
        features=rng.standard_normal((n, d)),
        labels=rng.integers(0, c, size=n),
        clean_labels=np.where(rng.random(n) < 0.5, -1, rng.integers(0, c, size=n)),
        num_classes=c,
    )


class TestSyntheticBuild:
    def test_no_noise_means_labels_match_clean(self):
        src = synth_build(small_spec(label_noise_rate=0.0))
        np.testing.assert_array_equal(src.pool.labels, src.pool.clean_labels)

    def test_flip_fraction_near_rate(self):
        src = synth_build(small_spec(pool_size=10000, label_noise_rate=0.2))
        flipped = np.mean(src.pool.labels != src.pool.clean_labels)
        assert 0.18 <= flipped <= 0.22

    def test_flips_go_to_other_classes(self):
        src = synth_build(small_spec(pool_size=2000, label_noise_rate=0.5))
        moved = src.pool.labels != src.pool.clean_labels
        assert np.all(src.pool.labels[moved] != src.pool.clean_labels[moved])

    def test_uniform_prior_near_uniform_counts(self):
        src = synth_build(small_spec(pool_size=20000, power_law_alpha=0.0))
        counts = np.bincount(src.pool.clean_labels, minlength=4)
        # multinomial: each count ~ N(5000, sqrt(5000*0.75)); allow 4 sigma
        assert np.all(np.abs(counts - 5000) < 4 * np.sqrt(5000 * 0.75))

    def test_power_law_prior_is_skewed(self):
        src = synth_build(small_spec(pool_size=20000, power_law_alpha=1.0))
        counts = np.bincount(src.pool.clean_labels, minlength=4)
        assert counts[0] > 1.5 * counts[3]

    def test_bit_reproducible(self):
        a = synth_build(small_spec())
        b = synth_build(small_spec())
        np.testing.assert_array_equal(a.pool.features, b.pool.features)
        np.testing.assert_array_equal(a.pool.labels, b.pool.labels)
        np.testing.assert_array_equal(a.validation.features, b.validation.features)
        np.testing.assert_array_equal(a.test.features, b.test.features)

    def test_held_out_sets_balanced_clean_disjoint_ids(self):
        src = synth_build(small_spec(label_noise_rate=0.3))
        for ds in (src.validation, src.test):
            counts = np.bincount(ds.labels, minlength=4)
            assert np.all(counts == counts[0])
            np.testing.assert_array_equal(ds.labels, ds.clean_labels)
        all_ids = np.concatenate([src.pool.ids, src.validation.ids, src.test.ids])
        assert len(np.unique(all_ids)) == all_ids.size

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValueError):
            small_spec(label_noise_rate=1.0)
        with pytest.raises(ValueError):
            small_spec(num_classes=1)
        with pytest.raises(ValueError):
            small_spec(power_law_alpha=-0.5)


class TestDrawExcluding:
    def single_pool(self):
        ds = Dataset(
            ids=np.array([77], dtype=np.int64),
            features=np.zeros((1, 2)),
            labels=np.array([0], dtype=np.int64),
            clean_labels=np.array([0], dtype=np.int64),
            num_classes=2,
        )
        return PoolSource(ds, None, None)

    def test_single_item_drawn(self):
        src = self.single_pool()
        ex = draw_excluding(src, set(), np.random.default_rng(0))
        assert ex.id == 77

    def test_exhausted_when_fully_excluded(self):
        src = self.single_pool()
        assert draw_excluding(src, {77}, np.random.default_rng(0)) is None

    def test_never_returns_excluded_id(self):
        src = synth_build(small_spec(pool_size=50))
        rng = np.random.default_rng(1)
        excluded = set(int(i) for i in src.pool.ids[:40])
        for _ in range(200):
            ex = draw_excluding(src, excluded, rng)
            assert ex.id not in excluded

    def test_growing_exclusion_enumerates_each_id_once(self):
        src = synth_build(small_spec(pool_size=100))
        rng = np.random.default_rng(2)
        seen = set()
        while True:
            ex = draw_excluding(src, seen, rng)
            if ex is None:
                break
            assert ex.id not in seen
            seen.add(ex.id)
        assert seen == set(int(i) for i in src.pool.ids)

    def test_draws_uniform_over_complement(self):
        ds = Dataset(
            ids=np.arange(5, dtype=np.int64),
            features=np.zeros((5, 1)),
            labels=np.zeros(5, dtype=np.int64),
            clean_labels=np.zeros(5, dtype=np.int64),
            num_classes=2,
        )
        src = PoolSource(ds, None, None)
        rng = np.random.default_rng(3)
        counts = np.zeros(5)
        n = 10000
        for _ in range(n):
            counts[draw_excluding(src, set(), rng).id] += 1
        expected = n / 5
        sigma = np.sqrt(n * 0.2 * 0.8)
        assert np.all(np.abs(counts - expected) < 3 * sigma)

    def test_batch_draw_distinct_rows(self):
        src = synth_build(small_spec(pool_size=30))
        rows = src.draw_rows_excluding(set(), np.random.default_rng(4), 30)
        assert len(set(rows.tolist())) == 30
        short = src.draw_rows_excluding(set(range(25)), np.random.default_rng(4), 30)
        assert short.size == 5


class TestPKEM:
    def test_binary_roundtrip(self, tmp_path):
        ds = tiny_dataset()
        path = tmp_path / "data.pkem"
        write_embeddings(ds, path)
        back = load_embeddings(path)
        np.testing.assert_array_equal(back.ids, ds.ids)
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.clean_labels, ds.clean_labels)
        assert back.num_classes == ds.num_classes
        np.testing.assert_allclose(back.features, ds.features, atol=1e-6)

    def test_float32_precision_is_exact_after_first_write(self, tmp_path):
        ds = tiny_dataset()
        first = tmp_path / "a.pkem"
        write_embeddings(ds, first)
        a = load_embeddings(first)
        second = tmp_path / "b.pkem"
        write_embeddings(a, second)
        b = load_embeddings(second)
        np.testing.assert_array_equal(a.features, b.features)

    def test_csv_roundtrip(self, tmp_path):
        ds = tiny_dataset()
        path = tmp_path / "data.csv"
        write_embeddings_csv(ds, path)
        back = load_embeddings(path)
        np.testing.assert_array_equal(back.ids, ds.ids)
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.clean_labels, ds.clean_labels)
        np.testing.assert_allclose(back.features, ds.features, atol=1e-15)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pkem"
        path.write_bytes(b"WHAT" + b"\x00" * 40)
        with pytest.raises(BadMagicError):
            load_embeddings(path)

    def test_truncated_payload(self, tmp_path):
        ds = tiny_dataset()
        path = tmp_path / "trunc.pkem"
        write_embeddings(ds, path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(TruncatedPayloadError):
            load_embeddings(path)

    def test_label_out_of_range(self, tmp_path):
        ds = tiny_dataset()
        ds.num_classes = 2  # max label is 3: header now undercounts
        path = tmp_path / "range.pkem"
        write_embeddings(ds, path)
        with pytest.raises(LabelRangeError):
            load_embeddings(path)

    def test_non_finite_features(self, tmp_path):
        ds = tiny_dataset()
        ds.features[2, 1] = np.nan
        path = tmp_path / "nan.pkem"
        write_embeddings(ds, path)
        with pytest.raises(NonFiniteFeatureError):
            load_embeddings(path)

    def test_each_parse_error_is_distinct(self):
        kinds = {BadMagicError, TruncatedPayloadError, LabelRangeError,
                 NonFiniteFeatureError}
        assert len(kinds) == 4


class TestSplit:
    def test_exact_floor_sizes(self):
        ds = tiny_dataset(n=100)
        pool, val, test = split(ds, (0.8, 0.1, 0.1), seed=0)
        assert (len(pool), len(val), len(test)) == (80, 10, 10)

    def test_union_is_original_and_disjoint(self):
        ds = tiny_dataset(n=57)
        pool, val, test = split(ds, (0.7, 0.15, 0.15), seed=1)
        ids = np.concatenate([pool.ids, val.ids, test.ids])
        assert len(np.unique(ids)) == 57
        assert set(ids.tolist()) == set(ds.ids.tolist())
        # remainder goes to the pool
        assert len(val) == int(57 * 0.15) and len(test) == int(57 * 0.15)
        assert len(pool) == 57 - 2 * int(57 * 0.15)

    def test_same_seed_same_split(self):
        ds = tiny_dataset(n=40)
        a = split(ds, (0.5, 0.25, 0.25), seed=5)
        b = split(ds, (0.5, 0.25, 0.25), seed=5)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.ids, y.ids)

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            split(tiny_dataset(), (0.8, 0.3, 0.1), seed=0)
