"""Tau-segmentation, k-means codebooks, histograms, and the inverse index."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drillexplain.errors import ArtifactError, DataError
from drillexplain.features import (Codebook, CodebookSet, assign,
                                   assign_series, counts_at, counts_matrix,
                                   extract_tau, featurize, kmeans, sqdist,
                                   tau_count, train_codebooks)
from drillexplain.telemetry import MNEMONICS, WINDOW_SAMPLES, Segment

from conftest import make_log


def constant_codebooks(levels: np.ndarray, k: int = 4,
                       tau_len: int = 30, stride: int = 6) -> CodebookSet:
    """Codebooks whose centers are constant patterns at the given levels."""
    books = {}
    for name in MNEMONICS:
        centers = np.tile(np.asarray(levels, dtype=float)[:k, None], (1, tau_len))
        books[name] = Codebook(channel=name, mean=0.0, std=1.0, centers=centers)
    return CodebookSet(codebooks=books, tau_len=tau_len, stride=stride)


class TestExtractTau:
    def test_full_window_is_single_segment(self):
        values = np.arange(WINDOW_SAMPLES, dtype=float)
        tau = extract_tau(values, tau_len=WINDOW_SAMPLES, stride=6)
        assert tau.shape == (1, WINDOW_SAMPLES)
        assert np.array_equal(tau[0], values)

    def test_hour_yields_56_segments(self):
        tau = extract_tau(np.zeros(WINDOW_SAMPLES), tau_len=30, stride=6)
        assert tau.shape == (56, 30)
        assert tau_count(WINDOW_SAMPLES, 30, 6) == 56

    def test_consecutive_segments_overlap(self):
        values = np.arange(60, dtype=float)
        tau = extract_tau(values, tau_len=30, stride=6)
        assert np.array_equal(tau[0][6:], tau[1][:24])

    def test_too_short_series_rejected(self):
        with pytest.raises(DataError):
            extract_tau(np.zeros(20), tau_len=30, stride=6)

    @given(st.integers(30, 400), st.integers(1, 9), st.integers(1, 40))
    @settings(max_examples=40, deadline=None)
    def test_matches_naive_slicing(self, n, stride, tau_len):
        values = np.arange(n, dtype=float)
        expected = [values[s:s + tau_len]
                    for s in range(0, n - tau_len + 1, stride)]
        if not expected:
            return
        tau = extract_tau(values, tau_len=tau_len, stride=stride)
        assert tau.shape == (len(expected), tau_len)
        for row, exp in zip(tau, expected):
            assert np.array_equal(row, exp)


class TestKmeans:
    def test_two_point_toy(self):
        points = np.array([[0.0], [0.0], [10.0], [10.0]])
        centers, labels, inertia = kmeans(points, 2, np.random.default_rng(0))
        assert sorted(centers[:, 0].tolist()) == [0.0, 10.0]
        assert inertia == 0.0
        assert labels[0] == labels[1] and labels[2] == labels[3]

    def test_200_distinct_levels_recovered_exactly(self):
        levels = np.arange(200, dtype=np.float64)
        points = np.repeat(levels, 3)[:, None] * np.ones((1, 5))
        centers, _, inertia = kmeans(points, 200, np.random.default_rng(1))
        assert inertia == 0.0
        assert np.array_equal(np.sort(centers[:, 0]), levels)

    def test_seed_determinism(self):
        rng = np.random.default_rng(7)
        points = rng.normal(size=(300, 8))
        a = kmeans(points, 10, np.random.default_rng(42))
        b = kmeans(points, 10, np.random.default_rng(42))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_more_clusters_than_points(self):
        points = np.array([[0.0], [1.0]])
        centers, labels, inertia = kmeans(points, 5, np.random.default_rng(3))
        assert centers.shape == (5, 1)
        assert inertia == 0.0


class TestAssign:
    def test_exact_centroid_match(self):
        centers = np.arange(10, dtype=float)[:, None] * 3
        assert assign(centers[7][None], centers)[0] == 7

    def test_tie_breaks_to_lower_index(self):
        centers = np.zeros((10, 1))
        centers[3] = 4.0
        centers[9] = 8.0
        assert assign(np.array([[6.0]]), centers)[0] == 3

    def test_one_dimensional_midpoint(self):
        centers = np.array([[0.0], [10.0]])
        assert assign(np.array([[4.0]]), centers)[0] == 0

    def test_sqdist_nonnegative_on_duplicates(self):
        pts = np.full((4, 3), 1.2345678)
        assert np.all(sqdist(pts, pts) >= 0.0)


class TestFeaturize:
    def test_single_cluster_channel_block(self):
        cb = constant_codebooks(np.array([90.0, 12.0, 0.0, 1.0]))
        log = make_log(n=WINDOW_SAMPLES)
        seg = Segment(log=log, end_index=WINDOW_SAMPLES)
        counts, index = featurize(seg, cb)
        hkla = counts[:cb.k]
        assert hkla[0] == 56 and hkla[1:].sum() == 0
        assert index.labels.shape == (12, 56)

    @pytest.mark.parametrize("tau_len", [30, 60, 360])
    def test_channel_sums_equal_tau_count(self, tau_len):
        cb = constant_codebooks(np.linspace(0, 100, 4), tau_len=tau_len)
        rng = np.random.default_rng(2)
        log = make_log(n=WINDOW_SAMPLES, HKLA=rng.uniform(50, 100, WINDOW_SAMPLES),
                       GASA=rng.uniform(0, 5, WINDOW_SAMPLES))
        counts, _ = featurize(Segment(log=log, end_index=WINDOW_SAMPLES), cb)
        expected = (WINDOW_SAMPLES - tau_len) // 6 + 1
        for ci in range(12):
            assert counts[ci * cb.k:(ci + 1) * cb.k].sum() == expected

    def test_index_lookup_length_matches_count(self):
        cb = constant_codebooks(np.array([90.0, 12.0, 0.0, 1.0]))
        rng = np.random.default_rng(3)
        log = make_log(n=WINDOW_SAMPLES, TQA=rng.uniform(0, 3, WINDOW_SAMPLES))
        counts, index = featurize(Segment(log=log, end_index=WINDOW_SAMPLES), cb)
        for f in np.nonzero(counts)[0]:
            assert len(index.segment_starts(f)) == counts[f]
        # spans are tau_len wide and stride-aligned
        f = int(np.nonzero(counts)[0][0])
        for s, e in index.spans(f):
            assert e - s == cb.tau_len and s % cb.stride == 0

    def test_feature_of_is_channel_major(self):
        cb = constant_codebooks(np.arange(4.0))
        log = make_log(n=WINDOW_SAMPLES)
        _, index = featurize(Segment(log=log, end_index=WINDOW_SAMPLES), cb)
        assert index.feature_of(0, 0) == 0
        assert index.feature_of(1, 0) == cb.k
        assert index.feature_of(11, 3) == 11 * cb.k + 3


class TestTrainCodebooks:
    def windows(self, n_windows=2, seed=0):
        rng = np.random.default_rng(seed)
        out = []
        for i in range(n_windows):
            log = make_log(well_id=f"W{i}", n=WINDOW_SAMPLES,
                           HKLA=90 + rng.normal(0, 5, WINDOW_SAMPLES),
                           SPPA=18 + rng.normal(0, 1, WINDOW_SAMPLES))
            out.append(Segment(log=log, end_index=WINDOW_SAMPLES))
        return out

    def test_seeded_training_is_bitwise_identical(self):
        a = train_codebooks(self.windows(), k=8, seed=5)
        b = train_codebooks(self.windows(), k=8, seed=5)
        for name in MNEMONICS:
            assert np.array_equal(a.codebooks[name].centers,
                                  b.codebooks[name].centers)
            assert a.codebooks[name].mean == b.codebooks[name].mean

    def test_constant_channel_uses_std_floor(self):
        cb = train_codebooks(self.windows(), k=4, seed=5)
        assert cb.codebooks["WOB"].std == 1e-12  # constant in make_log

    def test_subsampled_corpus_still_deterministic(self):
        a = train_codebooks(self.windows(4), k=8, seed=1, max_tau_per_channel=50)
        b = train_codebooks(self.windows(4), k=8, seed=1, max_tau_per_channel=50)
        assert np.array_equal(a.codebooks["HKLA"].centers,
                              b.codebooks["HKLA"].centers)

    def test_empty_window_list_rejected(self):
        with pytest.raises(DataError):
            train_codebooks([], k=4)

    def test_save_load_round_trip(self, tmp_path):
        cb = train_codebooks(self.windows(), k=4, seed=5)
        cb.save(tmp_path / "cb.json")
        back = CodebookSet.load(tmp_path / "cb.json")
        assert back.k == 4 and back.tau_len == cb.tau_len
        for name in MNEMONICS:
            assert np.array_equal(back.codebooks[name].centers,
                                  cb.codebooks[name].centers)

    def test_malformed_file_rejected(self, tmp_path):
        (tmp_path / "cb.json").write_text("{}")
        with pytest.raises(ArtifactError):
            CodebookSet.load(tmp_path / "cb.json")

    def test_mismatched_sizes_rejected(self):
        books = constant_codebooks(np.arange(4.0)).codebooks
        books["GASA"] = Codebook(channel="GASA", mean=0.0, std=1.0,
                                 centers=np.zeros((3, 30)))
        with pytest.raises(ArtifactError):
            CodebookSet(codebooks=books)


class TestCountsMatrix:
    def test_matches_featurize(self):
        cb = constant_codebooks(np.array([90.0, 12.0, 0.0, 1.0]))
        rng = np.random.default_rng(4)
        log = make_log(n=720, HKLA=rng.uniform(80, 100, 720),
                       TVT=rng.uniform(100, 140, 720))
        labels = np.stack([
            assign_series(log.data[m], cb.codebooks[m], cb.tau_len, stride=1)
            for m in MNEMONICS
        ])
        starts = np.array([0, 6, 180, 360])
        X = counts_matrix(labels, starts, cb.k, cb.tau_len, cb.stride)
        for row, s in zip(X, starts):
            seg = Segment(log=log, end_index=int(s) + WINDOW_SAMPLES)
            counts, _ = featurize(seg, cb)
            assert np.array_equal(row, counts)

    def test_counts_at_is_one_row(self):
        cb = constant_codebooks(np.arange(4.0))
        log = make_log(n=720)
        labels = np.stack([
            assign_series(log.data[m], cb.codebooks[m], cb.tau_len, stride=1)
            for m in MNEMONICS
        ])
        row = counts_at(labels, 12, cb.k, cb.tau_len, cb.stride)
        X = counts_matrix(labels, np.array([12]), cb.k, cb.tau_len, cb.stride)
        assert np.array_equal(row, X[0])

    @given(st.integers(0, 3))
    @settings(max_examples=10, deadline=None)
    def test_every_row_sums_to_12_blocks(self, start):
        cb = constant_codebooks(np.arange(4.0))
        log = make_log(n=720)
        labels = np.stack([
            assign_series(log.data[m], cb.codebooks[m], cb.tau_len, stride=1)
            for m in MNEMONICS
        ])
        row = counts_at(labels, start * 6, cb.k, cb.tau_len, cb.stride)
        assert row.sum() == 12 * 56
