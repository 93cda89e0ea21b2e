"""Metric oracles: AUC, folds, alarm accounting, and explanation PR."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drillexplain.errors import EvaluationError, UsageError
from drillexplain.evaluation import (COVERAGE_TARGETS, DEBOUNCE_SECONDS,
                                     EXTENDED_PARAMS, AlarmReport, PrCounts,
                                     alarm_episodes, alarm_performance,
                                     choose_threshold, fold_assignment,
                                     random_baseline, region_max_probs,
                                     roc_auc, uniform_baseline, window_pr)
from drillexplain.features import SegmentIndex
from drillexplain.shapley import select_top
from drillexplain.telemetry import MNEMONICS, AccidentEvent, ReferenceRegion


def pair_counting_auc(scores, labels):
    """Rank-statistic oracle: concordant pairs plus half credit for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc(np.array([0.1, 0.2, 0.8, 0.9]),
                       np.array([0, 0, 1, 1])) == 1.0

    def test_hand_example(self):
        # pairs (pos, neg): (.35,.1) (.35,.4) (.8,.1) (.8,.4): 3 of 4 concordant
        auc = roc_auc(np.array([0.1, 0.4, 0.35, 0.8]), np.array([0, 0, 1, 1]))
        assert auc == pytest.approx(0.75)

    def test_reversed_scores_give_zero(self):
        assert roc_auc(np.array([0.9, 0.8, 0.1, 0.2]),
                       np.array([0, 0, 1, 1])) == 0.0

    def test_all_tied_scores_give_half(self):
        assert roc_auc(np.ones(6), np.array([0, 1, 0, 1, 0, 1])) == \
            pytest.approx(0.5)

    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            n = int(rng.integers(4, 51))
            labels = rng.integers(0, 2, size=n)
            while labels.min() == labels.max():
                labels = rng.integers(0, 2, size=n)
            # coarse grid of score values forces plenty of ties
            scores = rng.integers(0, 6, size=n).astype(np.float64) / 5.0
            assert roc_auc(scores, labels) == pytest.approx(
                pair_counting_auc(scores, labels), abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(1)
        scores = rng.random(40)
        labels = rng.integers(0, 2, size=40)
        labels[0], labels[1] = 0, 1
        transformed = np.exp(3.0 * scores) + 7.0
        assert roc_auc(scores, labels) == pytest.approx(
            roc_auc(transformed, labels), abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(EvaluationError, match="both classes"):
            roc_auc(np.array([0.1, 0.2]), np.array([1, 1]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(UsageError):
            roc_auc(np.array([0.1, 0.2]), np.array([1, 0, 1]))


class TestFoldAssignment:
    def test_every_well_in_exactly_one_fold(self):
        wells = [f"w{i:02d}" for i in range(20)]
        plan = fold_assignment(wells, n_folds=5, seed=3)
        assert sorted(plan) == wells
        sizes = np.bincount(list(plan.values()), minlength=5)
        assert sizes.tolist() == [4, 4, 4, 4, 4]

    def test_input_order_does_not_matter(self):
        wells = [f"w{i}" for i in range(9)]
        shuffled = list(reversed(wells))
        assert fold_assignment(wells, 3, seed=1) == \
            fold_assignment(shuffled, 3, seed=1)

    def test_deterministic_per_seed(self):
        wells = [f"w{i}" for i in range(10)]
        assert fold_assignment(wells, 5, seed=2) == \
            fold_assignment(wells, 5, seed=2)
        assert fold_assignment(wells, 5, seed=2) != \
            fold_assignment(wells, 5, seed=3)

    def test_too_few_wells_rejected(self):
        with pytest.raises(UsageError, match="folds"):
            fold_assignment(["a", "b", "c"], n_folds=5)


def flat_series(n: int, step: float = 10.0, base: float = 0.1):
    times = np.arange(n) * step
    return times, np.full(n, base)


class TestAlarmEpisodes:
    def test_no_crossings(self):
        times, probs = flat_series(100)
        assert alarm_episodes(times, probs, 0.5) == []

    def test_contiguous_crossing_is_one_episode(self):
        times, probs = flat_series(100)
        probs[40:50] = 0.9
        assert alarm_episodes(times, probs, 0.5) == [(400.0, 490.0)]

    def test_gap_within_debounce_merges(self):
        times, probs = flat_series(100)
        probs[10] = 0.9
        probs[16] = 0.9  # 60 s later, on the debounce boundary
        assert alarm_episodes(times, probs, 0.5) == [(100.0, 160.0)]

    def test_gap_beyond_debounce_splits(self):
        times, probs = flat_series(100)
        probs[10] = 0.9
        probs[17] = 0.9  # 70 s later
        assert alarm_episodes(times, probs, 0.5) == [(100.0, 100.0),
                                                     (170.0, 170.0)]


def one_event(kind: str, well: str = "w0", start: float = 1000.0,
              end: float = 2000.0, event_id: str = "ev0") -> AccidentEvent:
    return AccidentEvent(well_id=well, kind=kind, event_time=end,
                         region_start=start, region_end=end, event_id=event_id)


class TestAlarmPerformance:
    def test_crossing_inside_region_covers_event(self):
        times, probs = flat_series(500)
        probs[120] = 0.9  # t=1200 inside [1000, 2000]
        report = alarm_performance({"w0": (times, probs)},
                                   [one_event("Stuck")], 0.5, "Stuck")
        assert report.n_events == 1
        assert report.n_covered == 1
        assert report.false_episodes == 0
        assert report.coverage == 1.0

    def test_wrong_type_region_counts_as_false(self):
        times, probs = flat_series(500)
        probs[120] = 0.9  # inside the Mudloss region but scored as Stuck
        report = alarm_performance({"w0": (times, probs)},
                                   [one_event("Mudloss")], 0.5, "Stuck")
        assert report.n_covered == 0
        assert report.false_episodes == 1

    def test_false_alarm_rate_arithmetic(self):
        # 3 isolated crossings over 1.5 evaluated days, no regions
        step = 10.0
        n = int(1.5 * 86400.0 / step) + 1
        times = np.arange(n) * step
        probs = np.full(n, 0.1)
        probs[[1000, 5000, 9000]] = 0.9
        report = alarm_performance({"w0": (times, probs)}, [], 0.5, "Stuck")
        assert report.exposure_days == pytest.approx(1.5)
        assert report.false_episodes == 3
        assert report.false_alarms_per_day == pytest.approx(2.0)

    def test_burst_debounces_to_one_false_episode(self):
        times, probs = flat_series(1000)
        probs[100:105] = 0.9  # 50 s of consecutive crossings, no regions
        report = alarm_performance({"w0": (times, probs)}, [], 0.5, "Stuck")
        assert report.false_episodes == 1

    def test_raising_threshold_never_adds_coverage_or_moments(self):
        rng = np.random.default_rng(4)
        times = np.arange(2000) * 10.0
        probs = rng.random(2000)
        events = [one_event("Stuck", start=3000.0, end=6000.0)]
        prev_cov, prev_moments = None, None
        for thr in (0.2, 0.5, 0.8, 0.95):
            rep = alarm_performance({"w0": (times, probs)}, events, thr,
                                    "Stuck")
            moments = int(np.sum(probs >= thr))
            if prev_cov is not None:
                assert rep.n_covered <= prev_cov
                assert moments <= prev_moments
            prev_cov, prev_moments = rep.n_covered, moments

    def test_report_rates_with_no_exposure(self):
        report = AlarmReport(kind="Stuck", threshold=0.5, n_events=0,
                             n_covered=0, false_episodes=0, exposure_days=0.0)
        assert report.coverage == 0.0
        assert report.false_alarms_per_day == 0.0


class TestChooseThreshold:
    def test_pushes_threshold_to_coverage_boundary(self):
        maxima = np.array([0.9, 0.8, 0.5, 0.3])
        thr = choose_threshold(maxima, 0.70)
        assert thr == 0.5  # 3 of 4 events stay covered
        assert np.mean(maxima >= thr) >= 0.70
        assert np.mean(maxima >= 0.8) < 0.70  # next candidate up fails

    def test_full_coverage_takes_the_minimum(self):
        assert choose_threshold(np.array([0.9, 0.8, 0.5, 0.3]), 1.0) == 0.3

    def test_exact_fraction_boundary(self):
        assert choose_threshold(np.array([0.9, 0.8, 0.5, 0.3]), 0.5) == 0.8

    def test_region_max_probs_feeds_threshold(self):
        times, probs = flat_series(500)
        probs[150] = 0.7
        maxima = region_max_probs({"w0": (times, probs)},
                                  [one_event("Stuck")], "Stuck")
        assert maxima.tolist() == [0.7]
        assert choose_threshold(maxima, COVERAGE_TARGETS["Stuck"]) == 0.7

    def test_event_without_samples_scores_zero(self):
        times, probs = flat_series(10)  # ends at t=90, region starts later
        maxima = region_max_probs({"w0": (times, probs)},
                                  [one_event("Stuck")], "Stuck")
        assert maxima.tolist() == [0.0]

    def test_bad_target_rejected(self):
        with pytest.raises(UsageError):
            choose_threshold(np.array([0.5]), 0.0)

    def test_no_events_rejected(self):
        with pytest.raises(EvaluationError):
            choose_threshold(np.array([]), 0.5)


def make_index(labels: np.ndarray, k: int = 4) -> SegmentIndex:
    return SegmentIndex(labels=labels.astype(np.int32), k=k, tau_len=30,
                        stride=6)


def hkla_ref(start: float, end: float) -> ReferenceRegion:
    return ReferenceRegion(event_id="ev0", channel="HKLA", start=start,
                           end=end)


class TestWindowPr:
    """Tau t of a stride-6 window at step 10 s spans [60t, 60t + 300)."""

    def test_hand_counted_fixture(self):
        # cluster 1 highlights tau 0 and tau 40; the reference covers
        # tau 0..3, so one of two highlights hits a quarter of the truth
        labels = np.zeros((12, 56), dtype=np.int32)
        labels[0, 0] = 1
        labels[0, 40] = 1
        pr = window_pr(make_index(labels), np.array([1]), 0.0, 10.0,
                       "Stuck", [hkla_ref(0.0, 240.0)])
        assert (pr.tp_strict, pr.fp_strict, pr.fn_strict) == (1, 1, 3)
        assert pr.precision_strict == 0.5
        assert pr.recall_strict == 0.25

    def test_perfect_highlighting(self):
        labels = np.zeros((12, 56), dtype=np.int32)
        labels[0, :4] = 1
        pr = window_pr(make_index(labels), np.array([1]), 0.0, 10.0,
                       "Stuck", [hkla_ref(0.0, 240.0)])
        assert pr.precision_strict == 1.0
        assert pr.recall_strict == 1.0

    def test_extended_tp_at_least_strict_tp(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            labels = rng.integers(0, 4, size=(12, 56))
            selected = rng.choice(48, size=6, replace=False)
            refs = [hkla_ref(0.0, 600.0),
                    ReferenceRegion(event_id="ev0", channel="TQA",
                                    start=300.0, end=900.0)]
            pr = window_pr(make_index(labels), selected, 0.0, 10.0,
                           "Stuck", refs)
            assert pr.tp_extended >= pr.tp_strict

    def test_counts_account_for_all_highlights(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(0, 4, size=(12, 56))
        selected = np.array([1, 9, 30])
        pr = window_pr(make_index(labels), selected, 0.0, 10.0, "Stuck",
                       [hkla_ref(100.0, 700.0)])
        n_highlighted = sum(
            int(np.sum(labels[f // 4] == f % 4)) for f in selected)
        assert pr.tp_strict + pr.fp_strict == n_highlighted
        assert pr.tp_extended + pr.fp_extended == n_highlighted

    def test_off_channel_highlight_is_false_positive(self):
        labels = np.zeros((12, 56), dtype=np.int32)
        labels[5, 0] = 2  # TQA tau 0, but the reference is on HKLA
        pr = window_pr(make_index(labels), np.array([5 * 4 + 2]), 0.0, 10.0,
                       "Stuck", [hkla_ref(0.0, 240.0)])
        assert pr.tp_strict == 0
        assert pr.fp_strict == 1
        # TQA is in the stuck related set, so the extended rule accepts it
        assert pr.tp_extended == 1

    def test_unrelated_channel_stays_false_in_extended(self):
        labels = np.zeros((12, 56), dtype=np.int32)
        labels[11, 0] = 2  # GASA is not in the stuck related set
        pr = window_pr(make_index(labels), np.array([11 * 4 + 2]), 0.0, 10.0,
                       "Stuck", [hkla_ref(0.0, 240.0)])
        assert pr.tp_extended == 0
        assert pr.fp_extended == 1

    def test_empty_references_rejected(self):
        labels = np.zeros((12, 56), dtype=np.int32)
        with pytest.raises(EvaluationError, match="reference"):
            window_pr(make_index(labels), np.array([1]), 0.0, 10.0,
                      "Stuck", [])

    def test_unknown_kind_rejected(self):
        labels = np.zeros((12, 56), dtype=np.int32)
        with pytest.raises(UsageError, match="accident type"):
            window_pr(make_index(labels), np.array([1]), 0.0, 10.0,
                      "Twister", [hkla_ref(0.0, 240.0)])

    def test_micro_counts_merge_by_summation(self):
        a = PrCounts(tp_strict=1, fp_strict=1, fn_strict=3)
        b = PrCounts(tp_strict=4, fp_strict=0, fn_strict=0)
        merged = PrCounts().add(a).add(b)
        assert merged.precision_strict == pytest.approx(5.0 / 6.0)
        assert merged.recall_strict == pytest.approx(5.0 / 8.0)
        doc = merged.as_dict()
        assert doc["strict"]["tp"] == 5
        assert doc["extended"]["recall"] == 0.0


class TestBaselines:
    def test_random_is_seed_repeatable(self):
        assert np.array_equal(random_baseline(100, 10, seed=5),
                              random_baseline(100, 10, seed=5))
        assert not np.array_equal(random_baseline(100, 10, seed=5),
                                  random_baseline(100, 10, seed=6))

    def test_random_shape_and_range(self):
        draws = random_baseline(2400, 10, seed=0)
        assert draws.shape == (10, 2400)
        assert np.all((draws >= 0.0) & (draws < 1.0))

    def test_random_selected_fraction_tracks_cutoff(self):
        # fraction selected at cutoff m is about 1 - m/100 for uniform draws
        draws = random_baseline(2400, 40, seed=1)
        for m, expected in ((30.0, 0.70), (45.0, 0.55)):
            frac = np.mean([select_top(v, m).size / 2400.0 for v in draws])
            assert frac == pytest.approx(expected, abs=0.02)

    def test_random_rejects_bad_arguments(self):
        with pytest.raises(UsageError):
            random_baseline(0, 10)
        with pytest.raises(UsageError):
            random_baseline(10, 0)

    def test_uniform_selects_everything(self):
        vec = uniform_baseline(48)
        assert np.array_equal(vec, np.ones(48))
        assert select_top(vec, 45.0).size == 48

    def test_uniform_recall_is_one(self):
        rng = np.random.default_rng(7)
        labels = rng.integers(0, 4, size=(12, 56))
        selected = select_top(uniform_baseline(48), 45.0)
        pr = window_pr(make_index(labels), selected, 0.0, 10.0, "Stuck",
                       [hkla_ref(50.0, 1300.0)])
        assert pr.recall_strict == 1.0
        assert pr.recall_extended == 1.0
        assert pr.fn_strict == 0

    def test_uniform_precision_is_reference_fraction(self):
        rng = np.random.default_rng(8)
        labels = rng.integers(0, 4, size=(12, 56))
        index = make_index(labels)
        selected = select_top(uniform_baseline(48), 45.0)
        pr = window_pr(index, selected, 0.0, 10.0, "Stuck",
                       [hkla_ref(50.0, 1300.0)])
        total_units = labels.size
        relevant = pr.tp_strict + pr.fn_strict
        assert pr.precision_strict == pytest.approx(relevant / total_units)


class TestConstants:
    def test_extended_sets_are_known_mnemonics(self):
        for kind, names in EXTENDED_PARAMS.items():
            assert names <= set(MNEMONICS), kind

    def test_coverage_targets(self):
        assert COVERAGE_TARGETS == {"KickFlow": 0.70, "Stuck": 0.60,
                                    "Washout": 0.60, "Mudloss": 0.55}

    def test_debounce_is_one_minute(self):
        assert DEBOUNCE_SECONDS == 60.0


@given(st.integers(min_value=2, max_value=30), st.integers(min_value=0))
@settings(max_examples=30, deadline=None)
def test_auc_oracle_property(n, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    scores = rng.integers(0, 4, size=n).astype(np.float64)
    assert roc_auc(scores, labels) == pytest.approx(
        pair_counting_auc(scores, labels), abs=1e-12)
