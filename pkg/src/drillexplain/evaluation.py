"""Evaluation: ranking quality, alarm operating points, explanation PR.

Alarm quality is measured per accident type: coverage is the fraction of
events whose reference region contains at least one alarm at the chosen
threshold, and false alarms are debounced out-of-region alarm episodes per
day of telemetry.  Explanation quality treats each highlighted tau-segment
as one retrieval unit and scores it against expert-style reference regions,
either strictly (same channel) or with a per-accident-type set of related
channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, UsageError
from .features import SegmentIndex
from .telemetry import MNEMONICS, AccidentEvent, ReferenceRegion

# Channels that plausibly react to each accident type; a highlighted segment
# on any of them may count as a hit in extended scoring.
EXTENDED_PARAMS: dict[str, frozenset[str]] = {
    "KickFlow": frozenset({"GASA", "TVT", "MFIA", "MFOA", "DBTM", "DMEA"}),
    "Mudloss": frozenset({"TVT", "SPPA", "MFIA", "MFOA", "DBTM", "DMEA"}),
    "Stuck": frozenset({"HKLA", "BPOS", "WOB", "TQA", "RPMA", "DBTM", "DMEA"}),
    "Washout": frozenset({"TVT", "SPPA", "MFIA", "MFOA", "TQA", "DBTM", "DMEA"}),
}

# Fraction of each type's events an operating threshold must cover.
COVERAGE_TARGETS: dict[str, float] = {
    "KickFlow": 0.70,
    "Stuck": 0.60,
    "Washout": 0.60,
    "Mudloss": 0.55,
}

DEBOUNCE_SECONDS = 60.0


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve by the trapezoid rule with tie grouping.

    Tied scores form one curve vertex, so ties contribute diagonal segments
    (half credit), matching rank-statistic pair counting exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise UsageError("scores and labels must be equal-length vectors")
    if not np.all((labels == 0) | (labels == 1)):
        raise UsageError("labels must be 0 or 1")
    n_pos = int(np.sum(labels == 1))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order].astype(np.float64)
    group_last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = np.cumsum(y)[group_last]
    fp = np.cumsum(1.0 - y)[group_last]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    return float(np.trapezoid(tpr, fpr))


def fold_assignment(well_ids: list[str], n_folds: int = 5,
                    seed: int = 0) -> dict[str, int]:
    """Deterministic well-level fold split (every well in exactly one fold)."""
    unique = sorted(set(well_ids))
    if len(unique) < n_folds:
        raise UsageError(f"{len(unique)} wells cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(unique))
    folds = np.array_split(order, n_folds)
    out: dict[str, int] = {}
    for fold, members in enumerate(folds):
        for i in members:
            out[unique[i]] = fold
    return out


def alarm_episodes(times: np.ndarray, probs: np.ndarray, threshold: float,
                   debounce: float = DEBOUNCE_SECONDS) -> list[tuple[float, float]]:
    """Intervals of above-threshold probability; gaps <= debounce merge."""
    times = np.asarray(times, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    hit = times[probs >= threshold]
    if len(hit) == 0:
        return []
    breaks = np.nonzero(np.diff(hit) > debounce)[0]
    starts = np.r_[0, breaks + 1]
    ends = np.r_[breaks, len(hit) - 1]
    return [(float(hit[a]), float(hit[b])) for a, b in zip(starts, ends)]


@dataclass
class AlarmReport:
    kind: str
    threshold: float
    n_events: int
    n_covered: int
    false_episodes: int
    exposure_days: float

    @property
    def coverage(self) -> float:
        return self.n_covered / self.n_events if self.n_events else 0.0

    @property
    def false_alarms_per_day(self) -> float:
        return (self.false_episodes / self.exposure_days
                if self.exposure_days > 0 else 0.0)


def alarm_performance(
    series: dict[str, tuple[np.ndarray, np.ndarray]],
    events: list[AccidentEvent],
    threshold: float,
    kind: str,
    debounce: float = DEBOUNCE_SECONDS,
) -> AlarmReport:
    """Coverage of one accident type plus false-alarm rate at a threshold.

    series maps well id to (times, probabilities).  An event is covered
    when any above-threshold moment falls inside its reference region.
    Every moment outside the same-type regions of the well is false, so an
    alarm inside another type's region still counts against this model;
    false moments are counted as debounced episodes over evaluated days.
    """
    typed = [e for e in events if e.kind == kind]
    n_covered = 0
    for ev in typed:
        if ev.well_id not in series:
            continue
        times, probs = series[ev.well_id]
        hit = times[np.asarray(probs) >= threshold]
        if np.any((hit >= ev.region_start) & (hit <= ev.region_end)):
            n_covered += 1

    false_episodes = 0
    exposure = 0.0
    for well, (times, probs) in series.items():
        times = np.asarray(times, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        if len(times) == 0:
            continue
        exposure += (times[-1] - times[0]) / 86400.0
        in_region = np.zeros(len(times), dtype=bool)
        for ev in typed:
            if ev.well_id == well:
                in_region |= (times >= ev.region_start) & (times <= ev.region_end)
        out_times = times[~in_region]
        out_probs = probs[~in_region]
        false_episodes += len(alarm_episodes(out_times, out_probs, threshold,
                                             debounce))
    return AlarmReport(kind=kind, threshold=threshold, n_events=len(typed),
                       n_covered=n_covered, false_episodes=false_episodes,
                       exposure_days=exposure)


def region_max_probs(series: dict[str, tuple[np.ndarray, np.ndarray]],
                     events: list[AccidentEvent], kind: str) -> np.ndarray:
    """Highest in-region probability per event of the given type."""
    out = []
    for ev in events:
        if ev.kind != kind or ev.well_id not in series:
            continue
        times, probs = series[ev.well_id]
        times = np.asarray(times, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        inside = (times >= ev.region_start) & (times <= ev.region_end)
        out.append(float(probs[inside].max()) if inside.any() else 0.0)
    return np.asarray(out, dtype=np.float64)


def choose_threshold(max_probs: np.ndarray, target_coverage: float) -> float:
    """Largest threshold whose coverage still reaches the target.

    Candidates are the observed per-event in-region maxima; picking the
    ceil(target * n)-th largest keeps coverage >= target while pushing the
    threshold (and so the false-alarm rate) as high as possible.
    """
    if not 0.0 < target_coverage <= 1.0:
        raise UsageError("target coverage must be in (0, 1]")
    ms = np.sort(np.asarray(max_probs, dtype=np.float64))[::-1]
    if len(ms) == 0:
        raise EvaluationError("no events to choose a threshold from")
    k = max(1, math.ceil(target_coverage * len(ms) - 1e-12))
    return float(ms[k - 1])


def random_baseline(n_features: int, n_draws: int = 10,
                    seed: int = 0) -> np.ndarray:
    """Independent uniform importance vectors, one row per draw."""
    if n_features < 1 or n_draws < 1:
        raise UsageError("n_features and n_draws must be positive")
    rng = np.random.default_rng(seed)
    return rng.random((n_draws, n_features))


def uniform_baseline(n_features: int) -> np.ndarray:
    """Equal importance everywhere, so every feature gets selected."""
    if n_features < 1:
        raise UsageError("n_features must be positive")
    return np.ones(n_features)


@dataclass
class PrCounts:
    """Retrieval counts over highlighted tau-segment units."""

    tp_strict: int = 0
    fp_strict: int = 0
    fn_strict: int = 0
    tp_extended: int = 0
    fp_extended: int = 0
    fn_extended: int = 0

    def add(self, other: "PrCounts") -> "PrCounts":
        self.tp_strict += other.tp_strict
        self.fp_strict += other.fp_strict
        self.fn_strict += other.fn_strict
        self.tp_extended += other.tp_extended
        self.fp_extended += other.fp_extended
        self.fn_extended += other.fn_extended
        return self

    @staticmethod
    def _ratio(num: int, den: int) -> float:
        return num / den if den else 0.0

    @property
    def precision_strict(self) -> float:
        return self._ratio(self.tp_strict, self.tp_strict + self.fp_strict)

    @property
    def recall_strict(self) -> float:
        return self._ratio(self.tp_strict, self.tp_strict + self.fn_strict)

    @property
    def precision_extended(self) -> float:
        return self._ratio(self.tp_extended, self.tp_extended + self.fp_extended)

    @property
    def recall_extended(self) -> float:
        return self._ratio(self.tp_extended, self.tp_extended + self.fn_extended)

    def as_dict(self) -> dict:
        return {
            "strict": {"tp": self.tp_strict, "fp": self.fp_strict,
                       "fn": self.fn_strict,
                       "precision": self.precision_strict,
                       "recall": self.recall_strict},
            "extended": {"tp": self.tp_extended, "fp": self.fp_extended,
                         "fn": self.fn_extended,
                         "precision": self.precision_extended,
                         "recall": self.recall_extended},
        }


def window_pr(index: SegmentIndex, selected: np.ndarray, window_start: float,
              step: float, kind: str,
              references: list[ReferenceRegion]) -> PrCounts:
    """Score one explained window's highlighted tau-segments.

    A segment is a strict hit when its time span intersects a reference on
    its own channel.  The extended rule also accepts segments on any channel
    of the type's related set when they intersect a reference that is itself
    on a set channel.  Relevant units (recall denominators) follow the same
    two definitions over all of the window's tau-segments.
    """
    if kind not in EXTENDED_PARAMS:
        raise UsageError(f"unknown accident type: {kind}")
    if not references:
        raise EvaluationError("explanation scoring needs reference regions")
    ext_set = EXTENDED_PARAMS[kind]
    n_ch, n_tau = index.labels.shape

    # tau t covers [start + t*stride*step, start + (t*stride+tau_len)*step)
    t0 = window_start + np.arange(n_tau) * index.stride * step
    t1 = t0 + index.tau_len * step

    strict = np.zeros((n_ch, n_tau), dtype=bool)
    extended = np.zeros((n_ch, n_tau), dtype=bool)
    any_set_ref = np.zeros(n_tau, dtype=bool)
    for ref in references:
        overlap = (t0 < ref.end) & (t1 > ref.start)
        ci = MNEMONICS.index(ref.channel)
        strict[ci] |= overlap
        if ref.channel in ext_set:
            any_set_ref |= overlap
    for ci, name in enumerate(MNEMONICS):
        extended[ci] = strict[ci] | (any_set_ref if name in ext_set
                                     else np.zeros(n_tau, dtype=bool))

    hi = np.zeros((n_ch, n_tau), dtype=bool)
    for f in np.asarray(selected, dtype=np.int64):
        ci, cluster = divmod(int(f), index.k)
        hi[ci] |= index.labels[ci] == cluster

    tp_s = int(np.sum(hi & strict))
    tp_e = int(np.sum(hi & extended))
    n_hi = int(np.sum(hi))
    return PrCounts(
        tp_strict=tp_s,
        fp_strict=n_hi - tp_s,
        fn_strict=int(np.sum(strict)) - tp_s,
        tp_extended=tp_e,
        fp_extended=n_hi - tp_e,
        fn_extended=int(np.sum(extended)) - tp_e,
    )
