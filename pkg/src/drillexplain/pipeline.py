"""Sliding-window plumbing between telemetry logs and the models.

A moment is a one-hour trailing window on the 10-second grid.  This module
enumerates labeled training moments, batches their count vectors through
precomputed tau-segment labels, scores whole wells at every grid step, and
thins above-threshold in-region moments into the alarm moments that get
explained.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .features import CodebookSet, SegmentIndex, assign_series, counts_matrix
from .telemetry import (MNEMONICS, WINDOW_SAMPLES, AccidentEvent,
                        ReferenceRegion, Segment, TelemetryLog,
                        ValidityLimits, clean, load_events, parse_csv)

POSITIVE_STRIDE_SECONDS = 300.0
NEGATIVE_STRIDE_SECONDS = 600.0
NEGATIVE_CLEARANCE_SECONDS = 600.0


@dataclass(frozen=True)
class Corpus:
    """A directory of cleaned well logs plus its event annotations."""

    logs: dict[str, TelemetryLog]
    events: list[AccidentEvent]
    references: list[ReferenceRegion]
    limits: ValidityLimits


def load_corpus(path: str | Path) -> Corpus:
    """Read a corpus directory: per-well CSVs, events.json, limits.json.

    Channel limits default when limits.json is absent; the events file is
    required only by commands that consume it, so it may be empty here.
    """
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"corpus directory not found: {root}")
    limits_path = root / "limits.json"
    limits = ValidityLimits.load(limits_path) if limits_path.exists() else ValidityLimits()
    csvs = sorted(root.glob("*.csv"))
    if not csvs:
        raise DataError(f"no well CSV files in {root}")
    logs = {}
    for p in csvs:
        log = clean(parse_csv(p), limits)
        logs[log.well_id] = log
    events_path = root / "events.json"
    events, references = load_events(events_path) if events_path.exists() else ([], [])
    return Corpus(logs=logs, events=events, references=references, limits=limits)


@dataclass(frozen=True)
class WindowRef:
    """One enumerated moment; end_index is exclusive as in Segment."""

    well_id: str
    end_index: int
    end_time: float  # timestamp of the window's last sample
    kind: str | None  # accident type when the moment lies in a region


def enumerate_windows(
    logs: dict[str, TelemetryLog],
    events: list[AccidentEvent],
    positive_stride: float = POSITIVE_STRIDE_SECONDS,
    negative_stride: float = NEGATIVE_STRIDE_SECONDS,
    clearance: float = NEGATIVE_CLEARANCE_SECONDS,
) -> list[WindowRef]:
    """Training/evaluation moments: in-region positives, cleared negatives.

    Positives step through each reference region; negatives step through the
    rest of the log, skipping any window that comes within clearance seconds
    of a region so near-boundary windows train neither class.
    """
    out: list[WindowRef] = []
    for well in sorted(logs):
        log = logs[well]
        evs = [e for e in events if e.well_id == well]
        pos_step = max(1, int(round(positive_stride / log.step)))
        neg_step = max(1, int(round(negative_stride / log.step)))
        for ev in sorted(evs, key=lambda e: e.region_start):
            i0 = log.time_to_index(ev.region_start)
            i1 = log.time_to_index(ev.region_end)
            for i in range(i0 + pos_step, i1 + 1, pos_step):
                if i + 1 < WINDOW_SAMPLES or i + 1 > log.n_samples:
                    continue
                out.append(WindowRef(well, i + 1, log.index_to_time(i), ev.kind))
        for i in range(WINDOW_SAMPLES - 1, log.n_samples, neg_step):
            t = log.index_to_time(i)
            w0 = t - (WINDOW_SAMPLES - 1) * log.step
            if any(t + clearance >= ev.region_start
                   and w0 - clearance <= ev.region_end for ev in evs):
                continue
            out.append(WindowRef(well, i + 1, t, None))
    return out


def hour_segments(logs: dict[str, TelemetryLog],
                  wells: list[str] | None = None) -> list[Segment]:
    """Non-overlapping full-hour segments covering the given wells."""
    out = []
    for well in sorted(logs) if wells is None else wells:
        log = logs[well]
        for end in range(WINDOW_SAMPLES, log.n_samples + 1, WINDOW_SAMPLES):
            out.append(Segment(log, end))
    return out


def type_labels(windows: list[WindowRef], kind: str) -> np.ndarray:
    """One-vs-rest binary labels for one accident type."""
    return np.asarray([1 if w.kind == kind else 0 for w in windows],
                      dtype=np.int64)


def well_tau_labels(log: TelemetryLog, codebooks: CodebookSet) -> np.ndarray:
    """Cluster labels for every tau-segment start of a well, (12, n_starts)."""
    return np.stack([
        assign_series(log.data[name], codebooks.codebooks[name],
                      codebooks.tau_len)
        for name in MNEMONICS
    ])


def window_matrix(windows: list[WindowRef],
                  tau_labels: dict[str, np.ndarray],
                  codebooks: CodebookSet) -> np.ndarray:
    """Count vectors for the given moments, rows in enumeration order."""
    X = np.empty((len(windows), codebooks.n_features), dtype=np.float64)
    by_well: dict[str, list[int]] = {}
    for i, w in enumerate(windows):
        by_well.setdefault(w.well_id, []).append(i)
    for well, idxs in by_well.items():
        starts = np.asarray([windows[i].end_index - WINDOW_SAMPLES
                             for i in idxs], dtype=np.int64)
        X[idxs] = counts_matrix(tau_labels[well], starts, codebooks.k,
                                codebooks.tau_len, codebooks.stride)
    return X


def window_index(tau_labels: np.ndarray, end_index: int,
                 codebooks: CodebookSet) -> SegmentIndex:
    """SegmentIndex of one window, sliced out of the precomputed labels."""
    s = end_index - WINDOW_SAMPLES
    n_tau = (WINDOW_SAMPLES - codebooks.tau_len) // codebooks.stride + 1
    stop = s + codebooks.stride * n_tau
    labels = np.ascontiguousarray(
        tau_labels[:, s:stop:codebooks.stride], dtype=np.int32)
    return SegmentIndex(labels=labels, k=codebooks.k,
                        tau_len=codebooks.tau_len, stride=codebooks.stride)


def probability_series(log: TelemetryLog, tau_labels: np.ndarray,
                       models: dict, codebooks: CodebookSet,
                       ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Per-type accident probability at every full-window grid step."""
    ends = np.arange(WINDOW_SAMPLES, log.n_samples + 1, dtype=np.int64)
    X = counts_matrix(tau_labels, ends - WINDOW_SAMPLES, codebooks.k,
                      codebooks.tau_len, codebooks.stride)
    times = log.start + (ends - 1) * log.step
    return times, {kind: model.predict_proba(X) for kind, model in models.items()}


def alarm_moments(times: np.ndarray, probs: np.ndarray, threshold: float,
                  region_start: float, region_end: float,
                  min_gap: float = 60.0) -> list[float]:
    """In-region above-threshold moments, thinned to at most one per min_gap."""
    mask = (times >= region_start) & (times <= region_end) & (probs >= threshold)
    picked: list[float] = []
    last = -np.inf
    for t in times[mask]:
        if t - last >= min_gap:
            picked.append(float(t))
            last = t
    return picked
