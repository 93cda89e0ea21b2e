"""Raw drilling telemetry: parsing, validity clipping, resampling, windowing.

Logs carry the 12 standard WITSML surface channels.  All downstream stages
assume the fixed 10-second grid and the one-hour (360 sample) analysis
window produced here.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import FormatError, GapError, SchemaError, UsageError, WindowError

# Canonical channel order.  The feature-vector layout (module features) is
# channel-major in exactly this order, so it must never be reordered.
MNEMONICS: tuple[str, ...] = (
    "HKLA", "WOB", "BPOS", "DBTM", "DMEA", "TQA",
    "RPMA", "SPPA", "MFIA", "MFOA", "TVT", "GASA",
)

STEP_SECONDS = 10.0
WINDOW_SAMPLES = 360  # one hour at the 10-second step

ACCIDENT_TYPES: tuple[str, ...] = ("Stuck", "Mudloss", "KickFlow", "Washout")

# Repo-convention validity bounds per channel (unit conventions: tonnes,
# metres, kN*m, rpm, MPa, L/s, m3, percent).  These are plausibility gates
# for the synthetic pipeline, not field-calibrated limits.
DEFAULT_LIMITS: dict[str, tuple[float, float]] = {
    "HKLA": (0.0, 500.0),
    "WOB": (-5.0, 80.0),
    "BPOS": (-5.0, 50.0),
    "DBTM": (0.0, 12000.0),
    "DMEA": (0.0, 12000.0),
    "TQA": (0.0, 100.0),
    "RPMA": (0.0, 400.0),
    "SPPA": (0.0, 50.0),
    "MFIA": (0.0, 100.0),
    "MFOA": (0.0, 120.0),
    "TVT": (0.0, 400.0),
    "GASA": (0.0, 100.0),
}


class ValidityLimits(dict):
    """Per-channel (min, max) bounds; values outside are treated as absent."""

    def __init__(self, bounds: dict[str, tuple[float, float]] | None = None):
        super().__init__(bounds if bounds is not None else DEFAULT_LIMITS)
        for name, (lo, hi) in self.items():
            if name not in MNEMONICS:
                raise SchemaError(f"unknown mnemonic in limits: {name}")
            if not lo < hi:
                raise FormatError(f"limits for {name} need min < max, got ({lo}, {hi})")
        missing = [m for m in MNEMONICS if m not in self]
        if missing:
            raise SchemaError(f"limits missing channels: {', '.join(missing)}")

    @classmethod
    def load(cls, path: str | Path) -> "ValidityLimits":
        with open(path) as fh:
            raw = json.load(fh)
        return cls({k: (float(v[0]), float(v[1])) for k, v in raw.items()})

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump({k: list(v) for k, v in self.items()}, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class RawLog:
    """Irregularly sampled telemetry as parsed, one (times, values) pair per channel."""

    well_id: str
    channels: dict[str, tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        for name, (times, values) in self.channels.items():
            if len(times) != len(values):
                raise FormatError(f"{name}: times/values length mismatch")
            if len(times) > 1 and not np.all(np.diff(times) > 0):
                raise FormatError(f"{name}: timestamps not strictly increasing")


@dataclass(frozen=True)
class TelemetryLog:
    """Cleaned telemetry on the uniform 10-second grid, all channels present."""

    well_id: str
    start: float  # epoch seconds of the first grid sample
    data: dict[str, np.ndarray] = field(repr=False)
    step: float = STEP_SECONDS

    def __post_init__(self):
        lengths = {len(v) for v in self.data.values()}
        if set(self.data) != set(MNEMONICS) or len(lengths) != 1:
            raise FormatError("telemetry log must carry all 12 channels at equal length")

    @property
    def n_samples(self) -> int:
        return len(self.data[MNEMONICS[0]])

    @property
    def end(self) -> float:
        """One step past the last sample; each sample covers [t, t + step)."""
        return self.start + self.n_samples * self.step

    def time_to_index(self, t: float) -> int:
        """Grid index at or before t (rounds down)."""
        return int(np.floor((t - self.start) / self.step))

    def index_to_time(self, i: int) -> float:
        return self.start + i * self.step

    def sample_equal(self, other: "TelemetryLog") -> bool:
        return (
            self.well_id == other.well_id
            and self.start == other.start
            and self.n_samples == other.n_samples
            and all(np.array_equal(self.data[m], other.data[m]) for m in MNEMONICS)
        )


@dataclass(frozen=True)
class Segment:
    """One-hour analysis window: 360 samples per channel ending at end_index."""

    log: TelemetryLog
    end_index: int  # exclusive; window covers [end_index - 360, end_index)

    def __post_init__(self):
        if self.end_index < WINDOW_SAMPLES or self.end_index > self.log.n_samples:
            raise WindowError(
                f"window [{self.end_index - WINDOW_SAMPLES}, {self.end_index}) "
                f"not inside log of {self.log.n_samples} samples"
            )

    @property
    def start_index(self) -> int:
        return self.end_index - WINDOW_SAMPLES

    @property
    def end_time(self) -> float:
        return self.log.index_to_time(self.end_index - 1) + self.log.step

    def values(self, channel: str) -> np.ndarray:
        return self.log.data[channel][self.start_index:self.end_index]


@dataclass(frozen=True)
class AccidentEvent:
    """A labeled accident with the reference region in which an alarm counts."""

    well_id: str
    kind: str  # one of ACCIDENT_TYPES
    event_time: float
    region_start: float
    region_end: float
    event_id: str = ""

    def __post_init__(self):
        if self.kind not in ACCIDENT_TYPES:
            raise FormatError(f"unknown accident type: {self.kind}")
        if not (self.region_start <= self.event_time <= self.region_end):
            raise FormatError("reference region must contain the event time")


@dataclass(frozen=True)
class ReferenceRegion:
    """Expert-style anomaly interval on a single channel, tied to one event."""

    event_id: str
    channel: str
    start: float
    end: float


def _parse_time(token: str) -> float:
    """Accept epoch seconds or ISO-8601; naive timestamps are taken as UTC."""
    try:
        return float(token)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(token)
    except ValueError as exc:
        raise FormatError(f"unparseable timestamp: {token!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def parse_csv(path: str | Path) -> RawLog:
    """Read a telemetry CSV into a RawLog.

    Expected header: ``time`` plus the 12 mnemonics.  Empty or unparseable
    value cells become missing samples on that channel only; a missing
    header column or a non-monotonic time column is an error.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "time" not in header:
            raise SchemaError(f"{path}: missing required column time")
        missing = [m for m in MNEMONICS if m not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column {missing[0]}")
        col = {name: header.index(name) for name in MNEMONICS}
        tcol = header.index("time")

        times: dict[str, list[float]] = {m: [] for m in MNEMONICS}
        values: dict[str, list[float]] = {m: [] for m in MNEMONICS}
        prev_t = None
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            t = _parse_time(row[tcol].strip())
            if prev_t is not None and t <= prev_t:
                raise FormatError(f"{path}: non-monotonic timestamps at t={t}")
            prev_t = t
            for name in MNEMONICS:
                cell = row[col[name]].strip() if col[name] < len(row) else ""
                if not cell:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    continue  # unparseable cell counts as missing
                if not np.isfinite(v):
                    continue
                times[name].append(t)
                values[name].append(v)

    channels = {
        m: (np.asarray(times[m], dtype=float), np.asarray(values[m], dtype=float))
        for m in MNEMONICS
    }
    return RawLog(well_id=path.stem, channels=channels)


def write_csv(log: TelemetryLog, path: str | Path) -> None:
    """Write a cleaned log so that parse_csv + clean round-trips exactly.

    Floats are emitted with repr, which round-trips bit-exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("time",) + MNEMONICS)
        for i in range(log.n_samples):
            t = log.index_to_time(i)
            writer.writerow([repr(t)] + [repr(float(log.data[m][i])) for m in MNEMONICS])


def clean(
    raw: RawLog,
    limits: ValidityLimits | None = None,
    step: float = STEP_SECONDS,
    grid_start: float | None = None,
    grid_end: float | None = None,
) -> TelemetryLog:
    """Clip out-of-range samples, then resample onto the uniform grid.

    Out-of-range values are discarded (treated as missing) before the fill,
    and every grid point takes the last valid observation at or before it.
    The grid spans the union of the channels' time extents unless overridden.
    """
    limits = limits if limits is not None else ValidityLimits()

    valid: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    t_lo, t_hi = np.inf, -np.inf
    for name in MNEMONICS:
        times, vals = raw.channels.get(name, (np.empty(0), np.empty(0)))
        lo, hi = limits[name]
        keep = (vals >= lo) & (vals <= hi)
        times, vals = times[keep], vals[keep]
        valid[name] = (times, vals)
        if len(times):
            t_lo = min(t_lo, times[0])
            t_hi = max(t_hi, times[-1])

    if grid_start is None:
        grid_start = t_lo
    if grid_end is None:
        grid_end = t_hi
    if not np.isfinite(grid_start) or grid_end < grid_start:
        raise GapError(f"{raw.well_id}: no valid samples to build a grid from")

    n = int(np.floor((grid_end - grid_start) / step)) + 1
    grid = grid_start + step * np.arange(n)

    data: dict[str, np.ndarray] = {}
    for name in MNEMONICS:
        times, vals = valid[name]
        if len(times) == 0 or times[0] > grid_start:
            raise GapError(f"{raw.well_id}: channel {name} has no valid sample at or "
                           "before the grid start")
        # last observation carried forward onto the grid
        idx = np.searchsorted(times, grid, side="right") - 1
        data[name] = vals[idx]

    return TelemetryLog(well_id=raw.well_id, start=float(grid_start), data=data, step=step)


def window(log: TelemetryLog, end_time: float) -> Segment:
    """One-hour segment of the samples in [end_time - 3600, end_time).

    The end rounds down to the grid, so an off-grid end never borrows a
    sample from after it.
    """
    end_index = min(log.time_to_index(end_time), log.n_samples)
    if end_index < WINDOW_SAMPLES:
        raise WindowError(f"{log.well_id}: less than one hour of history before "
                          f"t={end_time}")
    return Segment(log=log, end_index=end_index)


def load_events(path: str | Path) -> tuple[list[AccidentEvent], list[ReferenceRegion]]:
    """Read the events file: accident events plus per-channel reference intervals."""
    with open(path) as fh:
        doc = json.load(fh)
    events = [
        AccidentEvent(
            well_id=e["well_id"],
            kind=e["type"],
            event_time=float(e["event_time"]),
            region_start=float(e["region_start"]),
            region_end=float(e["region_end"]),
            event_id=e.get("event_id", f"ev{i:04d}"),
        )
        for i, e in enumerate(doc.get("events", []))
    ]
    references = [
        ReferenceRegion(
            event_id=r["event_id"],
            channel=r["channel"],
            start=float(r["start"]),
            end=float(r["end"]),
        )
        for r in doc.get("references", [])
    ]
    for ref in references:
        if ref.channel not in MNEMONICS:
            raise SchemaError(f"reference on unknown channel {ref.channel}")
    return events, references


def save_events(
    events: list[AccidentEvent],
    references: list[ReferenceRegion],
    path: str | Path,
) -> None:
    doc = {
        "events": [
            {
                "event_id": e.event_id,
                "well_id": e.well_id,
                "type": e.kind,
                "event_time": e.event_time,
                "region_start": e.region_start,
                "region_end": e.region_end,
            }
            for e in events
        ],
        "references": [
            {"event_id": r.event_id, "channel": r.channel, "start": r.start, "end": r.end}
            for r in references
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def channel_index(name: str) -> int:
    try:
        return MNEMONICS.index(name)
    except ValueError:
        raise UsageError(f"unknown mnemonic: {name}") from None
