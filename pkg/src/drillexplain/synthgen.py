"""Seeded synthetic drilling corpus with injected accident signatures.

Each well alternates drilling and tripping regimes with per-channel noise,
and accidents superpose channel-specific anomaly shapes over the hour before
the event time.  The injected interval of every affected channel is written
out as that channel's reference region, so explanation scoring has exact
ground truth.  Baseline noise and the accident schedule draw from separate
seeded streams, which keeps the baseline identical when the schedule
changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UsageError
from .telemetry import (ACCIDENT_TYPES, MNEMONICS, STEP_SECONDS, AccidentEvent,
                        ReferenceRegion, TelemetryLog, ValidityLimits,
                        save_events, write_csv)

# Baseline noise level per channel; signature amplitudes are expressed in
# these units so anomalies stay well above noise.
NOISE_SIGMA: dict[str, float] = {
    "HKLA": 2.5, "WOB": 1.5, "BPOS": 0.8, "DBTM": 0.5, "DMEA": 0.2,
    "TQA": 1.2, "RPMA": 6.0, "SPPA": 0.8, "MFIA": 1.2, "MFOA": 1.5,
    "TVT": 0.8, "GASA": 0.4,
}

DEFAULT_COUNTS: dict[str, int] = {
    "KickFlow": 21, "Stuck": 9, "Washout": 6, "Mudloss": 4,
}

LEAD_SECONDS = 3600.0      # anomaly development time before the event
FIRST_EVENT_HOURS = 2.6    # earliest event, leaving history for windows
EVENT_SPACING_HOURS = 2.4  # separation between a well's event slots
JITTER_MINUTES = 10.0
REGIME_SCAN_MINUTES = 30.0  # how far an event may shift to stay in drilling


@dataclass(frozen=True)
class GenConfig:
    n_wells: int = 20
    hours_per_well: float = 6.0
    seed: int = 0
    start_time: float = 0.0
    counts: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_COUNTS))

    def __post_init__(self):
        if self.n_wells < 1 or self.hours_per_well <= 0:
            raise UsageError("need at least one well of positive duration")
        for kind in self.counts:
            if kind not in ACCIDENT_TYPES:
                raise UsageError(f"unknown accident type in counts: {kind}")


@dataclass
class CorpusBundle:
    logs: dict[str, TelemetryLog]
    events: list[AccidentEvent]
    references: list[ReferenceRegion]
    limits: ValidityLimits


def _interleave(counts: dict[str, int]) -> list[str]:
    """Proportionally interleaved type sequence, deterministic."""
    items: list[tuple[float, int, str]] = []
    for kind, c in counts.items():
        for k in range(c):
            items.append(((k + 0.5) / c, ACCIDENT_TYPES.index(kind), kind))
    items.sort()
    return [kind for _, _, kind in items]


def _regime_schedule(n: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean drilling mask over n samples (False = tripping).

    Drilling stretches are kept longer than the accident lead time so most
    events can develop inside a single regime.
    """
    drilling = np.empty(n, dtype=bool)
    pos = 0
    mode = True
    while pos < n:
        if mode:
            dur = int(rng.uniform(80, 140) * 6)  # minutes to 10 s samples
        else:
            dur = int(rng.uniform(15, 25) * 6)
        drilling[pos:pos + dur] = mode
        pos += dur
        mode = not mode
    return drilling


def _baseline_well(n: int, drilling: np.ndarray, rng: np.random.Generator,
                   limits: ValidityLimits) -> dict[str, np.ndarray]:
    """One well's accident-free telemetry on the 10-second grid."""
    t = np.arange(n, dtype=np.float64)
    s = NOISE_SIGMA

    hkla_base = rng.uniform(82.0, 98.0)
    sppa_base = rng.uniform(16.0, 20.0)
    mfia_base = rng.uniform(32.0, 38.0)
    tvt_base = rng.uniform(110.0, 130.0)
    depth0 = rng.uniform(2000.0, 4000.0)
    rop = rng.uniform(15.0, 30.0) / 360.0  # metres per sample

    dmea = depth0 + np.cumsum(np.where(drilling, rop, 0.0))
    sweep = 150.0 * np.abs(np.sin(2.0 * np.pi * t / rng.uniform(500.0, 900.0)))
    dbtm = np.where(drilling, dmea - np.abs(rng.normal(0.0, 0.3, n)),
                    dmea - sweep)

    stand = 30.0 * 6.0  # block cycle in samples
    saw = 22.0 - 19.0 * ((t % stand) / stand)
    fast = 12.0 + 11.0 * np.sin(2.0 * np.pi * t / 120.0)
    bpos = np.where(drilling, saw, fast)

    hook_trip = hkla_base - 15.0 + 12.0 * np.abs(np.sin(2.0 * np.pi * t / 180.0))
    data = {
        "HKLA": np.where(drilling, hkla_base, hook_trip) + rng.normal(0, s["HKLA"], n),
        "WOB": np.where(drilling, 12.0, 0.3) + rng.normal(0, s["WOB"], n) * np.where(drilling, 1.0, 0.15),
        "BPOS": bpos + rng.normal(0, s["BPOS"], n),
        "DBTM": dbtm + rng.normal(0, s["DBTM"], n),
        "DMEA": dmea + rng.normal(0, s["DMEA"], n),
        "TQA": np.where(drilling, 15.0, 1.8) + rng.normal(0, s["TQA"], n) * np.where(drilling, 1.0, 0.3),
        "RPMA": np.where(drilling, 120.0, 1.0) + rng.normal(0, s["RPMA"], n) * np.where(drilling, 1.0, 0.1),
        "SPPA": np.where(drilling, sppa_base, 2.5) + rng.normal(0, s["SPPA"], n) * np.where(drilling, 1.0, 0.4),
        "MFIA": np.where(drilling, mfia_base, 4.0) + rng.normal(0, s["MFIA"], n) * np.where(drilling, 1.0, 0.4),
        "GASA": np.where(drilling, 2.0, 0.8) + rng.normal(0, s["GASA"], n),
        "TVT": tvt_base + np.cumsum(rng.normal(0, 0.02, n)) + rng.normal(0, s["TVT"], n),
    }
    data["MFOA"] = data["MFIA"] + rng.normal(0, s["MFOA"], n) * 0.7
    for name in MNEMONICS:
        lo, hi = limits[name]
        np.clip(data[name], lo + 1e-6, hi - 1e-6, out=data[name])
    return data


# Per-type anomaly shapes: (channel, pinned level in engineering units, start
# fraction of the region, gate period in samples, active duty).  During the
# active part of each gate cycle the channel sits at the level with only
# sensor noise, so every active stretch quantises to the same repeatable tau
# pattern; the off fraction leaves normal-looking segments inside the
# reference.  Levels sit well outside both the drilling and tripping bands.
SIGNATURES: dict[str, tuple[tuple[str, float, float, int, float], ...]] = {
    "Stuck": (
        ("HKLA", 180.0, 0.00, 240, 0.78),
        ("WOB", 45.0, 0.04, 210, 0.75),
        ("TQA", 55.0, 0.08, 180, 0.78),
        ("BPOS", 25.0, 0.12, 210, 0.75),
    ),
    "KickFlow": (
        ("GASA", 45.0, 0.00, 240, 0.78),
        ("TVT", 165.0, 0.04, 210, 0.75),
        ("MFOA", 70.0, 0.08, 180, 0.78),
    ),
    "Mudloss": (
        ("TVT", 70.0, 0.00, 240, 0.78),
        ("SPPA", 9.0, 0.04, 210, 0.75),
        ("MFOA", 12.0, 0.08, 180, 0.78),
    ),
    "Washout": (
        ("SPPA", 6.0, 0.00, 240, 0.78),
        ("TQA", 42.0, 0.04, 210, 0.75),
        ("MFOA", 48.0, 0.08, 180, 0.78),
    ),
}


def _gate(n: int, start_frac: float, period: int, duty: float,
          phase: int = 0) -> np.ndarray:
    """Square on/off profile: active for duty of each period after start_frac."""
    x = np.arange(n, dtype=np.float64)
    start = start_frac * n
    shifted = (x - start + phase) % float(period)
    return ((x >= start) & (shifted < duty * period)).astype(np.float64)


def _inject(kind: str, data: dict[str, np.ndarray], sl: slice,
            rng: np.random.Generator) -> list[tuple[str, float]]:
    """Pin one accident's channel levels in place; returns (channel, start_frac).

    The gate phase is drawn per event and channel, so only the pinned
    plateau recurs across events of a type; segments that straddle a gate
    edge mix baseline and plateau at event-specific offsets.
    """
    if kind not in SIGNATURES:
        raise UsageError(f"unknown accident type: {kind}")
    n = sl.stop - sl.start
    affected = []
    for channel, level, start_frac, period, duty in SIGNATURES[kind]:
        phase = int(rng.integers(period))
        on = _gate(n, start_frac, period, duty, phase) > 0.0
        seg = data[channel][sl]
        seg[on] = level + rng.normal(0.0, 0.05 * NOISE_SIGMA[channel],
                                     int(on.sum()))
        affected.append((channel, start_frac))
    return affected


def _place_event(base_idx: int, drilling: np.ndarray, lead_samples: int,
                 scan_steps: int, n: int) -> int:
    """Event index near base_idx whose lead window is mostly drilling.

    Offsets are scanned outward from zero; the first fully-drilling window
    wins, otherwise the best drilling fraction seen.  The window always
    keeps at least one hour of history before it and ends inside the log.
    """
    lo = lead_samples + 366  # leave window history before the region
    hi = n

    def clamp(idx: int) -> int:
        return min(max(idx, lo), hi)

    offsets = [0]
    for step in range(12, scan_steps + 1, 12):  # 2-minute increments
        offsets.extend((step, -step))
    best_idx = clamp(base_idx)
    best_frac = -1.0
    for off in offsets:
        idx = clamp(base_idx + off)
        frac = float(np.mean(drilling[idx - lead_samples:idx]))
        if frac == 1.0:
            return idx
        if frac > best_frac:
            best_frac = frac
            best_idx = idx
    return best_idx


def generate(config: GenConfig | None = None) -> CorpusBundle:
    """Build the whole corpus in memory; same config gives identical output."""
    config = config if config is not None else GenConfig()
    limits = ValidityLimits()
    n = int(config.hours_per_well * 3600.0 / STEP_SECONDS)
    n_wells = config.n_wells

    sequence = _interleave(config.counts)
    max_slots = 0
    while (FIRST_EVENT_HOURS + EVENT_SPACING_HOURS * max_slots
           + JITTER_MINUTES / 60.0 <= config.hours_per_well):
        max_slots += 1
    if len(sequence) > n_wells * max_slots:
        raise UsageError(
            f"{len(sequence)} events do not fit {n_wells} wells of "
            f"{config.hours_per_well} h ({max_slots} slots per well)")

    logs: dict[str, TelemetryLog] = {}
    wells = [f"w{i:02d}" for i in range(n_wells)]
    data_by_well = {}
    drilling_by_well = {}
    for i, well in enumerate(wells):
        mask = _regime_schedule(n, np.random.default_rng([config.seed, 1, i, 0]))
        drilling_by_well[well] = mask
        data_by_well[well] = _baseline_well(
            n, mask, np.random.default_rng([config.seed, 1, i, 1]), limits)

    schedule_rng = np.random.default_rng([config.seed, 2])
    events: list[AccidentEvent] = []
    references: list[ReferenceRegion] = []
    lead_samples = int(LEAD_SECONDS / STEP_SECONDS)
    scan_steps = int(REGIME_SCAN_MINUTES * 60.0 / STEP_SECONDS)
    for i, kind in enumerate(sequence):
        slot = i // n_wells
        well = wells[(i + slot * 7) % n_wells]
        jitter = schedule_rng.uniform(-JITTER_MINUTES, JITTER_MINUTES) * 60.0
        event_time = (config.start_time
                      + (FIRST_EVENT_HOURS + EVENT_SPACING_HOURS * slot) * 3600.0
                      + jitter)
        base_idx = int(round((event_time - config.start_time) / STEP_SECONDS))
        event_idx = _place_event(base_idx, drilling_by_well[well], lead_samples,
                                 scan_steps, n)
        sl = slice(event_idx - lead_samples, event_idx)
        affected = _inject(kind, data_by_well[well], sl, schedule_rng)

        event_id = f"ev{i:03d}"
        region_start = config.start_time + sl.start * STEP_SECONDS
        region_end = config.start_time + sl.stop * STEP_SECONDS
        events.append(AccidentEvent(
            well_id=well, kind=kind, event_time=region_end,
            region_start=region_start, region_end=region_end,
            event_id=event_id))
        span = region_end - region_start
        for channel, start_frac in affected:
            references.append(ReferenceRegion(
                event_id=event_id, channel=channel,
                start=region_start + start_frac * span, end=region_end))

    for well in wells:
        data = data_by_well[well]
        for name in MNEMONICS:  # injections must not escape the valid range
            lo, hi = limits[name]
            np.clip(data[name], lo + 1e-6, hi - 1e-6, out=data[name])
        logs[well] = TelemetryLog(well_id=well, start=config.start_time,
                                  data=data)
    return CorpusBundle(logs=logs, events=events, references=references,
                        limits=limits)


def write_corpus(bundle: CorpusBundle, outdir: str | Path) -> dict[str, Path]:
    """Write per-well CSVs, the events file, and the validity limits."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for well, log in sorted(bundle.logs.items()):
        p = outdir / f"{well}.csv"
        write_csv(log, p)
        paths[well] = p
    events_path = outdir / "events.json"
    save_events(bundle.events, bundle.references, events_path)
    paths["events"] = events_path
    limits_path = outdir / "limits.json"
    bundle.limits.save(limits_path)
    paths["limits"] = limits_path
    return paths
