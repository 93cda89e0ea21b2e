"""Parsing, validity clipping, grid resampling, and windowing."""

import numpy as np
import pytest

from drillexplain.errors import (FormatError, GapError, SchemaError,
                                 UsageError, WindowError)
from drillexplain.telemetry import (MNEMONICS, STEP_SECONDS, WINDOW_SAMPLES,
                                    AccidentEvent, RawLog, Segment,
                                    TelemetryLog, ValidityLimits,
                                    channel_index, clean, load_events,
                                    parse_csv, save_events, window, write_csv)

from conftest import make_log


def csv_text(rows: list[str], header: str | None = None) -> str:
    head = header if header is not None else "time," + ",".join(MNEMONICS)
    return "\n".join([head] + rows) + "\n"


def full_row(t: float, value: float = 1.0) -> str:
    return f"{t}," + ",".join(str(value) for _ in MNEMONICS)


class TestParseCsv:
    def test_three_rows_give_three_samples_per_channel(self, tmp_path):
        path = tmp_path / "w1.csv"
        path.write_text(csv_text([full_row(0), full_row(10), full_row(20)]))
        raw = parse_csv(path)
        assert raw.well_id == "w1"
        for name in MNEMONICS:
            times, values = raw.channels[name]
            assert len(times) == 3 and len(values) == 3

    def test_missing_column_names_the_channel(self, tmp_path):
        header = "time," + ",".join(m for m in MNEMONICS if m != "GASA")
        row = "0," + ",".join("1" for _ in range(11))
        path = tmp_path / "w1.csv"
        path.write_text(csv_text([row], header=header))
        with pytest.raises(SchemaError, match="GASA"):
            parse_csv(path)

    def test_empty_cell_skips_only_that_channel(self, tmp_path):
        hkla_col = MNEMONICS.index("HKLA")
        rows = [full_row(0), full_row(10), full_row(20)]
        cells = rows[1].split(",")
        cells[1 + hkla_col] = ""
        rows[1] = ",".join(cells)
        path = tmp_path / "w1.csv"
        path.write_text(csv_text(rows))
        raw = parse_csv(path)
        assert len(raw.channels["HKLA"][0]) == 2
        for name in MNEMONICS:
            if name != "HKLA":
                assert len(raw.channels[name][0]) == 3

    def test_non_monotonic_times_rejected(self, tmp_path):
        path = tmp_path / "w1.csv"
        path.write_text(csv_text([full_row(10), full_row(0)]))
        with pytest.raises(FormatError, match="monotonic"):
            parse_csv(path)

    def test_iso_timestamps_accepted(self, tmp_path):
        rows = ["1970-01-01T00:00:00," + ",".join("1" for _ in MNEMONICS),
                "1970-01-01T00:00:10," + ",".join("2" for _ in MNEMONICS)]
        path = tmp_path / "w1.csv"
        path.write_text(csv_text(rows))
        raw = parse_csv(path)
        assert raw.channels["HKLA"][0][1] == 10.0


class TestClean:
    def raw(self, times, values, channel="HKLA"):
        channels = {}
        for name in MNEMONICS:
            if name == channel:
                channels[name] = (np.asarray(times, dtype=float),
                                  np.asarray(values, dtype=float))
            else:
                channels[name] = (np.asarray(times, dtype=float),
                                  np.full(len(times), 1.0))
        return RawLog(well_id="W", channels=channels)

    def test_in_range_constant_is_identity(self):
        log = clean(self.raw([0, 10, 20], [5, 5, 5]))
        assert np.array_equal(log.data["HKLA"], [5, 5, 5])
        assert log.start == 0.0 and log.n_samples == 3

    def test_out_of_range_sample_falls_back_to_previous(self):
        # 999999 exceeds every channel bound, so the cell becomes missing
        log = clean(self.raw([0, 10, 20], [5, 999999, 7]))
        assert np.array_equal(log.data["HKLA"], [5, 5, 7])

    def test_gap_filled_by_last_observation(self):
        log = clean(self.raw([0, 25], [5, 9]))
        assert np.array_equal(log.data["HKLA"], [5, 5, 5])
        assert log.n_samples == 3  # grid 0, 10, 20

    def test_no_sample_at_grid_start_is_a_gap_error(self):
        channels = {m: (np.array([0.0, 10.0]), np.array([1.0, 1.0]))
                    for m in MNEMONICS}
        channels["WOB"] = (np.array([10.0]), np.array([1.0]))
        with pytest.raises(GapError, match="WOB"):
            clean(RawLog(well_id="W", channels=channels))

    def test_write_then_parse_round_trips(self, tmp_path):
        rng = np.random.default_rng(5)
        log = make_log(n=400, HKLA=90 + rng.normal(0, 1, 400))
        path = tmp_path / "w.csv"
        write_csv(log, path)
        back = clean(parse_csv(path))
        assert back.sample_equal(
            TelemetryLog(well_id="w", start=log.start, data=log.data))


class TestWindow:
    def test_exactly_one_hour_log(self):
        log = make_log(n=WINDOW_SAMPLES)
        seg = window(log, log.end)
        assert seg.start_index == 0 and seg.end_index == WINDOW_SAMPLES

    def test_half_hour_history_rejected(self):
        log = make_log(n=WINDOW_SAMPLES)
        with pytest.raises(WindowError):
            window(log, log.start + 1800.0)

    def test_90_minutes_into_2h_log(self):
        log = make_log(n=720)
        seg = window(log, log.start + 90 * 60.0)
        assert seg.start_index == 180
        assert seg.end_index == 540

    def test_end_rounds_down_to_grid(self):
        log = make_log(n=720)
        a = window(log, log.start + 3600.0)
        b = window(log, log.start + 3604.0)
        assert a.end_index == b.end_index

    def test_segment_values_views_channel(self):
        log = make_log(n=WINDOW_SAMPLES, TQA=np.arange(WINDOW_SAMPLES))
        seg = Segment(log=log, end_index=WINDOW_SAMPLES)
        assert np.array_equal(seg.values("TQA"), np.arange(WINDOW_SAMPLES))


class TestLimits:
    def test_missing_channel_rejected(self):
        with pytest.raises(SchemaError):
            ValidityLimits({"HKLA": (0.0, 1.0)})

    def test_inverted_bounds_rejected(self):
        bounds = {m: (0.0, 100.0) for m in MNEMONICS}
        bounds["WOB"] = (5.0, -5.0)
        with pytest.raises(FormatError):
            ValidityLimits(bounds)

    def test_save_load_round_trip(self, tmp_path):
        limits = ValidityLimits()
        limits.save(tmp_path / "limits.json")
        assert ValidityLimits.load(tmp_path / "limits.json") == limits


class TestEvents:
    def test_round_trip(self, tmp_path):
        events = [AccidentEvent(well_id="W1", kind="Stuck", event_time=100.0,
                                region_start=40.0, region_end=120.0,
                                event_id="ev0")]
        from drillexplain.telemetry import ReferenceRegion
        refs = [ReferenceRegion(event_id="ev0", channel="HKLA",
                                start=40.0, end=100.0)]
        save_events(events, refs, tmp_path / "events.json")
        back_events, back_refs = load_events(tmp_path / "events.json")
        assert back_events == events and back_refs == refs

    def test_region_must_contain_event_time(self):
        with pytest.raises(FormatError):
            AccidentEvent(well_id="W", kind="Stuck", event_time=10.0,
                          region_start=20.0, region_end=30.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(FormatError):
            AccidentEvent(well_id="W", kind="Twist", event_time=10.0,
                          region_start=0.0, region_end=20.0)


def test_channel_index_matches_order():
    assert [channel_index(m) for m in MNEMONICS] == list(range(12))
    with pytest.raises(UsageError):
        channel_index("XXXX")


def test_log_requires_all_channels():
    data = {m: np.zeros(10) for m in MNEMONICS[:-1]}
    with pytest.raises(FormatError):
        TelemetryLog(well_id="W", start=0.0, data=data)


def test_time_index_round_trip():
    log = make_log(n=100, start=500.0)
    assert log.time_to_index(log.index_to_time(42)) == 42
    assert log.time_to_index(509.9) == 0
    assert log.step == STEP_SECONDS
