"""Shared builders for unit tests: small logs, corpora, and toy models."""

import numpy as np
import pytest

from drillexplain.synthgen import CorpusBundle, GenConfig, generate
from drillexplain.telemetry import MNEMONICS, TelemetryLog

TINY_COUNTS = {"KickFlow": 3, "Stuck": 2, "Washout": 2, "Mudloss": 1}


def make_log(well_id: str = "W1", n: int = 720, start: float = 0.0,
             **channels: np.ndarray) -> TelemetryLog:
    """Log with mid-range constants everywhere except the given channels."""
    base = {"HKLA": 90.0, "WOB": 12.0, "BPOS": 10.0, "DBTM": 2000.0,
            "DMEA": 2000.0, "TQA": 15.0, "RPMA": 120.0, "SPPA": 18.0,
            "MFIA": 35.0, "MFOA": 35.0, "TVT": 120.0, "GASA": 2.0}
    data = {m: np.full(n, base[m]) for m in MNEMONICS}
    for name, values in channels.items():
        arr = np.asarray(values, dtype=np.float64)
        data[name] = arr if len(arr) == n else np.resize(arr, n)
    return TelemetryLog(well_id=well_id, start=start, data=data)


@pytest.fixture(scope="session")
def tiny_corpus() -> CorpusBundle:
    """Four wells, eight events; large enough to window, fast to build."""
    return generate(GenConfig(n_wells=4, hours_per_well=6.0, seed=11,
                              counts=dict(TINY_COUNTS)))
