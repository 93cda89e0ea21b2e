"""Interpretable early-warning pipeline for drilling accidents.

Telemetry windows become bag-of-features count vectors, a gradient boosting
classifier raises alarms, and per-alarm attributions (tree Shapley values or
attention importances) are projected back onto the telemetry as highlighted
time spans.
"""

from __future__ import annotations

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
