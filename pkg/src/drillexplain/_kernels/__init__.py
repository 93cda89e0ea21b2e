"""Backend selection for the hot tree kernels.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used.  Both expose the same functions with bit-identical
results, so selection only affects speed.
"""

from __future__ import annotations

from . import kernels_py

try:
    from . import kernels_cy as _impl
except ImportError:  # extension not built on this install
    _impl = kernels_py

_backends = {"python": kernels_py, "cython": _impl if _impl is not kernels_py else None}
if _backends["cython"] is None:
    del _backends["cython"]

predict_margin = _impl.predict_margin
best_split = _impl.best_split
tree_shap = _impl.tree_shap
BACKEND = _impl.BACKEND_NAME


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_backends))


def set_backend(name: str) -> str:
    """Switch the active kernel backend; returns the previous backend name."""
    global predict_margin, best_split, tree_shap, BACKEND, _impl
    if name not in _backends:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    previous = BACKEND
    _impl = _backends[name]
    predict_margin = _impl.predict_margin
    best_split = _impl.best_split
    tree_shap = _impl.tree_shap
    BACKEND = _impl.BACKEND_NAME
    return previous
