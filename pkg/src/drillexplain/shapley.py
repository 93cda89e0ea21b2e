"""Attribution of ensemble margins to features, and back to telemetry spans.

TreeShapExplainer computes exact path-dependent Shapley values per tree in
polynomial time; brute_force_shapley is the independent exponential-time
oracle over feature subsets used to validate it.  select_top turns any
importance vector into the set of features within a percentage of the
maximum, and highlight projects selected histogram bins back onto merged
per-channel sample spans via the SegmentIndex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CapacityError, UsageError
from .features import SegmentIndex
from .gbm import GradientBoostedTrees, Tree, _flatten
from .telemetry import MNEMONICS

BRUTE_FORCE_MAX_FEATURES = 20


def _fill_expectations(tree: Tree, values: np.ndarray) -> int:
    """Replace internal values with cover-weighted subtree expectations.

    values is modified in place (leaves untouched); returns the tree depth.
    """
    def rec(i: int) -> int:
        if tree.feature[i] < 0:
            return 0
        li, ri = tree.left[i], tree.right[i]
        dl = rec(li)
        dr = rec(ri)
        wl, wr = tree.cover[li], tree.cover[ri]
        values[i] = (wl * values[li] + wr * values[ri]) / (wl + wr)
        return max(dl, dr) + 1

    return rec(0)


class TreeShapExplainer:
    """Exact per-feature attribution of a boosted ensemble's margin."""

    def __init__(self, model: GradientBoostedTrees):
        if model.n_features_ == 0:
            raise UsageError("model is not fitted")
        self.n_features = model.n_features_
        self.base_offset = model.const_
        lr = model.config.learning_rate
        self._trees = []
        for tree in model.trees_:
            values = tree.value * lr
            depth = _fill_expectations(tree, values)
            self._trees.append((tree, values, depth))

    def shap_values(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        """Per-feature contributions phi and base value for one input.

        base + phi.sum() equals the model margin at x exactly (up to float
        accumulation), the local accuracy property.
        """
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise UsageError(f"expected {self.n_features} features, got {x.shape}")
        phi = np.zeros(self.n_features + 1, dtype=np.float64)
        for tree, values, depth in self._trees:
            _kernels.tree_shap(tree.feature, tree.threshold, tree.left, tree.right,
                               tree.cover, values, 0, depth, x, phi)
        return phi[:-1], float(phi[-1] + self.base_offset)


def brute_force_shapley(model: GradientBoostedTrees,
                        x: np.ndarray) -> tuple[np.ndarray, float]:
    """Shapley values by explicit enumeration of all feature subsets.

    The value of a coalition S is the model margin with features in S fixed
    to x and the rest marginalized over each tree's cover distribution.
    Exponential in the feature count, so capped at 20 features.
    """
    F = model.n_features_
    if F == 0:
        raise UsageError("model is not fitted")
    if F > BRUTE_FORCE_MAX_FEATURES:
        raise CapacityError(f"brute force supports at most "
                            f"{BRUTE_FORCE_MAX_FEATURES} features, got {F}")
    x = np.asarray(x, dtype=np.float64)
    n_sub = 1 << F
    masks = np.arange(n_sub, dtype=np.uint64)
    lr = model.config.learning_rate

    v = np.full(n_sub, model.const_, dtype=np.float64)
    for tree in model.trees_:
        contrib = np.zeros(n_sub, dtype=np.float64)

        def rec(i: int, weight: np.ndarray):
            f = tree.feature[i]
            if f < 0:
                contrib[:] += weight * tree.value[i]
                return
            li, ri = int(tree.left[i]), int(tree.right[i])
            hot, cold = (li, ri) if x[f] <= tree.threshold[i] else (ri, li)
            frac_hot = tree.cover[hot] / tree.cover[i]
            frac_cold = tree.cover[cold] / tree.cover[i]
            has = (masks >> np.uint64(f)) & np.uint64(1) == 1
            rec(hot, np.where(has, weight, weight * frac_hot))
            rec(cold, np.where(has, 0.0, weight * frac_cold))

        rec(0, np.ones(n_sub, dtype=np.float64))
        v += lr * contrib

    sizes = np.bitwise_count(masks).astype(np.int64)
    fact = [math.factorial(s) for s in range(F + 1)]
    size_weight = np.array(
        [fact[s] * fact[F - 1 - s] / fact[F] for s in range(F)], dtype=np.float64)

    phi = np.zeros(F, dtype=np.float64)
    for j in range(F):
        bit = np.uint64(1 << j)
        without = (masks & bit) == 0
        s = masks[without]
        gains = v[(s | bit).astype(np.int64)] - v[s.astype(np.int64)]
        phi[j] = float(np.sum(size_weight[sizes[without.nonzero()[0]]] * gains))
    return phi, float(v[0])


def select_top(importance: np.ndarray, m_percent: float = 20.0,
               mode: str = "positive") -> np.ndarray:
    """Indices whose importance reaches m_percent of the maximum.

    mode "positive" keeps only positive contributions (negative attributions
    argue against the alarm); "absolute" ranks by magnitude.  An importance
    vector with no positive mass yields an empty selection, the signal that
    there is nothing to explain.
    """
    if not 0.0 < m_percent <= 100.0:
        raise UsageError(f"m_percent must be in (0, 100], got {m_percent}")
    if mode == "positive":
        imp = np.maximum(np.asarray(importance, dtype=np.float64), 0.0)
    elif mode == "absolute":
        imp = np.abs(np.asarray(importance, dtype=np.float64))
    else:
        raise UsageError(f"unknown selection mode {mode!r}")
    mx = imp.max() if len(imp) else 0.0
    if mx <= 0.0:
        return np.empty(0, dtype=np.int64)
    return np.nonzero(imp >= (m_percent / 100.0) * mx)[0].astype(np.int64)


def merge_spans(spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Union of [start, end) spans; overlapping or touching spans coalesce."""
    if not spans:
        return []
    ordered = sorted(spans)
    merged = [list(ordered[0])]
    for s, e in ordered[1:]:
        if s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def highlight(index: SegmentIndex,
              selected: np.ndarray) -> dict[str, list[tuple[int, int]]]:
    """Merged per-channel sample spans covered by the selected features.

    Only channels with at least one span appear in the result; spans are in
    window sample coordinates.
    """
    per_channel: dict[str, list[tuple[int, int]]] = {}
    for f in np.asarray(selected, dtype=np.int64):
        ch = int(f) // index.k
        name = MNEMONICS[ch]
        per_channel.setdefault(name, []).extend(index.spans(int(f)))
    return {name: merge_spans(sp) for name, sp in per_channel.items() if sp}


@dataclass
class Explanation:
    """One alarm moment's attribution projected back onto the telemetry."""

    phi: np.ndarray = field(repr=False)      # per-feature attribution
    base: float                              # expected margin
    margin: float                            # model margin at this input
    selected: np.ndarray = field(repr=False)  # chosen feature indices
    spans: dict[str, list[tuple[int, int]]]   # merged window-sample spans


def explain(model: GradientBoostedTrees, x: np.ndarray, index: SegmentIndex,
            m_percent: float = 20.0, mode: str = "positive",
            explainer: TreeShapExplainer | None = None) -> Explanation:
    """Attribute the margin at x and highlight the responsible spans."""
    if explainer is None:
        explainer = TreeShapExplainer(model)
    phi, base = explainer.shap_values(x)
    selected = select_top(phi, m_percent, mode)
    return Explanation(
        phi=phi,
        base=base,
        margin=float(base + phi.sum()),
        selected=selected,
        spans=highlight(index, selected),
    )
