"""Pure-numpy fallback for the hot tree kernels.

The compiled backend (kernels_cy) implements the same three entry points
with identical arithmetic and identical accumulation order, so models and
attributions are bit-for-bit equal across backends:

- predict_margin: sum of scaled leaf values over an ensemble
- best_split: exact greedy split search over pre-binned features
- tree_shap: path-dependent Shapley attribution for one tree

All reductions here are sequential (bincount + cumsum, never pairwise
np.sum) to keep float addition order equal to the compiled loops.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def predict_margin(feature, threshold, left, right, value, roots, coeffs, X):
    """Raw ensemble margin for each row of X, excluding the constant term.

    feature < 0 marks a leaf; child indices are absolute into the flat
    node arrays.  Rows follow left when x[f] <= threshold.
    """
    n = X.shape[0]
    out = np.zeros(n, dtype=np.float64)
    row = np.arange(n)
    for t in range(len(roots)):
        node = np.full(n, roots[t], dtype=np.int64)
        while True:
            f = feature[node]
            live = f >= 0
            if not live.any():
                break
            idx = node[live]
            go_left = X[row[live], f[live]] <= threshold[idx]
            node[live] = np.where(go_left, left[idx], right[idx])
        out += coeffs[t] * value[node]
    return out


def best_split(binned, bin_counts, grad, hess, rows, feats, lam, min_child_weight):
    """Best (feature, bin, gain) for one node by exhaustive histogram scan.

    binned is (n, F) uint16 with per-feature bins in ascending value order;
    a split at bin b sends bins <= b left.  Gain is the second-order loss
    reduction; ties resolve to the lowest feature then lowest bin.  Returns
    (-1, -1, 0.0) when no split with positive gain satisfies the hessian
    floor on both children.
    """
    gn = grad[rows]
    hn = hess[rows]
    best_gain = 0.0
    best_feat = -1
    best_bin = -1
    G = H = parent_score = None
    for f in feats:
        nb = int(bin_counts[f])
        if nb < 2:
            continue
        b = binned[rows, f]
        gb = np.bincount(b, weights=gn, minlength=nb)
        hb = np.bincount(b, weights=hn, minlength=nb)
        gcum = np.cumsum(gb)
        hcum = np.cumsum(hb)
        if G is None:
            # totals taken from the first scanned histogram so the addition
            # order matches the compiled backend exactly
            G = gcum[-1]
            H = hcum[-1]
            parent_score = G * G / (H + lam)
        GL = gcum[:-1]
        HL = hcum[:-1]
        HR = H - HL
        ok = ((HL >= min_child_weight) & (HR >= min_child_weight)
              & (HL + lam > 0.0) & (HR + lam > 0.0))
        if not ok.any():
            continue
        GR = G - GL
        gains = np.full(nb - 1, -np.inf)
        oi = np.nonzero(ok)[0]
        gains[oi] = (GL[oi] * GL[oi] / (HL[oi] + lam)
                     + GR[oi] * GR[oi] / (HR[oi] + lam) - parent_score)
        bi = int(np.argmax(gains))
        if gains[bi] > best_gain:
            best_gain = float(gains[bi])
            best_feat = int(f)
            best_bin = bi
    return best_feat, best_bin, best_gain


def _extend(fi, zf, of, pw, unique_depth, zero_fraction, one_fraction, feature_index):
    fi[unique_depth] = feature_index
    zf[unique_depth] = zero_fraction
    of[unique_depth] = one_fraction
    pw[unique_depth] = 1.0 if unique_depth == 0 else 0.0
    for i in range(unique_depth - 1, -1, -1):
        pw[i + 1] += one_fraction * pw[i] * (i + 1) / (unique_depth + 1)
        pw[i] = zero_fraction * pw[i] * (unique_depth - i) / (unique_depth + 1)


def _unwind(fi, zf, of, pw, unique_depth, path_index):
    one_fraction = of[path_index]
    zero_fraction = zf[path_index]
    next_one = pw[unique_depth]
    for i in range(unique_depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = pw[i]
            pw[i] = next_one * (unique_depth + 1) / ((i + 1) * one_fraction)
            next_one = tmp - pw[i] * zero_fraction * (unique_depth - i) / (unique_depth + 1)
        else:
            pw[i] = pw[i] * (unique_depth + 1) / (zero_fraction * (unique_depth - i))
    for i in range(path_index, unique_depth):
        fi[i] = fi[i + 1]
        zf[i] = zf[i + 1]
        of[i] = of[i + 1]


def _unwound_sum(zf, of, pw, unique_depth, path_index):
    one_fraction = of[path_index]
    zero_fraction = zf[path_index]
    next_one = pw[unique_depth]
    total = 0.0
    for i in range(unique_depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = next_one * (unique_depth + 1) / ((i + 1) * one_fraction)
            total += tmp
            next_one = pw[i] - tmp * zero_fraction * (unique_depth - i) / (unique_depth + 1)
        else:
            total += pw[i] / zero_fraction / ((unique_depth - i) / (unique_depth + 1))
    return total


def _shap_recurse(feature, threshold, left, right, cover, value, x, phi,
                  node, unique_depth, pfi, pzf, pof, ppw,
                  parent_zero_fraction, parent_one_fraction, parent_feature_index):
    # each level works on an overlapping view shifted past the parent's slots
    fi = pfi[unique_depth + 1:]
    fi[:unique_depth + 1] = pfi[:unique_depth + 1]
    zf = pzf[unique_depth + 1:]
    zf[:unique_depth + 1] = pzf[:unique_depth + 1]
    of = pof[unique_depth + 1:]
    of[:unique_depth + 1] = pof[:unique_depth + 1]
    pw = ppw[unique_depth + 1:]
    pw[:unique_depth + 1] = ppw[:unique_depth + 1]

    _extend(fi, zf, of, pw, unique_depth, parent_zero_fraction,
            parent_one_fraction, parent_feature_index)

    split = feature[node]
    if split < 0:
        for i in range(1, unique_depth + 1):
            w = _unwound_sum(zf, of, pw, unique_depth, i)
            phi[fi[i]] += w * (of[i] - zf[i]) * value[node]
        return

    hot = left[node] if x[split] <= threshold[node] else right[node]
    cold = right[node] if hot == left[node] else left[node]
    w = cover[node]
    hot_zero_fraction = cover[hot] / w
    cold_zero_fraction = cover[cold] / w
    incoming_zero = 1.0
    incoming_one = 1.0

    # a repeated split feature is unwound and folded into this extension
    path_index = 0
    while path_index <= unique_depth:
        if fi[path_index] == split:
            break
        path_index += 1
    if path_index != unique_depth + 1:
        incoming_zero = zf[path_index]
        incoming_one = of[path_index]
        _unwind(fi, zf, of, pw, unique_depth, path_index)
        unique_depth -= 1

    _shap_recurse(feature, threshold, left, right, cover, value, x, phi,
                  hot, unique_depth + 1, fi, zf, of, pw,
                  hot_zero_fraction * incoming_zero, incoming_one, split)
    _shap_recurse(feature, threshold, left, right, cover, value, x, phi,
                  cold, unique_depth + 1, fi, zf, of, pw,
                  cold_zero_fraction * incoming_zero, 0.0, split)


def tree_shap(feature, threshold, left, right, cover, value, root, max_depth, x, phi):
    """Accumulate one tree's Shapley attribution into phi.

    value must hold cover-weighted subtree expectations at internal nodes
    and (scaled) leaf values at leaves.  phi has one slot per feature plus
    a trailing slot that collects the base expectation.
    """
    phi[-1] += value[root]
    size = (max_depth + 2) * (max_depth + 2)
    pfi = np.zeros(size, dtype=np.int64)
    pzf = np.zeros(size, dtype=np.float64)
    pof = np.zeros(size, dtype=np.float64)
    ppw = np.zeros(size, dtype=np.float64)
    _shap_recurse(feature, threshold, left, right, cover, value, x, phi,
                  root, 0, pfi, pzf, pof, ppw, 1.0, 1.0, -1)
