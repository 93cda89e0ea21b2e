# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of kernels_py.

Arithmetic and accumulation order mirror the numpy fallback statement by
statement so both backends produce bit-identical models and attributions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

BACKEND_NAME = "cython"


def predict_margin(cnp.int32_t[::1] feature, double[::1] threshold,
                   cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                   double[::1] value, cnp.int32_t[::1] roots,
                   double[::1] coeffs, double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_trees = roots.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, t
    cdef int node, f
    for i in range(n):
        for t in range(n_trees):
            node = roots[t]
            f = feature[node]
            while f >= 0:
                if X[i, f] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
                f = feature[node]
            out[i] += coeffs[t] * value[node]
    return out_arr


def best_split(cnp.uint16_t[:, ::1] binned, cnp.int64_t[::1] bin_counts,
               double[::1] grad, double[::1] hess, cnp.int64_t[::1] rows,
               cnp.int64_t[::1] feats, double lam, double min_child_weight):
    cdef Py_ssize_t n_rows = rows.shape[0]
    cdef Py_ssize_t n_feats = feats.shape[0]
    cdef Py_ssize_t fi, r, b
    cdef cnp.int64_t f
    cdef Py_ssize_t nb, max_nb = 0
    for fi in range(n_feats):
        if bin_counts[feats[fi]] > max_nb:
            max_nb = bin_counts[feats[fi]]
    if max_nb < 2:
        return -1, -1, 0.0

    gb_arr = np.zeros(max_nb, dtype=np.float64)
    hb_arr = np.zeros(max_nb, dtype=np.float64)
    cdef double[::1] gb = gb_arr
    cdef double[::1] hb = hb_arr

    cdef double G = 0.0, H = 0.0, parent_score = 0.0
    cdef bint have_totals = False
    cdef double best_gain = 0.0
    cdef cnp.int64_t best_feat = -1
    cdef cnp.int64_t best_bin = -1
    cdef double GL, HL, GR, HR, gain, local_best
    cdef Py_ssize_t local_bin
    cdef cnp.uint16_t bv

    for fi in range(n_feats):
        f = feats[fi]
        nb = bin_counts[f]
        if nb < 2:
            continue
        for b in range(nb):
            gb[b] = 0.0
            hb[b] = 0.0
        for r in range(n_rows):
            bv = binned[rows[r], f]
            gb[bv] += grad[rows[r]]
            hb[bv] += hess[rows[r]]
        for b in range(1, nb):
            gb[b] += gb[b - 1]
            hb[b] += hb[b - 1]
        if not have_totals:
            G = gb[nb - 1]
            H = hb[nb - 1]
            parent_score = G * G / (H + lam)
            have_totals = True
        local_best = -INFINITY
        local_bin = -1
        for b in range(nb - 1):
            GL = gb[b]
            HL = hb[b]
            HR = H - HL
            if HL >= min_child_weight and HR >= min_child_weight \
                    and HL + lam > 0.0 and HR + lam > 0.0:
                GR = G - GL
                gain = GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent_score
                if gain > local_best:
                    local_best = gain
                    local_bin = b
        if local_bin >= 0 and local_best > best_gain:
            best_gain = local_best
            best_feat = f
            best_bin = local_bin
    return int(best_feat), int(best_bin), float(best_gain)


cdef void _extend(cnp.int64_t[::1] fi, double[::1] zf, double[::1] of,
                  double[::1] pw, Py_ssize_t off, int unique_depth,
                  double zero_fraction, double one_fraction,
                  cnp.int64_t feature_index):
    cdef int i
    fi[off + unique_depth] = feature_index
    zf[off + unique_depth] = zero_fraction
    of[off + unique_depth] = one_fraction
    pw[off + unique_depth] = 1.0 if unique_depth == 0 else 0.0
    for i in range(unique_depth - 1, -1, -1):
        pw[off + i + 1] += one_fraction * pw[off + i] * (i + 1) / (unique_depth + 1)
        pw[off + i] = zero_fraction * pw[off + i] * (unique_depth - i) / (unique_depth + 1)


cdef void _unwind(cnp.int64_t[::1] fi, double[::1] zf, double[::1] of,
                  double[::1] pw, Py_ssize_t off, int unique_depth,
                  int path_index):
    cdef double one_fraction = of[off + path_index]
    cdef double zero_fraction = zf[off + path_index]
    cdef double next_one = pw[off + unique_depth]
    cdef double tmp
    cdef int i
    for i in range(unique_depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = pw[off + i]
            pw[off + i] = next_one * (unique_depth + 1) / ((i + 1) * one_fraction)
            next_one = tmp - pw[off + i] * zero_fraction * (unique_depth - i) / (unique_depth + 1)
        else:
            pw[off + i] = pw[off + i] * (unique_depth + 1) / (zero_fraction * (unique_depth - i))
    for i in range(path_index, unique_depth):
        fi[off + i] = fi[off + i + 1]
        zf[off + i] = zf[off + i + 1]
        of[off + i] = of[off + i + 1]


cdef double _unwound_sum(double[::1] zf, double[::1] of, double[::1] pw,
                         Py_ssize_t off, int unique_depth, int path_index):
    cdef double one_fraction = of[off + path_index]
    cdef double zero_fraction = zf[off + path_index]
    cdef double next_one = pw[off + unique_depth]
    cdef double total = 0.0
    cdef double tmp
    cdef int i
    for i in range(unique_depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = next_one * (unique_depth + 1) / ((i + 1) * one_fraction)
            total += tmp
            next_one = pw[off + i] - tmp * zero_fraction * (unique_depth - i) / (unique_depth + 1)
        else:
            total += pw[off + i] / zero_fraction / ((<double>(unique_depth - i)) / (unique_depth + 1))
    return total


cdef void _shap_recurse(cnp.int32_t[::1] feature, double[::1] threshold,
                        cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                        double[::1] cover, double[::1] value,
                        double[::1] x, double[::1] phi,
                        int node, int unique_depth,
                        cnp.int64_t[::1] fi, double[::1] zf, double[::1] of,
                        double[::1] pw, Py_ssize_t parent_off,
                        double parent_zero_fraction, double parent_one_fraction,
                        cnp.int64_t parent_feature_index):
    cdef Py_ssize_t off = parent_off + unique_depth + 1
    cdef int i
    for i in range(unique_depth + 1):
        fi[off + i] = fi[parent_off + i]
        zf[off + i] = zf[parent_off + i]
        of[off + i] = of[parent_off + i]
        pw[off + i] = pw[parent_off + i]

    _extend(fi, zf, of, pw, off, unique_depth, parent_zero_fraction,
            parent_one_fraction, parent_feature_index)

    cdef int split = feature[node]
    cdef double w, hot_zero_fraction, cold_zero_fraction, incoming_zero, incoming_one
    cdef int hot, cold, path_index
    cdef Py_ssize_t slot

    if split < 0:
        for i in range(1, unique_depth + 1):
            w = _unwound_sum(zf, of, pw, off, unique_depth, i)
            slot = fi[off + i]
            phi[slot] += w * (of[off + i] - zf[off + i]) * value[node]
        return

    if x[split] <= threshold[node]:
        hot = left[node]
    else:
        hot = right[node]
    cold = right[node] if hot == left[node] else left[node]
    w = cover[node]
    hot_zero_fraction = cover[hot] / w
    cold_zero_fraction = cover[cold] / w
    incoming_zero = 1.0
    incoming_one = 1.0

    path_index = 0
    while path_index <= unique_depth:
        if fi[off + path_index] == split:
            break
        path_index += 1
    if path_index != unique_depth + 1:
        incoming_zero = zf[off + path_index]
        incoming_one = of[off + path_index]
        _unwind(fi, zf, of, pw, off, unique_depth, path_index)
        unique_depth -= 1

    _shap_recurse(feature, threshold, left, right, cover, value, x, phi,
                  hot, unique_depth + 1, fi, zf, of, pw, off,
                  hot_zero_fraction * incoming_zero, incoming_one, split)
    _shap_recurse(feature, threshold, left, right, cover, value, x, phi,
                  cold, unique_depth + 1, fi, zf, of, pw, off,
                  cold_zero_fraction * incoming_zero, 0.0, split)


def tree_shap(cnp.int32_t[::1] feature, double[::1] threshold,
              cnp.int32_t[::1] left, cnp.int32_t[::1] right,
              double[::1] cover, double[::1] value,
              int root, int max_depth, double[::1] x, double[::1] phi):
    phi[phi.shape[0] - 1] += value[root]
    cdef Py_ssize_t size = (max_depth + 2) * (max_depth + 2)
    fi_arr = np.zeros(size, dtype=np.int64)
    zf_arr = np.zeros(size, dtype=np.float64)
    of_arr = np.zeros(size, dtype=np.float64)
    pw_arr = np.zeros(size, dtype=np.float64)
    cdef cnp.int64_t[::1] fi = fi_arr
    cdef double[::1] zf = zf_arr
    cdef double[::1] of = of_arr
    cdef double[::1] pw = pw_arr
    # parent offset 0 puts the first level at offset 1, the same layout the
    # fallback's view slicing produces; slot 0 stays unused in both
    _shap_recurse(feature, threshold, left, right, cover, value, x, phi,
                  root, 0, fi, zf, of, pw, 0, 1.0, 1.0, -1)
