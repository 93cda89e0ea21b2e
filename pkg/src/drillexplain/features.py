"""Bag-of-features representation of one-hour telemetry windows.

Each channel of a window is cut into short overlapping tau-segments,
z-normalized with corpus statistics, and assigned to the nearest of the
channel's k-means codebook patterns.  A window becomes the concatenation of
the 12 per-channel assignment histograms (channel-major, cluster-minor), and
a SegmentIndex keeps the inverse map from histogram bins back to the
tau-segments that filled them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArtifactError, DataError, UsageError
from .telemetry import MNEMONICS, WINDOW_SAMPLES, Segment

TAU_LEN = 30   # 5 minutes at the 10-second step
TAU_STRIDE = 6  # 1 minute
CODEBOOK_SIZE = 200
STD_FLOOR = 1e-12


def tau_count(n_samples: int, tau_len: int = TAU_LEN, stride: int = TAU_STRIDE) -> int:
    """Number of tau-segments in a run of n_samples."""
    if n_samples < tau_len:
        return 0
    return (n_samples - tau_len) // stride + 1


def extract_tau(values: np.ndarray, tau_len: int = TAU_LEN,
                stride: int = TAU_STRIDE) -> np.ndarray:
    """Stack the tau-segments of a 1-D series into an (n_tau, tau_len) matrix."""
    n = tau_count(len(values), tau_len, stride)
    if n == 0:
        raise DataError(f"series of {len(values)} samples is shorter than one "
                        f"tau-segment ({tau_len})")
    windows = np.lib.stride_tricks.sliding_window_view(values, tau_len)
    return np.ascontiguousarray(windows[::stride][:n], dtype=np.float64)


def sqdist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n_points, n_centers).

    Single shared formula so assignment ties always break the same way.
    """
    p2 = np.einsum("ij,ij->i", points, points)[:, None]
    c2 = np.einsum("ij,ij->i", centers, centers)[None, :]
    return p2 - 2.0 * points @ centers.T + c2


def assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Nearest-center label per point; ties go to the lowest center index."""
    return np.argmin(sqdist(points, centers), axis=1).astype(np.int32)


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = 40) -> tuple[np.ndarray, np.ndarray, float]:
    """Seeded k-means with distance-squared weighted init.

    Returns (centers, labels, inertia).  Empty clusters keep their previous
    center; when the corpus has fewer distinct points than k the remaining
    centers duplicate existing points and end up unused.
    """
    n, dim = points.shape
    if k < 1:
        raise UsageError(f"codebook size must be positive, got {k}")
    if n == 0:
        raise DataError("cannot fit a codebook on an empty corpus")

    centers = np.empty((k, dim), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = np.maximum(sqdist(points, centers[:1])[:, 0], 0.0)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # corpus exhausted: duplicate points cyclically for the rest
            centers[j:] = points[np.arange(j, k) % n]
            break
        idx = int(rng.choice(n, p=d2 / total))
        centers[j] = points[idx]
        d2 = np.minimum(d2, np.maximum(sqdist(points, centers[j:j + 1])[:, 0], 0.0))

    labels = assign(points, centers)
    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=k)
        sums = np.empty((k, dim), dtype=np.float64)
        for t in range(dim):
            sums[:, t] = np.bincount(labels, weights=points[:, t], minlength=k)
        occupied = counts > 0
        centers[occupied] = sums[occupied] / counts[occupied, None]
        new_labels = assign(points, centers)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    # residual form is exact when a point equals its center, unlike the
    # expanded distance formula used for assignment
    diff = points - centers[labels]
    inertia = float(np.einsum("ij,ij->", diff, diff))
    return centers, labels, inertia


@dataclass
class Codebook:
    """One channel's pattern dictionary over normalized tau-segments."""

    channel: str
    mean: float
    std: float
    centers: np.ndarray = field(repr=False)  # (k, tau_len)

    @property
    def k(self) -> int:
        return len(self.centers)

    def normalize(self, tau: np.ndarray) -> np.ndarray:
        return (tau - self.mean) / self.std

    def assign_raw(self, tau: np.ndarray) -> np.ndarray:
        """Labels for raw (unnormalized) tau-segment rows."""
        return assign(self.normalize(tau), self.centers)


@dataclass
class CodebookSet:
    """All 12 per-channel codebooks plus the shared segmentation geometry."""

    codebooks: dict[str, Codebook]
    tau_len: int = TAU_LEN
    stride: int = TAU_STRIDE

    def __post_init__(self):
        missing = [m for m in MNEMONICS if m not in self.codebooks]
        if missing:
            raise ArtifactError(f"codebook set missing channels: {', '.join(missing)}")
        ks = {cb.k for cb in self.codebooks.values()}
        if len(ks) != 1:
            raise ArtifactError("all channels must share one codebook size")

    @property
    def k(self) -> int:
        return self.codebooks[MNEMONICS[0]].k

    @property
    def n_features(self) -> int:
        return len(MNEMONICS) * self.k

    def feature_name(self, feature: int) -> str:
        ch, cluster = divmod(feature, self.k)
        return f"{MNEMONICS[ch]}:{cluster}"

    def save(self, path: str | Path) -> None:
        doc = {
            "tau_len": self.tau_len,
            "stride": self.stride,
            "k": self.k,
            "channels": {
                name: {
                    "mean": float(cb.mean),
                    "std": float(cb.std),
                    "centers": [[float(v) for v in row] for row in cb.centers],
                }
                for name, cb in self.codebooks.items()
            },
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "CodebookSet":
        try:
            with open(path) as fh:
                doc = json.load(fh)
            codebooks = {
                name: Codebook(
                    channel=name,
                    mean=float(spec["mean"]),
                    std=float(spec["std"]),
                    centers=np.asarray(spec["centers"], dtype=np.float64),
                )
                for name, spec in doc["channels"].items()
            }
            return cls(codebooks=codebooks, tau_len=int(doc["tau_len"]),
                       stride=int(doc["stride"]))
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ArtifactError(f"malformed codebook file {path}: {exc}") from exc


@dataclass(frozen=True)
class SegmentIndex:
    """Inverse map from feature-vector bins to the window's tau-segments.

    labels[ch, t] is the cluster of the t-th tau-segment on channel ch; the
    segment covers window samples [t * stride, t * stride + tau_len).
    """

    labels: np.ndarray  # (12, n_tau) int32
    k: int
    tau_len: int
    stride: int

    def feature_of(self, channel_index: int, cluster: int) -> int:
        return channel_index * self.k + cluster

    def segment_starts(self, feature: int) -> np.ndarray:
        """Window sample indexes where this feature's tau-segments start."""
        ch, cluster = divmod(feature, self.k)
        t = np.nonzero(self.labels[ch] == cluster)[0]
        return t * self.stride

    def spans(self, feature: int) -> list[tuple[int, int]]:
        """Raw per-segment [start, end) sample spans, not merged."""
        return [(int(s), int(s) + self.tau_len) for s in self.segment_starts(feature)]


def featurize(segment: Segment, codebooks: CodebookSet) -> tuple[np.ndarray, SegmentIndex]:
    """Count vector (n_features,) and inverse index for one window."""
    k = codebooks.k
    n_tau = tau_count(WINDOW_SAMPLES, codebooks.tau_len, codebooks.stride)
    counts = np.zeros(codebooks.n_features, dtype=np.float64)
    labels = np.empty((len(MNEMONICS), n_tau), dtype=np.int32)
    for ci, name in enumerate(MNEMONICS):
        cb = codebooks.codebooks[name]
        tau = extract_tau(segment.values(name), codebooks.tau_len, codebooks.stride)
        lab = cb.assign_raw(tau)
        labels[ci] = lab
        counts[ci * k:(ci + 1) * k] = np.bincount(lab, minlength=k)
    index = SegmentIndex(labels=labels, k=k, tau_len=codebooks.tau_len,
                         stride=codebooks.stride)
    return counts, index


def train_codebooks(
    windows: Sequence[Segment],
    k: int = CODEBOOK_SIZE,
    tau_len: int = TAU_LEN,
    stride: int = TAU_STRIDE,
    seed: int = 0,
    max_iter: int = 40,
    max_tau_per_channel: int | None = None,
) -> CodebookSet:
    """Fit per-channel codebooks on the tau-segments of the given windows.

    Normalization statistics are the scalar mean and standard deviation of
    each channel's raw window samples.  max_tau_per_channel caps the k-means
    corpus by seeded subsampling; statistics always use the full corpus.
    """
    if not windows:
        raise DataError("cannot train codebooks with no windows")
    rng = np.random.default_rng(seed)
    codebooks: dict[str, Codebook] = {}
    for name in MNEMONICS:
        raw = np.concatenate([w.values(name) for w in windows])
        mean = float(np.mean(raw))
        std = float(np.std(raw))
        if std < STD_FLOOR:
            std = STD_FLOOR
        tau = np.concatenate(
            [extract_tau(w.values(name), tau_len, stride) for w in windows])
        if max_tau_per_channel is not None and len(tau) > max_tau_per_channel:
            pick = rng.choice(len(tau), size=max_tau_per_channel, replace=False)
            tau = tau[np.sort(pick)]
        normalized = (tau - mean) / std
        centers, _, _ = kmeans(normalized, k, rng, max_iter=max_iter)
        codebooks[name] = Codebook(channel=name, mean=mean, std=std, centers=centers)
    return CodebookSet(codebooks=codebooks, tau_len=tau_len, stride=stride)


def assign_series(values: np.ndarray, codebook: Codebook, tau_len: int,
                  stride: int = 1) -> np.ndarray:
    """Labels for every tau-segment start of a full series (default all starts)."""
    tau = extract_tau(values, tau_len, stride)
    return codebook.assign_raw(tau)


def counts_matrix(all_labels: np.ndarray, start_samples: np.ndarray, k: int,
                  tau_len: int, stride: int = TAU_STRIDE,
                  window_samples: int = WINDOW_SAMPLES) -> np.ndarray:
    """Count vectors, one row per window start, from precomputed labels.

    all_labels is (n_channels, n_starts) with one label per sample-index
    start; the window beginning at sample s uses starts s, s+stride, ...
    """
    starts = np.asarray(start_samples, dtype=np.int64)
    n_tau = tau_count(window_samples, tau_len, stride)
    n_ch = all_labels.shape[0]
    offsets = np.arange(n_tau, dtype=np.int64) * stride
    out = np.empty((len(starts), n_ch * k), dtype=np.float64)
    row_base = np.arange(len(starts), dtype=np.int64) * k
    for ci in range(n_ch):
        lab = all_labels[ci][starts[:, None] + offsets[None, :]]
        flat = (lab.astype(np.int64) + row_base[:, None]).ravel()
        binc = np.bincount(flat, minlength=len(starts) * k)
        out[:, ci * k:(ci + 1) * k] = binc.reshape(len(starts), k)
    return out


def counts_at(all_labels: np.ndarray, start_sample: int, k: int, tau_len: int,
              stride: int = TAU_STRIDE,
              window_samples: int = WINDOW_SAMPLES) -> np.ndarray:
    """One window's count vector from precomputed all-start labels."""
    return counts_matrix(all_labels, np.asarray([start_sample]), k, tau_len,
                         stride, window_samples)[0]
