"""Stability diagnostics for explanations, plus a 2-D embedding for plots.

The consistency score measures how far the centroid of the highlighted
tau-segments drifts between neighboring alarm moments, working directly in
the normalized segment space.  Its null distribution comes from size-matched
random segment subsets; an explanation method is consistent when its drift
is smaller than all null draws.  The exact t-SNE embedding is only used to
draw these clouds in reports.
"""

from __future__ import annotations

import numpy as np

from .errors import EmbeddingError, EvaluationError, UsageError


def pairwise_sq_distances(X: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between all rows of X."""
    try:
        X = np.asarray(X, dtype=np.float64)
    except ValueError as exc:
        raise UsageError(f"segments must have equal length: {exc}") from exc
    if X.ndim != 2:
        raise UsageError("expected one matrix of equal-length segment rows")
    sq = np.einsum("ij,ij->i", X, X)
    D = sq[:, None] - 2.0 * X @ X.T + sq[None, :]
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_affinities(d: np.ndarray, target_entropy: float, tol: float,
                    max_iter: int = 100) -> np.ndarray:
    """Precision search for one row so its entropy hits the target in nats."""
    d = d - d.min()
    beta, lo, hi = 1.0, 0.0, np.inf
    p = np.exp(-d * beta)
    for _ in range(max_iter):
        sum_p = p.sum()
        entropy = np.log(sum_p) + beta * float(d @ p) / sum_p
        if abs(entropy - target_entropy) <= tol:
            break
        if entropy > target_entropy:
            lo = beta
            beta = beta * 2.0 if hi == np.inf else (lo + hi) / 2.0
        else:
            hi = beta
            beta = (lo + hi) / 2.0
        p = np.exp(-d * beta)
    return p / p.sum()


def joint_probabilities(D: np.ndarray, perplexity: float,
                        tol: float = 1e-4) -> np.ndarray:
    """Symmetrized neighbor probabilities whose rows match the perplexity.

    D holds squared distances.  Rows are calibrated to entropy
    log(perplexity) within tol, then P = (P + P.T) / (2n), which sums to 1.
    """
    D = np.asarray(D, dtype=np.float64)
    n = len(D)
    if n < 3 * perplexity:
        raise UsageError(f"{n} points cannot support perplexity {perplexity}; "
                         "need at least 3x as many")
    target = np.log(perplexity)
    P = np.zeros((n, n), dtype=np.float64)
    mask = ~np.eye(n, dtype=bool)
    for i in range(n):
        P[i, mask[i]] = _row_affinities(D[i, mask[i]], target, tol)
    P = (P + P.T) / (2.0 * n)
    return P


def kl_and_grad(P: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(P || Q) of the embedding and its gradient with respect to Y."""
    D = pairwise_sq_distances(Y)
    inv = 1.0 / (1.0 + D)
    np.fill_diagonal(inv, 0.0)
    total = inv.sum()
    Q = inv / total
    pos = P > 0
    kl = float(np.sum(P[pos] * np.log(P[pos] / np.maximum(Q[pos], 1e-300))))
    W = (P - Q) * inv
    grad = 4.0 * ((np.diag(W.sum(axis=1)) - W) @ Y)
    return kl, grad


def mds_init(D: np.ndarray) -> np.ndarray:
    """Classical scaling of a squared-distance matrix onto two axes.

    Deterministic up to input order: each axis is flipped so its largest
    magnitude coordinate is positive, which makes the result covariant under
    permutations of the points.
    """
    D = np.asarray(D, dtype=np.float64)
    n = len(D)
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ D @ J
    w, V = np.linalg.eigh(B)
    order = np.argsort(w)[::-1][:2]
    if w[order[0]] <= 1e-12:
        raise EmbeddingError("distances carry no spread to embed")
    comps = V[:, order] * np.sqrt(np.maximum(w[order], 0.0))
    for k in range(comps.shape[1]):
        j = int(np.argmax(np.abs(comps[:, k])))
        if comps[j, k] < 0:
            comps[:, k] = -comps[:, k]
    return comps


def tsne(
    D: np.ndarray,
    perplexity: float = 30.0,
    n_iter: int = 750,
    learning_rate: float = 100.0,
    early_exaggeration: float = 12.0,
    exaggeration_iters: int = 100,
    momentum_start: float = 0.5,
    momentum_final: float = 0.8,
    momentum_switch: int = 250,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Exact t-SNE of a squared-distance matrix into 2-D.

    The embedding starts from the classical-scaling solution shrunk to 1e-4
    scale (or a provided init), so identical inputs embed identically.
    """
    D = np.asarray(D, dtype=np.float64)
    n = len(D)
    P = joint_probabilities(D, perplexity)
    if init is None:
        Y = mds_init(D)
        spread = Y.std()
        Y = Y * (1e-4 / max(spread, 1e-300))
    else:
        Y = np.array(init, dtype=np.float64, copy=True)
        if Y.shape != (n, 2):
            raise UsageError(f"init must be ({n}, 2), got {Y.shape}")

    inc = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(n_iter):
        factor = early_exaggeration if it < exaggeration_iters else 1.0
        _, grad = kl_and_grad(P * factor, Y)
        momentum = momentum_start if it < momentum_switch else momentum_final
        aligned = (grad > 0) == (inc > 0)
        gains[aligned] *= 0.8
        gains[~aligned] += 0.2
        np.maximum(gains, 0.01, out=gains)
        inc = momentum * inc - learning_rate * gains * grad
        Y = Y + inc
        Y = Y - Y.mean(axis=0)
    return Y


def silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette width over all points (Euclidean distances)."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise UsageError("silhouette needs at least two clusters")
    d = np.sqrt(pairwise_sq_distances(points))
    scores = np.empty(len(points))
    for i in range(len(points)):
        same = (labels == labels[i])
        same[i] = False
        a = d[i, same].mean() if same.any() else 0.0
        b = min(d[i, labels == c].mean() for c in uniq if c != labels[i])
        scores[i] = 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
    return float(scores.mean())


def consistency_score(sets: list[np.ndarray]) -> float:
    """Mean centroid displacement across consecutive segment sets.

    Each set holds the highlighted tau-segments of one alarm moment as rows
    in the normalized segment space; a low score means the explanation
    keeps pointing at the same patterns as the alarm develops.
    """
    if len(sets) < 2:
        raise UsageError("consistency needs at least two moments")
    centroids = []
    for s in sets:
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        if s.size == 0:
            raise UsageError("consistency sets must be non-empty")
        centroids.append(s.mean(axis=0))
    c = np.asarray(centroids)
    steps = np.linalg.norm(np.diff(c, axis=0), axis=1)
    return float(steps.mean())


def null_consistency_scores(
    pools: list[np.ndarray],
    sizes: list[int],
    n_draws: int = 20,
    seed: int = 0,
) -> np.ndarray:
    """Consistency scores of size-matched random subsets, one per draw.

    pools[i] holds every tau-segment of moment i's window; each draw picks
    sizes[i] of them uniformly without replacement.
    """
    if len(pools) != len(sizes):
        raise UsageError("pools and sizes must align")
    rng = np.random.default_rng(seed)
    out = np.empty(n_draws)
    for d in range(n_draws):
        sets = []
        for pool, size in zip(pools, sizes):
            pool = np.atleast_2d(np.asarray(pool, dtype=np.float64))
            take = min(max(int(size), 1), len(pool))
            rows = rng.choice(len(pool), size=take, replace=False)
            sets.append(pool[rows])
        out[d] = consistency_score(sets)
    return out


def consistency_p_value(observed: float, nulls: np.ndarray) -> float:
    """One-sided rank p-value of the observed score within the null draws."""
    nulls = np.asarray(nulls, dtype=np.float64)
    if len(nulls) == 0:
        raise EvaluationError("no null draws to compare against")
    return float((1 + int(np.sum(nulls <= observed))) / (len(nulls) + 1))
