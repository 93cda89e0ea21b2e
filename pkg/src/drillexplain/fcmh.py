"""Attention classifier over count features with built-in importances.

Every histogram bin becomes a token (the bin count times a learned
embedding), two-head scaled dot-product self-attention mixes the tokens,
and the per-token outputs are mean-pooled into a vector that two linear
layers with dropout map to class probabilities.  The mean attention each
token receives, averaged over heads, is the feature importance; it sums to
one by construction.

Tokens of zero-count bins are exactly zero vectors (the embedding is purely
multiplicative and the projections carry no bias), so attention rows and
columns for those tokens collapse to closed forms.  The fast path computes
attention only among nonzero tokens plus a constant extra softmax mass for
the zero block; the dense path materializes all tokens and is kept as the
reference the fast path is checked against.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactError, TrainingError, UsageError

PARAM_NAMES = ("E", "Wq", "Wk", "Wv", "W1", "b1", "W2", "b2")

# fit() scales inputs so nonzero entries land near this RMS; token
# magnitudes of a few units give the attention logits usable spread,
# while count peaks divided by their own maximum would flatten the
# softmax into near-uniform rows that never differentiate.
TOKEN_RMS = 3.0


@dataclass(frozen=True)
class AttentionConfig:
    embed_dim: int = 8
    n_heads: int = 2
    hidden: int = 64
    dropout: float = 0.05
    learning_rate: float = 0.05
    epochs: int = 12
    batch_size: int = 16
    positive_class_weight: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim % self.n_heads != 0:
            raise UsageError("embed_dim must be divisible by n_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise UsageError("dropout must be in [0, 1)")
        # zero learning rate is allowed: it makes training a checkable no-op
        if self.learning_rate < 0.0 or self.epochs < 0 or self.batch_size < 1:
            raise UsageError("invalid optimizer settings")


class AttentionClassifier:
    """Two-head self-attention over feature tokens with a linear read-out."""

    def __init__(self, config: AttentionConfig | None = None):
        self.config = config if config is not None else AttentionConfig()
        self.n_features: int = 0
        self.input_scale: float = 1.0
        self.params: dict[str, np.ndarray] = {}
        self.train_losses_: list[float] = []

    # ---------------------------------------------------------------- setup

    def init(self, n_features: int, rng: np.random.Generator | None = None) -> None:
        """Allocate parameters for inputs of the given width."""
        if n_features < 1:
            raise UsageError("n_features must be positive")
        cfg = self.config
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        d, h1 = cfg.embed_dim, cfg.hidden
        self.n_features = n_features
        # uniform scaled by fan-in; the embedding rows each multiply one
        # scalar count, so their fan-in is 1
        self.params = {
            "E": rng.uniform(-1.0, 1.0, size=(n_features, d)),
            "Wq": rng.uniform(-1.0, 1.0, size=(d, d)) / np.sqrt(d),
            "Wk": rng.uniform(-1.0, 1.0, size=(d, d)) / np.sqrt(d),
            "Wv": rng.uniform(-1.0, 1.0, size=(d, d)) / np.sqrt(d),
            "W1": rng.uniform(-1.0, 1.0, size=(h1, n_features)) / np.sqrt(n_features),
            "b1": np.zeros(h1),
            "W2": rng.uniform(-1.0, 1.0, size=(2, h1)) / np.sqrt(h1),
            "b2": np.zeros(2),
        }

    def _check_ready(self):
        if not self.params:
            raise UsageError("model is not initialized")

    def _heads(self, M: np.ndarray) -> list[np.ndarray]:
        dh = self.config.embed_dim // self.config.n_heads
        return [M[:, h * dh:(h + 1) * dh] for h in range(self.config.n_heads)]

    # -------------------------------------------------------------- forward

    def _forward_sparse(self, x: np.ndarray) -> dict:
        """Attention internals using only nonzero tokens.

        Zero tokens enter each softmax row as (n - m) copies of score zero
        and produce one shared uniform output row.
        """
        cfg = self.config
        n = self.n_features
        d = cfg.embed_dim
        dh = d // cfg.n_heads
        nz = np.nonzero(x)[0]
        m = len(nz)
        xs = x[nz] * self.input_scale

        P = self.params
        Tn = xs[:, None] * P["E"][nz]
        Qn, Kn, Vn = Tn @ P["Wq"], Tn @ P["Wk"], Tn @ P["Wv"]
        heads = []
        pooled = np.empty(n)
        O_nz = np.empty((m, d))
        zero_out = np.empty(d)
        scale = 1.0 / np.sqrt(dh)
        for h, (Qh, Kh, Vh) in enumerate(zip(self._heads(Qn), self._heads(Kn),
                                             self._heads(Vn))):
            if m:
                S = (Qh @ Kh.T) * scale
                M = np.maximum(S.max(axis=1), 0.0)
                expS = np.exp(S - M[:, None])
                ez = np.exp(-M)
                D = expS.sum(axis=1) + (n - m) * ez
                A = expS / D[:, None]
                az = ez / D
                O_nz[:, h * dh:(h + 1) * dh] = A @ Vh
            else:
                A = np.zeros((0, 0))
                az = np.zeros(0)
            zero_out[h * dh:(h + 1) * dh] = Vh.sum(axis=0) / n
            heads.append({"A": A, "az": az, "Qh": Qh, "Kh": Kh, "Vh": Vh})

        c = float(zero_out.mean())
        pooled[:] = c
        if m:
            pooled[nz] = O_nz.mean(axis=1)
        return {"nz": nz, "xs": xs, "Tn": Tn, "heads": heads, "pooled": pooled,
                "zero_out": zero_out, "c": c}

    def _forward_dense(self, x: np.ndarray) -> dict:
        """Reference attention over all tokens, used for validation."""
        cfg = self.config
        d = cfg.embed_dim
        dh = d // cfg.n_heads
        P = self.params
        T = (x * self.input_scale)[:, None] * P["E"]
        Q, K, V = T @ P["Wq"], T @ P["Wk"], T @ P["Wv"]
        heads = []
        O = np.empty((self.n_features, d))
        scale = 1.0 / np.sqrt(dh)
        for h, (Qh, Kh, Vh) in enumerate(zip(self._heads(Q), self._heads(K),
                                             self._heads(V))):
            S = (Qh @ Kh.T) * scale
            M = S.max(axis=1)
            expS = np.exp(S - M[:, None])
            A = expS / expS.sum(axis=1)[:, None]
            O[:, h * dh:(h + 1) * dh] = A @ Vh
            heads.append({"A": A, "Qh": Qh, "Kh": Kh, "Vh": Vh})
        return {"T": T, "heads": heads, "pooled": O.mean(axis=1)}

    def _readout(self, pooled: np.ndarray,
                 dropout_mask: np.ndarray | None) -> dict:
        P = self.params
        z1 = P["W1"] @ pooled + P["b1"]
        if dropout_mask is not None:
            u = z1 * dropout_mask / (1.0 - self.config.dropout)
        else:
            u = z1
        z2 = P["W2"] @ u + P["b2"]
        zs = z2 - z2.max()
        e = np.exp(zs)
        prob = e / e.sum()
        return {"z1": z1, "u": u, "z2": z2, "prob": prob}

    # ------------------------------------------------------------- training

    def _sample_grads(self, x: np.ndarray, y: int, weight: float,
                      dropout_mask: np.ndarray | None, grads: dict,
                      dense: bool = False) -> float:
        """Accumulate d(weight * loss)/d(params) for one sample; returns the
        weighted loss."""
        cfg = self.config
        P = self.params
        fwd = self._forward_dense(x) if dense else self._forward_sparse(x)
        ro = self._readout(fwd["pooled"], dropout_mask)

        p = ro["prob"]
        loss = -weight * float(np.log(max(p[y], 1e-300)))
        dz2 = weight * p.copy()
        dz2[y] -= weight

        grads["W2"] += np.outer(dz2, ro["u"])
        grads["b2"] += dz2
        du = P["W2"].T @ dz2
        if dropout_mask is not None:
            dz1 = du * dropout_mask / (1.0 - cfg.dropout)
        else:
            dz1 = du
        grads["W1"] += np.outer(dz1, fwd["pooled"])
        grads["b1"] += dz1
        dpooled = P["W1"].T @ dz1

        if dense:
            self._backward_dense(x, fwd, dpooled, grads)
        else:
            self._backward_sparse(x, fwd, dpooled, grads)
        return loss

    def _backward_dense(self, x, fwd, dpooled, grads):
        cfg = self.config
        d = cfg.embed_dim
        dh = d // cfg.n_heads
        scale = 1.0 / np.sqrt(dh)
        P = self.params
        T = fwd["T"]
        dT = np.zeros_like(T)
        dO_col = dpooled / d  # every output dim shares the pooled gradient
        for h, head in enumerate(fwd["heads"]):
            A, Qh, Kh, Vh = head["A"], head["Qh"], head["Kh"], head["Vh"]
            dOh = np.repeat(dO_col[:, None], dh, axis=1)
            dA = dOh @ Vh.T
            dVh = A.T @ dOh
            r = np.einsum("ij,ij->i", dA, A)
            dS = A * (dA - r[:, None]) * scale
            dQh = dS @ Kh
            dKh = dS.T @ Qh
            sl = slice(h * dh, (h + 1) * dh)
            grads["Wq"][:, sl] += T.T @ dQh
            grads["Wk"][:, sl] += T.T @ dKh
            grads["Wv"][:, sl] += T.T @ dVh
            dT += dQh @ P["Wq"][:, sl].T + dKh @ P["Wk"][:, sl].T \
                + dVh @ P["Wv"][:, sl].T
        grads["E"] += (x * self.input_scale)[:, None] * dT

    def _backward_sparse(self, x, fwd, dpooled, grads):
        cfg = self.config
        n = self.n_features
        d = cfg.embed_dim
        dh = d // cfg.n_heads
        scale = 1.0 / np.sqrt(dh)
        P = self.params
        nz, xs, Tn = fwd["nz"], fwd["xs"], fwd["Tn"]
        m = len(nz)
        if m == 0:
            return
        dO_nz_col = dpooled[nz] / d
        zero_mask = np.ones(n, dtype=bool)
        zero_mask[nz] = False
        g_zero = float(dpooled[zero_mask].sum()) / d  # shared by all zero rows

        dTn = np.zeros_like(Tn)
        for h, head in enumerate(fwd["heads"]):
            A, Qh, Kh, Vh = head["A"], head["Qh"], head["Kh"], head["Vh"]
            dOh = np.repeat(dO_nz_col[:, None], dh, axis=1)
            dA = dOh @ Vh.T
            dVh = A.T @ dOh
            dVh += g_zero / n  # uniform rows of the zero block
            r = np.einsum("ij,ij->i", dA, A)
            dS = A * (dA - r[:, None]) * scale
            dQh = dS @ Kh
            dKh = dS.T @ Qh
            sl = slice(h * dh, (h + 1) * dh)
            grads["Wq"][:, sl] += Tn.T @ dQh
            grads["Wk"][:, sl] += Tn.T @ dKh
            grads["Wv"][:, sl] += Tn.T @ dVh
            dTn += dQh @ P["Wq"][:, sl].T + dKh @ P["Wk"][:, sl].T \
                + dVh @ P["Wv"][:, sl].T
        grads["E"][nz] += xs[:, None] * dTn

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray,
                       dropout_masks: np.ndarray | None = None,
                       dense: bool = False) -> tuple[float, dict[str, np.ndarray]]:
        """Weighted-mean cross-entropy over the batch and its gradients."""
        self._check_ready()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.int64))
        cfg = self.config
        w = np.where(y == 1, cfg.positive_class_weight, 1.0)
        wsum = float(w.sum())
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        total = 0.0
        for i in range(len(X)):
            mask = dropout_masks[i] if dropout_masks is not None else None
            total += self._sample_grads(X[i], int(y[i]), float(w[i]), mask,
                                        grads, dense=dense)
        for k in grads:
            grads[k] /= wsum
        return total / wsum, grads

    def fit(self, X: np.ndarray, y: np.ndarray) -> "AttentionClassifier":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y):
            raise UsageError("X must be 2-D with one label per row")
        if not np.all((y == 0) | (y == 1)):
            raise UsageError("labels must be 0 or 1")
        if len(np.unique(y)) < 2:
            raise TrainingError("training labels contain a single class")
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        nz = np.abs(X[X != 0.0])
        rms = float(np.sqrt(np.mean(nz ** 2))) if nz.size else 1.0
        self.input_scale = TOKEN_RMS / rms
        self.init(X.shape[1], rng)
        self.train_losses_ = []

        n = len(X)
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            epoch_weight = 0.0
            for start in range(0, n, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                if cfg.dropout > 0.0:
                    masks = (rng.random((len(batch), cfg.hidden))
                             >= cfg.dropout).astype(np.float64)
                else:
                    masks = None
                loss, grads = self.loss_and_grads(X[batch], y[batch],
                                                  dropout_masks=masks)
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"training diverged: non-finite loss in epoch {epoch}")
                for k, g in grads.items():
                    self.params[k] -= cfg.learning_rate * g
                bw = float(np.where(y[batch] == 1,
                                    cfg.positive_class_weight, 1.0).sum())
                epoch_loss += loss * bw
                epoch_weight += bw
            self.train_losses_.append(epoch_loss / epoch_weight)
        return self

    # ------------------------------------------------------------ inference

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Positive-class probability per row, dropout off."""
        self._check_ready()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise UsageError(f"expected {self.n_features} features, "
                             f"got shape {X.shape}")
        out = np.empty(len(X))
        for i in range(len(X)):
            fwd = self._forward_sparse(X[i])
            out[i] = self._readout(fwd["pooled"], None)["prob"][1]
        return out

    def importance(self, x: np.ndarray, dense: bool = False) -> np.ndarray:
        """Mean attention received per token, averaged over heads; sums to 1."""
        self._check_ready()
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise UsageError(f"expected {self.n_features} features, got {x.shape}")
        cfg = self.config
        n = self.n_features
        if dense:
            fwd = self._forward_dense(x)
            imp = np.zeros(n)
            for head in fwd["heads"]:
                imp += head["A"].mean(axis=0)
            return imp / cfg.n_heads

        fwd = self._forward_sparse(x)
        nz = fwd["nz"]
        m = len(nz)
        imp = np.full(n, 0.0)
        if m == 0:
            return np.full(n, 1.0 / n)
        acc_nz = np.zeros(m)
        acc_zero = 0.0
        for head in fwd["heads"]:
            # zero rows attend uniformly: 1/n to every column
            acc_nz += head["A"].sum(axis=0) + (n - m) / n
            acc_zero += head["az"].sum() + (n - m) / n
        imp[:] = acc_zero / (cfg.n_heads * n)
        imp[nz] = acc_nz / (cfg.n_heads * n)
        return imp

    # --------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        self._check_ready()
        return {
            "kind": "attention-classifier",
            "config": asdict(self.config),
            "n_features": self.n_features,
            "input_scale": self.input_scale,
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "AttentionClassifier":
        try:
            model = cls(AttentionConfig(**doc["config"]))
            model.n_features = int(doc["n_features"])
            model.input_scale = float(doc["input_scale"])
            model.params = {k: np.asarray(doc["params"][k], dtype=np.float64)
                            for k in PARAM_NAMES}
        except (KeyError, TypeError, ValueError) as exc:
            raise ArtifactError(f"malformed model document: {exc}") from exc
        return model

    @classmethod
    def load(cls, path: str | Path) -> "AttentionClassifier":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"malformed model file {path}: {exc}") from exc
        return cls.from_dict(doc)
