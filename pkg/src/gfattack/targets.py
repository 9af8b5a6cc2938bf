"""Downstream models whose accuracy measures the damage done by an attack.

Filter models (SGC, GCN) are trained once on the clean graph; after an
attack their weights stay fixed and only the propagation matrix changes.
The matrix-factorization embeddings (DeepWalk, LINE) have no inductive
mode, so they are recomputed on the attacked graph and the classifier on
top of them is refit.
"""

from __future__ import annotations

import enum
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.optimize
import scipy.sparse as sp
from sklearn.utils.extmath import randomized_svd

from .errors import ConfigError, NumericError, PreconditionError
from .graph import AttributedGraph, DegreeProfile, degree_profile

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class FilterMode(str, enum.Enum):
    SHIFTED = "shifted"            # Â + I
    RENORMALIZED = "renormalized"  # D̃^-1/2 (A + I) D̃^-1/2


def propagation_matrix(adj, mode=FilterMode.RENORMALIZED) -> sp.csr_matrix:
    adj = sp.csr_matrix(adj, dtype=np.float64)
    n = adj.shape[0]
    eye = sp.identity(n, format="csr")
    if FilterMode(mode) is FilterMode.SHIFTED:
        deg = np.asarray(adj.sum(axis=1)).ravel()
        inv = np.zeros_like(deg)
        inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
        d = sp.diags(inv)
        return (d @ adj @ d + eye).tocsr()
    a_tilde = adj + eye
    d = sp.diags(1.0 / np.sqrt(np.asarray(a_tilde.sum(axis=1)).ravel()))
    return (d @ a_tilde @ d).tocsr()


def propagate(S, X: np.ndarray, K: int) -> np.ndarray:
    out = np.asarray(X, dtype=np.float64)
    for _ in range(K):
        out = S @ out
    return out


def graph_layer(S, H: np.ndarray, W: np.ndarray, activation: Optional[Callable] = None) -> np.ndarray:
    """One graph-convolution layer ``σ(S H W)``; ``activation=None`` is linear."""
    out = S @ (H @ W)
    return out if activation is None else activation(out)


def relu(x):
    return np.maximum(x, 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. ``logits``."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    m = len(y)
    loss = -logp[np.arange(m), y].mean()
    grad = np.exp(logp)
    grad[np.arange(m), y] -= 1.0
    return float(loss), grad / m


# --------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class EvalSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def labeled(self) -> np.ndarray:
        return np.sort(np.concatenate([self.train, self.val]))


def make_split(n: int, seed: int = 0, labeled_frac: float = 0.2) -> EvalSplit:
    """Random 10/10/80 split: the labeled fifth is halved into train and val."""
    perm = np.random.default_rng(seed).permutation(n)
    n_lab = int(round(labeled_frac * n))
    n_train = n_lab // 2
    return EvalSplit(np.sort(perm[:n_train]), np.sort(perm[n_train:n_lab]), np.sort(perm[n_lab:]))


# --------------------------------------------------------------------------
# optimisation


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    weight_decay: float = 5e-4
    patience: int = 20
    optimizer: str = "adam"
    dropout: float = 0.0
    seed: int = 0


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for k in params:
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mh = self.m[k] / (1 - self.b1 ** self.t)
            vh = self.v[k] / (1 - self.b2 ** self.t)
            params[k] = params[k] - self.lr * mh / (np.sqrt(vh) + self.eps)


class _GD:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for k in params:
            params[k] = params[k] - self.lr * grads[k]


def _optimizer(name, params, lr):
    if name == "adam":
        return _Adam(params, lr)
    if name == "gd":
        return _GD(params, lr)
    raise ConfigError(f"unknown optimizer {name!r}")


def _fit(params, loss_grad, val_score, cfg: TrainConfig, rng):
    """Full-batch training with early stopping on validation accuracy.

    ``val_score(params)`` returns (accuracy, loss); the best parameters by
    accuracy (ties to lower loss) are restored at the end. Patience resets
    whenever either validation accuracy or validation loss improves, so a
    slow start on the accuracy plateau does not end training.
    """
    opt = _optimizer(cfg.optimizer, params, cfg.lr)
    best = (-1.0, np.inf)
    best_params = {k: v.copy() for k, v in params.items()}
    best_loss = np.inf
    stale = 0
    for _ in range(cfg.epochs):
        _, grads = loss_grad(params, rng)
        opt.step(params, grads)
        acc, vloss = val_score(params)
        improved = False
        if (acc, -vloss) > (best[0], -best[1]):
            best = (acc, vloss)
            best_params = {k: v.copy() for k, v in params.items()}
            improved = True
        if vloss < best_loss:
            best_loss = vloss
            improved = True
        if improved:
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best_params


def _glorot(rng, fan_in, fan_out):
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=(fan_in, fan_out))


def _require_labels(g: AttributedGraph):
    if g.labels is None:
        raise PreconditionError("training a classifier needs vertex labels")
    return g.labels


# --------------------------------------------------------------------------
# SGC


@dataclass(eq=False)
class SgcModel:
    K: int
    theta: np.ndarray
    filter_mode: FilterMode = FilterMode.RENORMALIZED

    def logits(self, g: AttributedGraph) -> np.ndarray:
        S = propagation_matrix(g.adj, self.filter_mode)
        # S^K (X θ) == (S^K X) θ, and the right side is far cheaper
        return propagate(S, g.features @ self.theta, self.K)

    def predict_proba(self, g: AttributedGraph) -> np.ndarray:
        return softmax(self.logits(g))

    def predict(self, g: AttributedGraph) -> np.ndarray:
        return self.logits(g).argmax(axis=1)


def sgc_loss_grad(theta, F, y, idx, weight_decay=0.0):
    loss, dz = cross_entropy(F[idx] @ theta, y[idx])
    grad = F[idx].T @ dz + weight_decay * theta
    return loss + 0.5 * weight_decay * float(np.sum(theta * theta)), grad


def train_sgc(g: AttributedGraph, split: EvalSplit, K: int = 2, epochs: int = 100, lr: float = 0.2,
              weight_decay: float = 5e-5, patience: int = 20, seed: int = 0,
              filter_mode=FilterMode.RENORMALIZED, optimizer: str = "adam") -> SgcModel:
    y = _require_labels(g)
    C = g.n_classes
    S = propagation_matrix(g.adj, filter_mode)
    F = propagate(S, g.features, K)
    rng = np.random.default_rng(seed)
    params = {"theta": _glorot(rng, F.shape[1], C)}
    cfg = TrainConfig(epochs, lr, weight_decay, patience, optimizer, 0.0, seed)

    def loss_grad(p, _rng):
        loss, grad = sgc_loss_grad(p["theta"], F, y, split.train, weight_decay)
        return loss, {"theta": grad}

    def val_score(p):
        z = F[split.val] @ p["theta"]
        return float((z.argmax(1) == y[split.val]).mean()), cross_entropy(z, y[split.val])[0]

    best = _fit(params, loss_grad, val_score, cfg, rng)
    return SgcModel(K, best["theta"], FilterMode(filter_mode))


# --------------------------------------------------------------------------
# GCN


@dataclass(eq=False)
class GcnModel:
    W1: np.ndarray
    W2: np.ndarray
    _xw1: Optional[np.ndarray] = field(default=None, repr=False)
    _x_id: Optional[int] = field(default=None, repr=False)

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def logits(self, g: AttributedGraph) -> np.ndarray:
        S = propagation_matrix(g.adj, FilterMode.RENORMALIZED)
        # X W1 does not depend on the structure; reuse it across attacked graphs
        if self._x_id != id(g.features) or self._xw1 is None:
            self._xw1 = g.features @ self.W1
            self._x_id = id(g.features)
        H = relu(S @ self._xw1)
        return S @ (H @ self.W2)

    def predict_proba(self, g: AttributedGraph) -> np.ndarray:
        return softmax(self.logits(g))

    def predict(self, g: AttributedGraph) -> np.ndarray:
        return self.logits(g).argmax(axis=1)


def gcn_loss_grad(W1, W2, S, SX, y, idx, weight_decay=0.0, mask=None):
    """Cross-entropy of a two-layer GCN on ``idx`` and gradients for W1, W2.

    ``SX`` is the precomputed ``S @ X``; ``mask`` is an optional (already
    rescaled) dropout mask on the hidden layer. L2 decay applies to W1 only.
    """
    A1 = SX @ W1
    H = relu(A1)
    if mask is not None:
        H = H * mask
    SH = S @ H
    logits = SH @ W2
    loss, dz_idx = cross_entropy(logits[idx], y[idx])
    dZ = np.zeros_like(logits)
    dZ[idx] = dz_idx
    gW2 = SH.T @ dZ
    dH = S.T @ (dZ @ W2.T)
    if mask is not None:
        dH = dH * mask
    dA1 = dH * (A1 > 0)
    gW1 = SX.T @ dA1 + weight_decay * W1
    return loss + 0.5 * weight_decay * float(np.sum(W1 * W1)), gW1, gW2


def train_gcn(g: AttributedGraph, split: EvalSplit, h: int = 16, epochs: int = 200, lr: float = 0.01,
              weight_decay: float = 5e-4, patience: int = 20, dropout: float = 0.5, seed: int = 0,
              optimizer: str = "adam") -> GcnModel:
    y = _require_labels(g)
    C = g.n_classes
    S = propagation_matrix(g.adj, FilterMode.RENORMALIZED)
    SX = S @ g.features
    rng = np.random.default_rng(seed)
    params = {"W1": _glorot(rng, g.features.shape[1], h), "W2": _glorot(rng, h, C)}
    cfg = TrainConfig(epochs, lr, weight_decay, patience, optimizer, dropout, seed)

    def loss_grad(p, r):
        mask = None
        if dropout > 0:
            mask = (r.random((g.n, h)) >= dropout) / (1.0 - dropout)
        loss, g1, g2 = gcn_loss_grad(p["W1"], p["W2"], S, SX, y, split.train, weight_decay, mask)
        return loss, {"W1": g1, "W2": g2}

    def val_score(p):
        z = S @ (relu(SX @ p["W1"]) @ p["W2"])
        zv = z[split.val]
        return float((zv.argmax(1) == y[split.val]).mean()), cross_entropy(zv, y[split.val])[0]

    best = _fit(params, loss_grad, val_score, cfg, rng)
    return GcnModel(best["W1"], best["W2"])


# --------------------------------------------------------------------------
# DeepWalk / LINE as matrix factorization


def deepwalk_matrix(g: AttributedGraph, deg: Optional[DegreeProfile], K: int, b: float) -> np.ndarray:
    """Truncated-log co-occurrence matrix ``log max(vol/b · (1/K)Σ_k P^k D^-1, 1)``."""
    if K < 1 or b < 1:
        raise ValueError("window K and negative samples b must be >= 1")
    deg = deg if deg is not None else degree_profile(g)
    d = deg.degrees.astype(np.float64)
    if (d == 0).any():
        raise PreconditionError("DeepWalk matrix is undefined with isolated vertices")
    P = sp.diags(1.0 / d) @ g.adj
    Pk = P.toarray()
    acc = Pk.copy()
    for _ in range(K - 1):
        Pk = P @ Pk
        acc += Pk
    M = acc * (deg.volume / (b * K)) / d[None, :]
    return np.log(np.maximum(M, 1.0))


@dataclass(eq=False)
class NetmfEmbedding:
    K: int
    b: float
    d: int
    Z: np.ndarray


def netmf_embed(g: AttributedGraph, K: int = 5, b: float = 5, d: int = 128, seed: int = 0) -> NetmfEmbedding:
    """Rank-d factorization ``Z = U_d diag(σ_d)^½`` of the DeepWalk matrix.

    Small graphs use an exact SVD; larger ones a seeded randomized SVD.
    """
    if d > g.n:
        raise ValueError(f"embedding dimension {d} exceeds n={g.n}")
    M = deepwalk_matrix(g, None, K, b)
    try:
        if g.n <= 400:
            U, s, _ = np.linalg.svd(M)
            U, s = U[:, :d], s[:d]
        else:
            U, s, _ = randomized_svd(M, d, n_oversamples=20, n_iter=7, random_state=seed)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD of the DeepWalk matrix failed: {exc}") from exc
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    Z = U * signs * np.sqrt(np.maximum(s, 0.0))
    return NetmfEmbedding(K, b, d, Z)


@dataclass(eq=False)
class LogisticRegression:
    """Multinomial logistic regression with an L2 penalty, fit by L-BFGS."""

    l2: float = 1e-4
    max_iter: int = 2000
    W: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None

    def _unpack(self, w, l, C):
        return w[: l * C].reshape(l, C), w[l * C:]

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: Optional[int] = None) -> "LogisticRegression":
        C = n_classes or int(y.max()) + 1
        l = X.shape[1]

        def f(w):
            W, b = self._unpack(w, l, C)
            loss, dz = cross_entropy(X @ W + b, y)
            gW = X.T @ dz + self.l2 * W
            return loss + 0.5 * self.l2 * float(np.sum(W * W)), np.concatenate([gW.ravel(), dz.sum(0)])

        res = scipy.optimize.minimize(f, np.zeros(l * C + C), jac=True, method="L-BFGS-B",
                                      options={"maxiter": self.max_iter, "gtol": 1e-8})
        self.W, self.bias = self._unpack(res.x, l, C)
        return self

    def decision_function(self, X):
        return X @ self.W + self.bias

    def predict(self, X):
        return self.decision_function(X).argmax(axis=1)


def _standardize(Z: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return Z / norms


def embed_and_classify(g: AttributedGraph, split: EvalSplit, K: int = 5, b: float = 5, d: int = 128,
                       l2: float = 1e-4) -> tuple[NetmfEmbedding, LogisticRegression]:
    y = _require_labels(g)
    emb = netmf_embed(g, K, b, d)
    lab = split.labeled
    clf = LogisticRegression(l2).fit(_standardize(emb.Z)[lab], y[lab], g.n_classes)
    return emb, clf


# --------------------------------------------------------------------------
# fitted targets with a uniform predict(graph) interface


class TargetModel:
    name = "target"
    transductive = False

    def predict(self, g: AttributedGraph) -> np.ndarray:
        raise NotImplementedError


@dataclass(eq=False)
class FilterTarget(TargetModel):
    """SGC/GCN target: weights fixed after training on the clean graph."""

    model: object
    name: str = "gcn"

    def predict(self, g):
        return self.model.predict(g)


@dataclass(eq=False)
class EmbeddingTarget(TargetModel):
    """DeepWalk/LINE target: re-embed the given graph and refit the classifier."""

    split: EvalSplit
    K: int = 5
    b: float = 5
    d: int = 128
    l2: float = 1e-4
    name: str = "deepwalk"
    transductive = True

    def predict(self, g):
        emb, clf = embed_and_classify(g, self.split, self.K, self.b, min(self.d, g.n), self.l2)
        return clf.predict(_standardize(emb.Z))


MODEL_NAMES = ("gcn", "sgc", "deepwalk", "line")


def build_target(name: str, g: AttributedGraph, split: EvalSplit, seed: int = 0, **hp) -> TargetModel:
    """Train the named target model on the clean graph."""
    if name == "gcn":
        keys = ("h", "epochs", "lr", "weight_decay", "patience", "dropout", "optimizer")
        return FilterTarget(train_gcn(g, split, seed=seed, **{k: hp[k] for k in keys if k in hp}), "gcn")
    if name == "sgc":
        keys = ("K", "epochs", "lr", "weight_decay", "patience", "filter_mode", "optimizer")
        kw = {k: hp[k] for k in keys if k in hp}
        kw.setdefault("K", 2)
        return FilterTarget(train_sgc(g, split, seed=seed, **kw), "sgc")
    if name in ("deepwalk", "line"):
        K = 1 if name == "line" else hp.get("window", 5)
        return EmbeddingTarget(split, K, hp.get("negative", 5), hp.get("dim", 128), hp.get("l2", 1e-4), name)
    raise ConfigError(f"unknown target model {name!r}; choose from {MODEL_NAMES}")


def save_model(model, path) -> None:
    """Versioned ``.npz`` checkpoint for SGC/GCN weights."""
    if isinstance(model, FilterTarget):
        model = model.model
    if isinstance(model, SgcModel):
        arrays = {"kind": np.array("sgc"), "K": np.array(model.K), "theta": model.theta,
                  "filter_mode": np.array(model.filter_mode.value)}
    elif isinstance(model, GcnModel):
        arrays = {"kind": np.array("gcn"), "W1": model.W1, "W2": model.W2}
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    buf = io.BytesIO()
    np.savez(buf, version=np.array(CHECKPOINT_VERSION), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        kind = str(z["kind"])
        if kind == "sgc":
            return SgcModel(int(z["K"]), z["theta"].copy(), FilterMode(str(z["filter_mode"])))
        if kind == "gcn":
            return GcnModel(z["W1"].copy(), z["W2"].copy())
    raise ValueError(f"{path}: unknown model kind {kind!r}")


def accuracy(pred: np.ndarray, y: np.ndarray, idx: Sequence[int]) -> float:
    idx = np.asarray(idx)
    return float((pred[idx] == y[idx]).mean()) if idx.size else float("nan")


def select_targets(pred: np.ndarray, g: AttributedGraph, split: EvalSplit, count: int, seed: int = 0) -> np.ndarray:
    """Seeded uniform sample of correctly classified test vertices."""
    y = _require_labels(g)
    ok = split.test[pred[split.test] == y[split.test]]
    rng = np.random.default_rng(seed)
    if count >= ok.size:
        return np.sort(ok)
    return np.sort(rng.choice(ok, size=count, replace=False))


def evaluate_attack(model: TargetModel, g: AttributedGraph, split: EvalSplit, targets: Sequence[int],
                    attacker: Callable, *, config: Optional[dict] = None, method: str = "",
                    clean_pred: Optional[np.ndarray] = None, workers: int = 1):
    """Attack each target in turn and record the model's prediction change.

    ``attacker(g, t)`` returns an attack result with ``flips`` and ``graph``.
    Each target is attacked independently on the clean graph.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .report import AttackReport, TargetRecord

    targets = [int(t) for t in targets]
    if not targets:
        raise ValueError("no targets to attack")
    y = _require_labels(g)
    test = set(split.test.tolist())
    if any(t not in test for t in targets):
        raise ValueError("targets must be test vertices")
    if clean_pred is None:
        clean_pred = model.predict(g)
    clean_test = accuracy(clean_pred, y, split.test)

    def one(t):
        res = attacker(g, t)
        if res.flips:
            pred = model.predict(res.graph)
        else:
            pred = clean_pred
        return TargetRecord(
            target=t,
            flips=[[f.flip.u, f.flip.v, f.flip.sign] for f in res.flips],
            scores=[f.score for f in res.flips],
            label=int(y[t]),
            clean_pred=int(clean_pred[t]),
            attacked_pred=int(pred[t]),
            clean_test_accuracy=clean_test,
            attacked_test_accuracy=accuracy(pred, y, split.test),
            disconnects_target=bool(res.disconnects_target),
        )

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            records = list(pool.map(one, targets))
    else:
        records = [one(t) for t in targets]
    return AttackReport(dict(config or {}), model.name, method, records).finalize()
