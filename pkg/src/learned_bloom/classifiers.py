"""Trainable scorers C(x) in [0, 1]: multinomial naive Bayes, logistic
regression, linear SVM and a one-hidden-layer feed-forward network.

Training runs in float64.  When a trainer finishes, its parameters are
rounded to float32 precision, so an in-memory model and one reloaded from
its ``LBM1`` blob produce bit-identical scores.

Feature standardization (``TrainingConfig.standardize``) is folded back into
the first affine layer after training; it changes conditioning, not the
model family or its size.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import ClassVar, Literal

import numpy as np
from scipy.optimize import minimize_scalar

from .encoding import CharVocabulary, FreqMode, encode, encode_many
from .errors import CorruptBlobError, DomainError, TrainingError

logger = logging.getLogger(__name__)

Kind = Literal["nb", "lr", "svm", "ffnn"]
KINDS: tuple[str, ...] = ("nb", "lr", "svm", "ffnn")

MAGIC = b"LBM1"
VERSION = 1
# magic, version, kind, freq mode, activation, feature_dim, hidden, vocab bytes
_HEADER = struct.Struct("<4sBBBBIII")
_KIND_TAG = {"nb": 1, "lr": 2, "svm": 3, "ffnn": 4, "const": 5}
_MODE_TAG = {"relative": 0, "absolute": 1}
_ACT_TAG = {"": 0, "relu": 1, "tanh": 2}


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for every trainer.

    ``regularization`` is the Laplace smoothing alpha for NB, the L2
    strength for LR and FFNN, and C for the SVM.
    """

    learning_rate: float = 0.5
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0
    regularization: float = 1e-4
    hidden: int = 20
    activation: str = "relu"
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise DomainError("learning_rate, epochs and batch_size must be positive")
        if self.regularization < 0 or self.hidden < 1:
            raise DomainError("regularization must be >= 0 and hidden >= 1")
        if self.activation not in ("relu", "tanh"):
            raise DomainError(f"unknown activation {self.activation!r}")


DEFAULT_CONFIGS: dict[str, TrainingConfig] = {
    "nb": TrainingConfig(regularization=1.0),
    "lr": TrainingConfig(learning_rate=0.5, regularization=1e-4),
    "svm": TrainingConfig(learning_rate=0.05, regularization=10.0),
    "ffnn": TrainingConfig(learning_rate=0.1, regularization=1e-5, hidden=20),
}


def default_config(kind: str, **overrides) -> TrainingConfig:
    if kind not in DEFAULT_CONFIGS:
        raise DomainError(f"unknown classifier kind {kind!r}")
    return replace(DEFAULT_CONFIGS[kind], **overrides)


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _sigmoid_arr(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _f32(a):
    return np.asarray(a, dtype=np.float64).astype(np.float32).astype(np.float64)


@dataclass(eq=False)
class ScoringModel:
    """Base class: a trained scorer plus the encoding it expects."""

    kind: ClassVar[str] = ""
    vocab: CharVocabulary | None = field(default=None, kw_only=True)
    freq_mode: FreqMode = field(default="relative", kw_only=True)

    @property
    def feature_dim(self) -> int:
        raise NotImplementedError

    def score(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def score_many(self, X: np.ndarray) -> np.ndarray:
        # Row by row on purpose: batch BLAS kernels may sum in a different
        # order, and filter construction relies on scores matching queries.
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise DomainError(f"expected shape (n, {self.feature_dim}), got {X.shape}")
        return np.fromiter((self.score(row) for row in X), dtype=np.float64, count=X.shape[0])

    def features(self, canonical: str) -> np.ndarray:
        if self.vocab is None:
            raise DomainError("model has no vocabulary attached")
        return encode(canonical, self.vocab, self.freq_mode)

    def score_text(self, canonical: str) -> float:
        return self.score(self.features(canonical))

    def score_texts(self, canonicals) -> np.ndarray:
        return np.fromiter((self.score_text(c) for c in canonicals), dtype=np.float64, count=len(canonicals))

    def _check(self, x: np.ndarray) -> None:
        if x.shape != (self.feature_dim,):
            raise DomainError(f"feature dimension mismatch: expected {self.feature_dim}, got {x.shape}")

    # serialization ---------------------------------------------------

    def _params(self) -> list[np.ndarray]:
        raise NotImplementedError

    def _extra(self) -> tuple[int, int]:
        """(activation tag, hidden width) for the header."""
        return 0, 0

    def to_bytes(self) -> bytes:
        vocab = "".join(self.vocab.chars).encode("utf-8") if self.vocab is not None else b""
        act, hidden = self._extra()
        head = _HEADER.pack(
            MAGIC, VERSION, _KIND_TAG[self.kind], _MODE_TAG[self.freq_mode], act, self.feature_dim, hidden, len(vocab)
        )
        payload = np.concatenate([np.ravel(p) for p in self._params()]).astype("<f4").tobytes()
        return head + payload + vocab


@dataclass(eq=False)
class NaiveBayesModel(ScoringModel):
    kind: ClassVar[str] = "nb"
    # row 0: non-key class, row 1: key class
    class_log_prior: np.ndarray
    feature_log_prob: np.ndarray
    alpha: float = 1.0

    @property
    def feature_dim(self) -> int:
        return self.feature_log_prob.shape[1]

    def score(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        key = self.class_log_prior[1] + float(x @ self.feature_log_prob[1])
        neg = self.class_log_prior[0] + float(x @ self.feature_log_prob[0])
        return sigmoid(key - neg)

    def _params(self):
        return [self.class_log_prior, self.feature_log_prob]


@dataclass(eq=False)
class LinearModel(ScoringModel):
    """``sigmoid(scale * (w.x + b))``; ``scale`` is 1 for LR and fitted for the SVM."""

    weights: np.ndarray
    bias: float
    scale: float = 1.0
    svm: bool = False

    @property
    def kind(self) -> str:  # type: ignore[override]
        return "svm" if self.svm else "lr"

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    def decision(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        return float(x @ self.weights) + self.bias

    def score(self, x: np.ndarray) -> float:
        return sigmoid(self.scale * self.decision(x))

    def _params(self):
        extra = [np.array([self.scale])] if self.svm else []
        return [self.weights, np.array([self.bias]), *extra]


@dataclass(eq=False)
class FFNNModel(ScoringModel):
    kind: ClassVar[str] = "ffnn"
    W1: np.ndarray  # (h, V)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h,)
    b2: float
    activation: str = "relu"

    @property
    def feature_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def score(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        a = self.W1 @ x + self.b1
        a = np.maximum(a, 0.0) if self.activation == "relu" else np.tanh(a)
        return sigmoid(float(a @ self.w2) + self.b2)

    def _extra(self):
        return _ACT_TAG[self.activation], self.hidden

    def _params(self):
        return [self.W1, self.b1, self.w2, np.array([self.b2])]


@dataclass(eq=False)
class ConstantModel(ScoringModel):
    """Scores everything with one value; an adversarial baseline for tests and sweeps."""

    kind: ClassVar[str] = "const"
    value: float = 0.0
    dim: int = 0

    @property
    def feature_dim(self) -> int:
        return self.dim

    def score(self, x: np.ndarray) -> float:
        self._check(np.asarray(x))
        return self.value

    def _params(self):
        return [np.array([self.value])]


def model_size_bytes(model: ScoringModel) -> int:
    return len(model.to_bytes())


def load_model(blob: bytes) -> ScoringModel:
    if len(blob) < _HEADER.size:
        raise CorruptBlobError("corrupt model: truncated header")
    magic, version, kind_tag, mode_tag, act_tag, V, h, vocab_len = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptBlobError(f"corrupt model: bad magic {magic!r}")
    if version != VERSION:
        raise CorruptBlobError(f"corrupt model: unsupported version {version}")
    kinds = {v: k for k, v in _KIND_TAG.items()}
    modes = {v: k for k, v in _MODE_TAG.items()}
    acts = {v: k for k, v in _ACT_TAG.items()}
    if kind_tag not in kinds or mode_tag not in modes or act_tag not in acts:
        raise CorruptBlobError("corrupt model: unknown tag")
    kind = kinds[kind_tag]
    n_params = {
        "nb": 2 + 2 * V,
        "lr": V + 1,
        "svm": V + 2,
        "ffnn": h * V + 2 * h + 1,
        "const": 1,
    }[kind]
    end = _HEADER.size + 4 * n_params
    if len(blob) != end + vocab_len:
        raise CorruptBlobError("corrupt model: length does not match header")
    p = np.frombuffer(blob[_HEADER.size : end], dtype="<f4").astype(np.float64)
    try:
        chars = blob[end:].decode("utf-8")
    except UnicodeDecodeError:
        raise CorruptBlobError("corrupt model: vocabulary is not UTF-8") from None
    vocab = CharVocabulary(tuple(chars)) if vocab_len else None
    if vocab is not None and len(vocab) != V:
        raise CorruptBlobError("corrupt model: vocabulary size does not match feature_dim")
    common = dict(vocab=vocab, freq_mode=modes[mode_tag])
    if kind == "nb":
        return NaiveBayesModel(p[:2].copy(), p[2:].reshape(2, V).copy(), **common)
    if kind in ("lr", "svm"):
        scale = float(p[V + 1]) if kind == "svm" else 1.0
        return LinearModel(p[:V].copy(), float(p[V]), scale=scale, svm=kind == "svm", **common)
    if kind == "ffnn":
        W1 = p[: h * V].reshape(h, V).copy()
        b1 = p[h * V : h * V + h].copy()
        w2 = p[h * V + h : h * V + 2 * h].copy()
        return FFNNModel(W1, b1, w2, float(p[-1]), activation=acts[act_tag], **common)
    return ConstantModel(value=float(p[0]), dim=V, **common)


# ---------------------------------------------------------------------------
# trainers


def _check_labels(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if not np.all(np.isin(y, (-1, 1))):
        raise DomainError("labels must be +1 or -1")
    if not (np.any(y == 1) and np.any(y == -1)):
        raise DomainError("training data must contain both classes")
    return y.astype(np.float64)


def _standardizer(X: np.ndarray, on: bool) -> tuple[np.ndarray, np.ndarray]:
    if not on:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, size):
        yield order[i : i + size]


def _finite(name: str, epoch: int, *values) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise TrainingError(f"{name}: non-finite loss or parameters at epoch {epoch}")


def train_nb(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float = 1.0,
    *,
    vocab: CharVocabulary | None = None,
    quantize: bool = True,
) -> NaiveBayesModel:
    """Multinomial naive Bayes over absolute character counts.

    Feature probabilities are Laplace-smoothed,
    ``(N_ci + alpha) / (N_c + alpha * V)``; class priors are the empirical
    class frequencies.  ``quantize=False`` keeps the float64 parameters
    instead of rounding them to what serialization stores.
    """
    if alpha <= 0:
        raise DomainError("alpha must be > 0")
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    rows = []
    priors = []
    for cls in (-1.0, 1.0):
        Xc = X[y == cls]
        counts = Xc.sum(axis=0) + alpha
        rows.append(np.log(counts / counts.sum()))
        priors.append(math.log(len(Xc) / len(X)))
    q = _f32 if quantize else np.asarray
    return NaiveBayesModel(q(priors), q(np.vstack(rows)), alpha=alpha, vocab=vocab, freq_mode="absolute")


def logistic_loss_grad(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss with ``l2/2 * |w|^2`` and its gradient; y in {-1, +1}."""
    z = X @ w + b
    m = -y * z
    loss = float(np.mean(np.logaddexp(0.0, m))) + 0.5 * l2 * float(w @ w)
    g = -y * _sigmoid_arr(m)
    return loss, X.T @ g / len(y) + l2 * w, float(np.mean(g))


def train_lr(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainingConfig | None = None,
    *,
    vocab: CharVocabulary | None = None,
    freq_mode: FreqMode = "relative",
) -> LinearModel:
    """L2-regularized logistic regression by mini-batch gradient descent."""
    cfg = config or DEFAULT_CONFIGS["lr"]
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    mu, sd = _standardizer(X, cfg.standardize)
    Z = (X - mu) / sd
    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(X.shape[1])
    b = 0.0
    for epoch in range(cfg.epochs):
        for idx in _batches(len(y), cfg.batch_size, rng):
            _, gw, gb = logistic_loss_grad(w, b, Z[idx], y[idx], cfg.regularization)
            w -= cfg.learning_rate * gw
            b -= cfg.learning_rate * gb
        loss, _, _ = logistic_loss_grad(w, b, Z, y, cfg.regularization)
        _finite("lr", epoch, loss, w, b)
    return LinearModel(_f32(w / sd), float(_f32(b - (w / sd) @ mu)), vocab=vocab, freq_mode=freq_mode)


def svm_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float) -> float:
    """``0.5 |w|^2 + C * sum(hinge(y f(x)))``."""
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - y * (X @ w + b)).sum())


def _fit_scale(f: np.ndarray, y: np.ndarray) -> float:
    """Scale s > 0 minimizing the logistic loss of ``sigmoid(s * f)``."""
    res = minimize_scalar(
        lambda s: float(np.mean(np.logaddexp(0.0, -y * s * f))),
        bounds=(1e-3, 1e3),
        method="bounded",
    )
    return float(res.x)


def train_svm(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainingConfig | None = None,
    *,
    vocab: CharVocabulary | None = None,
    freq_mode: FreqMode = "relative",
) -> LinearModel:
    """Linear soft-margin SVM by mini-batch sub-gradient descent.

    The objective is divided by ``C * N`` so the step size does not depend
    on C; the quadratic term is applied as a proximal step, which stays
    stable when C is tiny.  Sub-gradient steps do not descend monotonically,
    so the iterate with the lowest objective at an epoch boundary is kept.
    """
    cfg = config or DEFAULT_CONFIGS["svm"]
    C = cfg.regularization
    if C <= 0:
        raise DomainError("C must be > 0")
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    mu, sd = _standardizer(X, cfg.standardize)
    Z = (X - mu) / sd
    lam = 1.0 / (C * len(y))
    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(X.shape[1])
    b = 0.0
    best = (svm_objective(w, b, Z, y, C), w.copy(), b)
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        for idx in _batches(len(y), cfg.batch_size, rng):
            Zb, yb = Z[idx], y[idx]
            viol = yb * (Zb @ w + b) < 1.0
            gw = -(yb[viol, None] * Zb[viol]).sum(axis=0) / len(idx)
            gb = -float(yb[viol].sum()) / len(idx)
            w = (w - lr * gw) / (1.0 + lr * lam)
            b -= lr * gb
        obj = svm_objective(w, b, Z, y, C)
        _finite("svm", epoch, obj, w, b)
        if obj < best[0]:
            best = (obj, w.copy(), b)
    _, w, b = best
    W = _f32(w / sd)
    B = float(_f32(b - (w / sd) @ mu))
    scale = float(_f32(_fit_scale(X @ W + B, y)))
    return LinearModel(W, B, scale=scale, svm=True, vocab=vocab, freq_mode=freq_mode)


@dataclass
class FFNNParams:
    """Float64 working parameters of the network during training."""

    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    @classmethod
    def unflat(cls, v: np.ndarray, h: int, V: int) -> "FFNNParams":
        return cls(
            v[: h * V].reshape(h, V).copy(),
            v[h * V : h * V + h].copy(),
            v[h * V + h : h * V + 2 * h].copy(),
            float(v[-1]),
        )


def init_ffnn(V: int, h: int, activation: str, rng: np.random.Generator) -> FFNNParams:
    gain = 2.0 if activation == "relu" else 1.0
    return FFNNParams(
        rng.normal(0.0, math.sqrt(gain / V), size=(h, V)),
        np.zeros(h),
        rng.normal(0.0, math.sqrt(1.0 / h), size=h),
        0.0,
    )


def ffnn_loss_grad(
    p: FFNNParams, X: np.ndarray, y01: np.ndarray, l2: float = 0.0, activation: str = "relu"
) -> tuple[float, FFNNParams]:
    """Mean binary cross-entropy (plus ``l2/2`` on the weight matrices) and its
    backpropagated gradient.  ``y01`` holds 1 for keys, 0 otherwise."""
    pre = X @ p.W1.T + p.b1
    if activation == "relu":
        a = np.maximum(pre, 0.0)
        da_dpre = (pre > 0).astype(np.float64)
    else:
        a = np.tanh(pre)
        da_dpre = 1.0 - a * a
    z = a @ p.w2 + p.b2
    # BCE with logits: log(1 + e^z) - y z
    loss = float(np.mean(np.logaddexp(0.0, z) - y01 * z))
    loss += 0.5 * l2 * (float(np.sum(p.W1 * p.W1)) + float(p.w2 @ p.w2))
    n = len(y01)
    dz = (_sigmoid_arr(z) - y01) / n
    gw2 = a.T @ dz + l2 * p.w2
    gb2 = float(dz.sum())
    dpre = np.outer(dz, p.w2) * da_dpre
    gW1 = dpre.T @ X + l2 * p.W1
    gb1 = dpre.sum(axis=0)
    return loss, FFNNParams(gW1, gb1, gw2, gb2)


def train_ffnn(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainingConfig | None = None,
    *,
    vocab: CharVocabulary | None = None,
    freq_mode: FreqMode = "relative",
) -> FFNNModel:
    """One hidden layer, sigmoid output, cross-entropy by backpropagation."""
    cfg = config or DEFAULT_CONFIGS["ffnn"]
    X = np.asarray(X, dtype=np.float64)
    y01 = (_check_labels(y) > 0).astype(np.float64)
    mu, sd = _standardizer(X, cfg.standardize)
    Z = (X - mu) / sd
    rng = np.random.default_rng(cfg.seed)
    p = init_ffnn(X.shape[1], cfg.hidden, cfg.activation, rng)
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        for idx in _batches(len(y01), cfg.batch_size, rng):
            _, g = ffnn_loss_grad(p, Z[idx], y01[idx], cfg.regularization, cfg.activation)
            p.W1 -= lr * g.W1
            p.b1 -= lr * g.b1
            p.w2 -= lr * g.w2
            p.b2 -= lr * g.b2
        loss, _ = ffnn_loss_grad(p, Z, y01, cfg.regularization, cfg.activation)
        _finite("ffnn", epoch, loss, p.W1, p.w2)
    W1 = p.W1 / sd
    return FFNNModel(
        _f32(W1),
        _f32(p.b1 - W1 @ mu),
        _f32(p.w2),
        float(_f32(p.b2)),
        activation=cfg.activation,
        vocab=vocab,
        freq_mode=freq_mode,
    )


def train(
    kind: str,
    X: np.ndarray,
    y: np.ndarray,
    config: TrainingConfig | None = None,
    *,
    vocab: CharVocabulary | None = None,
    freq_mode: FreqMode = "relative",
) -> ScoringModel:
    """Dispatch on ``kind``.  NB always consumes absolute counts, so callers
    should pass count features for it (see :func:`mode_for`)."""
    cfg = config or default_config(kind)
    if kind == "nb":
        return train_nb(X, y, cfg.regularization, vocab=vocab)
    if kind == "lr":
        return train_lr(X, y, cfg, vocab=vocab, freq_mode=freq_mode)
    if kind == "svm":
        return train_svm(X, y, cfg, vocab=vocab, freq_mode=freq_mode)
    if kind == "ffnn":
        return train_ffnn(X, y, cfg, vocab=vocab, freq_mode=freq_mode)
    raise DomainError(f"unknown classifier kind {kind!r}")


def mode_for(kind: str, freq_mode: FreqMode) -> FreqMode:
    return "absolute" if kind == "nb" else freq_mode


def fit_text(
    kind: str,
    canonicals,
    labels,
    vocab: CharVocabulary,
    config: TrainingConfig | None = None,
    freq_mode: FreqMode = "relative",
) -> ScoringModel:
    """Encode canonical URLs with the right frequency mode and train."""
    mode = mode_for(kind, freq_mode)
    X = encode_many(canonicals, vocab, mode)
    return train(kind, X, np.asarray(labels), config, vocab=vocab, freq_mode=mode)
