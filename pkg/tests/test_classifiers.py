import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from learned_bloom.classifiers import (
    _HEADER,
    KINDS,
    ConstantModel,
    FFNNModel,
    FFNNParams,
    LinearModel,
    NaiveBayesModel,
    TrainingConfig,
    default_config,
    ffnn_loss_grad,
    fit_text,
    init_ffnn,
    load_model,
    logistic_loss_grad,
    model_size_bytes,
    sigmoid,
    svm_objective,
    train,
    train_ffnn,
    train_lr,
    train_nb,
    train_svm,
)
from learned_bloom.encoding import CharVocabulary, encode_many
from learned_bloom.errors import CorruptBlobError, DomainError, TrainingError

TOY_X = np.array([[3, 1, 0], [2, 0, 1], [0, 2, 2], [1, 3, 0]], dtype=float)
TOY_Y = np.array([1, 1, -1, -1])


def bayes_oracle(X, y, alpha, x):
    """Exact multinomial NB posterior P(key | x) by Bayes' rule in rationals."""
    a = Fraction(alpha)
    V = X.shape[1]
    joint = {}
    for c in (1, -1):
        rows = [[Fraction(int(v)) for v in r] for r, lab in zip(X, y) if lab == c]
        Nc = [sum(col) for col in zip(*rows)]
        total = sum(Nc)
        lik = Fraction(len(rows), len(X))
        for i in range(V):
            lik *= ((Nc[i] + a) / (total + a * V)) ** int(x[i])
        joint[c] = lik
    return float(joint[1] / (joint[1] + joint[-1]))


def separable_2d(n=200, seed=0, gap=0.5):
    r = np.random.default_rng(seed)
    X = r.uniform(-1, 1, size=(n, 2))
    margin = X[:, 0] + X[:, 1]
    keep = np.abs(margin) > gap
    X = X[keep]
    return X, np.where(X[:, 0] + X[:, 1] > 0, 1, -1)


def xor_2d(n=400, seed=0):
    r = np.random.default_rng(seed)
    X = r.uniform(-1, 1, size=(n, 2))
    X = X[np.abs(X).min(axis=1) > 0.1]
    return X, np.where(X[:, 0] * X[:, 1] > 0, 1, -1)


# --- naive Bayes -------------------------------------------------------------


@pytest.mark.parametrize("alpha", [1.0, 0.5, 2.0])
def test_nb_matches_bayes_rule(alpha):
    model = train_nb(TOY_X, TOY_Y, alpha, quantize=False)
    probes = np.vstack([TOY_X, [[0, 0, 0], [1, 1, 1], [5, 0, 2]]])
    for x in probes:
        assert model.score(x) == pytest.approx(bayes_oracle(TOY_X, TOY_Y, alpha, x), abs=1e-9)


def test_nb_quantized_close_to_oracle():
    model = train_nb(TOY_X, TOY_Y, 1.0)
    for x in TOY_X:
        assert model.score(x) == pytest.approx(bayes_oracle(TOY_X, TOY_Y, 1.0, x), abs=1e-5)


def test_nb_symmetric_classes_neutral_input():
    X = np.array([[2, 1], [1, 2]], dtype=float)
    model = train_nb(X, np.array([1, -1]), 1.0, quantize=False)
    assert model.score(np.array([1.0, 1.0])) == pytest.approx(0.5)


def test_nb_large_alpha_tends_to_prior():
    X = np.array([[5, 0], [4, 1], [0, 6]], dtype=float)
    y = np.array([1, 1, -1])
    model = train_nb(X, y, 1e9, quantize=False)
    np.testing.assert_allclose(np.exp(model.feature_log_prob), 0.5, atol=1e-6)
    assert model.score(np.array([0.0, 9.0])) == pytest.approx(2 / 3, abs=1e-6)


# --- logistic regression -----------------------------------------------------


def test_lr_separable_accuracy():
    X, y = separable_2d()
    model = train_lr(X, y, TrainingConfig(learning_rate=0.5, epochs=100, batch_size=16, regularization=0.0))
    pred = np.where(model.score_many(X) >= 0.5, 1, -1)
    assert np.mean(pred == y) == 1.0


def test_lr_zero_weights_is_sigmoid_bias():
    m = LinearModel(np.zeros(3), -0.7)
    assert m.score(np.array([4.0, 5.0, 6.0])) == pytest.approx(sigmoid(-0.7))


def test_lr_regularization_shrinks_weights():
    X, y = separable_2d(gap=0.05, seed=3)
    norms = []
    for lam in (0.01, 0.02, 0.04):
        cfg = TrainingConfig(learning_rate=0.5, epochs=300, batch_size=len(y), regularization=lam, standardize=False)
        norms.append(np.linalg.norm(train_lr(X, y, cfg).weights))
    assert norms[0] >= norms[1] >= norms[2]


def test_logistic_gradient_finite_difference(rng):
    X = rng.normal(size=(20, 4))
    y = rng.choice([-1.0, 1.0], size=20)
    w, b = rng.normal(size=4), 0.3
    _, gw, gb = logistic_loss_grad(w, b, X, y, 0.1)
    h = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        num = (logistic_loss_grad(w + e, b, X, y, 0.1)[0] - logistic_loss_grad(w - e, b, X, y, 0.1)[0]) / (2 * h)
        assert gw[i] == pytest.approx(num, rel=1e-5, abs=1e-8)
    num_b = (logistic_loss_grad(w, b + h, X, y, 0.1)[0] - logistic_loss_grad(w, b - h, X, y, 0.1)[0]) / (2 * h)
    assert gb == pytest.approx(num_b, rel=1e-5, abs=1e-8)


# --- SVM ---------------------------------------------------------------------


def test_svm_separable_reaches_zero_hinge():
    X, y = separable_2d(gap=0.3)
    cfg = TrainingConfig(learning_rate=0.05, epochs=500, batch_size=16, regularization=100.0, standardize=False)
    m = train_svm(X, y, cfg)
    margins = y * np.array([m.decision(x) for x in X])
    # float32 storage of w and b costs a little margin
    assert margins.min() >= 1.0 - 1e-4
    assert svm_objective(m.weights, m.bias, X, y, 100.0) == pytest.approx(0.5 * m.weights @ m.weights, abs=0.1)
    assert np.mean(np.where(m.score_many(X) >= 0.5, 1, -1) == y) == 1.0


def test_svm_score_monotone_in_decision():
    X, y = separable_2d(gap=0.3)
    m = train_svm(X, y, default_config("svm", epochs=20))
    f = np.array([m.decision(x) for x in X])
    s = m.score_many(X)
    order = np.argsort(f)
    assert np.all(np.diff(s[order]) >= 0)
    assert m.scale > 0


def test_svm_tiny_c_drives_weights_to_zero():
    X, y = separable_2d()
    m = train_svm(X, y, TrainingConfig(learning_rate=0.05, epochs=30, regularization=1e-7, standardize=False))
    assert np.linalg.norm(m.weights) < 1e-3


def test_svm_objective_hand_value():
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    y = np.array([1.0, -1.0])
    # y*f = (1, 0) → hinge (0, 1); 0.5*|w|^2 = 0.5
    assert svm_objective(np.array([1.0, 0.0]), 0.0, X, y, 2.0) == 0.5 + 2.0 * 1


# --- FFNN --------------------------------------------------------------------


def _max_rel_err(p, X, y, l2, act, h=1e-6):
    _, g = ffnn_loss_grad(p, X, y, l2, act)
    hidden, V = p.W1.shape
    theta = p.flat()
    ana = g.flat()
    num = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        lp = ffnn_loss_grad(FFNNParams.unflat(theta + e, hidden, V), X, y, l2, act)[0]
        lm = ffnn_loss_grad(FFNNParams.unflat(theta - e, hidden, V), X, y, l2, act)[0]
        num[i] = (lp - lm) / (2 * h)
    return float(np.max(np.abs(ana - num) / np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-8)))


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_ffnn_gradient_check(activation):
    r = np.random.default_rng(99)
    for _ in range(10):
        p = init_ffnn(6, 5, activation, r)
        p.b1 = r.normal(size=5)
        p.b2 = float(r.normal())
        X = r.normal(size=(12, 6))
        y = r.integers(0, 2, size=12).astype(float)
        assert _max_rel_err(p, X, y, 0.05, activation) < 1e-4


def test_ffnn_xor_capacity():
    X, y = xor_2d()
    cfg = TrainingConfig(learning_rate=0.5, epochs=300, batch_size=16, regularization=0.0, hidden=8, activation="tanh")
    m = train_ffnn(X, y, cfg)
    assert np.mean(np.where(m.score_many(X) >= 0.5, 1, -1) == y) > 0.95


def test_ffnn_zero_output_weights_half():
    m = FFNNModel(np.ones((1, 3)), np.zeros(1), np.zeros(1), 0.0)
    assert m.hidden == 1
    assert all(m.score(x) == 0.5 for x in np.random.default_rng(0).normal(size=(10, 3)))


# --- shared behaviour --------------------------------------------------------


def test_sigmoid_range_and_stability():
    z = np.random.default_rng(0).normal(scale=50, size=100_000)
    s = np.array([sigmoid(v) for v in z])
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))
    assert sigmoid(-1000.0) == 0.0 and sigmoid(1000.0) == 1.0 and sigmoid(0.0) == 0.5


@pytest.mark.parametrize("kind", KINDS)
def test_scores_in_unit_interval(kind, small_corpus, small_vocab):
    canon = [r.canonical for r in small_corpus[::10]]
    labels = [r.label for r in small_corpus[::10]]
    m = fit_text(kind, canon, labels, small_vocab, default_config(kind, epochs=3))
    s = m.score_many(np.random.default_rng(0).uniform(0, 5, size=(2000, len(small_vocab))))
    assert np.all((s >= 0) & (s <= 1))


@pytest.mark.parametrize("kind", KINDS)
def test_seeded_training_is_bit_identical(kind, small_corpus, small_vocab):
    canon = [r.canonical for r in small_corpus[::5]]
    labels = [r.label for r in small_corpus[::5]]
    cfg = default_config(kind, epochs=3, seed=5)
    a = fit_text(kind, canon, labels, small_vocab, cfg)
    b = fit_text(kind, canon, labels, small_vocab, cfg)
    assert a.to_bytes() == b.to_bytes()


@pytest.mark.parametrize("kind", KINDS)
def test_serialization_round_trip(kind, small_corpus, small_vocab):
    canon = [r.canonical for r in small_corpus[::5]]
    labels = [r.label for r in small_corpus[::5]]
    m = fit_text(kind, canon, labels, small_vocab, default_config(kind, epochs=3))
    blob = m.to_bytes()
    loaded = load_model(blob)
    assert type(loaded) is type(m) and loaded.kind == m.kind
    assert loaded.to_bytes() == blob
    assert loaded.vocab == m.vocab and loaded.freq_mode == m.freq_mode
    np.testing.assert_array_equal(loaded.score_texts(canon[:300]), m.score_texts(canon[:300]))


def test_nb_trains_on_absolute_counts(small_corpus, small_vocab):
    recs = small_corpus[::30]
    m = fit_text("nb", [r.canonical for r in recs], [r.label for r in recs], small_vocab)
    assert m.freq_mode == "absolute"


def test_size_accounting():
    vocab = CharVocabulary(tuple(chr(ord("!") + i) for i in range(79)))
    lr = LinearModel(np.zeros(79), 0.0, vocab=vocab)
    assert model_size_bytes(lr) == _HEADER.size + 4 * (79 + 1) + 79
    svm = LinearModel(np.zeros(79), 0.0, svm=True, vocab=vocab)
    assert model_size_bytes(svm) == _HEADER.size + 4 * (79 + 2) + 79
    ff = FFNNModel(np.zeros((64, 79)), np.zeros(64), np.zeros(64), 0.0, vocab=vocab)
    assert 79 * 64 + 64 + 64 + 1 == 5185
    assert model_size_bytes(ff) == _HEADER.size + 4 * 5185 + 79
    nb = NaiveBayesModel(np.zeros(2), np.zeros((2, 79)), vocab=vocab)
    assert model_size_bytes(nb) == _HEADER.size + 4 * (2 + 2 * 79) + 79
    assert model_size_bytes(lr) < model_size_bytes(ff)


def test_constant_model_round_trip():
    m = ConstantModel(value=0.25, dim=4)
    loaded = load_model(m.to_bytes())
    assert isinstance(loaded, ConstantModel) and loaded.score(np.zeros(4)) == 0.25


def test_corrupt_model_blobs():
    blob = LinearModel(np.ones(2), 0.5, vocab=CharVocabulary(("a", "b"))).to_bytes()
    bad = [blob[:5], b"ZZZZ" + blob[4:], blob[:-1], blob + b"x", blob[:4] + b"\x07" + blob[5:]]
    for b in bad:
        with pytest.raises(CorruptBlobError, match="^corrupt model"):
            load_model(b)


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        LinearModel(np.zeros(3), 0.0).score(np.zeros(4))
    with pytest.raises(DomainError):
        LinearModel(np.zeros(3), 0.0).score_many(np.zeros((2, 4)))


def test_invalid_inputs():
    with pytest.raises(DomainError):
        train("rnn", TOY_X, TOY_Y)
    with pytest.raises(DomainError):
        train_lr(TOY_X, np.array([1, 1, 1, 1]))
    with pytest.raises(DomainError):
        train_nb(TOY_X, TOY_Y, 0.0)
    with pytest.raises(DomainError):
        TrainingConfig(activation="sigmoid")


def test_divergence_raises_training_error():
    X, y = separable_2d()
    with np.errstate(all="ignore"), pytest.raises(TrainingError, match="non-finite"):
        train_ffnn(X * 1e150, y, TrainingConfig(learning_rate=1e150, epochs=3, standardize=False))


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(-5, 5))
def test_linear_model_score_is_sigmoid_of_decision(w, b):
    m = LinearModel(np.array(w), b)
    x = np.array([0.2, 0.3, 0.5])
    assert m.score(x) == pytest.approx(1 / (1 + math.exp(-(x @ np.array(w) + b))), abs=1e-12)


def test_encode_then_score_consistency(small_corpus, small_vocab):
    recs = small_corpus[::75]
    canon = [r.canonical for r in recs]
    m = fit_text("lr", canon, [r.label for r in recs], small_vocab, default_config("lr", epochs=2))
    np.testing.assert_array_equal(m.score_many(encode_many(canon, small_vocab)), m.score_texts(canon))
