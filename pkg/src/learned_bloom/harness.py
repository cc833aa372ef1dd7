"""Classifier screening and filter benchmarking.

Screening runs an outer stratified k-fold cross validation; when a kind has
more than one candidate configuration, an inner k-fold on each outer
training split picks the one with the best mean F1.

Filter benchmarking follows a holdout protocol: every key plus a uniform
half of the non-keys trains the classifier and calibrates ``tau``; the
other half of the non-keys is only ever used to measure false-positive
rate and reject time.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .bloom import BloomFilter, bf_build, bf_query
from .classifiers import KINDS, TrainingConfig, default_config, fit_text, model_size_bytes
from .encoding import FreqMode, UrlRecord, build_vocabulary
from .errors import BudgetError, DomainError
from .learned import LearnedFilter, binomial_se, filter_size_bytes, lbf_build, slbf_build, tau_from_scores

logger = logging.getLogger(__name__)

DEFAULT_EPSILONS = (0.001, 0.005, 0.01, 0.02)
DEFAULT_RATIOS = (0.1, 0.25, 0.5, 0.75, 0.9, 1.0, 1.5, 2.0, 5.0, 10.0, 20.0)
DEFAULT_HIDDEN = (10, 15, 20, 25, 30)
CSV_COLUMNS = (
    "variant",
    "classifier",
    "epsilon",
    "epsilon_tau",
    "total_bytes",
    "model_bytes",
    "filter_bytes",
    "measured_fpr",
    "mean_reject_s",
    "skipped_reason",
)


# ---------------------------------------------------------------------------
# splits and metrics


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    folds: tuple[np.ndarray, ...] = ()
    keys: np.ndarray | None = None
    train_negatives: np.ndarray | None = None
    holdout_negatives: np.ndarray | None = None

    def fold_train(self, i: int) -> np.ndarray:
        return np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))


def _labels_of(records_or_labels) -> np.ndarray:
    seq = list(records_or_labels)
    if seq and isinstance(seq[0], UrlRecord):
        return np.array([r.label for r in seq])
    return np.asarray(seq)


def make_folds(records_or_labels, k: int = 5, seed: int = 0) -> SplitPlan:
    """Stratified ``k``-way partition of record indices.

    Each class is shuffled independently and dealt round-robin, so per-class
    fold sizes differ by at most one.
    """
    y = _labels_of(records_or_labels)
    if k < 2:
        raise DomainError("k must be >= 2")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    for cls in (1, -1):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise DomainError(f"class {cls:+d} has {len(idx)} records, fewer than k={k}")
        idx = rng.permutation(idx)
        for j in range(k):
            buckets[j].extend(idx[j::k].tolist())
    return SplitPlan(seed=seed, folds=tuple(np.sort(np.array(b, dtype=np.intp)) for b in buckets))


def holdout_split(records_or_labels, seed: int = 0) -> SplitPlan:
    """All keys, plus non-keys split uniformly in half (train / holdout)."""
    y = _labels_of(records_or_labels)
    neg = np.flatnonzero(y == -1)
    keys = np.flatnonzero(y == 1)
    if len(neg) < 2 or len(keys) < 1:
        raise DomainError("holdout protocol needs keys and at least two non-keys")
    perm = np.random.default_rng(seed).permutation(neg)
    half = len(perm) // 2
    return SplitPlan(
        seed=seed,
        keys=keys,
        train_negatives=np.sort(perm[:half]),
        holdout_negatives=np.sort(perm[half:]),
    )


def accuracy_f1(predictions: Sequence[int], truth: Sequence[int]) -> tuple[float, float]:
    """Accuracy and F1 with +1 as the positive class (F1 is 0 when undefined)."""
    p = np.asarray(predictions)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise DomainError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise DomainError("empty prediction list")
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t != 1)))
    fn = int(np.sum((p != 1) & (t == 1)))
    acc = float(np.mean(p == t))
    denom = 2 * tp + fp + fn
    return acc, (2 * tp / denom if denom else 0.0)


def select_tau_for_f1(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Observed score that maximizes F1 of ``score >= tau``; ties go to the smallest."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.size == 0:
        raise DomainError("no scores to threshold")
    order = np.argsort(-s, kind="stable")
    s_desc = s[order]
    pos = (y[order] == 1).astype(np.int64)
    tp = np.cumsum(pos)
    fp = np.cumsum(1 - pos)
    n_pos = int(pos.sum())
    # last index of each run of equal scores = everything >= that score
    last = np.flatnonzero(np.r_[s_desc[1:] != s_desc[:-1], True])
    tp, fp = tp[last], fp[last]
    denom = 2 * tp + fp + (n_pos - tp)
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    thresholds = s_desc[last]
    best = f1.max()
    # thresholds are descending, so the last maximizer is the smallest tau
    return float(thresholds[np.flatnonzero(f1 == best)[-1]])


# ---------------------------------------------------------------------------
# classifier screening


@dataclass
class ClassifierMetrics:
    classifier: str
    accuracy: list[float] = field(default_factory=list)
    f1: list[float] = field(default_factory=list)
    size_bytes: list[int] = field(default_factory=list)
    chosen: list[dict] = field(default_factory=list)

    @property
    def accuracy_mean(self) -> float:
        return float(np.mean(self.accuracy))

    @property
    def accuracy_std(self) -> float:
        return float(np.std(self.accuracy))

    @property
    def f1_mean(self) -> float:
        return float(np.mean(self.f1))

    @property
    def f1_std(self) -> float:
        return float(np.std(self.f1))

    @property
    def size_mean(self) -> float:
        return float(np.mean(self.size_bytes))

    def row(self) -> dict:
        """One line shaped like a screening table row (size in KiB)."""
        return {
            "classifier": self.classifier,
            "accuracy": round(self.accuracy_mean, 4),
            "accuracy_std": round(self.accuracy_std, 4),
            "f1": round(self.f1_mean, 4),
            "f1_std": round(self.f1_std, 4),
            "space_kb": round(self.size_mean / 1024, 3),
        }


def classifier_label(kind: str, config: TrainingConfig | None = None) -> str:
    return f"ffnn-{config.hidden}" if kind == "ffnn" and config is not None else kind


def _fit_eval(kind, cfg, train_recs, test_recs, vocab, freq_mode):
    model = fit_text(kind, [r.canonical for r in train_recs], [r.label for r in train_recs], vocab, cfg, freq_mode)
    tau = select_tau_for_f1(model.score_texts([r.canonical for r in train_recs]), [r.label for r in train_recs])
    test_scores = model.score_texts([r.canonical for r in test_recs])
    pred = np.where(test_scores >= tau, 1, -1)
    acc, f1 = accuracy_f1(pred, [r.label for r in test_recs])
    return model, acc, f1


def screen_classifiers(
    records: Sequence[UrlRecord],
    grid: dict[str, Sequence[TrainingConfig]],
    k: int = 5,
    inner_k: int = 5,
    seed: int = 0,
    freq_mode: FreqMode = "relative",
) -> list[ClassifierMetrics]:
    """Nested cross validation of every classifier kind in ``grid``.

    For FFNN each hidden width is screened as its own classifier (the width
    is a size-defining hyperparameter, not something to tune away).  The
    vocabulary is rebuilt from each outer training split.
    """
    records = list(records)
    outer = make_folds(records, k, seed)
    groups: dict[str, tuple[str, list[TrainingConfig]]] = {}
    for kind, configs in grid.items():
        for cfg in configs:
            label = classifier_label(kind, cfg)
            groups.setdefault(label, (kind, []))[1].append(cfg)
    results = {label: ClassifierMetrics(label) for label in groups}
    for i, test_idx in enumerate(outer.folds):
        train_idx = outer.fold_train(i)
        train = [records[j] for j in train_idx]
        test = [records[j] for j in test_idx]
        vocab = build_vocabulary(train)
        inner = make_folds(train, inner_k, seed + 1 + i) if any(len(c) > 1 for _, c in groups.values()) else None
        for label, (kind, configs) in groups.items():
            best = configs[0]
            if len(configs) > 1:
                mean_f1 = []
                for cfg in configs:
                    f1s = []
                    for j, itest in enumerate(inner.folds):
                        itrain = inner.fold_train(j)
                        _, _, f1 = _fit_eval(
                            kind, cfg, [train[t] for t in itrain], [train[t] for t in itest], vocab, freq_mode
                        )
                        f1s.append(f1)
                    mean_f1.append(float(np.mean(f1s)))
                best = configs[int(np.argmax(mean_f1))]
            model, acc, f1 = _fit_eval(kind, best, train, test, vocab, freq_mode)
            m = results[label]
            m.accuracy.append(acc)
            m.f1.append(f1)
            m.size_bytes.append(model_size_bytes(model))
            m.chosen.append(asdict(best))
        logger.info("screening: outer fold %d/%d done", i + 1, k)
    return list(results.values())


# ---------------------------------------------------------------------------
# timing


@dataclass(frozen=True)
class TimingResult:
    min_mean_s: float  # min over repetitions of total / queries
    avg_mean_s: float  # plain average over repetitions
    n_queries: int
    repetitions: int


def _query_fn(target, negatives: Sequence) -> tuple[Callable[[object], bool], list]:
    if isinstance(target, BloomFilter):
        bf = target

        def query(q):
            return bf_query(bf, q)

        return query, [q.encode("utf-8") if isinstance(q, str) else q for q in negatives]
    if isinstance(target, LearnedFilter):
        return target.query, list(negatives)
    return target, list(negatives)


def compare_reject_times(
    targets: dict[str, Callable[[object], bool] | LearnedFilter | BloomFilter],
    negatives: Sequence,
    repetitions: int = 3,
) -> dict[str, TimingResult]:
    """Seconds per query for several filters over the same ``negatives``.

    Repetitions are interleaved across targets, so slow drift in machine
    speed (frequency scaling, warm-up) affects every target alike.
    """
    if len(negatives) == 0:
        raise DomainError("need at least one query to time")
    if len(negatives) < 1000:
        logger.warning("timing over only %d queries; results will be noisy", len(negatives))
    prepared = {name: _query_fn(t, negatives) for name, t in targets.items()}
    per_rep: dict[str, list[float]] = {name: [] for name in targets}
    for _ in range(max(1, repetitions)):
        for name, (query, qs) in prepared.items():
            t0 = time.perf_counter()
            for q in qs:
                query(q)
            per_rep[name].append((time.perf_counter() - t0) / len(qs))
    return {name: TimingResult(min(v), float(np.mean(v)), len(negatives), len(v)) for name, v in per_rep.items()}


def measure_reject_time(
    query: Callable[[object], bool] | LearnedFilter | BloomFilter,
    negatives: Sequence,
    repetitions: int = 3,
) -> TimingResult:
    """Wall-clock seconds per query over ``negatives``.

    Accepts a filter or any one-argument query callable.  Classic filters
    are queried with UTF-8 bytes of the given strings.
    """
    return compare_reject_times({"": query}, negatives, repetitions)[""]


# ---------------------------------------------------------------------------
# per-stage counting


@dataclass(frozen=True)
class StageRates:
    """Per-stage acceptance rates of a learned filter on a negative set."""

    n: int
    eps_I: float  # fraction passing the initial filter (1 without one)
    eps_tau: float  # of those, fraction the classifier accepts
    eps_F: float  # of those the classifier rejects, fraction the backup accepts
    fpr: float  # measured through LearnedFilter.query

    def composed(self) -> float:
        return self.eps_I * (self.eps_tau + (1.0 - self.eps_tau) * self.eps_F)


def stage_rates(f: LearnedFilter, negatives: Sequence[str], scores: Sequence[float] | None = None) -> StageRates:
    """Count each stage separately, without going through ``query``.

    ``scores`` may carry the model's precomputed scores for ``negatives``.
    """
    keys = [q.encode("utf-8") for q in negatives]
    if f.initial is not None:
        passed = np.flatnonzero(f.initial.query_many(keys))
    else:
        passed = np.arange(len(keys))
    if scores is None:
        sc = np.array([f.model.score_text(negatives[i]) for i in passed])
    else:
        sc = np.asarray(scores, dtype=np.float64)[passed]
    hi = sc >= f.tau
    low = passed[~hi]
    backup_acc = int(f.backup.query_many([keys[i] for i in low]).sum())
    n = len(negatives)
    return StageRates(
        n=n,
        eps_I=len(passed) / n,
        eps_tau=float(hi.mean()) if len(passed) else 0.0,
        eps_F=backup_acc / len(low) if len(low) else 0.0,
        fpr=float(f.query_many(negatives).mean()),
    )


# ---------------------------------------------------------------------------
# filter sweep


@dataclass
class SweepPoint:
    variant: str
    classifier: str
    epsilon: float
    ratio: float | None = None
    epsilon_tau: float | None = None  # target classifier rate, ratio * epsilon
    achieved_epsilon_tau: float | None = None  # on calibration negatives
    tau: float | None = None
    fn_count: int | None = None
    n_keys: int = 0
    total_bytes: int | None = None
    model_bytes: int | None = None
    filter_bytes: int | None = None
    initial_bytes: int | None = None
    backup_bytes: int | None = None
    measured_fpr: float | None = None
    n_holdout: int = 0
    stages: dict | None = None
    mean_reject_s: float | None = None
    avg_reject_s: float | None = None
    n_time_queries: int = 0
    flagged: bool = False
    skipped_reason: str = ""

    @property
    def skipped(self) -> bool:
        return bool(self.skipped_reason)

    def csv_row(self) -> list:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return v

        return [fmt(getattr(self, c)) for c in CSV_COLUMNS]


@dataclass
class SweepResult:
    points: list[SweepPoint]
    metadata: dict

    def baseline(self, epsilon: float) -> SweepPoint:
        return next(p for p in self.points if p.variant == "classic" and p.epsilon == epsilon)

    def feasible(self, variant: str | None = None, epsilon: float | None = None) -> list[SweepPoint]:
        return [
            p
            for p in self.points
            if not p.skipped
            and p.variant != "classic"
            and (variant is None or p.variant == variant)
            and (epsilon is None or p.epsilon == epsilon)
        ]


def _flag(p: SweepPoint) -> None:
    se = binomial_se(p.epsilon, p.n_holdout)
    p.flagged = abs(p.measured_fpr - p.epsilon) > 3 * se


def _timing(p: SweepPoint, target, negatives, time_queries, repetitions) -> None:
    if time_queries <= 0:
        return
    t = measure_reject_time(target, negatives[:time_queries], repetitions)
    p.mean_reject_s, p.avg_reject_s, p.n_time_queries = t.min_mean_s, t.avg_mean_s, t.n_queries


def expand_kinds(
    kinds: Iterable[str], hidden: Sequence[int], configs: dict | None = None
) -> list[tuple[str, TrainingConfig]]:
    """(kind, config) per classifier; FFNN expands to one entry per hidden width."""
    configs = configs or {}
    out = []
    for kind in kinds:
        if kind not in KINDS:
            raise DomainError(f"unknown classifier kind {kind!r}")
        base = configs.get(kind) or default_config(kind)
        if kind == "ffnn":
            out.extend((kind, replace(base, hidden=h)) for h in hidden)
        else:
            out.append((kind, base))
    return out


def run_filter_sweep(
    records: Sequence[UrlRecord],
    kinds: Sequence[str] = KINDS,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    variants: Sequence[str] = ("lbf", "slbf"),
    hidden: Sequence[int] = DEFAULT_HIDDEN,
    configs: dict[str, TrainingConfig] | None = None,
    seed: int = 0,
    freq_mode: FreqMode = "relative",
    time_queries: int = 2000,
    repetitions: int = 3,
) -> SweepResult:
    """Build every (classifier, variant, epsilon, ratio) filter and measure it.

    The classifier target rate is ``ratio * epsilon`` for both variants.
    Infeasible points are kept as rows with ``skipped_reason`` set.  Set
    ``time_queries`` to 0 to skip timing (the only non-deterministic column).
    """
    records = list(records)
    plan = holdout_split(records, seed)
    keys = [records[i].canonical for i in plan.keys]
    train_negs = [records[i].canonical for i in plan.train_negatives]
    holdout = [records[i].canonical for i in plan.holdout_negatives]
    train_recs = [records[i] for i in np.concatenate([plan.keys, plan.train_negatives])]
    vocab = build_vocabulary(train_recs)
    points: list[SweepPoint] = []

    for eps in epsilons:
        bf = bf_build([k.encode("utf-8") for k in keys], eps, seed=seed)
        size = filter_size_bytes(bf)
        p = SweepPoint(
            "classic", "", eps, n_keys=len(keys), total_bytes=size.total_bytes, model_bytes=0,
            filter_bytes=size.filter_bytes, backup_bytes=size.backup_bytes, n_holdout=len(holdout),
        )  # fmt: skip
        p.measured_fpr = float(bf.query_many([h.encode("utf-8") for h in holdout]).mean())
        _flag(p)
        _timing(p, bf, holdout, time_queries, repetitions)
        points.append(p)

    # no learned points requested: skip training altogether
    learned = expand_kinds(kinds, hidden, configs) if ratios and variants else []
    for kind, cfg in learned:
        label = classifier_label(kind, cfg)
        cfg_seeded = _with_seed(cfg, seed)
        model = fit_text(
            kind, [r.canonical for r in train_recs], [r.label for r in train_recs], vocab, cfg_seeded, freq_mode
        )
        neg_scores = model.score_texts(train_negs)
        key_scores = model.score_texts(keys)
        holdout_scores = model.score_texts(holdout)
        logger.info("sweep: trained %s (%d bytes)", label, model_size_bytes(model))
        for variant in variants:
            for eps in epsilons:
                for ratio in ratios:
                    points.append(
                        _sweep_point(variant, label, model, keys, key_scores, train_negs, neg_scores, holdout,
                                     holdout_scores, eps, ratio, seed, time_queries, repetitions)
                    )  # fmt: skip

    meta = {
        "seed": seed,
        "freq_mode": freq_mode,
        "n_keys": len(keys),
        "n_train_negatives": len(train_negs),
        "n_holdout_negatives": len(holdout),
        "vocabulary_size": len(vocab),
        "epsilons": list(epsilons),
        "ratios": list(ratios),
        "variants": list(variants),
        "classifiers": [classifier_label(k, c) for k, c in expand_kinds(kinds, hidden, configs)],
        "training_configs": {
            classifier_label(k, c): asdict(_with_seed(c, seed)) for k, c in expand_kinds(kinds, hidden, configs)
        },
        "rnn": "not implemented",
        "timing": {
            "queries": time_queries,
            "repetitions": repetitions,
            "estimator": "min over repetitions; plain average also reported",
        },
        "fpr_flag_rule": "measured FPR further than 3 binomial standard errors from epsilon",
    }
    return SweepResult(points, meta)


def _with_seed(cfg: TrainingConfig, seed: int) -> TrainingConfig:
    return replace(cfg, seed=seed)


def _sweep_point(
    variant, label, model, keys, key_scores, train_negs, neg_scores, holdout, holdout_scores, eps, ratio, seed,
    time_queries, repetitions,
):  # fmt: skip
    target = ratio * eps
    p = SweepPoint(variant, label, eps, ratio=ratio, epsilon_tau=target, n_keys=len(keys), n_holdout=len(holdout))
    if variant == "lbf" and target >= eps:
        p.skipped_reason = "epsilon_tau must be < epsilon"
        return p
    if target >= 1.0:
        p.skipped_reason = "target epsilon_tau must be < 1"
        return p
    cal = tau_from_scores(neg_scores, target)
    p.tau, p.achieved_epsilon_tau = cal.tau, cal.epsilon_tau
    build = lbf_build if variant == "lbf" else slbf_build
    try:
        f = build(keys, model, cal.tau, eps, train_negs, seed, key_scores=key_scores, negative_scores=neg_scores)
    except BudgetError as exc:
        p.skipped_reason = str(exc)
        return p
    size = filter_size_bytes(f)
    p.fn_count = f.budget.fn_count
    p.total_bytes, p.model_bytes, p.filter_bytes = size.total_bytes, size.model_bytes, size.filter_bytes
    p.initial_bytes, p.backup_bytes = size.initial_bytes, size.backup_bytes
    rates = stage_rates(f, holdout, holdout_scores)
    p.measured_fpr = rates.fpr
    p.stages = {**asdict(rates), "budget": asdict(f.budget)}
    _flag(p)
    _timing(p, f, holdout, time_queries, repetitions)
    return p


# ---------------------------------------------------------------------------
# reports


def write_csv(points: Iterable[SweepPoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for p in points:
            w.writerow(p.csv_row())


def write_json(result: SweepResult, path: str | Path) -> None:
    doc = {"metadata": result.metadata, "points": [asdict(p) for p in result.points]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False), encoding="utf-8")
