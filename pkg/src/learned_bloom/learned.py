"""Learned (LBF) and sandwiched learned (SLBF) Bloom filters.

An LBF accepts ``x`` when the classifier scores it at or above ``tau``;
otherwise a backup Bloom filter built over the keys the classifier misses
decides.  An SLBF puts a Bloom filter over every key in front of that.

False-positive budgets (``epsilon`` total, ``epsilon_tau`` classifier,
``epsilon_F`` backup, ``epsilon_I`` initial) satisfy

    LBF:   epsilon = epsilon_tau + (1 - epsilon_tau) * epsilon_F
    SLBF:  epsilon = epsilon_I * (epsilon_tau + (1 - epsilon_tau) * epsilon_F)
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .bloom import BloomFilter, Layer, bf_build, bf_query
from .classifiers import ScoringModel, load_model
from .errors import BudgetError, CorruptBlobError, DomainError

Variant = Literal["lbf", "slbf"]

MAGIC = b"LBC1"
VERSION = 1
# magic, version, variant, tau, epsilon, eps_tau, eps_F, eps_I, fn, n, model len, initial len, backup len
_MANIFEST = struct.Struct("<4sBBdddddQQIII")
MANIFEST_BYTES = _MANIFEST.size
_VARIANT_TAG = {"lbf": 1, "slbf": 2}
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class FprBudget:
    epsilon: float
    epsilon_tau: float
    epsilon_F: float
    epsilon_I: float = 1.0
    fn_count: int = 0
    n_keys: int = 0

    def reconstructed_epsilon(self) -> float:
        return self.epsilon_I * (self.epsilon_tau + (1.0 - self.epsilon_tau) * self.epsilon_F)


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")


def lbf_budget(epsilon: float, epsilon_tau: float, fn_count: int = 0, n_keys: int = 0) -> FprBudget:
    """Backup-filter rate ``(epsilon - epsilon_tau) / (1 - epsilon_tau)``."""
    _check_epsilon(epsilon)
    if epsilon_tau < 0:
        raise DomainError(f"epsilon_tau must be >= 0, got {epsilon_tau}")
    if epsilon_tau >= epsilon:
        raise BudgetError("epsilon_tau must be < epsilon")
    eps_f = (epsilon - epsilon_tau) / (1.0 - epsilon_tau)
    return FprBudget(epsilon, epsilon_tau, eps_f, 1.0, fn_count, n_keys)


def slbf_budget(epsilon: float, epsilon_tau: float, fn_count: int, n_keys: int) -> FprBudget:
    """Split ``epsilon`` between the initial filter, classifier and backup.

    Feasible iff ``epsilon*(1 - FN/n) <= epsilon_tau <= 1 - FN/n`` and
    ``epsilon_tau > 0``.  Rates that reach 1 mean the matching filter is
    left out of the structure.
    """
    _check_epsilon(epsilon)
    if n_keys < 1 or not 0 <= fn_count <= n_keys:
        raise DomainError(f"need n_keys >= 1 and 0 <= fn_count <= n_keys, got {fn_count}, {n_keys}")
    if epsilon_tau <= 0:
        raise BudgetError("epsilon_tau must be > 0")
    kept = 1.0 - fn_count / n_keys
    if epsilon_tau < epsilon * kept:
        raise BudgetError(f"epsilon_tau must be >= epsilon*(1 - FN/n) = {epsilon * kept:.6g}")
    if epsilon_tau > kept:
        raise BudgetError(f"epsilon_tau must be <= 1 - FN/n = {kept:.6g}")
    eps_i = min(1.0, epsilon / epsilon_tau * kept)
    eps_f = 1.0 if epsilon_tau >= 1.0 else (epsilon / eps_i - epsilon_tau) / (1.0 - epsilon_tau)
    eps_f = min(1.0, max(0.0, eps_f))
    return FprBudget(epsilon, epsilon_tau, eps_f, eps_i, fn_count, n_keys)


@dataclass(frozen=True)
class CalibrationReport:
    tau: float
    epsilon_tau: float  # achieved on the calibration negatives
    target: float
    quantile: float  # fraction of calibration negatives scored below tau
    fn_count: int | None = None


def tau_from_scores(neg_scores: np.ndarray, target: float) -> CalibrationReport:
    """Smallest observed negative score ``s`` with ``mean(scores >= s) <= target``.

    When no observed score qualifies, ``tau`` is the next float above the
    maximum score, which no calibration negative reaches.
    """
    s = np.sort(np.asarray(neg_scores, dtype=np.float64))
    if s.size == 0:
        raise DomainError("calibration needs at least one negative")
    if not 0.0 <= target < 1.0:
        raise DomainError(f"target epsilon_tau must lie in [0, 1), got {target}")
    n = s.size
    uniq = np.unique(s)
    frac = (n - np.searchsorted(s, uniq, side="left")) / n
    ok = np.flatnonzero(frac <= target)
    if ok.size:
        tau = float(uniq[ok[0]])
        achieved = float(frac[ok[0]])
    else:
        tau = float(np.nextafter(s[-1], np.inf))
        achieved = 0.0
    return CalibrationReport(tau=tau, epsilon_tau=achieved, target=target, quantile=1.0 - achieved)


def calibrate_tau(model: ScoringModel, negatives: np.ndarray, target_eps_tau: float) -> CalibrationReport:
    """Pick ``tau`` from the model's scores on calibration negatives (feature rows)."""
    X = np.asarray(negatives, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DomainError("calibration needs a non-empty (n, V) feature matrix")
    return tau_from_scores(model.score_many(X), target_eps_tau)


@dataclass
class ProbeCounter:
    """Per-session tally of which stages queries reached."""

    initial: int = 0
    classifier: int = 0
    backup: int = 0


def derive_seed(seed: int, tag: int) -> int:
    return ((seed & _MASK64) * 0x9E3779B97F4A7C15 + tag * 0xBF58476D1CE4E5B9) & _MASK64


@dataclass(frozen=True)
class SizeBreakdown:
    model_bytes: int
    initial_bytes: int
    backup_bytes: int
    manifest_bytes: int

    @property
    def filter_bytes(self) -> int:
        return self.initial_bytes + self.backup_bytes

    @property
    def total_bytes(self) -> int:
        return self.model_bytes + self.filter_bytes + self.manifest_bytes


@dataclass(frozen=True)
class LearnedFilter:
    variant: Variant
    model: ScoringModel
    tau: float
    backup: BloomFilter
    budget: FprBudget
    initial: BloomFilter | None = None

    def query(self, canonical: str, probes: ProbeCounter | None = None) -> bool:
        key = canonical.encode("utf-8")
        if self.initial is not None:
            if probes is not None:
                probes.initial += 1
            if not bf_query(self.initial, key):
                return False
        if probes is not None:
            probes.classifier += 1
        if self.model.score_text(canonical) >= self.tau:
            return True
        if probes is not None:
            probes.backup += 1
        return bf_query(self.backup, key)

    __contains__ = query

    def query_many(self, canonicals: Sequence[str]) -> np.ndarray:
        return np.fromiter((self.query(c) for c in canonicals), dtype=bool, count=len(canonicals))

    def _blobs(self) -> tuple[bytes, bytes, bytes]:
        init = self.initial.to_bytes() if self.initial is not None else b""
        return self.model.to_bytes(), init, self.backup.to_bytes()

    def to_bytes(self) -> bytes:
        model, init, backup = self._blobs()
        b = self.budget
        head = _MANIFEST.pack(
            MAGIC, VERSION, _VARIANT_TAG[self.variant], self.tau,
            b.epsilon, b.epsilon_tau, b.epsilon_F, b.epsilon_I, b.fn_count, b.n_keys,
            len(model), len(init), len(backup),
        )  # fmt: skip
        return head + model + init + backup

    @classmethod
    def from_bytes(cls, blob: bytes) -> "LearnedFilter":
        if len(blob) < MANIFEST_BYTES:
            raise CorruptBlobError("corrupt filter: truncated manifest")
        magic, version, vtag, tau, eps, eps_tau, eps_f, eps_i, fn, n, lm, li, lb = _MANIFEST.unpack_from(blob)
        if magic != MAGIC:
            raise CorruptBlobError(f"corrupt filter: bad magic {magic!r}")
        if version != VERSION:
            raise CorruptBlobError(f"corrupt filter: unsupported version {version}")
        variants = {v: k for k, v in _VARIANT_TAG.items()}
        if vtag not in variants:
            raise CorruptBlobError(f"corrupt filter: unknown variant tag {vtag}")
        if len(blob) != MANIFEST_BYTES + lm + li + lb:
            raise CorruptBlobError("corrupt filter: section lengths do not match blob size")
        o = MANIFEST_BYTES
        model = load_model(blob[o : o + lm])
        initial = BloomFilter.from_bytes(blob[o + lm : o + lm + li]) if li else None
        backup = BloomFilter.from_bytes(blob[o + lm + li :])
        budget = FprBudget(eps, eps_tau, eps_f, eps_i, fn, n)
        return cls(variants[vtag], model, tau, backup, budget, initial)


def _prepare(keys, model, tau, negatives, key_scores, negative_scores):
    """Deduplicated keys, the ones scored below ``tau``, and measured epsilon_tau.

    Precomputed scores must come from ``model.score_text``, the same scalar
    path ``query`` runs, or keys near ``tau`` could be misfiled.
    """
    if len(negatives) == 0:
        raise DomainError("calibration negatives must be non-empty")
    if key_scores is None:
        key_scores = model.score_texts(keys)
    if negative_scores is None:
        negative_scores = model.score_texts(negatives)
    if len(key_scores) != len(keys) or len(negative_scores) != len(negatives):
        raise DomainError("precomputed scores do not align with their inputs")
    scored = dict(zip(keys, key_scores))
    if not scored:
        raise DomainError("cannot build a learned filter over an empty key set")
    fn_keys = [k for k, s in scored.items() if s < tau]
    eps_tau = float(np.mean(np.asarray(negative_scores) >= tau))
    return list(scored), fn_keys, eps_tau


def _backup_for(fn_keys: list[str], eps_f: float, seed: int) -> BloomFilter:
    if not fn_keys:
        return BloomFilter.sentinel(accept=False, seed=seed)
    if eps_f >= 1.0:
        return BloomFilter.sentinel(accept=True, seed=seed)
    return bf_build([k.encode("utf-8") for k in fn_keys], eps_f, seed=seed, layer=Layer.BACKUP)


def lbf_build(
    keys: Sequence[str],
    model: ScoringModel,
    tau: float,
    epsilon: float,
    calibration_negatives: Sequence[str],
    seed: int = 0,
    *,
    key_scores: Sequence[float] | None = None,
    negative_scores: Sequence[float] | None = None,
) -> LearnedFilter:
    """Classifier at ``tau`` plus a backup filter over the keys it scores below ``tau``.

    ``epsilon_tau`` is measured on ``calibration_negatives`` at ``tau``.
    """
    keys, fn_keys, eps_tau = _prepare(keys, model, tau, calibration_negatives, key_scores, negative_scores)
    budget = lbf_budget(epsilon, eps_tau, len(fn_keys), len(keys))
    backup = _backup_for(fn_keys, budget.epsilon_F, derive_seed(seed, 2))
    return LearnedFilter("lbf", model, tau, backup, budget)


def slbf_build(
    keys: Sequence[str],
    model: ScoringModel,
    tau: float,
    epsilon: float,
    calibration_negatives: Sequence[str],
    seed: int = 0,
    *,
    key_scores: Sequence[float] | None = None,
    negative_scores: Sequence[float] | None = None,
) -> LearnedFilter:
    """Initial filter over all keys at ``epsilon_I``, then an LBF stage."""
    keys, fn_keys, eps_tau = _prepare(keys, model, tau, calibration_negatives, key_scores, negative_scores)
    budget = slbf_budget(epsilon, eps_tau, len(fn_keys), len(keys))
    initial = None
    if budget.epsilon_I < 1.0:
        initial = bf_build([k.encode("utf-8") for k in keys], budget.epsilon_I, derive_seed(seed, 1), Layer.INITIAL)
    backup = _backup_for(fn_keys, budget.epsilon_F, derive_seed(seed, 2))
    return LearnedFilter("slbf", model, tau, backup, budget, initial)


def lbf_query(f: LearnedFilter, canonical: str, probes: ProbeCounter | None = None) -> bool:
    return f.query(canonical, probes)


def slbf_query(f: LearnedFilter, canonical: str, probes: ProbeCounter | None = None) -> bool:
    return f.query(canonical, probes)


def filter_size_bytes(f: LearnedFilter | BloomFilter) -> SizeBreakdown:
    """Byte sizes per component; ``total_bytes`` equals the serialized length."""
    if isinstance(f, BloomFilter):
        return SizeBreakdown(0, 0, len(f.to_bytes()), 0)
    model, init, backup = f._blobs()
    return SizeBreakdown(len(model), len(init), len(backup), MANIFEST_BYTES)


def load_filter(blob: bytes) -> LearnedFilter | BloomFilter:
    """Load either a classic ``LBF1`` blob or a learned ``LBC1`` container."""
    if blob[:4] == MAGIC:
        return LearnedFilter.from_bytes(blob)
    return BloomFilter.from_bytes(blob)


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)
