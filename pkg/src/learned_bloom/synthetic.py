"""Synthetic labeled URL corpora with a tunable character-level separation.

Each URL mixes lowercase letters with digits and punctuation at a per-URL
rate; malicious URLs draw that rate from a heavier distribution, favour
other TLDs, and carry longer paths and query strings more often.
``overlap`` is the fraction of malicious URLs drawn from the benign
generator instead, which makes a share of keys hard to learn and so
exercises the backup filters.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .encoding import UrlRecord, dedupe

_LETTERS = np.array(list("abcdefghijklmnopqrstuvwxyz"))
_ODD = np.array(list("0123456789-_=%&~"))
_TLDS = np.array([".com", ".org", ".net", ".edu", ".it", ".gov", ".ru", ".xyz", ".top", ".info", ".biz", ".tk"])
# TLD preference per class; the last six lean malicious
_TLD_P_BENIGN = np.array([30, 14, 12, 8, 8, 6, 4, 4, 3, 5, 3, 3], dtype=float)
_TLD_P_MALICIOUS = np.array([14, 5, 8, 2, 3, 1, 14, 13, 12, 11, 9, 8], dtype=float)
_SCHEMES = ["http://", "https://", "http://www.", "https://www.", "www.", ""]


def _token(rng: np.random.Generator, lo: int, hi: int, odd_rate: float) -> str:
    n = int(rng.integers(lo, hi + 1))
    odd = rng.random(n) < odd_rate
    chars = np.where(odd, rng.choice(_ODD, size=n), rng.choice(_LETTERS, size=n))
    return "".join(chars)


def _url(rng: np.random.Generator, odd_rate: float, tld_p: np.ndarray, n_segs: int, query: bool) -> str:
    host = _token(rng, 4, 14, odd_rate / 2) + str(rng.choice(_TLDS, p=tld_p / tld_p.sum()))
    segs = [_token(rng, 3, 12, odd_rate) for _ in range(n_segs)]
    url = str(rng.choice(_SCHEMES)) + host + ("/" + "/".join(segs) if segs else "")
    if query:
        url += "?" + _token(rng, 2, 6, 0.0) + "=" + _token(rng, 4, 20, odd_rate)
    return url


def benign_url(rng: np.random.Generator) -> str:
    return _url(rng, rng.beta(1.0, 14.0), _TLD_P_BENIGN, int(rng.integers(0, 4)), rng.random() < 0.15)


def malicious_url(rng: np.random.Generator) -> str:
    return _url(rng, rng.beta(2.5, 5.0), _TLD_P_MALICIOUS, int(rng.integers(1, 5)), rng.random() < 0.6)


def make_corpus(
    n_keys: int,
    n_nonkeys: int,
    seed: int = 0,
    overlap: float = 0.1,
) -> list[UrlRecord]:
    """Deduplicated records, keys first; sizes may drop slightly on collisions."""
    rng = np.random.default_rng(seed)
    recs = []
    for _ in range(n_keys):
        raw = benign_url(rng) if rng.random() < overlap else malicious_url(rng)
        recs.append(UrlRecord.from_raw(raw, 1))
    for _ in range(n_nonkeys):
        recs.append(UrlRecord.from_raw(benign_url(rng), -1))
    return dedupe(recs).records


def write_csv(records: list[UrlRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["url", "label"])
        for r in records:
            w.writerow([r.raw, 1 if r.label == 1 else 0])
