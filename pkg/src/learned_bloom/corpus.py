"""Corpus ingestion: ``url,label`` CSV in, standardized deduplicated records out,
plus a compressed columnar cache so later runs skip standardization."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encoding import CANONICAL_LENGTH, MARKER, UrlRecord, dedupe
from .errors import DataError

logger = logging.getLogger(__name__)

_LABELS = {"1": 1, "0": -1, "-1": -1, "+1": 1}
MAX_MALFORMED_FRACTION = 0.01


@dataclass
class IngestSummary:
    rows: int = 0
    records: int = 0
    keys: int = 0
    non_keys: int = 0
    duplicates_removed: int = 0
    label_conflicts: int = 0
    malformed_rows: int = 0
    errors: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        d = asdict(self)
        d.pop("errors")
        return [f"{k}: {v}" for k, v in d.items()]


def read_csv(path: str | Path) -> tuple[list[UrlRecord], IngestSummary]:
    """Parse, standardize and dedupe a ``url,label`` CSV.

    Labels may be 0/1 or -1/1.  Malformed rows are skipped and reported with
    their line numbers; more than 1% malformed aborts with :class:`DataError`.
    """
    summary = IngestSummary()
    records: list[UrlRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["url", "label"]:
            raise DataError(f"{path}: line 1: expected header 'url,label', got {header!r}")
        for row in reader:
            summary.rows += 1
            line = reader.line_num
            if len(row) != 2:
                summary.errors.append(f"line {line}: expected 2 fields, got {len(row)}")
                continue
            url, label = row[0].strip(), row[1].strip()
            if label not in _LABELS:
                summary.errors.append(f"line {line}: invalid label {label!r}")
                continue
            if not url:
                summary.errors.append(f"line {line}: empty url")
                continue
            records.append(UrlRecord.from_raw(url, _LABELS[label]))
    summary.malformed_rows = len(summary.errors)
    if summary.rows and summary.malformed_rows / summary.rows > MAX_MALFORMED_FRACTION:
        detail = "; ".join(summary.errors[:10])
        raise DataError(f"{path}: {summary.malformed_rows} of {summary.rows} rows malformed (> 1%): {detail}")
    for err in summary.errors:
        logger.warning("%s: %s", path, err)
    result = dedupe(records)
    summary.records = len(result.records)
    summary.keys = sum(r.label == 1 for r in result.records)
    summary.non_keys = summary.records - summary.keys
    summary.duplicates_removed = result.duplicates_removed
    summary.label_conflicts = result.label_conflicts
    return result.records, summary


def save_corpus(records: list[UrlRecord], path: str | Path, summary: IngestSummary | None = None) -> None:
    # numpy drops trailing NULs from fixed-width strings; canonical forms are
    # re-padded on load, which is exact because their content has no NULs
    np.savez_compressed(
        path,
        raw=np.array([r.raw for r in records], dtype=str),
        canonical=np.array([r.canonical.rstrip(MARKER) for r in records], dtype=str),
        label=np.array([r.label for r in records], dtype=np.int8),
        summary=np.array(json.dumps(asdict(summary) if summary else {})),
    )


def load_corpus(path: str | Path) -> list[UrlRecord]:
    """Load a cached corpus (``.npz``) or ingest a CSV on the fly."""
    path = Path(path)
    if path.suffix != ".npz":
        return read_csv(path)[0]
    try:
        with np.load(path, allow_pickle=False) as z:
            raw, canon, label = z["raw"], z["canonical"], z["label"]
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{path}: not a corpus cache ({exc})") from None
    return [UrlRecord(str(r), str(c).ljust(CANONICAL_LENGTH, MARKER), int(y)) for r, c, y in zip(raw, canon, label)]
