"""Generate a synthetic URL corpus and run the full filter sweep on it.

Writes ``corpus.csv``, ``sweep.csv`` and ``sweep.json`` to ``--out`` and
prints, per epsilon, the classic size next to the smallest LBF and SLBF.
"""

import argparse
import logging
from pathlib import Path

from learned_bloom.classifiers import KINDS
from learned_bloom.harness import (
    DEFAULT_EPSILONS,
    DEFAULT_HIDDEN,
    DEFAULT_RATIOS,
    run_filter_sweep,
    write_csv,
    write_json,
)
from learned_bloom.synthetic import make_corpus
from learned_bloom.synthetic import write_csv as write_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/synthetic"))
    ap.add_argument("--keys", type=int, default=5000)
    ap.add_argument("--non-keys", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--classifier", choices=KINDS, action="append")
    ap.add_argument("--time-queries", type=int, default=2000)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    args.out.mkdir(parents=True, exist_ok=True)
    records = make_corpus(args.keys, args.non_keys, seed=args.seed)
    write_corpus(records, args.out / "corpus.csv")
    result = run_filter_sweep(
        records,
        kinds=args.classifier or KINDS,
        epsilons=DEFAULT_EPSILONS,
        ratios=DEFAULT_RATIOS,
        hidden=DEFAULT_HIDDEN,
        seed=args.seed,
        time_queries=args.time_queries,
    )
    write_csv(result.points, args.out / "sweep.csv")
    write_json(result, args.out / "sweep.json")

    print("epsilon\tclassic_B\tbest_lbf\tbest_slbf")
    for eps in DEFAULT_EPSILONS:
        cells = [str(result.baseline(eps).total_bytes)]
        for variant in ("lbf", "slbf"):
            pts = result.feasible(variant, eps)
            best = min(pts, key=lambda p: p.total_bytes) if pts else None
            cells.append(f"{best.total_bytes} ({best.classifier}, ratio {best.ratio})" if best else "-")
        print(f"{eps}\t" + "\t".join(cells))


if __name__ == "__main__":
    main()
