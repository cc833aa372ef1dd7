"""Cross-validated accuracy, F1 and size of every classifier kind.

Reads a ``url,label`` CSV or ``.npz`` corpus cache, or generates a
synthetic corpus when none is given.  FFNN is screened once per hidden
width; ``--alpha`` and ``--C`` values become an inner-CV grid.
"""

import argparse
import json
from pathlib import Path

from learned_bloom.classifiers import default_config
from learned_bloom.corpus import load_corpus
from learned_bloom.harness import DEFAULT_HIDDEN, screen_classifiers
from learned_bloom.synthetic import make_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", type=Path)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--hidden", type=int, action="append")
    ap.add_argument("--alpha", type=float, action="append", help="NB smoothing candidates")
    ap.add_argument("--C", type=float, action="append", help="SVM C candidates")
    ap.add_argument("--json", type=Path, help="also write the rows here")
    args = ap.parse_args()

    records = load_corpus(args.corpus) if args.corpus else make_corpus(2000, 8000, seed=args.seed)
    grid = {
        "nb": [default_config("nb", regularization=a) for a in (args.alpha or [1.0])],
        "lr": [default_config("lr")],
        "svm": [default_config("svm", regularization=c) for c in (args.C or [10.0])],
        "ffnn": [default_config("ffnn", hidden=h) for h in (args.hidden or [*DEFAULT_HIDDEN, 64])],
    }
    rows = [m.row() for m in screen_classifiers(records, grid, k=args.folds, seed=args.seed)]
    print("classifier\taccuracy\tf1\tspace_kb")
    for r in rows:
        print(
            f"{r['classifier']}\t{r['accuracy']:.3f} ± {r['accuracy_std']:.3f}"
            f"\t{r['f1']:.3f} ± {r['f1_std']:.3f}\t{r['space_kb']:.2f}"
        )
    if args.json:
        args.json.write_text(json.dumps(rows, indent=2), encoding="utf-8")


if __name__ == "__main__":
    main()
