"""``learned-bloom`` command line.

Exit codes: 0 ok, 1 usage, 2 data error, 3 budget constraint violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bloom import Layer, bf_build
from .classifiers import KINDS, default_config, fit_text, load_model
from .corpus import load_corpus, read_csv, save_corpus
from .encoding import build_vocabulary, standardize
from .errors import BudgetError, CorruptBlobError, DataError, DomainError, TrainingError
from .harness import (
    DEFAULT_EPSILONS,
    DEFAULT_HIDDEN,
    DEFAULT_RATIOS,
    classifier_label,
    holdout_split,
    run_filter_sweep,
    screen_classifiers,
    write_csv,
    write_json,
)
from .learned import filter_size_bytes, lbf_build, load_filter, slbf_build, tau_from_scores

DEFAULT_SEED = 20220101

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="single source of randomness")
    p.add_argument("--freq", choices=("relative", "absolute"), default="relative")


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=int, action="append", help="FFNN hidden width (repeatable)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--regularization", type=float, help="NB alpha, LR/FFNN L2 strength, SVM C")


def _config(kind: str, args, hidden: int | None = None):
    over = {
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
        "regularization": args.regularization,
        "hidden": hidden,
    }
    over = {k: v for k, v in over.items() if v is not None}
    return default_config(kind, seed=args.seed, **over)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="learned-bloom", description="Classic, learned and sandwiched learned Bloom filters.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="standardize and dedupe a url,label CSV into a corpus cache")
    p.add_argument("csv", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output .npz corpus cache")

    p = sub.add_parser("train", help="cross-validate a classifier and write its model blob")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--classifier", choices=KINDS, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--folds", type=int, default=5, help="outer CV folds; 0 skips CV")
    _add_common(p)
    _add_training(p)

    p = sub.add_parser("build", help="build a classic, LBF or SLBF filter")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--variant", choices=("classic", "lbf", "slbf"), required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--epsilon-tau", type=float, help="target classifier false-positive rate")
    p.add_argument("--model", type=Path, help="model blob (lbf/slbf)")
    p.add_argument("--out", type=Path, required=True, help="output filter file")
    _add_common(p)

    p = sub.add_parser("query", help="query a filter; prints accept/reject per key")
    p.add_argument("filter", type=Path)
    p.add_argument("keys", nargs="*")
    p.add_argument("--keys-file", type=Path, help="one URL per line")

    p = sub.add_parser("sweep", help="epsilon x ratio sweep with classic baselines")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--epsilon", type=float, action="append")
    p.add_argument("--ratio", type=float, action="append", help="epsilon_tau / epsilon (repeatable)")
    p.add_argument("--classifier", choices=KINDS, action="append")
    p.add_argument("--variant", choices=("classic", "lbf", "slbf"), action="append", help="classic rows always run")
    p.add_argument("--baseline-only", action="store_true", help="empty ratio grid: classic rows only")
    p.add_argument("--time-queries", type=int, default=2000, help="0 disables timing")
    p.add_argument("--repetitions", type=int, default=3)
    _add_common(p)
    _add_training(p)
    return ap


def cmd_ingest(args) -> int:
    records, summary = read_csv(args.csv)
    for err in summary.errors:
        print(f"warning: {args.csv}: {err}", file=sys.stderr)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(records, args.out, summary)
    for line in summary.lines():
        print(line)
    return EXIT_OK


def cmd_train(args) -> int:
    records = load_corpus(args.corpus)
    hidden = (args.hidden or [None])[0]
    cfg = _config(args.classifier, args, hidden)
    label = classifier_label(args.classifier, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        metrics = None
        if args.folds:
            m = screen_classifiers(
                records, {args.classifier: [cfg]}, k=args.folds, seed=args.seed, freq_mode=args.freq
            )[0]
            metrics = {**m.row(), "folds": {"accuracy": m.accuracy, "f1": m.f1, "size_bytes": m.size_bytes}}
        plan = holdout_split(records, args.seed)
        train = [records[i] for i in np.concatenate([plan.keys, plan.train_negatives])]
        vocab = build_vocabulary(train)
        model = fit_text(args.classifier, [r.canonical for r in train], [r.label for r in train], vocab, cfg, args.freq)
    except TrainingError as exc:
        raise TrainingError(f"training {label}: {exc}") from exc
    blob = model.to_bytes()
    (args.out / f"{label}.lbm").write_bytes(blob)
    doc = {"classifier": label, "config": asdict(cfg), "model_bytes": len(blob), "cv": metrics}
    (args.out / f"{label}.metrics.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
    if metrics:
        print("classifier\taccuracy\tf1\tspace_kb")
        print(
            f"{label}\t{metrics['accuracy']:.3f} ± {metrics['accuracy_std']:.3f}"
            f"\t{metrics['f1']:.3f} ± {metrics['f1_std']:.3f}\t{metrics['space_kb']:.2f}"
        )
    print(f"model: {args.out / f'{label}.lbm'} ({len(blob)} bytes)")
    return EXIT_OK


def cmd_build(args) -> int:
    records = load_corpus(args.corpus)
    plan = holdout_split(records, args.seed)
    keys = [records[i].canonical for i in plan.keys]
    if args.variant == "classic":
        f = bf_build([k.encode("utf-8") for k in keys], args.epsilon, seed=args.seed, layer=Layer.CLASSIC)
        blob = f.to_bytes()
        print(f"payload_bytes: {f.payload_bytes}")
        print(f"payload_kb: {f.payload_bytes / 1024:.1f}")
        print(f"m_bits: {f.m_bits}\nk: {f.k}\ntotal_bytes: {len(blob)}")
    else:
        if args.model is None or args.epsilon_tau is None:
            raise DomainError(f"--model and --epsilon-tau are required for {args.variant}")
        if args.variant == "lbf" and args.epsilon_tau >= args.epsilon:
            raise BudgetError("epsilon_tau must be < epsilon")
        model = load_model(args.model.read_bytes())
        negs = [records[i].canonical for i in plan.train_negatives]
        neg_scores = model.score_texts(negs)
        cal = tau_from_scores(neg_scores, args.epsilon_tau)
        build = lbf_build if args.variant == "lbf" else slbf_build
        f = build(keys, model, cal.tau, args.epsilon, negs, args.seed, negative_scores=neg_scores)
        blob = f.to_bytes()
        size = filter_size_bytes(f)
        b = f.budget
        print(f"tau: {f.tau!r}\nepsilon_tau: {b.epsilon_tau}\nepsilon_F: {b.epsilon_F}\nepsilon_I: {b.epsilon_I}")
        print(f"fn_count: {b.fn_count}/{b.n_keys}")
        print(f"model_bytes: {size.model_bytes}\ninitial_bytes: {size.initial_bytes}")
        print(
            f"backup_bytes: {size.backup_bytes}\nmanifest_bytes: {size.manifest_bytes}\ntotal_bytes: {size.total_bytes}"
        )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_bytes(blob)
    return EXIT_OK


def _iter_keys(args):
    yield from args.keys
    if args.keys_file:
        with open(args.keys_file, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    yield line


def cmd_query(args) -> int:
    f = load_filter(args.filter.read_bytes())
    if hasattr(f, "query"):
        verdict = f.query
    else:

        def verdict(c):
            return c.encode("utf-8") in f

    out = sys.stdout
    for key in _iter_keys(args):
        out.write("accept\n" if verdict(standardize(key)) else "reject\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    records = load_corpus(args.corpus)
    kinds = args.classifier or list(KINDS)
    configs = {k: _config(k, args) for k in kinds}
    variants = [v for v in (args.variant or ("lbf", "slbf")) if v != "classic"]
    baseline_only = args.baseline_only or not variants
    result = run_filter_sweep(
        records,
        kinds=kinds,
        epsilons=args.epsilon or DEFAULT_EPSILONS,
        ratios=() if baseline_only else (args.ratio or DEFAULT_RATIOS),
        variants=variants,
        hidden=args.hidden or DEFAULT_HIDDEN,
        configs=configs,
        seed=args.seed,
        freq_mode=args.freq,
        time_queries=args.time_queries,
        repetitions=args.repetitions,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(result.points, args.out / "sweep.csv")
    write_json(result, args.out / "sweep.json")
    skipped = sum(p.skipped for p in result.points)
    flagged = sum(p.flagged for p in result.points)
    print(f"points: {len(result.points)} (skipped {skipped}, flagged {flagged})")
    print(f"reports: {args.out / 'sweep.csv'}, {args.out / 'sweep.json'}")
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "build": cmd_build, "query": cmd_query, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except CorruptBlobError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, DomainError, TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
