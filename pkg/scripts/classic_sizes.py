"""Classic Bloom filter sizes and reject times for 43,744 keys.

Sizes follow from the sizing formula alone; times are measured on random
keys and are machine dependent.
"""

import argparse

import numpy as np

from learned_bloom.bloom import bf_build, bf_optimal_k, bf_size_for
from learned_bloom.harness import DEFAULT_EPSILONS, measure_reject_time

N_KEYS = 43744


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--queries", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    keys = [rng.bytes(16) for _ in range(N_KEYS)]
    negatives = [rng.bytes(17) for _ in range(args.queries)]
    print("epsilon\tm_bits\tk\tsize_kb\treject_us")
    for eps in DEFAULT_EPSILONS:
        m = bf_size_for(N_KEYS, eps)
        bf = bf_build(keys, eps, seed=args.seed)
        t = measure_reject_time(bf, negatives, repetitions=3)
        print(f"{eps}\t{m}\t{bf_optimal_k(m, N_KEYS)}\t{bf.payload_bytes / 1024:.1f}\t{t.min_mean_s * 1e6:.2f}")


if __name__ == "__main__":
    main()
