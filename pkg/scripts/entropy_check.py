"""Entropy vectors of random distributions: polymatroid axioms and the support bound."""

import argparse

from wcoj.bounds import check_polymatroid
from wcoj.workbench import empirical_entropy, entropy_vector, random_distribution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()
    worst_gap = 0.0
    failures = 0
    for seed in range(args.count):
        n = 3 + seed % 2
        joint = random_distribution(n, seed, sparsity=0.3 if seed % 3 == 0 else 0.0)
        ok, why = check_polymatroid(entropy_vector(joint, n), n, tol=args.tol)
        if not ok:
            failures += 1
            print(f"seed {seed}: {why}")
        for mask in range(1, 1 << n):
            H, log_supp = empirical_entropy(joint, [i for i in range(n) if mask >> i & 1])
            worst_gap = max(worst_gap, H - log_supp)
    print(f"{args.count} distributions, {failures} polymatroid failures, "
          f"max H - log2|supp| = {worst_gap:.3e}")


if __name__ == "__main__":
    main()
