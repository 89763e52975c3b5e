"""Bound, proof sequence and evaluation for the five-atom query on random data."""

import argparse

from wcoj.bounds import check_shannon_flow, polymatroid_bound, shannon_flow_dual
from wcoj.executor import annotate, bruteforce_join, panda_interpret
from wcoj.proof import derive, format_sequence, validate
from wcoj.query import parse_query
from wcoj.workbench import FIVE_ATOM_QUERY, five_atom_constraints, five_atom_sequence, gen_random, half_delta


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--size", type=int, default=60)
    ap.add_argument("--domain", type=int, default=8)
    args = ap.parse_args()
    q = parse_query(FIVE_ATOM_QUERY)
    N = args.size
    dc = five_atom_constraints(q, N, N, N, N, N)
    bound = polymatroid_bound(dc, q.head)
    print(f"polymatroid bound: log2 {float(bound.value):.4f}, {bound.tuples} tuples")
    cert = shannon_flow_dual(dc, q.head)
    print("optimal dual value equals it:", cert.value == bound.value)
    half = half_delta(q, dc)
    print("all-1/2 weights form a Shannon flow:", check_shannon_flow(half, q.n))
    steps = five_atom_sequence()
    print("hand-written sequence valid:", validate(steps, half, q.n).ok)
    derived = derive(cert)
    print(f"derived sequence ({len(derived)} steps):")
    print(format_sequence(derived, q.head), end="")
    hand = annotate(q, dc, steps, half)
    auto = annotate(q, dc, derived, cert.delta)
    print(f"{'seed':>4} {'output':>7} {'hand':>5} {'derived':>8} {'max intermediate':>17}")
    for seed in range(args.seeds):
        db = gen_random(q, {a.relation: N for a in q.atoms}, seed, domain=args.domain)
        want = bruteforce_join(q, db).relation
        a = panda_interpret(q, dc, db, hand, half)
        b = panda_interpret(q, dc, db, auto, cert.delta)
        print(f"{seed:>4} {len(want):>7} {str(a.relation == want):>5} {str(b.relation == want):>8} "
              f"{a.stats['max_intermediate']:>17}")


if __name__ == "__main__":
    main()
