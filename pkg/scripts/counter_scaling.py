"""Probe and emit counters of every engine on grid triangles of growing side."""

import argparse
import time

from wcoj.executor import annotate, backtrack_join, bruteforce_join, panda_interpret, triangle_heavy_light
from wcoj.query import ConstraintSet, parse_query
from wcoj.relation import Counters
from wcoj.workbench import TRIANGLE_QUERY, gen_grid_triangle, half_delta, triangle_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sides", type=int, nargs="+", default=[25, 50, 100])
    args = ap.parse_args()
    q = parse_query(TRIANGLE_QUERY)
    print(f"{'m':>5} {'engine':>12} {'output':>9} {'probes':>10} {'emitted':>10} {'seconds':>8}")
    prev = {}
    for m in args.sides:
        db = gen_grid_triangle(m)
        dc = ConstraintSet.cardinalities(q, {k: len(v) for k, v in db.items()})
        delta = half_delta(q, dc)
        engines = {
            "backtrack": lambda c: backtrack_join(q, dc, db, counters=c),
            "heavy-light": lambda c: triangle_heavy_light(db["R"], db["S"], db["T"], c),
            "panda": lambda c: panda_interpret(q, dc, db, annotate(q, dc, triangle_sequence(), delta), delta, c),
            "bruteforce": lambda c: bruteforce_join(q, db, c),
        }
        for name, run in engines.items():
            c = Counters()
            t = time.perf_counter()
            ex = run(c)
            dt = time.perf_counter() - t
            ratio = f"  x{c.probes / prev[name]:.2f}" if name in prev and prev[name] else ""
            prev[name] = c.probes
            print(f"{m:>5} {name:>12} {len(ex):>9} {c.probes:>10} {c.emitted:>10} {dt:>8.2f}{ratio}")


if __name__ == "__main__":
    main()
