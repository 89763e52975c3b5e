"""AGM, modular, polymatroid and dual values (log2) on a few standard queries."""

from wcoj.bounds import modular_bound, polymatroid_bound, query_agm_bound, shannon_flow_dual
from wcoj.query import parse_constraints, parse_query
from wcoj.workbench import FIVE_ATOM_QUERY, TRIANGLE_QUERY

CASES = [
    ("triangle, cards 2^20", TRIANGLE_QUERY, "card R 1048576\ncard S 1048576\ncard T 1048576\n"),
    ("triangle, one FD", TRIANGLE_QUERY, "card R 1024\ncard S 1024\ncard T 1024\ndeg S B -> B,C 1\n"),
    ("four-cycle", "Q(A,B,C,D) :- R(A,B), S(B,C), T(C,D), U(A,D).",
     "card R 256\ncard S 256\ncard T 256\ncard U 256\n"),
    ("five atom, stats 2^10", FIVE_ATOM_QUERY,
     "card R 1024\ncard S 1024\ncard T 1024\ndeg W A,C -> A,C,D 1024\ndeg V B,D -> A,B,D 1024\n"),
    ("cyclic degree chain", "Q(A,B,C,D) :- R(A), S(A,B), T(B,C), W(C,A,D).",
     "card R 16\ndeg S A -> A,B 4\ndeg T B -> B,C 4\ndeg W C -> A,C,D 8\n"),
]


def main():
    print(f"{'case':<24} {'agm':>6} {'modular':>8} {'polymatroid':>12} {'dual':>6}  delta")
    for label, qtext, dctext in CASES:
        q = parse_query(qtext)
        dc = parse_constraints(dctext, q)
        sizes = {c.guard: c.N for c in dc if c.is_cardinality and set(q.atom(c.guard).variables) == c.Y}
        try:
            agm = str(query_agm_bound(q, sizes).value)
        except ValueError:
            agm = "-"
        mod = modular_bound(dc, q.head)
        poly = polymatroid_bound(dc, q.head).value
        cert = shannon_flow_dual(dc, q.head)
        delta = ", ".join(
            f"{''.join(q.names(Y))}|{''.join(q.names(X))}={w}" if X else f"{''.join(q.names(Y))}={w}"
            for (X, Y), w in sorted(cert.delta.items()))
        flag = "" if mod.acyclic else "*"
        print(f"{label:<24} {agm:>6} {str(mod.value) + flag:>8} {str(poly):>12} {str(cert.value):>6}  {delta}")
    print("* cyclic constraints: the modular value is not an upper bound")


if __name__ == "__main__":
    main()
