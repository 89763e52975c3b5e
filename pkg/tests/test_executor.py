import pytest
from hypothesis import given, settings, strategies as st

from wcoj.bounds import ceil_sqrt, shannon_flow_dual
from wcoj.executor import (
    ExecutionError,
    OrderError,
    annotate,
    backtrack_join,
    balanced_theta,
    bruteforce_join,
    nested_loop_join,
    panda_interpret,
    triangle_heavy_light,
)
from wcoj.proof import derive
from wcoj.query import ConstraintSet, UnboundedError, parse_constraints, parse_query
from wcoj.relation import Counters, Relation, SqrtRatio
from wcoj.workbench import (
    five_atom_constraints,
    five_atom_sequence,
    gen_grid_triangle,
    gen_random,
    half_delta,
    triangle_sequence,
)

edges = st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=25)


def _triangle_db(r, s, t):
    return {"R": Relation(("A", "B"), r), "S": Relation(("B", "C"), s), "T": Relation(("A", "C"), t)}


def _cards(query, db):
    return ConstraintSet.cardinalities(query, {k: max(len(v), 1) for k, v in db.items()})


def test_grid_triangle_all_engines(triangle):
    db = gen_grid_triangle(6)
    dc = _cards(triangle, db)
    want = bruteforce_join(triangle, db).relation
    assert len(want) == 216
    assert backtrack_join(triangle, dc, db).relation == want
    assert triangle_heavy_light(db["R"], db["S"], db["T"]).relation.tuples == want.tuples
    steps = annotate(triangle, dc, triangle_sequence(), half_delta(triangle, dc))
    assert panda_interpret(triangle, dc, db, steps, half_delta(triangle, dc)).relation == want
    assert nested_loop_join(triangle, db) == want


@settings(max_examples=50, deadline=None)
@given(edges, edges, edges)
def test_triangle_engines_match_nested_loops(r, s, t):
    q = parse_query("Q(A,B,C) :- R(A,B), S(B,C), T(A,C).")
    db = _triangle_db(r, s, t)
    want = nested_loop_join(q, db)
    dc = _cards(q, db)
    assert bruteforce_join(q, db).relation == want
    assert backtrack_join(q, dc, db).relation == want
    assert backtrack_join(q, dc, db, order=("C", "A", "B")).relation == want
    hl = triangle_heavy_light(db["R"], db["S"], db["T"])
    assert hl.relation.tuples == want.tuples
    bound = ceil_sqrt(len(db["R"]) * len(db["S"]) * len(db["T"]))
    assert hl.stats["heavy_join"] <= bound and hl.stats["light_join"] <= bound


def test_backtrack_with_degree_constraints():
    q = parse_query("Q(A,B,C) :- R(A,B), S(B,C).")
    db = {"R": Relation(("A", "B"), [(1, 1), (2, 1), (3, 2)]),
          "S": Relation(("B", "C"), [(1, 5), (1, 6), (2, 7)])}
    dc = parse_constraints("card R 3\ndeg S B -> B,C 2\n", q)
    ex = backtrack_join(q, dc, db)
    assert ex.relation == bruteforce_join(q, db).relation
    assert len(ex) == 5 and ex.counters.emitted > 0


def test_backtrack_rejects_bad_order(triangle):
    db = gen_grid_triangle(2)
    dc = parse_constraints("card R 4\ndeg S B -> B,C 2\n", triangle)
    with pytest.raises(OrderError):
        backtrack_join(triangle, dc, db, order=("C", "A", "B"))


def test_backtrack_unbound_variable(triangle):
    db = gen_grid_triangle(2)
    dc = parse_constraints("card R 4\n", triangle)
    with pytest.raises(UnboundedError):
        backtrack_join(triangle, dc, db, order=("A", "B", "C"))


def test_counters_are_deterministic(triangle):
    db = gen_grid_triangle(8)
    dc = _cards(triangle, db)
    a = backtrack_join(triangle, dc, db).counters.as_dict()
    b = backtrack_join(triangle, dc, db).counters.as_dict()
    assert a == b and a["probes"] > 0


def test_backtrack_inner_loop_bound(triangle):
    # each candidate of a level costs at most one probe per participating view
    db = gen_grid_triangle(10)
    c = Counters()
    backtrack_join(triangle, _cards(triangle, db), db, counters=c)
    assert c.emitted >= 1000
    assert c.probes <= 3 * 2 * (10 + 100 + 1000) + 1000


def test_heavy_light_theta_and_empty():
    db = gen_grid_triangle(4)
    hl = triangle_heavy_light(db["R"], db["S"], db["T"])
    assert hl.stats["theta"] == 4.0 and len(hl) == 64
    empty = triangle_heavy_light(db["R"], db["S"], Relation(("A", "C")))
    assert len(empty) == 0 and empty.stats["theta"] is None


def test_heavy_light_rejects_non_triangle():
    r = Relation(("A", "B"))
    with pytest.raises(ValueError):
        triangle_heavy_light(r, Relation(("B", "C")), Relation(("C", "D")))


def test_balanced_theta_triangle(triangle):
    db = gen_grid_triangle(3)
    dc = _cards(triangle, db)
    theta = balanced_theta(triangle, dc, triangle_sequence(), 0, half_delta(triangle, dc))
    # sqrt(|R| |S| / |T|) with all sizes 9
    assert theta == SqrtRatio(9)


def test_panda_rejects_invalid_sequence(triangle):
    db = gen_grid_triangle(3)
    dc = _cards(triangle, db)
    steps = annotate(triangle, dc, triangle_sequence()[1:], half_delta(triangle, dc))
    with pytest.raises(ExecutionError):
        panda_interpret(triangle, dc, db, steps, half_delta(triangle, dc))


@pytest.mark.parametrize("seed", range(6))
def test_panda_five_atom(five_atom, seed):
    sizes = {"R": 30, "S": 30, "T": 30, "W": 40, "V": 40}
    db = gen_random(five_atom, sizes, seed, domain=6)
    dc = five_atom_constraints(five_atom, 30, 30, 30, 40, 40)
    want = bruteforce_join(five_atom, db).relation
    delta = half_delta(five_atom, dc)
    ex = panda_interpret(five_atom, dc, db, annotate(five_atom, dc, five_atom_sequence(), delta), delta)
    assert ex.relation == want
    cert = shannon_flow_dual(dc, five_atom.head)
    derived = annotate(five_atom, dc, derive(cert), cert.delta)
    assert panda_interpret(five_atom, dc, db, derived, cert.delta).relation == want


def test_explicit_thresholds(five_atom):
    db = gen_random(five_atom, {"R": 20, "S": 20, "T": 20, "W": 20, "V": 20}, 3, domain=5)
    dc = five_atom_constraints(five_atom, 20, 20, 20, 20, 20)
    delta = half_delta(five_atom, dc)
    want = bruteforce_join(five_atom, db).relation
    for theta in (1, 2, 100):
        steps = annotate(five_atom, dc, five_atom_sequence(), delta, thetas={0: theta})
        assert panda_interpret(five_atom, dc, db, steps, delta).relation == want


def test_level_probes_add_up(triangle):
    db = gen_grid_triangle(5)
    c = Counters()
    ex = backtrack_join(triangle, _cards(triangle, db), db, counters=c)
    assert sum(ex.stats["level_probes"]) == c.probes


@pytest.mark.parametrize("seed", range(10))
def test_inner_loop_bound(triangle, seed):
    """Innermost probes stay within 2 sum_(a,b) sqrt(|S[b]| |T[a]|) log|db|."""
    import math

    db = gen_random(triangle, {"R": 150, "S": 150, "T": 150}, seed, domain=20)
    ex = backtrack_join(triangle, _cards(triangle, db), db, order=("A", "B", "C"))
    s_deg, t_deg = {}, {}
    for b, _ in db["S"]:
        s_deg[b] = s_deg.get(b, 0) + 1
    for a, _ in db["T"]:
        t_deg[a] = t_deg.get(a, 0) + 1
    # (a, b) pairs the search reaches: a has T-partners, b has S-partners
    reached = [(a, b) for a, b in db["R"] if a in t_deg and b in s_deg]
    log_db = math.log2(sum(len(r) for r in db.values()))
    bound = 2 * sum(math.sqrt(s_deg[b] * t_deg[a]) for a, b in reached) * log_db
    assert ex.stats["level_probes"][2] <= bound
