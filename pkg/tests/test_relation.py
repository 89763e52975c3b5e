import pytest
from hypothesis import given, settings, strategies as st

from wcoj.relation import (
    Counters,
    Dictionary,
    Relation,
    RelationError,
    SqrtRatio,
    degree,
    hash_join,
    intersect_iter,
    load_csv,
    partition_by_degree,
    prefix_select,
    project,
    semijoin,
    write_csv,
)

pairs = st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=40)


def test_relation_sorts_and_dedups():
    r = Relation(("A", "B"), [(2, 1), (1, 5), (2, 1)])
    assert r.tuples == [(1, 5), (2, 1)]
    assert (2, 1) in r and (3, 3) not in r


def test_relation_rejects_bad_schema_and_arity():
    with pytest.raises(RelationError):
        Relation(("A", "A"))
    with pytest.raises(RelationError):
        Relation(("A", "B"), [(1,)])


def test_index_reorders_and_caches():
    r = Relation(("A", "B"), [(1, 3), (2, 1)])
    ba = r.index(("B", "A"))
    assert ba.schema == ("B", "A") and ba.tuples == [(1, 2), (3, 1)]
    assert r.index(("B", "A")) is ba
    assert r.index(("B",)).tuples == [(1,), (3,)]


def test_prefix_select():
    r = Relation(("A", "B"), [(1, 1), (1, 2), (2, 7)])
    c = Counters()
    v = prefix_select(r, (1,), c)
    assert list(v) == [(1, 1), (1, 2)] and v.residual == ("B",)
    assert len(prefix_select(r, {"A": 3})) == 0
    assert c.probes == 1
    with pytest.raises(RelationError):
        prefix_select(r, {"B": 1})


def test_degree():
    r = Relation(("A", "B", "C"), [(1, 1, 1), (1, 2, 1), (1, 2, 2), (2, 1, 1)])
    assert degree(r, (), ("A",)) == 2
    assert degree(r, ("A",), ("A", "B")) == 2
    assert degree(r, ("A",), ("A", "B", "C")) == 3
    assert degree(r, ("C",), ("A", "C")) == 2


def test_dictionary_roundtrip():
    d = Dictionary()
    assert d.encode("42") == 42
    k = d.encode("alice")
    assert d.encode("alice") == k and d.decode(k) == "alice" and d.decode(42) == "42"


def test_csv_roundtrip(tmp_path):
    d = Dictionary()
    path = tmp_path / "r.csv"
    path.write_text("A,B\n1,x\n2,y\n1,x\n")
    r = load_csv(path, ("A", "B"), d)
    assert len(r) == 2
    write_csv(r, tmp_path / "out.csv", d)
    again = load_csv(tmp_path / "out.csv", ("A", "B"), Dictionary())
    assert [d.decode(v) for v in r.tuples[0]] == ["1", "x"]
    assert len(again) == 2


def test_sqrt_ratio_exact():
    t = SqrtRatio(8, 2)  # exactly 2
    assert t == 2 and t > 1 and not t > 2 and t < 3
    s = SqrtRatio(2)
    assert 1 < s < 2
    assert s > 1.4142135 and s < 1.4142136
    assert SqrtRatio(8, 2) == SqrtRatio(4)


@settings(max_examples=60, deadline=None)
@given(pairs, pairs)
def test_hash_join_matches_nested_loops(r, s):
    R = Relation(("A", "B"), r)
    S = Relation(("B", "C"), s)
    got = hash_join(R, S).to_set(("A", "B", "C"))
    want = {(a, b, c) for a, b in set(r) for b2, c in set(s) if b == b2}
    assert got == want


@settings(max_examples=60, deadline=None)
@given(pairs, pairs)
def test_semijoin_and_project(r, s):
    R = Relation(("A", "B"), r)
    S = Relation(("B", "C"), s)
    keep = {b for b, _ in s}
    assert semijoin(R, S).to_set() == {t for t in set(r) if t[1] in keep}
    assert project(R, ("B",)).to_set() == {(b,) for _, b in set(r)}


@settings(max_examples=80, deadline=None)
@given(st.lists(st.sets(st.integers(0, 30), max_size=20), min_size=1, max_size=4))
def test_intersect_iter_is_set_intersection(sets):
    views = [prefix_select(Relation(("X",), [(v,) for v in s])) for s in sets]
    c = Counters()
    got = list(intersect_iter(views, c))
    assert got == sorted(set.intersection(*sets))
    smallest = min(len(s) for s in sets)
    assert c.probes <= smallest * len(sets)


@settings(max_examples=40, deadline=None)
@given(pairs, st.integers(1, 5))
def test_partition_by_degree(r, theta):
    R = Relation(("A", "B"), r)
    heavy, light = partition_by_degree(R, ("A",), theta)
    assert sorted(heavy.tuples + light.tuples) == R.tuples
    for part, is_heavy in ((heavy, True), (light, False)):
        for a, _ in part:
            assert (sum(1 for x, _ in R if x == a) > theta) == is_heavy
