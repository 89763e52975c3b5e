import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from wcoj.bounds import check_polymatroid, modular_bound
from wcoj.executor import bruteforce_join
from wcoj.query import ConstraintSet, is_acyclic, parse_query
from wcoj.workbench import (
    empirical_entropy,
    entropy_vector,
    gen_agm_tight,
    gen_grid_triangle,
    gen_random,
    random_acyclic_constraints,
    random_distribution,
    uniform_over,
    write_db,
)


def test_entropy_of_fair_bits():
    joint = uniform_over([(0, 0), (0, 1), (1, 0), (1, 1)])
    assert empirical_entropy(joint, [0]) == (1.0, 1.0)
    assert empirical_entropy(joint, [0, 1]) == (2.0, 2.0)


def test_entropy_of_correlated_bits():
    joint = {(0, 0): 0.5, (1, 1): 0.5}
    h, supp = empirical_entropy(joint, [0, 1])
    assert h == 1.0 and supp == 1.0
    assert entropy_vector(joint, 2) == [0.0, 1.0, 1.0, 1.0]


def test_entropy_of_skewed_coin():
    h, _ = empirical_entropy({(0,): 0.25, (1,): 0.75}, [0])
    assert math.isclose(h, -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75)), rel_tol=1e-15)


def test_entropy_rejects_bad_distribution():
    with pytest.raises(ValueError):
        empirical_entropy({(0,): 0.5, (1,): 0.4}, [0])
    with pytest.raises(ValueError):
        empirical_entropy({(0,): 1.5, (1,): -0.5}, [0])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10_000), st.sampled_from([0.0, 0.5]))
def test_entropy_vectors_are_polymatroids(n, seed, sparsity):
    h = entropy_vector(random_distribution(n, seed, sparsity=sparsity), n)
    assert check_polymatroid(h, n, tol=1e-9)[0]


def test_grid_triangle():
    db = gen_grid_triangle(3)
    assert {k: len(v) for k, v in db.items()} == {"R": 9, "S": 9, "T": 9}
    with pytest.raises(ValueError):
        gen_grid_triangle(0)


def test_gen_random_deterministic(five_atom):
    sizes = {"R": 50, "S": 20, "T": 10, "W": 30, "V": 5}
    a = gen_random(five_atom, sizes, 7)
    b = gen_random(five_atom, sizes, 7)
    c = gen_random(five_atom, sizes, 8)
    assert a == b and a != c
    assert {k: len(v) for k, v in a.items()} == sizes


def test_gen_random_overfull(triangle):
    with pytest.raises(ValueError):
        gen_random(triangle, {"R": 10, "S": 1, "T": 1}, 0, domain=3)


def test_agm_tight_meets_bound(triangle):
    db, dom = gen_agm_tight(triangle, 64)
    assert dom == {"A": 8, "B": 8, "C": 8}
    assert len(bruteforce_join(triangle, db)) == 2 ** 9
    path = parse_query("Q(A,B,C) :- R(A,B), S(B,C).")
    db, _ = gen_agm_tight(path, 16)
    dc = ConstraintSet.cardinalities(path, {"R": 16, "S": 16})
    assert len(bruteforce_join(path, db)) == 2 ** modular_bound(dc, path.head).value


def test_random_acyclic_constraints():
    for seed in range(20):
        dc, names = random_acyclic_constraints(5, seed)
        assert is_acyclic(dc)
        modular_bound(dc, names)  # bounded, so no exception


def test_write_db(tmp_path, triangle):
    write_db(gen_grid_triangle(2), tmp_path / "db")
    manifest = json.loads((tmp_path / "db" / "manifest.json").read_text())
    assert manifest["relations"]["R"] == {"schema": ["A", "B"], "rows": 4}
    assert (tmp_path / "db" / "S.csv").read_text().splitlines()[0] == "B,C"


def test_uniform_output_entropy(triangle):
    db = gen_grid_triangle(4)
    out = bruteforce_join(triangle, db).relation
    joint = uniform_over(out.tuples)
    h_abc, _ = empirical_entropy(joint, [0, 1, 2])
    h_ab, _ = empirical_entropy(joint, [0, 1])
    assert h_abc == math.log2(len(out))
    assert h_ab <= math.log2(len(db["R"]))


@pytest.mark.parametrize("text,N", [
    ("Q(A,B,C) :- R(A,B), S(B,C), T(A,C).", 1024),
    ("Q(A,B,C,D) :- R(A,B), S(B,C), T(C,D), U(A,D).", 256),
    ("Q(A,B,C) :- R(A,B), S(B,C).", 64),
])
def test_agm_tight_count_window(text, N):
    q = parse_query(text)
    db, _ = gen_agm_tight(q, N)
    bound = modular_bound(ConstraintSet.cardinalities(q, {a.relation: N for a in q.atoms}), q.head).value
    count = len(bruteforce_join(q, db))
    assert 2 ** (bound - q.n) <= count <= 2 ** bound


# pinned outputs of the seeded generator; other implementations must reproduce them
PRNG_VECTORS = {
    0: [(1, 1), (1, 2), (3, 3), (4, 4)],
    1: [(1, 3), (3, 2), (4, 1), (4, 2)],
    42: [(1, 4), (2, 3), (2, 4), (3, 2)],
}


def test_gen_random_test_vectors():
    q = parse_query("Q(A,B) :- R(A,B).")
    for seed, rows in PRNG_VECTORS.items():
        assert gen_random(q, {"R": 4}, seed, domain=4)["R"].tuples == rows
