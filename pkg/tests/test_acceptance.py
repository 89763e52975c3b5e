"""Acceptance gate: one test (and one summary line) per criterion."""

import itertools
import time
from fractions import Fraction

import numpy as np

from conftest import ACCEPTANCE
from wcoj.bounds import (
    agm_bound,
    check_friedgut,
    check_polymatroid,
    check_shannon_flow,
    modular_bound,
    polymatroid_bound,
    shannon_flow_dual,
)
from wcoj.executor import (
    annotate,
    backtrack_join,
    bruteforce_join,
    panda_interpret,
    triangle_heavy_light,
)
from wcoj.proof import validate
from wcoj.query import (
    ConstraintSet,
    Query,
    UnboundedError,
    acyclicize,
    dependency_graph,
    find_cycle,
    is_acyclic,
    parse_constraints,
    parse_query,
    require_bounded,
)
from wcoj.relation import Counters, Relation
from wcoj.workbench import (
    empirical_entropy,
    entropy_vector,
    five_atom_constraints,
    five_atom_sequence,
    gen_grid_triangle,
    gen_random,
    half_delta,
    random_acyclic_constraints,
    random_distribution,
    triangle_sequence,
)

HALF = Fraction(1, 2)
TIME_LIMIT_S = 10.0
PROBE_RATIO_MAX = 12
POLYMATROID_TOL = 1e-9


def report(label: str, ok: bool, detail: str) -> None:
    line = f"[{label}] {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def _cards(query, db):
    return ConstraintSet.cardinalities(query, {k: len(v) for k, v in db.items()})


# 1 ---------------------------------------------------------------------------

def test_c1_triangle_worst_case(triangle):
    db = gen_grid_triangle(100)
    dc = _cards(triangle, db)
    delta = half_delta(triangle, dc)
    runs = {}
    t = time.perf_counter()
    runs["bruteforce"] = bruteforce_join(triangle, db).relation
    times = {"bruteforce": time.perf_counter() - t}
    t = time.perf_counter()
    runs["backtrack"] = backtrack_join(triangle, dc, db).relation
    times["backtrack"] = time.perf_counter() - t
    t = time.perf_counter()
    runs["heavy-light"] = triangle_heavy_light(db["R"], db["S"], db["T"]).relation
    times["heavy-light"] = time.perf_counter() - t
    t = time.perf_counter()
    steps = annotate(triangle, dc, triangle_sequence(), delta)
    runs["panda"] = panda_interpret(triangle, dc, db, steps, delta).relation
    times["panda"] = time.perf_counter() - t
    want = runs["bruteforce"].to_set(triangle.head)
    ok = len(want) == 1_000_000
    ok &= all(r.to_set(triangle.head) == want for r in runs.values())
    ok &= all(s < TIME_LIMIT_S for s in times.values())
    detail = ", ".join(f"{k} {len(runs[k])} in {times[k]:.2f}s" for k in runs)
    report("1", ok, detail)


# 2 ---------------------------------------------------------------------------

def test_c2_counter_scaling(triangle):
    probes = []
    for m in (25, 50, 100):
        db = gen_grid_triangle(m)
        c = Counters()
        backtrack_join(triangle, _cards(triangle, db), db, counters=c)
        probes.append(c.probes)
    ratios = [b / a for a, b in zip(probes, probes[1:])]
    report("2", all(r <= PROBE_RATIO_MAX for r in ratios),
           f"probes {probes}, ratios per doubling {[round(r, 3) for r in ratios]} (max {PROBE_RATIO_MAX})")


# 3 ---------------------------------------------------------------------------

def test_c3_lp_exactness(triangle):
    N = 1 << 20
    dc = ConstraintSet.cardinalities(triangle, {"R": N, "S": N, "T": N})
    values = {
        "agm": agm_bound(triangle.edges, [N, N, N], triangle.head).value,
        "modular": modular_bound(dc, triangle.head).value,
        "polymatroid": polymatroid_bound(dc, triangle.head).value,
        "dual": shannon_flow_dual(dc, triangle.head).value,
    }
    ok = all(type(v) is Fraction and v == 30 for v in values.values())
    report("3", ok, ", ".join(f"{k}={v}" for k, v in values.items()))


# 4 ---------------------------------------------------------------------------

def test_c4_acyclic_collapse():
    mismatches = []
    for seed in range(100):
        n = 2 + seed % 5
        dc, names = random_acyclic_constraints(n, seed)
        assert is_acyclic(dc)
        m = modular_bound(dc, names).value
        p = polymatroid_bound(dc, names).value
        if m != p:
            mismatches.append((seed, m, p))
    report("4", not mismatches, f"100 acyclic sets, n in 2..6, mismatches {mismatches}")


# 5 ---------------------------------------------------------------------------

TARGET_FIVE_ATOM_BOUND = 25


def test_c5a_five_atom_polymatroid_bound(five_atom):
    dc = five_atom_constraints(five_atom)
    value = polymatroid_bound(dc, five_atom.head).value
    report("5a", value == TARGET_FIVE_ATOM_BOUND,
           f"polymatroid bound {value}, expected {TARGET_FIVE_ATOM_BOUND} "
           f"(note |Q| <= |R||T| = 2^20 on every instance)")


def _cond(query, X, Y):
    y = "".join(query.names(Y))
    return f"{y}|{''.join(query.names(X))}" if X else y


def test_c5b_five_atom_dual_weights(five_atom):
    dc = five_atom_constraints(five_atom)
    cert = shannon_flow_dual(dc, five_atom.head)
    want = half_delta(five_atom, dc)
    half_is_valid = check_shannon_flow(want, five_atom.n)
    report("5b", cert.delta == want,
           f"optimal delta {{{', '.join(f'h({_cond(five_atom, X, Y)}): {w}' for (X, Y), w in sorted(cert.delta.items()))}}}"
           f" (value {cert.value}); the all-1/2 weights are a valid Shannon flow: {half_is_valid}, value "
           f"{sum(w * 10 for w in want.values())}")


def test_c5c_five_atom_sequence_validates(five_atom):
    dc = five_atom_constraints(five_atom)
    steps = five_atom_sequence()
    rep = validate(steps, half_delta(five_atom, dc), five_atom.n)
    report("5c", rep.ok, f"{len(steps)}-step transcribed sequence: valid={rep.ok}" + (f" ({rep.reason})" if rep.reason else ""))


def test_c5d_five_atom_panda_matches_bruteforce(five_atom):
    sizes = {"R": 60, "S": 60, "T": 60, "W": 80, "V": 80}
    dc = five_atom_constraints(five_atom, 60, 60, 60, 80, 80)
    delta = half_delta(five_atom, dc)
    steps = annotate(five_atom, dc, five_atom_sequence(), delta)
    bad, total = [], 0
    for seed in range(20):
        db = gen_random(five_atom, sizes, seed, domain=8)
        want = bruteforce_join(five_atom, db).relation
        got = panda_interpret(five_atom, dc, db, steps, delta).relation
        total += len(want)
        if got != want:
            bad.append(seed)
    report("5d", not bad, f"20 seeded instances, {total} output tuples in total, mismatching seeds {bad}")


def test_c5e_heavy_light_intermediates():
    worst = 0.0
    runs = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        q = parse_query("Q(A,B,C) :- R(A,B), S(B,C), T(A,C).")
        sizes = {k: int(rng.integers(1, 300)) for k in "RST"}
        db = gen_random(q, sizes, seed, domain=int(rng.integers(20, 40)))
        for R, S, T in ((db["R"], db["S"], db["T"]), (db["S"], db["T"], db["R"])):
            ex = triangle_heavy_light(R, S, T)
            bound = ex.stats["intermediate_bound"]
            worst = max(worst, max(ex.stats["heavy_join"], ex.stats["light_join"]) / bound)
            runs += 1
    db = gen_grid_triangle(40)
    ex = triangle_heavy_light(db["R"], db["S"], db["T"])
    worst = max(worst, max(ex.stats["heavy_join"], ex.stats["light_join"]) / ex.stats["intermediate_bound"])
    runs += 1
    report("5e", worst <= 1, f"{runs} runs, max intermediate / ceil(sqrt(|R||S||T|)) = {worst:.3f}")


# 6 ---------------------------------------------------------------------------

def test_c6_shearer_grid():
    AB, BC, AC = 0b011, 0b110, 0b101
    grid = [Fraction(k, 4) for k in range(5)]
    wrong = []
    for a, b, c in itertools.product(grid, repeat=3):
        delta = {k: w for k, w in ((AB, a), (BC, b), (AC, c)) if w}
        got = check_shannon_flow({(0, k): w for k, w in delta.items()}, 3)
        want = a + b >= 1 and b + c >= 1 and a + c >= 1
        if got != want:
            wrong.append((a, b, c))
    report("6", not wrong, f"125 grid points, disagreements {wrong}")


# 7 ---------------------------------------------------------------------------

def _random_friedgut_instance(rng):
    n = int(rng.integers(1, 5))
    names = "ABCD"[:n]
    atoms = []
    for k in range(int(rng.integers(1, 4))):
        arity = int(rng.integers(1, n + 1))
        atoms.append((f"R{k}", tuple(sorted(rng.choice(list(names), arity, replace=False)))))
    covered = {v for _, vs in atoms for v in vs}
    for v in names:
        if v not in covered:
            atoms.append((f"R{len(atoms)}", (v,)))
    query = Query.from_atoms(atoms, names)
    dom = int(rng.integers(1, 4))
    db, weights = {}, []
    for rel, vs in atoms:
        rows = [t for t in itertools.product(range(dom), repeat=len(vs)) if rng.random() < 0.7]
        db[rel] = Relation(vs, rows)
        weights.append({t: int(rng.integers(0, 11)) for t in db[rel].tuples})
    cover = [Fraction(int(rng.integers(0, 5)), 4) for _ in atoms]
    for v in names:
        have = sum(c for c, (_, vs) in zip(cover, atoms) if v in vs)
        if have < 1:
            k = next(i for i, (_, vs) in enumerate(atoms) if v in vs)
            cover[k] += 1 - have
    return query, db, weights, cover


def test_c7_friedgut():
    rng = np.random.default_rng(2024)
    failures = []
    tight = 0
    for i in range(200):
        query, db, weights, cover = _random_friedgut_instance(rng)
        res = check_friedgut(query, db, weights, cover)
        if not res.holds:
            failures.append(i)
        if res.rhs and res.lhs >= res.rhs * (1 - 1e-12):
            tight += 1
    report("7", not failures, f"200 instances, failures {failures}, {tight} tight to 1e-12")


# 8 ---------------------------------------------------------------------------

def test_c8_entropy_polymatroid():
    bad = []
    for seed in range(100):
        n = 3 + seed % 2
        joint = random_distribution(n, seed, sparsity=0.3 if seed % 3 == 0 else 0.0)
        h = entropy_vector(joint, n)
        ok, why = check_polymatroid(h, n, tol=POLYMATROID_TOL)
        if not ok:
            bad.append((seed, why))
        for mask in range(1, 1 << n):
            H, log_supp = empirical_entropy(joint, [i for i in range(n) if mask >> i & 1])
            if H > log_supp + POLYMATROID_TOL:
                bad.append((seed, mask))
    report("8", not bad, f"100 distributions over 3-4 binary variables, violations {bad}")


# 9 ---------------------------------------------------------------------------

def test_c9_acyclicize():
    q = parse_query("Q(A,B,C,D) :- R(A), S(A,B), T(B,C), W(C,A,D).")
    dc = parse_constraints("card R 16\ndeg S A -> A,B 4\ndeg T B -> B,C 4\ndeg W C -> A,C,D 8\n", q)
    cycle = find_cycle(dependency_graph(dc), q.head)
    unbounded = []
    for c in dc:
        try:
            require_bounded(dc.replace(c, None), q.head)
        except UnboundedError:
            unbounded.append(str(c))
    new = acyclicize(dc, q.head)
    edges = dependency_graph(new)
    before = polymatroid_bound(dc, q.head).value
    after = polymatroid_bound(new, q.head).value
    ok = cycle == ["A", "B", "C", "A"]
    ok &= len(unbounded) == len(dc)
    ok &= edges == {("A", "B"), ("B", "C"), ("C", "D")}
    ok &= after >= before
    report("9", ok, f"witness {'->'.join(cycle)}, {len(unbounded)}/{len(dc)} removals unbounded, "
                    f"edges {sorted(edges)}, bound {before} -> {after}")


# 10 --------------------------------------------------------------------------

BACKTRACK_QUERIES = [
    ("Q(A,B,C) :- R(A,B), S(B,C), T(A,C).", "card R {R}\ndeg S B -> B,C {dS}\ncard T {T}\n"),
    ("Q(A,B,C,D) :- R(A,B), S(B,C), T(C,D), U(A,D).", "card R {R}\ndeg S B -> B,C {dS}\ncard T {T}\ncard U {U}\n"),
    ("Q(A,B,C,D) :- R(A,B), S(B,C), T(C,D), W(A,C,D), V(A,B,D).",
     "card R {R}\ndeg S B -> B,C {dS}\ncard T {T}\ndeg W A,C -> A,C,D {dW}\n"),
]


def _degree(rel, X, Y):
    from wcoj.relation import degree
    return max(degree(rel, X, Y), 1)


def test_c10_oracle_equivalence(five_atom, triangle):
    bad = {"backtrack": [], "heavy-light": [], "panda": []}
    tuples = dict.fromkeys(bad, 0)
    for seed in range(50):
        rng = np.random.default_rng(seed)
        text, dc_tmpl = BACKTRACK_QUERIES[seed % len(BACKTRACK_QUERIES)]
        q = parse_query(text)
        sizes = {a.relation: int(rng.integers(1, 80)) for a in q.atoms}
        db = gen_random(q, sizes, seed, domain=int(rng.integers(9, 14)))
        dc = parse_constraints(dc_tmpl.format(
            R=len(db["R"]), T=len(db["T"]), U=len(db.get("U", db["R"])),
            dS=_degree(db["S"], ("B",), ("B", "C")),
            dW=_degree(db["W"], ("A", "C"), ("A", "C", "D")) if "W" in db else 1), q)
        assert is_acyclic(dc)
        want = bruteforce_join(q, db).relation
        tuples["backtrack"] += len(want)
        if backtrack_join(q, dc, db).relation != want:
            bad["backtrack"].append(seed)

        tdb = gen_random(triangle, {k: int(rng.integers(1, 200)) for k in "RST"}, seed,
                         domain=int(rng.integers(15, 30)))
        want = bruteforce_join(triangle, tdb).relation
        tuples["heavy-light"] += len(want)
        if triangle_heavy_light(tdb["R"], tdb["S"], tdb["T"]).relation.tuples != want.tuples:
            bad["heavy-light"].append(seed)

        fsizes = {"R": 50, "S": 50, "T": 50, "W": 60, "V": 60}
        fdb = gen_random(five_atom, fsizes, 1000 + seed, domain=8)
        fdc = five_atom_constraints(five_atom, 50, 50, 50, 60, 60)
        delta = half_delta(five_atom, fdc)
        steps = annotate(five_atom, fdc, five_atom_sequence(), delta)
        want = bruteforce_join(five_atom, fdb).relation
        tuples["panda"] += len(want)
        if panda_interpret(five_atom, fdc, fdb, steps, delta).relation != want:
            bad["panda"].append(seed)
    report("10", not any(bad.values()), "50 instances per executor, mismatches "
           + ", ".join(f"{k} {v} ({tuples[k]} tuples)" for k, v in bad.items()))
