"""Instance generators, reference proof sequences and entropy oracles."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bounds import modular_bound
from .proof import ProofStep, parse_sequence
from .query import ConstraintSet, DegreeConstraint, Query, parse_constraints
from .relation import Relation, RelationError, write_csv

__all__ = [
    "FIVE_ATOM_QUERY",
    "TRIANGLE_QUERY",
    "GenSpec",
    "empirical_entropy",
    "entropy_vector",
    "five_atom_constraints",
    "five_atom_sequence",
    "gen_agm_tight",
    "gen_grid_triangle",
    "gen_random",
    "half_delta",
    "random_acyclic_constraints",
    "random_distribution",
    "triangle_sequence",
    "uniform_over",
    "write_db",
]

TRIANGLE_QUERY = "Q(A,B,C) :- R(A,B), S(B,C), T(A,C)."
FIVE_ATOM_QUERY = "Q(A,B,C,D) :- R(A,B), S(B,C), T(C,D), W(A,C,D), V(A,B,D)."

# h(AB) -> h(A) + h(AB|A); lift both halves onto h(ABC) and compose
_TRIANGLE_STEPS = """\
dec Y={A,B} X={A} w=1/2
sub I={A,B} J={A,C} w=1/2
comp Y={A,B,C} X={A,C} w=1/2
sub I={A} J={B,C} w=1/2
comp Y={A,B,C} X={B,C} w=1/2
"""

_FIVE_ATOM_STEPS = """\
dec Y={B,C} X={B} w=1/2
sub I={C,D} J={B} w=1/2
comp Y={B,C,D} X={B} w=1/2
sub I={A,B,D} J={B,C,D} w=1/2
comp Y={A,B,C,D} X={B,C,D} w=1/2
sub I={B,C} J={A,B} w=1/2
comp Y={A,B,C} X={A,B} w=1/2
sub I={A,C,D} J={A,B,C} w=1/2
comp Y={A,B,C,D} X={A,B,C} w=1/2
"""


def triangle_sequence() -> list[ProofStep]:
    """Proof of 2 h(ABC) <= h(AB) + h(BC) + h(AC), at weight 1/2 per term."""
    return parse_sequence(_TRIANGLE_STEPS, ("A", "B", "C"))


def five_atom_sequence() -> list[ProofStep]:
    """Proof of h(ABCD) <= 1/2 [h(AB) + h(BC) + h(CD) + h(ACD|AC) + h(ABD|BD)]."""
    return parse_sequence(_FIVE_ATOM_STEPS, ("A", "B", "C", "D"))


def five_atom_constraints(query: Query, n_ab=1024, n_bc=1024, n_cd=1024, n_acd=1024, n_abd=1024) -> ConstraintSet:
    return parse_constraints(
        f"card R {n_ab}\ncard S {n_bc}\ncard T {n_cd}\n"
        f"deg W A,C -> A,C,D {n_acd}\ndeg V B,D -> A,B,D {n_abd}\n",
        query,
    )


def half_delta(query: Query, dc: ConstraintSet) -> dict[tuple[int, int], Fraction]:
    """Weight 1/2 on every constraint's term."""
    return {(query.mask(c.X), query.mask(c.Y)): Fraction(1, 2) for c in dc}


# -- generators ------------------------------------------------------------------

@dataclass
class GenSpec:
    kind: str  # grid-triangle | agm-tight | random
    m: int | None = None
    query: str | None = None
    N: int | None = None
    sizes: dict[str, int] = field(default_factory=dict)
    seed: int = 0
    domain: int | None = None


def gen_grid_triangle(m: int) -> dict[str, Relation]:
    """R = S = T = [m] x [m]; the triangle query then has m^3 answers."""
    if m < 1:
        raise ValueError(f"grid side must be positive, got {m}")
    grid = [(a, b) for a in range(1, m + 1) for b in range(1, m + 1)]
    return {
        "R": Relation.from_sorted(("A", "B"), grid, "R"),
        "S": Relation.from_sorted(("B", "C"), list(grid), "S"),
        "T": Relation.from_sorted(("A", "C"), list(grid), "T"),
    }


def gen_agm_tight(query: Query, N: int) -> tuple[dict[str, Relation], dict[str, int]]:
    """Product instance at the vertex-packing optimum.

    Variable i ranges over [2^floor(x_i)] where x maximizes sum x_i subject to
    sum_{i in F} x_i <= log2 N per atom F; every relation is the full product of
    its variables' domains.  Returns the database and the domain sizes.
    """
    if N < 1 or N & (N - 1):
        raise ValueError(f"N must be a power of two, got {N}")
    dc = ConstraintSet.cardinalities(query, {a.relation: N for a in query.atoms})
    res = modular_bound(dc, query.head)
    dom = {v: 1 << math.floor(res.v[v]) for v in query.head}
    db = {}
    for a in query.atoms:
        rows = list(itertools.product(*(range(1, dom[v] + 1) for v in a.variables)))
        db[a.relation] = Relation.from_sorted(a.variables, rows, a.relation)
    return db, dom


def default_domain(size: int, arity: int) -> int:
    return max(16, math.ceil(2 * size ** (1 / arity)))


def gen_random(query: Query, sizes: Mapping[str, int], seed: int, domain: int | None = None) -> dict[str, Relation]:
    """Uniform samples without replacement of exactly ``sizes[R]`` tuples per relation.

    Values are drawn from [domain] (default max(16, ceil(2 size^(1/arity)))).
    Each relation gets its own Philox stream spawned from ``seed``, so the
    output depends only on (query, sizes, seed, domain).
    """
    streams = np.random.SeedSequence(seed).spawn(len(query.atoms))
    db = {}
    for a, ss in zip(query.atoms, streams):
        if a.relation in db:
            continue
        size = sizes[a.relation]
        k = len(a.variables)
        d = domain if domain is not None else default_domain(size, k)
        total = d ** k
        if size > total:
            raise RelationError(f"{a.relation}: {size} tuples do not fit in [{d}]^{k}")
        rng = np.random.Generator(np.random.Philox(ss))
        codes = rng.choice(total, size=size, replace=False) if size else []
        rows = []
        for code in sorted(int(c) for c in codes):
            t = []
            for _ in range(k):
                code, r = divmod(code, d)
                t.append(r + 1)
            rows.append(tuple(reversed(t)))
        rows.sort()
        db[a.relation] = Relation.from_sorted(a.variables, rows, a.relation)
    return db


def random_acyclic_constraints(n: int, seed: int, extra: int = 3, max_log: int = 10) -> tuple[ConstraintSet, list[str]]:
    """Random acyclic degree constraints over variables V0..V{n-1} with power-of-two bounds.

    Every constraint only points forward in the variable order, so the
    dependency graph is acyclic; each variable is introduced by at least one
    constraint, so the output size is bounded.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    names = [f"V{i}" for i in range(n)]
    out = []

    def add(i_first: int):
        X = frozenset(names[j] for j in range(i_first) if rng.random() < 0.4)
        lo = max((names.index(x) for x in X), default=-1) + 1
        lo = max(lo, i_first)
        new = {names[i_first]} | {names[j] for j in range(lo, n) if j != i_first and rng.random() < 0.3}
        out.append(DegreeConstraint(X, X | new, 1 << int(rng.integers(0, max_log + 1))))

    for i in range(n):
        add(i)
    for _ in range(extra):
        add(int(rng.integers(0, n)))
    return ConstraintSet(out), names


def write_db(db: Mapping[str, Relation], directory, spec: GenSpec | None = None) -> Path:
    """One CSV per relation plus ``manifest.json``; returns the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, rel in sorted(db.items()):
        write_csv(rel, directory / f"{name}.csv")
    manifest = {
        "relations": {name: {"schema": list(rel.schema), "rows": len(rel)} for name, rel in sorted(db.items())},
        "spec": asdict(spec) if spec is not None else None,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


# -- entropy oracles ---------------------------------------------------------------

def _check_distribution(joint: Mapping[tuple, float]) -> None:
    total = math.fsum(joint.values())
    if any(p < 0 for p in joint.values()):
        raise ValueError("probabilities must be non-negative")
    if abs(total - 1) > 1e-12:
        raise ValueError(f"probabilities sum to {total}, not 1")


def empirical_entropy(joint: Mapping[tuple, float], S: Sequence[int]) -> tuple[float, float]:
    """Entropy in bits of the marginal on coordinates ``S``, and log2 of its support size."""
    _check_distribution(joint)
    S = list(S)
    marginal: dict[tuple, float] = {}
    for outcome, p in joint.items():
        if p:
            key = tuple(outcome[i] for i in S)
            marginal[key] = marginal.get(key, 0.0) + p
    h = -math.fsum(p * math.log2(p) for p in marginal.values() if p > 0)
    return max(h, 0.0), math.log2(len(marginal)) if marginal else 0.0


def entropy_vector(joint: Mapping[tuple, float], n: int) -> list[float]:
    """h[S] for every subset mask S of n coordinates (h[0] = 0)."""
    out = [0.0] * (1 << n)
    for mask in range(1, 1 << n):
        out[mask] = empirical_entropy(joint, [i for i in range(n) if mask >> i & 1])[0]
    return out


def uniform_over(rows: Sequence[tuple]) -> dict[tuple, float]:
    rows = list(rows)
    if not rows:
        raise ValueError("uniform distribution over no rows")
    p = 1.0 / len(rows)
    return {r: p for r in rows}


def random_distribution(n: int, seed: int, arity: int = 2, sparsity: float = 0.0) -> dict[tuple, float]:
    """A random joint distribution over n variables with ``arity`` values each."""
    rng = np.random.Generator(np.random.Philox(seed))
    outcomes = list(itertools.product(range(arity), repeat=n))
    w = rng.random(len(outcomes))
    if sparsity:
        w[rng.random(len(outcomes)) < sparsity] = 0.0
        if not w.any():
            w[0] = 1.0
    w = w / w.sum()
    dist = {o: float(p) for o, p in zip(outcomes, w)}
    # renormalize in exact float summation so the total is within 1e-12
    total = math.fsum(dist.values())
    return {o: p / total for o, p in dist.items()}
