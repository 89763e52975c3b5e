"""Query evaluation: backtracking search, heavy/light triangles, proof-sequence
interpretation, and two brute-force oracles.

Every engine returns an :class:`Execution` holding the output relation (in
the query's head order, sorted) and the :class:`Counters` of the run.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .bounds import ceil_sqrt, shannon_flow_dual
from .proof import COMP, DEC, SUB, CondTerm, ProofStep, validate
from .query import ConstraintSet, Query, UnboundedError, topological_order
from .relation import (
    Counters,
    Relation,
    RelationError,
    SqrtRatio,
    hash_join,
    intersect_iter,
    prefix_select,
    semijoin,
)

__all__ = [
    "AnnotatedStep",
    "Execution",
    "ExecutionError",
    "OrderError",
    "annotate",
    "backtrack_join",
    "balanced_theta",
    "bruteforce_join",
    "nested_loop_join",
    "panda_interpret",
    "semijoin_reduce",
    "triangle_heavy_light",
]


class OrderError(ValueError):
    """The variable order does not put every constraint's X before its Y - X."""


class ExecutionError(ValueError):
    pass


@dataclass
class Execution:
    algorithm: str
    relation: Relation
    counters: Counters
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.relation)

    def report(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "cardinality": len(self.relation),
            "counters": self.counters.as_dict(),
            **{k: v for k, v in self.stats.items() if not k.startswith("_")},
        }


def _head_relation(query: Query, rel: Relation) -> Relation:
    if rel.schema == query.head:
        return rel.renamed(query.name)
    return rel.index(query.head).renamed(query.name)


def semijoin_reduce(query: Query, rel: Relation, db: Mapping[str, Relation],
                    skip: Sequence[int] = ()) -> Relation:
    """Keep the tuples of ``rel`` (schema = all query variables) that every atom admits.

    ``skip`` lists atom positions already enforced by construction.
    """
    for k, atom_rel in enumerate(query.bind(db)):
        if k in skip or not rel.tuples:
            continue
        rel = semijoin(rel, atom_rel)
    return rel


def _guards(query: Query, dc: ConstraintSet, db: Mapping[str, Relation]):
    """Map each constraint to (bound guard relation, atom position)."""
    bound = query.bind(db)
    out = {}
    for c in dc:
        pos = None
        if c.guard is not None:
            for k, a in enumerate(query.atoms):
                if a.relation == c.guard and c.Y <= set(a.variables):
                    pos = k
                    break
        if pos is None:
            for k, a in enumerate(query.atoms):
                if c.Y <= set(a.variables):
                    pos = k
                    break
        if pos is None:
            raise RelationError(f"no atom of the query can guard {c}")
        out[c] = (bound[pos], pos)
    return out


# -- backtracking search ---------------------------------------------------------

def check_order(dc: ConstraintSet, order: Sequence[str]) -> None:
    pos = {v: i for i, v in enumerate(order)}
    for c in dc:
        missing = [v for v in c.Y if v not in pos]
        if missing:
            raise OrderError(f"order {list(order)} misses {sorted(missing)}")
        if c.X and max(pos[v] for v in c.X) > min(pos[v] for v in c.Y - c.X):
            raise OrderError(f"order {list(order)} is incompatible with {c}: X must precede Y - X")


def backtrack_join(query: Query, dc: ConstraintSet, db: Mapping[str, Relation],
                   order: Sequence[str] | None = None, counters: Counters | None = None) -> Execution:
    """Depth-first search binding one variable at a time.

    Variable ``order[p]`` takes the values in the intersection, over every
    constraint with ``order[p]`` in Y - X, of the guard projected onto the
    variables of Y bound so far plus ``order[p]`` and selected on the current
    binding.  The finished tuples are semijoin-reduced against every atom that
    the search did not already enforce.
    """
    counters = counters if counters is not None else Counters()
    if order is None:
        order = topological_order(dc, query.head)
    order = tuple(order)
    if sorted(order) != sorted(query.head):
        raise OrderError(f"order {list(order)} is not a permutation of {list(query.head)}")
    check_order(dc, order)
    guards = _guards(query, dc, db)
    pos = {v: i for i, v in enumerate(order)}
    plans = []
    for p, v in enumerate(order):
        level = []
        for c in dc:
            if v in c.Y and v not in c.X:
                rel, _ = guards[c]
                prefix = tuple(a for a in order[:p] if a in c.Y)
                level.append((rel.index(prefix + (v,)), tuple(pos[a] for a in prefix)))
        if not level:
            raise UnboundedError([v], f"no constraint binds {v!r}")
        plans.append(level)
    # atoms whose whole schema is some constraint's Y with an empty X are
    # checked tuple-by-tuple at the deepest level of that constraint
    enforced = {guards[c][1] for c in dc if not c.X and set(query.atoms[guards[c][1]].variables) == c.Y}

    n = len(order)
    vals = [0] * n

    def level_iter(p):
        views = [prefix_select(idx, tuple(vals[i] for i in bind), counters) for idx, bind in plans[p]]
        return intersect_iter(views, counters)

    # probes spent per level, opening the views included
    level_probes = [0] * n
    out = []
    before = counters.probes
    stack = [level_iter(0)]
    while stack:
        p = len(stack) - 1
        x = next(stack[-1], None)
        level_probes[p] += counters.probes - before
        before = counters.probes
        if x is None:
            stack.pop()
            continue
        vals[p] = x
        counters.emitted += 1
        if p == n - 1:
            out.append(tuple(vals))
        else:
            stack.append(level_iter(p + 1))
            level_probes[p + 1] += counters.probes - before
            before = counters.probes
    out.sort()
    rel = Relation.from_sorted(order, out, query.name)
    rel = _head_relation(query, rel)
    rel = semijoin_reduce(query, rel, db, skip=enforced)
    return Execution("backtrack", rel, counters, {"order": list(order), "level_probes": level_probes})


# -- heavy/light triangle ---------------------------------------------------------

def triangle_heavy_light(R: Relation, S: Relation, T: Relation, counters: Counters | None = None) -> Execution:
    """Triangles over R(A,B), S(B,C), T(A,C) by splitting R on the degree of A.

    With θ = sqrt(|R||S|/|T|): tuples of R whose A-value has more than θ
    partners join S and are checked against T; the rest join T and are
    checked against S.  Output schema is (A, B, C).
    """
    counters = counters if counters is not None else Counters()
    r, s, t = set(R.schema), set(S.schema), set(T.schema)
    if not (len(r) == len(s) == len(t) == 2):
        raise RelationError("triangle relations must be binary")
    ab, bc, ac = r & s, s & t, r & t
    if not (len(ab) == len(bc) == len(ac) == 1) or len(r | s | t) != 3:
        raise RelationError(f"schemas {R.schema}, {S.schema}, {T.schema} do not form a triangle")
    A, = ac
    B, = ab
    C, = bc
    schema = (A, B, C)
    stats = {"theta": None, "heavy_join": 0, "light_join": 0,
             "intermediate_bound": ceil_sqrt(len(R) * len(S) * len(T))}
    if not T.tuples:
        # θ is undefined; R ⋈ T is empty and so is the answer
        return Execution("heavy-light", Relation.from_sorted(schema, [], "Q"), counters, stats)
    theta = SqrtRatio(len(R) * len(S), len(T))
    stats["theta"] = float(theta)
    Rab = R.index((A, B))
    heavy, light = _split(Rab, (A,), (A, B), theta)
    hj = hash_join(heavy, S.index((B, C)), counters)
    lj = hash_join(light, T.index((A, C)), counters)
    stats["heavy_join"] = len(hj)
    stats["light_join"] = len(lj)
    part1 = semijoin(hj, T) if hj.tuples else hj
    part2 = semijoin(lj, S) if lj.tuples else lj
    rows = set(part1.index(schema).tuples)
    rows.update(part2.index(schema).tuples)
    return Execution("heavy-light", Relation.from_sorted(schema, sorted(rows), "Q"), counters, stats)


def _split(rel: Relation, X: Sequence[str], Y: Sequence[str], theta) -> tuple[Relation, Relation]:
    """Tuples whose X-value has more than ``theta`` distinct Y-values, and the rest."""
    xi = [rel.position(a) for a in X]
    yi = [rel.position(a) for a in Y]
    groups: dict = {}
    for t in rel.tuples:
        groups.setdefault(tuple(t[i] for i in xi), set()).add(tuple(t[i] for i in yi))
    heavy_keys = {k for k, ys in groups.items() if len(ys) > theta}
    heavy, light = [], []
    for t in rel.tuples:
        (heavy if tuple(t[i] for i in xi) in heavy_keys else light).append(t)
    return Relation.from_sorted(rel.schema, heavy, rel.name), Relation.from_sorted(rel.schema, light, rel.name)


# -- proof-sequence interpretation -------------------------------------------------

@dataclass(frozen=True)
class AnnotatedStep:
    """A proof step with the threshold its decomposition partitions at."""

    step: ProofStep
    theta: object = None

    def __post_init__(self):
        if self.theta is not None and not self.theta > 0:
            raise ValueError(f"threshold must be positive, got {self.theta!r}")


DEAD = None  # branch state of a term whose mass left this branch


def _initial_affiliation(query: Query, dc: ConstraintSet, db, delta) -> dict[CondTerm, Relation]:
    guards = _guards(query, dc, db)
    by_mask = {(query.mask(c.X), query.mask(c.Y)): c for c in dc}
    state = {}
    for (X, Y), w in sorted(delta.items()):
        if not w:
            continue
        c = by_mask.get((X, Y))
        if c is None:
            raise ExecutionError(f"term h({query.names(Y)}|{query.names(X)}) has weight but no constraint")
        state[CondTerm(Y, X)] = guards[c][0]
    return state


class _Interpreter:
    def __init__(self, query, steps, counters):
        self.query = query
        self.steps = steps
        self.counters = counters
        self.full = (1 << query.n) - 1
        self.joins = []

    def names(self, mask):
        return self.query.names(mask)

    def get(self, state, term):
        if term not in state:
            raise ExecutionError(f"term h({','.join(self.names(term.Y))}|{','.join(self.names(term.X))}) "
                                 "is not affiliated with any relation")
        return state[term]

    @staticmethod
    def assign(state, term, rel):
        old = state.get(term, DEAD)
        if rel is DEAD:
            state.setdefault(term, DEAD)
        elif old is DEAD or len(rel) < len(old):
            state[term] = rel

    def run(self, i, state, branch):
        outs = []
        full = CondTerm(self.full, 0)
        while i < len(self.steps):
            ann = self.steps[i]
            s = ann.step
            if s.kind == SUB:
                src = self.get(state, CondTerm(s.a, s.a & s.b))
                self.assign(state, CondTerm(s.a | s.b, s.b), src)
            elif s.kind == COMP:
                ryx = self.get(state, CondTerm(s.a, s.b))
                rx = self.get(state, CondTerm(s.b, 0))
                target = CondTerm(s.a, 0)
                if ryx is DEAD or rx is DEAD:
                    self.assign(state, target, DEAD)
                else:
                    j = hash_join(rx, ryx, self.counters)
                    self.joins.append({"step": i, "branch": branch, "size": len(j)})
                    self.assign(state, target, j)
                    if target == full:
                        outs.append(j)
            else:
                src = self.get(state, CondTerm(s.a, 0))
                t_x, t_yx = CondTerm(s.b, 0), CondTerm(s.a, s.b)
                if src is DEAD:
                    self.assign(state, t_x, DEAD)
                    self.assign(state, t_yx, DEAD)
                else:
                    if ann.theta is None:
                        raise ExecutionError(f"decomposition at step {i} has no threshold")
                    heavy, light = _split(src, self.names(s.b), self.names(s.a), ann.theta)
                    for label, part, alive, dead in (("H", heavy, t_x, t_yx), ("L", light, t_yx, t_x)):
                        sub = dict(state)
                        self.assign(sub, alive, part)
                        self.assign(sub, dead, DEAD)
                        got = self.run(i + 1, sub, branch + label)
                        if not got:
                            # nothing reached h([n]) with one side dead: carry both
                            sub = dict(state)
                            self.assign(sub, t_x, part)
                            self.assign(sub, t_yx, part)
                            got = self.run(i + 1, sub, branch + label + "*")
                        outs.extend(got)
                    return outs
            i += 1
        final = state.get(full, DEAD)
        if final is not DEAD and not any(o is final for o in outs):
            outs.append(final)
        return outs


def panda_interpret(query: Query, dc: ConstraintSet, db: Mapping[str, Relation],
                    steps: Sequence[AnnotatedStep], delta: Mapping[tuple[int, int], object] | None = None,
                    counters: Counters | None = None) -> Execution:
    """Run a proof sequence as relational operations.

    Terms with initial weight start out affiliated with the guard of their
    constraint.  A decomposition of h(Y) partitions its relation by the number
    of Y-values per X-value at the step's threshold and continues in two
    branches: the heavy part carries h(X), the light part carries h(Y|X), and
    the other term of each branch is dead.  Compositions join, submodularity
    steps move the affiliation.  Every branch's relations for h([n]) are
    unioned and semijoin-reduced against all atoms.  ``delta`` defaults to the
    optimal dual certificate of ``dc``.
    """
    counters = counters if counters is not None else Counters()
    steps = [s if isinstance(s, AnnotatedStep) else AnnotatedStep(s) for s in steps]
    if delta is None:
        delta = shannon_flow_dual(dc, query.head).delta
    replay = validate([s.step for s in steps], delta, query.n)
    if not replay.ok:
        raise ExecutionError(f"proof sequence does not validate: {replay.reason}")
    state = _initial_affiliation(query, dc, db, delta)
    interp = _Interpreter(query, steps, counters)
    outs = interp.run(0, state, "")
    rows = set()
    for o in outs:
        rows.update(o.index(query.head).tuples)
    rel = Relation.from_sorted(query.head, sorted(rows), query.name)
    rel = semijoin_reduce(query, rel, db)
    stats = {"joins": interp.joins, "max_intermediate": max((j["size"] for j in interp.joins), default=0),
             "branches": sorted({j["branch"] for j in interp.joins})}
    return Execution("panda", rel, counters, stats)


def _propagate(state: dict, steps: Sequence[ProofStep], full: int) -> set:
    """Push provenance labels through ``steps``; returns labels reaching h([n]) by composition."""
    reached = set()
    for s in steps:
        if s.kind == SUB:
            src = state.get(CondTerm(s.a, s.a & s.b))
            if src is not None:
                t = CondTerm(s.a | s.b, s.b)
                state[t] = state.get(t, frozenset()) | src
        elif s.kind == COMP:
            a, b = state.get(CondTerm(s.a, s.b)), state.get(CondTerm(s.b, 0))
            if a is not None and b is not None:
                t = CondTerm(s.a, 0)
                state[t] = state.get(t, frozenset()) | a | b
                if s.a == full:
                    reached |= a | b
        else:
            src = state.get(CondTerm(s.a, 0))
            if src is not None:
                for t in (CondTerm(s.b, 0), CondTerm(s.a, s.b)):
                    state[t] = state.get(t, frozenset()) | src
    return reached


def _trace_labels(query: Query, steps: Sequence[ProofStep], delta, at: int):
    """Initial terms feeding h([n]) in each branch of decomposition ``at``.

    Returns (labels of the decomposed term, heavy-branch labels, light-branch
    labels); every other decomposition is followed without splitting.
    """
    full = (1 << query.n) - 1
    pre = {CondTerm(Y, X): frozenset([(X, Y)]) for (X, Y), w in delta.items() if w}
    _propagate(pre, steps[:at], full)
    s = steps[at]
    src = pre.get(CondTerm(s.a, 0), frozenset())
    marker = ("dec", at)
    heavy = dict(pre)
    heavy[CondTerm(s.b, 0)] = frozenset([marker])
    heavy.pop(CondTerm(s.a, s.b), None)
    light = dict(pre)
    light[CondTerm(s.a, s.b)] = frozenset([marker])
    light.pop(CondTerm(s.b, 0), None)
    h = _propagate(heavy, steps[at + 1:], full) - {marker}
    lo = _propagate(light, steps[at + 1:], full) - {marker}
    return src, h, lo


def balanced_theta(query: Query, dc: ConstraintSet, steps: Sequence[ProofStep], at: int,
                   delta: Mapping[tuple[int, int], object]) -> SqrtRatio:
    """Threshold for decomposition ``at`` that equalizes the two branches' budgets.

    The heavy branch pays N_dec / θ times the statistics it joins with, the
    light branch θ times its own, so θ² = N_dec · Π heavy / Π light, where
    N_dec is the product of the statistics the decomposed term came from.
    """
    if steps[at].kind != DEC:
        raise ValueError(f"step {at} is not a decomposition")
    stat = {(query.mask(c.X), query.mask(c.Y)): c.N for c in dc}
    src, heavy, light = _trace_labels(query, steps, delta, at)

    def prod(labels):
        out = 1
        for k in labels:
            out *= stat[k]
        return out

    n_dec = prod(src)
    return SqrtRatio(n_dec * prod(heavy), prod(light))


def annotate(query: Query, dc: ConstraintSet, steps: Sequence[ProofStep],
             delta: Mapping[tuple[int, int], object] | None = None,
             thetas: Mapping[int, object] | None = None) -> list[AnnotatedStep]:
    """Attach thresholds to decompositions: explicit ``thetas[i]`` or the balanced one."""
    if delta is None:
        delta = shannon_flow_dual(dc, query.head).delta
    thetas = dict(thetas or {})
    out = []
    for i, s in enumerate(steps):
        theta = None
        if s.kind == DEC:
            theta = thetas.get(i)
            if theta is None:
                theta = balanced_theta(query, dc, steps, i, delta)
        out.append(AnnotatedStep(s, theta))
    return out


# -- oracles -------------------------------------------------------------------

def bruteforce_join(query: Query, db: Mapping[str, Relation], counters: Counters | None = None) -> Execution:
    """Left-deep hash joins in atom order."""
    counters = counters if counters is not None else Counters()
    rels = query.bind(db)
    acc = rels[0]
    for r in rels[1:]:
        acc = hash_join(acc, r, counters)
    return Execution("bruteforce", _head_relation(query, acc), counters)


def nested_loop_join(query: Query, db: Mapping[str, Relation]) -> Relation:
    """Every assignment over the active domains, kept when all atoms contain it."""
    rels = query.bind(db)
    domain = {v: set() for v in query.head}
    for r in rels:
        for t in r.tuples:
            for a, x in zip(r.schema, t):
                domain[a].add(x)
    sets = [(r.schema, set(r.tuples)) for r in rels]
    pos = {v: i for i, v in enumerate(query.head)}
    out = []
    for combo in itertools.product(*(sorted(domain[v]) for v in query.head)):
        if all(tuple(combo[pos[a]] for a in schema) in rows for schema, rows in sets):
            out.append(combo)
    return Relation.from_sorted(query.head, out, query.name)
