"""Conjunctive queries, degree constraints and their dependency structure.

Variables are attribute names.  A :class:`Query` fixes the variable order
(head order), which is the vertex numbering used by the LP layer: vertex ``i``
is bit ``1 << i`` in a subset mask.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

from .relation import Relation, RelationError, degree

__all__ = [
    "Atom",
    "ConstraintSet",
    "CyclicError",
    "DegreeConstraint",
    "ParseError",
    "Query",
    "UnboundedError",
    "acyclicize",
    "bound_closure",
    "dependency_graph",
    "find_cycle",
    "format_constraints",
    "is_acyclic",
    "parse_constraints",
    "parse_query",
    "require_bounded",
    "simplify_fd",
    "topological_order",
    "validate_db",
]


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnboundedError(ValueError):
    """Some variable is not bound by the constraints; ``unbound`` names them."""

    def __init__(self, unbound: Iterable[str], message: str | None = None):
        self.unbound = tuple(unbound)
        super().__init__(message or f"unbounded output size: unbound variables {', '.join(self.unbound)}")


class CyclicError(ValueError):
    """The constraint dependency graph has a cycle; ``cycle`` is one witness."""

    def __init__(self, cycle: Sequence[str]):
        self.cycle = tuple(cycle)
        super().__init__("cyclic degree constraints: " + " -> ".join(self.cycle))


@dataclass(frozen=True)
class Atom:
    relation: str
    variables: tuple[str, ...]

    def __str__(self):
        return f"{self.relation}({','.join(self.variables)})"


@dataclass(frozen=True)
class Query:
    """A full conjunctive query ``Q(head) :- atoms``."""

    head: tuple[str, ...]
    atoms: tuple[Atom, ...]
    name: str = "Q"

    def __post_init__(self):
        if len(set(self.head)) != len(self.head):
            raise ValueError(f"repeated variable in head {self.head}")
        body = {v for a in self.atoms for v in a.variables}
        if body != set(self.head):
            raise ValueError(f"head {self.head} must list exactly the body variables {sorted(body)}")
        for a in self.atoms:
            if not a.variables:
                raise ValueError(f"atom {a} has no variables")
            if len(set(a.variables)) != len(a.variables):
                raise ValueError(f"atom {a} repeats a variable")

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[str, Sequence[str]]], head: Sequence[str] | None = None, name="Q"):
        atoms = tuple(Atom(r, tuple(vs)) for r, vs in atoms)
        if head is None:
            seen = []
            for a in atoms:
                seen.extend(v for v in a.variables if v not in seen)
            head = seen
        return cls(tuple(head), atoms, name)

    @property
    def n(self) -> int:
        return len(self.head)

    @property
    def vertices(self) -> tuple[str, ...]:
        return self.head

    @property
    def edges(self) -> list[frozenset[str]]:
        """Hyperedges, one per atom (a multiset: repeats kept)."""
        return [frozenset(a.variables) for a in self.atoms]

    def atom(self, relation: str) -> Atom:
        for a in self.atoms:
            if a.relation == relation:
                return a
        raise KeyError(f"no atom over relation {relation!r} in {self}")

    def mask(self, names: Iterable[str]) -> int:
        m = 0
        for v in names:
            m |= 1 << self.head.index(v)
        return m

    def names(self, mask: int) -> tuple[str, ...]:
        return tuple(v for i, v in enumerate(self.head) if mask >> i & 1)

    def bind(self, db: Mapping[str, Relation]) -> list[Relation]:
        """The relation of every atom, columns renamed to the atom's variables."""
        out = []
        for a in self.atoms:
            if a.relation not in db:
                raise KeyError(f"relation {a.relation!r} missing from database")
            rel = db[a.relation]
            if len(rel.schema) != len(a.variables):
                raise RelationError(f"{a.relation} has arity {len(rel.schema)}, atom {a} needs {len(a.variables)}")
            if rel.schema == a.variables:
                out.append(rel)
            elif set(rel.schema) == set(a.variables):
                out.append(rel.index(a.variables).renamed(rel.name))
            else:
                out.append(Relation.from_sorted(a.variables, rel.tuples, a.relation))
        return out

    def __str__(self):
        return f"{self.name}({','.join(self.head)}) :- {', '.join(map(str, self.atoms))}."


@dataclass(frozen=True)
class DegreeConstraint:
    """``deg(Y | X) <= N``, optionally guarded by a relation."""

    X: frozenset[str]
    Y: frozenset[str]
    N: int
    guard: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "X", frozenset(self.X))
        object.__setattr__(self, "Y", frozenset(self.Y))
        if not self.X < self.Y:
            raise ValueError(f"degree constraint needs X ⊊ Y, got X={sorted(self.X)} Y={sorted(self.Y)}")
        if self.N < 1:
            raise ValueError(f"degree bound must be a positive integer, got {self.N}")

    @property
    def is_cardinality(self) -> bool:
        return not self.X

    @property
    def is_simple_fd(self) -> bool:
        return self.N == 1 and len(self.X) == 1 and len(self.Y) == 2

    def key(self) -> tuple[frozenset, frozenset]:
        return (self.X, self.Y)

    def __str__(self):
        x = "".join(sorted(self.X)) or "∅"
        return f"({x} -> {''.join(sorted(self.Y))}, {self.N}{', ' + self.guard if self.guard else ''})"


class ConstraintSet:
    """Degree constraints with at most one entry per (X, Y); duplicates keep the minimum N."""

    def __init__(self, constraints: Iterable[DegreeConstraint] = ()):
        by_key: dict = {}
        for c in constraints:
            old = by_key.get(c.key())
            if old is None or c.N < old.N:
                by_key[c.key()] = c
        self.constraints: tuple[DegreeConstraint, ...] = tuple(by_key.values())

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def __eq__(self, other):
        if not isinstance(other, ConstraintSet):
            return NotImplemented
        return set(self.constraints) == set(other.constraints)

    def __hash__(self):
        return hash(frozenset(self.constraints))

    def __repr__(self):
        return "ConstraintSet[" + ", ".join(map(str, self.constraints)) + "]"

    def variables(self) -> set[str]:
        return {v for c in self for v in c.Y}

    def replace(self, old: DegreeConstraint, new: DegreeConstraint | None) -> "ConstraintSet":
        out = [c for c in self.constraints if c != old]
        if new is not None:
            out.append(new)
        return ConstraintSet(out)

    @classmethod
    def cardinalities(cls, query: Query, sizes: Mapping[str, int]) -> "ConstraintSet":
        """One cardinality constraint per atom, guarded by the atom's relation."""
        return cls(DegreeConstraint(frozenset(), frozenset(a.variables), sizes[a.relation], a.relation)
                   for a in query.atoms)


# -- text formats ------------------------------------------------------------

_IDENT = r"[A-Za-z0-9_]+"
_ATOM_RE = re.compile(rf"\s*({_IDENT})\s*\(\s*({_IDENT}(?:\s*,\s*{_IDENT})*)?\s*\)\s*")


def parse_query(text: str) -> Query:
    """Parse ``Q(A,B,C) :- R(A,B), S(B,C), T(A,C).``"""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if len(lines) != 1:
        raise ParseError(f"expected exactly one query line, found {len(lines)}")
    line = lines[0].strip()
    lineno = next(i for i, ln in enumerate(text.splitlines(), 1) if ln.strip() == line)
    if not line.endswith("."):
        raise ParseError("query must end with a period", lineno)
    head_txt, sep, body_txt = line[:-1].partition(":-")
    if not sep:
        raise ParseError("missing ':-'", lineno)
    m = _ATOM_RE.fullmatch(head_txt)
    if not m:
        raise ParseError(f"malformed head {head_txt.strip()!r}", lineno)
    name, head = m.group(1), _split_vars(m.group(2))
    atoms = []
    pos = 0
    body_txt = body_txt.strip()
    while pos < len(body_txt):
        m = _ATOM_RE.match(body_txt, pos)
        if not m:
            raise ParseError(f"malformed atom near {body_txt[pos:]!r}", lineno)
        atoms.append(Atom(m.group(1), _split_vars(m.group(2))))
        pos = m.end()
        if pos < len(body_txt):
            if body_txt[pos] != ",":
                raise ParseError(f"expected ',' between atoms near {body_txt[pos:]!r}", lineno)
            pos += 1
    if not atoms:
        raise ParseError("query body is empty", lineno)
    try:
        return Query(head, tuple(atoms), name)
    except ValueError as e:
        raise ParseError(str(e), lineno) from None


def _split_vars(txt: str | None) -> tuple[str, ...]:
    if not txt:
        return ()
    return tuple(v.strip() for v in txt.split(","))


def parse_constraints(text: str, query: Query) -> ConstraintSet:
    """Parse ``card R 1000`` / ``deg W A,C -> A,C,D 50`` lines (``#`` comments)."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "card" and len(parts) == 3:
                atom = query.atom(parts[1])
                out.append(DegreeConstraint(frozenset(), frozenset(atom.variables), int(parts[2]), parts[1]))
            elif parts[0] == "deg":
                m = re.fullmatch(rf"deg\s+({_IDENT})\s+(.*?)\s*->\s*(\S+)\s+(\d+)", line)
                if not m:
                    raise ValueError("expected 'deg REL X1,X2 -> Y1,Y2 N'")
                guard = m.group(1)
                atom = query.atom(guard)
                X = frozenset(v for v in (s.strip() for s in m.group(2).split(",")) if v)
                Y = frozenset(v.strip() for v in m.group(3).split(","))
                if not Y <= set(atom.variables):
                    raise ValueError(f"Y={sorted(Y)} is not inside guard {atom}")
                out.append(DegreeConstraint(X, Y, int(m.group(4)), guard))
            else:
                raise ValueError(f"unknown constraint kind {parts[0]!r}")
        except (ValueError, KeyError) as e:
            raise ParseError(str(e).strip("'\""), lineno) from None
    return ConstraintSet(out)


def format_constraints(dc: ConstraintSet, query: Query) -> str:
    lines = []
    for c in dc:
        ys = [v for v in query.head if v in c.Y]
        if c.is_cardinality and c.guard and set(query.atom(c.guard).variables) == c.Y:
            lines.append(f"card {c.guard} {c.N}")
        else:
            xs = [v for v in query.head if v in c.X]
            guard = c.guard or next((a.relation for a in query.atoms if c.Y <= set(a.variables)), None)
            if guard is None:
                raise ValueError(f"no atom can guard {c}; the text format needs a guard")
            lines.append(f"deg {guard} {','.join(xs)} -> {','.join(ys)} {c.N}")
    return "\n".join(lines) + "\n"


# -- checks against data -----------------------------------------------------

@dataclass
class ValidationReport:
    rows: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r["ok"] for r in self.rows)


def validate_db(query: Query, dc: ConstraintSet, db: Mapping[str, Relation]) -> ValidationReport:
    """Check ``D |= DC``: every guarded constraint holds on its guard relation."""
    bound = dict(zip((a.relation for a in query.atoms), query.bind(db)))
    report = ValidationReport()
    for c in dc:
        if c.guard is None:
            continue
        if c.guard not in db:
            raise KeyError(f"guard relation {c.guard!r} is not loaded")
        rel = bound[c.guard]
        if not c.Y <= set(rel.schema):
            raise RelationError(f"constraint {c} reaches outside guard schema {rel.schema}")
        actual = degree(rel, c.X, c.Y)
        report.rows.append({"constraint": c, "declared": c.N, "actual": actual, "ok": actual <= c.N})
    return report


# -- dependency structure ----------------------------------------------------

def dependency_graph(dc: ConstraintSet) -> set[tuple[str, str]]:
    return {(x, y) for c in dc for x in c.X for y in c.Y - c.X}


def _vertex_order(dc: ConstraintSet, vertices: Sequence[str] | None) -> list[str]:
    if vertices is not None:
        return list(vertices)
    return sorted(dc.variables())


def find_cycle(edges: set[tuple[str, str]], vertices: Sequence[str]) -> list[str] | None:
    """One directed cycle (first vertex repeated at the end), or None."""
    adj = {v: sorted((y for x, y in edges if x == v), key=list(vertices).index) for v in vertices}
    color = dict.fromkeys(vertices, 0)
    for root in vertices:
        if color[root]:
            continue
        stack = [(root, iter(adj[root]))]
        path = [root]
        color[root] = 1
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = 2
                stack.pop()
                path.pop()
            elif color[nxt] == 1:
                return path[path.index(nxt):] + [nxt]
            elif color[nxt] == 0:
                color[nxt] = 1
                stack.append((nxt, iter(adj[nxt])))
                path.append(nxt)
    return None


def topological_order(dc: ConstraintSet, vertices: Sequence[str] | None = None) -> list[str]:
    """A variable order where each constraint's X precedes Y - X.

    Ties go to the smallest vertex index; raises :class:`CyclicError`.
    """
    vertices = _vertex_order(dc, vertices)
    rank = {v: i for i, v in enumerate(vertices)}
    edges = dependency_graph(dc)
    indeg = dict.fromkeys(vertices, 0)
    succ = {v: [] for v in vertices}
    for x, y in edges:
        succ[x].append(y)
        indeg[y] += 1
    heap = [rank[v] for v in vertices if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = vertices[heapq.heappop(heap)]
        order.append(v)
        for y in succ[v]:
            indeg[y] -= 1
            if indeg[y] == 0:
                heapq.heappush(heap, rank[y])
    if len(order) < len(vertices):
        raise CyclicError(find_cycle(edges, vertices))
    return order


def is_acyclic(dc: ConstraintSet) -> bool:
    return find_cycle(dependency_graph(dc), sorted(dc.variables())) is None


def bound_closure(dc: ConstraintSet) -> set[str]:
    """Least fixpoint: Y is bound once every variable of X is."""
    bound: set[str] = set()
    changed = True
    while changed:
        changed = False
        for c in dc:
            if c.X <= bound and not c.Y <= bound:
                bound |= c.Y
                changed = True
    return bound


def require_bounded(dc: ConstraintSet, vertices: Sequence[str]) -> None:
    missing = [v for v in vertices if v not in bound_closure(dc)]
    if missing:
        raise UnboundedError(missing)


def _sccs(vertices: Sequence[str], edges: set[tuple[str, str]]) -> list[list[str]]:
    reach = {v: {v} for v in vertices}
    changed = True
    while changed:
        changed = False
        for x, y in edges:
            new = reach[y] - reach[x]
            if new:
                reach[x] |= new
                changed = True
    comps, seen = [], set()
    for v in vertices:
        if v in seen:
            continue
        comp = [u for u in vertices if u in reach[v] and v in reach[u]]
        seen.update(comp)
        comps.append(comp)
    return comps


# Exhaustive search limits for acyclicize.
MAX_ACYCLICIZE_VARS = 8
MAX_ACYCLICIZE_CONSTRAINTS = 12


def acyclicize(
    dc: ConstraintSet,
    vertices: Sequence[str],
    objective: Callable[[ConstraintSet], object] | None = None,
) -> ConstraintSet:
    """An acyclic relaxation of ``dc`` with the smallest ``objective``.

    Moves replace ``(X, Y, N)`` by ``(X, Y - {y}, N)`` for a ``y`` on a cycle of
    the dependency graph, keeping every variable bound; the old guard still
    guards the new constraint, so every database satisfying ``dc`` satisfies
    the result.  All move sequences are enumerated depth first with
    memoization (exponential; capped at 8 variables and 12 constraints).
    ``objective`` defaults to the modular bound.
    """
    vertices = list(vertices)
    require_bounded(dc, vertices)
    if find_cycle(dependency_graph(dc), vertices) is None:
        return dc
    if len(vertices) > MAX_ACYCLICIZE_VARS or len(dc) > MAX_ACYCLICIZE_CONSTRAINTS:
        raise ValueError(
            f"acyclicize search is limited to {MAX_ACYCLICIZE_VARS} variables and "
            f"{MAX_ACYCLICIZE_CONSTRAINTS} constraints")
    if objective is None:
        from .bounds import modular_bound

        def objective(d):
            return modular_bound(d, vertices).value

    seen: set = set()
    candidates: list[ConstraintSet] = []
    stack = [dc]
    while stack:
        cur = stack.pop()
        key = frozenset(cur.constraints)
        if key in seen:
            continue
        seen.add(key)
        edges = dependency_graph(cur)
        if find_cycle(edges, vertices) is None:
            candidates.append(cur)
            continue
        comp_of = {}
        for comp in _sccs(vertices, edges):
            for v in comp:
                comp_of[v] = id(comp)
        for c in sorted(cur, key=str):
            for y in sorted(c.Y - c.X, key=vertices.index):
                if not any(comp_of[x] == comp_of[y] for x in c.X):
                    continue
                newY = c.Y - {y}
                new = DegreeConstraint(c.X, newY, c.N, c.guard) if newY != c.X else None
                nxt = cur.replace(c, new)
                if set(vertices) <= bound_closure(nxt):
                    stack.append(nxt)
    if not candidates:
        raise UnboundedError([], "no acyclic relaxation keeps every variable bound")

    def rank(d: ConstraintSet):
        return (objective(d), sorted(str(c) for c in d))

    return min(candidates, key=rank)


def simplify_fd(dc: ConstraintSet, vertices: Sequence[str]) -> ConstraintSet:
    """Break cycles among simple FDs while keeping the polymatroid bound.

    Each strongly connected component of the FD graph keeps a spanning
    out-tree of its own FDs rooted at one member; everything else in the
    component is dropped.  The root tried first is the member that becomes
    bound earliest; the LP value is compared exactly and other roots are tried
    if it moved.
    """
    from .bounds import polymatroid_bound

    vertices = list(vertices)
    for c in dc:
        if not (c.is_cardinality or c.is_simple_fd):
            raise ValueError(f"simplify_fd accepts only cardinalities and simple FDs, got {c}")
    fds = [c for c in dc if not c.is_cardinality]
    fd_edges = {(next(iter(c.X)), next(iter(c.Y - c.X))): c for c in fds}
    comps = [comp for comp in _sccs(vertices, set(fd_edges)) if len(comp) > 1]
    if not comps:
        return dc
    target = polymatroid_bound(dc, vertices).value
    bind_rank = _binding_rank(dc, vertices)

    kept = [c for c in dc if c.is_cardinality]
    inside = set()
    for comp in comps:
        inside |= {e for e in fd_edges if e[0] in comp and e[1] in comp}
    kept += [c for e, c in fd_edges.items() if e not in inside]

    choice = {}
    for comp in comps:
        roots = sorted(comp, key=lambda v: (bind_rank.get(v, len(vertices)), vertices.index(v)))
        choice[id(comp)] = roots

    def tree(comp, root):
        out, seen, frontier = [], {root}, [root]
        while frontier:
            nxt = []
            for x in frontier:
                for y in sorted(comp, key=vertices.index):
                    if y not in seen and (x, y) in fd_edges:
                        seen.add(y)
                        out.append(fd_edges[(x, y)])
                        nxt.append(y)
            frontier = nxt
        return out

    selected = {id(comp): choice[id(comp)][0] for comp in comps}
    for comp in comps:
        for root in choice[id(comp)]:
            selected[id(comp)] = root
            trial = ConstraintSet(kept + [c for cc in comps for c in tree(cc, selected[id(cc)])])
            try:
                if polymatroid_bound(trial, vertices).value == target:
                    break
            except UnboundedError:
                continue
        else:
            raise ValueError(f"no spanning tree of FD component {comp} preserves the bound")
    return ConstraintSet(kept + [c for cc in comps for c in tree(cc, selected[id(cc)])])


def _binding_rank(dc: ConstraintSet, vertices: Sequence[str]) -> dict[str, int]:
    rank: dict[str, int] = {}
    bound: set[str] = set()
    step = 0
    changed = True
    while changed:
        changed = False
        for c in dc:
            if c.X <= bound and not c.Y <= bound:
                for v in sorted(c.Y - bound, key=list(vertices).index):
                    rank[v] = step
                bound |= c.Y
                step += 1
                changed = True
    return rank


def subsets(items: Sequence, min_size: int = 0):
    for k in range(min_size, len(items) + 1):
        yield from combinations(items, k)
