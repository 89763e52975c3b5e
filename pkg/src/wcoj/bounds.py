"""Output-size bounds: AGM, modular and polymatroid LPs, Shannon-flow certificates.

All bounds are reported in log2 scale as exact ``Fraction`` values.  Subsets
of the query variables are bitmasks over the vertex order passed in
(``vertices[i]`` is bit ``1 << i``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import gmpy2
import mpmath

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, lp_solve
from .query import (
    ConstraintSet,
    DegreeConstraint,
    Query,
    UnboundedError,
    bound_closure,
    dependency_graph,
    find_cycle,
)
from .relation import Relation

__all__ = [
    "AGMResult",
    "DualCertificate",
    "ModularResult",
    "PolymatroidResult",
    "SizeLimitError",
    "agm_bound",
    "check_friedgut",
    "check_polymatroid",
    "check_shannon_flow",
    "log2_stat",
    "modular_bound",
    "polymatroid_bound",
    "shannon_flow_by_primal",
    "shannon_flow_dual",
    "shannon_flow_dual_lp",
    "tuples_from_log",
]

MAX_POLYMATROID_VARS = 10
MAX_DUAL_VARS = 6
LOG_DENOMINATOR = 1 << 32


class SizeLimitError(ValueError):
    pass


def log2_stat(N: int) -> Fraction:
    """log2(N): exact for powers of two, else rounded up to a multiple of 2**-32."""
    N = int(N)
    if N < 1:
        raise ValueError(f"statistic must be a positive integer, got {N}")
    if N & (N - 1) == 0:
        return Fraction(N.bit_length() - 1)
    with gmpy2.context(gmpy2.get_context(), precision=256):
        scaled = gmpy2.log2(gmpy2.mpfr(N)) * LOG_DENOMINATOR
        return Fraction(int(gmpy2.ceil(scaled)), LOG_DENOMINATOR)


def tuples_from_log(value: Fraction) -> str:
    """2**value as a decimal with 12 significant digits."""
    with mpmath.workdps(40):
        return mpmath.nstr(mpmath.power(2, mpmath.mpf(value.numerator) / value.denominator), 12)


def frac_str(q) -> str:
    return str(Fraction(q))


def parse_frac(s: str) -> Fraction:
    return Fraction(s)


def _constraint_masks(dc: ConstraintSet, vertices: Sequence[str]):
    pos = {v: i for i, v in enumerate(vertices)}
    out = []
    for c in dc:
        missing = (c.Y | c.X) - set(pos)
        if missing:
            raise ValueError(f"constraint {c} mentions unknown variables {sorted(missing)}")
        xm = sum(1 << pos[v] for v in c.X)
        ym = sum(1 << pos[v] for v in c.Y)
        out.append((c, xm, ym, log2_stat(c.N)))
    return out


def _require_closure(dc: ConstraintSet, vertices: Sequence[str]) -> None:
    closure = bound_closure(dc)
    missing = [v for v in vertices if v not in closure]
    if missing:
        raise UnboundedError(missing)


def _bits(mask: int) -> Iterable[int]:
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


# -- AGM -----------------------------------------------------------------------

@dataclass
class AGMResult:
    value: Fraction
    cover: tuple[Fraction, ...]

    @property
    def tuples(self) -> str:
        return tuples_from_log(self.value)


def agm_bound(edges: Sequence[Iterable[str]], sizes: Sequence[int | Fraction | None],
              vertices: Sequence[str] | None = None, log_scale: bool = False) -> AGMResult:
    """min sum_F delta_F log2|R_F| over fractional edge covers.

    ``sizes[k]`` is the cardinality of edge ``k`` (``None`` for unknown);
    with ``log_scale=True`` the entries are already log2 values.
    """
    edges = [frozenset(e) for e in edges]
    if vertices is None:
        vertices = sorted(set().union(*edges)) if edges else []
    usable = [k for k, s in enumerate(sizes) if s is not None]
    for v in vertices:
        if not any(v in edges[k] for k in usable):
            raise UnboundedError([v], f"vertex {v} is not covered by any edge with a finite size")
    logs = {k: (Fraction(sizes[k]) if log_scale else log2_stat(sizes[k])) for k in usable}
    col = {k: i for i, k in enumerate(usable)}
    rows, rhs = [], []
    for v in vertices:
        rows.append({col[k]: -1 for k in usable if v in edges[k]})
        rhs.append(-1)
    res = lp_solve({col[k]: logs[k] for k in usable}, rows, rhs, maximize=False, nvars=len(usable))
    assert res.status == OPTIMAL, res.status
    cover = [Fraction(0)] * len(edges)
    for k in usable:
        cover[k] = res.x[col[k]]
    return AGMResult(res.value, tuple(cover))


def query_agm_bound(query: Query, sizes: Mapping[str, int]) -> AGMResult:
    return agm_bound(query.edges, [sizes.get(a.relation) for a in query.atoms], query.vertices)


# -- modular LP ----------------------------------------------------------------

@dataclass
class ModularResult:
    value: Fraction
    v: dict[str, Fraction]
    delta: dict[DegreeConstraint, Fraction]
    acyclic: bool

    @property
    def tuples(self) -> str:
        return tuples_from_log(self.value)


def modular_bound(dc: ConstraintSet, vertices: Sequence[str]) -> ModularResult:
    """max sum_i v_i s.t. sum_{i in Y-X} v_i <= log2 N_{Y|X}, v >= 0.

    Exact on acyclic ``dc``; on cyclic ``dc`` the flag ``acyclic`` is False and
    the value need not bound the output size.
    """
    vertices = list(vertices)
    _require_closure(dc, vertices)
    cons = _constraint_masks(dc, vertices)
    rows = [{i: 1 for i in _bits(ym & ~xm)} for _, xm, ym, _ in cons]
    rhs = [lg for *_, lg in cons]
    res = lp_solve({i: 1 for i in range(len(vertices))}, rows, rhs, nvars=len(vertices))
    assert res.status == OPTIMAL, res.status
    acyclic = find_cycle(dependency_graph(dc), vertices) is None
    return ModularResult(
        res.value,
        dict(zip(vertices, res.x)),
        {c: y for (c, *_), y in zip(cons, res.dual_ub)},
        acyclic,
    )


# -- polymatroid LP --------------------------------------------------------------

@dataclass
class PolymatroidResult:
    value: Fraction
    h: list[Fraction]
    vertices: tuple[str, ...] = ()

    @property
    def tuples(self) -> str:
        return tuples_from_log(self.value)

    def at(self, names: Iterable[str]) -> Fraction:
        pos = {v: i for i, v in enumerate(self.vertices)}
        return self.h[sum(1 << pos[v] for v in names)]


def elemental_rows(n: int) -> list[dict[int, int]]:
    """Rows ``row . h <= 0`` describing the polymatroid cone (elemental form).

    Column ``S`` is ``h(S)``; column 0 never appears, which pins ``h(∅) = 0``.
    """
    full = (1 << n) - 1
    rows = []
    for i in range(n):
        for j in range(i + 1, n):
            bi, bj = 1 << i, 1 << j
            for S in range(1 << n):
                if S & (bi | bj):
                    continue
                r = {S | bi | bj: 1, S | bi: -1, S | bj: -1}
                if S:
                    r[S] = 1
                rows.append(r)
    for i in range(n):
        rest = full & ~(1 << i)
        r = {full: -1}
        if rest:
            r[rest] = 1
        rows.append(r)
    return rows


def polymatroid_bound(dc: ConstraintSet, vertices: Sequence[str]) -> PolymatroidResult:
    """max h([n]) over polymatroids h with h(Y) - h(X) <= log2 N_{Y|X}."""
    vertices = list(vertices)
    n = len(vertices)
    if n > MAX_POLYMATROID_VARS:
        raise SizeLimitError(f"polymatroid LP limited to {MAX_POLYMATROID_VARS} variables, got {n}")
    _require_closure(dc, vertices)
    rows = elemental_rows(n)
    rhs = [0] * len(rows)
    for _, xm, ym, lg in _constraint_masks(dc, vertices):
        r = {ym: 1}
        if xm:
            r[xm] = -1
        rows.append(r)
        rhs.append(lg)
    full = (1 << n) - 1
    res = lp_solve({full: 1}, rows, rhs, nvars=1 << n)
    if res.status == UNBOUNDED:
        raise UnboundedError([], "polymatroid LP is unbounded")
    assert res.status == OPTIMAL, res.status
    return PolymatroidResult(res.value, res.x, tuple(vertices))


# -- Shannon-flow dual ---------------------------------------------------------

def pairs(n: int) -> list[tuple[int, int]]:
    """All (X, Y) with X ⊊ Y ⊆ [n], ordered by (Y, X)."""
    return [(X, Y) for Y in range(1, 1 << n) for X in _submasks(Y) if X != Y]


def _submasks(Y: int) -> list[int]:
    out = []
    S = Y
    while True:
        out.append(S)
        if S == 0:
            break
        S = (S - 1) & Y
    return sorted(out)


def crossing(I: int, J: int) -> bool:
    return (I & ~J) != 0 and (J & ~I) != 0


@dataclass
class DualCertificate:
    """A feasible point of the Shannon-flow dual: weights keyed by subset masks.

    ``delta[(X, Y)]`` weighs h(Y|X); ``xi[(I, J)]`` a submodularity step
    h(I | I∩J) -> h(I∪J | J); ``alpha[(X, Y)]`` (X nonempty) the conservation
    h(Y|∅) = h(Y|X) + h(X|∅).
    """

    n: int
    delta: dict[tuple[int, int], Fraction]
    xi: dict[tuple[int, int], Fraction] = field(default_factory=dict)
    alpha: dict[tuple[int, int], Fraction] = field(default_factory=dict)
    vertices: tuple[str, ...] = ()
    value: Fraction | None = None

    def inflow(self, X: int, Y: int) -> Fraction:
        total = Fraction(self.delta.get((X, Y), 0))
        for (I, J), w in self.xi.items():
            if J == X and (I | J) == Y:
                total += w
            if I == Y and (I & J) == X:
                total -= w
        if X == 0:
            for (A, B), w in self.alpha.items():
                if B == Y:
                    total -= w
                if A == Y:
                    total += w
        else:
            total += self.alpha.get((X, Y), 0)
        return total

    def inflows(self) -> dict[tuple[int, int], Fraction]:
        """inflow(X, Y) for every pair at once."""
        out = {k: Fraction(0) for k in pairs(self.n)}
        for k, w in self.delta.items():
            out[k] += w
        for (I, J), w in self.xi.items():
            out[(J, I | J)] += w
            out[(I & J, I)] -= w
        for (X, Y), w in self.alpha.items():
            out[(X, Y)] += w
            out[(0, X)] += w
            out[(0, Y)] -= w
        return out

    def violations(self) -> list[str]:
        full = (1 << self.n) - 1
        bad = []
        for k, w in list(self.delta.items()) + list(self.xi.items()):
            if w < 0:
                bad.append(f"negative weight {w} at {k}")
        for I, J in self.xi:
            if not crossing(I, J):
                bad.append(f"xi on non-crossing pair {(I, J)}")
        for X, Y in self.alpha:
            if not X:
                bad.append(f"alpha on pair with empty X {(X, Y)}")
        if bad:
            return bad
        flows = self.inflows()
        for X, Y in pairs(self.n):
            need = 1 if (X, Y) == (0, full) else 0
            got = flows[(X, Y)]
            if got < need:
                bad.append(f"inflow({X},{Y}) = {got} < {need}")
        return bad

    def is_feasible(self) -> bool:
        return not self.violations()

    def _name(self, mask: int) -> list[str]:
        if self.vertices:
            return [v for i, v in enumerate(self.vertices) if mask >> i & 1]
        return [str(i) for i in _bits(mask)]

    def to_json(self) -> str:
        def entries(d, a, b):
            return [{a: self._name(x), b: self._name(y), "weight": frac_str(w)}
                    for (x, y), w in sorted(d.items()) if w != 0]
        doc = {
            "value_log2": frac_str(self.value) if self.value is not None else None,
            "vertices": list(self.vertices),
            "delta": entries(self.delta, "X", "Y"),
            "xi": entries(self.xi, "I", "J"),
            "alpha": entries(self.alpha, "X", "Y"),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DualCertificate":
        doc = json.loads(text)
        vertices = tuple(doc["vertices"])
        pos = {v: i for i, v in enumerate(vertices)}

        def mask(names):
            return sum(1 << pos[v] for v in names)

        def load(key, a, b):
            return {(mask(e[a]), mask(e[b])): parse_frac(e["weight"]) for e in doc[key]}
        value = doc.get("value_log2")
        return cls(len(vertices), load("delta", "X", "Y"), load("xi", "I", "J"), load("alpha", "X", "Y"),
                   vertices, parse_frac(value) if value is not None else None)


def _flow_system(n: int, delta_cols: Sequence[tuple[int, int]]):
    """Columns and inflow rows of the dual LP.

    Returns ``(xi_keys, alpha_keys, col_of, rows)`` where ``rows[(X, Y)]`` maps
    column -> coefficient in inflow(X, Y).  Column layout: delta columns first,
    then xi, then alpha.
    """
    P = pairs(n)
    col = {}
    for k in delta_cols:
        col[("d",) + k] = len(col)
    xi_keys = [(I, J) for I in range(1, 1 << n) for J in range(1, 1 << n) if crossing(I, J)]
    for k in xi_keys:
        col[("x",) + k] = len(col)
    alpha_keys = [(X, Y) for X, Y in P if X]
    for k in alpha_keys:
        col[("a",) + k] = len(col)
    rows = {k: {} for k in P}

    def add(key, c, v):
        r = rows[key]
        r[c] = r.get(c, 0) + v

    for k in delta_cols:
        add(k, col[("d",) + k], 1)
    for I, J in xi_keys:
        c = col[("x", I, J)]
        add((J, I | J), c, 1)        # into h(I∪J | J)
        add((I & J, I), c, -1)       # out of h(I | I∩J)
    for X, Y in alpha_keys:
        c = col[("a", X, Y)]
        add((X, Y), c, 1)
        add((0, X), c, 1)
        add((0, Y), c, -1)
    return xi_keys, alpha_keys, col, rows


def shannon_flow_dual_lp(dc: ConstraintSet, vertices: Sequence[str]) -> DualCertificate:
    """min <delta, n> solved directly over the flow LP (all ξ and α columns).

    Exponentially larger than the primal; kept as an independent route for
    small instances.  :func:`shannon_flow_dual` is the fast path.
    """
    vertices = list(vertices)
    n = len(vertices)
    if n > MAX_DUAL_VARS:
        raise SizeLimitError(f"Shannon-flow dual limited to {MAX_DUAL_VARS} variables, got {n}")
    _require_closure(dc, vertices)
    cons = _constraint_masks(dc, vertices)
    stats = {(xm, ym): lg for _, xm, ym, lg in cons}
    delta_cols = sorted(stats, key=lambda k: (k[1], k[0]))
    xi_keys, alpha_keys, col, rows = _flow_system(n, delta_cols)
    full = (1 << n) - 1
    A, b = [], []
    for key, r in rows.items():
        A.append({c: -v for c, v in r.items() if v})
        b.append(-1 if key == (0, full) else 0)
    cost = {col[("d",) + k]: stats[k] for k in delta_cols}
    free = [col[("a",) + k] for k in alpha_keys]
    res = lp_solve(cost, A, b, free=free, maximize=False, nvars=len(col))
    if res.status != OPTIMAL:
        raise UnboundedError([], f"Shannon-flow dual is {res.status.lower()}")
    x = res.x
    cert = DualCertificate(
        n,
        {k: x[col[("d",) + k]] for k in delta_cols if x[col[("d",) + k]]},
        {k: x[col[("x",) + k]] for k in xi_keys if x[col[("x",) + k]]},
        {k: x[col[("a",) + k]] for k in alpha_keys if x[col[("a",) + k]]},
        tuple(vertices),
        res.value,
    )
    return cert


def shannon_flow_dual(dc: ConstraintSet, vertices: Sequence[str]) -> DualCertificate:
    """An optimal dual certificate, read off the polymatroid LP's row duals.

    The duals of the elemental submodularity rows become ξ, the duals of the
    constraint rows become δ, and α is then forced: for X nonempty it must
    cancel the net inflow of h(Y|X), except on h([n] | [n]-i) where the
    monotonicity dual stays behind.  The result is checked exactly.
    """
    vertices = list(vertices)
    n = len(vertices)
    if n > MAX_POLYMATROID_VARS:
        raise SizeLimitError(f"polymatroid LP limited to {MAX_POLYMATROID_VARS} variables, got {n}")
    _require_closure(dc, vertices)
    rows = elemental_rows(n)
    n_elem = len(rows)
    rhs = [0] * n_elem
    cons = _constraint_masks(dc, vertices)
    keys = []
    for _, xm, ym, lg in cons:
        r = {ym: 1}
        if xm:
            r[xm] = -1
        rows.append(r)
        rhs.append(lg)
        keys.append((xm, ym, lg))
    full = (1 << n) - 1
    res = lp_solve({full: 1}, rows, rhs, nvars=1 << n)
    if res.status == UNBOUNDED:
        raise UnboundedError([], "polymatroid LP is unbounded")
    assert res.status == OPTIMAL, res.status
    y = res.dual_ub
    delta = {}
    for (xm, ym, _), w in zip(keys, y[n_elem:]):
        if w:
            delta[(xm, ym)] = delta.get((xm, ym), Fraction(0)) + w
    xi = {}
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            bi, bj = 1 << i, 1 << j
            for S in range(1 << n):
                if S & (bi | bj):
                    continue
                if y[k]:
                    xi[(S | bi, S | bj)] = y[k]
                k += 1
    leftover = {}
    for i in range(n):
        if y[k] and full != 1 << i:
            leftover[(full & ~(1 << i), full)] = y[k]
        k += 1
    cert = DualCertificate(n, delta, xi, {}, tuple(vertices), res.value)
    base = cert.inflows()
    cert.alpha = {}
    for (X, Y), f in base.items():
        if X:
            a = leftover.get((X, Y), Fraction(0)) - f
            if a:
                cert.alpha[(X, Y)] = a
    bad = cert.violations()
    if bad:
        raise AssertionError(f"certificate from LP duals is infeasible: {bad[:3]}")
    cost = {(xm, ym): lg for xm, ym, lg in keys}
    value = sum((w * cost[k] for k, w in delta.items()), Fraction(0))
    if value != res.value:
        raise AssertionError(f"certificate value {value} differs from LP value {res.value}")
    return cert


def complete_certificate(delta: Mapping[tuple[int, int], Fraction], n: int) -> DualCertificate | None:
    """Search (xi, alpha) making ``delta`` dual-feasible; None when impossible."""
    delta = {k: Fraction(w) for k, w in delta.items() if w}
    for (X, Y), w in delta.items():
        if w < 0:
            raise ValueError(f"negative delta at {(X, Y)}")
        if not (X & ~Y) == 0 or X == Y or Y >= 1 << n:
            raise ValueError(f"delta key {(X, Y)} is not a pair X ⊊ Y ⊆ [{n}]")
    xi_keys, alpha_keys, col, rows = _flow_system(n, [])
    full = (1 << n) - 1
    A, b = [], []
    for key, r in rows.items():
        need = 1 if key == (0, full) else 0
        A.append({c: -v for c, v in r.items() if v})
        b.append(delta.get(key, 0) - need)
    free = [col[("a",) + k] for k in alpha_keys]
    res = lp_solve({}, A, b, free=free, nvars=len(col))
    if res.status == INFEASIBLE:
        return None
    x = res.x
    return DualCertificate(
        n, dict(delta),
        {k: x[col[("x",) + k]] for k in xi_keys if x[col[("x",) + k]]},
        {k: x[col[("a",) + k]] for k in alpha_keys if x[col[("a",) + k]]},
    )


def check_shannon_flow(delta: Mapping[tuple[int, int], Fraction], n: int) -> bool:
    """Is h([n]) <= sum delta_{Y|X} h(Y|X) valid for every polymatroid?"""
    return complete_certificate(delta, n) is not None


def shannon_flow_by_primal(delta: Mapping[tuple[int, int], Fraction], n: int) -> bool:
    """Independent check: max h([n]) over polymatroids with <delta, h> <= 1 is <= 1."""
    rows = elemental_rows(n)
    rhs = [0] * len(rows)
    r = {}
    for (X, Y), w in delta.items():
        r[Y] = r.get(Y, 0) + w
        if X:
            r[X] = r.get(X, 0) - w
    rows.append(r)
    rhs.append(1)
    full = (1 << n) - 1
    res = lp_solve({full: 1}, rows, rhs, nvars=1 << n)
    return res.status == OPTIMAL and res.value <= 1


# -- numeric checkers ------------------------------------------------------------

def check_polymatroid(h: Sequence | Mapping[int, object], n: int, tol: float = 0) -> tuple[bool, str | None]:
    """Verify h(∅) = 0, elemental monotonicity and elemental submodularity."""
    def val(S):
        return h[S] if not isinstance(h, Mapping) else h.get(S, 0)

    if abs(val(0)) > tol:
        return False, f"h(∅) = {val(0)} != 0"
    full = (1 << n) - 1
    for i in range(n):
        rest = full & ~(1 << i)
        if val(full) < val(rest) - tol:
            return False, f"monotonicity: h([n]) < h([n] - {{{i}}})"
    for i in range(n):
        for j in range(i + 1, n):
            bi, bj = 1 << i, 1 << j
            for S in range(1 << n):
                if S & (bi | bj):
                    continue
                if val(S | bi) + val(S | bj) < val(S | bi | bj) + val(S) - tol:
                    return False, f"submodularity: i={i} j={j} S={S}"
    return True, None


@dataclass
class FriedgutResult:
    lhs: mpmath.mpf
    rhs: mpmath.mpf
    holds: bool


FRIEDGUT_PRECISION = 128
FRIEDGUT_SLACK = mpmath.mpf(2) ** -60


def check_friedgut(query: Query, db: Mapping[str, Relation],
                   weights: Sequence[Mapping[tuple, object]],
                   cover: Sequence[Fraction]) -> FriedgutResult:
    """Evaluate both sides of Friedgut's inequality for one instance.

    ``weights[k]`` maps tuples of atom ``k`` (in the atom's variable order) to
    non-negative weights; missing tuples weigh 0.  Real powers are evaluated
    with 128-bit mpmath floats and compared with relative slack 2**-60.
    """
    from .executor import bruteforce_join

    cover = [Fraction(c) for c in cover]
    if len(cover) != len(query.atoms) or len(weights) != len(query.atoms):
        raise ValueError("need one weight function and one cover entry per atom")
    for v in query.vertices:
        if sum(c for c, a in zip(cover, query.atoms) if v in a.variables) < 1:
            raise ValueError(f"cover does not cover vertex {v}")
    for w in weights:
        if any(x < 0 for x in w.values()):
            raise ValueError("weights must be non-negative")
    out = bruteforce_join(query, db).relation
    rels = query.bind(db)
    with mpmath.workprec(FRIEDGUT_PRECISION):
        exps = [mpmath.mpf(c.numerator) / c.denominator for c in cover]
        rhs = mpmath.mpf(1)
        for w, e, rel in zip(weights, exps, rels):
            q = sum((Fraction(w.get(t, 0)) for t in rel.tuples), Fraction(0))
            total = mpmath.mpf(q.numerator) / q.denominator
            rhs *= _pow(total, e)
        idx = [[out.position(v) for v in a.variables] for a in query.atoms]
        lhs = mpmath.mpf(0)
        for t in out.tuples:
            term = mpmath.mpf(1)
            for w, e, ix in zip(weights, exps, idx):
                q = Fraction(w.get(tuple(t[i] for i in ix), 0))
                term *= _pow(mpmath.mpf(q.numerator) / q.denominator, e)
                if not term:
                    break
            lhs += term
        holds = lhs <= rhs + FRIEDGUT_SLACK * max(rhs, mpmath.mpf(1))
    return FriedgutResult(lhs, rhs, bool(holds))


def _pow(base, e):
    if e == 0:
        return mpmath.mpf(1)
    if base == 0:
        return mpmath.mpf(0)
    return mpmath.power(base, e)


def log2_product(values: Iterable[int]) -> Fraction:
    return sum((log2_stat(v) for v in values), Fraction(0))


def ceil_sqrt(x: int) -> int:
    if x <= 0:
        return 0
    r = math.isqrt(x)
    return r if r * r == x else r + 1
