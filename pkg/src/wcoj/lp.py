"""Exact rational linear programming.

A two-phase primal simplex over sparse rows of ``gmpy2.mpq`` values.
Pivots use Dantzig's largest-coefficient rule and fall back to Bland's rule
after a run of degenerate pivots.  Every optimum is returned together with a dual
solution, and both are checked against each other before the result leaves
this module, so callers can compare optimal values with ``==``.

Problem form::

    maximize    c . x
    subject to  A_ub x <= b_ub
                A_eq x == b_eq
                x_j >= 0   for j not in ``free``

Rows are given either as dense sequences or as ``{column: coefficient}``
mappings.  Coefficients may be ints, ``Fraction`` or anything ``mpq`` accepts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from gmpy2 import mpq

OPTIMAL = "OPTIMAL"
UNBOUNDED = "UNBOUNDED"
INFEASIBLE = "INFEASIBLE"

Row = Union[Mapping[int, object], Sequence[object]]

_ZERO = mpq(0)
# consecutive degenerate pivots tolerated before falling back to Bland's rule
STALL = 50


class LPError(Exception):
    """Raised when the solver's own optimality certificate does not check out."""


@dataclass
class LPResult:
    status: str
    value: Fraction | None = None
    x: list[Fraction] = field(default_factory=list)
    dual_ub: list[Fraction] = field(default_factory=list)
    dual_eq: list[Fraction] = field(default_factory=list)
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _to_mpq(v) -> mpq:
    if isinstance(v, Fraction):
        return mpq(v.numerator, v.denominator)
    return mpq(v)


def _to_fraction(v) -> Fraction:
    v = mpq(v)
    return Fraction(int(v.numerator), int(v.denominator))


def _sparse(row: Row, ncols: int) -> dict[int, mpq]:
    items = row.items() if isinstance(row, Mapping) else enumerate(row)
    out = {}
    for j, v in items:
        if not 0 <= j < ncols:
            raise IndexError(f"column {j} outside 0..{ncols - 1}")
        q = _to_mpq(v)
        if q:
            out[j] = out.get(j, _ZERO) + q
    return {j: v for j, v in out.items() if v}


class _Tableau:
    def __init__(self, rows, rhs, basis):
        self.rows = rows
        self.rhs = rhs
        self.basis = basis
        self.pivots = 0

    def pivot(self, r: int, j: int, d: dict[int, mpq]) -> mpq:
        pr = self.rows[r]
        p = pr[j]
        if p != 1:
            inv = 1 / p
            for k in pr:
                pr[k] *= inv
            self.rhs[r] *= inv
        pr[j] = mpq(1)
        rr = self.rhs[r]
        for i, row in enumerate(self.rows):
            if i == r:
                continue
            f = row.get(j)
            if f is None:
                continue
            for k, v in pr.items():
                nv = row.get(k, _ZERO) - f * v
                if nv:
                    row[k] = nv
                else:
                    row.pop(k, None)
            self.rhs[i] -= f * rr
        self.basis[r] = j
        self.pivots += 1
        f = d.get(j)
        gain = _ZERO
        if f is not None:
            for k, v in pr.items():
                nv = d.get(k, _ZERO) - f * v
                if nv:
                    d[k] = nv
                else:
                    d.pop(k, None)
            gain = f * rr
        return gain

    def reduced_costs(self, cost: dict[int, mpq]) -> tuple[dict[int, mpq], mpq]:
        d = dict(cost)
        value = _ZERO
        for i, b in enumerate(self.basis):
            cb = cost.get(b)
            if not cb:
                continue
            value += cb * self.rhs[i]
            for k, v in self.rows[i].items():
                nv = d.get(k, _ZERO) - cb * v
                if nv:
                    d[k] = nv
                else:
                    d.pop(k, None)
        return d, value

    def run(self, d: dict[int, mpq], allowed) -> str:
        """Primal simplex on reduced costs ``d`` (maximization).

        Pricing is largest-coefficient with smallest-index ties; after
        ``STALL`` consecutive degenerate pivots it switches to Bland's rule
        until the objective moves again, which rules out cycling.
        """
        stalled = 0
        while True:
            bland = stalled >= STALL
            entering = None
            best = _ZERO
            for j in sorted(k for k, v in d.items() if v > 0):
                if not allowed(j):
                    continue
                if bland:
                    entering = j
                    break
                if d[j] > best:
                    entering, best = j, d[j]
            if entering is None:
                return OPTIMAL
            best_r = None
            best_ratio = None
            for i, row in enumerate(self.rows):
                a = row.get(entering)
                if a is None or a <= 0:
                    continue
                ratio = self.rhs[i] / a
                if (best_r is None or ratio < best_ratio
                        or (ratio == best_ratio and self.basis[i] < self.basis[best_r])):
                    best_r, best_ratio = i, ratio
            if best_r is None:
                return UNBOUNDED
            stalled = stalled + 1 if best_ratio == 0 else 0
            self.pivot(best_r, entering, d)


def lp_solve(
    c: Row,
    A_ub: Iterable[Row] = (),
    b_ub: Sequence[object] = (),
    A_eq: Iterable[Row] = (),
    b_eq: Sequence[object] = (),
    free: Iterable[int] = (),
    maximize: bool = True,
    nvars: int | None = None,
) -> LPResult:
    """Solve an LP exactly.  See the module docstring for the problem form.

    The returned duals satisfy ``A_ub^T y + A_eq^T z >= c`` (``==`` on free
    columns), ``y >= 0`` and ``b_ub . y + b_eq . z == value`` for a
    maximization; for ``maximize=False`` the signs are those of the equivalent
    problem ``max -c.x`` negated back, i.e. ``y <= 0`` on ``<=`` rows.
    """
    A_ub = list(A_ub)
    A_eq = list(A_eq)
    if len(A_ub) != len(b_ub) or len(A_eq) != len(b_eq):
        raise ValueError("row count does not match right-hand side length")
    if nvars is None:
        if isinstance(c, Mapping):
            cand = [max(c, default=-1)]
            for row in A_ub + A_eq:
                cand.append(max(row, default=-1) if isinstance(row, Mapping) else len(row) - 1)
            nvars = max(cand) + 1
        else:
            nvars = len(c)
    n = nvars
    cost = _sparse(c, n)
    if not maximize:
        cost = {j: -v for j, v in cost.items()}
    ub = [_sparse(r, n) for r in A_ub]
    eq = [_sparse(r, n) for r in A_eq]
    bub = [_to_mpq(v) for v in b_ub]
    beq = [_to_mpq(v) for v in b_eq]
    free = sorted(set(free))

    # split free x_j = x_j - x_neg
    neg_of = {j: n + k for k, j in enumerate(free)}
    ncols = n + len(free)

    def split(row):
        out = dict(row)
        for j, jn in neg_of.items():
            if j in row:
                out[jn] = -row[j]
        return out

    struct_cost = split(cost)
    m_ub, m_eq = len(ub), len(eq)
    rows, rhs, basis, sign = [], [], [], []
    slack_col, art_col = {}, {}
    next_col = ncols
    for i, row in enumerate(ub):
        slack_col[i] = next_col
        next_col += 1
    first_art = next_col
    for i, row in enumerate(ub):
        r = split(row)
        r[slack_col[i]] = mpq(1)
        b = bub[i]
        s = 1
        if b < 0:
            r = {k: -v for k, v in r.items()}
            b = -b
            s = -1
        rows.append(r)
        rhs.append(b)
        sign.append(s)
        if s == 1:
            basis.append(slack_col[i])
        else:
            art_col[i] = next_col
            r[next_col] = mpq(1)
            basis.append(next_col)
            next_col += 1
    for i, row in enumerate(eq):
        r = split(row)
        b = beq[i]
        s = 1
        if b < 0:
            r = {k: -v for k, v in r.items()}
            b = -b
            s = -1
        art_col[m_ub + i] = next_col
        r[next_col] = mpq(1)
        rows.append(r)
        rhs.append(b)
        sign.append(s)
        basis.append(next_col)
        next_col += 1

    tab = _Tableau(rows, rhs, basis)
    is_art = lambda j: j >= first_art  # noqa: E731

    if art_col:
        phase1 = {a: mpq(-1) for a in art_col.values()}
        d, _ = tab.reduced_costs(phase1)
        tab.run(d, lambda j: True)
        infeas = sum((tab.rhs[i] for i, b in enumerate(tab.basis) if is_art(b)), _ZERO)
        if infeas > 0:
            return LPResult(INFEASIBLE, pivots=tab.pivots)
        # drive zero-level artificials out where a structural/slack column allows
        for i, b in enumerate(tab.basis):
            if not is_art(b):
                continue
            cand = sorted(k for k in tab.rows[i] if not is_art(k))
            if cand:
                tab.pivot(i, cand[0], {})

    d, _ = tab.reduced_costs(struct_cost)
    status = tab.run(d, lambda j: not is_art(j))
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, pivots=tab.pivots)

    values = [_ZERO] * next_col
    for i, b in enumerate(tab.basis):
        values[b] = tab.rhs[i]
    x = [values[j] - (values[neg_of[j]] if j in neg_of else 0) for j in range(n)]

    # duals from reduced costs of the slack / artificial columns
    y_ub, y_eq = [], []
    for i in range(m_ub):
        if sign[i] == 1:
            y_ub.append(-d.get(slack_col[i], _ZERO))
        else:
            y_ub.append(-sign[i] * d.get(art_col[i], _ZERO))
    for i in range(m_eq):
        y_eq.append(-sign[m_ub + i] * d.get(art_col[m_ub + i], _ZERO))

    value = sum((cost.get(j, _ZERO) * x[j] for j in range(n)), _ZERO)
    _certify(cost, ub, bub, eq, beq, set(free), x, y_ub, y_eq, value, n)
    if not maximize:
        value = -value
        y_ub = [-v for v in y_ub]
        y_eq = [-v for v in y_eq]
    return LPResult(
        OPTIMAL,
        _to_fraction(value),
        [_to_fraction(v) for v in x],
        [_to_fraction(v) for v in y_ub],
        [_to_fraction(v) for v in y_eq],
        tab.pivots,
    )


def _certify(cost, ub, bub, eq, beq, free, x, y_ub, y_eq, value, n):
    for j in range(n):
        if j not in free and x[j] < 0:
            raise LPError(f"primal x[{j}] negative")
    for i, row in enumerate(ub):
        if sum((v * x[k] for k, v in row.items()), _ZERO) > bub[i]:
            raise LPError(f"primal row {i} violated")
        if y_ub[i] < 0:
            raise LPError(f"dual y[{i}] negative")
    for i, row in enumerate(eq):
        if sum((v * x[k] for k, v in row.items()), _ZERO) != beq[i]:
            raise LPError(f"primal equality {i} violated")
    lhs = dict()
    for rows, ys in ((ub, y_ub), (eq, y_eq)):
        for row, y in zip(rows, ys):
            if not y:
                continue
            for k, v in row.items():
                lhs[k] = lhs.get(k, _ZERO) + y * v
    for j in range(n):
        a, cj = lhs.get(j, _ZERO), cost.get(j, _ZERO)
        if a < cj or (j in free and a != cj):
            raise LPError(f"dual constraint for column {j} violated")
    dual_value = sum((b * y for b, y in zip(bub, y_ub)), _ZERO)
    dual_value += sum((b * y for b, y in zip(beq, y_eq)), _ZERO)
    if dual_value != value:
        raise LPError(f"duality gap {value} vs {dual_value}")
