"""Immutable sorted relations and the access paths the join algorithms use.

A :class:`Relation` keeps its tuples as a duplicate-free list sorted
lexicographically in schema order.  Every selection on a schema prefix is two
binary searches, which is what the runtime analyses of the executors assume.
Other attribute orders are obtained with :meth:`Relation.index`, which
materializes and caches the reordered copy once.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left, bisect_right
from collections import defaultdict
from operator import itemgetter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

__all__ = [
    "Counters",
    "Dictionary",
    "PrefixView",
    "Relation",
    "RelationError",
    "SqrtRatio",
    "degree",
    "hash_join",
    "intersect_iter",
    "load_csv",
    "partition_by_degree",
    "prefix_select",
    "project",
    "semijoin",
    "write_csv",
]

# interned strings live above every accepted integer literal
STRING_BASE = 1 << 63


class RelationError(ValueError):
    pass


@dataclass
class Counters:
    """Operation counts for one execution.

    ``probes`` counts index lookups and cursor seeks, ``emitted`` counts tuples
    produced (intermediates included) and ``comparisons`` counts value
    comparisons made while seeking.
    """

    probes: int = 0
    emitted: int = 0
    comparisons: int = 0

    def reset(self) -> None:
        self.probes = self.emitted = self.comparisons = 0

    def as_dict(self) -> dict[str, int]:
        return {"probes": self.probes, "emitted": self.emitted, "comparisons": self.comparisons}


class Dictionary:
    """String interning shared by all relations of one database.

    Decimal integers map to themselves; other strings get keys from
    ``STRING_BASE`` upward in first-seen order.
    """

    def __init__(self) -> None:
        self._keys: dict[str, int] = {}
        self._strings: list[str] = []

    def encode(self, text: str) -> int:
        text = text.strip()
        if text.isdigit():
            v = int(text)
            if v >= STRING_BASE:
                raise RelationError(f"integer value {v} does not fit in 63 bits")
            return v
        key = self._keys.get(text)
        if key is None:
            key = STRING_BASE + len(self._strings)
            self._keys[text] = key
            self._strings.append(text)
        return key

    def decode(self, value: int) -> str:
        if value >= STRING_BASE:
            return self._strings[value - STRING_BASE]
        return str(value)


class SqrtRatio:
    """The threshold sqrt(num / den), compared exactly against numbers."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=1):
        if den <= 0 or num < 0:
            raise ValueError("SqrtRatio needs num >= 0 and den > 0")
        self.num = num
        self.den = den

    def _cmp(self, other) -> int:
        # sign of (other - self) for other >= 0
        if other < 0:
            return -1
        lhs = other * other * self.den
        return (lhs > self.num) - (lhs < self.num)

    def __lt__(self, other):
        return self._cmp(other) > 0

    def __gt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) >= 0

    def __ge__(self, other):
        return self._cmp(other) <= 0

    def __eq__(self, other):
        if isinstance(other, SqrtRatio):
            return self.num * other.den == other.num * self.den
        return self._cmp(other) == 0

    def __hash__(self):
        return hash(float(self))

    def __float__(self):
        return math.sqrt(self.num / self.den)

    def __mul__(self, other):
        return float(self) * other

    __rmul__ = __mul__

    def __rtruediv__(self, other):
        return other / float(self)

    def __repr__(self):
        return f"SqrtRatio({self.num}, {self.den})"


class Relation:
    """A named set of integer tuples, stored sorted over ``schema``."""

    __slots__ = ("name", "schema", "tuples", "_pos", "_indexes")

    def __init__(self, schema: Sequence[str], tuples: Iterable[Sequence[int]] = (), name: str = ""):
        schema = tuple(schema)
        if len(set(schema)) != len(schema):
            raise RelationError(f"duplicate attribute in schema {schema}")
        if any(not a for a in schema):
            raise RelationError("attribute names must be nonempty")
        rows = set()
        k = len(schema)
        for t in tuples:
            t = tuple(t)
            if len(t) != k:
                raise RelationError(f"tuple {t} does not match arity {k} of {schema}")
            rows.add(t)
        self._init(schema, sorted(rows), name)

    def _init(self, schema, tuples, name):
        self.name = name
        self.schema = schema
        self.tuples = tuples
        self._pos = {a: i for i, a in enumerate(schema)}
        self._indexes = {}

    @classmethod
    def from_sorted(cls, schema: Sequence[str], tuples: list, name: str = "") -> "Relation":
        """Wrap an already sorted, duplicate-free tuple list without copying."""
        rel = cls.__new__(cls)
        rel._init(tuple(schema), tuples, name)
        return rel

    def cardinality(self) -> int:
        return len(self.tuples)

    def __len__(self) -> int:
        return len(self.tuples)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self.tuples)

    def __contains__(self, t) -> bool:
        t = tuple(t)
        i = bisect_left(self.tuples, t)
        return i < len(self.tuples) and self.tuples[i] == t

    def __eq__(self, other) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return self.schema == other.schema and self.tuples == other.tuples

    def __hash__(self):
        return hash((self.schema, len(self.tuples)))

    def __repr__(self) -> str:
        return f"Relation({self.name or '?'}{list(self.schema)}, {len(self)} tuples)"

    def position(self, attr: str) -> int:
        try:
            return self._pos[attr]
        except KeyError:
            raise RelationError(f"unknown attribute {attr!r} in {self.schema}") from None

    def renamed(self, name: str) -> "Relation":
        return Relation.from_sorted(self.schema, self.tuples, name)

    def index(self, order: Sequence[str]) -> "Relation":
        """The same relation (or its projection) re-sorted in ``order``.

        ``order`` may be any subset of the schema; the result is cached, so
        repeated requests for one access path cost nothing.
        """
        order = tuple(order)
        if order == self.schema:
            return self
        cached = self._indexes.get(order)
        if cached is None:
            cached = project(self, order)
            self._indexes[order] = cached
        return cached

    def to_set(self, schema: Sequence[str] | None = None) -> set[tuple]:
        """Tuples as a set, reordered to ``schema`` when given."""
        if schema is None or tuple(schema) == self.schema:
            return set(self.tuples)
        if set(schema) != set(self.schema):
            raise RelationError(f"schema {schema} is not a permutation of {self.schema}")
        idx = [self.position(a) for a in schema]
        return {tuple(t[i] for i in idx) for t in self.tuples}

    def is_sorted_set(self) -> bool:
        ts = self.tuples
        return all(ts[i] < ts[i + 1] for i in range(len(ts) - 1))


def load_csv(path, schema: Sequence[str], dictionary: Dictionary | None = None, name: str | None = None) -> Relation:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such relation file: {path}")
    if dictionary is None:
        dictionary = Dictionary()
    schema = tuple(schema)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise RelationError(f"{path}: missing header row") from None
        if sorted(header) != sorted(schema):
            raise RelationError(f"{path}: header {header} does not match schema {list(schema)}")
        perm = [header.index(a) for a in schema]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise RelationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            enc = [dictionary.encode(v) for v in row]
            rows.append(tuple(enc[i] for i in perm))
    return Relation(schema, rows, name=path.stem if name is None else name)


def write_csv(rel: Relation, path, dictionary: Dictionary | None = None) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rel.schema)
        for t in rel.tuples:
            w.writerow([dictionary.decode(v) for v in t] if dictionary else t)


def project(rel: Relation, attrs: Sequence[str]) -> Relation:
    attrs = tuple(attrs)
    idx = [rel.position(a) for a in attrs]
    if attrs == rel.schema:
        return rel
    if attrs == rel.schema[: len(attrs)]:
        # prefix projection of a sorted list stays sorted; drop adjacent repeats
        out = []
        last = None
        k = len(attrs)
        for t in rel.tuples:
            p = t[:k]
            if p != last:
                out.append(p)
                last = p
        return Relation.from_sorted(attrs, out, rel.name)
    return Relation.from_sorted(attrs, sorted({tuple(t[i] for i in idx) for t in rel.tuples}), rel.name)


class PrefixView:
    """Tuples of ``base`` that extend a bound prefix: the slice ``[lo, hi)``."""

    __slots__ = ("base", "binding", "lo", "hi")

    def __init__(self, base: Relation, binding: tuple, lo: int, hi: int):
        self.base = base
        self.binding = binding
        self.lo = lo
        self.hi = hi

    @property
    def residual(self) -> tuple[str, ...]:
        return self.base.schema[len(self.binding):]

    def __len__(self) -> int:
        return self.hi - self.lo

    def __iter__(self) -> Iterator[tuple]:
        ts = self.base.tuples
        for i in range(self.lo, self.hi):
            yield ts[i]

    def __repr__(self):
        return f"PrefixView({self.base!r}, {self.binding}, {len(self)})"


def prefix_select(rel: Relation, binding: Sequence[int] | dict = (), counters: Counters | None = None) -> PrefixView:
    """Select the tuples whose leading attributes equal ``binding``.

    ``binding`` is a value tuple for ``schema[:k]`` or a mapping from those
    attribute names to values.
    """
    if isinstance(binding, dict):
        k = len(binding)
        if set(binding) != set(rel.schema[:k]):
            raise RelationError(f"binding {sorted(binding)} is not a prefix of {rel.schema}")
        binding = tuple(binding[a] for a in rel.schema[:k])
    binding = tuple(binding)
    k = len(binding)
    if k > len(rel.schema):
        raise RelationError(f"binding of length {k} is longer than schema {rel.schema}")
    if counters is not None:
        counters.probes += 1
    if k == 0:
        return PrefixView(rel, binding, 0, len(rel.tuples))
    ts = rel.tuples
    lo = bisect_left(ts, binding)
    hi = bisect_right(ts, binding, lo=lo, key=lambda t: t[:k])
    return PrefixView(rel, binding, lo, hi)


def degree(rel: Relation, X: Iterable[str], Y: Iterable[str]) -> int:
    """max over X-bindings of the number of distinct Y-values (``deg(Y | X)``)."""
    X, Y = set(X), set(Y)
    if not X <= Y:
        raise RelationError(f"degree needs X ⊆ Y, got X={sorted(X)} Y={sorted(Y)}")
    for a in Y:
        rel.position(a)
    xs = [a for a in rel.schema if a in X]
    ys = xs + [a for a in rel.schema if a in Y and a not in X]
    proj = project(rel, ys)
    if not xs:
        return len(proj)
    k = len(xs)
    best = 0
    run = 0
    last = None
    for t in proj.tuples:  # sorted with X first, so groups are contiguous
        p = t[:k]
        if p == last:
            run += 1
        else:
            run, last = 1, p
        best = max(best, run)
    return best


def _gallop(ts, depth: int, lo: int, hi: int, target, counters: Counters | None) -> int:
    """First index in [lo, hi) whose value at ``depth`` is >= target (else ``hi``)."""
    if lo >= hi:
        return hi
    cmp = 1
    if ts[lo][depth] >= target:
        if counters is not None:
            counters.comparisons += cmp
        return lo
    # invariant: ts[prev] < target
    prev, step = lo, 1
    while True:
        pos = prev + step
        if pos >= hi:
            pos = hi
            break
        cmp += 1
        if ts[pos][depth] >= target:
            break
        prev = pos
        step <<= 1
    left, right = prev + 1, pos
    while left < right:
        mid = (left + right) // 2
        cmp += 1
        if ts[mid][depth] < target:
            left = mid + 1
        else:
            right = mid
    if counters is not None:
        counters.comparisons += cmp
    return left


def intersect_iter(views: Sequence[PrefixView], counters: Counters | None = None) -> Iterator[int]:
    """Sorted intersection of single-attribute views.

    The smallest view drives: each of its values is one probe, and each other
    view is advanced by one galloping seek (one probe) from its current
    position.  Probes are therefore at most ``len(smallest) * len(views)``;
    comparisons pick up the logarithmic factor.
    """
    if not views:
        raise ValueError("intersect_iter needs at least one view")
    for v in views:
        if len(v.residual) != 1:
            raise RelationError(f"view over {v.base.schema} leaves {len(v.residual)} attributes unbound")
    if any(len(v) == 0 for v in views):
        return
    order = sorted(range(len(views)), key=lambda i: (len(views[i]), i))
    driver = views[order[0]]
    others = [views[i] for i in order[1:]]
    cursors = [v.lo for v in others]
    dts = driver.base.tuples
    depth0 = len(driver.binding)
    for i in range(driver.lo, driver.hi):
        x = dts[i][depth0]
        if counters is not None:
            counters.probes += 1
        ok = True
        for k, v in enumerate(others):
            if counters is not None:
                counters.probes += 1
            ts = v.base.tuples
            d = len(v.binding)
            pos = _gallop(ts, d, cursors[k], v.hi, x, counters)
            cursors[k] = pos
            if pos >= v.hi:
                return
            if counters is not None:
                counters.comparisons += 1
            if ts[pos][d] != x:
                ok = False
                break
        if ok:
            yield x


def _getter(idx: Sequence[int]):
    """Key extractor for column positions; scalar keys for one column, tuples otherwise."""
    if len(idx) == 1:
        return itemgetter(idx[0])
    if not idx:
        return lambda t: ()
    return itemgetter(*idx)


def semijoin(rel: Relation, other: Relation) -> Relation:
    shared = [a for a in rel.schema if a in other._pos]
    if not shared:
        raise RelationError(f"semijoin of {rel.schema} and {other.schema} shares no attribute")
    okey = _getter([other.position(a) for a in shared])
    keyset = {okey(t) for t in other.tuples}
    key = _getter([rel.position(a) for a in shared])
    out = [t for t in rel.tuples if key(t) in keyset]
    return Relation.from_sorted(rel.schema, out, rel.name)


def hash_join(left: Relation, right: Relation, counters: Counters | None = None, name: str = "") -> Relation:
    """Natural join; output schema is left's followed by right's new attributes."""
    shared = [a for a in left.schema if a in right._pos]
    extra = [a for a in right.schema if a not in left._pos]
    schema = left.schema + tuple(extra)
    if not left.tuples or not right.tuples:
        return Relation.from_sorted(schema, [], name)
    rkey = _getter([right.position(a) for a in shared])
    rest = _getter([right.position(a) for a in extra])
    table = defaultdict(list)
    if len(extra) == 1:
        for t in right.tuples:
            table[rkey(t)].append((rest(t),))
    else:
        for t in right.tuples:
            table[rkey(t)].append(rest(t))
    lkey = _getter([left.position(a) for a in shared])
    out = []
    get = table.get
    for t in left.tuples:
        for r in get(lkey(t), ()):
            out.append(t + r)
    if counters is not None:
        counters.probes += len(left.tuples)
        counters.emitted += len(out)
    # right extensions follow right's order, not the extra attributes' order
    out.sort()
    return Relation.from_sorted(schema, out, name)


def partition_by_degree(rel: Relation, X: Iterable[str], theta) -> tuple[Relation, Relation]:
    """Split ``rel`` into tuples whose X-group has more than ``theta`` tuples and the rest."""
    if not theta > 0:
        raise RelationError(f"threshold must be positive, got {theta!r}")
    X = set(X)
    if not X < set(rel.schema):
        raise RelationError(f"partition attributes {sorted(X)} must be a proper subset of {rel.schema}")
    idx = [i for i, a in enumerate(rel.schema) if a in X]
    sizes = defaultdict(int)
    for t in rel.tuples:
        sizes[tuple(t[i] for i in idx)] += 1
    heavy_keys = {k for k, c in sizes.items() if c > theta}
    heavy, light = [], []
    for t in rel.tuples:
        (heavy if tuple(t[i] for i in idx) in heavy_keys else light).append(t)
    return (
        Relation.from_sorted(rel.schema, heavy, rel.name),
        Relation.from_sorted(rel.schema, light, rel.name),
    )
