"""Proof sequences for Shannon-flow inequalities.

A ledger maps conditional terms h(Y|X) to non-negative weights.  Three rules
rewrite it:

* ``sub``  (I, J):  h(I | I∩J)            -> h(I∪J | J)
* ``dec``  (Y, X):  h(Y | ∅)              -> h(Y | X) + h(X | ∅)
* ``comp`` (Y, X):  h(Y | X) + h(X | ∅)   -> h(Y | ∅)

A sequence proves ``h([n]) <= sum delta_{Y|X} h(Y|X)`` when it replays from
the ledger ``delta`` without any weight going negative and leaves weight at
least 1 on h([n]).  Subsets are bitmasks over a vertex order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

from .bounds import DualCertificate, crossing

__all__ = [
    "COMP",
    "DEC",
    "SUB",
    "CondTerm",
    "DeriveIncomplete",
    "InsufficientWeight",
    "ProofStep",
    "Replay",
    "apply_step",
    "derive",
    "format_sequence",
    "format_step",
    "h_mass",
    "ledger_from_delta",
    "mass_change",
    "parse_sequence",
    "validate",
]

SUB, DEC, COMP = "sub", "dec", "comp"


class CondTerm(NamedTuple):
    """h(Y | X) with X ⊊ Y, as bitmasks.  h(Y) is ``CondTerm(Y, 0)``."""

    Y: int
    X: int = 0

    def check(self) -> "CondTerm":
        if self.X & ~self.Y or self.X == self.Y:
            raise ValueError(f"conditional term needs X ⊊ Y, got Y={self.Y:b} X={self.X:b}")
        return self


class InsufficientWeight(ValueError):
    def __init__(self, term: CondTerm, have: Fraction, need: Fraction):
        self.term = term
        self.have = have
        self.need = need
        super().__init__(f"term h({term.Y:b}|{term.X:b}) carries {have}, step needs {need}")


class DeriveIncomplete(RuntimeError):
    pass


@dataclass(frozen=True)
class ProofStep:
    kind: str
    a: int  # I for sub, Y for dec/comp
    b: int  # J for sub, X for dec/comp
    weight: Fraction

    def __post_init__(self):
        object.__setattr__(self, "weight", Fraction(self.weight))
        if self.weight <= 0:
            raise ValueError(f"step weight must be positive, got {self.weight}")
        if self.kind == SUB:
            if not crossing(self.a, self.b):
                raise ValueError(f"submodularity needs I ⊥ J, got {self.a:b}, {self.b:b}")
        elif self.kind in (DEC, COMP):
            if not self.b or self.b & ~self.a or self.b == self.a:
                raise ValueError(f"{self.kind} needs ∅ ⊊ X ⊊ Y, got Y={self.a:b} X={self.b:b}")
        else:
            raise ValueError(f"unknown rule {self.kind!r}")

    def sources(self) -> list[CondTerm]:
        if self.kind == SUB:
            return [CondTerm(self.a, self.a & self.b)]
        if self.kind == DEC:
            return [CondTerm(self.a, 0)]
        return [CondTerm(self.a, self.b), CondTerm(self.b, 0)]

    def targets(self) -> list[CondTerm]:
        if self.kind == SUB:
            return [CondTerm(self.a | self.b, self.b)]
        if self.kind == DEC:
            return [CondTerm(self.a, self.b), CondTerm(self.b, 0)]
        return [CondTerm(self.a, 0)]

    def with_weight(self, w) -> "ProofStep":
        return ProofStep(self.kind, self.a, self.b, w)


Ledger = dict[CondTerm, Fraction]


def ledger_from_delta(delta: Mapping[tuple[int, int], object]) -> Ledger:
    """``delta`` keyed by (X, Y) pairs, as in :class:`DualCertificate`."""
    out: Ledger = {}
    for (X, Y), w in delta.items():
        w = Fraction(w)
        if w < 0:
            raise ValueError(f"negative initial weight at {(X, Y)}")
        if w:
            t = CondTerm(Y, X).check()
            out[t] = out.get(t, Fraction(0)) + w
    return out


def apply_step(ledger: Mapping[CondTerm, Fraction], step: ProofStep) -> Ledger:
    out = dict(ledger)
    w = step.weight
    for t in step.sources():
        have = out.get(t, Fraction(0))
        if have < w:
            raise InsufficientWeight(t, have, w)
    for t in step.sources():
        left = out[t] - w
        if left:
            out[t] = left
        else:
            del out[t]
    for t in step.targets():
        out[t] = out.get(t, Fraction(0)) + w
    return out


@dataclass
class Replay:
    ok: bool
    failed_at: int | None = None
    reason: str = ""
    ledger: Ledger = field(default_factory=dict)

    def __bool__(self):
        return self.ok


def validate(steps: Sequence[ProofStep], delta: Mapping[tuple[int, int], object], n: int) -> Replay:
    """Replay ``steps`` from ``delta``; ``failed_at == len(steps)`` means the target check failed."""
    ledger = ledger_from_delta(delta)
    full = (1 << n) - 1
    for i, step in enumerate(steps):
        if (step.a | step.b) & ~full:
            return Replay(False, i, f"step {i} mentions variables outside [n]", ledger)
        try:
            ledger = apply_step(ledger, step)
        except InsufficientWeight as e:
            return Replay(False, i, str(e), ledger)
    have = ledger.get(CondTerm(full, 0), Fraction(0))
    if have < 1:
        return Replay(False, len(steps), f"h([n]) ends with weight {have} < 1", ledger)
    return Replay(True, None, "", ledger)


# -- text format ---------------------------------------------------------------

_STEP_RE = re.compile(
    r"(sub)\s+I=\{([^}]*)\}\s+J=\{([^}]*)\}\s+w=(\S+)"
    r"|(dec|comp)\s+Y=\{([^}]*)\}\s+X=\{([^}]*)\}\s+w=(\S+)"
)


def _mask(names: str, vertices: Sequence[str]) -> int:
    m = 0
    for v in (s.strip() for s in names.split(",")):
        if v:
            if v not in vertices:
                raise ValueError(f"unknown variable {v!r}")
            m |= 1 << vertices.index(v)
    return m


def _names(mask: int, vertices: Sequence[str]) -> str:
    return ",".join(v for i, v in enumerate(vertices) if mask >> i & 1)


def parse_sequence(text: str, vertices: Sequence[str]) -> list[ProofStep]:
    from .query import ParseError

    vertices = list(vertices)
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _STEP_RE.fullmatch(line)
        if not m:
            raise ParseError(f"malformed proof step {line!r}", lineno)
        try:
            if m.group(1):
                steps.append(ProofStep(SUB, _mask(m.group(2), vertices), _mask(m.group(3), vertices),
                                       Fraction(m.group(4))))
            else:
                steps.append(ProofStep(m.group(5), _mask(m.group(6), vertices), _mask(m.group(7), vertices),
                                       Fraction(m.group(8))))
        except (ValueError, ZeroDivisionError) as e:
            raise ParseError(str(e), lineno) from None
    return steps


def format_step(step: ProofStep, vertices: Sequence[str]) -> str:
    a, b = _names(step.a, vertices), _names(step.b, vertices)
    if step.kind == SUB:
        return f"sub I={{{a}}} J={{{b}}} w={step.weight}"
    return f"{step.kind} Y={{{a}}} X={{{b}}} w={step.weight}"


def format_sequence(steps: Iterable[ProofStep], vertices: Sequence[str]) -> str:
    return "".join(format_step(s, vertices) + "\n" for s in steps)


# -- derivation from a dual certificate ---------------------------------------------

def _rules(cert: DualCertificate) -> dict[tuple[str, int, int], Fraction]:
    rules: dict[tuple[str, int, int], Fraction] = {}
    for (X, Y), a in cert.alpha.items():
        if a > 0:
            rules[(DEC, Y, X)] = a
        elif a < 0:
            rules[(COMP, Y, X)] = -a
    for (I, J), x in cert.xi.items():
        if x > 0:
            rules[(SUB, I, J)] = x
    return rules


_PRIORITY = {COMP: 0, SUB: 1, DEC: 2}


def _rule_order(key):
    return (_PRIORITY[key[0]], key[1], key[2])


def _sources(kind: str, a: int, b: int) -> list[CondTerm]:
    if kind == SUB:
        return [CondTerm(a, a & b)]
    if kind == DEC:
        return [CondTerm(a, 0)]
    return [CondTerm(a, b), CondTerm(b, 0)]


def _options(ledger, remaining):
    out = []
    for key in sorted(remaining, key=_rule_order):
        w = remaining[key]
        for t in _sources(*key):
            w = min(w, ledger.get(t, Fraction(0)))
        if w > 0:
            out.append((key, w, False))
    if out:
        return out
    # stuck: a pending composition may be waiting for an unconditional h(X)
    # that only a later step gives back; lend it out of some h(W), W ⊋ X
    for key in sorted(remaining, key=_rule_order):
        kind, Y, X = key
        if kind != COMP or remaining[key] <= 0:
            continue
        need = min(remaining[key], ledger.get(CondTerm(Y, X), Fraction(0)))
        if need <= 0 or ledger.get(CondTerm(X, 0), Fraction(0)) > 0:
            continue
        for t, have in sorted(ledger.items()):
            if t.X == 0 and t.Y != X and X & ~t.Y == 0 and have > 0:
                out.append(((DEC, t.Y, X), min(need, have), True))
    return out


def derive(cert: DualCertificate, n: int | None = None, budget: int | None = None) -> list[ProofStep]:
    """Serialize a dual-feasible certificate into a proof sequence.

    Depth-first search over orderings of the certificate's rules: any rule
    with unspent mass and positive weight on all its sources may fire, with
    the largest weight both allow (compositions first, decompositions last).
    When nothing can fire, an unconditional term may be lent out of a larger
    one by a decomposition whose matching composition is added as a rule.
    The search stops as soon as h([n]) reaches weight 1 and raises
    :class:`DeriveIncomplete` after ``budget`` (default 10 x the number of
    nonzero certificate entries) rule applications.
    """
    n = cert.n if n is None else n
    full = (1 << n) - 1
    target = CondTerm(full, 0)
    start = ledger_from_delta(cert.delta)
    if start.get(target, 0) >= 1:
        return []
    rules = _rules(cert)
    nnz = len(cert.delta) + len(cert.xi) + len(cert.alpha)
    budget = 10 * max(nnz, 1) if budget is None else budget
    tried = 0
    stack = [(start, rules, [], _options(start, rules), 0)]
    seen = set()
    while stack:
        ledger, remaining, steps, opts, i = stack.pop()
        if i >= len(opts):
            continue
        stack.append((ledger, remaining, steps, opts, i + 1))
        tried += 1
        if tried > budget:
            break
        key, w, loan = opts[i]
        step = ProofStep(*key, w)
        nxt = apply_step(ledger, step)
        rem = dict(remaining)
        if loan:
            back = (COMP, key[1], key[2])
            rem[back] = rem.get(back, Fraction(0)) + w
        else:
            rem[key] -= w
            if not rem[key]:
                del rem[key]
        state = (frozenset(nxt.items()), frozenset(rem.items()))
        if state in seen:
            continue
        seen.add(state)
        new_steps = steps + [step]
        if nxt.get(target, 0) >= 1:
            return new_steps
        stack.append((nxt, rem, new_steps, _options(nxt, rem), 0))
    raise DeriveIncomplete(f"no proof sequence found within {budget} rule applications")


def h_mass(ledger: Mapping[CondTerm, Fraction]) -> Fraction:
    return sum(ledger.values(), Fraction(0))


def mass_change(step: ProofStep) -> Fraction:
    """Change of total ledger weight caused by one step."""
    return {SUB: Fraction(0), DEC: step.weight, COMP: -step.weight}[step.kind]
