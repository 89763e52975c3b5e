"""Command-line front end.  Reports go to stdout as JSON, diagnostics to stderr.

Exit codes: 0 success, 1 failed check (database validation, proof
validation), 2 parse or input error, 3 cyclic constraints or incompatible
order, 4 unbounded, 5 no proof sequence derived.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from .bounds import (
    DualCertificate,
    SizeLimitError,
    agm_bound,
    frac_str,
    modular_bound,
    polymatroid_bound,
    shannon_flow_dual,
    tuples_from_log,
)
from .executor import OrderError, annotate, backtrack_join, bruteforce_join, panda_interpret, triangle_heavy_light
from .proof import DeriveIncomplete, derive, format_sequence, parse_sequence, validate
from .query import (
    CyclicError,
    ParseError,
    UnboundedError,
    acyclicize,
    dependency_graph,
    find_cycle,
    format_constraints,
    parse_constraints,
    parse_query,
    topological_order,
    validate_db,
)
from .relation import Dictionary, RelationError, load_csv, write_csv
from .workbench import GenSpec, gen_agm_tight, gen_grid_triangle, gen_random, write_db

EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_CYCLIC, EXIT_UNBOUNDED, EXIT_DERIVE = 0, 1, 2, 3, 4, 5


class _Fail(Exception):
    def __init__(self, code: int, message: str, **extra):
        super().__init__(message)
        self.code = code
        self.extra = extra


def _emit(report: dict, args) -> None:
    if not args.deterministic:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()
    else:
        report.pop("wall_time_s", None)
    json.dump(report, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")


def _load_query(path):
    return parse_query(Path(path).read_text())


def _load_constraints(path, query):
    return parse_constraints(Path(path).read_text(), query)


def _load_db(query, directory):
    directory = Path(directory)
    dictionary = Dictionary()
    db = {}
    for a in query.atoms:
        if a.relation in db:
            continue
        path = directory / f"{a.relation}.csv"
        if not path.is_file():
            raise FileNotFoundError(f"no such relation file: {path}")
        with path.open(newline="", encoding="utf-8") as fh:
            header = [h.strip() for h in next(csv.reader(fh), [])]
        db[a.relation] = load_csv(path, header, dictionary, a.relation)
    return db, dictionary


def _names(query, mask):
    return list(query.names(mask))


def _cert_json(cert: DualCertificate) -> dict:
    return json.loads(cert.to_json())


# -- commands --------------------------------------------------------------------

def cmd_bound(args) -> dict:
    query = _load_query(args.query)
    dc = _load_constraints(args.constraints, query)
    report = {"command": "bound", "method": args.method}
    if args.method == "agm":
        sizes = {}
        for c in dc:
            if c.is_cardinality and c.guard and set(query.atom(c.guard).variables) == c.Y:
                sizes[c.guard] = min(c.N, sizes.get(c.guard, c.N))
        res = agm_bound(query.edges, [sizes.get(a.relation) for a in query.atoms], query.head)
        report.update(value_log2=frac_str(res.value), tuples=res.tuples,
                      cover={a.relation: frac_str(w) for a, w in zip(query.atoms, res.cover)})
    elif args.method == "modular":
        res = modular_bound(dc, query.head)
        report.update(value_log2=frac_str(res.value), tuples=res.tuples, acyclic=res.acyclic,
                      v={k: frac_str(x) for k, x in res.v.items()})
        if not res.acyclic:
            report["warning"] = "constraints are cyclic; the modular value need not bound the output"
    elif args.method == "polymatroid":
        res = polymatroid_bound(dc, query.head)
        report.update(value_log2=frac_str(res.value), tuples=res.tuples)
    else:
        cert = shannon_flow_dual(dc, query.head)
        report.update(value_log2=frac_str(cert.value), tuples=tuples_from_log(cert.value),
                      certificate=_cert_json(cert))
        if args.cert_out:
            Path(args.cert_out).write_text(cert.to_json() + "\n")
    return report


def _sequence_for(args, query, dc):
    """(steps, delta) from --seq/--delta, or derived from the optimal certificate."""
    if args.seq:
        steps = parse_sequence(Path(args.seq).read_text(), query.head)
        delta = _delta_from(args.delta, query, dc)
        return steps, delta
    cert = shannon_flow_dual(dc, query.head)
    return derive(cert), cert.delta


def _delta_from(spec, query, dc):
    if spec in (None, "dual"):
        return shannon_flow_dual(dc, query.head).delta
    if Path(spec).is_file():
        return DualCertificate.from_json(Path(spec).read_text()).delta
    try:
        w = Fraction(spec)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"--delta must be 'dual', a rational weight or a certificate file, got {spec!r}") from None
    return {(query.mask(c.X), query.mask(c.Y)): w for c in dc}


def cmd_run(args) -> dict:
    query = _load_query(args.query)
    dc = _load_constraints(args.constraints, query)
    db, dictionary = _load_db(query, args.data)
    report = {"command": "run", "algorithm": args.algo}
    if not args.no_validate:
        check = validate_db(query, dc, db)
        if not check.ok:
            bad = [{"constraint": str(r["constraint"]), "declared": r["declared"], "actual": r["actual"]}
                   for r in check.rows if not r["ok"]]
            raise _Fail(EXIT_CHECK, "database violates the declared constraints", violations=bad)
    t0 = time.perf_counter()
    if args.algo == "backtrack":
        try:
            order = args.order.split(",") if args.order else topological_order(dc, query.head)
        except CyclicError as e:
            raise _Fail(EXIT_CYCLIC, "ORDER_INCOMPATIBLE: constraints are cyclic; run `acyclicize` first",
                        witness=e.cycle) from None
        ex = backtrack_join(query, dc, db, order)
    elif args.algo == "heavy-light":
        if len(query.atoms) != 3:
            raise _Fail(EXIT_PARSE, "heavy-light needs a triangle query with three binary atoms")
        R, S, T = query.bind(db)
        ex = triangle_heavy_light(R, S, T)
    elif args.algo == "panda":
        steps, delta = _sequence_for(args, query, dc)
        ex = panda_interpret(query, dc, db, annotate(query, dc, steps, delta), delta)
    else:
        ex = bruteforce_join(query, db)
    report["wall_time_s"] = round(time.perf_counter() - t0, 6)
    rel = ex.relation
    if rel.schema != query.head:
        rel = rel.index(query.head)
    report.update(ex.report())
    report["cardinality"] = len(rel)
    try:
        report["bound_log2"] = {"polymatroid": frac_str(polymatroid_bound(dc, query.head).value)}
    except (SizeLimitError, UnboundedError):
        pass
    if args.out:
        write_csv(rel, args.out, dictionary)
        report["output"] = str(args.out)
    return report


def cmd_acyclicize(args) -> dict:
    query = _load_query(args.query)
    dc = _load_constraints(args.constraints, query)
    cycle = find_cycle(dependency_graph(dc), query.head)
    new = acyclicize(dc, query.head)
    text = format_constraints(new, query)
    report = {
        "command": "acyclicize",
        "cyclic": cycle is not None,
        "witness": cycle,
        "bound_log2_before": frac_str(polymatroid_bound(dc, query.head).value),
        "bound_log2_after": frac_str(modular_bound(new, query.head).value),
        "constraints": text.splitlines(),
    }
    if args.out:
        Path(args.out).write_text(text)
        report["output"] = str(args.out)
    return report


def cmd_proof(args) -> dict:
    query = _load_query(args.query)
    dc = _load_constraints(args.constraints, query)
    report = {"command": "proof", "action": args.action}
    if args.action == "derive":
        cert = shannon_flow_dual(dc, query.head)
        try:
            steps = derive(cert)
        except DeriveIncomplete as e:
            raise _Fail(EXIT_DERIVE, f"DERIVE_INCOMPLETE: {e}") from None
        text = format_sequence(steps, query.head)
        report.update(steps=len(steps), sequence=text.splitlines(), value_log2=frac_str(cert.value))
        if args.out:
            Path(args.out).write_text(text)
            report["output"] = str(args.out)
        return report
    if not args.seq:
        raise _Fail(EXIT_PARSE, "validate needs --seq")
    steps = parse_sequence(Path(args.seq).read_text(), query.head)
    delta = _delta_from(args.delta, query, dc)
    replay = validate(steps, delta, query.n)
    report.update(valid=replay.ok, failed_at=replay.failed_at, reason=replay.reason or None, steps=len(steps))
    if not replay.ok:
        raise _Fail(EXIT_CHECK, "proof sequence does not validate", **report)
    return report


def cmd_gen(args) -> dict:
    if args.kind == "grid-triangle":
        if args.m is None:
            raise _Fail(EXIT_PARSE, "grid-triangle needs --m")
        db = gen_grid_triangle(args.m)
        spec = GenSpec("grid-triangle", m=args.m, seed=args.seed)
    else:
        if not args.query:
            raise _Fail(EXIT_PARSE, f"{args.kind} needs --query")
        qtext = Path(args.query).read_text()
        query = parse_query(qtext)
        if args.kind == "agm-tight":
            if args.N is None:
                raise _Fail(EXIT_PARSE, "agm-tight needs --N")
            db, _ = gen_agm_tight(query, args.N)
            spec = GenSpec("agm-tight", query=qtext.strip(), N=args.N, seed=args.seed)
        else:
            sizes = {}
            for item in (args.sizes or "").split(","):
                if item.strip():
                    k, _, v = item.partition("=")
                    sizes[k.strip()] = int(v)
            missing = [a.relation for a in query.atoms if a.relation not in sizes]
            if missing:
                raise _Fail(EXIT_PARSE, f"--sizes lacks {missing}")
            db = gen_random(query, sizes, args.seed, args.domain)
            spec = GenSpec("random", query=qtext.strip(), sizes=sizes, seed=args.seed, domain=args.domain)
    out = write_db(db, args.out, spec)
    return {"command": "gen", "kind": args.kind, "directory": str(out),
            "relations": {k: len(v) for k, v in sorted(db.items())}}


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wcoj", description="Output-size bounds and worst-case optimal joins.")
    p.add_argument("--deterministic", action="store_true", help="omit timestamps and wall times")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="compute an output-size bound")
    b.add_argument("query")
    b.add_argument("constraints")
    b.add_argument("--method", choices=["agm", "modular", "polymatroid", "dual"], default="polymatroid")
    b.add_argument("--cert-out", help="write the dual certificate here (method=dual)")
    b.set_defaults(func=cmd_bound)

    r = sub.add_parser("run", help="evaluate the query")
    r.add_argument("query")
    r.add_argument("constraints")
    r.add_argument("data", help="directory with one <relation>.csv per relation")
    r.add_argument("--algo", choices=["backtrack", "heavy-light", "panda", "bruteforce"], default="backtrack")
    r.add_argument("--order", help="variable order for backtrack, e.g. A,B,C")
    r.add_argument("--seq", help="proof sequence for panda (default: derived)")
    r.add_argument("--delta", help="initial weights for --seq: 'dual', a rational, or a certificate file")
    r.add_argument("--no-validate", action="store_true", help="skip checking the data against the constraints")
    r.add_argument("--out", help="write the output tuples as CSV")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("acyclicize", help="relax cyclic constraints to an acyclic set")
    a.add_argument("query")
    a.add_argument("constraints")
    a.add_argument("--out")
    a.set_defaults(func=cmd_acyclicize)

    pr = sub.add_parser("proof", help="derive or validate a proof sequence")
    pr.add_argument("action", choices=["derive", "validate"])
    pr.add_argument("query")
    pr.add_argument("constraints")
    pr.add_argument("--seq")
    pr.add_argument("--delta")
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_proof)

    g = sub.add_parser("gen", help="generate a database")
    g.add_argument("--kind", choices=["grid-triangle", "agm-tight", "random"], required=True)
    g.add_argument("--m", type=int)
    g.add_argument("--query")
    g.add_argument("--N", type=int)
    g.add_argument("--sizes", help="R=100,S=50,...")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--domain", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.func(args)
    except _Fail as e:
        print(f"error: {e}", file=sys.stderr)
        _emit({"command": args.command, "error": str(e), **e.extra}, args)
        return e.code
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        _emit({"command": args.command, "error": str(e), "line": e.line}, args)
        return EXIT_PARSE
    except (FileNotFoundError, RelationError) as e:
        print(f"input error: {e}", file=sys.stderr)
        _emit({"command": args.command, "error": str(e)}, args)
        return EXIT_PARSE
    except (CyclicError, OrderError) as e:
        print(f"error: {e}", file=sys.stderr)
        _emit({"command": args.command, "error": f"ORDER_INCOMPATIBLE: {e}", "witness": getattr(e, "cycle", None)},
              args)
        return EXIT_CYCLIC
    except UnboundedError as e:
        print(f"unbounded: {e}", file=sys.stderr)
        _emit({"command": args.command, "error": "UNBOUNDED", "unbound": sorted(e.unbound)}, args)
        return EXIT_UNBOUNDED
    _emit(report, args)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
