"""Command-line entry point: ``hrverify check|export|oracle|report``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .counting import (
    COVERABLE,
    EXPORTED,
    SAFE,
    UNCOVERABLE,
    UNKNOWN_COVERABLE,
    CountingAbstraction,
    Verdict,
    place_group,
    verify_cover,
    verify_reach,
)
from .grammar import ParseError, Query, Spec, parse_spec, show
from .netio import ExportError, reach_predicate, write_lola, write_pnml
from .oracle import COVERED, DEFAULT_MAX_VERTICES, DEFAULT_STATE_CAP, check_soundness, concrete_cover, enumerate_instances
from .pebble import PebbleError, check_pebble_signature, decide_cover_pps, pebble_target
from .petri import MarkingOverflow

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2

ANSWER_TEXT = {
    SAFE: "SAFE",
    UNKNOWN_COVERABLE: "UNKNOWN(coverable-in-abstraction)",
    COVERABLE: "COVERABLE",
    UNCOVERABLE: "UNCOVERABLE",
    EXPORTED: "EXPORTED",
}
_EXPECT_OK = {
    "SAFE": {SAFE, UNCOVERABLE},
    "UNCOVERABLE": {UNCOVERABLE, SAFE},
    "UNKNOWN": {UNKNOWN_COVERABLE},
    "COVERABLE": {COVERABLE},
    "EXPORTED": {EXPORTED},
}


class CliError(Exception):
    pass


def load_spec(path: str | Path) -> Spec:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise CliError(f"{p}: {e.strerror or e}") from None
    try:
        return parse_spec(text)
    except ParseError as e:
        raise CliError("\n".join(f"{p}:{d}" for d in e.diagnostics)) from None


def pebble_applicable(spec: Spec) -> bool:
    if not check_pebble_signature(spec.signature, spec.grammar).verdict:
        return False
    for q in spec.queries:
        if q.kind != "cover":
            return False
        try:
            pebble_target(q, spec.signature)
        except PebbleError:
            return False
    return True


def select_mode(spec: Spec, mode: str) -> str:
    if mode == "auto":
        return "pebble" if pebble_applicable(spec) else "counting"
    return mode


def expectation_met(q: Query, v: Verdict) -> bool:
    """True when the verdict meets the declared expectation, or is safe."""
    if q.expect is None:
        return v.answer in (SAFE, UNCOVERABLE)
    return v.answer in _EXPECT_OK[q.expect]


@dataclass
class Outcome:
    query: Query
    verdict: Verdict
    seconds: float


def run_queries(
    spec: Spec,
    mode: str = "auto",
    bounded_reach: int = 10**4,
    abstraction: CountingAbstraction | None = None,
) -> tuple[str, list[Outcome]]:
    """Answer every query of ``spec``; ``bounded_reach`` 0 exports reach queries."""
    chosen = select_mode(spec, mode)
    ab = abstraction or CountingAbstraction(spec.grammar, spec.signature)
    out = []
    for q in spec.queries:
        t0 = time.perf_counter()
        if chosen == "pebble":
            v = decide_cover_pps(spec.grammar, spec.signature, q)
        elif q.kind == "cover":
            v = verify_cover(ab, q)
        elif bounded_reach > 0:
            v = verify_reach(ab, q, bounded_reach)
        else:
            v = Verdict(q.qid, "exported", EXPORTED, detail="export the nets for an external checker")
        out.append(Outcome(q, v, time.perf_counter() - t0))
    return chosen, out


def emit_nets(spec: Spec, stem: str, fmt: str, out_dir: Path, ab: CountingAbstraction | None = None) -> list[Path]:
    """One file per combined net; reach queries add a predicate file per net."""
    ab = ab or CountingAbstraction(spec.grammar, spec.signature)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"{out_dir}: {e.strerror or e}") from None
    written = []
    for e in ab.entries:
        base = out_dir / f"{stem}_net{e.index}"
        if fmt == "lola":
            path, text = base.with_suffix(".lola"), write_lola(e.combined.pn)
        else:
            path, text = base.with_suffix(".pnml"), write_pnml(e.combined.pn, f"{stem}_net{e.index}")
        written.append(_write(path, text))
        for q in spec.queries:
            if q.kind != "reach":
                continue
            groups = [(place_group(e.folded, a.ptype, a.place, a.sigma, spec.signature), a.count) for a in q.atoms]
            pred = out_dir / f"{stem}_net{e.index}_{q.qid}.formula"
            written.append(_write(pred, reach_predicate(e.combined, groups)))
    return written


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as e:
        raise CliError(f"{path}: {e.strerror or e}") from None
    return path


def _pebble_witness(spec: Spec, q: Query, max_vertices: int, state_cap: int) -> list[str]:
    for term, s in enumerate_instances(spec.grammar, spec.signature, max_vertices):
        if concrete_cover(s, spec.signature, q, state_cap) == COVERED:
            return [f"  instance ({len(s.vlabel)} vertices): {show(term)}"]
    return [f"  no instance with at most {max_vertices} vertices covers the target"]


def cmd_check(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    stem = Path(args.spec).stem
    ab = CountingAbstraction(spec.grammar, spec.signature)
    if args.mode == "pebble" and not pebble_applicable(spec):
        chk = check_pebble_signature(spec.signature, spec.grammar)
        why = chk.offending or "a query is not a cover query over unpinned places"
        raise CliError(f"{args.spec}: pebble mode does not apply: {why}")
    mode, outcomes = run_queries(spec, args.mode, args.bounded_reach, ab)
    status = EXIT_OK
    for o in outcomes:
        print(f"QUERY {o.query.qid}: {ANSWER_TEXT[o.verdict.answer]}")
        if args.witness:
            w = o.verdict.witness
            if w is not None:
                labels = ab.entries[w.net_index].combined.labels
                print("\n".join("  " + line for line in w.lines(labels)))
            elif o.verdict.answer == COVERABLE:
                print("\n".join(_pebble_witness(spec, o.query, args.max_vertices, args.state_cap)))
        if not expectation_met(o.query, o.verdict):
            status = EXIT_VIOLATION
    if args.emit_lola:
        emit_nets(spec, stem, "lola", Path(args.emit_lola), ab)
    if args.emit_pnml:
        emit_nets(spec, stem, "pnml", Path(args.emit_pnml), ab)
    logging.getLogger(__name__).info("mode %s", mode)
    return status


def cmd_export(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    for p in emit_nets(spec, Path(args.spec).stem, args.format, Path(args.out)):
        print(p)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    modes = ("counting", "pebble") if args.mode == "auto" else (args.mode,)
    rep = check_soundness(
        spec.grammar,
        spec.signature,
        spec.queries,
        args.max_vertices,
        args.state_cap,
        name=Path(args.spec).stem,
        modes=modes,
        reach_bound=args.bounded_reach or 10**4,
        jobs=args.jobs,
    )
    text = rep.text()
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def cmd_report(args: argparse.Namespace) -> int:
    from .report import Row, to_tsv, write_report

    rows = []
    status = EXIT_OK
    for path in args.specs:
        spec = load_spec(path)
        ab = CountingAbstraction(spec.grammar, spec.signature)
        mode, outcomes = run_queries(spec, args.mode, args.bounded_reach, ab)
        sizes = [(len(e.combined.pn.net.places), len(e.combined.pn.net.transitions)) for e in ab.entries]
        for o in outcomes:
            met = expectation_met(o.query, o.verdict)
            if not met:
                status = EXIT_VIOLATION
            rows.append(
                Row(
                    Path(path).stem,
                    o.query.qid,
                    o.query.kind,
                    o.verdict.mode,
                    o.verdict.answer,
                    o.query.expect or "",
                    met,
                    len(sizes),
                    max((p for p, _ in sizes), default=0),
                    max((t for _, t in sizes), default=0),
                    o.seconds,
                )
            )
    sys.stdout.write(to_tsv(rows))
    for p in write_report(rows, Path(args.out)):
        print(f"# wrote {p}", file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hrverify", description="Parameterized coverability for grammar-defined systems.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--mode", choices=("auto", "counting", "pebble"), default="auto")
        p.add_argument("--max-vertices", type=int, default=DEFAULT_MAX_VERTICES)
        p.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP)
        p.add_argument("--bounded-reach", type=int, default=10**4, help="state cap for reach queries; 0 exports them")

    c = sub.add_parser("check", help="answer the queries of a spec")
    c.add_argument("spec")
    common(c)
    c.add_argument("--witness", action="store_true")
    c.add_argument("--emit-lola", metavar="DIR")
    c.add_argument("--emit-pnml", metavar="DIR")
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("export", help="write the combined nets")
    e.add_argument("spec")
    e.add_argument("--format", choices=("lola", "pnml"), default="lola")
    e.add_argument("--out", required=True, metavar="DIR")
    e.set_defaults(func=cmd_export)

    o = sub.add_parser("oracle", help="compare abstract verdicts with brute force")
    o.add_argument("spec")
    common(o)
    o.add_argument("--jobs", type=int, default=1)
    o.add_argument("--out", metavar="FILE")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("report", help="verdict table and figures for several specs")
    r.add_argument("specs", nargs="+")
    common(r)
    r.add_argument("--out", required=True, metavar="DIR")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ExportError, PebbleError, MarkingOverflow) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
