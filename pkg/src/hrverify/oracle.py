"""Brute-force ground truth on small instances of a grammar.

Everything here works on concrete systems and their behaviors; the
abstractions are only consulted to compare verdicts.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Hashable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .behaviors import beta
from .counting import (
    COVERABLE,
    SAFE,
    UNCOVERABLE,
    CountingAbstraction,
    InitNet,
    verify_cover,
    verify_reach,
)
from .grammar import HrGrammar, Query, Ref, Term, children, eval_term, rebuild, refs, show
from .pebble import PebbleError, check_pebble_signature, decide_cover_pps, decide_cover_term, pebble_target
from .petri import forward_search
from .systems import OpenSystem, Signature, SystemAlgebra, canonical_key, isomorphic

COVERED = "covered"
NOT_COVERED = "not-covered"
INCONCLUSIVE = "inconclusive"

DEFAULT_MAX_VERTICES = 8
DEFAULT_STATE_CAP = 10**6


# --------------------------------------------------------------------------
# instances


class _Pool:
    """Systems of one nonterminal, unique up to isomorphism."""

    def __init__(self) -> None:
        self.items: list[tuple[Term, OpenSystem]] = []
        self._buckets: dict[str, list[OpenSystem]] = {}

    def add(self, term: Term, s: OpenSystem) -> bool:
        bucket = self._buckets.setdefault(canonical_key(s), [])
        if any(isomorphic(s, r) for r in bucket):
            return False
        bucket.append(s)
        self.items.append((term, s))
        return True


def _plug(rhs: Term, parts: Sequence[Term]) -> Term:
    it = iter(parts)

    def go(t: Term) -> Term:
        if isinstance(t, Ref):
            return next(it)
        return rebuild(t, tuple(go(c) for c in children(t)))

    return go(rhs)


def enumerate_instances(g: HrGrammar, sig: Signature, max_vertices: int) -> list[tuple[Term, OpenSystem]]:
    """All systems of the language with at most ``max_vertices`` vertices.

    Bottom-up fixpoint over concrete systems.  Truncating at the vertex bound
    is exact because no operation removes vertices.  Each system comes with
    a ground term that evaluates to it.
    """
    if max_vertices < 1:
        raise ValueError("max_vertices must be at least 1")
    alg = SystemAlgebra(sig)
    pools: dict[Hashable, _Pool] = {x: _Pool() for x in g.nonterminals}
    seen: set[tuple] = set()
    changed = True
    while changed:
        changed = False
        for ri, r in enumerate(g.rules):
            names = refs(r.rhs)
            choices = [list(range(len(pools[n].items))) for n in names]
            for combo in itertools.product(*choices):
                key = (ri, combo)
                if key in seen:
                    continue
                seen.add(key)
                parts = [pools[n].items[i][0] for n, i in zip(names, combo)]
                term = _plug(r.rhs, parts)
                s = eval_term(term, alg)
                if len(s.vlabel) > max_vertices:
                    continue
                if pools[r.lhs].add(term, s):
                    changed = True
    out = _Pool()
    for a in g.axioms:
        for term, s in pools[a].items:
            out.add(term, s)
    return sorted(out.items, key=lambda ts: (len(ts[1].vlabel), show(ts[0])))


# --------------------------------------------------------------------------
# concrete semantics


def _count_groups(s: OpenSystem, sig: Signature, query: Query, net_places: Sequence) -> list[tuple[list[int], int]]:
    idx = {p: i for i, p in enumerate(net_places)}
    src = s.source_map
    groups = []
    for a in query.atoms:
        if a.sigma is not None:
            vs = [src[a.sigma]] if a.sigma in src else []
        else:
            vs = [v for v in s.vertices if s.vlabel[v] == a.ptype]
        groups.append(([idx[(a.place, v)] for v in vs], a.count))
    return groups


def concrete_cover(s: OpenSystem, sig: Signature, query: Query, state_cap: int = DEFAULT_STATE_CAP) -> str:
    """Exhaustive search over the behavior of ``s`` for a covering marking."""
    pn = beta(s, sig).pn
    groups = _count_groups(s, sig, query, pn.net.places)
    if query.kind == "reach":

        def goal(v: tuple[int, ...]) -> bool:
            return all(sum(v[i] for i in ids) == k for ids, k in groups)

    else:

        def goal(v: tuple[int, ...]) -> bool:
            return all(sum(v[i] for i in ids) >= k for ids, k in groups)

    res = forward_search(pn, goal, state_cap)
    if res.found is None:
        return INCONCLUSIVE
    return COVERED if res.found else NOT_COVERED


# --------------------------------------------------------------------------
# soundness report


@dataclass
class InstanceResult:
    index: int
    term: Term
    vertices: int
    concrete: dict[str, str]
    pebble: dict[str, str] = field(default_factory=dict)


@dataclass
class OracleReport:
    name: str
    max_vertices: int
    state_cap: int
    instances: list[InstanceResult]
    abstract: list[tuple[str, str, str]]
    discrepancies: list[str]
    notes: list[str]
    queries: int = 0

    @property
    def ok(self) -> bool:
        return not self.discrepancies

    def lines(self) -> list[str]:
        out = [
            f"ORACLE grammar={self.name} max_vertices={self.max_vertices} "
            f"state_cap={self.state_cap} instances={len(self.instances)}"
        ]
        for r in self.instances:
            out.append(f"INSTANCE {r.index} vertices={r.vertices} term={show(r.term)}")
            for qid, v in r.concrete.items():
                extra = f" pebble={r.pebble[qid]}" if qid in r.pebble else ""
                out.append(f"RESULT {r.index} {qid} {v}{extra}")
        for qid, mode, answer in self.abstract:
            out.append(f"ABSTRACT {qid} {mode} {answer}")
        out += [f"NOTE {n}" for n in self.notes]
        out += [f"DISCREPANCY {d}" for d in self.discrepancies]
        out.append(
            f"SUMMARY instances={len(self.instances)} queries={self.queries} "
            f"discrepancies={len(self.discrepancies)}"
        )
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def _check_instance(args: tuple) -> tuple[dict[str, str], dict[str, str]]:
    s, term, sig, queries, state_cap, pebble_targets = args
    concrete = {q.qid: concrete_cover(s, sig, q, state_cap) for q in queries}
    pebble = {}
    for q in queries:
        if q.qid in pebble_targets:
            hit = decide_cover_term(term, sig, pebble_targets[q.qid])
            pebble[q.qid] = COVERED if hit else NOT_COVERED
    return concrete, pebble


def check_soundness(
    g: HrGrammar,
    sig: Signature,
    queries: Iterable[Query],
    max_vertices: int = DEFAULT_MAX_VERTICES,
    state_cap: int = DEFAULT_STATE_CAP,
    *,
    name: str = "grammar",
    modes: Iterable[str] = ("counting", "pebble"),
    reach_bound: int = 10**4,
    mutate_init: Callable[[InitNet], InitNet] | None = None,
    jobs: int = 1,
) -> OracleReport:
    """Compare concrete verdicts on small instances against the abstractions.

    A discrepancy is a concrete cover (or reach) that the counting
    abstraction calls SAFE, or any disagreement between the pebble algebra
    and the concrete verdict.
    """
    queries = list(queries)
    modes = set(modes)
    instances = enumerate_instances(g, sig, max_vertices)
    pebble_targets: dict[str, dict[str, int]] = {}
    if "pebble" in modes and check_pebble_signature(sig, g).verdict:
        for q in queries:
            if q.kind != "cover":
                continue
            try:
                pebble_targets[q.qid] = pebble_target(q, sig)
            except PebbleError:
                pass
    work = [(s, t, sig, queries, state_cap, pebble_targets) for t, s in instances]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            checked = list(ex.map(_check_instance, work))
    else:
        checked = [_check_instance(w) for w in work]
    results = [
        InstanceResult(i, t, len(s.vlabel), c, p) for i, ((t, s), (c, p)) in enumerate(zip(instances, checked))
    ]

    abstract: list[tuple[str, str, str]] = []
    disc: list[str] = []
    notes: list[str] = []
    if "counting" in modes:
        abstraction = CountingAbstraction(g, sig, mutate_init=mutate_init)
        for q in queries:
            v = verify_cover(abstraction, q) if q.kind == "cover" else verify_reach(abstraction, q, reach_bound)
            abstract.append((q.qid, "counting", v.answer))
            if v.answer != SAFE:
                continue
            lemma = "soundness" if q.kind == "cover" else "reach-soundness"
            for r in results:
                if r.concrete[q.qid] == COVERED:
                    disc.append(f"lemma={lemma} query={q.qid} instance={r.index} term={show(r.term)}")
    for q in queries:
        if q.qid not in pebble_targets:
            continue
        v = decide_cover_pps(g, sig, q)
        abstract.append((q.qid, "pebble", v.answer))
        any_cover = False
        for r in results:
            c, p = r.concrete[q.qid], r.pebble[q.qid]
            any_cover = any_cover or c == COVERED
            if c != INCONCLUSIVE and c != p:
                disc.append(f"lemma=pebble-exactness query={q.qid} instance={r.index} term={show(r.term)}")
        if any_cover and v.answer != COVERABLE:
            disc.append(f"lemma=pebble-completeness query={q.qid} instance=* term=*")
        if v.answer == COVERABLE and not any_cover and results:
            notes.append(f"query={q.qid} covered only beyond {max_vertices} vertices")
        if v.answer == UNCOVERABLE and not results:
            notes.append(f"query={q.qid} empty language")
    for r in results:
        for qid, c in r.concrete.items():
            if c == INCONCLUSIVE:
                notes.append(f"query={qid} instance={r.index} state cap reached")
    return OracleReport(name, max_vertices, state_cap, results, abstract, disc, notes, len(queries))
