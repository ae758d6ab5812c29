"""Counting abstraction: per-net filtering, initial-marking nets, verdicts."""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Hashable, Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

from .behaviors import FoldedAlgebra, FoldedNet, PlaceKey, class_place, source_place
from .grammar import (
    Edge,
    FilteredGrammar,
    HrGrammar,
    Query,
    Ref,
    Restrict,
    Tagged,
    annotate,
    children,
    filter_grammar,
    kleene_language,
    normalize,
    show,
)
from .petri import (
    CoverResult,
    Marking,
    Net,
    PetriNet,
    backward_coverable_any,
    forward_search,
)
from .systems import Signature

log = logging.getLogger(__name__)

SAFE = "SAFE"
UNKNOWN_COVERABLE = "UNKNOWN_COVERABLE"
COVERABLE = "COVERABLE"
UNCOVERABLE = "UNCOVERABLE"
EXPORTED = "EXPORTED"


@dataclass(frozen=True, order=True)
class NtPlace:
    """Place of an annotated nonterminal ``name`` with visible set ``tau``."""

    name: str
    tau: tuple[str, ...]

    def __repr__(self) -> str:
        return f"NT({self.name},{{{','.join(self.tau)}}})"


START = "S"


def nt_place(x: Tagged) -> NtPlace:
    return NtPlace(str(x.base), tuple(sorted(_tau_of_tag(x.tag))))


def _tau_of_tag(tag: str) -> list[str]:
    inner = tag.strip("{}")
    return [s for s in inner.split(",") if s]


@dataclass(frozen=True)
class InitNet:
    pn: PetriNet
    labels: Mapping[str, str] = field(hash=False)
    axiom_tau: Mapping[str, frozenset[str]] = field(hash=False)

    @property
    def nonterminal_places(self) -> list[Hashable]:
        return [p for p in self.pn.net.places if isinstance(p, NtPlace)]


@dataclass(frozen=True)
class CombinedNet:
    pn: PetriNet
    init_transitions: frozenset[str]
    behavior_transitions: frozenset[str]
    labels: Mapping[str, str] = field(hash=False)


@dataclass(frozen=True)
class Witness:
    net_index: int
    init_prefix: tuple[str, ...]
    behavior_suffix: tuple[str, ...]

    def lines(self, labels: Mapping[str, str]) -> list[str]:
        out = [f"net {self.net_index}"]
        out += [f"  init {t}: {labels.get(t, t)}" for t in self.init_prefix]
        out += [f"  step {t}: {labels.get(t, t)}" for t in self.behavior_suffix]
        return out


@dataclass(frozen=True)
class Verdict:
    qid: str
    mode: str
    answer: str
    witness: Witness | None = None
    detail: str = ""

    def __post_init__(self) -> None:
        if self.mode == "counting" and self.answer in (COVERABLE, UNCOVERABLE):
            raise ValueError("counting mode is an over-approximation")
        if self.mode == "pebble" and self.answer == UNKNOWN_COVERABLE:
            raise ValueError("pebble mode is exact")


def _net_tag(f: object) -> str:
    return "n" + f.digest()  # type: ignore[attr-defined]


def split_per_net(g: HrGrammar, sig: Signature) -> list[tuple[FoldedNet, FilteredGrammar]]:
    """One entry per element of the finite folded-net language."""
    gn = normalize(g)
    alg = FoldedAlgebra(sig)
    _, total = kleene_language(gn, alg)
    if not total:
        log.warning("grammar has an empty language; every query is vacuously safe")
    out = []
    for f in sorted(total, key=repr):
        out.append((f, filter_grammar(gn, alg, f, label=_net_tag)))
    return out


def _visible_of(t, ag: FilteredGrammar) -> frozenset[str]:
    if isinstance(t, Ref):
        return ag.value_of[t.name]  # type: ignore[return-value]
    if isinstance(t, Edge):
        return frozenset((t.s1, t.s2))
    raise ValueError("annotated rules must be normalized")


def build_init_net(ag: FilteredGrammar, sig: Signature) -> InitNet:
    """Transitions simulate derivations and emit initial tokens of vertices."""
    g = ag.grammar

    def init_of(sigma: str) -> PlaceKey:
        return class_place(sig.ptype(sigma).initial_place)

    places: set[Hashable] = {START}
    places.update(nt_place(x) for x in g.nonterminals)
    places.update(class_place(q) for q in sig.all_places())
    pre: dict[str, dict] = {}
    post: dict[str, dict] = {}
    labels: dict[str, str] = {}
    axiom_tau: dict[str, frozenset[str]] = {}
    for k, a in enumerate(g.axioms):
        tid = f"a{k}"
        tau = ag.value_of[a]
        out: dict[Hashable, int] = {nt_place(a): 1}
        for s in sorted(tau):  # type: ignore[arg-type]
            out[init_of(s)] = out.get(init_of(s), 0) + 1
        pre[tid] = {START: 1}
        post[tid] = out
        labels[tid] = f"-> {a}"
        axiom_tau[tid] = frozenset(tau)  # type: ignore[arg-type]
    for k, r in enumerate(g.rules):
        tid = f"r{k}"
        out = {}
        for c in children(r.rhs) if not isinstance(r.rhs, Ref) else (r.rhs,):
            if isinstance(c, Ref):
                p = nt_place(c.name)
                out[p] = out.get(p, 0) + 1
        if isinstance(r.rhs, Restrict):
            hidden = _visible_of(r.rhs.child, ag) - r.rhs.tau
            for s in sorted(hidden):
                out[init_of(s)] = out.get(init_of(s), 0) + 1
        pre[tid] = {nt_place(r.lhs): 1}
        post[tid] = out
        labels[tid] = f"{r.lhs} -> {show(r.rhs)}"
    net = Net.build(places, pre, post)
    return InitNet(PetriNet(net, Marking({START: 1})), labels, axiom_tau)


def build_combined(init: InitNet, folded: FoldedNet, sig: Signature) -> CombinedNet:
    """Glue an initial-marking net to a folded net on the class places.

    Tokens emitted for visible sources go to their source places.
    """
    inet = init.pn.net
    pre: dict[str, dict] = {}
    post: dict[str, dict] = {}
    labels = dict(init.labels)
    for t in inet.transitions:
        pre[t] = dict(inet.pre[t])
        out = dict(inet.post[t])
        if t in init.axiom_tau:
            tau = init.axiom_tau[t]
            if tau != folded.visible:
                raise ValueError("axiom annotation differs from the folded net's sources")
            for s in sorted(tau):
                q = sig.ptype(s).initial_place
                out[class_place(q)] -= 1
                if not out[class_place(q)]:
                    del out[class_place(q)]
                out[source_place(s, q)] = out.get(source_place(s, q), 0) + 1
        post[t] = out
    btrans = []
    for name, (a, b) in folded.transition_names():
        pre[name] = dict(a)
        post[name] = dict(b)
        labels[name] = " + ".join(f"{w}*{k!r}" for k, w in a) + " => " + " + ".join(f"{w}*{k!r}" for k, w in b)
        btrans.append(name)
    places = set(inet.places) | set(folded.places)
    net = Net.build(places, pre, post)
    return CombinedNet(
        PetriNet(net, init.pn.initial),
        frozenset(inet.transitions),
        frozenset(btrans),
        labels,
    )


@dataclass
class NetEntry:
    index: int
    folded: FoldedNet
    filtered: FilteredGrammar
    annotated: FilteredGrammar
    init: InitNet
    combined: CombinedNet


class CountingAbstraction:
    """All combined nets of a grammar, built once and shared by queries.

    ``mutate_init`` rewrites each initial-marking net before gluing; it is a
    hook for negative controls in tests.
    """

    def __init__(
        self,
        g: HrGrammar,
        sig: Signature,
        mutate_init: Callable[[InitNet], InitNet] | None = None,
    ):
        self.grammar = g
        self.sig = sig
        self.mutate_init = mutate_init

    @cached_property
    def entries(self) -> list[NetEntry]:
        out = []
        for i, (f, fg) in enumerate(split_per_net(self.grammar, self.sig)):
            ag = annotate(fg.grammar)
            init = build_init_net(ag, self.sig)
            if self.mutate_init is not None:
                init = self.mutate_init(init)
            out.append(NetEntry(i, f, fg, ag, init, build_combined(init, f, self.sig)))
        return out


def place_bounds(c: CombinedNet) -> dict[Hashable, int]:
    """Upper bounds on derivation and source places over all reachable markings.

    A derivation place never holds more tokens than ever flow into it, which
    is finite unless the place sits on a cycle of rules.  Source places hold
    at most one token: the axiom fires once and each vertex keeps one token.
    """
    net = c.pn.net
    producers: dict[Hashable, list[tuple[Hashable, int]]] = {}
    for t in c.init_transitions:
        (src,) = net.pre[t]
        for p, w in net.post[t].items():
            producers.setdefault(p, []).append((src, w))
    inflow: dict[Hashable, float] = {}
    active: set[Hashable] = set()

    def flow(p: Hashable) -> float:
        if p in inflow:
            return inflow[p]
        if p in active:
            return float("inf")
        active.add(p)
        total = float(c.pn.initial[p]) + sum(w * flow(q) for q, w in producers.get(p, []))
        active.discard(p)
        inflow[p] = total
        return total

    out: dict[Hashable, int] = {}
    for p in net.places:
        if p == START or isinstance(p, NtPlace):
            v = flow(p)
            if v != float("inf"):
                out[p] = int(v)
        elif isinstance(p, PlaceKey) and p.kind == 1:
            out[p] = 1
    return out


def _distributions(k: int, group: list[PlaceKey]) -> Iterable[dict[PlaceKey, int]]:
    if len(group) == 1:
        yield {group[0]: k}
        return
    for cut in itertools.combinations(range(k + len(group) - 1), len(group) - 1):
        prev, d = -1, {}
        for g, c in zip(group, list(cut) + [k + len(group) - 1]):
            d[g] = c - prev - 1
            prev = c
        yield {p: v for p, v in d.items() if v}


def place_group(folded: FoldedNet, ptype: str, place: str, sigma: str | None, sig: Signature) -> list[PlaceKey]:
    """Folded places whose summed tokens count ``place`` of ``ptype``."""
    if sigma is not None:
        key = source_place(sigma, place)
        return [key] if key in folded.places else []
    group = [class_place(place)]
    for k in sorted(folded.places):
        if k.kind == 1 and k.q == place and sig.source_types.get(k.sigma) == ptype:
            group.append(k)
    return group


def target_basis(query: Query, folded: FoldedNet, sig: Signature) -> list[dict[PlaceKey, int]]:
    """Minimal basis of the markings that cover every atom; empty if none can."""
    basis: list[dict[PlaceKey, int]] = [{}]
    for a in query.atoms:
        if a.count == 0:
            continue
        group = place_group(folded, a.ptype, a.place, a.sigma, sig)
        if not group:
            return []
        nxt = []
        for b in basis:
            for d in _distributions(a.count, group):
                m = dict(b)
                for p, v in d.items():
                    m[p] = max(m.get(p, 0), v)
                nxt.append(m)
        basis = _minimal(nxt)
    return basis


def _minimal(ms: list[dict]) -> list[dict]:
    uniq = {tuple(sorted(m.items())): m for m in ms}
    items = list(uniq.values())
    keep = []
    for i, m in enumerate(items):
        dominated = any(
            j != i and all(m.get(p, 0) >= v for p, v in o.items()) and o != m for j, o in enumerate(items)
        )
        if not dominated:
            keep.append(m)
    return sorted(keep, key=lambda m: sorted(m.items()))


def _split_witness(c: CombinedNet, seq: tuple[str, ...]) -> tuple[tuple[str, ...], tuple[str, ...]]:
    # init transitions only feed class places, so firing them first stays valid
    pre = tuple(t for t in seq if t in c.init_transitions)
    suf = tuple(t for t in seq if t not in c.init_transitions)
    return pre, suf


def _cover_goal(net, basis: list[dict[PlaceKey, int]]) -> Callable[[tuple[int, ...]], bool]:
    vs = [[(net.index[p], k) for p, k in b.items()] for b in basis]
    return lambda v: any(all(v[i] >= k for i, k in b) for b in vs)


def verify_cover(abstraction: CountingAbstraction, query: Query, forward_cap: int = 5000) -> Verdict:
    """SAFE when no combined net covers the target; otherwise a witness.

    Each net first gets a forward search capped at ``forward_cap`` states,
    which settles finite nets and shallow covers; the backward algorithm
    decides the rest.
    """
    if query.kind != "cover":
        raise ValueError("verify_cover needs a cover query")
    entries = abstraction.entries
    if not entries:
        return Verdict(query.qid, "counting", SAFE, detail="empty language")
    for e in entries:
        basis = target_basis(query, e.folded, abstraction.sig)
        if not basis:
            continue
        pn = e.combined.pn
        fw = forward_search(pn, _cover_goal(pn.net, basis), forward_cap) if forward_cap > 0 else None
        if fw is not None and fw.found is False:
            continue
        if fw is not None and fw.found:
            seq = fw.path or ()
        else:
            res: CoverResult = backward_coverable_any(pn, basis, place_bounds(e.combined))
            if not res.coverable:
                continue
            seq = res.witness or ()
        pre, suf = _split_witness(e.combined, seq)
        detail = "covered by every instance" if all(a.count == 0 for a in query.atoms) else ""
        return Verdict(query.qid, "counting", UNKNOWN_COVERABLE, Witness(e.index, pre, suf), detail)
    return Verdict(query.qid, "counting", SAFE, detail=f"{len(entries)} net(s)")


def reach_goal(query: Query, entry: NetEntry, sig: Signature) -> Callable[[tuple[int, ...]], bool]:
    """Vector predicate: equality on queried groups, zero on derivation places."""
    net = entry.combined.pn.net
    idx = net.index
    zero = [idx[p] for p in net.places if p == START or isinstance(p, NtPlace)]
    groups = []
    for a in query.atoms:
        group = place_group(entry.folded, a.ptype, a.place, a.sigma, sig)
        groups.append(([idx[p] for p in group if p in idx], a.count))

    def goal(v: tuple[int, ...]) -> bool:
        if any(v[i] for i in zero):
            return False
        return all(sum(v[i] for i in ids) == k for ids, k in groups)

    return goal


def verify_reach(abstraction: CountingAbstraction, query: Query, bound: int) -> Verdict:
    """Bounded forward search for the reachability predicate on every net."""
    if query.kind != "reach":
        raise ValueError("verify_reach needs a reach query")
    entries = abstraction.entries
    if not entries:
        return Verdict(query.qid, "counting", SAFE, detail="empty language")
    truncated = False
    for e in entries:
        res = forward_search(e.combined.pn, reach_goal(query, e, abstraction.sig), bound)
        if res.found:
            pre, suf = _split_witness(e.combined, res.path or ())
            return Verdict(query.qid, "counting", UNKNOWN_COVERABLE, Witness(e.index, pre, suf), "reachable in abstraction")
        if res.found is None:
            truncated = True
    if truncated:
        return Verdict(query.qid, "counting", EXPORTED, detail=f"state cap {bound} reached; export the nets for an external checker")
    return Verdict(query.qid, "counting", SAFE, detail="abstraction exhausted")


def init_projection(init: InitNet, max_total: int, state_cap: int = 10**6) -> set[Marking]:
    """Class-place projections of reachable markings with no derivation tokens.

    Exploration prunes markings whose class-place total exceeds ``max_total``;
    emissions never decrease that total, so nothing below the bound is lost.
    Grammars that multiply nonterminals without emitting tokens can still
    explode, which ``state_cap`` turns into an error.
    """
    net = init.pn.net
    idx = net.index
    cls = [idx[p] for p in net.places if isinstance(p, PlaceKey)]
    aux = [idx[p] for p in net.places if not isinstance(p, PlaceKey)]
    start = net.to_vector(init.pn.initial)
    seen = {start}
    stack = [start]
    out: set[Marking] = set()
    while stack:
        v = stack.pop()
        if not any(v[i] for i in aux):
            out.add(Marking({net.places[i]: v[i] for i in cls}))
        for t, a, b in net._vectors:
            if all(x >= y for x, y in zip(v, a)):
                w = tuple(x - y + z for x, y, z in zip(v, a, b))
                if sum(w[i] for i in cls) > max_total or w in seen:
                    continue
                if len(seen) >= state_cap:
                    raise RuntimeError("state cap reached while projecting initial markings")
                seen.add(w)
                stack.append(w)
    return out
