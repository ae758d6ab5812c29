"""Exact coverability for pebble-passing systems.

A pebble-passing type has two places, a pebble place and a hole place, and
exactly the observable transitions ``send`` (pebble to hole) and ``recv``
(hole to pebble).  Edges carry ``(send,recv)`` or ``(recv,send)``; a pebble
moves from the sending endpoint to the receiving one.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .counting import COVERABLE, UNCOVERABLE, Verdict
from .grammar import (
    Edge,
    HrGrammar,
    Query,
    Term,
    UnitAlgebra,
    children,
    eval_term,
    kleene_language,
)
from .systems import OpenSystem, ProcessType, Signature

SEND, RECV = "send", "recv"
PEBBLE_LABELS = frozenset({(SEND, RECV), (RECV, SEND)})


class PebbleError(ValueError):
    pass


@dataclass(frozen=True)
class PebbleSignatureCheck:
    verdict: bool
    offending: str | None = None


def pebble_places(p: ProcessType) -> tuple[str, str] | None:
    """(pebble place, hole place) of a pebble-passing type, else None."""
    if len(p.places) != 2 or p.internal or set(p.observable) != {SEND, RECV}:
        return None
    top, bot = p.observable[SEND]
    if top == bot or p.observable[RECV] != (bot, top):
        return None
    return top, bot


def check_pebble_signature(sig: Signature, g: HrGrammar) -> PebbleSignatureCheck:
    for p in sorted(sig.types.values(), key=lambda p: p.name):
        if pebble_places(p) is None:
            return PebbleSignatureCheck(False, f"process type {p.name}")
    for r in g.rules:
        stack: list[Term] = [r.rhs]
        while stack:
            t = stack.pop()
            stack.extend(children(t))
            if isinstance(t, Edge) and t.label not in PEBBLE_LABELS:
                return PebbleSignatureCheck(False, f"edge label ({t.label[0]},{t.label[1]})")
    return PebbleSignatureCheck(True)


def init_top(p: ProcessType) -> int:
    """Footprint of the initial marking of a type: 1 on pebble."""
    pp = pebble_places(p)
    if pp is None:
        raise PebbleError(f"{p.name} is not pebble-passing")
    return 1 if p.initial_place == pp[0] else 0


# --------------------------------------------------------------------------
# footprints on concrete systems

Arrow = tuple[int, int]


def arrow_of(edge: tuple[int, tuple[str, str], int]) -> Arrow:
    v1, label, v2 = edge
    if label == (SEND, RECV):
        return (v1, v2)
    if label == (RECV, SEND):
        return (v2, v1)
    raise PebbleError(f"edge label {label} is not pebble-passing")


def arrows(s: OpenSystem) -> list[Arrow]:
    return sorted({arrow_of(e) for e in s.edges})


def marking_footprint(s: OpenSystem, sig: Signature, m: Mapping[Hashable, int]) -> dict[int, int]:
    out = {}
    for v in s.vertices:
        top, _ = pebble_places(sig.types[s.vlabel[v]])  # type: ignore[misc]
        out[v] = m.get((top, v), 0)
    return out


def initial_footprint(s: OpenSystem, sig: Signature) -> dict[int, int]:
    return {v: init_top(sig.types[s.vlabel[v]]) for v in s.vertices}


def footprint_of_sequence(s: OpenSystem, seq: Iterable[Arrow]) -> dict[int, int]:
    """Pointwise sum: each arrow is -1 on its tail and +1 on its head."""
    known = set(arrows(s))
    fp = {v: 0 for v in s.vertices}
    for u, v in seq:
        if (u, v) not in known:
            raise PebbleError(f"no edge {u}->{v} in the system")
        fp[u] -= 1
        fp[v] += 1
    return fp


def is_valid(fp: Mapping[int, int], over: Iterable[int] | None = None) -> bool:
    keys = fp.keys() if over is None else over
    return all(0 <= fp[v] <= 1 for v in keys)


def fireable_subsequence_exists(s: OpenSystem, pebbles: Mapping[int, int], seq: Sequence[Arrow]) -> bool:
    """Decided by validity of the footprint sum."""
    fp = footprint_of_sequence(s, seq)
    return is_valid({v: pebbles[v] + fp[v] for v in s.vertices})


def _simple_path(walk: list[int]) -> list[int]:
    """Cut every cycle out of a walk."""
    out: list[int] = []
    pos: dict[int, int] = {}
    for v in walk:
        if v in pos:
            for u in out[pos[v] + 1 :]:
                del pos[u]
            del out[pos[v] + 1 :]
        else:
            pos[v] = len(out)
            out.append(v)
    return out


def fireable_subsequence(s: OpenSystem, pebbles: Mapping[int, int], seq: Sequence[Arrow]) -> list[Arrow] | None:
    """A fireable reordering of a sub-multiset of ``seq`` with the same footprint.

    The arrows are split into walks from each pebble-losing vertex to a
    pebble-gaining one.  Cycles are cut out and every simple path is played
    from its far end backwards, so each arrow fires onto a hole.
    """
    if not fireable_subsequence_exists(s, pebbles, seq):
        return None
    need = footprint_of_sequence(s, seq)
    remaining: dict[int, list[int]] = {v: [] for v in s.vertices}
    for u, v in seq:
        remaining[u].append(v)
    for lst in remaining.values():
        lst.sort(reverse=True)
    paths = []
    for start in sorted(v for v in s.vertices if need[v] < 0):
        walk = [start]
        while len(walk) == 1 or need[walk[-1]] <= 0:
            walk.append(remaining[walk[-1]].pop())
        need[start] += 1
        need[walk[-1]] -= 1
        paths.append(_simple_path(walk))
    state = dict(pebbles)
    fired: list[Arrow] = []
    for path in paths:
        end = len(path) - 1
        while end > 0:
            i = max(j for j in range(end) if state[path[j]] == 1)
            for j in range(i, end):
                fired.append((path[j], path[j + 1]))
                state[path[j]], state[path[j + 1]] = 0, 1
            end = i
    return fired


def fire_arrows(s: OpenSystem, pebbles: Mapping[int, int], seq: Iterable[Arrow]) -> dict[int, int] | None:
    """Play a sequence; None as soon as an arrow is not enabled."""
    state = dict(pebbles)
    for u, v in seq:
        if state[u] != 1 or state[v] != 0:
            return None
        state[u], state[v] = 0, 1
    return state


def degree(seq: Iterable[Arrow]) -> int:
    outs: Counter[int] = Counter()
    ins: Counter[int] = Counter()
    for u, v in seq:
        outs[u] += 1
        ins[v] += 1
    return max([0, *outs.values(), *ins.values()])


def compute_K(m_tgt: Mapping[str, int]) -> int:
    return sum(m_tgt.values())


def footprint_covers(s: OpenSystem, sig: Signature, fp: Mapping[int, int], m_tgt: Mapping[str, int]) -> bool:
    if not is_valid(fp):
        return False
    have: Counter[str] = Counter()
    for v in s.vertices:
        top, bot = pebble_places(sig.types[s.vlabel[v]])  # type: ignore[misc]
        have[top if fp[v] == 1 else bot] += 1
    return all(have[q] >= k for q, k in m_tgt.items())


def degree_bounded_cover(s: OpenSystem, sig: Signature, m_tgt: Mapping[str, int], K: int) -> list[Arrow] | None:
    """Search arrow multisets of degree at most ``K`` for a covering footprint.

    Returns a fireable witness, or None when no such multiset covers.
    """
    arcs = arrows(s)
    init = initial_footprint(s, sig)
    ins = {v: 0 for v in s.vertices}
    outs = {v: 0 for v in s.vertices}
    chosen: list[Arrow] = []

    def go(i: int) -> bool:
        if i == len(arcs):
            fp = {v: init[v] + ins[v] - outs[v] for v in s.vertices}
            return footprint_covers(s, sig, fp, m_tgt)
        u, v = arcs[i]
        top = min(K - outs[u], K - ins[v])
        for k in range(top + 1):
            outs[u] += k
            ins[v] += k
            chosen.extend([(u, v)] * k)
            found = go(i + 1)
            outs[u] -= k
            ins[v] -= k
            if found:
                return True
            del chosen[len(chosen) - k :]
        return False

    if not go(0):
        return None
    return fireable_subsequence(s, init, chosen)


# --------------------------------------------------------------------------
# the flow algebra


@dataclass(frozen=True)
class FlowTuple:
    """In-flows and out-flows per visible source, plus hidden-vertex counts.

    ``f_plus`` and ``f_minus`` are aligned with the sorted visible sources;
    ``n`` is aligned with the algebra's queried places.
    """

    f_plus: tuple[int, ...]
    f_minus: tuple[int, ...]
    n: tuple[int, ...]


@dataclass(frozen=True)
class FlowSet:
    visible: tuple[str, ...]
    tuples: frozenset[FlowTuple] = field(default_factory=frozenset)

    def __repr__(self) -> str:
        ts = sorted((t.f_plus, t.f_minus, t.n) for t in self.tuples)
        return f"FlowSet(visible={list(self.visible)}, tuples={ts})"


class FlowAlgebra:
    """Flows bounded by ``K``, with counts capped by the target."""

    def __init__(self, sig: Signature, m_tgt: Mapping[str, int]):
        self.sig = sig
        self.places = tuple(sorted(m_tgt))
        self.cap = tuple(m_tgt[q] for q in self.places)
        self.K = compute_K(m_tgt)
        self._slot: dict[str, tuple[int | None, int | None]] = {}
        for p in sig.types.values():
            pp = pebble_places(p)
            if pp is None:
                raise PebbleError(f"{p.name} is not pebble-passing")
            top, bot = pp
            self._slot[p.name] = (
                self.places.index(top) if top in self.places else None,
                self.places.index(bot) if bot in self.places else None,
            )
        for q in self.places:
            if not any(q in p.places for p in sig.types.values()):
                raise PebbleError(f"unknown place {q}")

    def edge(self, label, s1, s2) -> FlowSet:
        if tuple(label) == (SEND, RECV):
            head, tail = s2, s1
        elif tuple(label) == (RECV, SEND):
            head, tail = s1, s2
        else:
            raise PebbleError(f"edge label {label} is not pebble-passing")
        vis = tuple(sorted((s1, s2)))
        zero_n = (0,) * len(self.places)
        out = set()
        for k in range(self.K + 1):
            fp = tuple(k if s == head else 0 for s in vis)
            fm = tuple(k if s == tail else 0 for s in vis)
            out.add(FlowTuple(fp, fm, zero_n))
        return FlowSet(vis, frozenset(out))

    def rename(self, x: FlowSet, alpha) -> FlowSet:
        new = [alpha.get(s, s) for s in x.visible]
        order = sorted(range(len(new)), key=lambda i: new[i])
        vis = tuple(new[i] for i in order)
        ts = frozenset(
            FlowTuple(tuple(t.f_plus[i] for i in order), tuple(t.f_minus[i] for i in order), t.n) for t in x.tuples
        )
        return FlowSet(vis, ts)

    def compose(self, x: FlowSet, y: FlowSet) -> FlowSet:
        vis = tuple(sorted(set(x.visible) | set(y.visible)))
        ix = [x.visible.index(s) if s in x.visible else None for s in vis]
        iy = [y.visible.index(s) if s in y.visible else None for s in vis]
        K = self.K
        out = set()
        for a in x.tuples:
            for b in y.tuples:
                fp, fm = [], []
                ok = True
                for i, j in zip(ix, iy):
                    p = (a.f_plus[i] if i is not None else 0) + (b.f_plus[j] if j is not None else 0)
                    m = (a.f_minus[i] if i is not None else 0) + (b.f_minus[j] if j is not None else 0)
                    if p > K or m > K:
                        ok = False
                        break
                    fp.append(p)
                    fm.append(m)
                if not ok:
                    continue
                n = tuple(min(c, u + v) for c, u, v in zip(self.cap, a.n, b.n))
                out.add(FlowTuple(tuple(fp), tuple(fm), n))
        return FlowSet(vis, frozenset(out))

    def restrict(self, x: FlowSet, tau) -> FlowSet:
        keep = set(tau)
        kept = [i for i, s in enumerate(x.visible) if s in keep]
        closed = [(i, self.sig.ptype(s)) for i, s in enumerate(x.visible) if s not in keep]
        if not closed:
            return x
        vis = tuple(x.visible[i] for i in kept)
        out = set()
        for t in x.tuples:
            n = list(t.n)
            ok = True
            for i, p in closed:
                val = t.f_plus[i] - t.f_minus[i] + init_top(p)
                if val not in (0, 1):
                    ok = False
                    break
                slot = self._slot[p.name][0 if val == 1 else 1]
                if slot is not None:
                    n[slot] += 1
            if not ok:
                continue
            capped = tuple(min(c, v) for c, v in zip(self.cap, n))
            out.add(FlowTuple(tuple(t.f_plus[i] for i in kept), tuple(t.f_minus[i] for i in kept), capped))
        return FlowSet(vis, frozenset(out))

    def accepts(self, closed: FlowSet) -> bool:
        return FlowTuple((), (), self.cap) in closed.tuples


def pebble_target(query: Query, sig: Signature) -> dict[str, int]:
    """Target counts per place; pinned atoms are rejected."""
    m: dict[str, int] = {}
    for a in query.atoms:
        if a.sigma is not None:
            raise PebbleError("source-pinned places are not supported for pebble-passing queries")
        if pebble_places(sig.types[a.ptype]) is None:
            raise PebbleError(f"{a.ptype} is not pebble-passing")
        m[a.place] = max(m.get(a.place, 0), a.count)
    return m


def decide_cover_pps(g: HrGrammar, sig: Signature, query: Query) -> Verdict:
    """Exact parameterized coverability over the grammar's language."""
    if query.kind != "cover":
        raise PebbleError("pebble mode decides cover queries only")
    chk = check_pebble_signature(sig, g)
    if not chk.verdict:
        raise PebbleError(f"not pebble-passing: {chk.offending}")
    m_tgt = pebble_target(query, sig)
    K = compute_K(m_tgt)
    if K == 0:
        _, total = kleene_language(g, UnitAlgebra())
        answer = COVERABLE if total else UNCOVERABLE
        return Verdict(query.qid, "pebble", answer, detail="K=0")
    alg = FlowAlgebra(sig, m_tgt)
    _, total = kleene_language(g, alg)
    for f in sorted(total, key=repr):
        if alg.accepts(alg.restrict(f, frozenset())):
            return Verdict(query.qid, "pebble", COVERABLE, detail=f"K={K}")
    return Verdict(query.qid, "pebble", UNCOVERABLE, detail=f"K={K}")


def decide_cover_term(term: Term, sig: Signature, m_tgt: Mapping[str, int]) -> bool:
    """The same membership check for a single ground term."""
    if compute_K(m_tgt) == 0:
        return True
    alg = FlowAlgebra(sig, m_tgt)
    return alg.accepts(alg.restrict(eval_term(term, alg), frozenset()))
