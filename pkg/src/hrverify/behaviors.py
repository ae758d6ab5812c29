"""Behaviors of systems, folding, and the finite algebra of folded nets."""

from __future__ import annotations

import hashlib
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from functools import lru_cache

from .petri import Marking, Net, PetriNet, PlaceEquivalence, quotient
from .systems import OpenSystem, Signature, edge_const


@dataclass(frozen=True, order=True)
class PlaceKey:
    """A folded place: ``kind`` 0 is a class place, 1 a source place."""

    kind: int
    sigma: str
    q: str

    def __repr__(self) -> str:
        return f"C({self.q})" if self.kind == 0 else f"S({self.sigma},{self.q})"


def class_place(q: str) -> PlaceKey:
    return PlaceKey(0, "", q)


def source_place(sigma: str, q: str) -> PlaceKey:
    return PlaceKey(1, sigma, q)


Side = tuple[tuple[PlaceKey, int], ...]
FoldedTransition = tuple[Side, Side]


def _side(d: Mapping[PlaceKey, int]) -> Side:
    return tuple(sorted((k, w) for k, w in d.items() if w))


@dataclass(frozen=True)
class Behavior:
    pn: PetriNet
    sources: Mapping[tuple[str, str], tuple[str, int]] = field(hash=False)

    @property
    def source_of_vertex(self) -> dict[int, str]:
        return {v: s for (s, _), (_, v) in self.sources.items()}


def beta(s: OpenSystem, sig: Signature) -> Behavior:
    """The Petri net of a system: one copy of its type per vertex, edges synchronize."""
    places = []
    init: dict[tuple[str, int], int] = {}
    pre: dict[tuple, dict] = {}
    post: dict[tuple, dict] = {}
    for v in s.vertices:
        p = sig.types[s.vlabel[v]]
        places.extend((q, v) for q in p.places)
        init[(p.initial_place, v)] = 1
        for t, (a, b) in p.internal.items():
            pre[("i", t, v)] = {(a, v): 1}
            post[("i", t, v)] = {(b, v): 1}
    for v1, (t1, t2), v2 in s.edges:
        a1, b1 = sig.types[s.vlabel[v1]].observable[t1]
        a2, b2 = sig.types[s.vlabel[v2]].observable[t2]
        key = ("e", v1, t1, t2, v2)
        pre[key] = {(a1, v1): 1, (a2, v2): 1}
        post[key] = {(b1, v1): 1, (b2, v2): 1}
    src = {}
    for sigma, v in s.sources:
        for q in sig.types[s.vlabel[v]].places:
            src[(sigma, q)] = (q, v)
    return Behavior(PetriNet(Net.build(places, pre, post), Marking(init)), src)


@dataclass(frozen=True)
class FoldedNet:
    """Canonically keyed folded net; ``initial`` is None once dropped."""

    places: frozenset[PlaceKey]
    transitions: frozenset[FoldedTransition]
    visible: frozenset[str]
    initial: Marking | None = None

    def canonical(self) -> tuple:
        return (
            tuple(sorted(self.places)),
            tuple(sorted(self.transitions)),
            tuple(sorted(self.visible)),
            None if self.initial is None else tuple(self.initial.items()),
        )

    def __repr__(self) -> str:
        ps, ts, vs, m0 = self.canonical()
        body = "; ".join(
            "+".join(f"{w}*{k!r}" for k, w in a) + "->" + "+".join(f"{w}*{k!r}" for k, w in b)
            for a, b in ts
        )
        return f"FoldedNet(places={list(ps)}, visible={list(vs)}, transitions=[{body}], initial={m0})"

    def digest(self) -> str:
        return hashlib.sha1(repr(self).encode()).hexdigest()[:10]

    def transition_names(self) -> list[tuple[str, FoldedTransition]]:
        return [(f"b{i}", t) for i, t in enumerate(sorted(self.transitions))]

    def to_petri(self) -> PetriNet:
        pre = {}
        post = {}
        for name, (a, b) in self.transition_names():
            pre[name] = dict(a)
            post[name] = dict(b)
        return PetriNet(Net.build(self.places, pre, post), self.initial or Marking())


def fold_relation(b: Behavior) -> PlaceEquivalence:
    src = b.source_of_vertex
    cls = {}
    for q, v in b.pn.net.places:
        cls[(q, v)] = source_place(src[v], q) if v in src else class_place(q)
    return PlaceEquivalence(cls)


def fold(b: Behavior) -> FoldedNet:
    """Merge non-source copies of each place; source copies keep their label."""
    qpn = quotient(b.pn, fold_relation(b))
    net = qpn.net
    ts = frozenset((_side(net.pre[t]), _side(net.post[t])) for t in net.transitions)
    visible = frozenset(s for s, _ in b.sources)
    return FoldedNet(frozenset(net.places), ts, visible, qpn.initial)


def drop_marking(f: FoldedNet) -> FoldedNet:
    return replace(f, initial=None)


def _rekey(f: FoldedNet, key: Mapping[PlaceKey, PlaceKey], visible: Iterable[str]) -> FoldedNet:
    def side(s: Side) -> Side:
        acc: dict[PlaceKey, int] = {}
        for k, w in s:
            k2 = key.get(k, k)
            acc[k2] = acc.get(k2, 0) + w
        return _side(acc)

    places = frozenset(key.get(k, k) for k in f.places)
    ts = frozenset((side(a), side(b)) for a, b in f.transitions)
    return FoldedNet(places, ts, frozenset(visible))


def folded_restrict(f: FoldedNet, tau: Iterable[str]) -> FoldedNet:
    keep = frozenset(tau)
    key = {k: class_place(k.q) for k in f.places if k.kind == 1 and k.sigma not in keep}
    return _rekey(f, key, f.visible & keep)


def folded_rename(f: FoldedNet, alpha: Mapping[str, str]) -> FoldedNet:
    key = {k: source_place(alpha[k.sigma], k.q) for k in f.places if k.kind == 1 and k.sigma in alpha}
    return _rekey(f, key, (alpha.get(s, s) for s in f.visible))


def folded_compose(f: FoldedNet, g: FoldedNet) -> FoldedNet:
    return FoldedNet(f.places | g.places, f.transitions | g.transitions, f.visible | g.visible)


class FoldedAlgebra:
    """Finite algebra of marking-free folded nets."""

    def __init__(self, sig: Signature):
        self.sig = sig
        self._edge = lru_cache(maxsize=None)(self._make_edge)

    def _make_edge(self, label: tuple[str, str], s1: str, s2: str) -> FoldedNet:
        return drop_marking(fold(beta(edge_const(self.sig, label, s1, s2), self.sig)))

    def edge(self, label, s1, s2) -> FoldedNet:
        return self._edge(tuple(label), s1, s2)

    def restrict(self, x: FoldedNet, tau) -> FoldedNet:
        return folded_restrict(x, tau)

    def rename(self, x: FoldedNet, alpha) -> FoldedNet:
        return folded_rename(x, alpha)

    def compose(self, x: FoldedNet, y: FoldedNet) -> FoldedNet:
        return folded_compose(x, y)


def concrete_fold(s: OpenSystem, sig: Signature) -> FoldedNet:
    """The concrete path: fold the behavior of a system and drop its marking."""
    return drop_marking(fold(beta(s, sig)))


def size_cap_ok(f: FoldedNet, sig: Signature) -> bool:
    n_places = sum(len(p.places) for p in sig.types.values())
    bound = n_places * (1 + len(sig.source_types))
    return len(f.places) <= bound and len(f.transitions) <= max(1, len(f.places)) ** 4


def arity_ok(f: FoldedNet) -> bool:
    for a, b in f.transitions:
        na, nb = sum(w for _, w in a), sum(w for _, w in b)
        if not (1 <= na == nb <= 2):
            return False
    return True
