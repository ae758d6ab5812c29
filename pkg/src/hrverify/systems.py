"""Process types and the HR algebra of open systems."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import networkx as nx
from networkx.algorithms import isomorphism


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class ProcessType:
    """An automata-like local process: unit weights, one initial place."""

    name: str
    places: tuple[str, ...]
    initial_place: str
    observable: Mapping[str, tuple[str, str]] = field(hash=False)
    internal: Mapping[str, tuple[str, str]] = field(hash=False)

    def __post_init__(self) -> None:
        if len(set(self.places)) != len(self.places):
            raise TopologyError(f"type {self.name}: duplicate place")
        if self.initial_place not in self.places:
            raise TopologyError(f"type {self.name}: initial place {self.initial_place} undeclared")
        overlap = set(self.observable) & set(self.internal)
        if overlap:
            raise TopologyError(f"type {self.name}: transition names reused: {sorted(overlap)}")
        for t, (a, b) in {**self.observable, **self.internal}.items():
            for q in (a, b):
                if q not in self.places:
                    raise TopologyError(f"type {self.name}: transition {t} uses unknown place {q}")

    def transition(self, t: str) -> tuple[str, str]:
        if t in self.observable:
            return self.observable[t]
        return self.internal[t]


@dataclass(frozen=True)
class Signature:
    """Declared process types and the fixed type of every source label."""

    types: Mapping[str, ProcessType] = field(hash=False)
    source_types: Mapping[str, str] = field(hash=False)

    def __post_init__(self) -> None:
        owner: dict[str, str] = {}
        for p in self.types.values():
            for q in p.places:
                if q in owner:
                    raise TopologyError(f"place {q} declared by both {owner[q]} and {p.name}")
                owner[q] = p.name
        for s, p in self.source_types.items():
            if p not in self.types:
                raise TopologyError(f"source {s} has unknown type {p}")

    def ptype(self, sigma: str) -> ProcessType:
        try:
            return self.types[self.source_types[sigma]]
        except KeyError:
            raise TopologyError(f"undeclared source {sigma}") from None

    def owner_of(self, place: str) -> ProcessType:
        for p in self.types.values():
            if place in p.places:
                return p
        raise TopologyError(f"unknown place {place}")

    def all_places(self) -> list[str]:
        return sorted(q for p in self.types.values() for q in p.places)


Edge = tuple[int, tuple[str, str], int]


@dataclass(frozen=True)
class OpenSystem:
    """A labelled graph with vertices ``0..n-1`` and a partial source map."""

    vlabel: tuple[str, ...]
    edges: frozenset[Edge]
    sources: tuple[tuple[str, int], ...]

    @property
    def vertices(self) -> range:
        return range(len(self.vlabel))

    @property
    def source_map(self) -> dict[str, int]:
        return dict(self.sources)

    @property
    def visible(self) -> frozenset[str]:
        return frozenset(s for s, _ in self.sources)

    def source_vertices(self) -> set[int]:
        return {v for _, v in self.sources}

    def check(self, sig: Signature) -> None:
        vs = [v for _, v in self.sources]
        if len(set(vs)) != len(vs):
            raise TopologyError("source map is not injective")
        for s, v in self.sources:
            if sig.source_types[s] != self.vlabel[v]:
                raise TopologyError(f"source {s} bound to a vertex of the wrong type")
        for v1, (t1, t2), v2 in self.edges:
            if t1 not in sig.types[self.vlabel[v1]].observable:
                raise TopologyError(f"{t1} is not observable in {self.vlabel[v1]}")
            if t2 not in sig.types[self.vlabel[v2]].observable:
                raise TopologyError(f"{t2} is not observable in {self.vlabel[v2]}")


def _make(vlabel: Iterable[str], edges: Iterable[Edge], sources: Mapping[str, int]) -> OpenSystem:
    return OpenSystem(tuple(vlabel), frozenset(edges), tuple(sorted(sources.items())))


def edge_const(sig: Signature, label: tuple[str, str], s1: str, s2: str) -> OpenSystem:
    if s1 == s2:
        raise TopologyError(f"edge needs two distinct sources, got {s1} twice")
    p1, p2 = sig.ptype(s1), sig.ptype(s2)
    if label[0] not in p1.observable:
        raise TopologyError(f"{label[0]} is not observable in {p1.name}")
    if label[1] not in p2.observable:
        raise TopologyError(f"{label[1]} is not observable in {p2.name}")
    return _make((p1.name, p2.name), [(0, tuple(label), 1)], {s1: 0, s2: 1})


def restrict(s: OpenSystem, tau: Iterable[str]) -> OpenSystem:
    keep = set(tau)
    return OpenSystem(s.vlabel, s.edges, tuple(p for p in s.sources if p[0] in keep))


def check_permutation(sig: Signature, alpha: Mapping[str, str]) -> None:
    if set(alpha) != set(alpha.values()):
        raise TopologyError("rename is not a permutation of its support")
    for a, b in alpha.items():
        if sig.source_types.get(a) != sig.source_types.get(b) or a not in sig.source_types:
            raise TopologyError(f"rename {a}->{b} does not preserve process types")


def rename(s: OpenSystem, alpha: Mapping[str, str], sig: Signature | None = None) -> OpenSystem:
    """Relabel sources: the result maps ``alpha(sigma)`` to ``xi(sigma)``."""
    if sig is not None:
        check_permutation(sig, alpha)
    elif set(alpha) != set(alpha.values()):
        raise TopologyError("rename is not a permutation of its support")
    return _make(s.vlabel, s.edges, {alpha.get(a, a): v for a, v in s.sources})


def compose(s1: OpenSystem, s2: OpenSystem) -> OpenSystem:
    """Disjoint union fusing equally named sources; duplicate edges collapse."""
    m1, m2 = s1.source_map, s2.source_map
    relabel: dict[int, int] = {}
    for sigma, v in m2.items():
        if sigma in m1:
            if s1.vlabel[m1[sigma]] != s2.vlabel[v]:
                raise TopologyError(f"source {sigma} has different types in the operands")
            relabel[v] = m1[sigma]
    labels = list(s1.vlabel)
    for v in s2.vertices:
        if v not in relabel:
            relabel[v] = len(labels)
            labels.append(s2.vlabel[v])
    edges = set(s1.edges)
    edges.update((relabel[a], lab, relabel[b]) for a, lab, b in s2.edges)
    sources = dict(m1)
    for sigma, v in m2.items():
        sources.setdefault(sigma, relabel[v])
    return _make(labels, edges, sources)


class SystemAlgebra:
    """The concrete algebra; elements are :class:`OpenSystem` values."""

    def __init__(self, sig: Signature):
        self.sig = sig

    def edge(self, label: tuple[str, str], s1: str, s2: str) -> OpenSystem:
        return edge_const(self.sig, label, s1, s2)

    def restrict(self, x: OpenSystem, tau: frozenset[str]) -> OpenSystem:
        return restrict(x, tau)

    def rename(self, x: OpenSystem, alpha: Mapping[str, str]) -> OpenSystem:
        return rename(x, alpha, self.sig)

    def compose(self, x: OpenSystem, y: OpenSystem) -> OpenSystem:
        return compose(x, y)


def eval_system(term, sig: Signature) -> OpenSystem:
    from .grammar import eval_term

    return eval_term(term, SystemAlgebra(sig))


def to_graph(s: OpenSystem) -> nx.MultiDiGraph:
    inv = {v: k for k, v in s.sources}
    g = nx.MultiDiGraph()
    for v in s.vertices:
        g.add_node(v, color=(s.vlabel[v], inv.get(v, "")))
    for a, lab, b in s.edges:
        g.add_edge(a, b, label=lab)
    return g


def canonical_key(s: OpenSystem) -> str:
    """Isomorphism-invariant hash; equal systems always share a key."""
    inv = {v: k for k, v in s.sources}
    g = nx.DiGraph()
    for v in s.vertices:
        g.add_node(v, h=f"{s.vlabel[v]}|{inv.get(v, '')}")
    labels: dict[tuple[int, int], list[str]] = {}
    for a, lab, b in s.edges:
        labels.setdefault((a, b), []).append(",".join(lab))
    for (a, b), ls in labels.items():
        g.add_edge(a, b, h=";".join(sorted(ls)))
    return nx.weisfeiler_lehman_graph_hash(g, node_attr="h", edge_attr="h", iterations=3)


def isomorphic(s1: OpenSystem, s2: OpenSystem) -> bool:
    """Isomorphism preserving vertex types, source labels and edge labels."""
    if len(s1.vlabel) != len(s2.vlabel) or len(s1.edges) != len(s2.edges):
        return False
    if s1.visible != s2.visible:
        return False
    return nx.is_isomorphic(
        to_graph(s1),
        to_graph(s2),
        node_match=isomorphism.categorical_node_match("color", None),
        edge_match=isomorphism.categorical_multiedge_match("label", None),
    )


def dedup(systems: Iterable[tuple[object, OpenSystem]]) -> list[tuple[object, OpenSystem]]:
    """Keep the first representative of every isomorphism class."""
    buckets: dict[str, list[OpenSystem]] = {}
    out = []
    for tag, s in systems:
        key = canonical_key(s)
        bucket = buckets.setdefault(key, [])
        if any(isomorphic(s, r) for r in bucket):
            continue
        bucket.append(s)
        out.append((tag, s))
    return out
