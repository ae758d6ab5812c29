"""Place/transition nets, firing, quotients and coverability engines.

Place and transition identifiers are arbitrary hashable values.  Orderings
are made deterministic through :func:`node_key`, which sorts by ``repr``.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Callable, Hashable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from functools import cached_property

Node = Hashable
Vector = tuple[int, ...]

MAX_COUNT = 2**63 - 1


class MarkingOverflow(ArithmeticError):
    """A token count left the signed 64-bit range."""


class NetError(ValueError):
    pass


def node_key(x: Node) -> tuple[str, str]:
    return (type(x).__name__, repr(x))


def _checked(value: int, where: Node) -> int:
    if value > MAX_COUNT:
        raise MarkingOverflow(f"token count on {where!r} exceeds 64 bits")
    return value


class Marking(Mapping):
    """Immutable token assignment; absent places hold zero tokens."""

    __slots__ = ("_d", "_hash")

    def __init__(self, counts: Mapping[Node, int] | Iterable[tuple[Node, int]] = ()):
        items = counts.items() if isinstance(counts, Mapping) else counts
        d: dict[Node, int] = {}
        for k, v in items:
            if v < 0:
                raise NetError(f"negative token count on {k!r}")
            if v:
                d[k] = _checked(int(v), k)
        self._d = d
        self._hash: int | None = None

    def __getitem__(self, key: Node) -> int:
        return self._d.get(key, 0)

    def __iter__(self) -> Iterator[Node]:
        return iter(sorted(self._d, key=node_key))

    def __len__(self) -> int:
        return len(self._d)

    def __contains__(self, key: object) -> bool:
        return key in self._d

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Marking):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __repr__(self) -> str:
        inner = ", ".join(f"{k!r}: {v}" for k, v in self.items())
        return f"Marking({{{inner}}})"

    def total(self) -> int:
        return sum(self._d.values())


@dataclass(frozen=True)
class Net:
    """A net (places, transitions, weights).

    ``pre[t][q]`` is W(q, t) and ``post[t][q]`` is W(t, q); missing entries
    are zero.
    """

    places: tuple[Node, ...]
    transitions: tuple[Node, ...]
    pre: Mapping[Node, Mapping[Node, int]] = field(compare=False)
    post: Mapping[Node, Mapping[Node, int]] = field(compare=False)

    @classmethod
    def build(
        cls,
        places: Iterable[Node],
        pre: Mapping[Node, Mapping[Node, int]],
        post: Mapping[Node, Mapping[Node, int]],
        transitions: Iterable[Node] | None = None,
    ) -> Net:
        ps = tuple(sorted(set(places), key=node_key))
        ts_set = set(pre) | set(post) | set(transitions or ())
        ts = tuple(sorted(ts_set, key=node_key))
        pset = set(ps)
        if pset & ts_set:
            raise NetError("places and transitions must be disjoint")
        clean_pre: dict[Node, dict[Node, int]] = {}
        clean_post: dict[Node, dict[Node, int]] = {}
        for side, src, dst in (("pre", pre, clean_pre), ("post", post, clean_post)):
            for t in ts:
                row = {}
                for q, w in src.get(t, {}).items():
                    if q not in pset:
                        raise NetError(f"{side} arc of {t!r} uses unknown place {q!r}")
                    if w < 0:
                        raise NetError(f"negative weight on {q!r}/{t!r}")
                    if w:
                        row[q] = int(w)
                dst[t] = row
        return cls(ps, ts, clean_pre, clean_post)

    def weight(self, x: Node, y: Node) -> int:
        """W(x, y) for a place/transition or transition/place pair."""
        if x in self.pre:
            return self.post[x].get(y, 0)
        if y in self.pre:
            return self.pre[y].get(x, 0)
        raise NetError(f"no such arc pair {x!r}, {y!r}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Net):
            return NotImplemented
        return (
            self.places == other.places
            and self.transitions == other.transitions
            and all(self.pre[t] == other.pre[t] and self.post[t] == other.post[t] for t in self.transitions)
        )

    def __hash__(self) -> int:
        return hash((self.places, self.transitions))

    @cached_property
    def index(self) -> dict[Node, int]:
        return {q: i for i, q in enumerate(self.places)}

    @cached_property
    def _vectors(self) -> list[tuple[Node, Vector, Vector]]:
        n = len(self.places)
        out = []
        for t in self.transitions:
            a = [0] * n
            b = [0] * n
            for q, w in self.pre[t].items():
                a[self.index[q]] = w
            for q, w in self.post[t].items():
                b[self.index[q]] = w
            out.append((t, tuple(a), tuple(b)))
        return out

    def to_vector(self, m: Mapping[Node, int]) -> Vector:
        for q, v in m.items():
            if v and q not in self.index:
                raise NetError(f"unknown place {q!r}")
        return tuple(m.get(q, 0) for q in self.places)

    def to_marking(self, v: Vector) -> Marking:
        return Marking(zip(self.places, v))


@dataclass(frozen=True)
class PetriNet:
    net: Net
    initial: Marking

    def __post_init__(self) -> None:
        for q in self.initial:
            if q not in self.net.index:
                raise NetError(f"initial marking names unknown place {q!r}")


@dataclass(frozen=True)
class PlaceEquivalence:
    class_of: Mapping[Node, Node]


def _require(net: Net, t: Node) -> None:
    if t not in net.pre:
        raise NetError(f"unknown transition {t!r}")


def is_enabled(net: Net, m: Mapping[Node, int], t: Node) -> bool:
    _require(net, t)
    return all(m.get(q, 0) >= w for q, w in net.pre[t].items())


def fire(net: Net, m: Mapping[Node, int], t: Node) -> Marking:
    if not is_enabled(net, m, t):
        raise NetError(f"transition {t!r} is not enabled")
    out = dict(m)
    for q, w in net.pre[t].items():
        out[q] = out.get(q, 0) - w
    for q, w in net.post[t].items():
        out[q] = _checked(out.get(q, 0) + w, q)
    return Marking(out)


def fire_sequence(net: Net, m: Mapping[Node, int], seq: Iterable[Node]) -> Marking:
    cur = Marking(m)
    for t in seq:
        cur = fire(net, cur, t)
    return cur


def covers(m: Mapping[Node, int], target: Mapping[Node, int]) -> bool:
    return all(m.get(q, 0) >= k for q, k in target.items())


def _successors(net: Net, v: Vector) -> Iterator[tuple[Node, Vector]]:
    for t, a, b in net._vectors:
        if all(x >= y for x, y in zip(v, a)):
            nxt = tuple(x - y + z for x, y, z in zip(v, a, b))
            if any(x > MAX_COUNT for x in nxt):
                raise MarkingOverflow(f"firing {t!r} overflows a 64-bit counter")
            yield t, nxt


@dataclass(frozen=True)
class SearchResult:
    """Outcome of a forward search: ``found`` is None when truncated."""

    found: bool | None
    path: tuple[Node, ...] | None
    states: int


def forward_search(
    pn: PetriNet, goal: Callable[[Vector], bool], state_cap: int
) -> SearchResult:
    """Breadth-first search for a reachable marking satisfying ``goal``.

    ``goal`` receives markings as vectors indexed like ``pn.net.places``.
    """
    if state_cap <= 0:
        raise ValueError("state_cap must be positive")
    net = pn.net
    start = net.to_vector(pn.initial)
    parent: dict[Vector, tuple[Vector, Node] | None] = {start: None}
    queue = deque([start])

    def path_to(v: Vector) -> tuple[Node, ...]:
        seq = []
        while parent[v] is not None:
            v, t = parent[v]
            seq.append(t)
        return tuple(reversed(seq))

    if goal(start):
        return SearchResult(True, (), 1)
    truncated = False
    while queue:
        v = queue.popleft()
        for t, w in _successors(net, v):
            if w in parent:
                continue
            if len(parent) >= state_cap:
                truncated = True
                continue
            parent[w] = (v, t)
            if goal(w):
                return SearchResult(True, path_to(w), len(parent))
            queue.append(w)
    return SearchResult(None if truncated else False, None, len(parent))


def reachable_bounded(pn: PetriNet, state_cap: int) -> tuple[set[Marking], bool]:
    """All reachable markings up to ``state_cap``; the flag reports truncation."""
    if state_cap <= 0:
        raise ValueError("state_cap must be positive")
    net = pn.net
    start = net.to_vector(pn.initial)
    seen = {start}
    queue = deque([start])
    truncated = False
    while queue:
        v = queue.popleft()
        for _, w in _successors(net, v):
            if w in seen:
                continue
            if len(seen) >= state_cap:
                truncated = True
                continue
            seen.add(w)
            queue.append(w)
    return {net.to_marking(v) for v in seen}, truncated


@dataclass(frozen=True)
class CoverResult:
    coverable: bool
    witness: tuple[Node, ...] | None = None


def backward_coverable(pn: PetriNet, target: Mapping[Node, int]) -> CoverResult:
    """Decide whether some reachable marking covers ``target``."""
    return backward_coverable_any(pn, [target])


def backward_coverable_any(
    pn: PetriNet,
    targets: Iterable[Mapping[Node, int]],
    bounds: Mapping[Node, int] | None = None,
) -> CoverResult:
    """Coverability of the upward closure of several targets.

    Runs the backward saturation over minimal bases.  ``bounds`` may give
    known upper bounds of places on all reachable markings; basis elements
    above a bound are dropped.  The witness is replayed forward before being
    returned.
    """
    net = pn.net
    m0 = net.to_vector(pn.initial)
    cap = [None] * len(net.places)
    for p, k in (bounds or {}).items():
        if p in net.index:
            cap[net.index[p]] = k
    capped = [(i, k) for i, k in enumerate(cap) if k is not None]
    succ: dict[Vector, tuple[Node, Vector] | None] = {}
    basis: list[Vector] = []
    alive: list[bool] = []
    queue: deque[int] = deque()

    def leq(a: Vector, b: Vector) -> bool:
        return all(x <= y for x, y in zip(a, b))

    def insert(v: Vector, link: tuple[Node, Vector] | None) -> bool:
        for i, b in enumerate(basis):
            if alive[i] and leq(b, v):
                return False
        for i, b in enumerate(basis):
            if alive[i] and leq(v, b):
                alive[i] = False
        if v not in succ:
            succ[v] = link
        basis.append(v)
        alive.append(True)
        queue.append(len(basis) - 1)
        return True

    def witness(v: Vector) -> tuple[Node, ...]:
        seq = []
        link = succ[v]
        while link is not None:
            t, v = link
            seq.append(t)
            link = succ[v]
        return tuple(seq)

    hit: Vector | None = None
    goals = sorted(net.to_vector(t) for t in targets)
    for tgt in goals:
        if any(tgt[j] > k for j, k in capped):
            continue
        if insert(tgt, None) and leq(tgt, m0) and hit is None:
            hit = tgt
    if hit is None:
        for i, b in enumerate(basis):
            if alive[i] and leq(b, m0):
                hit = b
                break
    while hit is None and queue:
        i = queue.popleft()
        if not alive[i]:
            continue
        b = basis[i]
        for t, a, post in net._vectors:
            if not any(x and y for x, y in zip(post, b)):
                # t produces nothing b needs, so its predecessor lies above b
                continue
            pb = tuple(max(x, y - z + x) for x, y, z in zip(a, b, post))
            if pb == b or any(pb[j] > k for j, k in capped):
                continue
            if insert(pb, (t, b)) and leq(pb, m0):
                hit = pb
                break
    if hit is None:
        return CoverResult(False)
    seq = witness(hit)
    final = fire_sequence(net, pn.initial, seq)
    if not any(covers(final, net.to_marking(v)) for v in goals):
        raise AssertionError("backward witness failed to replay")
    return CoverResult(True, seq)


def quotient(pn: PetriNet, eq: PlaceEquivalence) -> PetriNet:
    """Collapse places by ``eq``; transitions with equal class footprints merge."""
    net = pn.net
    missing = [q for q in net.places if q not in eq.class_of]
    if missing:
        raise NetError(f"equivalence is not total: {missing[:3]!r}")
    classes = {eq.class_of[q] for q in net.places}
    pre: dict[Node, dict[Node, int]] = {}
    post: dict[Node, dict[Node, int]] = {}
    seen: set[tuple] = set()
    for t in net.transitions:
        a: dict[Node, int] = {}
        b: dict[Node, int] = {}
        for q, w in net.pre[t].items():
            c = eq.class_of[q]
            a[c] = a.get(c, 0) + w
        for q, w in net.post[t].items():
            c = eq.class_of[q]
            b[c] = b.get(c, 0) + w
        key = (frozenset(a.items()), frozenset(b.items()))
        if key in seen:
            continue
        seen.add(key)
        pre[t] = a
        post[t] = b
    init: dict[Node, int] = {}
    for q, k in pn.initial.items():
        c = eq.class_of[q]
        init[c] = _checked(init.get(c, 0) + k, c)
    return PetriNet(Net.build(classes, pre, post), Marking(init))


def project(m: Mapping[Node, int], eq: PlaceEquivalence) -> Marking:
    out: dict[Node, int] = {}
    for q, k in m.items():
        c = eq.class_of[q]
        out[c] = out.get(c, 0) + k
    return Marking(out)
