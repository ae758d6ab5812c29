"""HR terms and grammars, the spec-file parser, and fixpoints in finite algebras."""

from __future__ import annotations

import itertools
import logging
import re
from collections import deque
from collections.abc import Callable, Hashable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Protocol, Union

from .systems import ProcessType, Signature, TopologyError, check_permutation

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class Edge:
    label: tuple[str, str]
    s1: str
    s2: str


@dataclass(frozen=True)
class Restrict:
    tau: frozenset[str]
    child: Term


@dataclass(frozen=True)
class Rename:
    alpha: tuple[tuple[str, str], ...]
    child: Term

    @property
    def mapping(self) -> dict[str, str]:
        return dict(self.alpha)


@dataclass(frozen=True)
class Compose:
    left: Term
    right: Term


@dataclass(frozen=True)
class Ref:
    name: Hashable


Term = Union[Edge, Restrict, Rename, Compose, Ref]


def make_rename(alpha: Mapping[str, str], child: Term) -> Rename:
    return Rename(tuple(sorted((a, b) for a, b in alpha.items() if a != b)), child)


def children(t: Term) -> tuple[Term, ...]:
    if isinstance(t, (Restrict, Rename)):
        return (t.child,)
    if isinstance(t, Compose):
        return (t.left, t.right)
    return ()


def rebuild(t: Term, kids: tuple[Term, ...]) -> Term:
    if isinstance(t, Restrict):
        return Restrict(t.tau, kids[0])
    if isinstance(t, Rename):
        return Rename(t.alpha, kids[0])
    if isinstance(t, Compose):
        return Compose(kids[0], kids[1])
    return t


def size(t: Term) -> int:
    """Number of constructor nodes; references count zero."""
    stack, n = [t], 0
    while stack:
        x = stack.pop()
        if not isinstance(x, Ref):
            n += 1
        stack.extend(children(x))
    return n


def refs(t: Term) -> list[Hashable]:
    out, stack = [], [t]
    while stack:
        x = stack.pop()
        if isinstance(x, Ref):
            out.append(x.name)
        stack.extend(reversed(children(x)))
    return out


def is_ground(t: Term) -> bool:
    return not refs(t)


def _alpha_text(alpha: tuple[tuple[str, str], ...]) -> str:
    m = dict(alpha)
    parts, done = [], set()
    for a, b in alpha:
        if a in done:
            continue
        if m.get(b) == a:
            parts.append(f"{a}<->{b}")
            done.update((a, b))
        else:
            parts.append(f"{a}->{b}")
            done.add(a)
    return ", ".join(parts)


def show(t: Term) -> str:
    """Render a term in spec-file syntax."""
    if isinstance(t, Edge):
        return f"edge ({t.label[0]},{t.label[1]}) ({t.s1},{t.s2})"
    if isinstance(t, Ref):
        return str(t.name)
    if isinstance(t, Restrict):
        return f"restrict {{{','.join(sorted(t.tau))}}} {_wrap(t.child)}"
    if isinstance(t, Rename):
        return f"rename ({_alpha_text(t.alpha)}) {_wrap(t.child)}"
    return f"{show(t.left)} + {_wrap(t.right) if isinstance(t.right, Compose) else show(t.right)}"


def _wrap(t: Term) -> str:
    return f"({show(t)})" if isinstance(t, Compose) else show(t)


# --------------------------------------------------------------------------
# algebras


class Algebra(Protocol):
    def edge(self, label: tuple[str, str], s1: str, s2: str): ...

    def restrict(self, x, tau: frozenset[str]): ...

    def rename(self, x, alpha: Mapping[str, str]): ...

    def compose(self, x, y): ...


def eval_term(t: Term, alg: Algebra, env: Mapping[Hashable, object] | None = None):
    """Evaluate a term bottom-up; references are looked up in ``env``."""
    if isinstance(t, Edge):
        return alg.edge(t.label, t.s1, t.s2)
    if isinstance(t, Ref):
        if env is None or t.name not in env:
            raise ValueError(f"cannot evaluate nonterminal {t.name}")
        return env[t.name]
    if isinstance(t, Restrict):
        return alg.restrict(eval_term(t.child, alg, env), t.tau)
    if isinstance(t, Rename):
        return alg.rename(eval_term(t.child, alg, env), t.mapping)
    return alg.compose(eval_term(t.left, alg, env), eval_term(t.right, alg, env))


class VisibleAlgebra:
    """Visible-source sets; drives the annotation of grammars."""

    def edge(self, label, s1, s2):
        return frozenset((s1, s2))

    def restrict(self, x, tau):
        return x & frozenset(tau)

    def rename(self, x, alpha):
        return frozenset(alpha.get(s, s) for s in x)

    def compose(self, x, y):
        return x | y


class UnitAlgebra:
    """One-element algebra; its language is nonempty iff the grammar is."""

    def edge(self, label, s1, s2):
        return ()

    def restrict(self, x, tau):
        return ()

    def rename(self, x, alpha):
        return ()

    def compose(self, x, y):
        return ()


# --------------------------------------------------------------------------
# grammars


@dataclass(frozen=True)
class Rule:
    lhs: Hashable
    rhs: Term


@dataclass(frozen=True)
class HrGrammar:
    nonterminals: tuple[Hashable, ...]
    rules: tuple[Rule, ...]
    axioms: tuple[Hashable, ...]

    def __post_init__(self) -> None:
        known = set(self.nonterminals)
        for r in self.rules:
            if r.lhs not in known:
                raise ValueError(f"rule for undeclared nonterminal {r.lhs}")
            for n in refs(r.rhs):
                if n not in known:
                    raise ValueError(f"reference to undeclared nonterminal {n}")
        for a in self.axioms:
            if a not in known:
                raise ValueError(f"axiom {a} is not a nonterminal")

    @classmethod
    def of(cls, rules: Iterable[tuple[Hashable, Term]], axioms: Iterable[Hashable]) -> HrGrammar:
        rs = tuple(Rule(a, b) for a, b in rules)
        ax = tuple(dict.fromkeys(axioms))
        nts = list(dict.fromkeys([r.lhs for r in rs] + list(ax)))
        for r in rs:
            for n in refs(r.rhs):
                if n not in nts:
                    nts.append(n)
        return cls(tuple(nts), rs, ax)

    def rules_for(self, x: Hashable) -> list[Rule]:
        return [r for r in self.rules if r.lhs == x]


def is_normal_rhs(t: Term) -> bool:
    return all(isinstance(c, (Ref, Edge)) for c in children(t))


def is_normal(g: HrGrammar) -> bool:
    return all(is_normal_rhs(r.rhs) for r in g.rules)


def normalize(g: HrGrammar) -> HrGrammar:
    """Split every rule so that each right-hand side has one operation.

    Edge constants stay inline as leaves.  A fresh nonterminal is named
    ``X#k`` where ``k`` is the preorder position of its subterm, counted
    over all rules of ``X`` in declaration order.
    """
    if is_normal(g):
        return g
    out: list[Rule] = []
    fresh: list[Hashable] = []
    counter: dict[Hashable, int] = {}

    for rule in g.rules:
        base = counter.get(rule.lhs, 0)
        index: dict[int, int] = {}
        order = 0
        stack = [rule.rhs]
        while stack:
            x = stack.pop()
            index[id(x)] = base + order
            order += 1
            stack.extend(reversed(children(x)))
        counter[rule.lhs] = base + order

        def split(lhs: Hashable, t: Term) -> None:
            kids = []
            for c in children(t):
                if isinstance(c, (Ref, Edge)):
                    kids.append(c)
                else:
                    name = f"{rule.lhs}#{index[id(c)]}"
                    fresh.append(name)
                    kids.append(Ref(name))
                    split(name, c)
            out.append(Rule(lhs, rebuild(t, tuple(kids))))

        split(rule.lhs, rule.rhs)

    nts = list(g.nonterminals) + fresh
    return HrGrammar(tuple(nts), tuple(out), g.axioms)


def min_sizes(g: HrGrammar) -> dict[Hashable, float]:
    best: dict[Hashable, float] = {x: float("inf") for x in g.nonterminals}
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            v = size(r.rhs) + sum(best[n] for n in refs(r.rhs))
            if v < best[r.lhs]:
                best[r.lhs] = v
                changed = True
    return best


def _expand_leftmost(t: Term, rhs: Term) -> Term | None:
    """Replace the leftmost reference of ``t`` by ``rhs``."""
    if isinstance(t, Ref):
        return rhs
    kids = list(children(t))
    for i, c in enumerate(kids):
        if refs(c):
            kids[i] = _expand_leftmost(c, rhs)
            return rebuild(t, tuple(kids))
    return None


def derive(g: HrGrammar, max_term_size: int) -> Iterator[tuple[Hashable, Term]]:
    """Ground terms of size at most ``max_term_size``, breadth first.

    Every ground term is produced once, paired with the first axiom that
    derives it.  The leftmost reference is always expanded, with rules taken
    in declaration order.
    """
    if max_term_size <= 0:
        raise ValueError("max_term_size must be positive")
    ms = min_sizes(g)

    def bound(t: Term) -> float:
        return size(t) + sum(ms[n] for n in refs(t))

    seen_forms: set[tuple[Hashable, Term]] = set()
    emitted: set[Term] = set()
    queue: deque[tuple[Hashable, Term]] = deque()
    for a in g.axioms:
        if ms[a] <= max_term_size and (a, Ref(a)) not in seen_forms:
            seen_forms.add((a, Ref(a)))
            queue.append((a, Ref(a)))
    by_lhs = {x: g.rules_for(x) for x in g.nonterminals}
    while queue:
        ax, form = queue.popleft()
        names = refs(form)
        if not names:
            if form not in emitted:
                emitted.add(form)
                yield ax, form
            continue
        for r in by_lhs[names[0]]:
            nxt = _expand_leftmost(form, r.rhs)
            if bound(nxt) > max_term_size:
                continue
            key = (ax, nxt)
            if key in seen_forms:
                continue
            seen_forms.add(key)
            queue.append(key)


def _eval_set(t: Term, alg: Algebra, lang: Mapping[Hashable, set]) -> set:
    if isinstance(t, Ref):
        return set(lang[t.name])
    if isinstance(t, Edge):
        return {alg.edge(t.label, t.s1, t.s2)}
    if isinstance(t, Restrict):
        return {alg.restrict(x, t.tau) for x in _eval_set(t.child, alg, lang)}
    if isinstance(t, Rename):
        m = t.mapping
        return {alg.rename(x, m) for x in _eval_set(t.child, alg, lang)}
    left = _eval_set(t.left, alg, lang)
    if not left:
        return set()
    right = _eval_set(t.right, alg, lang)
    return {alg.compose(x, y) for x in left for y in right}


def kleene_language(g: HrGrammar, alg: Algebra) -> tuple[dict[Hashable, frozenset], frozenset]:
    """Least fixpoint of the rule system in a finite algebra.

    Returns the language of every nonterminal and the union over axioms.
    """
    lang: dict[Hashable, set] = {x: set() for x in g.nonterminals}
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            new = _eval_set(r.rhs, alg, lang) - lang[r.lhs]
            if new:
                lang[r.lhs] |= new
                changed = True
    frozen = {x: frozenset(v) for x, v in lang.items()}
    total = frozenset().union(*(frozen[a] for a in g.axioms)) if g.axioms else frozenset()
    return frozen, total


@dataclass(frozen=True)
class Tagged:
    """A nonterminal refined by an algebra value; ``tag`` names the value."""

    base: Hashable
    tag: str

    def __str__(self) -> str:
        return f"{self.base}^{self.tag}"


@dataclass(frozen=True)
class FilteredGrammar:
    """A grammar over :class:`Tagged` nonterminals plus their values."""

    grammar: HrGrammar
    value_of: Mapping[Tagged, object] = field(hash=False)


def _combos(rhs: Term, lang: Mapping[Hashable, frozenset], key: Callable[[object], str]) -> Iterator[tuple]:
    names = refs(rhs)
    pools = [sorted(lang[n], key=key) for n in names]
    yield from itertools.product(*pools)


def _substitute(rhs: Term, mapping: list[Hashable]) -> Term:
    it = iter(mapping)

    def go(t: Term) -> Term:
        if isinstance(t, Ref):
            return Ref(next(it))
        return rebuild(t, tuple(go(c) for c in children(t)))

    return go(rhs)


def filter_grammar(
    g: HrGrammar,
    alg: Algebra,
    targets: object | Iterable[object],
    label: Callable[[object], str] = repr,
    many: bool = False,
) -> FilteredGrammar:
    """Grammar whose language is L(g) restricted to the preimage of ``targets``.

    With ``many`` false, ``targets`` is a single algebra element.
    """
    if not is_normal(g):
        raise ValueError("filtering requires a normalized grammar")
    wanted = set(targets) if many else {targets}
    lang, _ = kleene_language(g, alg)
    tags: dict[object, str] = {}

    def tag_of(v: object) -> str:
        if v not in tags:
            tags[v] = label(v)
        return tags[v]

    def tagged(x: Hashable, v: object) -> Tagged:
        return Tagged(x, tag_of(v))

    value_of: dict[Tagged, object] = {}
    rules: list[Rule] = []
    seen_rules: set[Rule] = set()
    for r in g.rules:
        names = refs(r.rhs)
        for combo in _combos(r.rhs, lang, tag_of):
            env = {("#", i): v for i, v in enumerate(combo)}
            probe = _substitute(r.rhs, [("#", i) for i in range(len(combo))])
            b = eval_term(probe, alg, env)
            lhs = tagged(r.lhs, b)
            value_of[lhs] = b
            kids = []
            for n, v in zip(names, combo):
                t = tagged(n, v)
                value_of[t] = v
                kids.append(t)
            rule = Rule(lhs, _substitute(r.rhs, kids))
            if rule not in seen_rules:
                seen_rules.add(rule)
                rules.append(rule)
    axioms: list[Tagged] = []
    for a in g.axioms:
        for c in sorted((c for c in wanted if c in lang[a]), key=tag_of):
            t = tagged(a, c)
            value_of[t] = c
            axioms.append(t)
    reach: set[Tagged] = set(axioms)
    frontier = list(axioms)
    by_lhs: dict[Tagged, list[Rule]] = {}
    for r in rules:
        by_lhs.setdefault(r.lhs, []).append(r)
    while frontier:
        x = frontier.pop()
        for r in by_lhs.get(x, []):
            for n in refs(r.rhs):
                if n not in reach:
                    reach.add(n)
                    frontier.append(n)
    kept = [r for r in rules if r.lhs in reach]
    nts = list(dict.fromkeys(list(axioms) + [r.lhs for r in kept]))
    out = HrGrammar(tuple(nts), tuple(kept), tuple(dict.fromkeys(axioms)))
    return FilteredGrammar(out, {x: value_of[x] for x in nts})


def _tau_label(tau: object) -> str:
    return "{" + ",".join(sorted(tau)) + "}"  # type: ignore[arg-type]


def annotate(g: HrGrammar) -> FilteredGrammar:
    """Refine nonterminals by the set of sources visible in their derivations."""
    alg = VisibleAlgebra()
    _, total = kleene_language(g, alg)
    return filter_grammar(g, alg, total, label=_tau_label, many=True)


def check_annotation(ag: FilteredGrammar) -> list[str]:
    """Rule-by-rule check of the visibility equations; returns violations."""
    alg = VisibleAlgebra()
    bad = []
    for r in ag.grammar.rules:
        got = eval_term(r.rhs, alg, ag.value_of)
        if got != ag.value_of[r.lhs]:
            bad.append(f"{r.lhs} -> {show(r.rhs)}")
    return bad


def productive(g: HrGrammar) -> set[Hashable]:
    lang, _ = kleene_language(g, UnitAlgebra())
    return {x for x, v in lang.items() if v}


# --------------------------------------------------------------------------
# spec files


VERDICT_WORDS = ("SAFE", "UNKNOWN", "COVERABLE", "UNCOVERABLE", "EXPORTED")


@dataclass(frozen=True)
class Atom:
    """A constraint on the token count of ``place`` summed over ``ptype``.

    With ``sigma`` set, only the vertex bound to that source counts.
    """

    ptype: str
    place: str
    sigma: str | None
    count: int

    def text(self, op: str) -> str:
        pin = f"*{self.sigma}" if self.sigma else ""
        return f"{self.ptype}{pin}.{self.place} {op} {self.count}"


@dataclass(frozen=True)
class Query:
    qid: str
    kind: str
    atoms: tuple[Atom, ...]
    expect: str | None = None
    line: int = 0


@dataclass(frozen=True)
class Spec:
    signature: Signature
    grammar: HrGrammar
    queries: tuple[Query, ...]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class ParseError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


_TOKEN = re.compile(r"\s*(?:(<->|->|>=|==|[(){},+=*.:])|([^\W\d][\w']*)|(\d+))", re.UNICODE)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str, line: int, col0: int) -> list[_Tok]:
    out, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError([Diagnostic(line, col0 + pos + 1, f"unexpected character {text[pos:].lstrip()[:1]!r}")])
        sym, ident, num = m.groups()
        start = m.start(m.lastindex) + col0 + 1
        if sym:
            out.append(_Tok("sym", sym, line, start))
        elif ident:
            out.append(_Tok("id", ident, line, start))
        else:
            out.append(_Tok("num", num, line, start))
        pos = m.end()
    return out


class _TermParser:
    KEYWORDS = {"edge", "restrict", "rename"}

    def __init__(self, toks: list[_Tok], line: int):
        self.toks = toks
        self.i = 0
        self.line = line

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def fail(self, msg: str) -> ParseError:
        t = self.peek()
        if t is None:
            last = self.toks[-1] if self.toks else None
            return ParseError([Diagnostic(last.line if last else self.line, (last.col + len(last.text)) if last else 1, msg)])
        return ParseError([Diagnostic(t.line, t.col, msg)])

    def take(self, text: str | None = None, kind: str | None = None) -> _Tok:
        t = self.peek()
        if t is None or (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = repr(text) if text else kind
            got = repr(t.text) if t else "end of input"
            raise self.fail(f"expected {want}, found {got}")
        self.i += 1
        return t

    def term(self) -> Term:
        t = self.unary()
        while self.peek() is not None and self.peek().text == "+":
            self.take("+")
            t = Compose(t, self.unary())
        return t

    def unary(self) -> Term:
        t = self.peek()
        if t is None:
            raise self.fail("expected a term")
        if t.text == "(":
            self.take("(")
            inner = self.term()
            self.take(")")
            return inner
        if t.kind != "id":
            raise self.fail(f"unexpected {t.text!r}")
        if t.text == "edge":
            self.take()
            self.take("(")
            a = self.take(kind="id").text
            self.take(",")
            b = self.take(kind="id").text
            self.take(")")
            self.take("(")
            s1 = self.take(kind="id")
            self.take(",")
            s2 = self.take(kind="id")
            self.take(")")
            node = Edge((a, b), s1.text, s2.text)
            object.__setattr__(node, "_pos", (s1.line, s1.col))
            return node
        if t.text == "restrict":
            self.take()
            self.take("{")
            tau = []
            if self.peek() is not None and self.peek().text != "}":
                tau.append(self.take(kind="id").text)
                while self.peek() is not None and self.peek().text == ",":
                    self.take(",")
                    tau.append(self.take(kind="id").text)
            self.take("}")
            return Restrict(frozenset(tau), self.unary())
        if t.text == "rename":
            self.take()
            self.take("(")
            alpha: dict[str, str] = {}
            while True:
                a = self.take(kind="id").text
                arrow = self.take(kind="sym")
                b = self.take(kind="id").text
                if arrow.text == "<->":
                    pairs = [(a, b), (b, a)]
                elif arrow.text == "->":
                    pairs = [(a, b)]
                else:
                    raise ParseError([Diagnostic(arrow.line, arrow.col, "expected '<->' or '->'")])
                for x, y in pairs:
                    if x in alpha and alpha[x] != y:
                        raise ParseError([Diagnostic(arrow.line, arrow.col, f"{x} renamed twice")])
                    alpha[x] = y
                if self.peek() is not None and self.peek().text == ",":
                    self.take(",")
                    continue
                break
            self.take(")")
            node = make_rename(alpha, self.unary())
            object.__setattr__(node, "_pos", (t.line, t.col))
            return node
        self.take()
        return Ref(t.text)


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def _balance(text: str) -> int:
    return text.count("(") + text.count("{") - text.count(")") - text.count("}")


def parse_spec(text: str) -> Spec:
    """Parse and validate a specification, raising :class:`ParseError`."""
    diags: list[Diagnostic] = []
    warnings: list[str] = []
    types: dict[str, dict] = {}
    type_line: dict[str, int] = {}
    source_types: dict[str, str] = {}
    source_line: dict[str, tuple[int, int]] = {}
    rules: list[tuple[str, Term, int]] = []
    axioms: list[tuple[str, int, int]] = []
    raw_queries: list[tuple[str, str, list[_Tok], int]] = []
    expects: dict[str, tuple[str, int]] = {}
    current: dict | None = None
    in_grammar = False

    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        body = _strip_comment(lines[i])
        i += 1
        if not body.strip():
            continue
        # join continuation lines of grammar rules
        while (_balance(body) > 0 or body.rstrip().endswith("+")) and i < len(lines):
            body = body + " " + _strip_comment(lines[i])
            i += 1
        try:
            toks = _tokenize(body, lineno, 0)
        except ParseError as e:
            diags.extend(e.diagnostics)
            continue
        head = toks[0]
        kw = head.text
        try:
            if kw == "process":
                if len(toks) != 2 or toks[1].kind != "id":
                    raise ParseError([Diagnostic(lineno, head.col, "expected 'process NAME'")])
                name = toks[1].text
                if name in types:
                    raise ParseError([Diagnostic(lineno, toks[1].col, f"process {name} declared twice")])
                current = {"name": name, "places": [], "init": [], "obs": {}, "int": {}}
                types[name] = current
                type_line[name] = lineno
                in_grammar = False
            elif kw in ("places", "init", "obs", "int"):
                if current is None or in_grammar:
                    raise ParseError([Diagnostic(lineno, head.col, f"'{kw}' outside a process block")])
                rest = [t for t in toks[1:] if t.text != ","]
                if kw == "places":
                    current["places"].extend(t.text for t in rest)
                elif kw == "init":
                    current["init"].extend(t.text for t in rest)
                else:
                    if len(rest) != 4 or rest[2].text != "->":
                        raise ParseError([Diagnostic(lineno, head.col, f"expected '{kw} NAME pre -> post'")])
                    tname = rest[0].text
                    if tname in current["obs"] or tname in current["int"]:
                        raise ParseError([Diagnostic(lineno, rest[0].col, f"transition {tname} declared twice")])
                    current[kw][tname] = (rest[1].text, rest[3].text)
            elif kw == "source":
                colon = [j for j, t in enumerate(toks) if t.text == ":"]
                if len(colon) != 1 or colon[0] == 1 or colon[0] != len(toks) - 2:
                    raise ParseError([Diagnostic(lineno, head.col, "expected 'source s1 s2 ... : Type'")])
                ptype = toks[-1].text
                for t in toks[1 : colon[0]]:
                    if t.text == ",":
                        continue
                    if t.text in source_types:
                        raise ParseError([Diagnostic(lineno, t.col, f"source {t.text} declared twice")])
                    source_types[t.text] = ptype
                    source_line[t.text] = (lineno, toks[-1].col)
                current = None
                in_grammar = False
            elif kw == "grammar" and len(toks) == 1:
                in_grammar = True
                current = None
            elif kw == "axiom":
                for t in toks[1:]:
                    if t.text != ",":
                        axioms.append((t.text, lineno, t.col))
            elif kw == "query":
                if len(toks) < 4 or toks[2].text not in ("cover", "reach"):
                    raise ParseError([Diagnostic(lineno, head.col, "expected 'query ID cover|reach ...'")])
                raw_queries.append((toks[1].text, toks[2].text, toks[3:], lineno))
            elif kw == "expect":
                if len(toks) != 3:
                    raise ParseError([Diagnostic(lineno, head.col, "expected 'expect ID VERDICT'")])
                expects[toks[1].text] = (toks[2].text, toks[2].col)
            elif len(toks) >= 2 and toks[1].text == "->" and head.kind == "id":
                if not in_grammar:
                    raise ParseError([Diagnostic(lineno, head.col, "rule outside a grammar block")])
                tp = _TermParser(toks[2:], lineno)
                term = tp.term()
                if tp.peek() is not None:
                    raise tp.fail(f"unexpected {tp.peek().text!r} after term")
                rules.append((head.text, term, lineno))
            else:
                raise ParseError([Diagnostic(lineno, head.col, f"unknown declaration {kw!r}")])
        except ParseError as e:
            diags.extend(e.diagnostics)

    # process types
    ptypes: dict[str, ProcessType] = {}
    for name, d in types.items():
        ln = type_line[name]
        if len(d["init"]) != 1:
            diags.append(Diagnostic(ln, 1, f"process {name} needs exactly one initial place"))
            continue
        try:
            ptypes[name] = ProcessType(name, tuple(d["places"]), d["init"][0], dict(d["obs"]), dict(d["int"]))
        except TopologyError as e:
            diags.append(Diagnostic(ln, 1, str(e)))
    for s, p in source_types.items():
        if p not in types:
            ln, col = source_line[s]
            diags.append(Diagnostic(ln, col, f"source {s} has undeclared type {p}"))
    sig = None
    try:
        sig = Signature(ptypes, {s: p for s, p in source_types.items() if p in ptypes})
    except TopologyError as e:
        diags.append(Diagnostic(1, 1, str(e)))

    if not axioms:
        diags.append(Diagnostic(max(1, len(lines)), 1, "no axiom"))

    # grammar semantics
    defined = {n for n, _, _ in rules}
    for a, ln, col in axioms:
        if a not in defined:
            warnings.append(f"{ln}:{col}: axiom {a} has no rules")
    for lhs, term, ln in rules:
        for n in refs(term):
            if n not in defined:
                diags.append(Diagnostic(ln, 1, f"undeclared nonterminal {n}"))
        if sig is not None:
            _check_term(term, sig, ln, diags)

    queries: list[Query] = []
    seen_ids: set[str] = set()
    for qid, kind, toks, ln in raw_queries:
        if qid in seen_ids:
            diags.append(Diagnostic(ln, 1, f"query {qid} declared twice"))
            continue
        seen_ids.add(qid)
        try:
            atoms, inline = _parse_atoms(toks, kind, ln)
        except ParseError as e:
            diags.extend(e.diagnostics)
            continue
        if sig is not None:
            for a in atoms:
                if a.ptype not in sig.types:
                    diags.append(Diagnostic(ln, 1, f"unknown process type {a.ptype}"))
                elif a.place not in sig.types[a.ptype].places:
                    diags.append(Diagnostic(ln, 1, f"{a.place} is not a place of {a.ptype}"))
                if a.sigma is not None and sig.source_types.get(a.sigma) != a.ptype:
                    diags.append(Diagnostic(ln, 1, f"source {a.sigma} is not a declared {a.ptype} source"))
        exp = inline or expects.get(qid, (None, 0))[0]
        if exp is not None and exp not in VERDICT_WORDS:
            diags.append(Diagnostic(ln, 1, f"unknown verdict {exp}"))
        queries.append(Query(qid, kind, tuple(atoms), exp, ln))
    for qid in expects:
        if qid not in seen_ids:
            diags.append(Diagnostic(1, 1, f"expect for unknown query {qid}"))

    if diags:
        raise ParseError(sorted(diags, key=lambda d: (d.line, d.col)))
    assert sig is not None
    g = HrGrammar.of([(lhs, t) for lhs, t, _ in rules], [a for a, _, _ in axioms])
    prod = productive(g)
    for x in g.nonterminals:
        if x not in prod:
            warnings.append(f"nonterminal {x} is unproductive")
    for w in warnings:
        log.warning(w)
    return Spec(sig, g, tuple(queries), tuple(warnings))


def _check_term(term: Term, sig: Signature, ln: int, diags: list[Diagnostic]) -> None:
    stack = [term]
    while stack:
        t = stack.pop()
        stack.extend(children(t))
        pos = getattr(t, "_pos", (ln, 1))
        if isinstance(t, Edge):
            if t.s1 == t.s2:
                diags.append(Diagnostic(*pos, f"edge needs two distinct sources, got {t.s1} twice"))
            for s, lab in ((t.s1, t.label[0]), (t.s2, t.label[1])):
                if s not in sig.source_types:
                    diags.append(Diagnostic(*pos, f"undeclared source {s}"))
                elif lab not in sig.ptype(s).observable:
                    diags.append(Diagnostic(*pos, f"{lab} is not observable in {sig.source_types[s]}"))
        elif isinstance(t, Restrict):
            for s in sorted(t.tau):
                if s not in sig.source_types:
                    diags.append(Diagnostic(ln, 1, f"undeclared source {s}"))
        elif isinstance(t, Rename):
            m = t.mapping
            unknown = [s for s in m if s not in sig.source_types] + [s for s in m.values() if s not in sig.source_types]
            if unknown:
                diags.append(Diagnostic(*pos, f"undeclared source {sorted(set(unknown))[0]}"))
                continue
            try:
                check_permutation(sig, m)
            except TopologyError as e:
                diags.append(Diagnostic(*pos, str(e)))


def _parse_atoms(toks: list[_Tok], kind: str, ln: int) -> tuple[list[Atom], str | None]:
    expect = None
    if len(toks) >= 2 and toks[-2].text == "expect":
        expect = toks[-1].text
        toks = toks[:-2]
    atoms: list[Atom] = []
    groups: list[list[_Tok]] = [[]]
    for t in toks:
        if t.text == ",":
            groups.append([])
        else:
            groups[-1].append(t)
    want_ops = (">=",) if kind == "cover" else ("=", "==")
    for grp in groups:
        if not grp:
            continue
        txt = [t.text for t in grp]
        pos = grp[0]
        sigma = None
        if len(txt) == 7 and txt[1] == "*" and txt[3] == ".":
            ptype, sigma, place, op, num = txt[0], txt[2], txt[4], txt[5], txt[6]
        elif len(txt) == 5 and txt[1] == ".":
            ptype, place, op, num = txt[0], txt[2], txt[3], txt[4]
        else:
            raise ParseError([Diagnostic(ln, pos.col, "expected 'Type.place OP n' or 'Type*src.place OP n'")])
        if op not in want_ops:
            raise ParseError([Diagnostic(ln, pos.col, f"{kind} queries use {' or '.join(want_ops)}")])
        if not num.isdigit():
            raise ParseError([Diagnostic(ln, pos.col, f"expected a count, found {num!r}")])
        atoms.append(Atom(ptype, place, sigma, int(num)))
    return atoms, expect
