"""One test per acceptance criterion; each prints a PASS or FAIL line."""

from __future__ import annotations

import itertools
import random
import time
from collections import Counter

from hrverify.behaviors import FoldedAlgebra, beta, class_place, concrete_fold, fold
from hrverify.cli import main, run_queries
from hrverify.counting import SAFE, CountingAbstraction, init_projection
from hrverify.grammar import Atom, Query, derive, eval_term
from hrverify.netio import read_lola, read_pnml, write_lola, write_pnml
from hrverify.oracle import COVERED, INCONCLUSIVE, concrete_cover, enumerate_instances
from hrverify.pebble import (
    COVERABLE,
    compute_K,
    decide_cover_pps,
    decide_cover_term,
    degree,
    degree_bounded_cover,
    fire_arrows,
    fireable_subsequence,
    footprint_covers,
    footprint_of_sequence,
    initial_footprint,
    pebble_places,
)
from hrverify.petri import (
    Marking,
    Net,
    NetError,
    PetriNet,
    PlaceEquivalence,
    covers,
    fire_sequence,
    project,
    quotient,
)
from hrverify.systems import eval_system, restrict

from .conftest import SPEC_NAMES, load, spec_path
from .pebble_cases import brute_fireable, is_submultiset, random_case, reachable_pebbles


def test_criterion_1_mutex_safe(capsys, criterion):
    details = []
    ok = True
    for name in ("chain", "star"):
        t0 = time.perf_counter()
        code = main(["check", spec_path(name)])
        secs = time.perf_counter() - t0
        out = capsys.readouterr().out
        good = code == 0 and "QUERY mutex: SAFE" in out.splitlines() and secs < 1.0
        ok = ok and good
        details.append(f"{name} mutex {'SAFE' if 'QUERY mutex: SAFE' in out else 'not SAFE'} in {secs:.2f}s")
    with capsys.disabled():
        criterion(1, ok, "; ".join(details))
    assert ok


def side(d: dict) -> tuple:
    return tuple(sorted((class_place(q), w) for q, w in d.items()))


def closed_instance(name: str, n: int):
    sp = load(name)
    s = next(s for _, s in enumerate_instances(sp.grammar, sp.signature, n) if len(s.vlabel) == n)
    return sp, restrict(s, ())


def test_criterion_2_fold_goldens(capsys, criterion):
    work = {(side({"tok": 1}), side({"work": 1})), (side({"work": 1}), side({"tok": 1}))}
    left = {
        (side({"tokC": 1, "nok": 1}), side({"nokC": 1, "tok": 1})),
        (side({"tok": 1, "nok": 1}), side({"nok": 1, "tok": 1})),
    } | work
    right = {
        (side({"tokC": 1, "nok": 1}), side({"nokC": 1, "tok": 1})),
        (side({"nokC": 1, "tok": 1}), side({"tokC": 1, "nok": 1})),
    } | work
    places = frozenset(class_place(q) for q in ("tokC", "nokC", "tok", "nok", "work"))
    init = Marking({class_place("tokC"): 1, class_place("nok"): 3})
    results = []
    for name, golden in (("chain", left), ("star", right)):
        sp, s = closed_instance(name, 4)
        f = fold(beta(s, sp.signature))
        good = f.places == places and f.transitions == frozenset(golden) and f.visible == frozenset() and f.initial == init
        results.append((name, good))
    ok = all(g for _, g in results)
    with capsys.disabled():
        criterion(2, ok, ", ".join(f"{n} {'equal' if g else 'differs'}" for n, g in results))
    assert ok


def derived_terms(name: str, want: int = 100) -> list:
    sp = load(name)
    for bound in (20, 40, 80, 160, 320, 640, 1280):
        terms = [t for _, t in itertools.islice(derive(sp.grammar, bound), want)]
        if len(terms) >= want:
            return terms
    return terms


def test_criterion_3_homomorphism(capsys, criterion):
    counts = {}
    bad = 0
    for name in SPEC_NAMES:
        sp = load(name)
        alg = FoldedAlgebra(sp.signature)
        terms = derived_terms(name)
        counts[name] = len(terms)
        for t in terms:
            if eval_term(t, alg) != concrete_fold(eval_system(t, sp.signature), sp.signature):
                bad += 1
    ok = bad == 0 and min(counts.values()) >= 100
    with capsys.disabled():
        criterion(3, ok, f"{sum(counts.values())} terms over {len(counts)} grammars, min {min(counts.values())}, mismatches {bad}")
    assert ok


def test_criterion_4_init_projection(capsys, criterion):
    t0 = time.perf_counter()
    details = []
    ok = True
    for name in ("chain", "star"):
        sp = load(name)
        ab = CountingAbstraction(sp.grammar, sp.signature)
        got = set().union(*(init_projection(e.init, 10) for e in ab.entries))
        want = set()
        for _, s in enumerate_instances(sp.grammar, sp.signature, 10):
            c = Counter(sp.signature.types[lab].initial_place for lab in s.vlabel)
            want.add(Marking({class_place(q): k for q, k in c.items()}))
        ok = ok and got == want
        details.append(f"{name} {len(got)}/{len(want)} markings")
    secs = time.perf_counter() - t0
    ok = ok and secs < 5.0
    with capsys.disabled():
        criterion(4, ok, f"{', '.join(details)} in {secs:.2f}s")
    assert ok


def test_criterion_5_oracle_soundness(capsys, criterion, tmp_path):
    t0 = time.perf_counter()
    disc = {}
    for name in SPEC_NAMES:
        out = tmp_path / f"{name}.txt"
        main(["oracle", spec_path(name), "--max-vertices", "8", "--state-cap", str(10**6), "--out", str(out)])
        last = out.read_text().splitlines()[-1]
        disc[name] = int(last.rsplit("discrepancies=", 1)[1])
    capsys.readouterr()
    secs = time.perf_counter() - t0
    ok = not any(disc.values()) and secs < 60.0
    with capsys.disabled():
        criterion(5, ok, f"{sum(disc.values())} discrepancies over {len(disc)} grammars in {secs:.1f}s")
    assert ok


def random_net(rnd: random.Random) -> tuple[PetriNet, PlaceEquivalence]:
    n = rnd.randint(1, 6)
    places = [f"p{i}" for i in range(n)]

    def arcs() -> dict:
        return {q: rnd.randint(1, 2) for q in rnd.sample(places, rnd.randint(0, min(2, n)))}

    k = rnd.randint(0, 5)
    pre = {f"t{j}": arcs() for j in range(k)}
    post = {f"t{j}": arcs() for j in range(k)}
    init = {q: rnd.randint(0, 2) for q in places}
    classes = rnd.randint(1, n)
    eq = PlaceEquivalence({q: f"c{rnd.randrange(classes)}" for q in places})
    return PetriNet(Net.build(places, pre, post), Marking(init)), eq


def paths_to_states(pn: PetriNet, cap: int) -> dict[Marking, tuple]:
    """Breadth-first firing paths to up to ``cap`` reachable markings."""
    paths = {pn.initial: ()}
    frontier = [pn.initial]
    while frontier and len(paths) < cap:
        nxt = []
        for m in frontier:
            for t in pn.net.transitions:
                if all(m[q] >= w for q, w in pn.net.pre[t].items()):
                    m2 = fire_sequence(pn.net, m, [t])
                    if m2 not in paths and len(paths) < cap:
                        paths[m2] = paths[m] + (t,)
                        nxt.append(m2)
        frontier = nxt
    return paths


def quotient_image(pn: PetriNet, qn: PetriNet, eq: PlaceEquivalence) -> dict:
    """Each transition of ``pn`` mapped to the quotient transition with its footprint."""

    def key(net, t, cls):
        a, b = Counter(), Counter()
        for q, w in net.pre[t].items():
            a[cls(q)] += w
        for q, w in net.post[t].items():
            b[cls(q)] += w
        return frozenset(a.items()), frozenset(b.items())

    by_key = {key(qn.net, t, lambda q: q): t for t in qn.net.transitions}
    return {t: by_key[key(pn.net, t, eq.class_of.__getitem__)] for t in pn.net.transitions}


def test_criterion_6_quotient(capsys, criterion):
    rnd = random.Random(2024)
    violations = 0
    reach_checks = cover_checks = 0
    for _ in range(200):
        pn, eq = random_net(rnd)
        qn = quotient(pn, eq)
        image = quotient_image(pn, qn, eq)
        paths = paths_to_states(pn, 400)
        images = {}
        for m, path in paths.items():
            reach_checks += 1
            try:
                images[m] = fire_sequence(qn.net, qn.initial, [image[t] for t in path])
            except NetError:
                violations += 1
                continue
            if images[m] != project(m, eq):
                violations += 1
        for _ in range(10):
            target = Marking({q: rnd.randint(0, 3) for q in pn.net.places})
            hit = next((m for m in paths if covers(m, target)), None)
            if hit is not None and hit in images:
                cover_checks += 1
                if not covers(images[hit], project(target, eq)):
                    violations += 1
    ok = violations == 0
    with capsys.disabled():
        criterion(6, ok, f"200 nets, {reach_checks} reach and {cover_checks} cover inclusions, {violations} violations")
    assert ok


def targets_up_to(places: list[str], K: int):
    for counts in itertools.product(range(K + 1), repeat=len(places)):
        if sum(counts) <= K:
            yield {q: k for q, k in zip(places, counts) if k}


def pebble_covered(s, sig, m_tgt) -> bool:
    """Exhaustive check over pebble placements, independent of the net code."""
    for state in reachable_pebbles(s, initial_footprint(s, sig)):
        if footprint_covers(s, sig, dict(enumerate(state)), m_tgt):
            return True
    return False


def test_criterion_7_pebble(capsys, criterion):
    t0 = time.perf_counter()
    violations = []
    cases = 0
    for name in ("token_ring", "pps_star"):
        sp = load(name)
        sig = sp.signature
        owner = {}
        for p in sig.types.values():
            for q in pebble_places(p):
                owner[q] = p.name
        instances = enumerate_instances(sp.grammar, sig, 8)
        for m_tgt in targets_up_to(sorted(owner), 3):
            K = compute_K(m_tgt)
            q = Query("t", "cover", tuple(Atom(owner[pl], pl, None, k) for pl, k in sorted(m_tgt.items())))
            any_cover = False
            for term, s in instances:
                cases += 1
                concrete = concrete_cover(s, sig, q)
                brute = pebble_covered(s, sig, m_tgt)
                if concrete != INCONCLUSIVE and (concrete == COVERED) != brute:
                    violations.append(f"{name} {m_tgt} oracle")
                any_cover = any_cover or brute
                if decide_cover_term(term, sig, m_tgt) != brute:
                    violations.append(f"{name} {m_tgt} exactness")
                w = degree_bounded_cover(s, sig, m_tgt, K)
                if (w is not None) != brute:
                    violations.append(f"{name} {m_tgt} degree-K")
                if w is not None:
                    end = fire_arrows(s, initial_footprint(s, sig), w)
                    if end is None or degree(w) > K or not footprint_covers(s, sig, end, m_tgt):
                        violations.append(f"{name} {m_tgt} degree-K witness")
            v = decide_cover_pps(sp.grammar, sig, q)
            if any_cover and v.answer != COVERABLE:
                violations.append(f"{name} {m_tgt} completeness")
    rnd = random.Random(11)
    for _ in range(500):
        s, pebbles, seq = random_case(rnd)
        out = fireable_subsequence(s, pebbles, seq)
        if (out is not None) != brute_fireable(s, pebbles, seq):
            violations.append("fireable-subsequence existence")
        elif out is not None and not (
            is_submultiset(out, seq)
            and footprint_of_sequence(s, out) == footprint_of_sequence(s, seq)
            and fire_arrows(s, pebbles, out) is not None
        ):
            violations.append("fireable-subsequence witness")
    secs = time.perf_counter() - t0
    ok = not violations and secs < 60.0
    with capsys.disabled():
        criterion(7, ok, f"{cases} instance/target pairs, 500 random sequences, {len(violations)} violations in {secs:.1f}s")
    assert ok, violations[:5]


def test_criterion_8_export_round_trip(capsys, criterion):
    nets = 0
    bad = 0
    for name in SPEC_NAMES:
        sp = load(name)
        for e in CountingAbstraction(sp.grammar, sp.signature).entries:
            nets += 1
            lola = write_lola(e.combined.pn)
            pnml = write_pnml(e.combined.pn, name)
            if write_lola(read_lola(lola)) != lola or write_pnml(read_pnml(pnml), name) != pnml:
                bad += 1
    ok = bad == 0
    with capsys.disabled():
        criterion(8, ok, f"{nets} combined nets, {bad} round-trip differences")
    assert ok


def test_criterion_9_benchmarks(capsys, criterion):
    # "~30" and "~35" are read as within a quarter of the stated sizes
    place_cap, trans_cap, net_cap = 30 * 1.25, 35 * 1.25, 20
    t0 = time.perf_counter()
    details = []
    ok = True
    for name in ("ring", "star", "tree_down", "philosophers"):
        sp = load(name)
        ab = CountingAbstraction(sp.grammar, sp.signature)
        _, outcomes = run_queries(sp, "counting", 10**4, ab)
        safe = sum(o.verdict.answer == SAFE for o in outcomes)
        places = max(len(e.combined.pn.net.places) for e in ab.entries)
        trans = max(len(e.combined.pn.net.transitions) for e in ab.entries)
        nets = len(ab.entries)
        ok = ok and safe >= 1 and places <= place_cap and trans <= trans_cap and nets <= net_cap
        details.append(f"{name} safe={safe} places={places} transitions={trans} nets={nets}")
    secs = time.perf_counter() - t0
    ok = ok and secs < 10.0
    with capsys.disabled():
        criterion(9, ok, f"{'; '.join(details)}; {secs:.1f}s")
    assert ok
