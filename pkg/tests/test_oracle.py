from __future__ import annotations

from dataclasses import replace

from hrverify.behaviors import class_place
from hrverify.grammar import Atom, HrGrammar, Query, Ref, show
from hrverify.oracle import (
    COVERED,
    INCONCLUSIVE,
    NOT_COVERED,
    check_soundness,
    concrete_cover,
    enumerate_instances,
)
from hrverify.petri import Net, PetriNet

from .conftest import load


def sizes(spec, n: int) -> list[int]:
    return [len(s.vlabel) for _, s in enumerate_instances(spec.grammar, spec.signature, n)]


def test_enumerate_chain_and_star(chain, star):
    # the base rule already yields a controller and two processes
    assert sizes(chain, 5) == [3, 4, 5]
    assert sizes(star, 4) == [2, 3, 4]


def test_enumerate_empty_language(chain):
    g = HrGrammar.of([("X", Ref("X"))], ["X"])
    assert enumerate_instances(g, chain.signature, 6) == []


def test_enumerate_terms_evaluate_to_systems(chain):
    from hrverify.systems import eval_system, isomorphic

    for t, s in enumerate_instances(chain.grammar, chain.signature, 6):
        assert isomorphic(eval_system(t, chain.signature), s)


def test_enumerate_is_deterministic():
    sp = load("philosophers")
    a = [show(t) for t, _ in enumerate_instances(sp.grammar, sp.signature, 8)]
    b = [show(t) for t, _ in enumerate_instances(sp.grammar, sp.signature, 8)]
    assert a == b and a


def test_concrete_cover_examples(chain):
    inst = enumerate_instances(chain.grammar, chain.signature, 4)
    s = inst[-1][1]
    mutex = next(q for q in chain.queries if q.qid == "mutex")
    assert concrete_cover(s, chain.signature, mutex) == NOT_COVERED
    assert concrete_cover(s, chain.signature, Query("z", "cover", ())) == COVERED
    tok = Query("t", "cover", (Atom("Proc", "tok", None, 1),))
    assert concrete_cover(s, chain.signature, tok) == COVERED
    assert concrete_cover(s, chain.signature, mutex, state_cap=2) == INCONCLUSIVE


def test_concrete_reach_is_exact(chain):
    s = enumerate_instances(chain.grammar, chain.signature, 4)[-1][1]
    passed = next(q for q in chain.queries if q.qid == "passed")
    assert concrete_cover(s, chain.signature, passed) == COVERED
    too_many = Query("r", "reach", (Atom("Proc", "tok", None, 2),))
    assert concrete_cover(s, chain.signature, too_many) == NOT_COVERED


def test_pinned_atom_counts_source_vertex(chain):
    s = enumerate_instances(chain.grammar, chain.signature, 4)[-1][1]
    q = Query("p", "cover", (Atom("Proc", "work", "s1", 1),))
    assert concrete_cover(s, chain.signature, q) == COVERED


def test_report_clean_on_chain(chain):
    rep = check_soundness(chain.grammar, chain.signature, chain.queries, 6, name="chain")
    assert rep.ok
    lines = rep.lines()
    assert lines[0] == "ORACLE grammar=chain max_vertices=6 state_cap=1000000 instances=4"
    assert lines[-1] == "SUMMARY instances=4 queries=3 discrepancies=0"
    assert "ABSTRACT mutex counting SAFE" in lines
    assert any(l.startswith("RESULT 0 mutex not-covered") for l in lines)


def drop_controller(init):
    net = init.pn.net
    pre = {t: dict(net.pre[t]) for t in net.transitions}
    post = {t: dict(net.post[t]) for t in net.transitions}
    # without the controller token no process ever receives the token
    for t in post:
        post[t].pop(class_place("tokC"), None)
    return replace(init, pn=PetriNet(Net.build(net.places, pre, post), init.pn.initial))


def test_mutation_hook_reports_discrepancy(chain):
    holder = next(q for q in chain.queries if q.qid == "holder")
    rep = check_soundness(chain.grammar, chain.signature, [holder], 5, modes=("counting",), mutate_init=drop_controller)
    assert not rep.ok
    assert rep.discrepancies[0].startswith("lemma=soundness query=holder instance=0")
    assert rep.lines()[-1].endswith("discrepancies=3")


def test_pebble_report_on_token_ring():
    sp = load("token_ring")
    rep = check_soundness(sp.grammar, sp.signature, sp.queries, 6, name="token_ring")
    assert rep.ok
    assert ("twice", "pebble", "UNCOVERABLE") in rep.abstract
    assert all(set(r.pebble) == {"reached", "twice", "emptied"} for r in rep.instances)


def test_parallel_matches_sequential(star):
    a = check_soundness(star.grammar, star.signature, star.queries, 5)
    b = check_soundness(star.grammar, star.signature, star.queries, 5, jobs=2)
    assert a.text() == b.text()
