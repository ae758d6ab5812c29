from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrverify.systems import (
    OpenSystem,
    TopologyError,
    canonical_key,
    compose,
    dedup,
    edge_const,
    eval_system,
    isomorphic,
    rename,
    restrict,
)
from hrverify.grammar import derive

from .conftest import load


def test_edge_constant(chain):
    s = edge_const(chain.signature, ("relC", "get"), "s3", "s2")
    assert s.vlabel == ("Cont", "Proc")
    assert s.edges == frozenset({(0, ("relC", "get"), 1)})
    assert s.source_map == {"s3": 0, "s2": 1}


def test_edge_constant_errors(chain):
    with pytest.raises(TopologyError):
        edge_const(chain.signature, ("get", "get"), "s3", "s2")
    with pytest.raises(TopologyError):
        edge_const(chain.signature, ("rel", "get"), "s1", "s1")
    with pytest.raises(TopologyError):
        edge_const(chain.signature, ("start", "get"), "s1", "s2")


def base_chain(sig) -> OpenSystem:
    return compose(edge_const(sig, ("relC", "get"), "s3", "s2"), edge_const(sig, ("rel", "get"), "s2", "s1"))


def test_base_rule_gives_three_vertex_chain(chain):
    s = restrict(base_chain(chain.signature), {"s1"})
    assert s.vlabel == ("Cont", "Proc", "Proc")
    assert len(s.edges) == 2
    assert s.visible == frozenset({"s1"})
    assert s.source_map == {"s1": 2}


def test_restrict_trivial_cases(chain):
    s = base_chain(chain.signature)
    assert restrict(s, s.visible) == s
    assert restrict(s, ()).sources == ()


def test_rename_identity_and_involution(chain):
    s = base_chain(chain.signature)
    assert rename(s, {}) == s
    sw = {"s1": "s2", "s2": "s1"}
    assert rename(rename(s, sw, chain.signature), sw, chain.signature) == s


def test_rename_moves_growth_point(chain):
    s = restrict(base_chain(chain.signature), {"s1"})
    grown = compose(s, edge_const(chain.signature, ("rel", "get"), "s1", "s2"))
    r = restrict(rename(grown, {"s1": "s2", "s2": "s1"}, chain.signature), {"s1"})
    assert r.source_map == {"s1": 3}
    assert (2, ("rel", "get"), 3) in r.edges


def test_rename_errors(chain):
    s = base_chain(chain.signature)
    with pytest.raises(TopologyError):
        rename(s, {"s1": "s3", "s3": "s1"}, chain.signature)
    with pytest.raises(TopologyError):
        rename(s, {"s1": "s2"})


def test_compose_idempotent_on_fully_sourced(chain):
    s = base_chain(chain.signature)
    assert compose(s, s) == s


def test_compose_disjoint_union(chain):
    a = edge_const(chain.signature, ("rel", "get"), "s1", "s2")
    b = restrict(edge_const(chain.signature, ("relC", "get"), "s3", "s2"), ())
    c = compose(a, b)
    assert len(c.vlabel) == 4
    assert len(c.edges) == 2


def test_eval_base_terms(chain, star):
    (_, t), *_ = derive(chain.grammar, 4)
    assert len(eval_system(t, chain.signature).vlabel) == 3
    (_, t), *_ = derive(star.grammar, 5)
    s = eval_system(t, star.signature)
    assert s.vlabel == ("Cont", "Proc")
    assert {lab for _, lab, _ in s.edges} == {("relC", "get"), ("getC", "rel")}


def test_check_catches_bad_types(chain):
    s = OpenSystem(("Cont", "Proc"), frozenset({(0, ("get", "get"), 1)}), ())
    with pytest.raises(TopologyError):
        s.check(chain.signature)


def relabel(s: OpenSystem, perm: list[int]) -> OpenSystem:
    labels = [""] * len(s.vlabel)
    for v, p in enumerate(perm):
        labels[p] = s.vlabel[v]
    return OpenSystem(
        tuple(labels),
        frozenset((perm[a], lab, perm[b]) for a, lab, b in s.edges),
        tuple(sorted((k, perm[v]) for k, v in s.sources)),
    )


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 6), st.randoms(use_true_random=False))
def test_isomorphism_invariance(k, rnd):
    sp = load("chain")
    terms = [t for _, t in derive(sp.grammar, 30)]
    s = eval_system(terms[k], sp.signature)
    perm = list(range(len(s.vlabel)))
    rnd.shuffle(perm)
    r = relabel(s, perm)
    assert canonical_key(r) == canonical_key(s)
    assert isomorphic(r, s)
    assert dedup([(0, s), (1, r)]) == [(0, s)]


def test_sources_distinguish_isomorphism(chain):
    s = base_chain(chain.signature)
    assert not isomorphic(s, restrict(s, {"s1"}))
