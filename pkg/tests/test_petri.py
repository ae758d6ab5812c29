from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrverify.petri import (
    Marking,
    MarkingOverflow,
    Net,
    NetError,
    PetriNet,
    PlaceEquivalence,
    backward_coverable,
    backward_coverable_any,
    covers,
    fire,
    fire_sequence,
    forward_search,
    is_enabled,
    project,
    quotient,
    reachable_bounded,
)


def cont_net() -> Net:
    return Net.build(
        ["tokC", "nokC"],
        {"getC": {"nokC": 1}, "relC": {"tokC": 1}},
        {"getC": {"tokC": 1}, "relC": {"nokC": 1}},
    )


def test_marking_drops_zeros_and_compares_by_content():
    assert Marking({"a": 0, "b": 2}) == Marking({"b": 2})
    assert Marking({"a": 1})["zzz"] == 0
    assert hash(Marking({"a": 1, "b": 2})) == hash(Marking([("b", 2), ("a", 1)]))
    assert Marking({"a": 3, "b": 4}).total() == 7


def test_marking_rejects_negative_and_huge_counts():
    with pytest.raises(NetError):
        Marking({"a": -1})
    with pytest.raises(MarkingOverflow):
        Marking({"a": 2**63})


def test_enabled_examples():
    net = cont_net()
    assert is_enabled(net, {"tokC": 1}, "relC")
    assert not is_enabled(net, {"tokC": 1}, "getC")
    free = Net.build(["q"], {"t": {}}, {"t": {"q": 1}})
    assert is_enabled(free, {}, "t")


def test_enabled_unknown_transition():
    with pytest.raises(NetError):
        is_enabled(cont_net(), {}, "nope")


def test_fire_examples():
    net = cont_net()
    assert fire(net, Marking({"tokC": 1}), "relC") == Marking({"nokC": 1})
    with pytest.raises(NetError):
        fire(net, Marking({"tokC": 1}), "getC")
    idle = Net.build(["q"], {"t": {}}, {"t": {}})
    assert fire(idle, Marking({"q": 2}), "t") == Marking({"q": 2})
    assert fire_sequence(net, Marking({"tokC": 1}), ["relC", "getC", "relC"]) == Marking({"nokC": 1})


def test_covers_examples():
    assert covers({"a": 2}, {"a": 2})
    assert not covers({"a": 1, "b": 5}, {"a": 2})
    assert covers({"a": 1}, {})


def test_reachable_trivial_nets():
    empty = PetriNet(Net.build(["p"], {}, {}), Marking({"p": 1}))
    assert reachable_bounded(empty, 10) == ({Marking({"p": 1})}, False)
    dead = PetriNet(Net.build(["p"], {"t": {"p": 1}}, {"t": {}}), Marking())
    assert reachable_bounded(dead, 10) == ({Marking()}, False)


def test_reachable_truncation_flag():
    pump = PetriNet(Net.build(["p"], {"t": {}}, {"t": {"p": 1}}), Marking())
    states, truncated = reachable_bounded(pump, 5)
    assert truncated
    assert len(states) == 5


def test_backward_trivial_cases():
    pn = PetriNet(Net.build(["p"], {}, {}), Marking())
    res = backward_coverable(pn, {})
    assert res.coverable and res.witness == ()
    assert not backward_coverable(pn, {"p": 1}).coverable


def test_backward_witness_replays():
    net = Net.build(["a", "b", "c"], {"t": {"a": 1}, "u": {"b": 2}}, {"t": {"b": 1}, "u": {"c": 1}})
    pn = PetriNet(net, Marking({"a": 4}))
    res = backward_coverable(pn, {"c": 2})
    assert res.coverable
    assert covers(fire_sequence(net, pn.initial, res.witness), {"c": 2})
    assert not backward_coverable(pn, {"c": 3}).coverable


def test_backward_any_respects_bounds():
    net = Net.build(["a", "b"], {"t": {}}, {"t": {"a": 1}})
    pn = PetriNet(net, Marking())
    assert backward_coverable_any(pn, [{"a": 3}]).coverable
    assert not backward_coverable_any(pn, [{"a": 3}], bounds={"a": 2}).coverable


def test_forward_search_finds_shortest_path():
    net = cont_net()
    pn = PetriNet(net, Marking({"tokC": 1}))
    nokc = net.index["nokC"]
    res = forward_search(pn, lambda v: v[nokc] == 1, 100)
    assert res.found and res.path == ("relC",)


def test_quotient_identity_is_isomorphic():
    net = cont_net()
    pn = PetriNet(net, Marking({"tokC": 1}))
    q = quotient(pn, PlaceEquivalence({p: ("c", p) for p in net.places}))
    assert len(q.net.places) == 2
    assert len(q.net.transitions) == 2
    assert q.initial == Marking({("c", "tokC"): 1})


def test_quotient_merges_identical_copies():
    places = [("a", 0), ("b", 0), ("a", 1), ("b", 1)]
    pre = {("t", 0): {("a", 0): 1}, ("t", 1): {("a", 1): 1}}
    post = {("t", 0): {("b", 0): 1}, ("t", 1): {("b", 1): 1}}
    pn = PetriNet(Net.build(places, pre, post), Marking({("a", 0): 1, ("a", 1): 1}))
    q = quotient(pn, PlaceEquivalence({p: p[0] for p in places}))
    assert len(pn.net.transitions) == 2
    assert len(q.net.transitions) == 1
    assert q.initial == Marking({"a": 2})


def test_quotient_needs_total_equivalence():
    pn = PetriNet(cont_net(), Marking())
    with pytest.raises(NetError):
        quotient(pn, PlaceEquivalence({"tokC": "x"}))


@st.composite
def small_nets(draw):
    n = draw(st.integers(1, 4))
    places = [f"p{i}" for i in range(n)]
    arcs = st.dictionaries(st.sampled_from(places), st.integers(1, 2), max_size=2)
    k = draw(st.integers(0, 4))
    pre = {f"t{j}": draw(arcs) for j in range(k)}
    post = {f"t{j}": draw(arcs) for j in range(k)}
    init = draw(st.dictionaries(st.sampled_from(places), st.integers(0, 2)))
    return PetriNet(Net.build(places, pre, post), Marking(init))


@settings(max_examples=60, deadline=None)
@given(small_nets(), st.data())
def test_backward_agrees_with_forward_when_bounded(pn, data):
    states, truncated = reachable_bounded(pn, 3000)
    target = data.draw(st.dictionaries(st.sampled_from(list(pn.net.places)), st.integers(1, 3), max_size=2))
    res = backward_coverable(pn, target)
    if res.coverable:
        assert covers(fire_sequence(pn.net, pn.initial, res.witness), target)
    if not truncated:
        assert res.coverable == any(covers(m, target) for m in states)


@settings(max_examples=60, deadline=None)
@given(small_nets(), st.data())
def test_fire_preserves_effect(pn, data):
    states, _ = reachable_bounded(pn, 200)
    m = data.draw(st.sampled_from(sorted(states, key=repr)))
    for t in pn.net.transitions:
        if is_enabled(pn.net, m, t):
            m2 = fire(pn.net, m, t)
            for p in pn.net.places:
                assert m2[p] - m[p] == pn.net.weight(t, p) - pn.net.weight(p, t)


def test_project_sums_classes():
    eq = PlaceEquivalence({"a": "x", "b": "x", "c": "y"})
    assert project({"a": 1, "b": 2, "c": 3}, eq) == Marking({"x": 3, "y": 3})
