"""LoLA and PNML serialization of nets, plus reachability predicate files."""

from __future__ import annotations

import hashlib
import re
import xml.etree.ElementTree as ET
from collections.abc import Hashable, Mapping

from .behaviors import PlaceKey
from .counting import START, CombinedNet, NtPlace
from .petri import Marking, Net, NetError, PetriNet

PNML_NS = "http://www.pnml.org/version-2009/grammar/pnml"
PTNET_TYPE = "http://www.pnml.org/version-2009/grammar/ptnet"

_BAD = re.compile(r"[^A-Za-z0-9_]")


class ExportError(ValueError):
    pass


def sanitize(text: str) -> str:
    return _BAD.sub("_", text)


def tau_hash(tau: tuple[str, ...]) -> str:
    return hashlib.sha1(",".join(sorted(tau)).encode()).hexdigest()[:8]


def place_name(p: Hashable) -> str:
    if p == START:
        return "S"
    if isinstance(p, PlaceKey):
        if p.kind == 0:
            return f"q__{sanitize(p.q)}"
        return f"src__{sanitize(p.sigma)}__{sanitize(p.q)}"
    if isinstance(p, NtPlace):
        return f"nt__{sanitize(p.name)}__{tau_hash(p.tau)}"
    return sanitize(str(p))


def naming(net: Net) -> tuple[dict[Hashable, str], dict[Hashable, str]]:
    """Export names of places and transitions; collisions are errors."""
    places = {p: place_name(p) for p in net.places}
    trans = {t: sanitize(str(t)) for t in net.transitions}
    seen: dict[str, Hashable] = {}
    for x, name in list(places.items()) + list(trans.items()):
        if name in seen:
            raise ExportError(f"export name {name} used by both {seen[name]!r} and {x!r}")
        seen[name] = x
    return places, trans


def renamed(pn: PetriNet) -> PetriNet:
    """The net with every node replaced by its export name."""
    pl, tr = naming(pn.net)
    pre = {tr[t]: {pl[q]: w for q, w in pn.net.pre[t].items()} for t in pn.net.transitions}
    post = {tr[t]: {pl[q]: w for q, w in pn.net.post[t].items()} for t in pn.net.transitions}
    net = Net.build(pl.values(), pre, post, transitions=tr.values())
    return PetriNet(net, Marking({pl[q]: k for q, k in pn.initial.items()}))


# --------------------------------------------------------------------------
# LoLA


def _arcs(row: Mapping[str, int]) -> str:
    return ", ".join(f"{q}: {w}" for q, w in sorted(row.items()))


def write_lola(pn: PetriNet) -> str:
    r = renamed(pn)
    net = r.net
    out = [f"PLACE {', '.join(sorted(net.places))};", ""]
    out.append(f"MARKING {_arcs(dict(r.initial.items()))};")
    out.append("")
    for t in sorted(net.transitions):
        out.append(f"TRANSITION {t}")
        out.append(f"  CONSUME {_arcs(net.pre[t])};")
        out.append(f"  PRODUCE {_arcs(net.post[t])};")
        out.append("")
    return "\n".join(out)


def _split_arcs(text: str, where: str) -> dict[str, int]:
    row: dict[str, int] = {}
    text = text.strip()
    if not text:
        return row
    for part in text.split(","):
        name, _, w = part.partition(":")
        name = name.strip()
        try:
            row[name] = row.get(name, 0) + int(w.strip() or "1")
        except ValueError:
            raise NetError(f"{where}: bad weight in {part.strip()!r}") from None
    return row


def read_lola(text: str) -> PetriNet:
    body = re.sub(r"\{[^}]*\}", " ", text)
    stmts = [s.strip() for s in body.split(";")]
    places: list[str] = []
    marking: dict[str, int] = {}
    pre: dict[str, dict[str, int]] = {}
    post: dict[str, dict[str, int]] = {}
    current: str | None = None
    for s in stmts:
        if not s:
            continue
        kw, _, rest = s.partition(" ")
        if kw == "PLACE":
            places.extend(p.strip() for p in rest.split(",") if p.strip())
        elif kw == "MARKING":
            marking = _split_arcs(rest, "MARKING")
        elif kw == "TRANSITION":
            name, _, rest2 = rest.strip().partition(" ")
            current = name.strip()
            pre[current] = {}
            post[current] = {}
            rest2 = rest2.strip()
            if rest2.startswith("CONSUME"):
                pre[current] = _split_arcs(rest2[len("CONSUME") :], current)
            elif rest2:
                raise NetError(f"unexpected {rest2!r} in transition {current}")
        elif kw == "PRODUCE":
            if current is None:
                raise NetError("PRODUCE outside a transition")
            post[current] = _split_arcs(rest, current)
        elif kw == "CONSUME":
            if current is None:
                raise NetError("CONSUME outside a transition")
            pre[current] = _split_arcs(rest, current)
        else:
            raise NetError(f"unknown LoLA statement {kw!r}")
    net = Net.build(places, pre, post, transitions=pre.keys())
    return PetriNet(net, Marking(marking))


# --------------------------------------------------------------------------
# PNML


def write_pnml(pn: PetriNet, net_id: str = "net") -> str:
    r = renamed(pn)
    net = r.net
    root = ET.Element("pnml", xmlns=PNML_NS)
    n = ET.SubElement(root, "net", id=sanitize(net_id), type=PTNET_TYPE)
    page = ET.SubElement(n, "page", id="page0")
    for p in sorted(net.places):
        el = ET.SubElement(page, "place", id=p)
        ET.SubElement(ET.SubElement(el, "name"), "text").text = p
        if r.initial[p]:
            ET.SubElement(ET.SubElement(el, "initialMarking"), "text").text = str(r.initial[p])
    for t in sorted(net.transitions):
        el = ET.SubElement(page, "transition", id=t)
        ET.SubElement(ET.SubElement(el, "name"), "text").text = t
    k = 0
    for t in sorted(net.transitions):
        for src, dst, w in [(q, t, w) for q, w in sorted(net.pre[t].items())] + [
            (t, q, w) for q, w in sorted(net.post[t].items())
        ]:
            arc = ET.SubElement(page, "arc", id=f"arc{k}", source=src, target=dst)
            ET.SubElement(ET.SubElement(arc, "inscription"), "text").text = str(w)
            k += 1
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _text(el: ET.Element, path: str, ns: dict[str, str]) -> str | None:
    found = el.find(path, ns)
    return None if found is None or found.text is None else found.text.strip()


def read_pnml(text: str) -> PetriNet:
    root = ET.fromstring(text)
    ns = {"p": PNML_NS} if root.tag.startswith("{") else {}
    pre_tag = "p:" if ns else ""
    net_el = root.find(f"{pre_tag}net", ns)
    if net_el is None:
        raise NetError("PNML file has no net element")
    places: list[str] = []
    trans: list[str] = []
    marking: dict[str, int] = {}
    pre: dict[str, dict[str, int]] = {}
    post: dict[str, dict[str, int]] = {}
    for el in net_el.iter():
        tag = el.tag.split("}")[-1]
        if tag == "place":
            pid = el.get("id")
            places.append(pid)
            m = _text(el, f"{pre_tag}initialMarking/{pre_tag}text", ns)
            if m:
                marking[pid] = int(m)
        elif tag == "transition":
            trans.append(el.get("id"))
    pset, tset = set(places), set(trans)
    for el in net_el.iter():
        if el.tag.split("}")[-1] != "arc":
            continue
        src, dst = el.get("source"), el.get("target")
        w = int(_text(el, f"{pre_tag}inscription/{pre_tag}text", ns) or "1")
        if src in pset and dst in tset:
            row = pre.setdefault(dst, {})
            row[src] = row.get(src, 0) + w
        elif src in tset and dst in pset:
            row = post.setdefault(src, {})
            row[dst] = row.get(dst, 0) + w
        else:
            raise NetError(f"arc {el.get('id')} does not join a place and a transition")
    net = Net.build(places, pre, post, transitions=trans)
    return PetriNet(net, Marking(marking))


# --------------------------------------------------------------------------
# predicates


def reach_predicate(c: CombinedNet, groups: list[tuple[list[Hashable], int]]) -> str:
    """LoLA formula: sums of queried groups are equal to their counts and
    every derivation place is empty."""
    pl, _ = naming(c.pn.net)
    terms = []
    for group, k in groups:
        names = [pl[p] for p in group if p in pl]
        lhs = " + ".join(sorted(names)) if names else "0"
        terms.append(f"{lhs} = {k}")
    for p in c.pn.net.places:
        if p == START or isinstance(p, NtPlace):
            terms.append(f"{pl[p]} = 0")
    return "EF (" + " AND ".join(terms) + ")\n"
