"""Tab-separated verdict tables and matplotlib figures for batch runs."""

from __future__ import annotations

import csv
import io
from collections import Counter
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLUMNS = ("spec", "query", "kind", "mode", "answer", "expect", "met", "nets", "max_places", "max_transitions", "seconds")
ANSWER_ORDER = ("SAFE", "UNCOVERABLE", "UNKNOWN_COVERABLE", "COVERABLE", "EXPORTED")
COLORS = {
    "SAFE": "#3a7d44",
    "UNCOVERABLE": "#7fb069",
    "UNKNOWN_COVERABLE": "#e6aa68",
    "COVERABLE": "#ca3c25",
    "EXPORTED": "#8d99ae",
}


@dataclass(frozen=True)
class Row:
    spec: str
    query: str
    kind: str
    mode: str
    answer: str
    expect: str
    met: bool
    nets: int
    max_places: int
    max_transitions: int
    seconds: float


def to_tsv(rows: Sequence[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        d = asdict(r)
        d["met"] = "yes" if r.met else "no"
        d["seconds"] = f"{r.seconds:.3f}"
        w.writerow([d[c] for c in COLUMNS])
    return buf.getvalue()


def from_tsv(text: str) -> list[Row]:
    out = []
    for d in csv.DictReader(io.StringIO(text), delimiter="\t"):
        out.append(
            Row(
                d["spec"],
                d["query"],
                d["kind"],
                d["mode"],
                d["answer"],
                d["expect"],
                d["met"] == "yes",
                int(d["nets"]),
                int(d["max_places"]),
                int(d["max_transitions"]),
                float(d["seconds"]),
            )
        )
    return out


def _specs(rows: Sequence[Row]) -> list[str]:
    return list(dict.fromkeys(r.spec for r in rows))


def plot_sizes(rows: Sequence[Row], path: Path) -> Path:
    specs = _specs(rows)
    first = {s: next(r for r in rows if r.spec == s) for s in specs}
    xs = range(len(specs))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(specs)), 3.2))
    ax.bar([x - 0.2 for x in xs], [first[s].max_places for s in specs], width=0.4, label="places")
    ax.bar([x + 0.2 for x in xs], [first[s].max_transitions for s in specs], width=0.4, label="transitions")
    for x, s in zip(xs, specs):
        ax.annotate(f"x{first[s].nets}", (x, max(first[s].max_places, first[s].max_transitions)), ha="center", va="bottom", fontsize=8)
    ax.set_xticks(list(xs), specs, rotation=30, ha="right")
    ax.set_ylabel("largest combined net")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_verdicts(rows: Sequence[Row], path: Path) -> Path:
    specs = _specs(rows)
    counts = {s: Counter(r.answer for r in rows if r.spec == s) for s in specs}
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(specs)), 3.2))
    bottom = [0] * len(specs)
    for a in ANSWER_ORDER:
        vals = [counts[s][a] for s in specs]
        if any(vals):
            ax.bar(range(len(specs)), vals, bottom=bottom, color=COLORS[a], label=a)
            bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_xticks(range(len(specs)), specs, rotation=30, ha="right")
    ax.set_ylabel("queries")
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_runtime(rows: Sequence[Row], path: Path) -> Path:
    specs = _specs(rows)
    secs = [sum(r.seconds for r in rows if r.spec == s) for s in specs]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(specs)), 3.2))
    ax.bar(range(len(specs)), secs, color="#4f6d7a")
    ax.set_xticks(range(len(specs)), specs, rotation=30, ha="right")
    ax.set_ylabel("seconds")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_report(rows: Sequence[Row], out_dir: Path) -> list[Path]:
    """Write ``verdicts.tsv`` and three figures; returns the written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv = out_dir / "verdicts.tsv"
    tsv.write_text(to_tsv(rows))
    written = [tsv]
    if rows:
        written.append(plot_sizes(rows, out_dir / "sizes.png"))
        written.append(plot_verdicts(rows, out_dir / "verdicts.png"))
        written.append(plot_runtime(rows, out_dir / "runtime.png"))
    return written
