from __future__ import annotations

from hrverify.report import COLUMNS, Row, from_tsv, to_tsv, write_report


def rows() -> list[Row]:
    return [
        Row("chain", "mutex", "cover", "counting", "SAFE", "SAFE", True, 2, 16, 16, 0.25),
        Row("chain", "holder", "cover", "counting", "UNKNOWN_COVERABLE", "UNKNOWN", True, 2, 16, 16, 0.01),
        Row("ring", "unique", "cover", "counting", "SAFE", "", False, 1, 23, 27, 1.5),
    ]


def test_tsv_round_trip():
    text = to_tsv(rows())
    assert text.splitlines()[0].split("\t") == list(COLUMNS)
    assert from_tsv(text) == rows()


def test_write_report(tmp_path):
    paths = write_report(rows(), tmp_path / "out")
    assert [p.name for p in paths] == ["verdicts.tsv", "sizes.png", "verdicts.png", "runtime.png"]
    for p in paths[1:]:
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_empty_report_writes_only_table(tmp_path):
    paths = write_report([], tmp_path)
    assert [p.name for p in paths] == ["verdicts.tsv"]
