import json
import os

import numpy as np
import pytest

from debond.output import OutputWriter, csv_text, fmt, json_text


def test_full_precision_floats():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(np.float64(1.0) / 3.0) == "0.33333333333333331"
    assert fmt(True) == "1" and fmt(np.int64(7)) == "7" and fmt("NA") == "NA"


def test_header_only_csv():
    assert csv_text(("t", "front"), []) == "t,front\n"


def test_csv_row_length_checked():
    with pytest.raises(ValueError):
        csv_text(("a", "b"), [(1,)])


def test_json_key_order_stable():
    a = json_text({"b": 1, "a": {"d": np.float64(2.5), "c": [np.int32(1)]}})
    b = json_text({"a": {"c": [1], "d": 2.5}, "b": 1})
    assert a == b
    assert list(json.loads(a)) == ["a", "b"]


def test_writer_lists_every_file_once(tmp_path):
    w = OutputWriter(tmp_path / "o")
    w.csv("x.csv", ("a",), [(1,)])
    w.json("sub/y.json", {"k": 1})
    with pytest.raises(ValueError):
        w.csv("x.csv", ("a",), [])
    w.manifest({"cfg": 1}, "verb", {"c": {"passed": True}}, 1.25)
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert sorted(man["files"]) == ["sub/y.json", "timing.txt", "x.csv"]
    assert man["files"]["timing.txt"]["sha256"] is None
    assert man["passed"] is True
    on_disk = sorted(
        os.path.relpath(os.path.join(r, f), tmp_path / "o") for r, _, fs in os.walk(tmp_path / "o") for f in fs
    )
    assert on_disk == sorted(list(man["files"]) + ["manifest.json"])


def test_unwritable_directory_fails_early(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        OutputWriter(blocker / "sub")
