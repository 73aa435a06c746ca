import json
from fractions import Fraction

import numpy as np
import pytest

from ucplab.errors import InvalidParameter
from ucplab.reports import dumps, emit_report, fmt_float, to_plain, write_csv


@pytest.mark.parametrize("x,s", [(0.1, "0.10000000000000001"), (float("inf"), "inf"), (-float("inf"), "-inf"),
                                 (float("nan"), "nan"), (1.0, "1")])
def test_fmt_float(x, s):
    assert fmt_float(x) == s


def test_dumps_is_sorted_and_roundtrips():
    obj = {"b": [1.0, 2.5, np.float64(1 / 3)], "a": {"z": np.int64(3), "y": None, "x": True},
           "f": Fraction(1, 3), "n": float("nan")}
    text = dumps(obj)
    back = json.loads(text)
    assert list(back) == sorted(back)
    assert back["b"][2] == 1 / 3
    assert back["f"] == "1/3" and back["n"] == "nan"
    assert text == dumps(obj)


def test_to_plain_rejects_unknown():
    with pytest.raises(InvalidParameter):
        to_plain(object())


class _Rep:
    def to_dict(self):
        return {"value": 1.5}

    def table(self):
        return ["a", "b"], [[1, 2.0], [3, float("inf")]], ["note"]

    def series(self):
        return {"s": ([1.0, 2.0], [3.0, 4.0])}


def test_emit_report_formats(tmp_path):
    paths = emit_report(_Rep(), ["csv", "gnuplot"], tmp_path, "rep", "demo", {"version": "x"})
    assert sorted(p.rsplit("/", 1)[-1] for p in paths) == ["rep.csv", "rep.json", "rep_s.dat"]
    payload = json.loads((tmp_path / "rep.json").read_text())
    assert payload["schema"] == "ucplab/1" and payload["report"] == {"value": 1.5}
    lines = (tmp_path / "rep.csv").read_text().splitlines()
    assert lines == ["# note", "a,b", "1,2", "3,inf"]
    with pytest.raises(InvalidParameter):
        emit_report(_Rep(), ["xml"], tmp_path, "rep")


def test_write_csv_header(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["x"], [[True], [None]])
    # a lone empty field is quoted so the row is not read back as a blank line
    assert p.read_text() == 'x\ntrue\n""\n'
