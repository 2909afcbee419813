import json
import math

import numpy as np

from swlab.report import Report, canonical_json, config_digest, write_table

__author__ = "Johannes Kazantzidis"
__email__ = "johannes.kazantzidis@ess.eu"
__status__ = "Production"


def test_canonical_json_is_sorted_and_plain():
    text = canonical_json({"b": np.float64(1.5), "a": (np.int64(2), np.bool_(True)), "c": np.arange(2)})
    assert list(json.loads(text)) == ["a", "b", "c"]
    assert json.loads(text) == {"a": [2, True], "b": 1.5, "c": [0, 1]}


def test_non_finite_values_become_strings():
    assert json.loads(canonical_json([math.nan, math.inf, -math.inf])) == ["nan", "inf", "-inf"]


def test_config_digest_ignores_key_order():
    assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})


def test_report_gates():
    report = Report("curvature", {"dims": "4"})
    report.add(value=1.0)
    report.gate("first", True)
    assert report.passed
    report.gate("second", np.bool_(False))
    record = json.loads(report.to_json())
    assert record["passed"] is False
    assert record["gates"] == {"first": True, "second": False}
    assert record["config_digest"] == config_digest({"dims": "4"})


def test_write_table(tmp_path):
    path = tmp_path / "rows.csv"
    write_table(str(path), [{"h": 0.5, "order": None}, {"h": 0.25, "order": np.float64(4.0)}])
    lines = path.read_text().splitlines()
    assert lines == ["h,order", "0.5,", "0.25,4.0"]
