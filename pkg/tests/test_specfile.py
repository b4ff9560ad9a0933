from __future__ import annotations

import json

import numpy as np
import pytest

from covband.specfile import dump_spec, load_spec, spec_from_dict, spec_to_dict
from covband.symmat import SymMatrix
from covband.triggers import (
    AbsoluteChange,
    AlwaysSend,
    Combined,
    NMostChanged,
    Partition,
    RelativeChange,
    SpecError,
    Subset,
    compile_spec,
)

LAYOUT = """\
kind: partition
children:
  - kind: subset
    indices: [[1, 1], [1, 2], [2, 2]]
    inner: {kind: absolute, thresholds: 3.0e-4}
  - kind: subset
    indices: [[1, 3], [2, 3], [3, 3]]
    inner:
      kind: combined
      sharp: true
      children:
        - {kind: absolute, thresholds: 9.0e-5}
        - {kind: nmost, budget: 2, deviation: absolute}
"""


def test_load_yaml_layout(tmp_path):
    path = tmp_path / "t.yaml"
    path.write_text(LAYOUT)
    spec = load_spec(path)
    assert spec == Partition(
        (
            Subset(frozenset({(0, 0), (0, 1), (1, 1)}), AbsoluteChange(3e-4)),
            Subset(
                frozenset({(0, 2), (1, 2), (2, 2)}),
                Combined((AbsoluteChange(9e-5), NMostChanged(2, "absolute")), sharp=True),
            ),
        )
    )
    compile_spec(spec, 3)


def test_json_and_string_numbers(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"kind": "relative", "thresholds": "1e-3"}))
    assert load_spec(path) == RelativeChange(1e-3)


def test_threshold_forms():
    dense = spec_from_dict({"kind": "absolute", "thresholds": [[1, 2], [2, 3]]})
    packed = spec_from_dict({"kind": "absolute", "thresholds": [1, 2, 3]})
    assert dense.thresholds == packed.thresholds == SymMatrix(2, [1.0, 2.0, 3.0])


@pytest.mark.parametrize(
    "spec",
    [
        AbsoluteChange(1e-4),
        RelativeChange(SymMatrix(2, [0.1, 0.2, 0.3])),
        NMostChanged(7, "relative"),
        AlwaysSend(),
        Combined((AbsoluteChange(1e-4), NMostChanged(3)), sharp=False),
        Partition((Subset(frozenset({(0, 0)}), AlwaysSend()), Subset(frozenset({(0, 1), (1, 1)}), NMostChanged(1)))),
    ],
)
def test_round_trip(spec, tmp_path):
    assert spec_from_dict(spec_to_dict(spec)) == spec
    path = tmp_path / "s.yaml"
    path.write_text(dump_spec(spec))
    assert load_spec(path) == spec


@pytest.mark.parametrize(
    "doc",
    [
        None,
        {"thresholds": 1.0},
        {"kind": "absolute"},
        {"kind": "absolute", "thresholds": "abc"},
        {"kind": "absolute", "thresholds": [1, 2]},
        {"kind": "nmost", "budget": 2.5},
        {"kind": "nmost", "budget": True},
        {"kind": "subset", "indices": [[0, 1]], "inner": {"kind": "always"}},
        {"kind": "subset", "indices": "all", "inner": {"kind": "always"}},
        {"kind": "combined", "children": {"kind": "always"}},
        {"kind": "magic"},
    ],
)
def test_invalid_documents(doc):
    with pytest.raises(SpecError):
        spec_from_dict(doc)


def test_yaml_syntax_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("kind: [absolute\n")
    with pytest.raises(SpecError):
        load_spec(path)


def test_error_path_names_node():
    with pytest.raises(SpecError, match=r"children\[1\]"):
        spec_from_dict({"kind": "combined", "children": [{"kind": "always"}, {"kind": "nope"}]})
