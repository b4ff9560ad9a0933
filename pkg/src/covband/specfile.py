"""Trigger specifications as YAML/JSON documents.

Every node is a mapping with a ``kind`` tag.  Index pairs are 1-based::

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

``thresholds`` is a scalar, a full square matrix (list of rows) or the packed
upper triangle in row-major order.  Kinds: ``absolute``, ``relative``,
``nmost``, ``always``, ``subset``, ``combined``, ``partition``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .symmat import SymMatrix
from .triggers import (
    AbsoluteChange,
    AlwaysSend,
    Combined,
    NMostChanged,
    Partition,
    RelativeChange,
    SpecError,
    Subset,
    TriggerSpec,
)

__all__ = ["spec_from_dict", "spec_to_dict", "load_spec", "dump_spec"]


def _number(value, where: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise SpecError(f"{where}: expected a number, got {value!r}") from None


def _thresholds(value, where: str):
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            try:
                return SymMatrix.from_dense(np.array(value, dtype=np.float64))
            except ValueError as exc:
                raise SpecError(f"{where}: {exc}") from None
        m = len(value)
        n = int(round((np.sqrt(8 * m + 1) - 1) / 2))
        if n * (n + 1) // 2 != m:
            raise SpecError(f"{where}: {m} values is not a packed upper triangle")
        return SymMatrix(n, [_number(v, where) for v in value])
    return _number(value, where)


def _children(doc: dict, where: str) -> list:
    kids = doc.get("children")
    if not isinstance(kids, list):
        raise SpecError(f"{where}: 'children' must be a list")
    return [spec_from_dict(c, f"{where}.children[{i}]") for i, c in enumerate(kids)]


def spec_from_dict(doc, where: str = "spec") -> TriggerSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise SpecError(f"{where}: expected a mapping with a 'kind' key")
    kind = doc["kind"]
    if kind in ("absolute", "relative"):
        if "thresholds" not in doc:
            raise SpecError(f"{where}: missing 'thresholds'")
        cls = AbsoluteChange if kind == "absolute" else RelativeChange
        return cls(_thresholds(doc["thresholds"], where))
    if kind == "nmost":
        budget = doc.get("budget")
        if not isinstance(budget, int) or isinstance(budget, bool):
            raise SpecError(f"{where}: 'budget' must be an integer")
        return NMostChanged(budget, doc.get("deviation", "absolute"))
    if kind == "always":
        return AlwaysSend()
    if kind == "subset":
        try:
            pairs = [(int(i) - 1, int(j) - 1) for i, j in doc["indices"]]
        except (KeyError, TypeError, ValueError):
            raise SpecError(f"{where}: 'indices' must be a list of [i, j] pairs") from None
        if any(i < 0 or j < 0 for i, j in pairs):
            raise SpecError(f"{where}: indices are 1-based")
        return Subset(frozenset(pairs), spec_from_dict(doc.get("inner"), f"{where}.inner"))
    if kind == "combined":
        return Combined(tuple(_children(doc, where)), bool(doc.get("sharp", True)))
    if kind == "partition":
        return Partition(tuple(_children(doc, where)))
    raise SpecError(f"{where}: unknown kind {kind!r}")


def _thresholds_out(t):
    if isinstance(t, SymMatrix):
        return t.to_dense().tolist()
    return float(t)


def spec_to_dict(spec: TriggerSpec) -> dict:
    if isinstance(spec, AbsoluteChange):
        return {"kind": "absolute", "thresholds": _thresholds_out(spec.thresholds)}
    if isinstance(spec, RelativeChange):
        return {"kind": "relative", "thresholds": _thresholds_out(spec.thresholds)}
    if isinstance(spec, NMostChanged):
        return {"kind": "nmost", "budget": spec.budget, "deviation": spec.deviation}
    if isinstance(spec, AlwaysSend):
        return {"kind": "always"}
    if isinstance(spec, Subset):
        return {
            "kind": "subset",
            "indices": [[i + 1, j + 1] for i, j in sorted(spec.indices)],
            "inner": spec_to_dict(spec.inner),
        }
    if isinstance(spec, Combined):
        return {"kind": "combined", "sharp": spec.sharp, "children": [spec_to_dict(c) for c in spec.children]}
    if isinstance(spec, Partition):
        return {"kind": "partition", "children": [spec_to_dict(c) for c in spec.children]}
    raise SpecError(f"not a trigger specification node: {spec!r}")


def load_spec(path) -> TriggerSpec:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SpecError(f"{path}: {exc}") from None
    return spec_from_dict(doc, str(path))


def dump_spec(spec: TriggerSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False)
