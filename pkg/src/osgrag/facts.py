"""Plain-text scene facts: the sentences placed in grounded prompts.

Two shapes are produced, and parsed back by the mock reasoner:

* instance: ``chair #0: a red chair; center (1.00, 2.00, 0.40) m; size 0.50 x 0.40 x 0.80 m; best view 12``
* relation: ``mug on the table``
"""

from __future__ import annotations

import re

from .predicates import KNOWN_PREDICATES

_INSTANCE = re.compile(
    r"^(?P<label>.+?) #(?P<id>\d+): (?P<desc>.*?); "
    r"center \((?P<x>-?[\d.]+), (?P<y>-?[\d.]+), (?P<z>-?[\d.]+)\) m; "
    r"size (?P<a>[\d.]+) x (?P<b>[\d.]+) x (?P<c>[\d.]+) m"
    r"(?:; best view (?P<view>-?\d+))?$"
)

_RELATIONS = [
    (p, re.compile(rf"^(?P<s>.+?) {re.escape(p)} the (?P<o>.+)$")) for p in KNOWN_PREDICATES
]


def instance_fact(node_id: int, label: str, description: str, center, extents, best_view: int | None = None) -> str:
    desc = description.replace(";", ",").strip() or f"a {label}"
    x, y, z = (float(v) for v in center)
    a, b, c = (float(v) for v in extents)
    text = f"{label} #{node_id}: {desc}; center ({x:.2f}, {y:.2f}, {z:.2f}) m; size {a:.2f} x {b:.2f} x {c:.2f} m"
    if best_view is not None:
        text += f"; best view {best_view}"
    return text


def relation_fact(subject_label: str, predicate: str, object_label: str) -> str:
    return f"{subject_label} {predicate} the {object_label}"


def parse_instance_fact(text: str) -> dict | None:
    m = _INSTANCE.match(text.strip())
    if not m:
        return None
    g = m.groupdict()
    return {
        "label": g["label"],
        "id": int(g["id"]),
        "description": g["desc"],
        "center": (float(g["x"]), float(g["y"]), float(g["z"])),
        "size": (float(g["a"]), float(g["b"]), float(g["c"])),
    }


def parse_relation_fact(text: str) -> tuple[str, str, str] | None:
    t = text.strip().rstrip(".").lower()
    if _INSTANCE.match(t):
        return None
    for pred, rx in _RELATIONS:
        m = rx.match(t)
        if m:
            return m.group("s").strip(), pred, m.group("o").strip()
    return None
