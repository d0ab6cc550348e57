"""Geometric predicate rules and the predicate vocabulary.

The mock relation backend and the synthetic scene generator both call
``spatial_predicates`` so generated ground truth and mock output agree by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Obb, centroid_distance, obbs_separated

INVERSE = {
    "on": "under",
    "under": "on",
    "above": "below",
    "below": "above",
    "in front of": "faces",
    "faces": "in front of",
    "left of": "right of",
    "right of": "left of",
    "near": "near",
    "next to": "next to",
    "touching": "touching",
    "beside": "beside",
    "far from": "far from",
}

# longest phrases first so "in front of" wins over "on"
KNOWN_PREDICATES = sorted(INVERSE, key=len, reverse=True)


def inverse_predicate(p: str) -> str | None:
    return INVERSE.get(p.strip().lower())


@dataclass(frozen=True)
class RelationRules:
    on_tol: float = 0.05
    near: float = 0.5
    front_half_angle_deg: float = 30.0


def _z_range(box: Obb) -> tuple[float, float]:
    lo, hi = box.aabb()
    return float(lo[2]), float(hi[2])


def rests_on(a: Obb, b: Obb, tol: float) -> bool:
    """``a`` sits on top of ``b``: vertical contact and ``a``'s centre over ``b``'s footprint."""
    a_lo, _ = _z_range(a)
    _, b_hi = _z_range(b)
    if abs(a_lo - b_hi) > tol or a.center[2] <= b.center[2]:
        return False
    lo, hi = b.aabb()
    x, y = a.center[:2]
    return bool(lo[0] - tol <= x <= hi[0] + tol and lo[1] - tol <= y <= hi[1] + tol)


def touching(a: Obb, b: Obb, tol: float) -> bool:
    grown = Obb(a.center, a.extents + 2 * tol, a.rotation)
    return not obbs_separated(grown, b)


def in_facing_cone(viewer: Obb, facing_xy, other: Obb, half_angle_deg: float) -> bool:
    d = np.asarray(other.center[:2] - viewer.center[:2], dtype=float)
    n = np.linalg.norm(d)
    f = np.asarray(facing_xy, dtype=float)
    if n < 1e-12 or np.linalg.norm(f) < 1e-12:
        return False
    cos = float(d @ f) / (n * float(np.linalg.norm(f)))
    return cos >= math.cos(math.radians(half_angle_deg))


def spatial_predicates(
    a: Obb,
    b: Obb,
    rules: RelationRules = RelationRules(),
    a_facing=None,
    b_facing=None,
) -> list[str]:
    """Ranked predicates phrased ``a -> b`` (at most five)."""
    preds: list[str] = []
    if rests_on(a, b, rules.on_tol):
        preds += ["on", "above"]
    elif rests_on(b, a, rules.on_tol):
        preds += ["under", "below"]
    close = centroid_distance(a, b) < rules.near
    if close:
        preds += ["near", "next to"]
        if b_facing is not None and in_facing_cone(b, b_facing, a, rules.front_half_angle_deg):
            preds.append("in front of")
        elif a_facing is not None and in_facing_cone(a, a_facing, b, rules.front_half_angle_deg):
            preds.append("faces")
    if touching(a, b, rules.on_tol):
        preds.append("touching")
    if not preds:
        preds = ["far from"]
    return preds[:5]
