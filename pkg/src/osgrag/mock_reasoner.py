"""Rule-table stand-in for the reasoning model.

It reads only the facts in the prompt (closed world) and answers:

- ``how many X`` by counting distinct instance facts labelled X
- ``what is P the Y`` / ``what is the X P`` from relation facts, inverse facts
  included, and from coarse position facts such as ``table on left``
- ``which is the largest/smallest [P the Y]`` by box volume
- ``where is the X`` by echoing a matching fact
- plan instructions by emitting the action sequence for a pick-and-place

Anything else gets ``NOT_FOUND``.
"""

from __future__ import annotations

import re

from .facts import parse_instance_fact, parse_relation_fact
from .predicates import INVERSE
from .text import ARTICLES, norm_label, singular, words

NOT_FOUND = "I cannot find that in the scene."

_QUESTION_PREDICATES = [
    ("to the left of", "left of"),
    ("to the right of", "right of"),
    ("left of", "left of"),
    ("right of", "right of"),
    ("in front of", "in front of"),
    ("on top of", "on"),
    ("next to", "next to"),
    ("close to", "near"),
    ("far from", "far from"),
    ("beneath", "under"),
    ("underneath", "under"),
    ("under", "under"),
    ("below", "below"),
    ("above", "above"),
    ("touching", "touching"),
    ("beside", "beside"),
    ("near", "near"),
    ("faces", "faces"),
    ("facing", "faces"),
    ("atop", "on"),
    ("on", "on"),
]

_POSITION = re.compile(r"^(?P<x>.+?) (?:is )?(?:at|on|in) (?:the )?(?P<where>center|centre|middle|left|right|front|back)$")


class SceneFacts:
    def __init__(self, facts):
        self.instances: dict[int, dict] = {}
        self.relations: list[tuple[str, str, str]] = []
        self.positions: dict[str, str] = {}
        self.raw = list(facts)
        for f in self.raw:
            inst = parse_instance_fact(f)
            if inst is not None:
                self.instances[inst["id"]] = inst
                continue
            t = f.strip().rstrip(".").lower()
            m = _POSITION.match(t)
            if m:
                self.positions[norm_label(m.group("x"))] = m.group("where").replace("centre", "center")
                continue
            rel = parse_relation_fact(t)
            if rel is not None:
                s, p, o = rel
                self.relations.append((norm_label(s), p, norm_label(o)))

    def labels(self) -> list[str]:
        out = {norm_label(i["label"]) for i in self.instances.values()}
        out |= set(self.positions)
        for s, _, o in self.relations:
            out |= {s, o}
        # longest first so "trash bin" wins over "bin"
        return sorted(out, key=lambda s: (-len(s), s))

    def related(self, x: str, pred: str) -> set[str]:
        """Labels y with ``x pred y`` stated directly or through the inverse."""
        inv = INVERSE.get(pred, pred)
        out = {o for s, p, o in self.relations if s == x and p == pred}
        out |= {s for s, p, o in self.relations if o == x and p == inv}
        if pred in ("left of", "right of") and self.positions:
            side = pred.split()[0]
            if self.positions.get(x) == side:
                out |= {y for y, w in self.positions.items() if y != x and w != side}
        return out

    def subjects_of(self, pred: str, y: str) -> set[str]:
        """Labels x with ``x pred y``."""
        inv = INVERSE.get(pred, pred)
        out = {s for s, p, o in self.relations if o == y and p == pred}
        out |= {o for s, p, o in self.relations if s == y and p == inv}
        if pred in ("left of", "right of") and self.positions:
            side = pred.split()[0]
            out |= {x for x, w in self.positions.items() if x != y and w == side}
        return out


def _find_label(phrase: str, labels) -> str | None:
    target = norm_label(phrase)
    if target in labels:
        return target
    # attribute words in front of the noun: "red book" -> "book"
    for lab in labels:
        if target.endswith(" " + lab):
            return lab
    return None


def _split_predicate(text: str, at_start: bool):
    for phrase, pred in _QUESTION_PREDICATES:
        if at_start and (text == phrase or text.startswith(phrase + " ")):
            return pred, text[len(phrase):].strip()
        if not at_start and (text == phrase or text.endswith(" " + phrase)):
            return pred, text[: len(text) - len(phrase)].strip()
    return None, text


def _join(labels: set[str]) -> str:
    return " and ".join(sorted(labels))


def answer(facts, question: str) -> str:
    sf = SceneFacts(facts)
    labels = sf.labels()
    q = " ".join(words(question.replace("-", " ")))

    m = re.match(r"^how many (.+?)(?: are| is| do| can|$)", q)
    if m:
        lab = _find_label(m.group(1), labels)
        if lab is None:
            return NOT_FOUND
        n = sum(1 for i in sf.instances.values() if norm_label(i["label"]) == lab)
        return str(n) if n else NOT_FOUND

    m = re.match(r"^(?:what|which) is the (largest|biggest|smallest) (?:object|thing|one)?\s*(.*)$", q)
    if m:
        pool = list(sf.instances.values())
        pred, rest = _split_predicate(m.group(2), at_start=True)
        if pred is not None:
            y = _find_label(rest, labels)
            if y is None:
                return NOT_FOUND
            allowed = sf.subjects_of(pred, y)
            pool = [i for i in pool if norm_label(i["label"]) in allowed]
        if not pool:
            return NOT_FOUND
        vol = lambda i: i["size"][0] * i["size"][1] * i["size"][2]
        pick = (max if m.group(1) != "smallest" else min)(pool, key=lambda i: (vol(i), -i["id"]))
        return pick["label"]

    m = re.match(r"^where is (?:the |a |an )?(.+)$", q)
    if m:
        lab = _find_label(m.group(1), labels)
        if lab is None:
            return NOT_FOUND
        for s, p, o in sf.relations:
            if s == lab:
                return f"{s} {p} the {o}"
        for f in sf.raw:
            inst = parse_instance_fact(f)
            if inst and norm_label(inst["label"]) == lab:
                x, y, _ = inst["center"]
                return f"{inst['label']} at ({x:.2f}, {y:.2f})"
        return NOT_FOUND

    m = re.match(r"^(?:what|which) (?:object )?is (.+)$", q)
    if m:
        body = m.group(1)
        pred, rest = _split_predicate(body, at_start=True)
        if pred is not None:
            y = _find_label(rest, labels)
            if y is not None:
                found = sf.subjects_of(pred, y)
                return _join(found) if found else NOT_FOUND
        pred, rest = _split_predicate(body, at_start=False)
        if pred is not None:
            x = _find_label(rest, labels)
            if x is not None:
                found = sf.related(x, pred)
                return _join(found) if found else NOT_FOUND
    return NOT_FOUND


def plan(facts, instruction: str) -> str:
    """Pick-and-place plan: first mentioned object is carried to the last one."""
    sf = SceneFacts(facts)
    labels = sf.labels()
    toks = [singular(w) for w in words(instruction)]
    mentions = []  # (token position, label)
    taken = set()
    for lab in labels:
        lt = lab.split()
        for i in range(len(toks) - len(lt) + 1):
            span = range(i, i + len(lt))
            if toks[i : i + len(lt)] == lt and not taken.intersection(span):
                mentions.append((i, lab))
                taken.update(span)
    if not mentions:
        return NOT_FOUND
    mentions.sort()
    target_pos, target = mentions[0]
    dest = next((lab for _, lab in reversed(mentions) if lab != target), None)
    steps = []
    # attribute words between the article and the noun mean the object must be searched for
    j = target_pos - 1
    while j >= 0 and toks[j] not in ARTICLES:
        j -= 1
    if j >= 0 and target_pos - j > 1:
        steps.append(f"find({target})")
    steps += [f"navigate({target})", f"grasp({target})"]
    if dest is not None:
        steps += [f"navigate({dest})", f"place({target})"]
    return ", ".join(steps)
