"""Small text helpers shared by the mock models, retrieval and scoring."""

from __future__ import annotations

import re

_WORD = re.compile(r"[a-z0-9]+")

STOPWORDS = frozenset(
    """a an the of is are was were be there here what which who whom where how many much
    please answer question in room this that these those it its and or to do does did
    i you me my your we our can could would should will find tell show give me object objects
    any some with for from by at as""".split()
)

ARTICLES = frozenset({"a", "an", "the"})


def singular(word: str) -> str:
    """Naive English singular, enough for object nouns."""
    if len(word) <= 3 or word.endswith("ss"):
        return word
    if word.endswith("ves"):
        return word[:-3] + "f"
    if word.endswith("ies"):
        return word[:-3] + "y"
    if word.endswith(("xes", "ches", "shes", "sses")):
        return word[:-2]
    if word.endswith("s") and not word.endswith(("us", "is")):
        return word[:-1]
    return word


def words(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def content_tokens(text: str) -> list[str]:
    return [singular(w) for w in words(text) if w not in STOPWORDS]


def norm_label(text: str) -> str:
    """Lowercase, drop articles, singularise: ``"The Chairs"`` -> ``"chair"``."""
    return " ".join(singular(w) for w in words(text) if w not in ARTICLES)


def normalize_answer(text: str) -> str:
    return " ".join(w for w in words(text) if w not in ARTICLES)
