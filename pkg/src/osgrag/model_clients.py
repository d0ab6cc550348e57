"""One client interface over the labeler, relation ranker, reasoner and encoder.

Two backends implement it:

``MockBackend``
    Deterministic, offline.  Embeddings are bag-of-words sums of per-token
    vectors drawn from a seeded generator; synonym groups from the fixture
    file share a dominant component so their members land at cosine ~0.99.
    Labels come from the fixture table or the detector's hint, predicates
    from the geometric rules, answers from ``mock_reasoner``.

``HttpBackend``
    OpenAI-compatible ``/chat/completions`` and ``/embeddings`` over httpx,
    bounded by a semaphore of ``max_parallel`` and retried with exponential
    backoff on transport errors, 429 and 5xx.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import httpx
import numpy as np
from PIL import Image

from . import mock_reasoner
from .errors import ClientMalformedReply, ClientUnavailable, EmptyInput, UnresolvableReference
from .geometry import Obb
from .predicates import RelationRules, spatial_predicates
from .rng import SplitMix64
from .text import content_tokens, singular, words

log = logging.getLogger(__name__)

DEFAULT_DIM = 384
SYNONYM_OWN_WEIGHT = 0.1
IMAGE_DIGEST_WEIGHT = 0.1
MAX_PREDICATES = 5


@dataclass(frozen=True)
class ClientConfig:
    base_url: str = "http://localhost:8000/v1"
    model_name: str = "qwen2-72b-instruct"
    vision_model_name: str = "qwen2-vl-72b-instruct"
    embedding_model_name: str = "text-embedding"
    api_key_env: str = "OSGRAG_API_KEY"
    timeout: float = 60.0
    max_parallel: int = 4
    retry_count: int = 2
    backoff: float = 0.5

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.retry_count < 0:
            raise ValueError("retry_count must be >= 0")


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size == 0:
            raise ValueError("embedding is empty")
        if self.normalized and abs(float(np.linalg.norm(v)) - 1.0) > 1e-6:
            raise ValueError("normalized embedding must have unit length")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def unit(cls, values) -> "EmbeddingVector":
        v = np.asarray(values, dtype=np.float64)
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise ValueError("cannot normalise a zero vector")
        return cls(v / n, True)

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return self.normalized == other.normalized and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    x, y = a.values, b.values
    return float(x @ y) / (float(np.linalg.norm(x)) * float(np.linalg.norm(y)))


def mean_embedding(vectors) -> EmbeddingVector:
    """Normalised mean of unit embeddings (mixed-modality queries)."""
    vectors = list(vectors)
    if not vectors:
        raise EmptyInput("no embeddings to combine")
    return EmbeddingVector.unit(np.mean([v.values for v in vectors], axis=0))


@dataclass(frozen=True)
class NodeContext:
    id: int
    label: str
    description: str
    crop_ref: str
    obb: Obb

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "description": self.description,
            "crop_ref": self.crop_ref,
            "bbox_center": [round(float(x), 4) for x in self.obb.center],
            "bbox_extent": [round(float(x), 4) for x in self.obb.extents],
        }


@dataclass(frozen=True)
class RelationQuery:
    """Everything the relation ranker sees about one (subject, object) pair."""

    subject: NodeContext
    object: NodeContext
    distance: float


def load_fixture(path=None) -> dict:
    if path is None:
        text = resources.files("osgrag").joinpath("data/mock_models.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    return {
        "synonym_groups": [list(g) for g in doc.get("synonym_groups", [])],
        "labels": {k: tuple(v) for k, v in doc.get("labels", {}).items()},
        "captions": dict(doc.get("captions", {})),
        "predicate_overrides": {k: list(v) for k, v in doc.get("predicate_overrides", {}).items()},
    }


def _ref_stem(ref: str) -> str:
    name = ref.split("#", 1)[0].rsplit("/", 1)[-1]
    return name.split(".", 1)[0]


class MockBackend:
    """Deterministic offline backend; every method is a pure function of its inputs and the seed."""

    def __init__(
        self,
        seed: int = 0,
        dim: int = DEFAULT_DIM,
        fixture: dict | str | Path | None = None,
        image_root=None,
        rules: RelationRules = RelationRules(),
        captions: dict | None = None,
        replies: dict | None = None,
    ):
        if dim < 8:
            raise ValueError("embedding dimension must be >= 8")
        self.seed = int(seed)
        self.dim = dim
        fx = fixture if isinstance(fixture, dict) else load_fixture(fixture)
        self.fixture = fx
        self.image_root = Path(image_root) if image_root is not None else None
        self.rules = rules
        self.captions = {**fx.get("captions", {}), **(captions or {})}
        self.labels_table = dict(fx.get("labels", {}))
        self.overrides = dict(fx.get("predicate_overrides", {}))
        self.replies = {k.strip().lower(): v for k, v in (replies or {}).items()}
        # token -> (group index, member token)
        self._member: dict[str, tuple[int, str]] = {}
        self._phrases: list[tuple[str, str]] = []
        for gi, group in enumerate(fx.get("synonym_groups", [])):
            for member in group:
                toks = [singular(w) for w in words(member)]
                if not toks:
                    continue
                tok = toks[0] if len(toks) == 1 else "zzphrase" + "".join(toks)
                self._member[tok] = (gi, tok)
                if len(toks) > 1:
                    self._phrases.append((" ".join(toks), tok))
        self._phrases.sort(key=lambda p: -len(p[0]))
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def encoder_name(self) -> str:
        return f"mock-bow-d{self.dim}-seed{self.seed}"

    # -- embeddings ---------------------------------------------------------

    def _hash_vector(self, key: str) -> np.ndarray:
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        h = hashlib.blake2b(key.encode("utf-8"), digest_size=8, key=(self.seed % 2**64).to_bytes(8, "little"))
        v = SplitMix64(int.from_bytes(h.digest(), "little")).normals(self.dim)
        v = v / np.linalg.norm(v)
        with self._lock:
            self._cache[key] = v
        return v

    def _token_vector(self, tok: str) -> np.ndarray:
        hit = self._member.get(tok)
        if hit is None:
            return self._hash_vector("tok:" + tok)
        gi, member = hit
        v = self._hash_vector(f"group:{gi}") + SYNONYM_OWN_WEIGHT * self._hash_vector("tok:" + member)
        return v / np.linalg.norm(v)

    def _tokens(self, text: str) -> list[str]:
        flat = " ".join(singular(w) for w in words(text))
        for phrase, tok in self._phrases:
            flat = re.sub(rf"\b{re.escape(phrase)}\b", tok, flat)
        return content_tokens(flat) or words(flat)

    def embed_text(self, text: str) -> EmbeddingVector:
        if not isinstance(text, str) or not text.strip():
            raise EmptyInput("text to embed is empty")
        toks = self._tokens(text)
        if not toks:
            return EmbeddingVector(self._hash_vector("raw:" + text.strip()))
        acc = np.zeros(self.dim)
        for t in toks:
            acc += self._token_vector(t)
        n = float(np.linalg.norm(acc))
        if n == 0.0:
            return EmbeddingVector(self._hash_vector("raw:" + text.strip()))
        return EmbeddingVector(acc / n)

    def _resolve_image(self, ref: str) -> bytes:
        if not ref:
            raise UnresolvableReference("empty image reference")
        if ref in self.captions or ref in self.labels_table:
            return ref.encode("utf-8")
        path = Path(ref.split("#", 1)[0])
        if self.image_root is not None and not path.is_absolute():
            path = self.image_root / path
        if not path.is_file():
            raise UnresolvableReference(f"image {str(path)!r} not found")
        return path.read_bytes() + b"#" + ref.partition("#")[2].encode()

    def embed_image(self, image_ref: str) -> EmbeddingVector:
        content = self._resolve_image(image_ref)
        digest = self._hash_vector("img:" + hashlib.sha256(content).hexdigest())
        caption = self.captions.get(image_ref, self.captions.get(_ref_stem(image_ref)))
        if caption is None:
            return EmbeddingVector(digest)
        v = self.embed_text(caption).values + IMAGE_DIGEST_WEIGHT * digest
        return EmbeddingVector(v / np.linalg.norm(v))

    # -- labeling and relations --------------------------------------------

    def label(self, crop_ref: str, hint: str | None = None, detail: str | None = None) -> tuple[str, str]:
        entry = self.labels_table.get(crop_ref) or self.labels_table.get(_ref_stem(crop_ref))
        if entry is not None:
            return entry[0], entry[1]
        if hint:
            lab = hint.strip().lower()
            return lab, (detail.strip() if detail else f"a {lab}")
        raise ClientMalformedReply(f"mock labeler has no entry for {crop_ref!r} and no hint")

    def rank_predicates(self, query: RelationQuery, a_facing=None, b_facing=None) -> list[str]:
        key = f"{query.subject.label}|{query.object.label}"
        if key in self.overrides:
            return _check_predicates(self.overrides[key])
        return spatial_predicates(query.subject.obb, query.object.obb, self.rules, a_facing, b_facing)

    # -- reasoning ----------------------------------------------------------

    def complete(self, prompt) -> str:
        facts, question, template = _prompt_parts(prompt)
        scripted = self.replies.get(question.strip().lower())
        if scripted is not None:
            return scripted
        if template.startswith("plan"):
            return mock_reasoner.plan(facts, question)
        return mock_reasoner.answer(facts, question)


def _prompt_parts(prompt) -> tuple[list[str], str, str]:
    if hasattr(prompt, "context_facts"):
        return list(prompt.context_facts), prompt.question, prompt.template_id
    text = str(prompt)
    facts = [ln[2:] for ln in text.splitlines() if ln.startswith("- ")]
    question, template = "", "qa/v1"
    for ln in text.splitlines():
        if ln.startswith("Question: "):
            question = ln[len("Question: "):]
        elif ln.startswith("Instruction: "):
            question, template = ln[len("Instruction: "):], "plan/v1"
    return facts, question, template


def _check_predicates(preds) -> list[str]:
    if not isinstance(preds, list) or not all(isinstance(p, str) and p.strip() for p in preds):
        raise ClientMalformedReply("predicates must be a list of non-empty strings")
    preds = [p.strip().lower() for p in preds]
    if not 1 <= len(preds) <= MAX_PREDICATES:
        raise ClientMalformedReply(f"expected 1 to {MAX_PREDICATES} predicates, got {len(preds)}")
    if len(set(preds)) != len(preds):
        raise ClientMalformedReply("duplicate predicates in reply")
    return preds


def parse_predicate_reply(text: str) -> list[str]:
    """Parse the ranker's reply: a JSON array of 1..5 distinct strings, possibly fenced."""
    body = text.strip()
    m = re.search(r"\[.*\]", body, re.S)
    if not m:
        raise ClientMalformedReply(f"no JSON array in reply: {body[:80]!r}")
    try:
        preds = json.loads(m.group(0))
    except json.JSONDecodeError as exc:
        raise ClientMalformedReply(f"bad JSON array: {exc}") from exc
    return _check_predicates(preds)


def parse_label_reply(text: str) -> tuple[str, str]:
    m = re.search(r"\{.*\}", text, re.S)
    if not m:
        raise ClientMalformedReply("no JSON object in label reply")
    try:
        doc = json.loads(m.group(0))
        label = str(doc["label"]).strip().lower()
        desc = str(doc.get("description", "")).strip()
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ClientMalformedReply(f"bad label reply: {exc}") from exc
    if not label:
        raise ClientMalformedReply("empty label")
    return label, desc or f"a {label}"


LABEL_PROMPT = (
    "Name the single object shown in this image crop. "
    'Reply with JSON only: {"label": "<one or two word noun>", "description": "<short phrase with color and shape>"}.'
)

RELATION_PROMPT = (
    "Two objects from a 3D indoor scene are described below with their boxes in meters.\n"
    "{pair}\n"
    "List up to five spatial predicates that complete '<subject> ___ <object>', most fitting first. "
    "Reply with a JSON array of strings only."
)


class HttpBackend:
    """OpenAI-compatible backend. Safe to share between threads."""

    def __init__(self, cfg: ClientConfig = ClientConfig(), image_root=None, transport=None, sleep=time.sleep):
        self.cfg = cfg
        self.image_root = Path(image_root) if image_root is not None else None
        self._sem = threading.BoundedSemaphore(cfg.max_parallel)
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(
            base_url=cfg.base_url.rstrip("/"), headers=headers, timeout=cfg.timeout, transport=transport
        )

    @property
    def encoder_name(self) -> str:
        return f"http:{self.cfg.embedding_model_name}"

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        last = None
        for attempt in range(self.cfg.retry_count + 1):
            if attempt:
                self._sleep(self.cfg.backoff * 2 ** (attempt - 1))
            try:
                with self._sem:
                    resp = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("%s attempt %d failed: %s", path, attempt + 1, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                log.warning("%s attempt %d failed: %s", path, attempt + 1, last)
                continue
            if resp.status_code >= 400:
                raise ClientUnavailable(f"{path}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ClientMalformedReply(f"{path}: reply is not JSON") from exc
        raise ClientUnavailable(f"{path}: gave up after {self.cfg.retry_count + 1} attempts ({last})")

    def _chat(self, messages, model: str) -> str:
        doc = self._post("/chat/completions", {"model": model, "messages": messages, "temperature": 0})
        try:
            content = doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ClientMalformedReply("chat reply lacks choices[0].message.content") from exc
        if not isinstance(content, str):
            raise ClientMalformedReply("chat content is not a string")
        return content

    def _embed(self, inputs: str) -> EmbeddingVector:
        doc = self._post("/embeddings", {"model": self.cfg.embedding_model_name, "input": inputs})
        try:
            values = doc["data"][0]["embedding"]
            return EmbeddingVector.unit(values)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ClientMalformedReply("embedding reply lacks data[0].embedding") from exc

    def embed_text(self, text: str) -> EmbeddingVector:
        if not isinstance(text, str) or not text.strip():
            raise EmptyInput("text to embed is empty")
        return self._embed(text)

    def _image_bytes(self, ref: str) -> bytes:
        file_part, _, frag = ref.partition("#")
        path = Path(file_part)
        if self.image_root is not None and not path.is_absolute():
            path = self.image_root / path
        if not file_part or not path.is_file():
            raise UnresolvableReference(f"image {str(path)!r} not found")
        if not frag:
            return path.read_bytes()
        u0, v0, u1, v1 = (int(x) for x in frag.split(","))
        buf = io.BytesIO()
        with Image.open(path) as im:
            im.crop((u0, v0, u1 + 1, v1 + 1)).save(buf, format="PNG")
        return buf.getvalue()

    def embed_image(self, image_ref: str) -> EmbeddingVector:
        data = base64.b64encode(self._image_bytes(image_ref)).decode()
        return self._embed(f"data:image/png;base64,{data}")

    def label(self, crop_ref: str, hint: str | None = None, detail: str | None = None) -> tuple[str, str]:
        data = base64.b64encode(self._image_bytes(crop_ref)).decode()
        text = LABEL_PROMPT + (f" The detector suggested: {hint}." if hint else "")
        messages = [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": text},
                    {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{data}"}},
                ],
            }
        ]
        return parse_label_reply(self._chat(messages, self.cfg.vision_model_name))

    def rank_predicates(self, query: RelationQuery, a_facing=None, b_facing=None) -> list[str]:
        pair = json.dumps(
            {
                "subject": query.subject.to_dict(),
                "object": query.object.to_dict(),
                "distance": round(float(query.distance), 4),
            },
            sort_keys=True,
        )
        messages = [{"role": "user", "content": RELATION_PROMPT.format(pair=pair)}]
        return parse_predicate_reply(self._chat(messages, self.cfg.vision_model_name))

    def complete(self, prompt) -> str:
        text = prompt.rendered if hasattr(prompt, "rendered") else str(prompt)
        return self._chat([{"role": "user", "content": text}], self.cfg.model_name).strip()


def make_backend(kind: str, seed: int = 0, cfg: ClientConfig = ClientConfig(), image_root=None, **kw):
    if kind == "mock":
        return MockBackend(seed=seed, image_root=image_root, **kw)
    if kind == "http":
        return HttpBackend(cfg, image_root=image_root, **kw)
    raise ValueError(f"unknown backend {kind!r}; expected mock or http")
