"""Provider-agnostic chat and embedding clients.

One JSON wire shape makes hosted model endpoints interchangeable:

    request:  {model, temperature, messages: [{role, content: [part, ...]}]}
    part:     {"type": "text", "text": ...} | {"type": "image", "image": {"b64": ...}}
    response: {"choices": [{"message": {"content": ...}}]}

Images travel as base64 PNG. Deterministic stub clients implement the same
interface so the whole pipeline runs offline.
"""

from __future__ import annotations

import base64
import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence, Union

import httpx

from .errors import TransportError


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    png_bytes: bytes


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    parts: tuple[Part, ...]

    @classmethod
    def text(cls, role: str, text: str) -> "ChatMessage":
        return cls(role=role, parts=(TextPart(text),))


@dataclass(frozen=True)
class ChatRequest:
    model: str
    temperature: float
    messages: tuple[ChatMessage, ...]


def request_to_wire(request: ChatRequest) -> dict:
    messages = []
    for message in request.messages:
        content = []
        for part in message.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                content.append({
                    "type": "image",
                    "image": {"b64": base64.b64encode(part.png_bytes).decode("ascii")},
                })
        messages.append({"role": message.role, "content": content})
    return {"model": request.model, "temperature": request.temperature, "messages": messages}


def response_from_wire(obj: dict) -> str:
    try:
        return obj["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat response: {exc}") from exc


def request_text(request: ChatRequest) -> str:
    """All text parts of a request joined; what the stub clients inspect."""
    chunks = []
    for message in request.messages:
        for part in message.parts:
            if isinstance(part, TextPart):
                chunks.append(part.text)
    return "\n".join(chunks)


def last_user_text(request: ChatRequest) -> str:
    """Text of the final user message only (skips multi-shot exemplars)."""
    for message in reversed(request.messages):
        if message.role == "user":
            return "\n".join(p.text for p in message.parts if isinstance(p, TextPart))
    return ""


class ChatClient(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class EmbeddingClient(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


def with_retries(
    fn: Callable[[], str],
    attempts: int = 3,
    base_delay: float = 0.5,
    factor: float = 2.0,
    sleep: Callable[[float], None] = time.sleep,
):
    """Run fn, retrying TransportError with exponential backoff."""
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    last: Optional[TransportError] = None
    for attempt in range(1, attempts + 1):
        try:
            return fn()
        except TransportError as exc:
            last = exc
            if attempt < attempts:
                sleep(base_delay * factor ** (attempt - 1))
    raise TransportError(f"gave up after {attempts} attempts: {last}", attempts=attempts)


class HttpChatClient:
    """Live chat-completion client over the shared wire protocol."""

    def __init__(
        self,
        base_url: str,
        api_key_env: str,
        client: Optional[httpx.Client] = None,
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        headers = {}
        key = os.environ.get(api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def complete(self, request: ChatRequest) -> str:
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions", json=request_to_wire(request)
            )
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(f"chat completion failed: {exc}") from exc
        return response_from_wire(response.json())


class HttpEmbeddingClient:
    """Live embedding client: {model, input: [text]} -> {data: [{embedding}]}."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str,
        client: Optional[httpx.Client] = None,
        timeout: float = 60.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        headers = {}
        key = os.environ.get(api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        try:
            response = self._client.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": list(texts)},
            )
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(f"embedding call failed: {exc}") from exc
        data = response.json().get("data", [])
        if len(data) != len(texts):
            raise TransportError(f"embedding response has {len(data)} rows for {len(texts)} inputs")
        return [row["embedding"] for row in data]


# ---------------------------------------------------------------------------
# deterministic stubs
# ---------------------------------------------------------------------------

_SITE_RE = re.compile(r"^Site:\s*(\S+)", re.MULTILINE)
_SCENE_RE = re.compile(r"^Scene:\s*(\S+)", re.MULTILINE)


class StubCaptionClient:
    """Returns the fixture caption keyed by (site_id, scene_id) found in the prompt."""

    def __init__(self, captions: Optional[dict[tuple[str, str], str]] = None):
        self.captions = dict(captions or {})
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        # parse only the final user message: the shot exemplars carry
        # Site:/Scene: lines of their own
        text = last_user_text(request)
        site = _SITE_RE.search(text)
        scene = _SCENE_RE.search(text)
        site_id = site.group(1) if site else "unknown-site"
        scene_id = scene.group(1) if scene else "unknown-scene"
        if (site_id, scene_id) in self.captions:
            return self.captions[(site_id, scene_id)]
        return (
            f"Satellite view of {site_id} ({scene_id}): open excavation with exposed "
            "soil, bench terracing, and settling ponds adjacent to disturbed ground."
        )


class StubJudgeClient:
    """Returns a fixed strict-JSON rubric verdict."""

    def __init__(self, scores: Optional[dict[str, int]] = None, rationale: str = "stub verdict"):
        self.scores = scores
        self.rationale = rationale
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        from .judge import DIMENSIONS  # local import avoids a module cycle

        scores = self.scores or {dim: 5 for dim in DIMENSIONS}
        return json.dumps({"scores": scores, "rationale": self.rationale})


class StubRagChatClient:
    """Echoes the bracketed site markers found in the retrieval evidence."""

    def __init__(self, preamble: str = "Mining operations impact the environment"):
        self.preamble = preamble
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        evidence = last_user_text(request).split("Evidence:", 1)[-1]
        markers = []
        for marker in re.findall(r"\[([a-z0-9-]{1,64})\]", evidence):
            if marker not in markers:
                markers.append(marker)
        if not markers:
            return f"{self.preamble}."
        cited = ", ".join(f"[{m}]" for m in markers)
        return f"{self.preamble}, as observed at {cited}."


class ScriptedChatClient:
    """Plays back a fixed response sequence; entries may be exceptions."""

    def __init__(self, responses: Sequence[Union[str, Exception]]):
        self.responses = list(responses)
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        if self.calls >= len(self.responses):
            raise AssertionError("scripted client exhausted")
        response = self.responses[self.calls]
        self.calls += 1
        if isinstance(response, Exception):
            raise response
        return response


@dataclass
class FlakyChatClient:
    """Fails with TransportError a set number of times, then delegates."""

    inner: ChatClient
    failures: int
    calls: int = 0
    attempts_log: list[int] = field(default_factory=list)

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        self.attempts_log.append(self.calls)
        if self.calls <= self.failures:
            raise TransportError(f"simulated outage {self.calls}")
        return self.inner.complete(request)
