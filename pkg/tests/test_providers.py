"""Wire protocol shape of the live clients and the retry helper."""

import base64
import json

import httpx
import pytest

from nudgex.errors import TransportError
from nudgex.providers import (
    ChatMessage,
    ChatRequest,
    HttpChatClient,
    HttpEmbeddingClient,
    ImagePart,
    StubRagChatClient,
    TextPart,
    request_to_wire,
    response_from_wire,
    with_retries,
)

PNG_STUB = b"\x89PNG\r\n\x1a\nfakepng"


def sample_request() -> ChatRequest:
    return ChatRequest(
        model="llama-4-maverick",
        temperature=0.2,
        messages=(
            ChatMessage.text("system", "interpret the scene"),
            ChatMessage(role="user", parts=(TextPart("Site: x\nScene: y"), ImagePart(PNG_STUB))),
        ),
    )


def test_wire_request_shape():
    wire = request_to_wire(sample_request())
    assert wire["model"] == "llama-4-maverick"
    assert wire["temperature"] == 0.2
    assert wire["messages"][0] == {
        "role": "system",
        "content": [{"type": "text", "text": "interpret the scene"}],
    }
    image_part = wire["messages"][1]["content"][1]
    assert image_part["type"] == "image"
    assert base64.b64decode(image_part["image"]["b64"]) == PNG_STUB


def test_wire_response_first_choice():
    assert response_from_wire({"choices": [{"message": {"content": "hello"}}]}) == "hello"
    with pytest.raises(TransportError):
        response_from_wire({"choices": []})


def test_http_chat_client_round_trip():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["path"] = request.url.path
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "a caption"}}]})

    client = HttpChatClient(
        "https://models.example/v1", "NUDGEX_MLLM_API_KEY",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
    )
    assert client.complete(sample_request()) == "a caption"
    assert seen["path"] == "/v1/chat/completions"
    assert seen["body"]["messages"][1]["content"][0]["type"] == "text"


def test_http_chat_client_http_error_is_transport_error():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(500, json={"error": "boom"})

    client = HttpChatClient(
        "https://models.example/v1", "NUDGEX_MLLM_API_KEY",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
    )
    with pytest.raises(TransportError):
        client.complete(sample_request())


def test_http_embedding_client_round_trip():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["path"] = request.url.path
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"data": [{"embedding": [0.6, 0.8]}]})

    client = HttpEmbeddingClient(
        "https://embed.example/v1", "all-minilm-l6-v2", "NUDGEX_EMBED_API_KEY",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
    )
    rows = client.embed(["some caption"])
    assert rows == [[0.6, 0.8]]
    assert seen["path"] == "/v1/embeddings"
    assert seen["body"] == {"model": "all-minilm-l6-v2", "input": ["some caption"]}


def test_http_embedding_client_row_count_mismatch():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json={"data": []})

    client = HttpEmbeddingClient(
        "https://embed.example/v1", "m", "NUDGEX_EMBED_API_KEY",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
    )
    with pytest.raises(TransportError):
        client.embed(["text"])


def test_with_retries_backoff_sequence():
    attempts = []
    delays = []

    def flaky():
        attempts.append(1)
        if len(attempts) < 4:
            raise TransportError("down")
        return "up"

    assert with_retries(flaky, attempts=4, base_delay=0.25, sleep=delays.append) == "up"
    assert len(attempts) == 4
    assert delays == [0.25, 0.5, 1.0]


def test_with_retries_exhaustion_reports_attempts():
    def always_down():
        raise TransportError("down")

    with pytest.raises(TransportError) as err:
        with_retries(always_down, attempts=3, sleep=lambda _: None)
    assert err.value.attempts == 3


def test_with_retries_does_not_catch_other_errors():
    def broken():
        raise ValueError("logic bug")

    with pytest.raises(ValueError):
        with_retries(broken, attempts=3, sleep=lambda _: None)


def test_stub_rag_client_echoes_only_evidence_markers():
    client = StubRagChatClient()
    request = ChatRequest(
        model="deepseek-chat",
        temperature=0.2,
        messages=(
            ChatMessage.text("system", "cite sites like [this-id]"),
            ChatMessage.text(
                "user",
                "Question: q\n\nEvidence:\n[site-a] A (AU): text\n[site-b] B (AU): text",
            ),
        ),
    )
    response = client.complete(request)
    assert "[site-a]" in response and "[site-b]" in response
    assert "[this-id]" not in response
