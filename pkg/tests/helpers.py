"""Shared test utilities: embedders, stub HTTP server, span helpers."""

from __future__ import annotations

import http.server
import json
import threading
from typing import Sequence

import numpy as np

from psylens.spanalign import LocatedSpan, Token


class OrthonormalEmbedder:
    """Maps each distinct string to its own axis; identical strings coincide.

    Callable like a token embedder and duck-types the gateway's embed surface
    (embed method + embed_model_id), so it drives both BERTScore and RAG tests.
    """

    embed_model_id = "orthonormal-test"

    def __init__(self, dim: int = 256) -> None:
        self.dim = dim
        self._axes: dict[str, int] = {}

    def _axis(self, text: str) -> int:
        if text not in self._axes:
            if len(self._axes) >= self.dim:
                raise RuntimeError("orthonormal embedder ran out of axes")
            self._axes[text] = len(self._axes)
        return self._axes[text]

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            vector = [0.0] * self.dim
            vector[self._axis(text)] = 1.0
            out.append(vector)
        return out

    def __call__(self, texts: Sequence[str]) -> list[list[float]]:
        return self.embed(texts)


class StaticVectorEmbedder:
    """Returns preassigned vectors per text; unknown texts get the default."""

    embed_model_id = "static-test"

    def __init__(self, table: dict[str, Sequence[float]], default: Sequence[float] | None = None) -> None:
        self.table = {k: list(v) for k, v in table.items()}
        self.default = list(default) if default is not None else None

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            if text in self.table:
                out.append(list(self.table[text]))
            elif self.default is not None:
                out.append(list(self.default))
            else:
                raise KeyError(text)
        return out


def tokens_from_words(words: Sequence[str]) -> tuple[str, list[Token]]:
    """Build a segment string of space-separated words plus its token list."""
    text = " ".join(words)
    tokens = []
    cursor = 0
    for i, word in enumerate(words):
        tokens.append(Token(text=word, start_char=cursor, end_char=cursor + len(word), index=i))
        cursor += len(word) + 1
    return text, tokens


def span_covering(tokens: Sequence[Token], first: int, last: int) -> LocatedSpan:
    """A span exactly covering tokens[first..last]."""
    return LocatedSpan(tokens[first].start_char, tokens[last].end_char)


class ScriptedHandler(http.server.BaseHTTPRequestHandler):
    """Serves scripted (status, body) responses in order; repeats the last."""

    script: list[tuple[int, dict]] = []
    hits: list[str] = []

    def _serve(self) -> None:
        type(self).hits.append(self.path)
        index = min(len(type(self).hits) - 1, len(self.script) - 1)
        status, body = self.script[index]
        payload = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_POST(self) -> None:  # noqa: N802 - http.server API
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        self._serve()

    def do_GET(self) -> None:  # noqa: N802
        self._serve()

    def log_message(self, *args) -> None:  # silence test output
        pass


class StubServer:
    """A throwaway local HTTP server with a scripted response sequence."""

    def __init__(self, script: list[tuple[int, dict]]) -> None:
        handler = type("Handler", (ScriptedHandler,), {"script": script, "hits": []})
        self.handler = handler
        self.server = http.server.HTTPServer(("127.0.0.1", 0), handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    @property
    def hits(self) -> list[str]:
        return self.handler.hits

    def __enter__(self) -> "StubServer":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()


def chat_body(text: str) -> dict:
    return {
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 7, "completion_tokens": 3},
    }


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    va, vb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))
