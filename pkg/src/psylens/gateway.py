"""Uniform access to chat completion, embedding, and fine-tuning backends.

Three operating modes:

* ``live``    - HTTPS JSON against a chat-completions style provider.
* ``record``  - live, but every response lands in a replay store first;
                a store hit short-circuits the network call, which makes
                long runs resumable.
* ``replay``  - store only; a miss is a loud error, never a network call.

Responses are keyed by a fingerprint over the normalized request plus the
trial index, so repeated trials at nonzero temperature replay as distinct
recorded responses. Credentials come only from the environment.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence

import httpx

from .errors import BackendError, ConfigError, ReplayMissError, RetryBudgetExceededError

logger = logging.getLogger(__name__)

API_KEY_ENV = "PSYLENS_API_KEY"
BASE_URL_ENV = "PSYLENS_BASE_URL"

_VALID_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _VALID_ROLES:
            raise ValueError(f"invalid role {self.role!r}")


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 1.0
    max_tokens: int | None = None
    request_tag: str = ""
    trial_index: int = 0

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if not (self.temperature >= 0.0 and self.temperature == self.temperature):
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")
        if self.trial_index < 0:
            raise ValueError("trial_index must be >= 0")


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    retries: int = 0
    replayed: bool = False


@dataclass(frozen=True)
class CompletionResult:
    text: str
    model_id: str
    usage: Usage


@dataclass(frozen=True)
class FineTuneSpec:
    base_model: str
    training_file: str
    validation_file: str | None = None
    epochs: int = 1
    learning_rate_multiplier: float | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class FineTuneResult:
    model_id: str
    status: str
    replayed: bool = False


# ---------------------------------------------------------------------------
# Fingerprints
# ---------------------------------------------------------------------------


def _fingerprint(payload: dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def completion_fingerprint(request: CompletionRequest) -> str:
    return _fingerprint(
        {
            "kind": "chat",
            "model": request.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "request_tag": request.request_tag,
            "trial": request.trial_index,
        }
    )


def embedding_fingerprint(model_id: str, texts: Sequence[str]) -> str:
    return _fingerprint({"kind": "embed", "model": model_id, "texts": list(texts)})


def finetune_fingerprint(spec: FineTuneSpec, training_file_sha: str) -> str:
    return _fingerprint(
        {
            "kind": "finetune",
            "base_model": spec.base_model,
            "training_file_sha": training_file_sha,
            "epochs": spec.epochs,
            "learning_rate_multiplier": spec.learning_rate_multiplier,
        }
    )


# ---------------------------------------------------------------------------
# Replay store
# ---------------------------------------------------------------------------


class ReplayStore:
    """A directory of fingerprint-named JSON response files, sharded two-deep."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def _path(self, fingerprint: str) -> Path:
        return self.root / fingerprint[:2] / f"{fingerprint}.json"

    def __contains__(self, fingerprint: str) -> bool:
        return self._path(fingerprint).exists()

    def get(self, fingerprint: str) -> dict[str, Any]:
        path = self._path(fingerprint)
        if not path.exists():
            raise ReplayMissError(fingerprint)
        return json.loads(path.read_text(encoding="utf-8"))["response"]

    def put(self, fingerprint: str, kind: str, response: dict[str, Any]) -> None:
        path = self._path(fingerprint)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {"fingerprint": fingerprint, "kind": kind, "response": response}
        path.write_text(
            json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )

    def count(self) -> int:
        return sum(1 for _ in self.root.glob("*/*.json"))


# ---------------------------------------------------------------------------
# Rate limiting
# ---------------------------------------------------------------------------


class TokenBucket:
    """Simple thread-safe token bucket; acquire() blocks until a token is free."""

    def __init__(self, rate_per_second: float, capacity: float | None = None) -> None:
        if rate_per_second <= 0:
            raise ValueError("rate_per_second must be > 0")
        self.rate = rate_per_second
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_second)
        self._tokens = self.capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class Backend(Protocol):
    name: str

    def complete(self, request: CompletionRequest) -> dict[str, Any]: ...

    def embed(self, model_id: str, texts: Sequence[str]) -> dict[str, Any]: ...

    def create_finetune(self, spec: FineTuneSpec) -> dict[str, Any]: ...

    def poll_finetune(self, job_id: str) -> dict[str, Any]: ...


_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class HttpBackend:
    """Chat-completions style HTTPS backend with bounded retries.

    The wire format follows the common chat-completions/embeddings/fine-tunes
    JSON shape so alternative providers slot in behind the same gateway.
    """

    name = "http"

    def __init__(
        self,
        base_url: str | None = None,
        *,
        api_key: str | None = None,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 60.0,
    ) -> None:
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV, "")).rstrip("/")
        if not self.base_url:
            raise ConfigError(f"no backend endpoint: set {BASE_URL_ENV} or pass base_url")
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not key:
            raise ConfigError(f"no API key: set {API_KEY_ENV} in the environment")
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._client = httpx.Client(
            timeout=timeout, headers={"Authorization": f"Bearer {key}"}
        )

    def _post(self, route: str, payload: dict[str, Any]) -> tuple[dict[str, Any], int]:
        url = f"{self.base_url}{route}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._client.post(url, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("attempt %d against %s failed: %s", attempt + 1, route, exc)
                continue
            if response.status_code in (401, 403):
                raise BackendError(f"authentication failed ({response.status_code}) for {route}")
            if response.status_code in _RETRYABLE_STATUS:
                last_error = BackendError(f"HTTP {response.status_code} from {route}")
                logger.warning("attempt %d against %s: HTTP %d", attempt + 1, route, response.status_code)
                continue
            if response.status_code != 200:
                raise BackendError(f"HTTP {response.status_code} from {route}: {response.text[:200]}")
            try:
                return response.json(), attempt
            except ValueError as exc:
                raise BackendError(f"non-JSON response from {route}") from exc
        raise RetryBudgetExceededError(
            f"{route} failed after {self.max_retries + 1} attempts: {last_error}"
        )

    def complete(self, request: CompletionRequest) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "model": request.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
        }
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens
        body, retries = self._post("/chat/completions", payload)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response: {exc!r}") from exc
        usage = body.get("usage", {})
        return {
            "text": text,
            "prompt_tokens": usage.get("prompt_tokens"),
            "completion_tokens": usage.get("completion_tokens"),
            "retries": retries,
        }

    def embed(self, model_id: str, texts: Sequence[str]) -> dict[str, Any]:
        body, _ = self._post("/embeddings", {"model": model_id, "input": list(texts)})
        try:
            data = sorted(body["data"], key=lambda item: item["index"])
            vectors = [item["embedding"] for item in data]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed embedding response: {exc!r}") from exc
        if len(vectors) != len(texts):
            raise BackendError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        return {"vectors": vectors}

    def create_finetune(self, spec: FineTuneSpec) -> dict[str, Any]:
        content = Path(spec.training_file).read_bytes()
        upload, _ = self._post_files("/files", content, Path(spec.training_file).name)
        hyper: dict[str, Any] = {"n_epochs": spec.epochs}
        if spec.learning_rate_multiplier is not None:
            hyper["learning_rate_multiplier"] = spec.learning_rate_multiplier
        body, _ = self._post(
            "/fine_tuning/jobs",
            {"model": spec.base_model, "training_file": upload["id"], "hyperparameters": hyper},
        )
        return {"job_id": body["id"]}

    def _post_files(self, route: str, content: bytes, filename: str) -> tuple[dict[str, Any], int]:
        url = f"{self.base_url}{route}"
        response = self._client.post(
            url,
            files={"file": (filename, content, "application/jsonl")},
            data={"purpose": "fine-tune"},
        )
        if response.status_code != 200:
            raise BackendError(f"file upload failed: HTTP {response.status_code}")
        return response.json(), 0

    def poll_finetune(self, job_id: str) -> dict[str, Any]:
        response = self._client.get(f"{self.base_url}/fine_tuning/jobs/{job_id}")
        if response.status_code != 200:
            raise BackendError(f"fine-tune poll failed: HTTP {response.status_code}")
        body = response.json()
        return {"status": body.get("status"), "fine_tuned_model": body.get("fine_tuned_model")}


class MockBackend:
    """Deterministic offline backend for tests and fixture recording.

    Completion text comes from an injectable responder; the default answers
    with a short hash-derived string. Embeddings hash character trigrams into
    a fixed-dimension vector, so similar texts score similar and identical
    texts embed identically.
    """

    name = "mock"

    def __init__(
        self,
        responder: Callable[[CompletionRequest], str] | None = None,
        embed_dim: int = 64,
    ) -> None:
        self.responder = responder
        self.embed_dim = embed_dim

    def complete(self, request: CompletionRequest) -> dict[str, Any]:
        if self.responder is not None:
            text = self.responder(request)
        else:
            digest = completion_fingerprint(request)[:12]
            text = f"mock response {digest}"
        return {"text": text, "prompt_tokens": None, "completion_tokens": None, "retries": 0}

    def _embed_one(self, text: str) -> list[float]:
        vector = [0.0] * self.embed_dim
        padded = f"\x02{text}\x03"
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3]
            digest = hashlib.sha256(gram.encode("utf-8")).digest()
            axis = int.from_bytes(digest[:4], "big") % self.embed_dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vector[axis] += sign
        norm = sum(v * v for v in vector) ** 0.5
        if norm == 0:
            vector[0] = 1.0
            norm = 1.0
        # 6 decimals keeps recorded fixtures small; consumers re-normalize.
        return [round(v / norm, 6) for v in vector]

    def embed(self, model_id: str, texts: Sequence[str]) -> dict[str, Any]:
        return {"vectors": [self._embed_one(t) for t in texts]}

    def create_finetune(self, spec: FineTuneSpec) -> dict[str, Any]:
        sha = hashlib.sha256(Path(spec.training_file).read_bytes()).hexdigest()
        return {"job_id": f"job-{finetune_fingerprint(spec, sha)[:12]}"}

    def poll_finetune(self, job_id: str) -> dict[str, Any]:
        return {"status": "succeeded", "fine_tuned_model": f"ft:mock-{job_id.removeprefix('job-')}"}


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------

_MODES = ("live", "record", "replay")


class Gateway:
    """Mode-aware front door for completions, embeddings, and fine-tune jobs.

    Thread-safe: live traffic passes through an optional concurrency semaphore
    and token-bucket rate limit; the replay store is read-only in replay mode.
    """

    def __init__(
        self,
        backend: Backend | None,
        *,
        mode: str = "live",
        store: ReplayStore | None = None,
        embed_model_id: str = "text-embedding-3-small",
        concurrency: int | None = None,
        requests_per_second: float | None = None,
    ) -> None:
        if mode not in _MODES:
            raise ConfigError(f"unknown gateway mode {mode!r}")
        if mode in ("record", "replay") and store is None:
            raise ConfigError(f"{mode} mode requires a replay store")
        if mode in ("live", "record") and backend is None:
            raise ConfigError(f"{mode} mode requires a backend")
        self.backend = backend
        self.mode = mode
        self.store = store
        self.embed_model_id = embed_model_id
        self._semaphore = threading.Semaphore(concurrency) if concurrency else None
        self._bucket = TokenBucket(requests_per_second) if requests_per_second else None

    @property
    def backend_id(self) -> str:
        backend_name = self.backend.name if self.backend else "none"
        return f"{self.mode}:{backend_name}"

    def _call_backend(self, fn: Callable[[], dict[str, Any]]) -> dict[str, Any]:
        if self._bucket is not None:
            self._bucket.acquire()
        if self._semaphore is not None:
            with self._semaphore:
                return fn()
        return fn()

    def _dispatch(self, fingerprint: str, kind: str, call: Callable[[], dict[str, Any]]) -> tuple[dict[str, Any], bool]:
        if self.store is not None and self.mode in ("record", "replay") and fingerprint in self.store:
            return self.store.get(fingerprint), True
        if self.mode == "replay":
            raise ReplayMissError(fingerprint)
        raw = self._call_backend(call)
        if self.mode == "record":
            assert self.store is not None
            self.store.put(fingerprint, kind, raw)
        return raw, False

    def complete(self, request: CompletionRequest) -> CompletionResult:
        fingerprint = completion_fingerprint(request)
        assert self.backend is not None or self.mode == "replay"
        raw, replayed = self._dispatch(
            fingerprint, "chat", lambda: self.backend.complete(request)  # type: ignore[union-attr]
        )
        return CompletionResult(
            text=raw["text"],
            model_id=request.model_id,
            usage=Usage(
                prompt_tokens=raw.get("prompt_tokens"),
                completion_tokens=raw.get("completion_tokens"),
                retries=raw.get("retries", 0),
                replayed=replayed,
            ),
        )

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires at least one text")
        fingerprint = embedding_fingerprint(self.embed_model_id, texts)
        raw, _ = self._dispatch(
            fingerprint, "embed", lambda: self.backend.embed(self.embed_model_id, list(texts))  # type: ignore[union-attr]
        )
        return [list(map(float, vector)) for vector in raw["vectors"]]

    def finetune(
        self, spec: FineTuneSpec, *, poll_interval: float = 5.0, timeout: float = 3600.0
    ) -> FineTuneResult:
        """Run a fine-tune job to completion; replays return the recorded result."""
        sha = hashlib.sha256(Path(spec.training_file).read_bytes()).hexdigest()
        fingerprint = finetune_fingerprint(spec, sha)

        def run_job() -> dict[str, Any]:
            assert self.backend is not None
            job = self.backend.create_finetune(spec)
            deadline = time.monotonic() + timeout
            while True:
                status = self.backend.poll_finetune(job["job_id"])
                if status["status"] == "succeeded":
                    return {"status": "succeeded", "fine_tuned_model": status["fine_tuned_model"]}
                if status["status"] in ("failed", "cancelled"):
                    raise BackendError(f"fine-tune job {job['job_id']} ended as {status['status']}")
                if time.monotonic() >= deadline:
                    raise BackendError(f"fine-tune job {job['job_id']} timed out")
                time.sleep(poll_interval)

        raw, replayed = self._dispatch(fingerprint, "finetune", run_job)
        return FineTuneResult(
            model_id=raw["fine_tuned_model"], status=raw["status"], replayed=replayed
        )


# ---------------------------------------------------------------------------
# Fine-tune file construction and grid search
# ---------------------------------------------------------------------------


def build_finetune_file(
    examples: Iterable[tuple[str, str]], system_prompt: str
) -> str:
    """Serialize (segment_text, expected_response) pairs as chat-format JSONL.

    Every example becomes one line: system prompt, segment as the user turn,
    the canonical structured answer as the assistant turn. Negative segments
    belong in ``examples`` too, carrying the explicit no-symptom answer.
    """
    lines = []
    for i, (segment_text, expected_response) in enumerate(examples):
        if not segment_text.strip():
            raise ValueError(f"example {i}: segment text is empty")
        record = {
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": segment_text},
                {"role": "assistant", "content": expected_response},
            ]
        }
        lines.append(json.dumps(record, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_finetune_file(content: str) -> list[tuple[str, str]]:
    """Inverse of build_finetune_file, dropping the shared system prompt."""
    pairs = []
    for line_number, line in enumerate(content.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            messages = {m["role"]: m["content"] for m in record["messages"]}
            pairs.append((messages["user"], messages["assistant"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"line {line_number}: not a chat-format example: {exc!r}") from exc
    return pairs


@dataclass(frozen=True)
class FineTuneGrid:
    epochs: tuple[int, ...]
    learning_rate_multipliers: tuple[float | None, ...] = (None,)

    def __post_init__(self) -> None:
        if not self.epochs or not self.learning_rate_multipliers:
            raise ValueError("grid axes must be non-empty")


@dataclass
class GridCell:
    epochs: int
    learning_rate_multiplier: float | None
    model_id: str | None = None
    score: float | None = None
    status: str = "pending"
    error: str | None = None


@dataclass(frozen=True)
class GridResult:
    cells: tuple[GridCell, ...]
    best: GridCell

    @property
    def best_spec_fields(self) -> dict[str, Any]:
        return {
            "epochs": self.best.epochs,
            "learning_rate_multiplier": self.best.learning_rate_multiplier,
        }


def run_finetune_grid(
    gateway: Gateway,
    grid: FineTuneGrid,
    *,
    base_model: str,
    training_file: str | Path,
    evaluate_model: Callable[[str], float],
    validation_file: str | Path | None = None,
    poll_interval: float = 5.0,
) -> GridResult:
    """Fine-tune one model per grid cell and pick the best validation score.

    Cells are visited in row-major order (epochs outer, learning rate inner);
    ties resolve to the earliest cell. Failed cells are recorded and skipped;
    if every cell fails the whole grid errors out.
    """
    cells: list[GridCell] = []
    for epochs in grid.epochs:
        for lr in grid.learning_rate_multipliers:
            cell = GridCell(epochs=epochs, learning_rate_multiplier=lr)
            cells.append(cell)
            spec = FineTuneSpec(
                base_model=base_model,
                training_file=str(training_file),
                validation_file=str(validation_file) if validation_file else None,
                epochs=epochs,
                learning_rate_multiplier=lr,
            )
            try:
                result = gateway.finetune(spec, poll_interval=poll_interval)
                cell.model_id = result.model_id
                cell.score = float(evaluate_model(result.model_id))
                cell.status = "succeeded"
            except BackendError as exc:
                cell.status = "failed"
                cell.error = str(exc)
                logger.warning("grid cell (epochs=%d, lr=%s) failed: %s", epochs, lr, exc)
    best: GridCell | None = None
    for cell in cells:
        if cell.status != "succeeded":
            continue
        if best is None or cell.score > best.score:  # type: ignore[operator]
            best = cell
    if best is None:
        raise BackendError("all fine-tune grid cells failed")
    return GridResult(cells=tuple(cells), best=best)


def replace_request_messages(
    request: CompletionRequest, messages: Sequence[Message]
) -> CompletionRequest:
    return replace(request, messages=tuple(messages))
