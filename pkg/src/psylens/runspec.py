"""Run configuration files: parsing, validation, and hashing.

A run config is a JSON document with sections for the corpus location, the
participant split, the backend, the experiment arms, RAG, and G-Eval. Paths
are resolved relative to the config file so fixture configs stay portable.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .corpus import CorpusPaths, SplitConfig, SummaryVariant
from .docio import read_json_document
from .errors import ConfigError
from .gateway import API_KEY_ENV, BASE_URL_ENV, Gateway, HttpBackend, ReplayStore
from .pipeline import ExperimentSettings, Mode, RunConfig

RUN_CONFIG_SCHEMA = "run_config/v1"


@dataclass(frozen=True)
class BackendSettings:
    mode: str = "live"  # live | record | replay
    base_url: str | None = None
    chat_model: str = "gpt-4-turbo"
    embed_model: str = "text-embedding-3-small"
    replay_store: Path | None = None
    max_retries: int = 3
    concurrency: int | None = None
    requests_per_second: float | None = None


@dataclass(frozen=True)
class RagSettings:
    reference_doc: Path | None = None
    index_path: Path | None = None
    chunk_size: int = 1000
    overlap: int = 100
    top_k: int = 4
    context_budget: int = 4000


@dataclass(frozen=True)
class FineTuneSettings:
    base_model: str = "gpt-3.5-turbo"
    epochs: tuple[int, ...] = (5,)
    learning_rate_multipliers: tuple[float | None, ...] = (None,)
    system_template: str = "finetune_symptom"


@dataclass(frozen=True)
class AppConfig:
    corpus: CorpusPaths
    split: SplitConfig
    backend: BackendSettings
    runs: tuple[RunConfig, ...]
    settings: ExperimentSettings
    rag: RagSettings
    finetune: FineTuneSettings
    config_hash: str
    source_path: Path

    def needs_rag(self) -> bool:
        return any(r.mode is Mode.ZERO_SHOT_RAG for r in self.runs)


def _resolve(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else (base / path).resolve()


def _parse_run(entry: dict[str, Any], backend: BackendSettings, index: int) -> RunConfig:
    try:
        mode = Mode(entry.get("mode", ""))
    except ValueError:
        raise ConfigError(f"runs[{index}]: unknown mode {entry.get('mode')!r}") from None
    variants = tuple(SummaryVariant(v) for v in entry.get("summary_variants", ()))
    return RunConfig(
        label=entry.get("label", mode.value),
        mode=mode,
        model_id=entry.get("model_id", backend.chat_model),
        temperature=entry.get("temperature", 1.0),
        trials=entry.get("trials", 3),
        summary_variants=variants,
        fine_tuned_model_id=entry.get("fine_tuned_model_id"),
        exemplar_count=entry.get("exemplar_count", 60),
        run_stressors=entry.get("run_stressors", False),
    )


def load_app_config(
    path: str | Path,
    *,
    backend_override: str | None = None,
    trials_override: int | None = None,
) -> AppConfig:
    path = Path(path).resolve()
    doc = read_json_document(path, RUN_CONFIG_SCHEMA)
    base = path.parent

    corpus_doc = doc.get("corpus", {})
    corpus_root = _resolve(base, corpus_doc.get("root"))
    if corpus_root is None:
        raise ConfigError(f"{path}: corpus.root is required")

    split_doc = doc.get("split", {})
    split = SplitConfig(
        train=tuple(split_doc.get("train", ())),
        validation=tuple(split_doc.get("validation", ())),
        test=tuple(split_doc.get("test", ())),
    )

    backend_doc = doc.get("backend", {})
    backend = BackendSettings(
        mode=backend_override or backend_doc.get("mode", "live"),
        base_url=backend_doc.get("base_url"),
        chat_model=backend_doc.get("chat_model", "gpt-4-turbo"),
        embed_model=backend_doc.get("embed_model", "text-embedding-3-small"),
        replay_store=_resolve(base, backend_doc.get("replay_store")),
        max_retries=backend_doc.get("max_retries", 3),
        concurrency=backend_doc.get("concurrency"),
        requests_per_second=backend_doc.get("requests_per_second"),
    )

    runs_doc = doc.get("runs", [])
    if not runs_doc:
        raise ConfigError(f"{path}: at least one entry under 'runs' is required")
    runs = []
    for i, entry in enumerate(runs_doc):
        if trials_override is not None:
            entry = {**entry, "trials": trials_override}
        runs.append(_parse_run(entry, backend, i))
    labels = [r.label for r in runs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{path}: run labels must be unique, got {labels}")

    tasks_doc = doc.get("tasks", {})
    geval_doc = doc.get("geval", {})
    rag_doc = doc.get("rag", {})
    settings = ExperimentSettings(
        stressor_chunk_chars=tasks_doc.get("stressor_chunk_chars", 6000),
        match_threshold=tasks_doc.get("match_threshold", 0.6),
        tokenizer=tasks_doc.get("tokenizer", "unicode_words"),
        judge_model_id=geval_doc.get("judge_model", "gpt-4-0314"),
        geval_samples=geval_doc.get("n_samples", 3),
        geval_temperature=geval_doc.get("temperature", 1.0),
        rag_top_k=rag_doc.get("top_k", 4),
        rag_budget_chars=rag_doc.get("context_budget", 4000),
        segment_workers=tasks_doc.get("segment_workers", 1),
    )

    rag = RagSettings(
        reference_doc=_resolve(base, rag_doc.get("reference_doc")),
        index_path=_resolve(base, rag_doc.get("index_path")),
        chunk_size=rag_doc.get("chunk_size", 1000),
        overlap=rag_doc.get("overlap", 100),
        top_k=rag_doc.get("top_k", 4),
        context_budget=rag_doc.get("context_budget", 4000),
    )

    finetune_doc = doc.get("finetune", {})
    finetune = FineTuneSettings(
        base_model=finetune_doc.get("base_model", "gpt-3.5-turbo"),
        epochs=tuple(finetune_doc.get("epochs", (5,))),
        learning_rate_multipliers=tuple(
            finetune_doc.get("learning_rate_multipliers", (None,))
        ),
        system_template=finetune_doc.get("system_template", "finetune_symptom"),
    )

    canonical = json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    overrides = f"|backend={backend.mode}|trials={trials_override}"
    config_hash = hashlib.sha256((canonical + overrides).encode("utf-8")).hexdigest()

    return AppConfig(
        corpus=CorpusPaths(root=corpus_root),
        split=split,
        backend=backend,
        runs=tuple(runs),
        settings=settings,
        rag=rag,
        finetune=finetune,
        config_hash=config_hash,
        source_path=path,
    )


def build_gateway(backend: BackendSettings) -> Gateway:
    """Construct the gateway for a backend section; fails fast on bad config.

    Live and record modes need the API key in the environment before anything
    else happens, so a missing key never leaves a partial run behind.
    """
    store = ReplayStore(backend.replay_store) if backend.replay_store else None
    if backend.mode == "replay":
        if store is None:
            raise ConfigError("replay mode requires backend.replay_store")
        return Gateway(
            None, mode="replay", store=store, embed_model_id=backend.embed_model
        )
    if backend.mode not in ("live", "record"):
        raise ConfigError(f"unknown backend mode {backend.mode!r}")
    if not os.environ.get(API_KEY_ENV):
        raise ConfigError(
            f"backend mode {backend.mode!r} requires {API_KEY_ENV} in the environment"
        )
    if backend.mode == "record" and store is None:
        raise ConfigError("record mode requires backend.replay_store")
    http = HttpBackend(
        backend.base_url or os.environ.get(BASE_URL_ENV),
        max_retries=backend.max_retries,
    )
    return Gateway(
        http,
        mode=backend.mode,
        store=store,
        embed_model_id=backend.embed_model,
        concurrency=backend.concurrency,
        requests_per_second=backend.requests_per_second,
    )
