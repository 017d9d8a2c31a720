"""Command-line entry points.

Exit codes: 0 success, 1 validation/config failure, 2 degraded run,
3 backend failure. Every command is deterministic under replay backends.
"""

from __future__ import annotations

import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import __version__
from .corpus import (
    CorpusPaths,
    annotation_stats,
    load_annotations,
    load_corpus,
    load_summary_reference,
    load_taxonomy,
    load_transcript,
    split_dataset,
)
from .errors import (
    BackendError,
    ConfigError,
    ParseError,
    PsylensError,
    TemplateError,
    ValidationError,
)
from .gateway import FineTuneGrid, build_finetune_file, run_finetune_grid
from .metrics import Scope, aggregate_multilabel
from .pipeline import (
    Mode,
    RagRuntime,
    RunConfig,
    compute_symptom_scores,
    run_experiment,
    run_symptom_task,
)
from .promptkit import TemplateLibrary, build_exemplars, select_exemplars
from .rag import build_index, chunk_document, chunking_fingerprint, load_index, save_index
from .report import (
    render_distance_histogram,
    render_scope_comparison,
    render_summary_table,
    render_symptom_table,
    write_reports,
)
from .runspec import AppConfig, build_gateway, load_app_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DEGRADED = 2
EXIT_BACKEND = 3


class CliFailure(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _fail_code(exc: PsylensError) -> int:
    if isinstance(exc, BackendError):
        return EXIT_BACKEND
    return EXIT_INVALID


@click.group()
@click.version_option(version=__version__, prog_name="psylens")
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Pipeline and evaluation toolkit for LLM-assisted psychiatric interviews."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _handle(exc: Exception) -> None:
    if isinstance(exc, PsylensError):
        click.echo(f"error: {exc}", err=True)
        sys.exit(_fail_code(exc))
    raise exc


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


@main.command()
@click.argument("corpus_root", type=click.Path(exists=True, file_okay=False, path_type=Path))
def validate(corpus_root: Path) -> None:
    """Validate every corpus file under CORPUS_ROOT, printing per-file diagnostics."""
    paths = CorpusPaths(root=corpus_root)
    failures = 0
    try:
        taxonomy = load_taxonomy(paths.taxonomy_file)
        click.echo(f"ok   {paths.taxonomy_file} ({len(taxonomy)} entries)")
    except PsylensError as exc:
        click.echo(f"FAIL {paths.taxonomy_file}: {exc}", err=True)
        sys.exit(EXIT_INVALID)

    total_stats = []
    for tpath in sorted(paths.transcripts_dir.glob("*.json")):
        try:
            transcript = load_transcript(tpath)
            click.echo(f"ok   {tpath} ({len(transcript.utterances)} utterances)")
        except PsylensError as exc:
            click.echo(f"FAIL {tpath}: {exc}", err=True)
            failures += 1
            continue
        apath = paths.annotations_dir / tpath.name
        if apath.exists():
            try:
                annotations = load_annotations(apath, transcript, taxonomy)
                stats = annotation_stats(annotations)
                total_stats.append(stats)
                click.echo(
                    f"ok   {apath} ({stats.section_labels} section labels, "
                    f"{stats.symptom_type_labels} symptom-type labels)"
                )
            except PsylensError as exc:
                click.echo(f"FAIL {apath}: {exc}", err=True)
                failures += 1
    if paths.summaries_dir.exists():
        for spath in sorted(paths.summaries_dir.glob("*.json")):
            try:
                reference = load_summary_reference(spath)
                click.echo(f"ok   {spath} ({reference.word_count} words)")
            except PsylensError as exc:
                click.echo(f"FAIL {spath}: {exc}", err=True)
                failures += 1
    if total_stats:
        sections = sum(s.section_labels for s in total_stats)
        types = sum(s.symptom_type_labels for s in total_stats)
        click.echo(f"corpus totals: {sections} section labels, {types} symptom-type labels")
    if failures:
        click.echo(f"{failures} invalid file(s)", err=True)
        sys.exit(EXIT_INVALID)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _prepare_rag(app: AppConfig, gateway) -> RagRuntime | None:
    if not app.needs_rag():
        return None
    fingerprint = chunking_fingerprint(
        app.rag.chunk_size, app.rag.overlap, list_separators(), gateway.embed_model_id
    )
    if app.rag.index_path and app.rag.index_path.exists():
        index = load_index(app.rag.index_path, fingerprint)
    else:
        if app.rag.reference_doc is None:
            raise ConfigError("zero_shot_rag runs need rag.reference_doc or rag.index_path")
        text = app.rag.reference_doc.read_text(encoding="utf-8")
        if not text.strip():
            raise ConfigError(f"{app.rag.reference_doc}: reference document is empty")
        chunks = chunk_document(
            text,
            chunk_size=app.rag.chunk_size,
            overlap=app.rag.overlap,
            source_doc=app.rag.reference_doc.stem,
        )
        index = build_index(chunks, gateway, fingerprint)
        if app.rag.index_path:
            save_index(index, app.rag.index_path)
    return RagRuntime(
        index=index, top_k=app.rag.top_k, budget_chars=app.rag.context_budget
    )


def list_separators() -> list[str]:
    from .rag import DEFAULT_SEPARATORS

    return list(DEFAULT_SEPARATORS)


def _dry_run(app: AppConfig, out_dir: Path) -> None:
    """Render every prompt the run would issue, without any completion calls."""
    from .pipeline import _symptom_request  # internal reuse for faithful rendering

    bundle = load_corpus(app.corpus)
    split = split_dataset(bundle.transcripts, app.split)
    templates = TemplateLibrary.load_default()
    prompts_dir = out_dir / "prompts"
    prompts_dir.mkdir(parents=True, exist_ok=True)
    exemplar_pool = build_exemplars(split.train, bundle.annotations, bundle.taxonomy)
    count = 0
    for config in app.runs:
        exemplars = None
        if config.mode is Mode.FEW_SHOT:
            exemplars = select_exemplars(
                exemplar_pool, min(config.exemplar_count, len(exemplar_pool))
            )
        lines = []
        for transcript in split.test:
            from .corpus import segment_utterance_pairs

            for segment in segment_utterance_pairs(transcript):
                request = _symptom_request(
                    segment, config, app.settings, templates, bundle, exemplars, trial=0
                )
                count += 1
                lines.append(f"### {segment.segment_id} ({len(request.messages)} messages)")
                for message in request.messages:
                    lines.append(f"[{message.role}]")
                    lines.append(message.content)
                lines.append("")
        (prompts_dir / f"{config.label}.txt").write_text("\n".join(lines), encoding="utf-8")
    click.echo(f"dry run: rendered {count} prompts into {prompts_dir}; no completions issued")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--backend", "backend_mode", type=click.Choice(["live", "replay", "record"]))
@click.option("--trials", type=int, default=None, help="Override the trial count of every run.")
@click.option("--dry-run", is_flag=True, help="Render all prompts; issue zero completions.")
def run(
    config_path: Path,
    out_dir: Path,
    backend_mode: str | None,
    trials: int | None,
    dry_run: bool,
) -> None:
    """Execute the configured experiment; resumable and replay-deterministic."""
    try:
        app = load_app_config(config_path, backend_override=backend_mode, trials_override=trials)
        if dry_run:
            _dry_run(app, out_dir)
            return
        gateway = build_gateway(app.backend)
        bundle = load_corpus(app.corpus)
        split = split_dataset(bundle.transcripts, app.split)
        templates = TemplateLibrary.load_default()
        rag = _prepare_rag(app, gateway)
        out_dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "schema": "run_meta/v1",
            "config_path": str(app.source_path),
            "config_hash": app.config_hash,
            "backend_mode": app.backend.mode,
            "started_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "tool_version": __version__,
        }
        (out_dir / "run_meta.json").write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8"
        )
        result = run_experiment(
            bundle,
            split,
            app.runs,
            app.settings,
            gateway,
            templates,
            out_dir,
            app.config_hash,
            rag=rag,
        )
        write_reports(out_dir)
        click.echo(f"run complete: {out_dir}")
        if result.degraded:
            click.echo("warning: run is degraded (segment failure rate above threshold)", err=True)
            sys.exit(EXIT_DEGRADED)
    except Exception as exc:  # noqa: BLE001 - single mapping point to exit codes
        _handle(exc)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option(
    "--scope",
    type=click.Choice(["all", "positive"]),
    default="all",
    show_default=True,
    help="Scope for the symptom metrics table printed to stdout.",
)
def report(run_dir: Path, scope: str) -> None:
    """Render report tables from a completed run directory."""
    try:
        reports_dir = write_reports(run_dir)
        metrics = json.loads((reports_dir / "metrics.json").read_text(encoding="utf-8"))
        click.echo(render_distance_histogram(metrics))
        click.echo(render_symptom_table(metrics, "all" if scope == "all" else "positive_only"))
        click.echo(render_summary_table(metrics))
        click.echo(render_scope_comparison(metrics))
    except Exception as exc:  # noqa: BLE001
        _handle(exc)


# ---------------------------------------------------------------------------
# finetune
# ---------------------------------------------------------------------------


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--backend", "backend_mode", type=click.Choice(["live", "replay", "record"]))
def finetune(config_path: Path, out_dir: Path, backend_mode: str | None) -> None:
    """Build the training file, grid-search hyperparameters, print the winner."""
    try:
        app = load_app_config(config_path, backend_override=backend_mode)
        gateway = build_gateway(app.backend)
        bundle = load_corpus(app.corpus)
        split = split_dataset(bundle.transcripts, app.split)
        templates = TemplateLibrary.load_default()

        examples = [
            (e.segment_text, e.response_text)
            for e in build_exemplars(
                split.train, bundle.annotations, bundle.taxonomy, include_negatives=True
            )
        ]
        system_prompt = templates.get(app.finetune.system_template).system_text
        out_dir.mkdir(parents=True, exist_ok=True)
        training_path = out_dir / "training.jsonl"
        training_path.write_text(
            build_finetune_file(examples, system_prompt), encoding="utf-8"
        )
        click.echo(f"training file: {training_path} ({len(examples)} examples)")

        def evaluate(model_id: str) -> float:
            config = RunConfig(
                label="grid-validation",
                mode=Mode.FINE_TUNED,
                model_id=app.finetune.base_model,
                fine_tuned_model_id=model_id,
                temperature=0.0,
                trials=1,
            )
            scores = []
            for transcript in split.validation:
                prediction_sets = run_symptom_task(
                    transcript, config, app.settings, gateway, templates, bundle
                )
                scores.extend(
                    compute_symptom_scores(
                        prediction_sets,
                        transcript,
                        bundle.annotations.get(transcript.participant_id, ()),
                    )
                )
            aggregate = aggregate_multilabel(scores, Scope.ALL)
            return aggregate.f1.mean if aggregate.f1 else 0.0

        grid = FineTuneGrid(
            epochs=app.finetune.epochs,
            learning_rate_multipliers=app.finetune.learning_rate_multipliers,
        )
        result = run_finetune_grid(
            gateway,
            grid,
            base_model=app.finetune.base_model,
            training_file=training_path,
            evaluate_model=evaluate,
            poll_interval=0.1,
        )
        click.echo("grid cells:")
        for cell in result.cells:
            lr = "default" if cell.learning_rate_multiplier is None else cell.learning_rate_multiplier
            score = "-" if cell.score is None else f"{cell.score:.3f}"
            click.echo(
                f"  epochs={cell.epochs} lr={lr} status={cell.status} "
                f"val_f1={score} model={cell.model_id or '-'}"
            )
        best_lr = (
            "default"
            if result.best.learning_rate_multiplier is None
            else result.best.learning_rate_multiplier
        )
        click.echo(
            f"best: epochs={result.best.epochs} lr={best_lr} model={result.best.model_id}"
        )
        (out_dir / "grid_result.json").write_text(
            json.dumps(
                {
                    "schema": "finetune_grid/v1",
                    "cells": [
                        {
                            "epochs": c.epochs,
                            "learning_rate_multiplier": c.learning_rate_multiplier,
                            "model_id": c.model_id,
                            "score": c.score,
                            "status": c.status,
                            "error": c.error,
                        }
                        for c in result.cells
                    ],
                    "best_model_id": result.best.model_id,
                    "best": result.best_spec_fields,
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    except Exception as exc:  # noqa: BLE001
        _handle(exc)


# ---------------------------------------------------------------------------
# rag-index
# ---------------------------------------------------------------------------


@main.command("rag-index")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "index_path", required=True, type=click.Path(path_type=Path))
@click.option("--backend", "backend_mode", type=click.Choice(["live", "replay", "record"]))
def rag_index(config_path: Path, index_path: Path, backend_mode: str | None) -> None:
    """Chunk and embed the reference document into a persisted vector index."""
    try:
        app = load_app_config(config_path, backend_override=backend_mode)
        if app.rag.reference_doc is None:
            raise ConfigError("config has no rag.reference_doc")
        text = app.rag.reference_doc.read_text(encoding="utf-8")
        if not text.strip():
            raise ConfigError(f"{app.rag.reference_doc}: reference document is empty")
        gateway = build_gateway(app.backend)
        chunks = chunk_document(
            text,
            chunk_size=app.rag.chunk_size,
            overlap=app.rag.overlap,
            source_doc=app.rag.reference_doc.stem,
        )
        fingerprint = chunking_fingerprint(
            app.rag.chunk_size, app.rag.overlap, list_separators(), gateway.embed_model_id
        )
        index = build_index(chunks, gateway, fingerprint)
        index_path.parent.mkdir(parents=True, exist_ok=True)
        save_index(index, index_path)
        click.echo(
            f"indexed {len(index)} chunks (dim {index.dimension}) into {index_path}"
        )
    except Exception as exc:  # noqa: BLE001
        _handle(exc)


if __name__ == "__main__":
    main()
