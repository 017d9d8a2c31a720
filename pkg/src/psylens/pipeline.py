"""End-to-end orchestration: stressor extraction, symptom delineation, summaries.

Each experiment run owns a directory: config snapshot, parsed predictions
(with raw response text), stressor lists, summaries, and a metrics report.
Artifacts are keyed by a config hash, so an interrupted run resumes by
skipping every (config, participant) cell whose artifact already matches.
Replay-mode runs are fully deterministic byte for byte.
"""

from __future__ import annotations

import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .corpus import (
    CorpusBundle,
    DatasetSplit,
    Segment,
    SpanAnnotation,
    SummaryVariant,
    Transcript,
    annotations_for_segment,
    segment_by_chars,
    segment_utterance_pairs,
    taxonomy_sha256,
)
from .errors import BackendError, ConfigError
from .gateway import CompletionRequest, Gateway
from .metrics import (
    GEvalDimension,
    Scope,
    SegmentScore,
    aggregate_multilabel,
    bert_score,
    g_eval,
    npv,
    score_segment,
    summarize_trials,
)
from .promptkit import (
    Exemplar,
    SymptomPrediction,
    TemplateLibrary,
    build_exemplars,
    parse_stressor_response,
    parse_symptom_response,
    render_few_shot_prompt,
    render_stressor_prompt,
    render_summary_prompt,
    render_zero_shot_symptom_prompt,
    select_exemplars,
    summary_template_name,
)
from .rag import RetrievalResult, VectorIndex, augment_prompt, retrieve
from .spanalign import (
    DEFAULT_MATCH_THRESHOLD,
    DEFAULT_TOKENIZER,
    LocatedSpan,
    distance_histogram,
    locate_quoted_span,
    recall_mid_token_distance,
    tokenize,
)

logger = logging.getLogger(__name__)

DEGRADED_FAILURE_RATE = 0.10
PREDICTIONS_SCHEMA = "predictions/v1"
STRESSORS_SCHEMA = "stressors/v1"
SUMMARIES_SCHEMA = "summaries/v1"
METRICS_SCHEMA = "metrics_report/v1"


class Mode(str, Enum):
    ZERO_SHOT = "zero_shot"
    ZERO_SHOT_RAG = "zero_shot_rag"
    FEW_SHOT = "few_shot"
    FINE_TUNED = "fine_tuned"


@dataclass(frozen=True)
class RunConfig:
    """One experiment arm: an alignment mode plus its knobs."""

    label: str
    mode: Mode
    model_id: str
    temperature: float = 1.0
    trials: int = 3
    summary_variants: tuple[SummaryVariant, ...] = ()
    fine_tuned_model_id: str | None = None
    exemplar_count: int = 60
    run_stressors: bool = False

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError(f"{self.label}: trials must be >= 1, got {self.trials}")
        if self.mode is Mode.FINE_TUNED and not self.fine_tuned_model_id:
            raise ConfigError(f"{self.label}: fine_tuned mode requires fine_tuned_model_id")

    @property
    def effective_model_id(self) -> str:
        if self.mode is Mode.FINE_TUNED:
            assert self.fine_tuned_model_id is not None
            return self.fine_tuned_model_id
        return self.model_id

    @property
    def wants_stressors(self) -> bool:
        return self.run_stressors or bool(self.summary_variants)


@dataclass(frozen=True)
class ExperimentSettings:
    """Cross-run knobs shared by every config in an experiment."""

    stressor_chunk_chars: int = 6000
    match_threshold: float = DEFAULT_MATCH_THRESHOLD
    tokenizer: str = DEFAULT_TOKENIZER
    judge_model_id: str = "gpt-4-0314"
    geval_samples: int = 3
    geval_temperature: float = 1.0
    rag_top_k: int = 4
    rag_budget_chars: int = 4000
    segment_workers: int = 1


@dataclass
class RagRuntime:
    index: VectorIndex
    top_k: int
    budget_chars: int


@dataclass(frozen=True)
class SegmentPredictions:
    segment_id: str
    predictions: tuple[SymptomPrediction, ...]
    raw_response: str | None
    error: str | None = None


@dataclass(frozen=True)
class PredictionSet:
    """All parsed predictions for one transcript in one trial."""

    participant_id: str
    trial_index: int
    segments: tuple[SegmentPredictions, ...]
    provenance: Mapping[str, Any]
    failures: tuple[str, ...] = ()
    degraded: bool = False


@dataclass(frozen=True)
class StressorList:
    per_chunk: Mapping[str, tuple[str, ...]]
    merged: tuple[str, ...]


@dataclass(frozen=True)
class SummaryOutput:
    variant: SummaryVariant
    text: str
    word_count: int
    within_limit: bool
    trial_index: int


@dataclass(frozen=True)
class SummaryBundle:
    trial_index: int
    outputs: tuple[SummaryOutput, ...]
    skipped: tuple[tuple[str, str], ...] = ()  # (variant, reason)


# ---------------------------------------------------------------------------
# Task 1: stressor extraction
# ---------------------------------------------------------------------------


def _maybe_augment(
    request: CompletionRequest,
    query: str,
    config: RunConfig,
    settings: ExperimentSettings,
    gateway: Gateway,
    rag: RagRuntime | None,
) -> CompletionRequest:
    if config.mode is not Mode.ZERO_SHOT_RAG:
        return request
    if rag is None:
        raise ConfigError(f"{config.label}: zero_shot_rag mode requires a RAG index")
    result: RetrievalResult = retrieve(rag.index, query, rag.top_k, gateway)
    return augment_prompt(request, [m.chunk for m in result.matches], rag.budget_chars)


def run_stressor_task(
    transcript: Transcript,
    config: RunConfig,
    settings: ExperimentSettings,
    gateway: Gateway,
    templates: TemplateLibrary,
    rag: RagRuntime | None = None,
) -> StressorList:
    """Chunk the transcript, extract stressors per chunk, merge exact duplicates."""
    template = templates.get("stressor")
    chunks = segment_by_chars(transcript, settings.stressor_chunk_chars)
    per_chunk: dict[str, tuple[str, ...]] = {}
    merged: list[str] = []
    seen: set[str] = set()
    for chunk in chunks:
        request = render_stressor_prompt(
            chunk,
            template,
            model_id=config.effective_model_id,
            temperature=config.temperature,
            request_tag=f"stressor/{chunk.segment_id}",
        )
        request = _maybe_augment(request, chunk.text, config, settings, gateway, rag)
        try:
            result = gateway.complete(request)
        except BackendError as exc:
            raise BackendError(f"stressor extraction failed on {chunk.segment_id}: {exc}") from exc
        items = parse_stressor_response(result.text)
        per_chunk[chunk.segment_id] = tuple(items)
        for item in items:
            if item not in seen:
                seen.add(item)
                merged.append(item)
    return StressorList(per_chunk=per_chunk, merged=tuple(merged))


# ---------------------------------------------------------------------------
# Task 2: symptom delineation
# ---------------------------------------------------------------------------


def _symptom_request(
    segment: Segment,
    config: RunConfig,
    settings: ExperimentSettings,
    templates: TemplateLibrary,
    bundle: CorpusBundle,
    exemplars: Sequence[Exemplar] | None,
    trial: int,
) -> CompletionRequest:
    tag = f"symptom/{segment.segment_id}"
    if config.mode is Mode.FINE_TUNED:
        return render_zero_shot_symptom_prompt(
            segment,
            bundle.taxonomy,
            templates.get("finetune_symptom"),
            model_id=config.effective_model_id,
            temperature=config.temperature,
            request_tag=tag,
            trial_index=trial,
        )
    if config.mode is Mode.FEW_SHOT:
        assert exemplars is not None
        return render_few_shot_prompt(
            segment,
            bundle.taxonomy,
            exemplars,
            templates.get("zero_shot_symptom"),
            model_id=config.effective_model_id,
            temperature=config.temperature,
            request_tag=tag,
            trial_index=trial,
        )
    return render_zero_shot_symptom_prompt(
        segment,
        bundle.taxonomy,
        templates.get("zero_shot_symptom"),
        model_id=config.effective_model_id,
        temperature=config.temperature,
        request_tag=tag,
        trial_index=trial,
    )


def _symptom_template_name(config: RunConfig) -> str:
    return "finetune_symptom" if config.mode is Mode.FINE_TUNED else "zero_shot_symptom"


def run_symptom_task(
    transcript: Transcript,
    config: RunConfig,
    settings: ExperimentSettings,
    gateway: Gateway,
    templates: TemplateLibrary,
    bundle: CorpusBundle,
    exemplars: Sequence[Exemplar] | None = None,
    rag: RagRuntime | None = None,
) -> list[PredictionSet]:
    """One PredictionSet per trial over every utterance-pair segment.

    Per-segment backend failures are recorded and the run continues; a trial
    with more than 10% failed segments is marked degraded. Predictions whose
    quote cannot be located keep located=None and still count for symptom
    metrics.
    """
    if config.mode is Mode.FEW_SHOT and not exemplars:
        raise ConfigError(f"{config.label}: few_shot mode requires exemplars")
    template_name = _symptom_template_name(config)
    template = templates.get(template_name)
    segments = segment_utterance_pairs(transcript)
    provenance = {
        "model_id": config.effective_model_id,
        "mode": config.mode.value,
        "template": template_name,
        "template_sha256": template.sha256,
        "tokenizer": settings.tokenizer,
        "match_threshold": settings.match_threshold,
        "backend": gateway.backend_id,
        "exemplar_count": len(exemplars) if exemplars else 0,
    }
    def process_segment(segment: Segment, trial: int) -> SegmentPredictions:
        request = _symptom_request(
            segment, config, settings, templates, bundle, exemplars, trial
        )
        request = _maybe_augment(request, segment.text, config, settings, gateway, rag)
        try:
            result = gateway.complete(request)
        except BackendError as exc:
            logger.warning("segment %s trial %d failed: %s", segment.segment_id, trial, exc)
            return SegmentPredictions(
                segment_id=segment.segment_id,
                predictions=(),
                raw_response=None,
                error=str(exc),
            )
        parsed = parse_symptom_response(result.text, bundle.taxonomy)
        located_predictions = []
        for prediction in parsed:
            located = None
            if prediction.quoted_section:
                located = locate_quoted_span(
                    segment.text, prediction.quoted_section, settings.match_threshold
                )
            located_predictions.append(
                SymptomPrediction(
                    symptom_id=prediction.symptom_id,
                    quoted_section=prediction.quoted_section,
                    located=located,
                )
            )
        return SegmentPredictions(
            segment_id=segment.segment_id,
            predictions=tuple(located_predictions),
            raw_response=result.text,
        )

    prediction_sets = []
    for trial in range(config.trials):
        if settings.segment_workers > 1:
            # Fan out across segments; results are order-independent and get
            # sorted back into segment order below.
            with ThreadPoolExecutor(max_workers=settings.segment_workers) as pool:
                rows = list(pool.map(lambda s: process_segment(s, trial), segments))
        else:
            rows = [process_segment(segment, trial) for segment in segments]
        rows.sort(key=lambda row: row.segment_id)
        failures = [row.segment_id for row in rows if row.error is not None]
        degraded = len(failures) > DEGRADED_FAILURE_RATE * len(segments)
        prediction_sets.append(
            PredictionSet(
                participant_id=transcript.participant_id,
                trial_index=trial,
                segments=tuple(rows),
                provenance=provenance,
                failures=tuple(failures),
                degraded=degraded,
            )
        )
    return prediction_sets


# ---------------------------------------------------------------------------
# Task 3: summaries
# ---------------------------------------------------------------------------


def symptom_inputs_from_predictions(
    predictions: PredictionSet, bundle: CorpusBundle
) -> list[str]:
    """Deduplicated ``name: "quote"`` lines from one trial's predictions."""
    lines: list[str] = []
    seen: set[tuple[str, str]] = set()
    for row in predictions.segments:
        for prediction in row.predictions:
            name = (
                bundle.taxonomy.display_name(prediction.symptom_id)
                if prediction.recognized
                else prediction.symptom_id.split(":", 1)[1]
            )
            key = (name, prediction.quoted_section)
            if key in seen:
                continue
            seen.add(key)
            lines.append(f'{name}: "{prediction.quoted_section}"')
    return lines


def run_summary_task(
    participant_id: str,
    stressors: StressorList | None,
    predictions: PredictionSet | None,
    config: RunConfig,
    settings: ExperimentSettings,
    gateway: Gateway,
    templates: TemplateLibrary,
    bundle: CorpusBundle,
    trial_index: int = 0,
    rag: RagRuntime | None = None,
) -> SummaryBundle:
    """Generate each requested summary variant for one trial.

    A variant whose inputs are missing is skipped with a diagnostic rather
    than failing the run. Empty-but-present input lists still generate.
    """
    outputs: list[SummaryOutput] = []
    skipped: list[tuple[str, str]] = []
    symptom_lines = (
        symptom_inputs_from_predictions(predictions, bundle) if predictions is not None else None
    )
    for variant in config.summary_variants:
        needs_stressors = variant in (SummaryVariant.EXPERIENCE, SummaryVariant.COMBINED)
        needs_symptoms = variant in (SummaryVariant.SYMPTOM, SummaryVariant.COMBINED)
        if needs_stressors and stressors is None:
            skipped.append((variant.value, "no stressor extraction available"))
            logger.warning("%s: skipping %s summary: no stressors", participant_id, variant.value)
            continue
        if needs_symptoms and symptom_lines is None:
            skipped.append((variant.value, "no symptom predictions available"))
            logger.warning("%s: skipping %s summary: no predictions", participant_id, variant.value)
            continue
        stressor_inputs = list(stressors.merged) if needs_stressors and stressors else []
        symptom_inputs = list(symptom_lines) if needs_symptoms and symptom_lines else []
        request = render_summary_prompt(
            stressor_inputs,
            symptom_inputs,
            variant,
            variant.word_cap,
            templates.get(summary_template_name(variant)),
            model_id=config.effective_model_id,
            temperature=config.temperature,
            request_tag=f"summary/{participant_id}/{variant.value}",
            trial_index=trial_index,
        )
        query = "\n".join(stressor_inputs + symptom_inputs) or participant_id
        request = _maybe_augment(request, query, config, settings, gateway, rag)
        result = gateway.complete(request)
        word_count = len(result.text.split())
        within = word_count <= variant.word_cap
        if not within:
            logger.warning(
                "%s %s summary is %d words, over the %d cap",
                participant_id, variant.value, word_count, variant.word_cap,
            )
        outputs.append(
            SummaryOutput(
                variant=variant,
                text=result.text,
                word_count=word_count,
                within_limit=within,
                trial_index=trial_index,
            )
        )
    return SummaryBundle(trial_index=trial_index, outputs=tuple(outputs), skipped=tuple(skipped))


# ---------------------------------------------------------------------------
# Metric assembly for one config over the test split
# ---------------------------------------------------------------------------


def _truth_sets(
    transcript: Transcript, annotations: Sequence[SpanAnnotation]
) -> dict[str, set[str]]:
    return {
        segment.segment_id: {a.symptom_id for a in annotations_for_segment(segment, annotations)}
        for segment in segment_utterance_pairs(transcript)
    }


def _segment_by_id(transcript: Transcript) -> dict[str, Segment]:
    return {s.segment_id: s for s in segment_utterance_pairs(transcript)}


@dataclass
class SectionTrialStats:
    distances: list[float] = field(default_factory=list)
    absent: int = 0
    positives: int = 0


def compute_symptom_scores(
    prediction_sets: Sequence[PredictionSet],
    transcript: Transcript,
    annotations: Sequence[SpanAnnotation],
) -> list[SegmentScore]:
    truth = _truth_sets(transcript, annotations)
    scores = []
    for pset in prediction_sets:
        for row in pset.segments:
            predicted = {p.symptom_id for p in row.predictions}
            scores.append(
                score_segment(
                    row.segment_id, truth[row.segment_id], predicted, trial=pset.trial_index
                )
            )
    return scores


def compute_presence_pairs(
    prediction_sets: Sequence[PredictionSet],
    transcript: Transcript,
    annotations: Sequence[SpanAnnotation],
) -> dict[int, list[tuple[bool, bool]]]:
    truth = _truth_sets(transcript, annotations)
    pairs: dict[int, list[tuple[bool, bool]]] = {}
    for pset in prediction_sets:
        rows = pairs.setdefault(pset.trial_index, [])
        for row in pset.segments:
            rows.append((bool(truth[row.segment_id]), bool(row.predictions)))
    return pairs


def compute_section_distances(
    prediction_sets: Sequence[PredictionSet],
    transcript: Transcript,
    annotations: Sequence[SpanAnnotation],
    tokenizer: str = DEFAULT_TOKENIZER,
) -> dict[int, SectionTrialStats]:
    """Per-trial recall mid-token distances over positive segments.

    Infinite distances (no estimated section) are excluded from the mean and
    counted toward the absence ratio instead.
    """
    segments = _segment_by_id(transcript)
    stats: dict[int, SectionTrialStats] = {}
    for pset in prediction_sets:
        trial_stats = stats.setdefault(pset.trial_index, SectionTrialStats())
        for row in pset.segments:
            segment = segments[row.segment_id]
            here = annotations_for_segment(segment, annotations)
            if not here:
                continue
            trial_stats.positives += 1
            tokens = tokenize(segment.text, tokenizer)
            truth_spans = []
            for ann in here:
                start, end = segment.local_range(ann)
                truth_spans.append(LocatedSpan(start, end))
            est_spans = [p.located for p in row.predictions if p.located is not None]
            result = recall_mid_token_distance(tokens, truth_spans, est_spans)
            if result.d == float("inf"):
                trial_stats.absent += 1
            else:
                trial_stats.distances.append(result.d)
    return stats


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    run_dir: Path
    metrics_doc: dict[str, Any]
    degraded: bool


def _aggregate_doc(scores: Sequence[SegmentScore], scope: Scope) -> dict[str, Any]:
    agg = aggregate_multilabel(scores, scope)
    return {
        "n_trials": agg.n_trials,
        "accuracy": agg.accuracy.to_doc() if agg.accuracy else None,
        "precision": agg.precision.to_doc() if agg.precision else None,
        "recall": agg.recall.to_doc() if agg.recall else None,
        "f1": agg.f1.to_doc() if agg.f1 else None,
    }


class ExperimentRunner:
    """Runs a list of configs over the test split and assembles the metrics doc."""

    def __init__(
        self,
        bundle: CorpusBundle,
        split: DatasetSplit,
        settings: ExperimentSettings,
        gateway: Gateway,
        templates: TemplateLibrary,
        run_dir: str | Path,
        config_hash: str,
        judge_gateway: Gateway | None = None,
        rag: RagRuntime | None = None,
    ) -> None:
        self.bundle = bundle
        self.split = split
        self.settings = settings
        self.gateway = gateway
        self.judge_gateway = judge_gateway or gateway
        self.templates = templates
        self.run_dir = Path(run_dir)
        self.config_hash = config_hash
        self.rag = rag

    # -- resumable artifact helpers --

    def _artifact_path(self, kind: str, label: str, participant_id: str) -> Path:
        return self.run_dir / kind / label / f"{participant_id}.json"

    def _load_artifact(self, path: Path, schema: str) -> dict[str, Any] | None:
        if not path.exists():
            return None
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return None
        if doc.get("schema") != schema or doc.get("config_hash") != self.config_hash:
            return None
        return doc

    def _write_artifact(self, path: Path, doc: dict[str, Any]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")

    # -- per-task persistence --

    def _predictions_for(
        self, config: RunConfig, transcript: Transcript, exemplars: Sequence[Exemplar] | None
    ) -> list[PredictionSet]:
        path = self._artifact_path("predictions", config.label, transcript.participant_id)
        doc = self._load_artifact(path, PREDICTIONS_SCHEMA)
        if doc is not None:
            return _prediction_sets_from_doc(doc)
        prediction_sets = run_symptom_task(
            transcript,
            config,
            self.settings,
            self.gateway,
            self.templates,
            self.bundle,
            exemplars=exemplars,
            rag=self.rag,
        )
        self._write_artifact(path, _prediction_sets_to_doc(prediction_sets, self.config_hash))
        return prediction_sets

    def _stressors_for(self, config: RunConfig, transcript: Transcript) -> StressorList:
        path = self._artifact_path("stressors", config.label, transcript.participant_id)
        doc = self._load_artifact(path, STRESSORS_SCHEMA)
        if doc is not None:
            return StressorList(
                per_chunk={k: tuple(v) for k, v in doc["per_chunk"].items()},
                merged=tuple(doc["merged"]),
            )
        stressors = run_stressor_task(
            transcript, config, self.settings, self.gateway, self.templates, rag=self.rag
        )
        self._write_artifact(
            path,
            {
                "schema": STRESSORS_SCHEMA,
                "config_hash": self.config_hash,
                "participant_id": transcript.participant_id,
                "per_chunk": {k: list(v) for k, v in stressors.per_chunk.items()},
                "merged": list(stressors.merged),
            },
        )
        return stressors

    def _summaries_for(
        self,
        config: RunConfig,
        transcript: Transcript,
        stressors: StressorList | None,
        trial0: PredictionSet | None,
    ) -> list[SummaryBundle]:
        path = self._artifact_path("summaries", config.label, transcript.participant_id)
        doc = self._load_artifact(path, SUMMARIES_SCHEMA)
        if doc is not None:
            return _summary_bundles_from_doc(doc)
        bundles = [
            run_summary_task(
                transcript.participant_id,
                stressors,
                trial0,
                config,
                self.settings,
                self.gateway,
                self.templates,
                self.bundle,
                trial_index=trial,
                rag=self.rag,
            )
            for trial in range(config.trials)
        ]
        self._write_artifact(path, _summary_bundles_to_doc(bundles, self.config_hash, transcript))
        return bundles

    # -- summary scoring --

    def _score_summaries(
        self, config: RunConfig, per_pid_bundles: dict[str, list[SummaryBundle]]
    ) -> dict[str, Any]:
        geval_templates = {
            dim: self.templates.get(f"geval_{dim.value}") for dim in GEvalDimension
        }
        out: dict[str, Any] = {}
        for variant in config.summary_variants:
            per_trial_bert: dict[int, list[float]] = {}
            per_trial_dims: dict[int, dict[str, list[float]]] = {}
            per_trial_overall: dict[int, list[float]] = {}
            dropped_total = 0
            for pid, bundles in per_pid_bundles.items():
                reference = self.bundle.summary_references.get((pid, variant))
                if reference is None:
                    logger.warning("%s: no %s reference summary; skipping scoring", pid, variant.value)
                    continue
                for bundle in bundles:
                    output = next(
                        (o for o in bundle.outputs if o.variant is variant), None
                    )
                    if output is None:
                        continue
                    trial = bundle.trial_index
                    bert = bert_score(
                        output.text,
                        reference.text,
                        self.gateway.embed,
                        tokenizer=self.settings.tokenizer,
                    )
                    per_trial_bert.setdefault(trial, []).append(bert.f1)
                    dim_scores = {}
                    for dim, template in geval_templates.items():
                        result = g_eval(
                            output.text,
                            reference.text,
                            dim,
                            self.judge_gateway,
                            template,
                            model_id=self.settings.judge_model_id,
                            n_samples=self.settings.geval_samples,
                            temperature=self.settings.geval_temperature,
                            request_tag=f"geval/{pid}/{variant.value}/{dim.value}/t{trial}",
                        )
                        dim_scores[dim.value] = result.score
                        dropped_total += result.dropped
                    trial_dims = per_trial_dims.setdefault(
                        trial, {d.value: [] for d in GEvalDimension}
                    )
                    for name, value in dim_scores.items():
                        trial_dims[name].append(value)
                    per_trial_overall.setdefault(trial, []).append(
                        statistics.fmean(dim_scores.values())
                    )
            if not per_trial_bert:
                continue
            geval_doc: dict[str, Any] = {}
            dim_means: list[float] = []
            for dim in GEvalDimension:
                trial_means = [
                    statistics.fmean(per_trial_dims[t][dim.value])
                    for t in sorted(per_trial_dims)
                    if per_trial_dims[t][dim.value]
                ]
                summary = summarize_trials(trial_means)
                geval_doc[dim.value] = summary.to_doc() if summary else None
                if summary:
                    dim_means.append(summary.mean)
            overall_trials = [
                statistics.fmean(per_trial_overall[t]) for t in sorted(per_trial_overall)
            ]
            overall = summarize_trials(overall_trials)
            geval_doc["overall"] = overall.to_doc() if overall else None
            geval_doc["overall_from_dimension_means"] = (
                statistics.fmean(dim_means) if len(dim_means) == len(GEvalDimension) else None
            )
            geval_doc["dropped_samples"] = dropped_total
            bert_trials = [
                statistics.fmean(per_trial_bert[t]) for t in sorted(per_trial_bert)
            ]
            bert_summary = summarize_trials(bert_trials)
            out[variant.value] = {
                "geval": geval_doc,
                "bertscore_f1": bert_summary.to_doc() if bert_summary else None,
            }
        return out

    # -- main entry --

    def run(self, configs: Sequence[RunConfig]) -> ExperimentResult:
        exemplar_pool = build_exemplars(
            self.split.train,
            self.bundle.annotations,
            self.bundle.taxonomy,
        )
        configs_doc: dict[str, Any] = {}
        any_degraded = False
        for config in configs:
            exemplars = None
            if config.mode is Mode.FEW_SHOT:
                k = min(config.exemplar_count, len(exemplar_pool))
                if k < config.exemplar_count:
                    logger.info(
                        "%s: capping exemplar count at %d available triplets",
                        config.label, k,
                    )
                exemplars = select_exemplars(exemplar_pool, k)

            all_scores: list[SegmentScore] = []
            presence: dict[int, list[tuple[bool, bool]]] = {}
            section_stats: dict[int, SectionTrialStats] = {}
            per_pid_bundles: dict[str, list[SummaryBundle]] = {}
            degraded = False

            for transcript in self.split.test:
                pid = transcript.participant_id
                annotations = self.bundle.annotations.get(pid, ())
                prediction_sets = self._predictions_for(config, transcript, exemplars)
                degraded = degraded or any(p.degraded for p in prediction_sets)
                all_scores.extend(
                    compute_symptom_scores(prediction_sets, transcript, annotations)
                )
                for trial, pairs in compute_presence_pairs(
                    prediction_sets, transcript, annotations
                ).items():
                    presence.setdefault(trial, []).extend(pairs)
                for trial, stats in compute_section_distances(
                    prediction_sets, transcript, annotations, self.settings.tokenizer
                ).items():
                    merged = section_stats.setdefault(trial, SectionTrialStats())
                    merged.distances.extend(stats.distances)
                    merged.absent += stats.absent
                    merged.positives += stats.positives

                stressors = (
                    self._stressors_for(config, transcript) if config.wants_stressors else None
                )
                if config.summary_variants:
                    trial0 = next(
                        (p for p in prediction_sets if p.trial_index == 0), None
                    )
                    per_pid_bundles[pid] = self._summaries_for(
                        config, transcript, stressors, trial0
                    )

            npv_trials = []
            for trial in sorted(presence):
                value = npv(presence[trial])
                if value is not None:
                    npv_trials.append(value)
            npv_summary = summarize_trials(npv_trials)

            trial0_distances = []
            if 0 in section_stats:
                trial0_distances = list(section_stats[0].distances) + [float("inf")] * section_stats[0].absent
            histogram = distance_histogram(trial0_distances) if trial0_distances else None

            mean_d_trials = [
                statistics.fmean(stats.distances)
                for _, stats in sorted(section_stats.items())
                if stats.distances
            ]
            absence_trials = [
                stats.absent / stats.positives
                for _, stats in sorted(section_stats.items())
                if stats.positives
            ]
            mean_d = summarize_trials(mean_d_trials)
            absence = summarize_trials(absence_trials)

            configs_doc[config.label] = {
                "mode": config.mode.value,
                "model_id": config.effective_model_id,
                "trials": config.trials,
                "degraded": degraded,
                "symptoms": {
                    "all": _aggregate_doc(all_scores, Scope.ALL),
                    "positive_only": _aggregate_doc(all_scores, Scope.POSITIVE_ONLY),
                    "npv": npv_summary.to_doc() if npv_summary else None,
                },
                "sections": {
                    "histogram": None
                    if histogram is None
                    else {
                        "bins": [[lo, hi] for lo, hi in histogram.bins],
                        "counts": list(histogram.counts),
                        "total": histogram.total,
                        "under_20": histogram.under_20,
                    },
                    "mean_d": mean_d.to_doc() if mean_d else None,
                    "absence_ratio": absence.to_doc() if absence else None,
                },
                "summaries": self._score_summaries(config, per_pid_bundles)
                if config.summary_variants
                else {},
            }
            any_degraded = any_degraded or degraded

        # Replay runs pin the timestamp so report directories stay diffable.
        if self.gateway.mode == "replay":
            timestamp = "1970-01-01T00:00:00Z"
        else:
            timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        metrics_doc = {
            "schema": METRICS_SCHEMA,
            "provenance": {
                "tool_version": __version__,
                "config_hash": self.config_hash,
                "taxonomy_sha256": taxonomy_sha256(self.bundle.taxonomy),
                "taxonomy_size": len(self.bundle.taxonomy),
                "tokenizer": self.settings.tokenizer,
                "backend": self.gateway.backend_id,
                "template_sha256": self.templates.hashes(),
                "timestamp": timestamp,
            },
            "test_participants": [t.participant_id for t in self.split.test],
            "configs": configs_doc,
        }
        reports_dir = self.run_dir / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        (reports_dir / "metrics.json").write_text(
            json.dumps(metrics_doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        return ExperimentResult(run_dir=self.run_dir, metrics_doc=metrics_doc, degraded=any_degraded)


def run_experiment(
    bundle: CorpusBundle,
    split: DatasetSplit,
    configs: Sequence[RunConfig],
    settings: ExperimentSettings,
    gateway: Gateway,
    templates: TemplateLibrary,
    run_dir: str | Path,
    config_hash: str,
    judge_gateway: Gateway | None = None,
    rag: RagRuntime | None = None,
) -> ExperimentResult:
    runner = ExperimentRunner(
        bundle, split, settings, gateway, templates, run_dir, config_hash,
        judge_gateway=judge_gateway, rag=rag,
    )
    return runner.run(configs)


# ---------------------------------------------------------------------------
# Artifact (de)serialization
# ---------------------------------------------------------------------------


def _located_to_doc(located: LocatedSpan | None) -> dict[str, Any] | None:
    if located is None:
        return None
    return {
        "start_char": located.start_char,
        "end_char": located.end_char,
        "match_quality": located.match_quality,
        "exact": located.exact,
    }


def _located_from_doc(doc: dict[str, Any] | None) -> LocatedSpan | None:
    if doc is None:
        return None
    return LocatedSpan(
        start_char=doc["start_char"],
        end_char=doc["end_char"],
        match_quality=doc["match_quality"],
        exact=doc["exact"],
    )


def _prediction_sets_to_doc(
    prediction_sets: Sequence[PredictionSet], config_hash: str
) -> dict[str, Any]:
    return {
        "schema": PREDICTIONS_SCHEMA,
        "config_hash": config_hash,
        "participant_id": prediction_sets[0].participant_id if prediction_sets else None,
        "provenance": dict(prediction_sets[0].provenance) if prediction_sets else {},
        "trials": [
            {
                "trial_index": pset.trial_index,
                "degraded": pset.degraded,
                "failures": list(pset.failures),
                "segments": [
                    {
                        "segment_id": row.segment_id,
                        "raw_response": row.raw_response,
                        "error": row.error,
                        "predictions": [
                            {
                                "symptom_id": p.symptom_id,
                                "quoted_section": p.quoted_section,
                                "located": _located_to_doc(p.located),
                            }
                            for p in row.predictions
                        ],
                    }
                    for row in pset.segments
                ],
            }
            for pset in prediction_sets
        ],
    }


def _prediction_sets_from_doc(doc: dict[str, Any]) -> list[PredictionSet]:
    out = []
    for trial_doc in doc["trials"]:
        segments = tuple(
            SegmentPredictions(
                segment_id=row["segment_id"],
                raw_response=row.get("raw_response"),
                error=row.get("error"),
                predictions=tuple(
                    SymptomPrediction(
                        symptom_id=p["symptom_id"],
                        quoted_section=p["quoted_section"],
                        located=_located_from_doc(p.get("located")),
                    )
                    for p in row["predictions"]
                ),
            )
            for row in trial_doc["segments"]
        )
        out.append(
            PredictionSet(
                participant_id=doc["participant_id"],
                trial_index=trial_doc["trial_index"],
                segments=segments,
                provenance=doc.get("provenance", {}),
                failures=tuple(trial_doc.get("failures", ())),
                degraded=trial_doc.get("degraded", False),
            )
        )
    return out


def _summary_bundles_to_doc(
    bundles: Sequence[SummaryBundle], config_hash: str, transcript: Transcript
) -> dict[str, Any]:
    return {
        "schema": SUMMARIES_SCHEMA,
        "config_hash": config_hash,
        "participant_id": transcript.participant_id,
        "trials": [
            {
                "trial_index": bundle.trial_index,
                "skipped": [list(item) for item in bundle.skipped],
                "outputs": [
                    {
                        "variant": o.variant.value,
                        "text": o.text,
                        "word_count": o.word_count,
                        "within_limit": o.within_limit,
                    }
                    for o in bundle.outputs
                ],
            }
            for bundle in bundles
        ],
    }


def _summary_bundles_from_doc(doc: dict[str, Any]) -> list[SummaryBundle]:
    bundles = []
    for trial_doc in doc["trials"]:
        outputs = tuple(
            SummaryOutput(
                variant=SummaryVariant(o["variant"]),
                text=o["text"],
                word_count=o["word_count"],
                within_limit=o["within_limit"],
                trial_index=trial_doc["trial_index"],
            )
            for o in trial_doc["outputs"]
        )
        bundles.append(
            SummaryBundle(
                trial_index=trial_doc["trial_index"],
                outputs=outputs,
                skipped=tuple(tuple(item) for item in trial_doc.get("skipped", ())),
            )
        )
    return bundles
