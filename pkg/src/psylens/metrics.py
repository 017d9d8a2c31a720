"""Evaluation metrics: example-based multilabel scores, NPV, BERTScore, G-Eval.

Multilabel scores are example-based (computed per segment from the truth and
predicted label sets, then averaged), not label-pivoted micro/macro scores.
The empty-vs-empty convention is a perfect score: a segment with no true
labels and no predicted labels counts as (1, 1, 1, 1).
"""

from __future__ import annotations

import logging
import re
import statistics
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, AbstractSet, Callable, Iterable, Sequence

import numpy as np

from .errors import JudgeError
from .spanalign import DEFAULT_TOKENIZER, tokenize

if TYPE_CHECKING:
    from .gateway import Gateway
    from .promptkit import PromptTemplate

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Example-based multilabel metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelSetScores:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.accuracy, self.precision, self.recall, self.f1)


@dataclass(frozen=True)
class SegmentScore:
    segment_id: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    positive: bool
    trial: int = 0


def example_based_metrics(truth: AbstractSet[str], predicted: AbstractSet[str]) -> LabelSetScores:
    """Set-overlap accuracy, precision, recall, F1 for one segment.

    With truth Y and prediction Z: accuracy = |Y∩Z|/|Y∪Z|, precision =
    |Y∩Z|/|Z|, recall = |Y∩Z|/|Y|, f1 = 2|Y∩Z|/(|Y|+|Z|). Both sets empty
    scores (1, 1, 1, 1); exactly one empty scores (0, 0, 0, 0).
    """
    truth = set(truth)
    predicted = set(predicted)
    if not truth and not predicted:
        return LabelSetScores(1.0, 1.0, 1.0, 1.0)
    inter = len(truth & predicted)
    union = len(truth | predicted)
    accuracy = inter / union
    precision = inter / len(predicted) if predicted else 0.0
    recall = inter / len(truth) if truth else 0.0
    f1 = 2 * inter / (len(truth) + len(predicted))
    return LabelSetScores(accuracy, precision, recall, f1)


def score_segment(
    segment_id: str,
    truth: AbstractSet[str],
    predicted: AbstractSet[str],
    trial: int = 0,
) -> SegmentScore:
    s = example_based_metrics(truth, predicted)
    return SegmentScore(
        segment_id=segment_id,
        accuracy=s.accuracy,
        precision=s.precision,
        recall=s.recall,
        f1=s.f1,
        positive=bool(truth),
        trial=trial,
    )


class Scope(str, Enum):
    ALL = "all"
    POSITIVE_ONLY = "positive_only"


@dataclass(frozen=True)
class MetricSummary:
    """Mean across trials; SD is sample SD, absent for a single trial."""

    mean: float
    sd: float | None

    def to_doc(self) -> dict[str, float | None]:
        return {"mean": self.mean, "sd": self.sd}


def summarize_trials(values: Sequence[float]) -> MetricSummary | None:
    if not values:
        return None
    sd = statistics.stdev(values) if len(values) > 1 else None
    return MetricSummary(mean=statistics.fmean(values), sd=sd)


@dataclass(frozen=True)
class MultilabelAggregate:
    scope: Scope
    n_trials: int
    accuracy: MetricSummary | None
    precision: MetricSummary | None
    recall: MetricSummary | None
    f1: MetricSummary | None


def aggregate_multilabel(scores: Iterable[SegmentScore], scope: Scope) -> MultilabelAggregate:
    """Mean each metric within a trial over in-scope segments, then across trials.

    Trials whose in-scope set is empty contribute nothing; with no usable
    trial at all the metric summaries are absent (None).
    """
    by_trial: dict[int, list[SegmentScore]] = {}
    for score in scores:
        by_trial.setdefault(score.trial, []).append(score)

    trial_means: dict[str, list[float]] = {"accuracy": [], "precision": [], "recall": [], "f1": []}
    usable_trials = 0
    for trial in sorted(by_trial):
        in_scope = [
            s for s in by_trial[trial] if scope is Scope.ALL or s.positive
        ]
        if not in_scope:
            continue
        usable_trials += 1
        for name in trial_means:
            trial_means[name].append(statistics.fmean(getattr(s, name) for s in in_scope))

    return MultilabelAggregate(
        scope=scope,
        n_trials=usable_trials,
        accuracy=summarize_trials(trial_means["accuracy"]),
        precision=summarize_trials(trial_means["precision"]),
        recall=summarize_trials(trial_means["recall"]),
        f1=summarize_trials(trial_means["f1"]),
    )


# ---------------------------------------------------------------------------
# Presence-level confusion counts and NPV
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PresenceCounts:
    """Segment-level confusion counts; positive means >= 1 label/prediction."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def presence_counts(per_segment: Iterable[tuple[bool, bool]]) -> PresenceCounts:
    tp = fp = tn = fn = 0
    for truth_positive, predicted_positive in per_segment:
        if predicted_positive:
            if truth_positive:
                tp += 1
            else:
                fp += 1
        else:
            if truth_positive:
                fn += 1
            else:
                tn += 1
    return PresenceCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def npv(per_segment: Iterable[tuple[bool, bool]]) -> float | None:
    """Negative predictive value at segment level; None with no predicted negatives."""
    counts = presence_counts(per_segment)
    denominator = counts.tn + counts.fn
    if denominator == 0:
        return None
    return counts.tn / denominator


# ---------------------------------------------------------------------------
# BERTScore
# ---------------------------------------------------------------------------

TokenEmbedder = Callable[[Sequence[str]], Sequence[Sequence[float]]]


@dataclass(frozen=True)
class BertScoreResult:
    precision: float
    recall: float
    f1: float


def _normalized_rows(vectors: Sequence[Sequence[float]], side: str) -> np.ndarray:
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"{side} embedder must return one vector per token")
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError(f"{side} embedder returned a zero vector")
    return matrix / norms


def bert_score(
    candidate: str,
    reference: str,
    token_embedder: TokenEmbedder,
    tokenizer: str = DEFAULT_TOKENIZER,
) -> BertScoreResult:
    """Greedy token-matching similarity without IDF weighting or rescaling.

    Recall is the mean over reference tokens of the max cosine similarity to
    any candidate token; precision is symmetric; f1 is their harmonic mean.
    """
    cand_tokens = [t.text for t in tokenize(candidate, tokenizer)]
    ref_tokens = [t.text for t in tokenize(reference, tokenizer)]
    if not cand_tokens or not ref_tokens:
        raise ValueError("both candidate and reference must tokenize to at least one token")
    cand = _normalized_rows(token_embedder(cand_tokens), "candidate")
    ref = _normalized_rows(token_embedder(ref_tokens), "reference")
    similarity = cand @ ref.T
    precision = float(similarity.max(axis=1).mean())
    recall = float(similarity.max(axis=0).mean())
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return BertScoreResult(precision=precision, recall=recall, f1=f1)


# ---------------------------------------------------------------------------
# G-Eval judge harness
# ---------------------------------------------------------------------------


class GEvalDimension(str, Enum):
    COHERENCE = "coherence"
    CONSISTENCY = "consistency"
    FLUENCY = "fluency"
    RELEVANCE = "relevance"

    @property
    def score_range(self) -> tuple[int, int]:
        return (1, 3) if self is GEvalDimension.FLUENCY else (1, 5)


@dataclass(frozen=True)
class GEvalScore:
    coherence: float
    consistency: float
    fluency: float
    relevance: float

    def __post_init__(self) -> None:
        for dim in GEvalDimension:
            lo, hi = dim.score_range
            value = getattr(self, dim.value)
            if not lo <= value <= hi:
                raise ValueError(f"{dim.value} score {value} outside [{lo}, {hi}]")

    @property
    def overall(self) -> float:
        return (self.coherence + self.consistency + self.fluency + self.relevance) / 4


@dataclass(frozen=True)
class GEvalDimensionResult:
    dimension: GEvalDimension
    score: float
    samples: tuple[int, ...]
    dropped: int


_INT_RE = re.compile(r"-?\d+")


def _parse_judge_score(text: str, dimension: GEvalDimension) -> int | None:
    match = _INT_RE.search(text)
    if match is None:
        return None
    value = int(match.group())
    lo, hi = dimension.score_range
    if not lo <= value <= hi:
        return None
    return value


def g_eval(
    summary: str,
    reference: str,
    dimension: GEvalDimension,
    judge: "Gateway",
    template: "PromptTemplate",
    *,
    model_id: str,
    n_samples: int = 3,
    temperature: float = 1.0,
    request_tag: str = "",
) -> GEvalDimensionResult:
    """Sample the judge ``n_samples`` times and average the in-range scores.

    Each sample gets its own trial index so recorded runs replay all samples.
    Out-of-range or unparseable samples are dropped and counted; if nothing
    parses, raises JudgeError.
    """
    from .gateway import CompletionRequest, Message

    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    system_text, user_text = template.render({"summary": summary, "reference": reference})
    kept: list[int] = []
    dropped = 0
    for sample in range(n_samples):
        request = CompletionRequest(
            model_id=model_id,
            messages=(Message("system", system_text), Message("user", user_text)),
            temperature=temperature,
            request_tag=request_tag or f"geval/{dimension.value}",
            trial_index=sample,
        )
        text = judge.complete(request).text
        value = _parse_judge_score(text, dimension)
        if value is None:
            dropped += 1
            logger.warning(
                "g_eval %s sample %d unusable (out of range or unparseable): %r",
                dimension.value, sample, text[:80],
            )
        else:
            kept.append(value)
    if not kept:
        raise JudgeError(f"all {n_samples} judge samples for {dimension.value} were unusable")
    return GEvalDimensionResult(
        dimension=dimension,
        score=statistics.fmean(kept),
        samples=tuple(kept),
        dropped=dropped,
    )
