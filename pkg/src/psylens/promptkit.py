"""Prompt construction for every alignment mode, and response parsing.

Templates are plain text files with ``$name`` placeholders and two sections
introduced by ``[system]`` and ``[user]`` marker lines. The bundled templates
are editable starting points, not reconstructions of any particular study's
prompts; swap in your own directory via TemplateLibrary.load_dir.

The canonical model answer format is one ``symptom name: "verbatim quote"``
line per finding, with the bare sentinel ``NONE`` for clean segments.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from string import Template
from typing import Iterable, Mapping, Sequence

from .corpus import (
    Segment,
    SegmentKind,
    SpanAnnotation,
    SummaryVariant,
    SymptomTaxonomy,
    Transcript,
    annotations_for_segment,
    segment_utterance_pairs,
)
from .errors import TemplateError
from .gateway import CompletionRequest, Message
from .spanalign import LocatedSpan

logger = logging.getLogger(__name__)

NONE_SENTINEL = "NONE"
UNRECOGNIZED_PREFIX = "unrecognized:"
DEFAULT_EXEMPLAR_COUNT = 60


class ResponseSchema(str, Enum):
    SYMPTOM_LIST = "symptom_list"
    STRESSOR_LIST = "stressor_list"
    SUMMARY_TEXT = "summary_text"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system_text: str
    user_text: str
    expected_response_schema: ResponseSchema

    @cached_property
    def sha256(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.system_text.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(self.user_text.encode("utf-8"))
        return digest.hexdigest()

    def render(self, mapping: Mapping[str, str]) -> tuple[str, str]:
        """Substitute placeholders; unresolved names raise TemplateError."""
        try:
            system = Template(self.system_text).substitute(mapping)
            user = Template(self.user_text).substitute(mapping)
        except (KeyError, ValueError) as exc:
            raise TemplateError(f"template {self.name!r}: unresolved placeholder {exc}") from exc
        return system, user


_SECTION_RE = re.compile(r"^\[(system|user)\]\s*$", re.MULTILINE)


def parse_template_file(name: str, content: str, schema: ResponseSchema) -> PromptTemplate:
    sections: dict[str, str] = {}
    matches = list(_SECTION_RE.finditer(content))
    if not matches:
        raise TemplateError(f"template {name!r}: no [system]/[user] section markers")
    for i, match in enumerate(matches):
        start = match.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(content)
        sections[match.group(1)] = content[start:end].strip("\n")
    if "system" not in sections or "user" not in sections:
        raise TemplateError(f"template {name!r}: needs both [system] and [user] sections")
    return PromptTemplate(
        name=name,
        system_text=sections["system"],
        user_text=sections["user"],
        expected_response_schema=schema,
    )


_TEMPLATE_SCHEMAS: dict[str, ResponseSchema] = {
    "zero_shot_symptom": ResponseSchema.SYMPTOM_LIST,
    "finetune_symptom": ResponseSchema.SYMPTOM_LIST,
    "stressor": ResponseSchema.STRESSOR_LIST,
    "summary_experience": ResponseSchema.SUMMARY_TEXT,
    "summary_symptom": ResponseSchema.SUMMARY_TEXT,
    "summary_combined": ResponseSchema.SUMMARY_TEXT,
    "geval_coherence": ResponseSchema.SUMMARY_TEXT,
    "geval_consistency": ResponseSchema.SUMMARY_TEXT,
    "geval_fluency": ResponseSchema.SUMMARY_TEXT,
    "geval_relevance": ResponseSchema.SUMMARY_TEXT,
}


class TemplateLibrary:
    """Named prompt templates, loaded from package data or a user directory."""

    def __init__(self, templates: Mapping[str, PromptTemplate]) -> None:
        self._templates = dict(templates)

    def get(self, name: str) -> PromptTemplate:
        try:
            return self._templates[name]
        except KeyError:
            raise TemplateError(f"no template named {name!r}") from None

    def hashes(self) -> dict[str, str]:
        return {name: t.sha256 for name, t in sorted(self._templates.items())}

    @classmethod
    def load_default(cls) -> "TemplateLibrary":
        templates = {}
        root = resources.files("psylens").joinpath("templates")
        for name, schema in _TEMPLATE_SCHEMAS.items():
            content = root.joinpath(f"{name}.txt").read_text(encoding="utf-8")
            templates[name] = parse_template_file(name, content, schema)
        return cls(templates)

    @classmethod
    def load_dir(cls, directory: str | Path) -> "TemplateLibrary":
        """Load *.txt templates from a directory, falling back to the defaults."""
        library = cls.load_default()
        for path in sorted(Path(directory).glob("*.txt")):
            name = path.stem
            schema = _TEMPLATE_SCHEMAS.get(name, ResponseSchema.SUMMARY_TEXT)
            library._templates[name] = parse_template_file(
                name, path.read_text(encoding="utf-8"), schema
            )
        return library


# ---------------------------------------------------------------------------
# Exemplars
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exemplar:
    """One in-context demonstration: a segment and its canonical answer."""

    participant_id: str
    segment_id: str
    segment_text: str
    response_text: str

    @property
    def total_length(self) -> int:
        return len(self.segment_text) + len(self.response_text)


def format_symptom_answer(
    findings: Sequence[tuple[str, str]],
) -> str:
    """Render (display name, quote) findings in the canonical answer format."""
    if not findings:
        return NONE_SENTINEL
    return "\n".join(f'{name}: "{quote}"' for name, quote in findings)


def build_exemplars(
    transcripts: Iterable[Transcript],
    annotations_by_pid: Mapping[str, Sequence[SpanAnnotation]],
    taxonomy: SymptomTaxonomy,
    include_negatives: bool = False,
) -> list[Exemplar]:
    """Turn labeled transcripts into (segment, answer) exemplars.

    Positive segments get one answer line per annotation, in annotation
    order; negative segments are included only when building fine-tune data,
    carrying the explicit no-symptom sentinel.
    """
    exemplars = []
    for transcript in transcripts:
        annotations = annotations_by_pid.get(transcript.participant_id, ())
        for segment in segment_utterance_pairs(transcript):
            here = annotations_for_segment(segment, annotations)
            if not here and not include_negatives:
                continue
            findings = []
            for ann in here:
                utt = transcript.utterances[ann.utterance_index]
                quote = utt.text[ann.start_char : ann.end_char]
                findings.append((taxonomy.display_name(ann.symptom_id), quote))
            exemplars.append(
                Exemplar(
                    participant_id=transcript.participant_id,
                    segment_id=segment.segment_id,
                    segment_text=segment.text,
                    response_text=format_symptom_answer(findings),
                )
            )
    return exemplars


def select_exemplars(exemplars: Sequence[Exemplar], k: int) -> list[Exemplar]:
    """The k exemplars with the smallest combined segment+answer length.

    Deterministic: ties break by (participant_id, segment_id). Asks for more
    than exist is an error so callers cap k explicitly.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k > len(exemplars):
        raise ValueError(f"requested {k} exemplars but only {len(exemplars)} are available")
    ranked = sorted(exemplars, key=lambda e: (e.total_length, e.participant_id, e.segment_id))
    return ranked[:k]


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymptomPrediction:
    """A parsed model finding; symptom_id is a taxonomy key or unrecognized:<raw>."""

    symptom_id: str
    quoted_section: str
    located: LocatedSpan | None = None

    @property
    def recognized(self) -> bool:
        return not self.symptom_id.startswith(UNRECOGNIZED_PREFIX)


def format_definitions(taxonomy: SymptomTaxonomy) -> str:
    if not len(taxonomy):
        raise TemplateError("cannot render a symptom prompt from an empty taxonomy")
    return "\n".join(f"{e.display_name}: {e.definition}" for e in taxonomy.entries)


def render_zero_shot_symptom_prompt(
    segment: Segment,
    taxonomy: SymptomTaxonomy,
    template: PromptTemplate,
    *,
    model_id: str,
    temperature: float = 1.0,
    request_tag: str = "",
    trial_index: int = 0,
) -> CompletionRequest:
    """Instruction-only symptom prompt embedding the full definition list."""
    mapping = {"segment": segment.text}
    full_text = template.system_text + template.user_text
    if "$definitions" in full_text or "${definitions}" in full_text:
        mapping["definitions"] = format_definitions(taxonomy)
    system, user = template.render(mapping)
    return CompletionRequest(
        model_id=model_id,
        messages=(Message("system", system), Message("user", user)),
        temperature=temperature,
        request_tag=request_tag,
        trial_index=trial_index,
    )


def render_few_shot_prompt(
    segment: Segment,
    taxonomy: SymptomTaxonomy,
    exemplars: Sequence[Exemplar],
    template: PromptTemplate,
    *,
    model_id: str,
    temperature: float = 1.0,
    request_tag: str = "",
    trial_index: int = 0,
) -> CompletionRequest:
    """Zero-shot prompt plus exemplars as alternating user/assistant demo turns."""
    base = render_zero_shot_symptom_prompt(
        segment,
        taxonomy,
        template,
        model_id=model_id,
        temperature=temperature,
        request_tag=request_tag,
        trial_index=trial_index,
    )
    demos: list[Message] = []
    for exemplar in exemplars:
        demos.append(Message("user", exemplar.segment_text))
        demos.append(Message("assistant", exemplar.response_text))
    messages = (base.messages[0], *demos, *base.messages[1:])
    return CompletionRequest(
        model_id=model_id,
        messages=messages,
        temperature=temperature,
        request_tag=request_tag,
        trial_index=trial_index,
    )


def render_stressor_prompt(
    chunk: Segment,
    template: PromptTemplate,
    *,
    model_id: str,
    temperature: float = 1.0,
    request_tag: str = "",
    trial_index: int = 0,
) -> CompletionRequest:
    if chunk.kind is not SegmentKind.CHAR_CHUNK:
        raise ValueError(f"stressor prompts take char_chunk segments, got {chunk.kind.value}")
    system, user = template.render({"chunk": chunk.text})
    return CompletionRequest(
        model_id=model_id,
        messages=(Message("system", system), Message("user", user)),
        temperature=temperature,
        request_tag=request_tag,
        trial_index=trial_index,
    )


_SUMMARY_TEMPLATE_BY_VARIANT = {
    SummaryVariant.EXPERIENCE: "summary_experience",
    SummaryVariant.SYMPTOM: "summary_symptom",
    SummaryVariant.COMBINED: "summary_combined",
}


def summary_template_name(variant: SummaryVariant) -> str:
    return _SUMMARY_TEMPLATE_BY_VARIANT[variant]


def _bullet_list(items: Sequence[str]) -> str:
    return "\n".join(f"- {item}" for item in items) if items else "- (none extracted)"


def render_summary_prompt(
    stressors: Sequence[str],
    symptoms: Sequence[str],
    variant: SummaryVariant,
    word_limit: int,
    template: PromptTemplate,
    *,
    model_id: str,
    temperature: float = 1.0,
    request_tag: str = "",
    trial_index: int = 0,
) -> CompletionRequest:
    """Summary prompt for one variant; inputs outside the variant are rejected."""
    if variant is SummaryVariant.EXPERIENCE and symptoms:
        raise ValueError("experience summaries take stressors only; got symptom inputs")
    if variant is SummaryVariant.SYMPTOM and stressors:
        raise ValueError("symptom summaries take symptoms only; got stressor inputs")
    mapping = {"word_limit": str(word_limit)}
    if variant in (SummaryVariant.EXPERIENCE, SummaryVariant.COMBINED):
        mapping["stressors"] = _bullet_list(stressors)
    if variant in (SummaryVariant.SYMPTOM, SummaryVariant.COMBINED):
        mapping["symptoms"] = _bullet_list(symptoms)
    system, user = template.render(mapping)
    return CompletionRequest(
        model_id=model_id,
        messages=(Message("system", system), Message("user", user)),
        temperature=temperature,
        request_tag=request_tag,
        trial_index=trial_index,
    )


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

_FINDING_RE = re.compile(
    r"^\s*(?:[-*•]\s*|\d+[.)]\s*)?(?P<label>[^:]{1,80}?)\s*:\s*(?P<quote>.*)$"
)
_QUOTE_CHARS = "\"'“”‘’"


def _strip_quotes(text: str) -> str:
    return text.strip().strip(_QUOTE_CHARS).strip()


def parse_symptom_response(text: str, taxonomy: SymptomTaxonomy) -> list[SymptomPrediction]:
    """Parse the canonical ``name: "quote"`` lines; never raises.

    Symptom names resolve case-insensitively against ids, display names, then
    aliases. Unknown names are preserved as ``unrecognized:<raw>`` rather than
    dropped. An explicit none-marker, or nothing parseable, yields [].
    """
    stripped = text.strip()
    if not stripped or stripped.rstrip(".").casefold() == NONE_SENTINEL.casefold():
        return []
    predictions: list[SymptomPrediction] = []
    for line in stripped.splitlines():
        if not line.strip():
            continue
        if line.strip().rstrip(".").casefold() == NONE_SENTINEL.casefold():
            continue
        match = _FINDING_RE.match(line)
        if match is None:
            logger.debug("unparseable response line ignored: %r", line[:80])
            continue
        label = _strip_quotes(match.group("label"))
        quote = _strip_quotes(match.group("quote"))
        resolved = taxonomy.resolve(label)
        if resolved is not None:
            predictions.append(SymptomPrediction(symptom_id=resolved, quoted_section=quote))
        elif quote:
            predictions.append(
                SymptomPrediction(symptom_id=f"{UNRECOGNIZED_PREFIX}{label}", quoted_section=quote)
            )
        else:
            logger.debug("line with unknown label and no quote ignored: %r", line[:80])
    return predictions


_STRESSOR_LINE_RE = re.compile(r"^\s*(?:[-*•]\s*|\d+[.)]\s*)?(?P<item>.+?)\s*$")


def parse_stressor_response(text: str) -> list[str]:
    """Parse an enumerated stressor list, one item per line."""
    stripped = text.strip()
    if not stripped or stripped.rstrip(".").casefold() == NONE_SENTINEL.casefold():
        return []
    items = []
    for line in stripped.splitlines():
        if not line.strip():
            continue
        if line.strip().rstrip(".").casefold() == NONE_SENTINEL.casefold():
            continue
        match = _STRESSOR_LINE_RE.match(line)
        if match:
            items.append(match.group("item"))
    return items
