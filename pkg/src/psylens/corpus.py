"""Interview corpus: transcripts, span annotations, taxonomy, segments, splits.

All corpus types are immutable after load and safe to share across threads.
Character counts everywhere are Unicode scalar values (``len`` on ``str``),
never bytes. Annotations are stored per-utterance with character offsets so
edits to one utterance cannot silently shift spans elsewhere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .docio import read_json_document, require_field, write_json_document
from .errors import ConfigError, ParseError, ValidationError

logger = logging.getLogger(__name__)

TRANSCRIPT_SCHEMA = "transcript/v1"
ANNOTATIONS_SCHEMA = "annotations/v1"
TAXONOMY_SCHEMA = "taxonomy/v1"
SUMMARY_REFERENCE_SCHEMA = "summary_reference/v1"

PCL5_INCLUSION_THRESHOLD = 33

# Word-count caps for reference summaries; the cap for the combined variant is
# the sum of the two single-variant caps.
SINGLE_SUMMARY_WORD_CAP = 680
COMBINED_SUMMARY_WORD_CAP = 1360


class Speaker(str, Enum):
    INTERVIEWER = "interviewer"
    PARTICIPANT = "participant"


class SegmentKind(str, Enum):
    UTTERANCE_PAIR = "utterance_pair"
    CHAR_CHUNK = "char_chunk"


class SummaryVariant(str, Enum):
    """The three summary flavors: stressors only, symptoms only, combined."""

    EXPERIENCE = "experience"
    SYMPTOM = "symptom"
    COMBINED = "combined"

    @property
    def word_cap(self) -> int:
        return COMBINED_SUMMARY_WORD_CAP if self is SummaryVariant.COMBINED else SINGLE_SUMMARY_WORD_CAP


_SPEAKER_LABELS = {
    Speaker.INTERVIEWER: "Interviewer: ",
    Speaker.PARTICIPANT: "Participant: ",
}


@dataclass(frozen=True)
class ParticipantMetadata:
    gender: str | None = None
    age: int | None = None
    residency_years: int | None = None
    trauma_event_count: int | None = None
    pcl5_score: int | None = None

    def to_doc(self) -> dict[str, Any]:
        return {
            "gender": self.gender,
            "age": self.age,
            "residency_years": self.residency_years,
            "trauma_event_count": self.trauma_event_count,
            "pcl5_score": self.pcl5_score,
        }


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker: Speaker
    text: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValidationError(f"utterance index must be >= 0, got {self.index}")
        if not self.text.strip():
            raise ValidationError(f"utterance {self.index}: text is empty after trimming")


@dataclass(frozen=True)
class Transcript:
    participant_id: str
    utterances: tuple[Utterance, ...]
    metadata: ParticipantMetadata | None = None

    def __post_init__(self) -> None:
        if not self.participant_id:
            raise ValidationError("participant_id must be non-empty")
        if not self.utterances:
            raise ValidationError(f"{self.participant_id}: transcript has no utterances")
        for position, utt in enumerate(self.utterances):
            if utt.index != position:
                raise ValidationError(
                    f"{self.participant_id}: utterance index {utt.index} does not match position {position}"
                )

    def char_count(self) -> int:
        return sum(len(u.text) for u in self.utterances)


@dataclass(frozen=True)
class SpanAnnotation:
    """One expert-labeled symptom section: a char range inside one utterance.

    ``end_char`` is exclusive. The same range may appear once per symptom when
    a single section carries multiple labels.
    """

    utterance_index: int
    start_char: int
    end_char: int
    symptom_id: str

    def __post_init__(self) -> None:
        if self.start_char < 0 or self.start_char >= self.end_char:
            raise ValidationError(
                f"annotation on utterance {self.utterance_index}: "
                f"need 0 <= start_char < end_char, got [{self.start_char}, {self.end_char})"
            )


@dataclass(frozen=True)
class TaxonomyEntry:
    symptom_id: str
    display_name: str
    definition: str
    disorder_category: str
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class SymptomTaxonomy:
    entries: tuple[TaxonomyEntry, ...]

    def __post_init__(self) -> None:
        offenses: list[str] = []
        seen_ids: set[str] = set()
        seen_aliases: dict[str, str] = {}
        for entry in self.entries:
            if entry.symptom_id in seen_ids:
                offenses.append(f"duplicate symptom_id {entry.symptom_id!r}")
            seen_ids.add(entry.symptom_id)
            for alias in entry.aliases:
                key = alias.casefold()
                if key in seen_aliases and seen_aliases[key] != entry.symptom_id:
                    offenses.append(
                        f"alias {alias!r} of {entry.symptom_id!r} collides with {seen_aliases[key]!r}"
                    )
                seen_aliases[key] = entry.symptom_id
        if offenses:
            raise ValidationError("invalid taxonomy", offenses)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, symptom_id: str) -> bool:
        return any(e.symptom_id == symptom_id for e in self.entries)

    @cached_property
    def _lookup(self) -> dict[str, str]:
        # Resolution precedence: ids, then display names, then aliases.
        table: dict[str, str] = {}
        for entry in reversed(self.entries):
            for alias in entry.aliases:
                table[alias.casefold()] = entry.symptom_id
        for entry in reversed(self.entries):
            table[entry.display_name.casefold()] = entry.symptom_id
        for entry in reversed(self.entries):
            table[entry.symptom_id.casefold()] = entry.symptom_id
        return table

    @cached_property
    def _by_id(self) -> dict[str, TaxonomyEntry]:
        return {e.symptom_id: e for e in self.entries}

    def resolve(self, name: str) -> str | None:
        """Case-insensitive resolution of a raw symptom name to a symptom_id."""
        return self._lookup.get(name.strip().casefold())

    def entry(self, symptom_id: str) -> TaxonomyEntry:
        return self._by_id[symptom_id]

    def display_name(self, symptom_id: str) -> str:
        entry = self._by_id.get(symptom_id)
        return entry.display_name if entry else symptom_id


@dataclass(frozen=True)
class Segment:
    """A unit of LLM input with an invertible map back to source characters.

    ``text`` renders each covered utterance as one ``Speaker: text`` line.
    ``char_offsets`` has one entry per character of ``text``: either the
    source ``(utterance_index, char)`` position, or None for synthetic
    characters (speaker labels and line separators).
    """

    segment_id: str
    kind: SegmentKind
    participant_id: str
    utterance_range: tuple[int, int]
    text: str
    char_offsets: tuple[tuple[int, int] | None, ...]
    oversized: bool = False

    def __post_init__(self) -> None:
        if len(self.char_offsets) != len(self.text):
            raise ValidationError(
                f"{self.segment_id}: char_offsets length {len(self.char_offsets)} "
                f"!= text length {len(self.text)}"
            )
        mapped = [p for p in self.char_offsets if p is not None]
        if len(set(mapped)) != len(mapped):
            raise ValidationError(f"{self.segment_id}: char_offsets is not injective")

    @cached_property
    def _source_to_local(self) -> dict[tuple[int, int], int]:
        return {pos: i for i, pos in enumerate(self.char_offsets) if pos is not None}

    def to_source(self, local: int) -> tuple[int, int]:
        """Map a local text offset to its (utterance_index, char) source position."""
        pos = self.char_offsets[local]
        if pos is None:
            raise KeyError(f"{self.segment_id}: offset {local} is a synthetic character")
        return pos

    def to_local(self, utterance_index: int, char: int) -> int:
        try:
            return self._source_to_local[(utterance_index, char)]
        except KeyError:
            raise KeyError(
                f"{self.segment_id}: source position ({utterance_index}, {char}) not covered"
            ) from None

    def local_range(self, annotation: SpanAnnotation) -> tuple[int, int]:
        """Local [start, end) range of an annotation's source span."""
        start = self.to_local(annotation.utterance_index, annotation.start_char)
        end = self.to_local(annotation.utterance_index, annotation.end_char - 1) + 1
        return start, end

    def covers_utterance(self, utterance_index: int) -> bool:
        lo, hi = self.utterance_range
        return lo <= utterance_index <= hi


@dataclass(frozen=True)
class SummaryReference:
    participant_id: str
    variant: SummaryVariant
    text: str
    word_count: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "word_count", len(self.text.split()))
        if not self.text.strip():
            raise ValidationError(f"{self.participant_id}/{self.variant.value}: summary text is empty")
        if self.word_count > self.variant.word_cap:
            raise ValidationError(
                f"{self.participant_id}/{self.variant.value}: {self.word_count} words "
                f"exceeds the {self.variant.word_cap}-word cap"
            )


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def _render_lines(utterances: Sequence[Utterance]) -> tuple[str, tuple[tuple[int, int] | None, ...]]:
    parts: list[str] = []
    offsets: list[tuple[int, int] | None] = []
    for i, utt in enumerate(utterances):
        if i:
            parts.append("\n")
            offsets.append(None)
        label = _SPEAKER_LABELS[utt.speaker]
        parts.append(label)
        offsets.extend([None] * len(label))
        parts.append(utt.text)
        offsets.extend((utt.index, j) for j in range(len(utt.text)))
    return "".join(parts), tuple(offsets)


def _line_length(utt: Utterance) -> int:
    return len(_SPEAKER_LABELS[utt.speaker]) + len(utt.text)


def _make_segment(
    transcript: Transcript,
    utterances: Sequence[Utterance],
    kind: SegmentKind,
    ordinal: int,
    oversized: bool = False,
) -> Segment:
    text, offsets = _render_lines(utterances)
    tag = "pair" if kind is SegmentKind.UTTERANCE_PAIR else "chunk"
    return Segment(
        segment_id=f"{transcript.participant_id}/{tag}-{ordinal:03d}",
        kind=kind,
        participant_id=transcript.participant_id,
        utterance_range=(utterances[0].index, utterances[-1].index),
        text=text,
        char_offsets=offsets,
        oversized=oversized,
    )


def segment_utterance_pairs(transcript: Transcript) -> list[Segment]:
    """Split a transcript into one segment per interviewer-participant exchange.

    Consecutive same-speaker utterances stay inside the enclosing exchange;
    a new exchange opens when an interviewer turn follows a participant turn.
    A trailing group with no participant turn is merged into the previous
    exchange. Degenerate monologues yield a single segment.
    """
    groups: list[list[Utterance]] = [[transcript.utterances[0]]]
    for utt in transcript.utterances[1:]:
        if utt.speaker is Speaker.INTERVIEWER and groups[-1][-1].speaker is Speaker.PARTICIPANT:
            groups.append([utt])
        else:
            groups[-1].append(utt)
    if len(groups) > 1 and all(u.speaker is not Speaker.PARTICIPANT for u in groups[-1]):
        tail = groups.pop()
        groups[-1].extend(tail)
    return [
        _make_segment(transcript, group, SegmentKind.UTTERANCE_PAIR, i)
        for i, group in enumerate(groups)
    ]


def segment_by_chars(transcript: Transcript, limit: int = 6000) -> list[Segment]:
    """Greedy partition into chunks of at most ``limit`` rendered characters.

    Utterances are never split mid-text: an utterance whose single rendered
    line exceeds the limit becomes its own segment, flagged oversized.
    """
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    groups: list[list[Utterance]] = []
    current: list[Utterance] = []
    current_len = 0
    for utt in transcript.utterances:
        line = _line_length(utt)
        added = line if not current else line + 1  # +1 for the joining newline
        if current and current_len + added > limit:
            groups.append(current)
            current = [utt]
            current_len = line
        else:
            current.append(utt)
            current_len += added
    groups.append(current)
    segments = []
    for i, group in enumerate(groups):
        seg = _make_segment(transcript, group, SegmentKind.CHAR_CHUNK, i)
        if len(seg.text) > limit:
            seg = _make_segment(transcript, group, SegmentKind.CHAR_CHUNK, i, oversized=True)
        segments.append(seg)
    return segments


def annotations_for_segment(
    segment: Segment, annotations: Iterable[SpanAnnotation]
) -> list[SpanAnnotation]:
    return [a for a in annotations if segment.covers_utterance(a.utterance_index)]


# ---------------------------------------------------------------------------
# Dataset splits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitConfig:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]


# Participant allocation used throughout the reference experiments.
DEFAULT_SPLIT = SplitConfig(
    train=("P4", "P11", "P14", "P19"),
    validation=("P5", "P17"),
    test=("P3", "P7", "P9", "P13"),
)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[Transcript, ...]
    validation: tuple[Transcript, ...]
    test: tuple[Transcript, ...]


def split_dataset(corpus: Sequence[Transcript], config: SplitConfig) -> DatasetSplit:
    """Assign every transcript to exactly one of train/validation/test."""
    assignment: dict[str, str] = {}
    for split_name, ids in (("train", config.train), ("validation", config.validation), ("test", config.test)):
        for pid in ids:
            if pid in assignment:
                raise ConfigError(
                    f"participant {pid} appears in both {assignment[pid]!r} and {split_name!r} splits"
                )
            assignment[pid] = split_name
    by_id = {t.participant_id: t for t in corpus}
    missing = [pid for pid in assignment if pid not in by_id]
    if missing:
        raise ConfigError(f"split config names participants absent from the corpus: {sorted(missing)}")
    unassigned = [pid for pid in by_id if pid not in assignment]
    if unassigned:
        raise ConfigError(f"transcripts not assigned to any split: {sorted(unassigned)}")
    return DatasetSplit(
        train=tuple(by_id[pid] for pid in config.train),
        validation=tuple(by_id[pid] for pid in config.validation),
        test=tuple(by_id[pid] for pid in config.test),
    )


# ---------------------------------------------------------------------------
# Loading and serialization
# ---------------------------------------------------------------------------


def load_transcript(path: str | Path) -> Transcript:
    doc = read_json_document(path, TRANSCRIPT_SCHEMA)
    participant_id = require_field(doc, "participant_id", str(path))
    raw_utterances = require_field(doc, "utterances", str(path))
    if not isinstance(raw_utterances, list):
        raise ParseError(f"{path}: 'utterances' must be a list")

    offenses: list[str] = []
    utterances: list[Utterance] = []
    for i, item in enumerate(raw_utterances):
        speaker_raw = item.get("speaker")
        text = item.get("text")
        try:
            speaker = Speaker(speaker_raw)
        except ValueError:
            offenses.append(f"utterance {i}: unknown speaker {speaker_raw!r}")
            continue
        if not isinstance(text, str) or not text.strip():
            offenses.append(f"utterance {i}: text is empty")
            continue
        utterances.append(Utterance(index=len(utterances), speaker=speaker, text=text))
    if offenses:
        raise ValidationError(f"{path}: invalid transcript", offenses)

    metadata = None
    raw_meta = doc.get("metadata")
    if raw_meta is not None:
        metadata = ParticipantMetadata(
            gender=raw_meta.get("gender"),
            age=raw_meta.get("age"),
            residency_years=raw_meta.get("residency_years"),
            trauma_event_count=raw_meta.get("trauma_event_count"),
            pcl5_score=raw_meta.get("pcl5_score"),
        )
        score = metadata.pcl5_score
        if score is not None and score < PCL5_INCLUSION_THRESHOLD:
            # Inclusion criteria expect >= 33; tolerated for synthetic fixtures.
            logger.warning(
                "%s: pcl5_score %d is below the inclusion threshold %d",
                participant_id, score, PCL5_INCLUSION_THRESHOLD,
            )
    return Transcript(participant_id=participant_id, utterances=tuple(utterances), metadata=metadata)


def dump_transcript(transcript: Transcript, path: str | Path) -> None:
    doc: dict[str, Any] = {
        "schema": TRANSCRIPT_SCHEMA,
        "participant_id": transcript.participant_id,
        "metadata": transcript.metadata.to_doc() if transcript.metadata else None,
        "utterances": [
            {"speaker": u.speaker.value, "text": u.text} for u in transcript.utterances
        ],
    }
    write_json_document(path, doc)


def load_annotations(
    path: str | Path, transcript: Transcript, taxonomy: SymptomTaxonomy
) -> list[SpanAnnotation]:
    doc = read_json_document(path, ANNOTATIONS_SCHEMA)
    declared_pid = doc.get("participant_id")
    if declared_pid is not None and declared_pid != transcript.participant_id:
        raise ValidationError(
            f"{path}: annotations are for {declared_pid!r}, transcript is {transcript.participant_id!r}"
        )
    raw = require_field(doc, "annotations", str(path))
    annotations: list[SpanAnnotation] = []
    offenses: list[str] = []
    for i, item in enumerate(raw):
        try:
            ann = SpanAnnotation(
                utterance_index=item["utterance_index"],
                start_char=item["start_char"],
                end_char=item["end_char"],
                symptom_id=item["symptom_id"],
            )
        except KeyError as exc:
            offenses.append(f"annotation {i}: missing field {exc.args[0]!r}")
            continue
        except ValidationError as exc:
            offenses.append(f"annotation {i}: {exc}")
            continue
        problem = _annotation_problem(ann, transcript, taxonomy)
        if problem:
            offenses.append(f"annotation {i}: {problem}")
        else:
            annotations.append(ann)
    if offenses:
        raise ValidationError(f"{path}: invalid annotations", offenses)
    return annotations


def _annotation_problem(
    ann: SpanAnnotation, transcript: Transcript, taxonomy: SymptomTaxonomy
) -> str | None:
    if not 0 <= ann.utterance_index < len(transcript.utterances):
        return f"utterance_index {ann.utterance_index} out of range"
    utt = transcript.utterances[ann.utterance_index]
    if ann.end_char > len(utt.text):
        return (
            f"end_char {ann.end_char} exceeds utterance {ann.utterance_index} "
            f"length {len(utt.text)}"
        )
    if utt.speaker is not Speaker.PARTICIPANT:
        return f"utterance {ann.utterance_index} is not a participant turn"
    if ann.symptom_id not in taxonomy:
        return f"unknown symptom_id {ann.symptom_id!r}"
    return None


def dump_annotations(
    annotations: Sequence[SpanAnnotation], participant_id: str, path: str | Path
) -> None:
    doc = {
        "schema": ANNOTATIONS_SCHEMA,
        "participant_id": participant_id,
        "annotations": [
            {
                "utterance_index": a.utterance_index,
                "start_char": a.start_char,
                "end_char": a.end_char,
                "symptom_id": a.symptom_id,
            }
            for a in annotations
        ],
    }
    write_json_document(path, doc)


def load_taxonomy(path: str | Path) -> SymptomTaxonomy:
    doc = read_json_document(path, TAXONOMY_SCHEMA)
    raw = require_field(doc, "entries", str(path))
    entries = []
    for i, item in enumerate(raw):
        try:
            entries.append(
                TaxonomyEntry(
                    symptom_id=item["symptom_id"],
                    display_name=item["display_name"],
                    definition=item["definition"],
                    disorder_category=item["disorder_category"],
                    aliases=tuple(item.get("aliases", ())),
                )
            )
        except KeyError as exc:
            raise ParseError(f"{path}: entry {i} missing field {exc.args[0]!r}") from None
    return SymptomTaxonomy(entries=tuple(entries))


def dump_taxonomy(taxonomy: SymptomTaxonomy, path: str | Path) -> None:
    doc = {
        "schema": TAXONOMY_SCHEMA,
        "entries": [
            {
                "symptom_id": e.symptom_id,
                "display_name": e.display_name,
                "aliases": list(e.aliases),
                "definition": e.definition,
                "disorder_category": e.disorder_category,
            }
            for e in taxonomy.entries
        ],
    }
    write_json_document(path, doc)


def taxonomy_sha256(taxonomy: SymptomTaxonomy) -> str:
    import hashlib

    payload = "\x00".join(
        f"{e.symptom_id}|{e.display_name}|{','.join(e.aliases)}|{e.definition}|{e.disorder_category}"
        for e in taxonomy.entries
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_seed_taxonomy() -> SymptomTaxonomy:
    """The bundled 36-entry starter taxonomy.

    Only a handful of entries are real symptom names; the rest are placeholders
    so the file has the expected shape. Production use should supply a full
    taxonomy file instead.
    """
    ref = resources.files("psylens").joinpath("data/taxonomy_seed.json")
    with resources.as_file(ref) as path:
        return load_taxonomy(path)


def load_summary_reference(path: str | Path) -> SummaryReference:
    doc = read_json_document(path, SUMMARY_REFERENCE_SCHEMA)
    try:
        variant = SummaryVariant(require_field(doc, "variant", str(path)))
    except ValueError as exc:
        raise ParseError(f"{path}: unknown summary variant") from exc
    return SummaryReference(
        participant_id=require_field(doc, "participant_id", str(path)),
        variant=variant,
        text=require_field(doc, "text", str(path)),
    )


def dump_summary_reference(ref: SummaryReference, path: str | Path) -> None:
    doc = {
        "schema": SUMMARY_REFERENCE_SCHEMA,
        "participant_id": ref.participant_id,
        "variant": ref.variant.value,
        "text": ref.text,
    }
    write_json_document(path, doc)


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnotationStats:
    """Observed label counts; section labels are distinct annotated ranges."""

    section_labels: int
    symptom_type_labels: int

    @property
    def multi_label_sections(self) -> int:
        return self.symptom_type_labels - self.section_labels


def annotation_stats(annotations: Iterable[SpanAnnotation]) -> AnnotationStats:
    anns = list(annotations)
    ranges = {(a.utterance_index, a.start_char, a.end_char) for a in anns}
    return AnnotationStats(section_labels=len(ranges), symptom_type_labels=len(anns))


# ---------------------------------------------------------------------------
# Corpus directory convention
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusPaths:
    """Filesystem layout: transcripts/, annotations/, summaries/, taxonomy.json."""

    root: Path

    @property
    def transcripts_dir(self) -> Path:
        return self.root / "transcripts"

    @property
    def annotations_dir(self) -> Path:
        return self.root / "annotations"

    @property
    def summaries_dir(self) -> Path:
        return self.root / "summaries"

    @property
    def taxonomy_file(self) -> Path:
        return self.root / "taxonomy.json"


@dataclass(frozen=True)
class CorpusBundle:
    taxonomy: SymptomTaxonomy
    transcripts: tuple[Transcript, ...]
    annotations: Mapping[str, tuple[SpanAnnotation, ...]]
    summary_references: Mapping[tuple[str, SummaryVariant], SummaryReference]

    def transcript(self, participant_id: str) -> Transcript:
        for t in self.transcripts:
            if t.participant_id == participant_id:
                return t
        raise KeyError(participant_id)


def load_corpus(paths: CorpusPaths) -> CorpusBundle:
    """Load a corpus directory; raises on the first invalid file."""
    taxonomy = load_taxonomy(paths.taxonomy_file)
    transcripts = []
    annotations: dict[str, tuple[SpanAnnotation, ...]] = {}
    for tpath in sorted(paths.transcripts_dir.glob("*.json")):
        transcript = load_transcript(tpath)
        transcripts.append(transcript)
        apath = paths.annotations_dir / tpath.name
        if apath.exists():
            annotations[transcript.participant_id] = tuple(
                load_annotations(apath, transcript, taxonomy)
            )
        else:
            annotations[transcript.participant_id] = ()
    references: dict[tuple[str, SummaryVariant], SummaryReference] = {}
    if paths.summaries_dir.exists():
        for spath in sorted(paths.summaries_dir.glob("*.json")):
            ref = load_summary_reference(spath)
            references[(ref.participant_id, ref.variant)] = ref
    return CorpusBundle(
        taxonomy=taxonomy,
        transcripts=tuple(transcripts),
        annotations=annotations,
        summary_references=references,
    )
