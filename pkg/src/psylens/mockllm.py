"""A corpus-aware deterministic fake provider for offline runs and fixtures.

Plugs into MockBackend as the responder. Behavior is keyed on the request
tag and trial index only (hash-derived, stable across processes): symptom
answers are built from the ground-truth annotations with trial-dependent
perturbations (missed findings, wrong labels, paraphrased quotes, spurious
findings on clean segments), so recorded runs produce realistic metric
spreads without any network access.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .corpus import (
    CorpusBundle,
    Segment,
    Speaker,
    SpanAnnotation,
    annotations_for_segment,
    segment_by_chars,
    segment_utterance_pairs,
)
from .gateway import CompletionRequest
from .promptkit import format_symptom_answer

_STRESSOR_POOL = (
    "separation from family during the escape",
    "crossing the border at night under gunfire",
    "detention and interrogation after the first escape attempt",
    "forced labor during adolescence",
    "the death of a close relative before the departure",
    "hunger and scarcity in childhood",
    "being sold by a broker in a third country",
    "years in hiding without legal status",
    "an abusive marriage arranged under pressure",
    "adjusting to an unfamiliar society after resettlement",
)

_SUMMARY_OPENERS = (
    "Across the interview, the participant describes",
    "Taken together, the interview material shows",
    "Over the course of the conversation, the participant recounts",
)


def _digest(key: str) -> int:
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:4], "big")


@dataclass
class MockInterviewLLM:
    """Deterministic responder over a loaded corpus bundle."""

    bundle: CorpusBundle

    def __post_init__(self) -> None:
        self._segments: dict[str, tuple[Segment, list[SpanAnnotation]]] = {}
        self._chunks: dict[str, Segment] = {}
        for transcript in self.bundle.transcripts:
            annotations = list(self.bundle.annotations.get(transcript.participant_id, ()))
            for segment in segment_utterance_pairs(transcript):
                self._segments[segment.segment_id] = (
                    segment,
                    annotations_for_segment(segment, annotations),
                )
            for chunk in segment_by_chars(transcript):
                self._chunks[chunk.segment_id] = chunk

    def __call__(self, request: CompletionRequest) -> str:
        parts = request.request_tag.split("/")
        kind = parts[0] if parts else ""
        if kind == "symptom" and len(parts) >= 3:
            # The prompt shape distinguishes alignment modes (demo turns,
            # reference blocks), so distinct modes drift apart across trials.
            shape = f"{len(request.messages)}x{len(request.messages[0].content)}"
            return self._symptom_response(
                "/".join(parts[1:]), request.trial_index, request.model_id, shape
            )
        if kind == "stressor" and len(parts) >= 3:
            return self._stressor_response("/".join(parts[1:]))
        if kind == "summary":
            return self._summary_response(request)
        if kind == "geval" and len(parts) >= 4:
            return self._judge_response(request)
        return f"mock answer {_digest(request.request_tag or 'untagged') % 1000}"

    # -- symptom task --

    def _truth_findings(
        self, segment: Segment, annotations: list[SpanAnnotation]
    ) -> list[tuple[str, str]]:
        findings = []
        transcript = self.bundle.transcript(segment.participant_id)
        for ann in annotations:
            utt = transcript.utterances[ann.utterance_index]
            quote = utt.text[ann.start_char : ann.end_char]
            findings.append((self.bundle.taxonomy.display_name(ann.symptom_id), quote))
        return findings

    def _participant_snippet(self, segment: Segment) -> str:
        transcript = self.bundle.transcript(segment.participant_id)
        lo, hi = segment.utterance_range
        for utt in transcript.utterances[lo : hi + 1]:
            if utt.speaker is Speaker.PARTICIPANT:
                text = utt.text[:70]
                if len(utt.text) > 70:
                    text = text.rsplit(" ", 1)[0]
                return text
        return "it was a hard time"

    def _other_label(self, name: str, salt: int) -> str:
        entries = self.bundle.taxonomy.entries
        candidate = entries[salt % len(entries)].display_name
        if candidate == name:
            candidate = entries[(salt + 1) % len(entries)].display_name
        return candidate

    @staticmethod
    def _paraphrase(quote: str) -> str:
        words = quote.split()
        if len(words) < 3:
            return f"{quote} really"
        return " ".join(["Honestly,", *words[1:]])

    def _symptom_response(self, segment_key: str, trial: int, model_id: str, shape: str = "") -> str:
        segment, annotations = self._segments[segment_key]
        # Fine-tuned model ids perturb from trial 0 onward, so distinct grid
        # cells produce distinct validation scores; base models answer trial 0
        # with the exact ground truth.
        fine_tuned = model_id.startswith("ft:")
        salt = f"|{model_id}" if fine_tuned else ""
        h = _digest(f"symptom|{segment_key}|{trial}|{shape}{salt}")
        findings = self._truth_findings(segment, annotations)
        if not findings:
            if (trial > 0 or fine_tuned) and h % 6 == 0:
                label = self._other_label("", h)
                return format_symptom_answer([(label, self._participant_snippet(segment))])
            return format_symptom_answer([])
        if trial == 0 and not fine_tuned:
            return format_symptom_answer(findings)
        variant = h % 10
        if variant == 0:
            return format_symptom_answer([])
        if variant == 1 and len(findings) > 1:
            findings = findings[:-1]
        elif variant == 2:
            name, quote = findings[0]
            findings[0] = (self._other_label(name, h), quote)
        elif variant == 3:
            name, quote = findings[0]
            findings[0] = (name, self._paraphrase(quote))
        elif variant == 4:
            findings = findings + [("Stress overload", self._participant_snippet(segment))]
        return format_symptom_answer(findings)

    # -- stressor task --

    def _stressor_response(self, chunk_key: str) -> str:
        h = _digest(f"stressor|{chunk_key}")
        picks = [
            _STRESSOR_POOL[h % len(_STRESSOR_POOL)],
            _STRESSOR_POOL[(h // 7) % len(_STRESSOR_POOL)],
            _STRESSOR_POOL[0],  # recurs in every chunk, exercising merge dedup
        ]
        unique = list(dict.fromkeys(picks))
        return "\n".join(f"{i + 1}. {item}" for i, item in enumerate(unique))

    # -- summaries --

    @staticmethod
    def _input_items(request: CompletionRequest) -> list[str]:
        items = []
        for message in request.messages:
            if message.role != "user":
                continue
            for line in message.content.splitlines():
                if line.startswith("- ") and line != "- (none extracted)":
                    items.append(line[2:].strip())
        return items

    def _summary_response(self, request: CompletionRequest) -> str:
        h = _digest(f"summary|{request.request_tag}|{request.trial_index}")
        opener = _SUMMARY_OPENERS[h % len(_SUMMARY_OPENERS)]
        items = self._input_items(request)
        if not items:
            return f"{opener} no clearly attributable material in this portion of the interview."
        body = "; ".join(item.rstrip(".") for item in items[:8])
        closing = (
            "These experiences appear in rough chronological order, "
            "from early life through resettlement."
        )
        return f"{opener} {body}. {closing}"

    # -- judge --

    def _judge_response(self, request: CompletionRequest) -> str:
        parts = request.request_tag.split("/")
        dimension = parts[3] if len(parts) > 3 else "coherence"
        h = _digest(f"geval|{request.request_tag}|{request.trial_index}")
        if dimension == "fluency":
            return str(1 + h % 3)
        return str(4 + h % 2)
