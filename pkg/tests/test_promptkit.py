from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psylens.corpus import (
    DEFAULT_SPLIT,
    SummaryVariant,
    load_seed_taxonomy,
    segment_by_chars,
    segment_utterance_pairs,
    split_dataset,
)
from psylens.errors import TemplateError
from psylens.promptkit import (
    Exemplar,
    ResponseSchema,
    TemplateLibrary,
    build_exemplars,
    format_definitions,
    format_symptom_answer,
    parse_stressor_response,
    parse_symptom_response,
    parse_template_file,
    render_few_shot_prompt,
    render_stressor_prompt,
    render_summary_prompt,
    render_zero_shot_symptom_prompt,
    select_exemplars,
)

TAXONOMY = load_seed_taxonomy()


@pytest.fixture(scope="module")
def templates():
    return TemplateLibrary.load_default()


@pytest.fixture(scope="module")
def pair_segment(bundle):
    return segment_utterance_pairs(bundle.transcript("P3"))[1]


class TestTemplates:
    def test_parse_sections(self):
        template = parse_template_file(
            "t", "[system]\nsys text $x\n[user]\nuser text $y\n", ResponseSchema.SYMPTOM_LIST
        )
        assert template.system_text == "sys text $x"
        assert template.user_text == "user text $y"

    def test_missing_section_rejected(self):
        with pytest.raises(TemplateError, match="section"):
            parse_template_file("t", "[system]\nonly system\n", ResponseSchema.SYMPTOM_LIST)

    def test_unresolved_placeholder(self):
        template = parse_template_file(
            "t", "[system]\n$missing\n[user]\nx\n", ResponseSchema.SYMPTOM_LIST
        )
        with pytest.raises(TemplateError, match="missing"):
            template.render({})

    def test_unknown_template_name(self, templates):
        with pytest.raises(TemplateError, match="no template named"):
            templates.get("does_not_exist")

    def test_hashes_are_stable(self, templates):
        assert templates.hashes() == TemplateLibrary.load_default().hashes()


class TestZeroShotPrompt:
    def test_definition_list_has_one_line_per_entry(self, templates, pair_segment):
        request = render_zero_shot_symptom_prompt(
            pair_segment, TAXONOMY, templates.get("zero_shot_symptom"), model_id="m"
        )
        system = request.messages[0].content
        definitions = format_definitions(TAXONOMY)
        assert definitions in system
        assert len(definitions.splitlines()) == 36

    def test_segment_text_embedded_verbatim(self, templates, pair_segment):
        request = render_zero_shot_symptom_prompt(
            pair_segment, TAXONOMY, templates.get("zero_shot_symptom"), model_id="m"
        )
        assert pair_segment.text in request.messages[1].content

    def test_empty_taxonomy_is_template_error(self, templates, pair_segment):
        from psylens.corpus import SymptomTaxonomy

        with pytest.raises(TemplateError, match="empty taxonomy"):
            render_zero_shot_symptom_prompt(
                pair_segment, SymptomTaxonomy(entries=()), templates.get("zero_shot_symptom"),
                model_id="m",
            )

    def test_render_determinism(self, templates, pair_segment):
        first = render_zero_shot_symptom_prompt(
            pair_segment, TAXONOMY, templates.get("zero_shot_symptom"), model_id="m"
        )
        second = render_zero_shot_symptom_prompt(
            pair_segment, TAXONOMY, templates.get("zero_shot_symptom"), model_id="m"
        )
        assert first == second


def make_exemplar(pid, sid, seg_len, resp_len):
    return Exemplar(
        participant_id=pid,
        segment_id=sid,
        segment_text="s" * seg_len,
        response_text="r" * resp_len,
    )


class TestSelectExemplars:
    def test_smallest_total_length_in_ascending_order(self):
        pool = [
            make_exemplar("P1", "a", 6, 3),
            make_exemplar("P1", "b", 2, 1),
            make_exemplar("P1", "c", 3, 2),
        ]
        picked = select_exemplars(pool, 2)
        assert [e.total_length for e in picked] == [3, 5]

    def test_k_equals_available_returns_all_sorted(self):
        pool = [make_exemplar("P1", str(i), 10 - i, 0) for i in range(5)]
        picked = select_exemplars(pool, 5)
        assert [e.total_length for e in picked] == sorted(e.total_length for e in pool)

    def test_ties_break_by_participant_then_segment_id(self):
        pool = [
            make_exemplar("P2", "z", 4, 0),
            make_exemplar("P1", "b", 4, 0),
            make_exemplar("P1", "a", 4, 0),
        ]
        full_sort_oracle = sorted(pool, key=lambda e: (e.total_length, e.participant_id, e.segment_id))
        shuffled = pool.copy()
        random.Random(7).shuffle(shuffled)
        assert select_exemplars(shuffled, 3) == full_sort_oracle

    def test_overdraw_reports_both_counts(self):
        pool = [make_exemplar("P1", "a", 1, 1)]
        with pytest.raises(ValueError, match="2.*1"):
            select_exemplars(pool, 2)

    def test_rerun_stability(self):
        pool = [make_exemplar("P1", f"s{i:02d}", (i * 7) % 13, i % 3) for i in range(30)]
        shuffled = pool.copy()
        random.Random(11).shuffle(shuffled)
        assert select_exemplars(pool, 10) == select_exemplars(shuffled, 10)


class TestFewShotPrompt:
    def test_two_exemplars_make_six_messages(self, templates, pair_segment):
        exemplars = [make_exemplar("P1", "a", 5, 5), make_exemplar("P1", "b", 5, 5)]
        request = render_few_shot_prompt(
            pair_segment, TAXONOMY, exemplars, templates.get("zero_shot_symptom"), model_id="m"
        )
        assert len(request.messages) == 6
        roles = [m.role for m in request.messages]
        assert roles == ["system", "user", "assistant", "user", "assistant", "user"]

    def test_zero_exemplars_equals_zero_shot(self, templates, pair_segment):
        few = render_few_shot_prompt(
            pair_segment, TAXONOMY, [], templates.get("zero_shot_symptom"), model_id="m"
        )
        zero = render_zero_shot_symptom_prompt(
            pair_segment, TAXONOMY, templates.get("zero_shot_symptom"), model_id="m"
        )
        assert few == zero

    def test_sixty_exemplars_make_122_messages(self, templates, pair_segment):
        exemplars = [make_exemplar("P1", f"s{i}", 4, 4) for i in range(60)]
        request = render_few_shot_prompt(
            pair_segment, TAXONOMY, exemplars, templates.get("zero_shot_symptom"), model_id="m"
        )
        assert len(request.messages) == 122


class TestStressorPrompt:
    def test_chunk_text_embedded_verbatim(self, templates, bundle):
        chunk = segment_by_chars(bundle.transcript("P3"))[0]
        request = render_stressor_prompt(chunk, templates.get("stressor"), model_id="m")
        assert chunk.text in request.messages[1].content

    def test_wrong_segment_kind_rejected(self, templates, pair_segment):
        with pytest.raises(ValueError, match="char_chunk"):
            render_stressor_prompt(pair_segment, templates.get("stressor"), model_id="m")

    def test_render_determinism(self, templates, bundle):
        chunk = segment_by_chars(bundle.transcript("P3"))[0]
        assert render_stressor_prompt(
            chunk, templates.get("stressor"), model_id="m"
        ) == render_stressor_prompt(chunk, templates.get("stressor"), model_id="m")


class TestSummaryPrompt:
    STRESSORS = ["crossing the river at night", "detention after the first attempt"]
    SYMPTOMS = ['Insomnia: "I cannot sleep"', 'Arousal: "I flinch at doors"']

    def test_experience_with_empty_symptoms_is_valid(self, templates):
        request = render_summary_prompt(
            self.STRESSORS, [], SummaryVariant.EXPERIENCE, 680,
            templates.get("summary_experience"), model_id="m",
        )
        content = request.messages[1].content
        assert all(s in content for s in self.STRESSORS)

    def test_experience_with_symptoms_rejected(self, templates):
        with pytest.raises(ValueError, match="stressors only"):
            render_summary_prompt(
                self.STRESSORS, self.SYMPTOMS, SummaryVariant.EXPERIENCE, 680,
                templates.get("summary_experience"), model_id="m",
            )

    def test_symptom_with_stressors_rejected(self, templates):
        with pytest.raises(ValueError, match="symptoms only"):
            render_summary_prompt(
                self.STRESSORS, self.SYMPTOMS, SummaryVariant.SYMPTOM, 680,
                templates.get("summary_symptom"), model_id="m",
            )

    def test_combined_contains_both_lists(self, templates):
        request = render_summary_prompt(
            self.STRESSORS, self.SYMPTOMS, SummaryVariant.COMBINED, 1360,
            templates.get("summary_combined"), model_id="m",
        )
        content = request.messages[1].content
        assert all(s in content for s in self.STRESSORS + self.SYMPTOMS)

    def test_variant_purity(self, templates):
        experience = render_summary_prompt(
            self.STRESSORS, [], SummaryVariant.EXPERIENCE, 680,
            templates.get("summary_experience"), model_id="m",
        )
        joined = "\n".join(m.content for m in experience.messages)
        assert not any(s in joined for s in self.SYMPTOMS)
        symptom = render_summary_prompt(
            [], self.SYMPTOMS, SummaryVariant.SYMPTOM, 680,
            templates.get("summary_symptom"), model_id="m",
        )
        joined = "\n".join(m.content for m in symptom.messages)
        assert not any(s in joined for s in self.STRESSORS)

    def test_word_limit_in_prompt(self, templates):
        request = render_summary_prompt(
            self.STRESSORS, [], SummaryVariant.EXPERIENCE, 680,
            templates.get("summary_experience"), model_id="m",
        )
        assert "680" in request.messages[0].content


class TestParseSymptomResponse:
    def test_display_name_resolves_case_insensitively(self):
        predictions = parse_symptom_response(
            'Arousal: "the sound of sirens was so overwhelming"', TAXONOMY
        )
        assert len(predictions) == 1
        assert predictions[0].symptom_id == "arousal"
        assert predictions[0].quoted_section == "the sound of sirens was so overwhelming"

    def test_none_sentinel_yields_empty(self):
        assert parse_symptom_response("None", TAXONOMY) == []
        assert parse_symptom_response("NONE", TAXONOMY) == []
        assert parse_symptom_response("none.", TAXONOMY) == []

    def test_unknown_label_preserved_as_unrecognized(self):
        predictions = parse_symptom_response('Sleepy-time trouble: "cannot rest"', TAXONOMY)
        assert predictions[0].symptom_id == "unrecognized:Sleepy-time trouble"
        assert not predictions[0].recognized

    def test_alias_resolution(self):
        predictions = parse_symptom_response('sleeplessness: "awake until four"', TAXONOMY)
        assert predictions[0].symptom_id == "insomnia"

    def test_bulleted_and_numbered_lines(self):
        text = '- Arousal: "jumps at sirens"\n2. Insomnia: "cannot sleep"'
        predictions = parse_symptom_response(text, TAXONOMY)
        assert [p.symptom_id for p in predictions] == ["arousal", "insomnia"]

    def test_multi_line_with_none_line_ignored(self):
        text = 'Arousal: "jumps"\nNone'
        predictions = parse_symptom_response(text, TAXONOMY)
        assert len(predictions) == 1

    def test_prose_line_without_quote_ignored(self):
        text = "Here are the findings:\nArousal: \"jumps at sirens\""
        predictions = parse_symptom_response(text, TAXONOMY)
        assert [p.symptom_id for p in predictions] == ["arousal"]

    def test_known_label_without_quote_kept(self):
        predictions = parse_symptom_response("Insomnia:", TAXONOMY)
        assert predictions[0].symptom_id == "insomnia"
        assert predictions[0].quoted_section == ""

    @given(st.text(max_size=300))
    @settings(max_examples=300, deadline=None)
    def test_parse_totality(self, text):
        predictions = parse_symptom_response(text, TAXONOMY)
        non_empty_lines = len([l for l in text.strip().splitlines() if l.strip()])
        assert len(predictions) <= non_empty_lines

    def test_roundtrip_with_format_symptom_answer(self):
        findings = [("Arousal", "jumps at sirens"), ("Insomnia", "cannot sleep")]
        parsed = parse_symptom_response(format_symptom_answer(findings), TAXONOMY)
        assert [(TAXONOMY.display_name(p.symptom_id), p.quoted_section) for p in parsed] == findings
        assert parse_symptom_response(format_symptom_answer([]), TAXONOMY) == []


class TestParseStressorResponse:
    def test_numbered_list(self):
        text = "1. crossing the river\n2. detention in a third country"
        assert parse_stressor_response(text) == [
            "crossing the river", "detention in a third country",
        ]

    def test_none_yields_empty(self):
        assert parse_stressor_response("NONE") == []


class TestBuildExemplars:
    def test_positive_only_by_default(self, bundle):
        split = split_dataset(bundle.transcripts, DEFAULT_SPLIT)
        pool = build_exemplars(split.train, bundle.annotations, bundle.taxonomy)
        assert pool
        assert all(e.response_text != "NONE" for e in pool)
        positives = sum(
            1
            for t in split.train
            for s in segment_utterance_pairs(t)
            if any(
                s.covers_utterance(a.utterance_index)
                for a in bundle.annotations[t.participant_id]
            )
        )
        assert len(pool) == positives

    def test_negatives_included_for_finetune_data(self, bundle):
        split = split_dataset(bundle.transcripts, DEFAULT_SPLIT)
        pool = build_exemplars(split.train, bundle.annotations, bundle.taxonomy, include_negatives=True)
        total_segments = sum(len(segment_utterance_pairs(t)) for t in split.train)
        assert len(pool) == total_segments
        assert any(e.response_text == "NONE" for e in pool)

    def test_answers_quote_annotated_source_text(self, bundle):
        split = split_dataset(bundle.transcripts, DEFAULT_SPLIT)
        pool = build_exemplars(split.train, bundle.annotations, bundle.taxonomy)
        by_id = {e.segment_id: e for e in pool}
        p4 = bundle.transcript("P4")
        ann = bundle.annotations["P4"][0]
        quote = p4.utterances[ann.utterance_index].text[ann.start_char : ann.end_char]
        holder = next(e for e in pool if e.participant_id == "P4" and quote in e.response_text)
        assert f'"{quote}"' in holder.response_text
        assert by_id  # exemplar ids unique by construction
