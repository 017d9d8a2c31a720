"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Criterion 11 (live smoke) is network-gated and skipped unless
PSYLENS_LIVE_SMOKE=1 and backend credentials are exported.
"""

from __future__ import annotations

import filecmp
import itertools
import math
import os
import random
import socket
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

import psylens.cli as cli
from helpers import OrthonormalEmbedder, StaticVectorEmbedder, span_covering, tokens_from_words
from psylens.corpus import DEFAULT_SPLIT, split_dataset
from psylens.metrics import (
    GEvalDimension,
    GEvalScore,
    Scope,
    aggregate_multilabel,
    bert_score,
    example_based_metrics,
    g_eval,
    score_segment,
)
from psylens.promptkit import TemplateLibrary, build_exemplars, select_exemplars
from psylens.rag import Chunk, build_index, chunk_document, reassemble, retrieve
from psylens.spanalign import (
    distance_histogram,
    mid_token_index,
    recall_mid_token_distance,
    tokenize,
)

pytestmark = pytest.mark.acceptance


def report(criterion: int, message: str) -> None:
    print(f"PASS criterion {criterion:2d}: {message}", flush=True)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_criterion_1_reference_metric_rows():
    with Timer() as timer:
        cases = [
            (set(), set(), (1.0, 1.0, 1.0, 1.0), 0.0),
            (set(), {"negative change in mood"}, (0.0, 0.0, 0.0, 0.0), 0.0),
            ({"arousal"}, {"arousal"}, (1.0, 1.0, 1.0, 1.0), 0.0),
            ({"alcohol dependence", "insomnia"}, {"insomnia"}, (0.5, 1.0, 0.5, 0.67), 0.005),
            ({"negative self-image", "negative change in cognition"}, set(), (0.0, 0.0, 0.0, 0.0), 0.0),
        ]
        for truth, predicted, expected, tolerance in cases:
            got = example_based_metrics(truth, predicted).as_tuple()
            for got_value, expected_value in zip(got, expected):
                assert abs(got_value - expected_value) <= tolerance, (truth, predicted, got)
    assert timer.elapsed < 1.0
    report(1, f"all 5 reference metric rows reproduced exactly ({timer.elapsed:.3f}s)")


def test_criterion_2_multilabel_brute_force_equivalence():
    with Timer() as timer:
        universe = ("a", "b", "c")
        subsets = [frozenset(c) for r in range(4) for c in itertools.combinations(universe, r)]
        assert len(subsets) == 8
        pairs_checked = 0
        for truth in subsets:
            for predicted in subsets:
                got = example_based_metrics(truth, predicted).as_tuple()
                inter = sum(1 for x in universe if x in truth and x in predicted)
                union = sum(1 for x in universe if x in truth or x in predicted)
                if not truth and not predicted:
                    expected = (1.0, 1.0, 1.0, 1.0)
                else:
                    expected = (
                        inter / union,
                        inter / len(predicted) if predicted else 0.0,
                        inter / len(truth) if truth else 0.0,
                        2 * inter / (len(truth) + len(predicted)),
                    )
                for got_value, expected_value in zip(got, expected):
                    assert abs(got_value - expected_value) <= 1e-12
                pairs_checked += 1
        assert pairs_checked == 64
    assert timer.elapsed < 1.0
    report(2, f"64 subset pairs match the set-arithmetic oracle to 1e-12 ({timer.elapsed:.3f}s)")


def test_criterion_3_mid_token_distance_oracle():
    rng = random.Random(58418)
    with Timer() as timer:
        for case in range(200):
            n = rng.randint(4, 30)
            _, tokens = tokens_from_words([f"w{i}" for i in range(n)])

            def spans(count):
                out = []
                for _ in range(count):
                    first = rng.randrange(n)
                    last = min(n - 1, first + rng.randint(0, 3))
                    out.append(span_covering(tokens, first, last))
                return out

            truth = spans(rng.randint(1, 4))
            estimates = spans(rng.randint(0, 4))
            result = recall_mid_token_distance(tokens, truth, estimates)
            truth_mids = [mid_token_index(tokens, s) for s in truth]
            est_mids = [mid_token_index(tokens, s) for s in estimates]
            if not est_mids:
                expected = math.inf
            else:
                expected = sum(min(abs(a - b) for b in est_mids) for a in truth_mids) / len(truth_mids)
            assert result.d == expected, f"case {case}: {result.d} != {expected}"

            # adding an estimate never increases d
            extra = spans(1)
            refined = recall_mid_token_distance(tokens, truth, estimates + extra)
            assert refined.d <= result.d

        # pinned edge cases
        _, tokens = tokens_from_words([f"w{i}" for i in range(12)])
        identical = [span_covering(tokens, 3, 7)]
        assert recall_mid_token_distance(tokens, identical, identical).d == 0.0
        assert math.isinf(recall_mid_token_distance(tokens, identical, []).d)
    assert timer.elapsed < 5.0
    report(3, f"200 randomized segments equal the exhaustive oracle ({timer.elapsed:.2f}s)")


def test_criterion_4_histogram_contract():
    values = [3.0] * 58 + [12.0] * 15 + [30.0] * 13 + [75.0] * 10 + [math.inf] * 6
    result = distance_histogram(values)
    assert result.counts == (58, 15, 13, 16)
    assert result.total == 102
    assert result.under_20 == 73
    assert result.under_20 == result.counts[0] + result.counts[1]
    report(4, "histogram reproduces the 58/15/13/16 shape and the 73-of-102 headline")


def test_criterion_5_bertscore_properties():
    with Timer() as timer:
        embedder = OrthonormalEmbedder()
        same = "the night river crossing stayed with her"
        assert bert_score(same, same, embedder).f1 == pytest.approx(1.0, abs=1e-9)

        disjoint = bert_score("alpha beta gamma delta", "epsilon zeta eta theta", embedder)
        assert disjoint.f1 == 0.0

        rng = random.Random(7)
        vocabulary = [f"tok{i}" for i in range(8)]
        for _ in range(50):
            cand_tokens = [rng.choice(vocabulary) for _ in range(5)]
            ref_tokens = [rng.choice(vocabulary) for _ in range(5)]
            got = bert_score(" ".join(cand_tokens), " ".join(ref_tokens), embedder)
            cand = np.asarray(embedder(cand_tokens), dtype=float)
            ref = np.asarray(embedder(ref_tokens), dtype=float)
            precision = float(np.mean([max(c @ r for r in ref) for c in cand]))
            recall = float(np.mean([max(c @ r for c in cand) for r in ref]))
            f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
            assert got.precision == pytest.approx(precision, abs=1e-9)
            assert got.recall == pytest.approx(recall, abs=1e-9)
            assert got.f1 == pytest.approx(f1, abs=1e-9)
    assert timer.elapsed < 1.0
    report(5, f"BERTScore self=1, disjoint=0, greedy oracle matched ({timer.elapsed:.3f}s)")


def test_criterion_6_retrieval_exactness_and_chunk_coverage():
    with Timer() as timer:
        rng = np.random.default_rng(58418)
        n, dim, k = 50, 16, 5
        vectors = rng.normal(size=(n, dim))
        texts = [f"text{i}" for i in range(n)]
        table = {t: vectors[i] for i, t in enumerate(texts)}
        table["query"] = rng.normal(size=dim)
        embedder = StaticVectorEmbedder(table)
        chunks = [
            Chunk(chunk_id=f"c{i:03d}", source_doc="d", text=texts[i], char_range=(i, i + len(texts[i])))
            for i in range(n)
        ]
        index = build_index(chunks, embedder)
        result = retrieve(index, "query", k=k, embedder=embedder)
        normalized = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
        query = np.asarray(table["query"], dtype=float)
        scores = normalized @ (query / np.linalg.norm(query))
        oracle = sorted(range(n), key=lambda i: (-scores[i], f"c{i:03d}"))[:k]
        assert [m.chunk.chunk_id for m in result.matches] == [f"c{i:03d}" for i in oracle]

        py_rng = random.Random(99)
        alphabet = "ab \n."
        for _ in range(100):
            text = "".join(py_rng.choice(alphabet) for _ in range(py_rng.randint(1, 300)))
            size = py_rng.randint(10, 80)
            overlap = py_rng.randint(0, min(9, size - 1))
            pieces = chunk_document(text, chunk_size=size, overlap=overlap)
            assert reassemble(pieces) == text
    assert timer.elapsed < 5.0
    report(6, f"retrieve(k=5) equals brute force; 100 chunker coverage checks ({timer.elapsed:.2f}s)")


def _compare_trees(a: Path, b: Path) -> list[str]:
    diffs = []
    comparison = filecmp.dircmp(a, b)

    def walk(cmp, prefix=""):
        diffs.extend(f"{prefix}{name}" for name in cmp.left_only + cmp.right_only + cmp.diff_files)
        for sub_name, sub_cmp in cmp.subdirs.items():
            walk(sub_cmp, f"{prefix}{sub_name}/")

    walk(comparison)
    return diffs


def test_criterion_7_end_to_end_replay_determinism(
    replay_config_path, replay_store_dir, tmp_path, monkeypatch
):
    def no_network(*args, **kwargs):
        raise AssertionError("network access attempted during replay")

    monkeypatch.setattr(socket, "socket", no_network)
    monkeypatch.setattr(socket, "create_connection", no_network)

    runner = CliRunner()
    with Timer() as timer:
        for run_dir in (tmp_path / "run1", tmp_path / "run2"):
            result = runner.invoke(
                cli.main, ["run", str(replay_config_path), "--out", str(run_dir)]
            )
            assert result.exit_code == 0, result.output
            result = runner.invoke(cli.main, ["report", str(run_dir)])
            assert result.exit_code == 0, result.output
    diffs = _compare_trees(tmp_path / "run1" / "reports", tmp_path / "run2" / "reports")
    assert diffs == [], f"report directories differ: {diffs}"
    assert timer.elapsed < 30.0
    report(7, f"two replay runs x 4 modes x 3 trials byte-identical, no network ({timer.elapsed:.1f}s)")


def test_criterion_8_exemplar_selection(bundle):
    split = split_dataset(bundle.transcripts, DEFAULT_SPLIT)
    pool = build_exemplars(split.train, bundle.annotations, bundle.taxonomy)
    k = min(60, len(pool))
    first = select_exemplars(pool, k)
    lengths = [e.total_length for e in first]
    assert lengths == sorted(lengths)
    assert set(lengths) == set(sorted(e.total_length for e in pool)[:k])

    shuffled = pool.copy()
    random.Random(3).shuffle(shuffled)
    assert select_exemplars(shuffled, k) == first
    assert select_exemplars(pool, k) == first  # rerun-stable
    report(8, f"selection of {k} shortest exemplars is deterministic and rerun-stable")


def test_criterion_9_scope_discrepancy_reproduction():
    # 8 negative segments and 2 positive segments with two labels each.
    truth = {f"neg{i}": set() for i in range(8)}
    truth.update({f"pos{i}": {"insomnia", "arousal"} for i in range(2)})

    none_everywhere = {sid: set() for sid in truth}  # method A
    noisy_on_positives = {  # method B: partial credit on positives, spurious on half the negatives
        sid: ({"insomnia"} if labels else ({"arousal"} if int(sid[3:]) % 2 == 0 else set()))
        for sid, labels in truth.items()
    }

    def scores(predictions):
        return [score_segment(sid, truth[sid], predictions[sid], trial=0) for sid in truth]

    a_all = aggregate_multilabel(scores(none_everywhere), Scope.ALL).accuracy.mean
    b_all = aggregate_multilabel(scores(noisy_on_positives), Scope.ALL).accuracy.mean
    a_pos = aggregate_multilabel(scores(none_everywhere), Scope.POSITIVE_ONLY).accuracy.mean
    b_pos = aggregate_multilabel(scores(noisy_on_positives), Scope.POSITIVE_ONLY).accuracy.mean
    assert a_all > b_all, (a_all, b_all)
    assert b_pos > a_pos, (b_pos, a_pos)
    report(
        9,
        f"scope reversal reproduced: all-segments {a_all:.2f}>{b_all:.2f}, "
        f"positive-only {b_pos:.2f}>{a_pos:.2f}",
    )


def test_criterion_10_geval_harness():
    library = TemplateLibrary.load_default()

    class ScriptedJudge:
        def __init__(self, texts):
            self.texts = list(texts)
            self.calls = 0

        def complete(self, request):
            from psylens.gateway import CompletionResult, Usage

            text = self.texts[self.calls]
            self.calls += 1
            return CompletionResult(text=text, model_id=request.model_id, usage=Usage())

    # ranges respected: fluency 9 is dropped and counted, coherence parses all
    fluency = g_eval(
        "cand", "ref", GEvalDimension.FLUENCY, ScriptedJudge(["9", "3", "2"]),
        library.get("geval_fluency"), model_id="judge", n_samples=3,
    )
    assert fluency.dropped == 1
    assert fluency.samples == (3, 2)
    assert fluency.score == pytest.approx(2.5)

    coherence = g_eval(
        "cand", "ref", GEvalDimension.COHERENCE, ScriptedJudge(["5", "4", "5"]),
        library.get("geval_coherence"), model_id="judge", n_samples=3,
    )
    assert coherence.score == pytest.approx(14 / 3)
    lo, hi = GEvalDimension.COHERENCE.score_range
    assert all(lo <= s <= hi for s in coherence.samples)

    maxed = GEvalScore(coherence=5, consistency=5, fluency=3, relevance=5)
    assert maxed.overall == 4.5
    blended = GEvalScore(coherence=4.0, consistency=4.5, fluency=2.0, relevance=4.0)
    assert blended.overall == pytest.approx((4.0 + 4.5 + 2.0 + 4.0) / 4, abs=1e-15)
    report(10, "judge ranges 5/5/3/5 enforced, overall is the dimension mean, (5,5,3,5) -> 4.5")


@pytest.mark.live
def test_criterion_11_live_smoke(bundle):
    if os.environ.get("PSYLENS_LIVE_SMOKE") != "1":
        pytest.skip("live smoke test disabled (set PSYLENS_LIVE_SMOKE=1 with credentials)")
    from psylens.corpus import Speaker, Transcript, Utterance, segment_utterance_pairs
    from psylens.gateway import Gateway, HttpBackend
    from psylens.promptkit import parse_symptom_response, render_zero_shot_symptom_prompt

    transcript = Transcript(
        participant_id="SMOKE",
        utterances=(
            Utterance(0, Speaker.INTERVIEWER, "How have you been sleeping lately?"),
            Utterance(1, Speaker.PARTICIPANT, "I cannot fall asleep before dawn and I jump at every noise."),
        ),
    )
    segment = segment_utterance_pairs(transcript)[0]
    gateway = Gateway(HttpBackend(), mode="live")
    request = render_zero_shot_symptom_prompt(
        segment, bundle.taxonomy, TemplateLibrary.load_default().get("zero_shot_symptom"),
        model_id=os.environ.get("PSYLENS_SMOKE_MODEL", "gpt-4-turbo"),
        temperature=0.0, request_tag="smoke",
    )
    start = time.perf_counter()
    result = gateway.complete(request)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    predictions = parse_symptom_response(result.text, bundle.taxonomy)
    assert isinstance(predictions, list)
    report(11, f"live zero-shot request parsed into {len(predictions)} predictions in {elapsed:.1f}s")
