from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

import psylens.cli as cli
from psylens.gateway import Gateway, MockBackend
from psylens.mockllm import MockInterviewLLM
from psylens.promptkit import TemplateLibrary


class TestTemplateDirOverride:
    def test_load_dir_overrides_named_templates(self, tmp_path):
        (tmp_path / "stressor.txt").write_text(
            "[system]\ncustom stressor instructions\n[user]\n$chunk\n"
        )
        library = TemplateLibrary.load_dir(tmp_path)
        assert library.get("stressor").system_text == "custom stressor instructions"
        # untouched names still come from the packaged defaults
        assert "symptom" in library.get("zero_shot_symptom").system_text.lower()


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def mock_gateway_factory(bundle):
    responder = MockInterviewLLM(bundle)

    def factory(backend_settings):
        return Gateway(
            MockBackend(responder), mode="live", embed_model_id=backend_settings.embed_model
        )

    return factory


@pytest.fixture()
def patched_gateway(monkeypatch, mock_gateway_factory):
    monkeypatch.setattr(cli, "build_gateway", mock_gateway_factory)


class TestValidate:
    def test_clean_fixtures_exit_zero(self, runner, fixture_corpus_root):
        result = runner.invoke(cli.main, ["validate", str(fixture_corpus_root)])
        assert result.exit_code == 0, result.output
        assert "FAIL" not in result.output
        assert "corpus totals" in result.output

    def test_out_of_range_span_exits_one_naming_file(self, runner, fixture_corpus_root, tmp_path):
        broken = tmp_path / "corpus"
        shutil.copytree(fixture_corpus_root, broken)
        annotation_file = broken / "annotations" / "P3.json"
        doc = json.loads(annotation_file.read_text())
        doc["annotations"][0]["end_char"] = 10_000
        annotation_file.write_text(json.dumps(doc))
        result = runner.invoke(cli.main, ["validate", str(broken)])
        assert result.exit_code == 1
        assert "P3.json" in result.output
        assert "end_char" in result.output

    def test_unknown_symptom_id_exits_one(self, runner, fixture_corpus_root, tmp_path):
        broken = tmp_path / "corpus"
        shutil.copytree(fixture_corpus_root, broken)
        annotation_file = broken / "annotations" / "P9.json"
        doc = json.loads(annotation_file.read_text())
        doc["annotations"][0]["symptom_id"] = "made_up_symptom"
        annotation_file.write_text(json.dumps(doc))
        result = runner.invoke(cli.main, ["validate", str(broken)])
        assert result.exit_code == 1
        assert "made_up_symptom" in result.output


class TestRun:
    def test_dry_run_renders_prompts_without_completions(
        self, runner, replay_config_path, tmp_path, monkeypatch
    ):
        def no_gateway(backend_settings):
            raise AssertionError("dry run must not construct a gateway")

        monkeypatch.setattr(cli, "build_gateway", no_gateway)
        out = tmp_path / "dry"
        result = runner.invoke(
            cli.main, ["run", str(replay_config_path), "--out", str(out), "--dry-run"]
        )
        assert result.exit_code == 0, result.output
        assert "no completions issued" in result.output
        rendered = list((out / "prompts").glob("*.txt"))
        assert {p.stem for p in rendered} == {"fine_tuning", "in_context", "zero_shot", "zero_shot_rag"}
        assert "Interviewer:" in rendered[0].read_text()

    def test_live_mode_without_key_fails_fast_and_clean(
        self, runner, replay_config_path, tmp_path, monkeypatch
    ):
        monkeypatch.delenv("PSYLENS_API_KEY", raising=False)
        out = tmp_path / "never"
        result = runner.invoke(
            cli.main,
            ["run", str(replay_config_path), "--out", str(out), "--backend", "live"],
        )
        assert result.exit_code == 1
        assert "PSYLENS_API_KEY" in result.output
        assert not out.exists()  # no partial run directory

    def test_replay_run_and_report(self, runner, replay_config_path, replay_store_dir, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(
            cli.main, ["run", str(replay_config_path), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        for name in (
            "metrics.json", "metrics.csv", "distance_histogram.txt",
            "symptom_metrics.txt", "summary_eval.txt", "scope_comparison.txt",
        ):
            assert (out / "reports" / name).exists()

        report = runner.invoke(cli.main, ["report", str(out)])
        assert report.exit_code == 0, report.output
        assert "Recall mid-token distance" in report.output
        assert "mean (SD)" in report.output

        positive = runner.invoke(cli.main, ["report", str(out), "--scope", "positive"])
        assert positive.exit_code == 0
        assert "positive segments only" in positive.output

    def test_report_on_incomplete_dir_fails(self, runner, tmp_path):
        result = runner.invoke(cli.main, ["report", str(tmp_path)])
        assert result.exit_code == 1
        assert "metrics" in result.output

    def test_single_trial_run_renders_sd_absent(
        self, runner, replay_config_path, replay_store_dir, tmp_path
    ):
        out = tmp_path / "run1trial"
        result = runner.invoke(
            cli.main, ["run", str(replay_config_path), "--out", str(out), "--trials", "1"]
        )
        assert result.exit_code == 0, result.output
        metrics = json.loads((out / "reports" / "metrics.json").read_text())
        accuracy = metrics["configs"]["zero_shot"]["symptoms"]["all"]["accuracy"]
        assert accuracy["sd"] is None
        table = (out / "reports" / "symptom_metrics.txt").read_text()
        zero_shot_row = next(l for l in table.splitlines() if "[zero_shot]" in l)
        assert "(" not in zero_shot_row  # no (SD) parenthetical for one trial

    def test_degraded_run_exits_two(
        self, runner, replay_config_path, tmp_path, monkeypatch, bundle
    ):
        from psylens.errors import BackendError

        responder = MockInterviewLLM(bundle)

        class FlakyBackend(MockBackend):
            def complete(self, request):
                if request.request_tag.startswith("symptom/") and "pair-00" in request.request_tag:
                    raise BackendError("transient outage")
                return super().complete(request)

        monkeypatch.setattr(
            cli, "build_gateway",
            lambda backend_settings: Gateway(
                FlakyBackend(responder), mode="live",
                embed_model_id=backend_settings.embed_model,
            ),
        )
        out = tmp_path / "degraded"
        result = runner.invoke(
            cli.main, ["run", str(replay_config_path), "--out", str(out), "--trials", "1"]
        )
        assert result.exit_code == 2, result.output
        assert "degraded" in result.output

    def test_replay_miss_exits_three(self, runner, replay_config_path, tmp_path):
        config = json.loads(replay_config_path.read_text())
        config["corpus"]["root"] = str((replay_config_path.parent / "../corpus").resolve())
        config["backend"]["replay_store"] = str(tmp_path / "empty_store")
        config["rag"]["reference_doc"] = str(
            (replay_config_path.parent / "../corpus/reference/trauma_reference.txt").resolve()
        )
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        result = runner.invoke(
            cli.main, ["run", str(config_path), "--out", str(tmp_path / "run")]
        )
        assert result.exit_code == 3
        assert "replay fixture missing" in result.output


class TestFineTuneCommand:
    def test_replayed_grid_prints_winner_and_cells(
        self, runner, replay_config_path, replay_store_dir, tmp_path
    ):
        out = tmp_path / "ft"
        result = runner.invoke(
            cli.main, ["finetune", str(replay_config_path), "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert "best: epochs=5 lr=default" in result.output
        assert result.output.count("val_f1=") == 2  # one line per grid cell
        grid_doc = json.loads((out / "grid_result.json").read_text())
        assert grid_doc["best"] == {"epochs": 5, "learning_rate_multiplier": None}
        assert len(grid_doc["cells"]) == 2
        training = (out / "training.jsonl").read_text().splitlines()
        assert len(training) == 20  # every train-split segment, negatives included

    def test_training_file_round_trips(self, runner, replay_config_path, replay_store_dir, tmp_path):
        from psylens.gateway import parse_finetune_file

        out = tmp_path / "ft"
        runner.invoke(cli.main, ["finetune", str(replay_config_path), "--out", str(out)])
        pairs = parse_finetune_file((out / "training.jsonl").read_text())
        assert all(segment.strip() for segment, _ in pairs)
        assert any(response == "NONE" for _, response in pairs)


class TestRagIndexCommand:
    def test_reindex_is_byte_identical(
        self, runner, replay_config_path, tmp_path, patched_gateway
    ):
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        for target in (first, second):
            result = runner.invoke(
                cli.main, ["rag-index", str(replay_config_path), "--out", str(target)]
            )
            assert result.exit_code == 0, result.output
        assert first.read_bytes() == second.read_bytes()

    def test_changed_chunk_config_rejected_on_load(
        self, runner, replay_config_path, tmp_path, patched_gateway
    ):
        from psylens.errors import ConfigError
        from psylens.rag import chunking_fingerprint, load_index

        index_path = tmp_path / "index.json"
        runner.invoke(cli.main, ["rag-index", str(replay_config_path), "--out", str(index_path)])
        stale = chunking_fingerprint(999, 80, ["\n\n"], "embed-sim")
        with pytest.raises(ConfigError, match="re-index"):
            load_index(index_path, stale)

    def test_empty_reference_doc_rejected(
        self, runner, replay_config_path, tmp_path, patched_gateway
    ):
        config = json.loads(replay_config_path.read_text())
        empty_doc = tmp_path / "empty.txt"
        empty_doc.write_text("   \n")
        config["rag"]["reference_doc"] = str(empty_doc)
        config["corpus"]["root"] = str(replay_config_path.parent / "../corpus")
        config["backend"]["replay_store"] = str(replay_config_path.parent / "../replay_store")
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        result = runner.invoke(
            cli.main, ["rag-index", str(config_path), "--out", str(tmp_path / "i.json")]
        )
        assert result.exit_code == 1
        assert "empty" in result.output
