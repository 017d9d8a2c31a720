#!/usr/bin/env python3
"""Record the replay store for the fixture corpus.

Runs the real CLI paths (run + finetune) against the deterministic mock
provider in record mode, so the committed store matches exactly the requests
a replay-mode invocation of the same config will make.
"""

from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))
sys.path.insert(0, str(REPO / "tests"))

from click.testing import CliRunner  # noqa: E402

import psylens.cli as cli  # noqa: E402
from psylens.corpus import CorpusPaths, load_corpus  # noqa: E402
from psylens.gateway import Gateway, MockBackend, ReplayStore  # noqa: E402
from psylens.mockllm import MockInterviewLLM  # noqa: E402

FIXTURES = REPO / "tests" / "fixtures"
CONFIG = FIXTURES / "configs" / "replay_run.json"
STORE = FIXTURES / "replay_store"


def main() -> None:
    if STORE.exists():
        shutil.rmtree(STORE)
    bundle = load_corpus(CorpusPaths(root=FIXTURES / "corpus"))
    responder = MockInterviewLLM(bundle)

    def recording_gateway(backend_settings):
        return Gateway(
            MockBackend(responder),
            mode="record",
            store=ReplayStore(backend_settings.replay_store),
            embed_model_id=backend_settings.embed_model,
        )

    original = cli.build_gateway
    cli.build_gateway = recording_gateway
    try:
        runner = CliRunner()
        with tempfile.TemporaryDirectory() as tmp:
            result = runner.invoke(
                cli.main,
                ["run", str(CONFIG), "--out", f"{tmp}/run", "--backend", "record"],
                catch_exceptions=False,
            )
            if result.exit_code != 0:
                raise SystemExit(f"recording run failed:\n{result.output}")
            print(result.output.strip())

            result = runner.invoke(
                cli.main,
                ["finetune", str(CONFIG), "--out", f"{tmp}/ft", "--backend", "record"],
                catch_exceptions=False,
            )
            if result.exit_code != 0:
                raise SystemExit(f"recording finetune failed:\n{result.output}")
            print(result.output.strip())
    finally:
        cli.build_gateway = original

    count = ReplayStore(STORE).count()
    print(f"replay store recorded at {STORE} ({count} responses)")


if __name__ == "__main__":
    main()
