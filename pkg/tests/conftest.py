from __future__ import annotations

from pathlib import Path

import pytest

from psylens.corpus import CorpusBundle, CorpusPaths, load_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_corpus_root() -> Path:
    root = FIXTURES / "corpus"
    if not root.exists():
        pytest.skip("fixture corpus missing; run scripts/build_fixture_corpus.py")
    return root


@pytest.fixture(scope="session")
def bundle(fixture_corpus_root: Path) -> CorpusBundle:
    return load_corpus(CorpusPaths(root=fixture_corpus_root))


@pytest.fixture(scope="session")
def replay_store_dir() -> Path:
    store = FIXTURES / "replay_store"
    if not store.exists():
        pytest.skip("replay store missing; run scripts/build_replay_store.py")
    return store


@pytest.fixture(scope="session")
def replay_config_path() -> Path:
    path = FIXTURES / "configs" / "replay_run.json"
    if not path.exists():
        pytest.skip("replay config missing; run scripts/build_replay_store.py")
    return path
