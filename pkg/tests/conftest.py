from __future__ import annotations

import pathlib

import pytest

REPO = pathlib.Path(__file__).resolve().parents[1]
SAMPLE = REPO / "sample_data"


@pytest.fixture(scope="session")
def sample_data_dir(tmp_path_factory) -> pathlib.Path:
    """Sample city ingested and built once per test session."""
    from citytwin.ingest import Ingestor, build_tiles

    data = tmp_path_factory.mktemp("ct_data")
    ingestor = Ingestor(data)
    try:
        report = ingestor.ingest(SAMPLE / "manifest.yaml")
    finally:
        ingestor.close()
    assert report.exit_code() == 0, report.summary()
    count, skipped = build_tiles(data)
    assert count > 0 and not skipped, skipped
    return data


@pytest.fixture(scope="session")
def engine(sample_data_dir):
    from citytwin.engine import TwinEngine

    eng = TwinEngine(sample_data_dir)
    yield eng
    eng.close()


@pytest.fixture(scope="session")
def client(engine):
    from fastapi.testclient import TestClient

    from citytwin.server import create_app

    return TestClient(create_app(engine, token="test-token"))
