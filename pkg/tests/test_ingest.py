"""Manifest ingestion, pipeline determinism, CLI surface, and a live serve."""

from __future__ import annotations

import hashlib
import json
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

from citytwin.cli import main as cli_main
from citytwin.crs import wgs84_to_epsg3003
from citytwin.ingest import Ingestor, build_tiles, load_manifest, IngestError

from conftest import SAMPLE


def run_pipeline(data_dir: Path, manifest: Path) -> None:
    ing = Ingestor(data_dir)
    try:
        report = ing.ingest(manifest)
    finally:
        ing.close()
    assert not report.fatal, report.summary()
    build_tiles(data_dir)


def tree_digest(root: Path) -> dict[str, str]:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestManifest:
    def test_sample_manifest_loads(self):
        datasets = load_manifest(SAMPLE / "manifest.yaml")
        kinds = [d["kind"] for d in datasets]
        assert kinds.count("heatmap") == 2
        assert "footprints" in kinds and "roads" in kinds

    def test_unknown_kind_rejected(self, tmp_path):
        bad = tmp_path / "m.yaml"
        bad.write_text("datasets:\n  - kind: sorcery\n    path: x\n")
        with pytest.raises(IngestError):
            load_manifest(bad)


class TestIngestReports:
    def test_degenerate_footprint_skipped_with_reason(self, tmp_path):
        src = tmp_path / "fp.geojson"
        collection = {
            "type": "FeatureCollection",
            "features": [
                _square("ok-1", 11.2550, 43.7690),
                _square("ok-2", 11.2560, 43.7690),
                {
                    "type": "Feature",
                    "geometry": {"type": "Polygon", "coordinates": [[[11.0, 43.0], [11.0, 43.0], [11.0, 43.0], [11.0, 43.0]]]},
                    "properties": {"id": "degenerate"},
                },
            ],
        }
        src.write_text(json.dumps(collection))
        dtm = tmp_path / "dtm.asc"
        rows = "\n".join(" ".join("50.0" for _ in range(9)) for _ in range(9))
        dtm.write_text(
            "ncols 9\nnrows 9\nxllcenter 11.2540\nyllcenter 43.7680\ncellsize_m 30.0\n"
            f"nodata_value -9999\n{rows}\n"
        )
        manifest = tmp_path / "m.yaml"
        manifest.write_text(
            "datasets:\n"
            "  - kind: dtm\n    path: dtm.asc\n"
            f"  - kind: footprints\n    path: {src.name}\n"
        )
        ing = Ingestor(tmp_path / "data")
        try:
            report = ing.ingest(manifest)
        finally:
            ing.close()
        # degenerate ring is journaled as a polygon feature but dies at build
        assert report.exit_code() in (0, 1)
        count, skipped = build_tiles(tmp_path / "data")
        assert count == 2
        assert [s[0] for s in skipped] == ["degenerate"]

    def test_rerun_is_idempotent(self, tmp_path):
        data = tmp_path / "data"
        run_pipeline(data, SAMPLE / "manifest.yaml")
        first = tree_digest(data / "buildings")
        ing = Ingestor(data)
        try:
            report = ing.ingest(SAMPLE / "manifest.yaml")
        finally:
            ing.close()
        assert report.exit_code() == 0
        build_tiles(data)
        assert tree_digest(data / "buildings") == first

    def test_epsg3003_vector_sources_are_converted(self, tmp_path):
        lon, lat = 11.2558, 43.7696
        e, n = wgs84_to_epsg3003(lon, lat)
        src = {
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [e, n]},
                    "properties": {"id": "p1", "category": "Service/Test"},
                }
            ],
        }
        (tmp_path / "f.geojson").write_text(json.dumps(src))
        (tmp_path / "m.yaml").write_text(
            "datasets:\n  - kind: features\n    path: f.geojson\n    crs: EPSG:3003\n"
        )
        data = tmp_path / "data"
        ing = Ingestor(data)
        try:
            ing.ingest(tmp_path / "m.yaml")
        finally:
            ing.close()
        from citytwin.store import FeatureStore

        store = FeatureStore(data / "journal.ndjson")
        got = store.get_feature("p1").geometry["coordinates"]
        store.close()
        assert got[0] == pytest.approx(lon, abs=1e-7)
        assert got[1] == pytest.approx(lat, abs=1e-7)

    def test_heights_follow_dsm_minus_dtm(self, sample_data_dir):
        doc = None
        for p in sorted((sample_data_dir / "buildings" / "18").rglob("*.json")):
            entry = json.loads(p.read_text())
            if "height" not in entry["attributes"]:
                doc = entry
                break
        assert doc is not None
        # sample DSM boxes sit 5..24 m above the DTM
        assert 3.0 < doc["height"] < 30.0


class TestPipelineDeterminism:
    def test_two_builds_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_pipeline(a, SAMPLE / "manifest.yaml")
        run_pipeline(b, SAMPLE / "manifest.yaml")
        assert tree_digest(a) == tree_digest(b)


def _square(fid: str, lon: float, lat: float, size_deg: float = 4e-4) -> dict:
    return {
        "type": "Feature",
        "geometry": {
            "type": "Polygon",
            "coordinates": [
                [
                    [lon, lat],
                    [lon + size_deg, lat],
                    [lon + size_deg, lat + size_deg],
                    [lon, lat + size_deg],
                    [lon, lat],
                ]
            ],
        },
        "properties": {"id": fid, "height": 9.0},
    }


class TestCli:
    def test_help_lists_commands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli_main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("ingest", "build", "serve"):
            assert cmd in out

    def test_build_without_data_dir_fails_cleanly(self, tmp_path, capsys):
        assert cli_main(["build", "--tiles", "--data-dir", str(tmp_path / "missing")]) == 2

    def test_serve_missing_data_dir_is_fatal(self, tmp_path, capsys):
        assert cli_main(["serve", "--data-dir", str(tmp_path / "missing")]) == 2

    def test_ingest_cli_exit_codes(self, tmp_path):
        m = tmp_path / "m.yaml"
        m.write_text("datasets: []\n")
        assert cli_main(["ingest", str(m), "--data-dir", str(tmp_path / "d")]) == 0


def test_serve_answers_over_a_real_socket(sample_data_dir):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    proc = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "citytwin.cli",
            "serve",
            "--addr",
            f"127.0.0.1:{port}",
            "--data-dir",
            str(sample_data_dir),
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
    )
    try:
        deadline = time.time() + 30
        last_err = None
        while time.time() < deadline:
            try:
                with urllib.request.urlopen(f"http://127.0.0.1:{port}/healthz", timeout=2) as r:
                    assert r.status == 200
                    break
            except Exception as exc:  # noqa: BLE001 - retry until the server is up
                last_err = exc
                time.sleep(0.3)
        else:
            raise AssertionError(f"server never came up: {last_err}")
        import citytwin.tiles as tiles
        from citytwin.engine import TwinEngine

        eng = TwinEngine(sample_data_dir)
        tile = tiles.tile_for_point(eng.dtm.grids[0].bbox().center(), 15)
        eng.close()
        with urllib.request.urlopen(
            f"http://127.0.0.1:{port}/tiles/dtm/{tile.z}/{tile.x}/{tile.y}.png", timeout=5
        ) as r:
            assert r.status == 200
            assert r.headers["Content-Type"] == "image/png"
            assert r.read()[:8] == b"\x89PNG\r\n\x1a\n"
    finally:
        proc.terminate()
        proc.wait(timeout=10)
