"""Export the server's OpenAPI description to docs/openapi.json.

Run from the repo root after building the sample city data directory:

    python3 scripts/export_openapi.py [data_dir]
"""

from __future__ import annotations

import json
import pathlib
import sys
import tempfile

REPO = pathlib.Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))


def main() -> None:
    from citytwin.engine import TwinEngine
    from citytwin.ingest import Ingestor, build_tiles
    from citytwin.server import create_app

    if len(sys.argv) > 1:
        data_dir = pathlib.Path(sys.argv[1])
        engine = TwinEngine(data_dir)
    else:
        tmp = tempfile.mkdtemp(prefix="citytwin-openapi-")
        ing = Ingestor(tmp)
        try:
            ing.ingest(REPO / "sample_data" / "manifest.yaml")
        finally:
            ing.close()
        build_tiles(tmp)
        engine = TwinEngine(tmp)
    try:
        doc = create_app(engine).openapi()
    finally:
        engine.close()
    out = REPO / "docs" / "openapi.json"
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
