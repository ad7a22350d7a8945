"""Exercise a running server end to end: tiles, features, series, what-if.

    python3 scripts/demo_crawl.py http://127.0.0.1:8080

Pushes the sample observation batch, then walks every endpoint family and
prints a one-line summary per call.
"""

from __future__ import annotations

import json
import pathlib
import sys
import urllib.parse
import urllib.request

REPO = pathlib.Path(__file__).resolve().parents[1]
TOKEN = "citytwin-dev-token"


def call(base: str, path: str, body: bytes | None = None, token: str | None = None):
    req = urllib.request.Request(base + path, data=body)
    if token:
        req.add_header("Authorization", f"Bearer {token}")
    with urllib.request.urlopen(req, timeout=10) as r:
        data = r.read()
        print(f"{r.status} {path} ({len(data)} bytes, {r.headers.get('Content-Type')})")
        return data


def main() -> None:
    base = sys.argv[1] if len(sys.argv) > 1 else "http://127.0.0.1:8080"
    sample = REPO / "sample_data"

    obs = (sample / "observations.ndjson").read_bytes()
    call(base, "/observations", body=obs, token=TOKEN)

    call(base, "/healthz")
    doc = json.loads(call(base, "/features?bbox=11.23,43.75,11.28,43.79&limit=5"))
    print(f"  -> {len(doc['features'])} features")
    call(base, "/features/dev-00/last?metric=airQualityPM10")
    call(base, "/features/dev-00/series?metric=airQualityPM10")
    call(base, "/traffic?bbox=11.23,43.75,11.28,43.79")
    call(base, "/sun?lat=43.7696&lon=11.2558&at=2026-06-21T10:30:00Z")

    # one building tile discovered through the z16 ancestor
    tile_doc = json.loads(call(base, "/tiles/buildings/16/34817/23890"))
    if tile_doc["buildings"]:
        bid = tile_doc["buildings"][0]["id"]
        call(base, f"/buildings/{bid}/models")
        call(base, f"/models/{bid}.lod1")
    call(base, "/tiles/dtm/15/17408/11945.png")
    call(base, "/tiles/heatmap/pm10/15/17408/11945.png")
    call(base, "/tiles/heatmap/temperature/15/17408/11945.png")

    golden = json.loads((sample / "golden_scenario.json").read_text())
    created = json.loads(
        call(base, "/whatif/scenarios", body=json.dumps({"areas": golden["areas"]}).encode())
    )
    frm = ",".join(str(c) for c in golden["route_from"])
    to = ",".join(str(c) for c in golden["route_to"])
    q = urllib.parse.urlencode({"from": frm, "to": to, "scenario": created["id"]})
    compare = json.loads(call(base, f"/whatif/compare?{q}"))
    print(
        "  -> baseline %.1fs vs scenario %.1fs"
        % (
            compare["baseline"]["properties"]["cost_s"],
            compare["scenario"]["properties"]["cost_s"],
        )
    )


if __name__ == "__main__":
    main()
