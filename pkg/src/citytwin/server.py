"""HTTP distribution surface.

Every response is deterministic for a fixed store state: JSON is serialized
canonically (sorted keys, no whitespace) and tile endpoints carry strong
content-hash validators honoring If-None-Match.  Reads are open; writes
require the static bearer token (env CITYTWIN_TOKEN).

Endpoints (also described by the OpenAPI document at /openapi.json and the
committed copy in docs/):

    GET  /tiles/buildings/{z}/{x}/{y}
    GET  /tiles/dtm/{z}/{x}/{y}.png
    GET  /tiles/heatmap/{name}/{z}/{x}/{y}.png      (?frame=i; animated -> GIF)
    GET  /wms                                        (GetMap shim, heatmaps)
    GET  /features?bbox=&categories=&limit=
    GET  /features/{id}
    GET  /features/{id}/series?metric=&from=&to=
    GET  /features/{id}/last?metric=
    POST /observations                               (NDJSON, bearer token)
    POST /whatif/scenarios
    GET  /whatif/route?from=&to=&scenario=
    GET  /whatif/compare?from=&to=&scenario=
    GET  /traffic?bbox=
    GET  /sun?lat=&lon=&at=
    GET  /buildings/{id}/models
    GET  /models/{blob_id}
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from fastapi import FastAPI, Header, Query, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .compositing import apply_colormap, to_gif_bytes, to_png_bytes
from .engine import EngineError, TwinEngine
from .geo import GeoBBox, GeoPoint
from .store import NotFoundError, StoreError, arrow_period, format_rfc3339, parse_observation_line, parse_rfc3339
from .sun import sun_position
from .terrain import EmptyTileError, encode_tile
from .tiles import BUILDING_ZOOM, TileId, TilePyramidError, merc_x_to_lon, merc_y_to_lat
from .whatif import BlockedArea, RoutingError

DEFAULT_TOKEN = "citytwin-dev-token"
ENV_TOKEN = "CITYTWIN_TOKEN"
ENV_DATA_DIR = "CITYTWIN_DATA_DIR"
ENV_ADDR = "CITYTWIN_ADDR"
ENV_STATIC = "CITYTWIN_STATIC"


class ApiError(Exception):
    """Maps one error path to one (status, code) pair."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def canonical_json(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def _etag(body: bytes) -> str:
    return '"sha256:' + hashlib.sha256(body).hexdigest() + '"'


def _conditional(body: bytes, media_type: str, if_none_match: str | None) -> Response:
    tag = _etag(body)
    if if_none_match is not None:
        candidates = [c.strip().removeprefix("W/") for c in if_none_match.split(",")]
        if tag in candidates or "*" in candidates:
            return Response(status_code=304, headers={"ETag": tag})
    return Response(content=body, media_type=media_type, headers={"ETag": tag})


def _parse_bbox(text: str) -> GeoBBox:
    try:
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError
        return GeoBBox(parts[0], parts[1], parts[2], parts[3])
    except ValueError as exc:
        raise ApiError(400, "bad_bbox", f"bbox must be minLon,minLat,maxLon,maxLat: {text!r}") from exc


def _parse_lonlat(text: str, name: str) -> GeoPoint:
    try:
        lon, lat = (float(p) for p in text.split(","))
        return GeoPoint(lon, lat)
    except ValueError as exc:
        raise ApiError(400, "bad_point", f"{name} must be lon,lat: {text!r}") from exc


def _feature_json(f) -> dict:
    return {
        "type": "Feature",
        "id": f.id,
        "geometry": f.geometry,
        "properties": {"category": f.category, **f.attributes},
    }


def create_app(engine: TwinEngine, *, token: str | None = None) -> FastAPI:
    app = FastAPI(title="citytwin", version="0.1.0", docs_url=None, redoc_url=None)
    app.state.engine = engine
    write_token = token if token is not None else os.environ.get(ENV_TOKEN, DEFAULT_TOKEN)

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    def _require_token(authorization: str | None) -> None:
        if authorization != f"Bearer {write_token}":
            raise ApiError(401, "unauthorized", "missing or invalid bearer token")

    # -- tiles -------------------------------------------------------------

    @app.get("/tiles/buildings/{z}/{x}/{y}")
    def building_tile(z: int, x: int, y: int, if_none_match: str | None = Header(default=None)):
        try:
            tile = TileId(z, x, y)
            entries = engine.buildings_for_tile(tile)
        except TilePyramidError as exc:
            raise ApiError(400, "bad_tile", str(exc)) from exc
        except EngineError as exc:
            raise ApiError(400, "bad_zoom_gap", str(exc)) from exc
        body = canonical_json(
            {
                "tile": str(tile),
                "zoom_native": BUILDING_ZOOM,
                "buildings": [
                    {
                        **e.to_json(),
                        "model": f"{e.id}.lod1",
                        "models": [f"{e.id}.{v}" for v in e.variants],
                    }
                    for e in entries
                ],
            }
        )
        return _conditional(body, "application/json", if_none_match)

    @app.get("/tiles/dtm/{z}/{x}/{y}.png")
    def dtm_tile(z: int, x: int, y: int, if_none_match: str | None = Header(default=None)):
        try:
            rgb = encode_tile(engine.dtm, TileId(z, x, y))
        except TilePyramidError as exc:
            raise ApiError(400, "bad_tile", str(exc)) from exc
        except EmptyTileError as exc:
            raise ApiError(404, "empty_tile", str(exc)) from exc
        return _conditional(to_png_bytes(rgb, rgb_only=True), "image/png", if_none_match)

    def _heatmap_pixels(name: str, tile: TileId, frame_index: int):
        import numpy as np

        grid = engine.heatmap_frame(name, frame_index)
        n = 1 << tile.z
        size = 256
        lons = np.array([merc_x_to_lon((tile.x + (i + 0.5) / size) / n) for i in range(size)])
        lats = np.array([merc_y_to_lat((tile.y + (i + 0.5) / size) / n) for i in range(size)])
        lon_grid, lat_grid = np.meshgrid(lons, lats)
        values = grid.sample_many(lon_grid, lat_grid)
        return apply_colormap(values, engine.heatmap_colormap(name))

    @app.get("/tiles/heatmap/{name}/{z}/{x}/{y}.png")
    def heatmap_tile(
        name: str,
        z: int,
        x: int,
        y: int,
        frame: int | None = Query(default=None),
        if_none_match: str | None = Header(default=None),
    ):
        try:
            desc = engine.store.get_heatmap(name)
            tile = TileId(z, x, y)
        except NotFoundError as exc:
            raise ApiError(404, "heatmap_not_found", str(exc)) from exc
        except TilePyramidError as exc:
            raise ApiError(400, "bad_tile", str(exc)) from exc
        if frame is not None:
            if not (0 <= frame < desc.frame_count):
                raise ApiError(400, "bad_frame", f"frame {frame} outside 0..{desc.frame_count - 1}")
            body = to_png_bytes(_heatmap_pixels(name, tile, frame))
            return _conditional(body, "image/png", if_none_match)
        if not desc.animated:
            body = to_png_bytes(_heatmap_pixels(name, tile, 0))
            return _conditional(body, "image/png", if_none_match)
        frames = [_heatmap_pixels(name, tile, i) for i in range(desc.frame_count)]
        body = to_gif_bytes(frames, desc.frame_delay_cs)
        return _conditional(body, "image/gif", if_none_match)

    @app.get("/wms")
    def wms(
        request: str = Query(default="GetMap"),
        layers: str = Query(default=""),
        bbox: str = Query(default=""),
        width: int = Query(default=256),
        height: int = Query(default=256),
        frame: int = Query(default=0),
        if_none_match: str | None = Header(default=None),
    ):
        """Minimal WMS GetMap shim for heatmap layers (layers=heatmap:<name>)."""
        import numpy as np

        if request != "GetMap":
            raise ApiError(400, "bad_wms_request", f"only GetMap is supported, got {request!r}")
        if not layers.startswith("heatmap:"):
            raise ApiError(400, "bad_wms_layer", "layers must be heatmap:<name>")
        name = layers.split(":", 1)[1]
        box = _parse_bbox(bbox)
        if not (1 <= width <= 2048 and 1 <= height <= 2048):
            raise ApiError(400, "bad_wms_size", "width/height must be in 1..2048")
        try:
            grid = engine.heatmap_frame(name, frame)
        except KeyError as exc:
            raise ApiError(404, "heatmap_not_found", f"heatmap {name!r} not found") from exc
        except IndexError as exc:
            raise ApiError(400, "bad_frame", f"frame {frame} out of range") from exc
        lons = np.linspace(box.min_lon, box.max_lon, width)
        lats = np.linspace(box.max_lat, box.min_lat, height)
        lon_grid, lat_grid = np.meshgrid(lons, lats)
        img = apply_colormap(grid.sample_many(lon_grid, lat_grid), engine.heatmap_colormap(name))
        return _conditional(to_png_bytes(img), "image/png", if_none_match)

    # -- features and series --------------------------------------------------

    @app.get("/features")
    def features(
        bbox: str = Query(...),
        categories: str | None = Query(default=None),
        limit: int | None = Query(default=None),
    ):
        box = _parse_bbox(bbox)
        cats = [c for c in categories.split(",") if c] if categories else None
        found = engine.store.query_bbox(box, cats, limit)
        body = canonical_json(
            {"type": "FeatureCollection", "features": [_feature_json(f) for f in found]}
        )
        return Response(content=body, media_type="application/geo+json")

    @app.get("/features/{feature_id}")
    def feature(feature_id: str):
        try:
            f = engine.store.get_feature(feature_id)
        except NotFoundError as exc:
            raise ApiError(404, "feature_not_found", str(exc)) from exc
        return Response(content=canonical_json(_feature_json(f)), media_type="application/geo+json")

    @app.get("/features/{feature_id}/series")
    def series(
        feature_id: str,
        metric: str = Query(...),
        t_from: str | None = Query(default=None, alias="from"),
        t_to: str | None = Query(default=None, alias="to"),
    ):
        try:
            observations = engine.store.time_series(
                feature_id,
                metric,
                parse_rfc3339(t_from) if t_from else None,
                parse_rfc3339(t_to) if t_to else None,
            )
        except NotFoundError as exc:
            raise ApiError(404, "feature_not_found", str(exc)) from exc
        except ValueError as exc:
            raise ApiError(400, "bad_timestamp", str(exc)) from exc
        body = canonical_json(
            {"device": feature_id, "metric": metric, "observations": [o.to_json() for o in observations]}
        )
        return Response(content=body, media_type="application/json")

    @app.get("/features/{feature_id}/last")
    def last(feature_id: str, metric: str = Query(...)):
        try:
            o = engine.store.last_value(feature_id, metric)
        except NotFoundError as exc:
            raise ApiError(404, "not_found", str(exc)) from exc
        return Response(content=canonical_json(o.to_json()), media_type="application/json")

    @app.post("/observations")
    async def ingest_observations(request: Request, authorization: str | None = Header(default=None)):
        _require_token(authorization)
        body = (await request.body()).decode("utf-8", errors="replace")
        accepted = 0
        rejected = []
        for i, line in enumerate(body.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                engine.store.ingest_observation(parse_observation_line(line))
                accepted += 1
            except (StoreError, NotFoundError) as exc:
                rejected.append({"line": i, "reason": str(exc)})
        return Response(
            content=canonical_json({"accepted": accepted, "rejected": rejected}),
            media_type="application/json",
        )

    # -- what-if ------------------------------------------------------------------

    def _route_feature(route) -> dict:
        return {
            "type": "Feature",
            "geometry": {
                "type": "LineString",
                "coordinates": [[x, y] for x, y in route.polyline],
            },
            "properties": {
                "elements": list(route.element_ids),
                "cost_s": route.cost_s,
                "length_m": route.length_m,
            },
        }

    def _map_routing_error(exc: RoutingError) -> ApiError:
        status = {
            "scenario_not_found": 404,
            "no_nearby_road": 404,
            "no_route": 422,
            "no_route_scenario": 422,
        }.get(exc.code, 400)
        return ApiError(status, exc.code, str(exc))

    @app.post("/whatif/scenarios")
    async def create_scenario(request: Request):
        try:
            doc = json.loads(await request.body())
            areas = []
            for a in doc.get("areas", []):
                if a.get("type") == "Polygon":
                    areas.append(
                        BlockedArea(polygon=tuple((c[0], c[1]) for c in a["coordinates"][0]))
                    )
                elif a.get("type") == "Point":
                    areas.append(
                        BlockedArea(
                            point=GeoPoint(a["coordinates"][0], a["coordinates"][1]),
                            radius_m=float(a.get("radius_m", 50.0)),
                        )
                    )
                else:
                    raise ApiError(400, "bad_area", f"unsupported area {a.get('type')!r}")
            scenario = engine.router.create_scenario(areas)
        except ApiError:
            raise
        except RoutingError as exc:
            raise _map_routing_error(exc) from exc
        except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise ApiError(400, "bad_scenario", f"malformed scenario body: {exc}") from exc
        return Response(
            content=canonical_json(
                {"id": scenario.id, "blocked_elements": sorted(scenario.blocked_elements)}
            ),
            media_type="application/json",
        )

    @app.get("/whatif/route")
    def whatif_route(
        frm: str = Query(..., alias="from"),
        to: str = Query(...),
        scenario: str | None = Query(default=None),
    ):
        try:
            route = engine.router.route(_parse_lonlat(frm, "from"), _parse_lonlat(to, "to"), scenario)
        except RoutingError as exc:
            raise _map_routing_error(exc) from exc
        return Response(content=canonical_json(_route_feature(route)), media_type="application/geo+json")

    @app.get("/whatif/compare")
    def whatif_compare(
        frm: str = Query(..., alias="from"),
        to: str = Query(...),
        scenario: str = Query(...),
    ):
        try:
            baseline, with_scenario = engine.router.compare(
                _parse_lonlat(frm, "from"), _parse_lonlat(to, "to"), scenario
            )
        except RoutingError as exc:
            raise _map_routing_error(exc) from exc
        return Response(
            content=canonical_json(
                {"baseline": _route_feature(baseline), "scenario": _route_feature(with_scenario)}
            ),
            media_type="application/json",
        )

    @app.get("/whatif/scenarios/{scenario_id}")
    def get_scenario(scenario_id: str):
        try:
            s = engine.router.get_scenario(scenario_id)
        except RoutingError as exc:
            raise _map_routing_error(exc) from exc
        areas = []
        for a in s.areas:
            if a.polygon is not None:
                areas.append({"type": "Polygon", "coordinates": [[list(c) for c in a.polygon]]})
            else:
                areas.append(
                    {"type": "Point", "coordinates": [a.point.lon, a.point.lat], "radius_m": a.radius_m}
                )
        return Response(
            content=canonical_json(
                {"id": s.id, "areas": areas, "blocked_elements": sorted(s.blocked_elements)}
            ),
            media_type="application/json",
        )

    # -- traffic, sun, models ---------------------------------------------------

    @app.get("/traffic")
    def traffic(bbox: str = Query(...)):
        box = _parse_bbox(bbox)
        rows = []
        for seg, el in engine.store.traffic_in_bbox(box):
            rows.append(
                {
                    "element": seg.element_id,
                    "density": seg.density,
                    "timestamp": format_rfc3339(seg.timestamp),
                    "period_s": arrow_period(seg.density),
                    "geometry": {
                        "type": "LineString",
                        "coordinates": [[x, y] for x, y in el.geometry],
                    },
                    "name": el.name,
                }
            )
        return Response(content=canonical_json({"segments": rows}), media_type="application/json")

    @app.get("/sun")
    def sun(lat: float = Query(...), lon: float = Query(...), at: str = Query(...)):
        try:
            when = parse_rfc3339(at)
            pos = sun_position(lat, lon, when)
        except ValueError as exc:
            raise ApiError(400, "bad_sun_query", str(exc)) from exc
        return Response(
            content=canonical_json(
                {"azimuth_deg": pos.azimuth_deg, "elevation_deg": pos.elevation_deg, "at": format_rfc3339(when)}
            ),
            media_type="application/json",
        )

    @app.get("/buildings/{building_id}/models")
    def building_models(building_id: str):
        try:
            variants = engine.registry.list_variants(building_id)
        except KeyError as exc:
            raise ApiError(404, "building_not_found", f"unknown building {building_id!r}") from exc
        return Response(
            content=canonical_json(
                {
                    "building": building_id,
                    "variants": variants,
                    "models": [f"{building_id}.{v}" for v in variants],
                }
            ),
            media_type="application/json",
        )

    @app.get("/models/{blob_id}")
    def model_blob(blob_id: str, if_none_match: str | None = Header(default=None)):
        try:
            path = engine.blob_path(blob_id)
        except KeyError as exc:
            raise ApiError(404, "model_not_found", f"unknown model {blob_id!r}") from exc
        return _conditional(path.read_bytes(), "model/gltf-binary", if_none_match)

    @app.get("/healthz")
    def healthz():
        return Response(content=canonical_json({"status": "ok"}), media_type="application/json")

    static_dir = os.environ.get(ENV_STATIC) or str(Path(engine.data_dir) / "static")
    if Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="viewer")

    return app
