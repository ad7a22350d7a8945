"""Generate the self-contained sample city under sample_data/ (fixed seed).

A small synthetic district on the Florence hillside: ~50 footprints on a
street grid, 65x65 DTM/DSM rasters, a 40-element road network, two heatmaps
(one static, one animated), five sensor devices with observation history,
an entity catalog (trees, lamps), and the manifest tying it together.

Run from the repo root:  python3 scripts/make_sample_city.py
"""

from __future__ import annotations

import json
import math
import pathlib
import random
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from citytwin.buildings import extrude_flat, Footprint  # noqa: E402
from citytwin.geo import GeoPoint, METERS_PER_DEG_LAT, meters_per_degree_lon  # noqa: E402
from citytwin.gltf import mesh_to_glb  # noqa: E402
from citytwin.terrain import ElevationGrid, write_ascii_grid, write_binary_grid  # noqa: E402

OUT = pathlib.Path(__file__).resolve().parents[1] / "sample_data"

CENTER = GeoPoint(11.2558, 43.7696)
GRID_N = 65
RES_M = 30.0  # 65 x 30 m ~ 1.9 km square

M_PER_LON = meters_per_degree_lon(CENTER.lat)
DLON = RES_M / M_PER_LON
DLAT = RES_M / METERS_PER_DEG_LAT
ORIGIN = GeoPoint(CENTER.lon - 32 * DLON, CENTER.lat + 32 * DLAT)  # NW sample center


def terrain_height(lon: float, lat: float) -> float:
    """Smooth hills: a ridge rising to the north-east plus two knolls."""
    x = (lon - CENTER.lon) * M_PER_LON
    y = (lat - CENTER.lat) * METERS_PER_DEG_LAT
    h = 55.0 + 0.012 * x + 0.018 * y
    h += 16.0 * math.exp(-((x - 350) ** 2 + (y - 420) ** 2) / (2 * 320.0**2))
    h += 9.0 * math.exp(-((x + 540) ** 2 + (y + 300) ** 2) / (2 * 260.0**2))
    return h


def make_dtm() -> ElevationGrid:
    vals = np.zeros((GRID_N, GRID_N))
    for r in range(GRID_N):
        for c in range(GRID_N):
            vals[r, c] = terrain_height(ORIGIN.lon + c * DLON, ORIGIN.lat - r * DLAT)
    return ElevationGrid(vals, ORIGIN, RES_M, priority=0, name="dtm")


def street_grid() -> tuple[list[dict], list[dict]]:
    """5x5 node lattice -> two-way streets; returns (roads, nodes as dicts)."""
    rng = random.Random(20240501)
    spacing = 380.0  # meters between intersections
    nodes = {}
    for i in range(5):
        for j in range(5):
            nid = f"n{i}{j}"
            x = (j - 2) * spacing + rng.uniform(-25, 25)
            y = (2 - i) * spacing + rng.uniform(-25, 25)
            nodes[nid] = (CENTER.lon + x / M_PER_LON, CENTER.lat + y / METERS_PER_DEG_LAT)
    streets = []
    names_ew = ["Via dei Platani", "Via del Colle", "Corso Centrale", "Via delle Torri", "Via del Fiume"]
    names_ns = ["Via Nord", "Via dei Giardini", "Viale di Mezzo", "Via dell'Orto", "Via Est"]
    eid = 0
    for i in range(5):
        for j in range(5):
            if j < 4:
                a, b = f"n{i}{j}", f"n{i}{j + 1}"
                # the central corso is the unique fast corridor, so blocking
                # it produces a visibly more expensive what-if detour
                speed = 70 if i == 2 else 30
                streets.append((f"e{eid:03d}", a, b, names_ew[i], speed))
                eid += 1
            if i < 4:
                a, b = f"n{i}{j}", f"n{i + 1}{j}"
                streets.append((f"e{eid:03d}", a, b, names_ns[j], 30))
                eid += 1
    road_feats = []
    for rid, a, b, name, speed in streets:
        road_feats.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [list(nodes[a]), list(nodes[b])],
                },
                "properties": {
                    "id": rid,
                    "from": a,
                    "to": b,
                    "name": name,
                    "maxspeed": speed,
                    "lanes": 2 if speed >= 50 else 1,
                    "oneway": False,
                },
            }
        )
    node_rows = [{"id": nid, "lon": c[0], "lat": c[1]} for nid, c in sorted(nodes.items())]
    return road_feats, node_rows


def footprints(node_rows: list[dict]) -> list[dict]:
    """~50 rectangular and L-shaped buildings inside the street blocks."""
    rng = random.Random(20240502)
    feats = []
    nodes = {n["id"]: (n["lon"], n["lat"]) for n in node_rows}
    bid = 0
    for i in range(4):
        for j in range(4):
            corners = [nodes[f"n{i}{j}"], nodes[f"n{i}{j+1}"], nodes[f"n{i+1}{j+1}"], nodes[f"n{i+1}{j}"]]
            cx = sum(c[0] for c in corners) / 4
            cy = sum(c[1] for c in corners) / 4
            for _ in range(rng.choice((3, 3, 4))):
                w = rng.uniform(36, 72) / M_PER_LON
                h = rng.uniform(36, 72) / METERS_PER_DEG_LAT
                ox = cx + rng.uniform(-110, 110) / M_PER_LON
                oy = cy + rng.uniform(-110, 110) / METERS_PER_DEG_LAT
                theta = rng.uniform(-0.3, 0.3)
                ring = []
                base = [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)]
                is_l_shape = rng.random() < 0.25
                if is_l_shape:
                    base = [
                        (-w / 2, -h / 2),
                        (w / 2, -h / 2),
                        (w / 2, 0),
                        (0, 0),
                        (0, h / 2),
                        (-w / 2, h / 2),
                    ]
                for px, py in base:
                    rx = px * math.cos(theta) - py * math.sin(theta)
                    ry = px * math.sin(theta) + py * math.cos(theta)
                    ring.append([ox + rx, oy + ry])
                ring.append(list(ring[0]))
                props = {"id": f"b{bid:04d}", "name": f"Edificio {bid}"}
                # narrow L legs can miss the 30 m DSM lattice; pin their height
                if is_l_shape or rng.random() < 0.3:
                    props["height"] = round(rng.uniform(6, 28), 1)
                feats.append(
                    {
                        "type": "Feature",
                        "geometry": {"type": "Polygon", "coordinates": [ring]},
                        "properties": props,
                    }
                )
                bid += 1
    return feats


def make_dsm(dtm: ElevationGrid, building_feats: list[dict]) -> ElevationGrid:
    """DSM = DTM + per-building box heights (+ light canopy noise)."""
    rng = random.Random(20240503)
    vals = dtm.values.copy()
    heights = {}
    for feat in building_feats:
        props = feat["properties"]
        heights[props["id"]] = props.get("height") or round(rng.uniform(5, 24), 1)
    for feat in building_feats:
        ring = feat["geometry"]["coordinates"][0]
        lons = [c[0] for c in ring]
        lats = [c[1] for c in ring]
        h = heights[feat["properties"]["id"]]
        c0 = max(0, math.floor((min(lons) - dtm.origin.lon) / dtm.dlon))
        c1 = min(GRID_N - 1, math.ceil((max(lons) - dtm.origin.lon) / dtm.dlon))
        r0 = max(0, math.floor((dtm.origin.lat - max(lats)) / dtm.dlat))
        r1 = min(GRID_N - 1, math.ceil((dtm.origin.lat - min(lats)) / dtm.dlat))
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                lon = dtm.origin.lon + c * dtm.dlon
                lat = dtm.origin.lat - r * dtm.dlat
                if _point_in_ring(lon, lat, ring):
                    vals[r, c] = dtm.values[r, c] + h
    for r in range(GRID_N):
        for c in range(GRID_N):
            if vals[r, c] == dtm.values[r, c] and rng.random() < 0.02:
                vals[r, c] += rng.uniform(3, 9)  # scattered trees
    return ElevationGrid(vals, dtm.origin, RES_M, priority=0, name="dsm")


def _point_in_ring(x, y, ring) -> bool:
    inside = False
    n = len(ring) - 1
    for k in range(n):
        x0, y0 = ring[k]
        x1, y1 = ring[k + 1]
        if (y0 > y) != (y1 > y) and x < x0 + (y - y0) * (x1 - x0) / (y1 - y0):
            inside = not inside
    return inside


def heatmap_frames(dtm: ElevationGrid) -> tuple[ElevationGrid, list[ElevationGrid]]:
    """Static pm10 plume + 3-frame animated temperature field (33x33)."""
    n = 33
    res = RES_M * 2
    origin = GeoPoint(ORIGIN.lon, ORIGIN.lat)
    xs = np.arange(n) * res
    ys = np.arange(n) * res
    gx, gy = np.meshgrid(xs, ys)
    span = (GRID_N - 1) * RES_M
    pm10 = 18.0 + 42.0 * np.exp(-((gx - span * 0.42) ** 2 + (gy - span * 0.55) ** 2) / (2 * 420.0**2))
    static = ElevationGrid(pm10, origin, res, name="pm10")
    frames = []
    for t in range(3):
        phase = 2 * math.pi * t / 3
        temp = (
            21.0
            + 6.0 * np.sin(gx / span * math.pi + phase)
            + 3.0 * np.cos(gy / span * 2 * math.pi - phase)
        )
        frames.append(ElevationGrid(temp, origin, res, name=f"temp{t}"))
    return static, frames


def devices_and_observations(node_rows):
    rng = random.Random(20240504)
    metrics = [("airQualityPM10", "ug/m3", 10, 60), ("temperature", "C", 12, 34)]
    feats, obs_lines = [], []
    anchors = [node_rows[i] for i in (6, 8, 12, 16, 18)]
    for k, anchor in enumerate(anchors):
        did = f"dev-{k:02d}"
        feats.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [anchor["lon"] + 0.0002, anchor["lat"] + 0.0001],
                },
                "properties": {
                    "id": did,
                    "category": "Sensor/Environmental",
                    "name": f"Centralina {k}",
                    "owner": "municipality",
                },
            }
        )
        metric, unit, lo, hi = metrics[k % 2]
        for hour in range(20):
            ts = f"2026-05-01T{hour:02d}:00:00Z"
            obs_lines.append(
                json.dumps(
                    {
                        "device": did,
                        "metric": metric,
                        "value": round(rng.uniform(lo, hi), 2),
                        "unit": unit,
                        "timestamp": ts,
                    },
                    sort_keys=True,
                )
            )
    return feats, obs_lines


def pois(node_rows):
    rng = random.Random(20240505)
    cats = [
        ("TransferService/BusStop", "Fermata"),
        ("CulturalActivity/Museum", "Museo"),
        ("Commercial/Pharmacy", "Farmacia"),
        ("Emergency/FirstAid", "Pronto Soccorso"),
        ("Financial/Bank", "Banca"),
    ]
    feats = []
    for k in range(15):
        cat, base = cats[k % len(cats)]
        anchor = node_rows[rng.randrange(len(node_rows))]
        feats.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [
                        anchor["lon"] + rng.uniform(-0.0012, 0.0012),
                        anchor["lat"] + rng.uniform(-0.0009, 0.0009),
                    ],
                },
                "properties": {"id": f"poi-{k:02d}", "category": cat, "name": f"{base} {k}"},
            }
        )
    return feats


def entity_files(node_rows):
    rng = random.Random(20240506)
    # two tiny catalog models: a "tree" (tapered box) and a "lamp" (thin post)
    tree_fp = Footprint("tree", outer=((-1.2, -1.2), (1.2, -1.2), (1.2, 1.2), (-1.2, 1.2)))
    lamp_fp = Footprint("lamp", outer=((-0.15, -0.15), (0.15, -0.15), (0.15, 0.15), (-0.15, 0.15)))
    models = {}
    for mid, fp, h in (("tree", tree_fp, 6.0), ("lamp", lamp_fp, 4.5)):
        scaled = Footprint(
            mid,
            outer=tuple((x / M_PER_LON, y / METERS_PER_DEG_LAT) for x, y in fp.outer),
        )
        m = extrude_flat(scaled, h, 0.0)
        models[mid] = mesh_to_glb(m.vertices, m.triangles, name=mid)
    instances = []
    for k in range(30):
        anchor = node_rows[rng.randrange(len(node_rows))]
        model = "tree" if k % 3 else "lamp"
        instances.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [
                        anchor["lon"] + rng.uniform(-0.0015, 0.0015),
                        anchor["lat"] + rng.uniform(-0.0011, 0.0011),
                    ],
                },
                "properties": {
                    "id": f"ent-{k:02d}",
                    "model": model,
                    "scale": round(rng.uniform(0.8, 1.6), 2),
                    "rotation": round(rng.uniform(0, 360), 1),
                },
            }
        )
    return models, instances


def traffic_lines(road_feats):
    rng = random.Random(20240507)
    lines = []
    for feat in road_feats:
        rid = feat["properties"]["id"]
        density = round(rng.uniform(0.05, 0.95), 2)
        lines.append(
            json.dumps(
                {"element": rid, "density": density, "timestamp": "2026-05-01T08:30:00Z"},
                sort_keys=True,
            )
        )
        if rng.random() < 0.5:
            lines.append(
                json.dumps(
                    {"element": rid + ":r", "density": round(min(1.0, density + 0.03), 2),
                     "timestamp": "2026-05-01T08:30:00Z"},
                    sort_keys=True,
                )
            )
    return lines


MANIFEST = """\
# Sample-city ingestion manifest; paths are relative to this file.
datasets:
  - kind: dtm
    path: dtm.asc
    name: dtm
    priority: 0
  - kind: dsm
    path: dsm.asc
    name: dsm
  - kind: footprints
    path: footprints.geojson
  - kind: roads
    path: roads.geojson
  - kind: features
    path: pois.geojson
  - kind: features
    path: devices.geojson
  - kind: heatmap
    name: pm10
    path: heatmap_pm10.asc
    colormap:
      mode: linear
      stops:
        - [0, [0.0, 0.35, 1.0, 0.0]]
        - [25, [0.2, 0.85, 0.2, 0.55]]
        - [60, [1.0, 0.15, 0.1, 0.85]]
  - kind: heatmap
    name: temperature
    frames: [heatmap_temp_0.asc, heatmap_temp_1.asc, heatmap_temp_2.asc]
    animated: true
    frame_delay_cs: 40
    colormap:
      mode: linear
      stops:
        - [10, [0.1, 0.2, 0.9, 0.6]]
        - [22, [0.9, 0.9, 0.2, 0.6]]
        - [34, [0.95, 0.1, 0.05, 0.75]]
  - kind: traffic
    path: traffic.ndjson
  - kind: entity-catalog
    path: entities
  - kind: entity-instances
    path: entity_instances.geojson
"""


def main() -> None:
    OUT.mkdir(exist_ok=True)
    (OUT / "entities").mkdir(exist_ok=True)

    dtm = make_dtm()
    road_feats, node_rows = street_grid()
    building_feats = footprints(node_rows)
    dsm = make_dsm(dtm, building_feats)
    pm10, temp_frames = heatmap_frames(dtm)
    device_feats, obs_lines = devices_and_observations(node_rows)
    poi_feats = pois(node_rows)
    models, instances = entity_files(node_rows)

    (OUT / "dtm.asc").write_text(write_ascii_grid(dtm))
    (OUT / "dsm.asc").write_text(write_ascii_grid(dsm))
    (OUT / "heatmap_pm10.asc").write_text(write_ascii_grid(pm10))
    for i, frame in enumerate(temp_frames):
        (OUT / f"heatmap_temp_{i}.asc").write_text(write_ascii_grid(frame))
    # binary twin of the DTM, exercising the second grid format
    (OUT / "dtm.e32").write_bytes(write_binary_grid(dtm))

    def dump(name: str, feats: list[dict]) -> None:
        (OUT / name).write_text(
            json.dumps({"type": "FeatureCollection", "features": feats}, indent=1, sort_keys=True)
            + "\n"
        )

    dump("footprints.geojson", building_feats)
    dump("roads.geojson", road_feats)
    dump("pois.geojson", poi_feats)
    dump("devices.geojson", device_feats)
    dump("entity_instances.geojson", instances)
    (OUT / "observations.ndjson").write_text("\n".join(obs_lines) + "\n")
    (OUT / "traffic.ndjson").write_text("\n".join(traffic_lines(road_feats)) + "\n")
    for mid, blob in models.items():
        (OUT / "entities" / f"{mid}.glb").write_bytes(blob)
    (OUT / "manifest.yaml").write_text(MANIFEST)

    # golden what-if scenario for the Figure-11-style demo: block the block
    # around the central intersection n22
    n22 = next(n for n in node_rows if n["id"] == "n22")
    d = 180.0
    poly = [
        [n22["lon"] - d / M_PER_LON, n22["lat"] - d / METERS_PER_DEG_LAT],
        [n22["lon"] + d / M_PER_LON, n22["lat"] - d / METERS_PER_DEG_LAT],
        [n22["lon"] + d / M_PER_LON, n22["lat"] + d / METERS_PER_DEG_LAT],
        [n22["lon"] - d / M_PER_LON, n22["lat"] + d / METERS_PER_DEG_LAT],
        [n22["lon"] - d / M_PER_LON, n22["lat"] - d / METERS_PER_DEG_LAT],
    ]
    n20 = next(n for n in node_rows if n["id"] == "n20")
    n24 = next(n for n in node_rows if n["id"] == "n24")
    scenario = {
        "areas": [{"type": "Polygon", "coordinates": [poly]}],
        "route_from": [n20["lon"], n20["lat"]],
        "route_to": [n24["lon"], n24["lat"]],
    }
    (OUT / "golden_scenario.json").write_text(json.dumps(scenario, indent=1, sort_keys=True) + "\n")
    print(f"sample city written to {OUT}")


if __name__ == "__main__":
    main()
