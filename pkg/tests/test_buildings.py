"""Extrusion, DSM heights, roof-plane fitting, and tileset assembly."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from citytwin.buildings import (
    BuildingError,
    Footprint,
    InsufficientDataError,
    ModelRegistry,
    build_tileset,
    extrude_flat,
    fit_roof_planes,
    height_from_dsm,
    mesh_volume,
    triangulate,
    validate_footprint,
)
from citytwin.geo import GeoPoint, METERS_PER_DEG_LAT, meters_per_degree_lon, polygon_area
from citytwin.terrain import ElevationGrid, TerrainStack
from citytwin.tiles import assign_to_tile, tile_bounds, tile_for_point

ANCHOR = GeoPoint(11.2558, 43.7696)
M_LON = meters_per_degree_lon(ANCHOR.lat)


def ring_at(points_m: list[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    return tuple(
        (ANCHOR.lon + x / M_LON, ANCHOR.lat + y / METERS_PER_DEG_LAT) for x, y in points_m
    )


def local_area_m2(model) -> float:
    ring = [(v[0], v[1]) for v in model.vertices[: len(model.vertices) // 2]]
    return abs(polygon_area(ring))


def flat_grid(value: float, size: int = 9, res: float = 30.0) -> ElevationGrid:
    half = size // 2
    origin = GeoPoint(
        ANCHOR.lon - half * res / M_LON,
        ANCHOR.lat + half * res / METERS_PER_DEG_LAT,
    )
    return ElevationGrid(np.full((size, size), value), origin, res)


class TestHeightFromDsm:
    def test_mean_difference_rule(self):
        # footprint spanning ~2x2 samples; DSM flat 12, DTM flat 2 -> 10
        fp = Footprint("h1", outer=ring_at([(-40, -40), (40, -40), (40, 40), (-40, 40)]))
        assert height_from_dsm(fp, flat_grid(12.0), flat_grid(2.0)) == pytest.approx(10.0)

    def test_override_wins(self):
        fp = Footprint(
            "h2",
            outer=ring_at([(-40, -40), (40, -40), (40, 40), (-40, 40)]),
            height_override=7.5,
        )
        assert height_from_dsm(fp, flat_grid(100.0), flat_grid(0.0)) == 7.5

    def test_outside_coverage_raises(self):
        far = Footprint(
            "h3",
            outer=tuple((c[0] + 10.0, c[1]) for c in ring_at([(-40, -40), (40, -40), (40, 40), (-40, 40)])),
        )
        with pytest.raises(InsufficientDataError):
            height_from_dsm(far, flat_grid(12.0), flat_grid(2.0))

    def test_stated_example_values(self):
        # DSM samples {10,12,14} vs DTM {2,2,2} -> 10.0: three samples in a row
        res = 30.0
        origin = GeoPoint(ANCHOR.lon - res / M_LON, ANCHOR.lat)
        dsm = ElevationGrid(np.array([[10.0, 12.0, 14.0]]), origin, res)
        dtm = ElevationGrid(np.array([[2.0, 2.0, 2.0]]), origin, res)
        fp = Footprint("h4", outer=ring_at([(-45, -10), (45, -10), (45, 10), (-45, 10)]))
        assert height_from_dsm(fp, dsm, dtm) == pytest.approx(10.0)


class TestExtrusion:
    def test_square_counts_and_volume(self):
        fp = Footprint("sq", outer=ring_at([(-5, -5), (5, -5), (5, 5), (-5, 5)]))
        model = extrude_flat(fp, 6.0, 50.0)
        assert len(model.vertices) == 8
        assert mesh_volume(model.vertices, model.triangles) == pytest.approx(
            local_area_m2(model) * 6.0, rel=1e-9
        )
        assert local_area_m2(model) == pytest.approx(100.0, rel=1e-6)

    def test_triangle_counts(self):
        fp = Footprint("tri", outer=ring_at([(0, 0), (10, 0), (5, 8)]))
        model = extrude_flat(fp, 3.0, 0.0)
        assert len(model.vertices) == 6
        assert len(model.triangles) == 8  # 2 caps + 6 side triangles

    def test_hole_becomes_interior_wall(self):
        fp = Footprint(
            "ring",
            outer=ring_at([(-20, -20), (20, -20), (20, 20), (-20, 20)]),
            holes=(ring_at([(-8, -8), (8, -8), (8, 8), (-8, 8)]),),
        )
        model = extrude_flat(fp, 4.0, 0.0)
        vol = mesh_volume(model.vertices, model.triangles)
        assert vol == pytest.approx((40.0 * 40.0 - 16.0 * 16.0) * 4.0, rel=1e-6)

    def test_random_polygons_volume_property(self):
        rng = random.Random(31)
        checked = 0
        while checked < 300:
            nv = rng.randint(3, 14)
            angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(nv))
            if min(b - a for a, b in zip(angles, angles[1:])) < 0.02:
                continue
            pts = [
                (r * math.cos(a), r * math.sin(a))
                for a, r in ((a, rng.uniform(4, 40)) for a in angles)
            ]
            height = rng.uniform(2, 40)
            try:
                model = extrude_flat(Footprint(f"r{checked}", outer=ring_at(pts)), height, 0.0)
            except BuildingError:
                continue
            vol = mesh_volume(model.vertices, model.triangles)
            assert vol == pytest.approx(local_area_m2(model) * height, rel=1e-6)
            checked += 1

    def test_non_positive_height_rejected(self):
        fp = Footprint("bad", outer=ring_at([(0, 0), (10, 0), (5, 8)]))
        with pytest.raises(BuildingError):
            extrude_flat(fp, 0.0, 0.0)

    def test_degenerate_polygon_rejected(self):
        with pytest.raises(BuildingError):
            extrude_flat(Footprint("dg", outer=ring_at([(0, 0), (10, 0), (20, 0)])), 5.0, 0.0)

    def test_self_intersecting_outer_rejected(self):
        bow = ring_at([(0, 0), (10, 10), (10, 0), (0, 10)])
        with pytest.raises(BuildingError):
            validate_footprint(Footprint("bow", outer=bow))

    def test_invalid_hole_dropped_not_fatal(self):
        fp = Footprint(
            "fixable",
            outer=ring_at([(-20, -20), (20, -20), (20, 20), (-20, 20)]),
            holes=(ring_at([(0, 0), (5, 5), (5, 0), (0, 5)]),),  # bowtie hole
        )
        valid = validate_footprint(fp)
        assert valid.holes == ()


class TestTriangulate:
    def test_cap_area_preserved_with_holes(self):
        outer = [(0.0, 0.0), (30.0, 0.0), (30.0, 20.0), (0.0, 20.0)]
        hole = [(10.0, 5.0), (20.0, 5.0), (20.0, 12.0), (10.0, 12.0)]
        verts, tris = triangulate(outer, [hole])
        area = sum(
            abs(
                (verts[b][0] - verts[a][0]) * (verts[c][1] - verts[a][1])
                - (verts[b][1] - verts[a][1]) * (verts[c][0] - verts[a][0])
            )
            / 2.0
            for a, b, c in tris
        )
        assert area == pytest.approx(30 * 20 - 10 * 7, rel=1e-9)

    def test_concave_polygon(self):
        comb = [(0, 0), (10, 0), (10, 10), (6, 10), (6, 4), (4, 4), (4, 10), (0, 10)]
        verts, tris = triangulate(comb)
        area = sum(
            abs(
                (verts[b][0] - verts[a][0]) * (verts[c][1] - verts[a][1])
                - (verts[b][1] - verts[a][1]) * (verts[c][0] - verts[a][0])
            )
            / 2.0
            for a, b, c in tris
        )
        assert area == pytest.approx(10 * 10 - 2 * 6, rel=1e-9)


class TestRoofPlanes:
    @staticmethod
    def gable(noise: float = 0.0, outlier_frac: float = 0.0, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        xs, ys = np.meshgrid(np.linspace(-6, 6, 25), np.linspace(-4, 4, 17))
        zs = 12.0 - np.abs(xs) * math.tan(math.radians(30))
        zs += rng.normal(0, noise, zs.shape) if noise else 0.0
        pts = np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])
        if outlier_frac:
            n = int(len(pts) * outlier_frac)
            idx = rng.choice(len(pts), n, replace=False)
            pts[idx, 2] += rng.uniform(2, 8, n)
        return pts

    def test_flat_samples_single_vertical_plane(self):
        xs, ys = np.meshgrid(np.linspace(0, 10, 11), np.linspace(0, 8, 9))
        pts = np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, 7.0)])
        planes = fit_roof_planes(pts, inlier_tol=0.01, min_support=20)
        assert len(planes) == 1
        assert planes[0].normal[2] == pytest.approx(1.0, abs=1e-9)
        assert planes[0].offset == pytest.approx(-7.0, abs=1e-9)

    def test_noiseless_gable_two_planes_within_one_degree(self):
        planes = fit_roof_planes(self.gable(), inlier_tol=0.02, min_support=40)
        assert len(planes) == 2
        for p in planes:
            slope = math.degrees(math.acos(abs(p.normal[2])))
            assert slope == pytest.approx(30.0, abs=1.0)

    def test_gable_with_gross_outliers_recovered(self):
        planes = fit_roof_planes(self.gable(outlier_frac=0.05, seed=3), inlier_tol=0.15, min_support=40)
        assert len(planes) == 2
        for p in planes:
            slope = math.degrees(math.acos(abs(p.normal[2])))
            assert slope == pytest.approx(30.0, abs=1.0)

    def test_vertical_shift_moves_offsets_only(self):
        pts = self.gable(seed=5)
        base = fit_roof_planes(pts, inlier_tol=0.02, min_support=40, seed=7)
        shifted = fit_roof_planes(pts + np.array([0, 0, 25.0]), inlier_tol=0.02, min_support=40, seed=7)
        assert len(base) == len(shifted)
        for a, b in zip(base, shifted):
            assert a.inliers == b.inliers
            assert np.allclose(a.normal, b.normal, atol=1e-9)
            assert b.offset == pytest.approx(a.offset - 25.0 * a.normal[2], abs=1e-6)

    def test_insufficient_samples_fall_back_to_flat(self):
        pts = np.array([[0.0, 0.0, 4.0], [1.0, 0.0, 6.0]])
        planes = fit_roof_planes(pts, inlier_tol=0.1, min_support=10)
        assert len(planes) == 1
        assert planes[0].normal == (0.0, 0.0, 1.0)
        assert planes[0].offset == pytest.approx(-5.0)

    def test_no_samples_raises(self):
        with pytest.raises(InsufficientDataError):
            fit_roof_planes(np.empty((0, 3)), inlier_tol=0.1, min_support=3)


class TestBuildTileset:
    def _fixtures(self):
        dtm = TerrainStack([flat_grid(40.0, size=129, res=8.0)])
        dsm = TerrainStack([flat_grid(52.0, size=129, res=8.0)])
        return dtm, dsm

    def test_two_buildings_same_tile(self):
        dtm, dsm = self._fixtures()
        a = Footprint("a", outer=ring_at([(-30, -30), (-10, -30), (-10, -10), (-30, -10)]))
        b = Footprint("b", outer=ring_at([(10, 10), (30, 10), (30, 30), (10, 30)]))
        tiles, skipped = build_tileset([a, b], dtm, dsm)
        assert not skipped
        home = assign_to_tile(a.outer)
        if assign_to_tile(b.outer) == home:
            assert [m.building_id for m in tiles[home]] == ["a", "b"]

    def test_border_straddler_lives_in_centroid_tile_only(self):
        dtm, dsm = self._fixtures()
        home = tile_for_point(ANCHOR, 18)
        border_lon = tile_bounds(home).max_lon
        half_m = 15.0
        ring = tuple(
            (border_lon + dx / M_LON, ANCHOR.lat + dy / METERS_PER_DEG_LAT)
            for dx, dy in [(-half_m, -10), (half_m * 3, -10), (half_m * 3, 10), (-half_m, 10)]
        )
        tiles, skipped = build_tileset([Footprint("straddle", outer=ring)], dtm, dsm)
        assert not skipped
        assert len(tiles) == 1
        owner = next(iter(tiles))
        assert owner == assign_to_tile(ring)

    def test_count_conservation_and_skips(self):
        dtm, dsm = self._fixtures()
        rng = random.Random(17)
        fps = []
        for i in range(40):
            cx, cy = rng.uniform(-300, 300), rng.uniform(-300, 300)
            fps.append(
                Footprint(
                    f"c{i:02d}",
                    outer=ring_at(
                        [(cx - 8, cy - 8), (cx + 8, cy - 8), (cx + 8, cy + 8), (cx - 8, cy + 8)]
                    ),
                    height_override=rng.uniform(3, 20),
                )
            )
        fps.append(Footprint("bad", outer=ring_at([(0, 0), (1, 0), (2, 0)])))  # degenerate
        tiles, skipped = build_tileset(fps, dtm, dsm)
        assert [s[0] for s in skipped] == ["bad"]
        assert sum(len(v) for v in tiles.values()) == 40
        ids = [m.building_id for models in tiles.values() for m in models]
        assert len(set(ids)) == 40

    def test_nothing_sits_below_terrain(self):
        # sloped terrain: the prism base must clear the highest vertex sample
        res = 30.0
        origin = GeoPoint(ANCHOR.lon - 16 * res / M_LON, ANCHOR.lat + 16 * res / METERS_PER_DEG_LAT)
        i, j = np.meshgrid(np.arange(33), np.arange(33), indexing="ij")
        slope = ElevationGrid(30.0 + 0.8 * j + 0.3 * i, origin, res)
        dtm = TerrainStack([slope])
        dsm = TerrainStack([ElevationGrid(slope.values + 10.0, origin, res)])
        fp = Footprint("s", outer=ring_at([(-60, -60), (60, -60), (60, 60), (-60, 60)]))
        tiles, skipped = build_tileset([fp], dtm, dsm)
        assert not skipped
        model = next(iter(tiles.values()))[0]
        for v in model.vertices:
            lon = model.anchor.lon + v[0] / meters_per_degree_lon(model.anchor.lat)
            lat = model.anchor.lat + v[1] / METERS_PER_DEG_LAT
            terrain = dtm.sample(GeoPoint(lon, lat))
            assert model.ground_elevation + v[2] >= terrain - 1e-6


class TestModelRegistry:
    def test_register_then_list(self):
        reg = ModelRegistry()
        reg.add_building("b1")
        reg.register_variant("b1", "skeleton", b"blob")
        assert reg.list_variants("b1") == ["lod1", "skeleton"]

    def test_defaults_only_without_registrations(self):
        reg = ModelRegistry()
        reg.add_building("b1")
        assert reg.list_variants("b1") == ["lod1"]

    def test_reregistration_is_idempotent(self):
        reg = ModelRegistry()
        reg.add_building("b1")
        reg.register_variant("b1", "v2", b"one")
        reg.register_variant("b1", "v2", b"two")
        assert reg.list_variants("b1") == ["lod1", "v2"]
        assert reg.get_blob("b1", "v2") == b"two"

    def test_unknown_building_raises(self):
        reg = ModelRegistry()
        with pytest.raises(KeyError):
            reg.register_variant("ghost", "v", b"")
        with pytest.raises(KeyError):
            reg.list_variants("ghost")
