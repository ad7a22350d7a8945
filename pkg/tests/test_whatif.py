"""Scenario construction and routing against brute-force oracles."""

from __future__ import annotations

import math
import random

import pytest

from citytwin.geo import GeoPoint, METERS_PER_DEG_LAT, meters_per_degree_lon
from citytwin.store import RoadElement, RoadGraph
from citytwin.whatif import BlockedArea, RoutingError, WhatIfRouter

from oracles import bellman_ford

CENTER = GeoPoint(11.2558, 43.7696)
M_LON = meters_per_degree_lon(CENTER.lat)


def lonlat(x_m: float, y_m: float) -> tuple[float, float]:
    return (CENTER.lon + x_m / M_LON, CENTER.lat + y_m / METERS_PER_DEG_LAT)


def grid_graph(n: int = 4, spacing: float = 300.0, speed: float = 50.0) -> RoadGraph:
    g = RoadGraph()
    for i in range(n):
        for j in range(n):
            g.add_node(f"n{i}{j}", GeoPoint(*lonlat(j * spacing, -i * spacing)))
    eid = 0
    for i in range(n):
        for j in range(n):
            for di, dj in ((0, 1), (1, 0)):
                ii, jj = i + di, j + dj
                if ii >= n or jj >= n:
                    continue
                a, b = f"n{i}{j}", f"n{ii}{jj}"
                pa, pb = g.nodes[a], g.nodes[b]
                for eid_s, frm, to, g0, g1 in (
                    (f"e{eid:03d}", a, b, pa, pb),
                    (f"e{eid:03d}r", b, a, pb, pa),
                ):
                    g.add_element(
                        RoadElement(
                            id=eid_s,
                            from_node=frm,
                            to_node=to,
                            geometry=((g0.lon, g0.lat), (g1.lon, g1.lat)),
                            length_m=spacing,
                            maxspeed_kmh=speed,
                        )
                    )
                eid += 1
    return g


class TestCreateScenario:
    def test_polygon_over_nothing_blocks_nothing(self):
        router = WhatIfRouter(grid_graph())
        far = [lonlat(50000, 50000), lonlat(50100, 50000), lonlat(50100, 50100), lonlat(50000, 50100)]
        s = router.create_scenario([BlockedArea(polygon=tuple(far))])
        assert s.blocked_elements == frozenset()

    def test_polygon_containing_one_element(self):
        router = WhatIfRouter(grid_graph())
        # box around the edge between n00 and n01 (y=0, x in [0, 300])
        box = [lonlat(-50, -60), lonlat(350, -60), lonlat(350, 60), lonlat(-50, 60)]
        s = router.create_scenario([BlockedArea(polygon=tuple(box))])
        assert "e000" in s.blocked_elements and "e000r" in s.blocked_elements

    def test_point_radius_blocks_crossing_elements(self):
        router = WhatIfRouter(grid_graph())
        s = router.create_scenario([BlockedArea(point=GeoPoint(*lonlat(150, 0)), radius_m=30.0)])
        assert {"e000", "e000r"} <= s.blocked_elements

    def test_empty_area_list_rejected(self):
        router = WhatIfRouter(grid_graph())
        with pytest.raises(RoutingError):
            router.create_scenario([])

    def test_content_addressed_idempotence(self):
        router = WhatIfRouter(grid_graph())
        area = BlockedArea(point=GeoPoint(*lonlat(150, 0)), radius_m=30.0)
        assert router.create_scenario([area]).id == router.create_scenario([area]).id

    def test_random_areas_match_shapely_oracle(self):
        shapely = pytest.importorskip("shapely.geometry")
        rng = random.Random(77)
        graph = grid_graph(5, spacing=200.0)
        router = WhatIfRouter(graph)
        for _ in range(25):
            cx, cy = rng.uniform(-200, 1000), rng.uniform(-1000, 200)
            w, h = rng.uniform(30, 400), rng.uniform(30, 400)
            poly = [
                lonlat(cx - w, cy - h),
                lonlat(cx + w, cy - h),
                lonlat(cx + w, cy + h),
                lonlat(cx - w, cy + h),
            ]
            s = router.create_scenario([BlockedArea(polygon=tuple(poly))])
            shp = shapely.Polygon(poly)
            expected = {
                el.id
                for el in graph.elements.values()
                if shp.intersects(shapely.LineString(el.geometry))
            }
            assert s.blocked_elements == expected


class TestRoute:
    def test_same_snapped_node_is_empty_route(self):
        router = WhatIfRouter(grid_graph())
        p = GeoPoint(*lonlat(5, 5))
        route = router.route(p, GeoPoint(*lonlat(-5, -5)))
        assert route.element_ids == ()
        assert route.cost_s == 0.0

    def test_snap_failure_is_explicit(self):
        router = WhatIfRouter(grid_graph())
        with pytest.raises(RoutingError) as err:
            router.route(GeoPoint(*lonlat(99999, 0)), GeoPoint(*lonlat(0, 0)))
        assert err.value.code == "no_nearby_road"

    def test_square_graph_blocked_edge_switches_route(self):
        # 2x2 grid: n00 -> n01 direct (300 m) vs detour n00->n10->n11->n01
        router = WhatIfRouter(grid_graph(2))
        a = GeoPoint(*lonlat(0, 0))
        b = GeoPoint(*lonlat(300, 0))
        base = router.route(a, b)
        assert base.element_ids == ("e000",)
        expected_cost = 300.0 / (50.0 / 3.6)
        assert base.cost_s == pytest.approx(expected_cost)
        box = [lonlat(100, -30), lonlat(200, -30), lonlat(200, 30), lonlat(100, 30)]
        s = router.create_scenario([BlockedArea(polygon=tuple(box))])
        detour = router.route(a, b, s.id)
        assert detour.element_ids != base.element_ids
        assert "e000" not in detour.element_ids
        assert detour.cost_s == pytest.approx(3 * expected_cost)
        assert detour.length_m == pytest.approx(900.0)

    def test_scenario_disconnection_is_distinguished(self):
        router = WhatIfRouter(grid_graph(2))
        # block everything around the destination node n11
        box = [lonlat(150, -450), lonlat(450, -450), lonlat(450, -150), lonlat(150, -150)]
        s = router.create_scenario([BlockedArea(polygon=tuple(box))])
        with pytest.raises(RoutingError) as err:
            router.route(GeoPoint(*lonlat(0, 0)), GeoPoint(*lonlat(300, -300)), s.id)
        assert err.value.code == "no_route_scenario"

    def test_unknown_scenario_raises(self):
        router = WhatIfRouter(grid_graph(2))
        with pytest.raises(RoutingError) as err:
            router.route(GeoPoint(*lonlat(0, 0)), GeoPoint(*lonlat(300, 0)), "ghost")
        assert err.value.code == "scenario_not_found"

    def test_route_validity_adjacency_and_exclusion(self):
        rng = random.Random(3)
        graph = grid_graph(5, spacing=250.0)
        router = WhatIfRouter(graph)
        for _ in range(20):
            a = GeoPoint(*lonlat(rng.uniform(0, 1000), -rng.uniform(0, 1000)))
            b = GeoPoint(*lonlat(rng.uniform(0, 1000), -rng.uniform(0, 1000)))
            cx, cy = rng.uniform(0, 1000), -rng.uniform(0, 1000)
            poly = tuple(
                lonlat(cx + dx, cy + dy)
                for dx, dy in ((-150, -150), (150, -150), (150, 150), (-150, 150))
            )
            s = router.create_scenario([BlockedArea(polygon=poly)])
            try:
                route = router.route(a, b, s.id)
            except RoutingError:
                continue
            for eid in route.element_ids:
                assert eid not in s.blocked_elements
            for e1, e2 in zip(route.element_ids, route.element_ids[1:]):
                assert graph.elements[e1].to_node == graph.elements[e2].from_node


def random_graph(rng: random.Random, n_nodes: int) -> RoadGraph:
    g = RoadGraph()
    coords = {}
    for i in range(n_nodes):
        coords[f"v{i}"] = lonlat(rng.uniform(-2000, 2000), rng.uniform(-2000, 2000))
        g.add_node(f"v{i}", GeoPoint(*coords[f"v{i}"]))
    eid = 0
    for i in range(n_nodes):
        degree = rng.randint(2, 5)
        for _ in range(degree):
            j = rng.randrange(n_nodes)
            if j == i:
                continue
            a, b = f"v{i}", f"v{j}"
            g.add_element(
                RoadElement(
                    id=f"e{eid:05d}",
                    from_node=a,
                    to_node=b,
                    geometry=(coords[a], coords[b]),
                    length_m=rng.uniform(50, 2000),
                    maxspeed_kmh=rng.choice((30.0, 50.0, 70.0, 90.0)),
                )
            )
            eid += 1
    return g


class TestOracleEquivalence:
    def test_random_graphs_and_scenarios_match_bellman_ford(self):
        rng = random.Random(55)
        for trial in range(20):
            n = rng.randint(20, 120)
            graph = random_graph(rng, n)
            router = WhatIfRouter(graph, snap_radius_m=1e9)
            node_ids = sorted(graph.nodes)
            index = {nid: k for k, nid in enumerate(node_ids)}
            for _ in range(3):
                blocked = frozenset(
                    eid for eid in graph.elements if rng.random() < 0.15
                )
                edges = [
                    (index[el.from_node], index[el.to_node], el.length_m / (el.maxspeed_kmh / 3.6))
                    for el in graph.elements.values()
                    if el.id not in blocked
                ]
                src, dst = rng.sample(node_ids, 2)
                dist = bellman_ford(len(node_ids), edges, index[src])
                expected = dist[index[dst]]
                got = router._shortest(src, dst, blocked)
                if math.isinf(expected):
                    assert got is None
                else:
                    assert got is not None
                    assert got.cost_s == expected, f"trial {trial}: {got.cost_s} != {expected}"

    def test_restriction_monotonicity(self):
        rng = random.Random(66)
        graph = random_graph(rng, 60)
        router = WhatIfRouter(graph, snap_radius_m=1e9)
        node_ids = sorted(graph.nodes)
        for _ in range(30):
            src, dst = rng.sample(node_ids, 2)
            blocked = frozenset(eid for eid in graph.elements if rng.random() < 0.1)
            base = router._shortest(src, dst, frozenset())
            restricted = router._shortest(src, dst, blocked)
            if base is None:
                assert restricted is None
            elif restricted is not None:
                assert restricted.cost_s >= base.cost_s - 1e-12


class TestCompare:
    def test_harmless_scenario_keeps_routes_identical(self):
        router = WhatIfRouter(grid_graph(3))
        far = [lonlat(90000, 90000), lonlat(90100, 90000), lonlat(90100, 90100)]
        s = router.create_scenario([BlockedArea(polygon=tuple(far))])
        a, b = GeoPoint(*lonlat(0, 0)), GeoPoint(*lonlat(600, -600))
        baseline, scenario = router.compare(a, b, s.id)
        assert baseline == scenario

    def test_blocking_baseline_edge_costs_at_least_as_much(self):
        router = WhatIfRouter(grid_graph(3))
        a, b = GeoPoint(*lonlat(0, 0)), GeoPoint(*lonlat(600, 0))
        baseline = router.route(a, b)
        first = router.graph.elements[baseline.element_ids[0]]
        mid_x = sum(c[0] for c in first.geometry) / 2
        mid_y = sum(c[1] for c in first.geometry) / 2
        s = router.create_scenario([BlockedArea(point=GeoPoint(mid_x, mid_y), radius_m=20.0)])
        base2, scen = router.compare(a, b, s.id)
        assert base2 == baseline, "scenario existence must not disturb the baseline"
        assert scen.cost_s >= baseline.cost_s

    def test_baseline_unchanged_by_scenario_creation(self):
        router = WhatIfRouter(grid_graph(3))
        a, b = GeoPoint(*lonlat(0, 0)), GeoPoint(*lonlat(600, -300))
        before = router.route(a, b)
        router.create_scenario([BlockedArea(point=GeoPoint(*lonlat(300, 0)), radius_m=40.0)])
        after = router.route(a, b)
        assert before == after
