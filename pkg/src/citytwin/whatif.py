"""What-if scenarios: blocked areas and shortest-path routing around them.

A scenario freezes the set of road elements whose geometry touches any
blocked area (vertex inside, segment crossing the boundary, or within radius
of a blocked point); routing then runs on the base graph minus that set, so
the graph itself is never mutated.  Edge cost is travel time in seconds
(length / maxspeed).  Ties break deterministically by (cost, hop count,
lexicographically smallest element-id sequence).
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .geo import (
    GeoPoint,
    METERS_PER_DEG_LAT,
    close_ring,
    equirect_distance_m,
    meters_per_degree_lon,
    point_in_ring,
    point_segment_distance,
    segment_crosses_ring,
)
from .store import RoadElement, RoadGraph

DEFAULT_SNAP_RADIUS_M = 250.0


class RoutingError(Exception):
    def __init__(self, message: str, code: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class BlockedArea:
    """Either a polygon or a point with a radius in meters."""

    polygon: tuple[tuple[float, float], ...] | None = None
    point: GeoPoint | None = None
    radius_m: float = 0.0

    def __post_init__(self) -> None:
        if (self.polygon is None) == (self.point is None):
            raise RoutingError("area needs exactly one of polygon or point", "bad_area")
        if self.polygon is not None and len(close_ring(self.polygon)) < 3:
            raise RoutingError("blocked polygon needs >= 3 vertices", "bad_area")
        if self.point is not None and self.radius_m <= 0:
            raise RoutingError("blocked point needs a positive radius", "bad_area")


@dataclass(frozen=True)
class Scenario:
    id: str
    areas: tuple[BlockedArea, ...]
    blocked_elements: frozenset[str]
    created: datetime


@dataclass(frozen=True)
class Route:
    element_ids: tuple[str, ...]
    polyline: tuple[tuple[float, float], ...]
    cost_s: float
    length_m: float


def _element_touches_area(el: RoadElement, area: BlockedArea) -> bool:
    pts = list(el.geometry)
    if area.polygon is not None:
        ring = close_ring(area.polygon)
        if any(point_in_ring(x, y, ring) for x, y in pts):
            return True
        return any(
            segment_crosses_ring(pts[i], pts[i + 1], ring) for i in range(len(pts) - 1)
        )
    center = area.point
    mlon = meters_per_degree_lon(center.lat)
    cx, cy = center.lon * mlon, center.lat * METERS_PER_DEG_LAT
    pm = [(x * mlon, y * METERS_PER_DEG_LAT) for x, y in pts]
    for i in range(len(pm) - 1):
        if point_segment_distance(cx, cy, *pm[i], *pm[i + 1]) <= area.radius_m:
            return True
    return False


class WhatIfRouter:
    """Scenario registry plus shortest-path routing on a road graph."""

    def __init__(self, graph: RoadGraph, snap_radius_m: float = DEFAULT_SNAP_RADIUS_M):
        self.graph = graph
        self.snap_radius_m = snap_radius_m
        self._scenarios: dict[str, Scenario] = {}
        self._lock = threading.Lock()

    # -- scenarios ---------------------------------------------------------

    def create_scenario(self, areas: list[BlockedArea], now: datetime | None = None) -> Scenario:
        """Compute the blocked element set; content-addressed and idempotent."""
        if not areas:
            raise RoutingError("a scenario needs at least one area", "empty_scenario")
        blocked = frozenset(
            el.id
            for el in self.graph.elements.values()
            if any(_element_touches_area(el, a) for a in areas)
        )
        canonical = json.dumps(
            [
                {
                    "polygon": a.polygon,
                    "point": [a.point.lon, a.point.lat] if a.point else None,
                    "radius_m": a.radius_m,
                }
                for a in areas
            ],
            sort_keys=True,
            separators=(",", ":"),
        )
        sid = "s" + hashlib.sha256(canonical.encode()).hexdigest()[:12]
        scenario = Scenario(
            id=sid,
            areas=tuple(areas),
            blocked_elements=blocked,
            created=now or datetime.now(timezone.utc),
        )
        with self._lock:
            self._scenarios.setdefault(sid, scenario)
            return self._scenarios[sid]

    def get_scenario(self, scenario_id: str) -> Scenario:
        with self._lock:
            s = self._scenarios.get(scenario_id)
        if s is None:
            raise RoutingError(f"unknown scenario {scenario_id!r}", "scenario_not_found")
        return s

    def scenarios(self) -> list[Scenario]:
        with self._lock:
            return sorted(self._scenarios.values(), key=lambda s: s.id)

    # -- routing -------------------------------------------------------------

    def snap(self, p: GeoPoint) -> str:
        """Nearest graph node within the snap radius."""
        best_id, best_d = None, math.inf
        for node_id in sorted(self.graph.nodes):
            d = equirect_distance_m(p, self.graph.nodes[node_id])
            if d < best_d:
                best_id, best_d = node_id, d
        if best_id is None or best_d > self.snap_radius_m:
            raise RoutingError(
                f"no road node within {self.snap_radius_m} m of ({p.lon}, {p.lat})",
                "no_nearby_road",
            )
        return best_id

    def _shortest(self, src: str, dst: str, blocked: frozenset[str]) -> Route | None:
        """Dijkstra with deterministic (cost, hops, id-sequence) tie-breaking."""
        if src == dst:
            return Route((), (), 0.0, 0.0)
        out_edges = self.graph.out_edges()
        best: dict[str, tuple[float, int, tuple[str, ...]]] = {}
        heap: list[tuple[float, int, tuple[str, ...], str]] = [(0.0, 0, (), src)]
        while heap:
            cost, hops, path, node = heapq.heappop(heap)
            if node in best and best[node] <= (cost, hops, path):
                continue
            best[node] = (cost, hops, path)
            if node == dst:
                break
            for el in out_edges.get(node, []):
                if el.id in blocked:
                    continue
                nxt_key = (cost + el.length_m / (el.maxspeed_kmh / 3.6), hops + 1, path + (el.id,))
                if el.to_node in best and best[el.to_node] <= nxt_key:
                    continue
                heapq.heappush(heap, (*nxt_key, el.to_node))
        if dst not in best:
            return None
        cost, _, path = best[dst]
        polyline: list[tuple[float, float]] = []
        length = 0.0
        for eid in path:
            el = self.graph.elements[eid]
            pts = list(el.geometry)
            if polyline and polyline[-1] == pts[0]:
                polyline.extend(pts[1:])
            else:
                polyline.extend(pts)
            length += el.length_m
        return Route(tuple(path), tuple(polyline), cost, length)

    def route(self, start: GeoPoint, end: GeoPoint, scenario_id: str | None = None) -> Route:
        blocked = (
            self.get_scenario(scenario_id).blocked_elements
            if scenario_id is not None
            else frozenset()
        )
        src, dst = self.snap(start), self.snap(end)
        found = self._shortest(src, dst, blocked)
        if found is not None:
            return found
        if scenario_id is not None and self._shortest(src, dst, frozenset()) is not None:
            raise RoutingError(
                f"no route from {src} to {dst}: disconnected by scenario {scenario_id}",
                "no_route_scenario",
            )
        raise RoutingError(f"no route from {src} to {dst} in the base graph", "no_route")

    def compare(self, start: GeoPoint, end: GeoPoint, scenario_id: str) -> tuple[Route, Route]:
        """(baseline, scenario) routes with identical snapping."""
        baseline = self.route(start, end, None)
        scenario = self.route(start, end, scenario_id)
        return baseline, scenario
