"""citytwin: a tile-served smart-city digital twin engine.

Terrain, buildings, road graphs, geolocated features, and sensor streams are
ingested into one data directory, served over HTTP as hierarchically tiled
data with cross-zoom cache fusion on the client, and queried interactively,
including what-if routing around user-drawn blocked areas.
"""

from .geo import GeoBBox, GeoPoint
from .tiles import TileId, ViewFrustum

__version__ = "0.1.0"

__all__ = ["GeoBBox", "GeoPoint", "TileId", "ViewFrustum", "__version__"]
