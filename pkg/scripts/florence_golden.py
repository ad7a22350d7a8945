"""One-off: evaluate the slippy-map projection at high precision.

Computes the tile address of the Florence city-center coordinate at zoom 18
with mpmath (50 digits), independently of the library, and freezes it as a
golden file for the test suite.

Run from the repo root:  python scripts/florence_golden.py
"""

import json
import pathlib

import mpmath as mp

mp.mp.dps = 50

LON = mp.mpf("11.2558")
LAT = mp.mpf("43.7696")
Z = 18


def tile_xy(lon: mp.mpf, lat: mp.mpf, z: int) -> tuple[int, int]:
    n = mp.mpf(2) ** z
    x = mp.floor((lon + 180) / 360 * n)
    phi = lat * mp.pi / 180
    y = mp.floor((1 - mp.log(mp.tan(phi) + 1 / mp.cos(phi)) / mp.pi) / 2 * n)
    return int(x), int(y)


def main() -> None:
    x, y = tile_xy(LON, LAT, Z)
    out = {
        "lon": float(LON),
        "lat": float(LAT),
        "z": Z,
        "x": x,
        "y": y,
    }
    path = pathlib.Path(__file__).resolve().parents[1] / "tests" / "data" / "florence_golden.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}: {out}")


if __name__ == "__main__":
    main()
