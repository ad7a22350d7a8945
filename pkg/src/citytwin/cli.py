"""citytwin command line: ingest a manifest, build the tileset, serve HTTP.

Exit codes: 0 success, 1 partial skips during ingest/build, 2 fatal.
Environment: CITYTWIN_DATA_DIR, CITYTWIN_ADDR, CITYTWIN_TOKEN, CITYTWIN_STATIC.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .server import ENV_ADDR, ENV_DATA_DIR


def _add_data_dir(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--data-dir",
        default=os.environ.get(ENV_DATA_DIR, "data"),
        help="data directory (default: $CITYTWIN_DATA_DIR or ./data)",
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="citytwin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="load datasets listed in a manifest")
    p_ingest.add_argument("manifest", help="YAML manifest path")
    _add_data_dir(p_ingest)

    p_build = sub.add_parser("build", help="build the zoom-18 building tileset")
    p_build.add_argument("--tiles", action="store_true", help="build the building tile tree")
    _add_data_dir(p_build)

    p_serve = sub.add_parser("serve", help="run the HTTP server")
    p_serve.add_argument(
        "--addr",
        default=os.environ.get(ENV_ADDR, "127.0.0.1:8080"),
        help="bind address host:port (default: $CITYTWIN_ADDR or 127.0.0.1:8080)",
    )
    _add_data_dir(p_serve)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "ingest":
        from .ingest import Ingestor

        ingestor = Ingestor(args.data_dir)
        try:
            report = ingestor.ingest(args.manifest)
        finally:
            ingestor.close()
        print(report.summary())
        return report.exit_code()

    if args.command == "build":
        from .ingest import IngestError, build_tiles

        try:
            count, skipped = build_tiles(args.data_dir)
        except IngestError as exc:
            print(f"fatal: {exc}", file=sys.stderr)
            return 2
        print(f"built {count} buildings")
        for rec_id, reason in skipped:
            print(f"    skipped {rec_id}: {reason}")
        return 1 if skipped else 0

    if args.command == "serve":
        import uvicorn

        from .engine import EngineError, TwinEngine
        from .server import create_app

        host, _, port = args.addr.rpartition(":")
        try:
            engine = TwinEngine(args.data_dir)
        except EngineError as exc:
            print(f"fatal: {exc}", file=sys.stderr)
            return 2
        app = create_app(engine)
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
