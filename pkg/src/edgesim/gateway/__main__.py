"""Run the gateway: `python -m edgesim.gateway [--seed S] [--http PORT]`.

Default transport is newline-delimited JSON-RPC on stdin/stdout; --http
serves the same envelopes via POST instead.
"""

from __future__ import annotations

import argparse
import os
import sys

from .server import GatewayServer


def _parse_seed(raw: str):
    try:
        return int(raw)
    except ValueError:
        return raw


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="edgesim-gateway",
        description="MCP tool gateway for the cloud-edge simulator")
    parser.add_argument("--seed", default=os.environ.get("EDGESIM_SEED", "0"),
                        help="service seed (simulation ids and defaults)")
    parser.add_argument("--scenario-root",
                        default=os.environ.get("EDGESIM_SCENARIO_ROOT"),
                        help="directory resolved against scenario_path")
    parser.add_argument("--http", type=int, default=None, metavar="PORT",
                        help="serve HTTP POST on this port instead of stdio")
    parser.add_argument("--host", default="127.0.0.1",
                        help="bind address for --http")
    args = parser.parse_args(argv)

    server = GatewayServer(seed=_parse_seed(str(args.seed)),
                           scenario_root=args.scenario_root)
    if args.http is not None:
        httpd = server.serve_http(args.host, args.http)
        print(f"gateway listening on http://{args.host}:"
              f"{httpd.server_address[1]}", file=sys.stderr)
        try:
            httpd.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            httpd.server_close()
    else:
        server.serve_stream(sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
