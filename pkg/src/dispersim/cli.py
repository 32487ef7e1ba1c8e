"""Command line interface.

Every command is a thin client of the HTTP service: by default an in-process
app instance, or a remote server via --server.  Outputs are downloaded into
--out.  Exit codes: 0 success, 2 config error, 3 simulation-quality failure,
4 IO failure, 1 unexpected.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__, config

COMMANDS = ("rates", "me", "trajectory", "ensemble", "threshold", "oracle-check")
EXIT_CODES = {"config": 2, "quality": 3, "io": 4}

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_QUALITY = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dispersim",
        description="Joint homodyne measurement simulator for two dispersively "
        "coupled qubits.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group()
    source.add_argument("--config", metavar="PATH", help="INI config file")
    source.add_argument(
        "--preset",
        choices=sorted(config.PRESETS),
        help="named parameter set (default: library defaults)",
    )
    common.add_argument("--seed", type=int, metavar="U64", help="master seed override")
    common.add_argument("--workers", type=int, metavar="N", help="worker count override")
    common.add_argument("--out", metavar="DIR", help="output directory (default out/<command>)")
    common.add_argument("--server", metavar="URL", help="run on a remote server instead of in-process")

    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} pipeline")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _build_payload(args) -> dict:
    payload: dict = {"kind": args.command}
    if args.config is not None:
        cfg = config.load(args.config)  # OSError/ConfigError handled by caller
        cfg.validate()
        payload["config"] = cfg.as_dict()
    elif args.preset is not None:
        payload["preset"] = args.preset
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise config.ConfigError(f"seed must fit in u64, got {args.seed}")
        payload["master_seed"] = args.seed
    if args.workers is not None:
        if args.workers < 0:
            raise config.ConfigError(f"workers must be >= 0, got {args.workers}")
        payload["workers"] = args.workers
    return payload


def _detail(response) -> dict:
    try:
        detail = response.json().get("detail")
    except ValueError:
        return {"error_kind": "internal", "message": response.text}
    if isinstance(detail, dict):
        return detail
    # pydantic validation errors arrive as a list of field problems
    return {"error_kind": "config", "message": json.dumps(detail)}


def _fail(kind: str | None, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_CODES.get(kind or "internal", EXIT_INTERNAL)


def _run_job(client, payload: dict, out_dir: str) -> int:
    response = client.post("/jobs", params={"wait": True}, json=payload)
    if response.status_code != 200:
        detail = _detail(response)
        return _fail(detail.get("error_kind"), detail.get("message", response.text))
    info = response.json()

    os.makedirs(out_dir, exist_ok=True)
    names = client.get(f"/jobs/{info['id']}/files").json()["files"]
    for name in names:
        data = client.get(f"/jobs/{info['id']}/files/{name}")
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(data.content)

    if info["status"] != "done":
        return _fail(info.get("error_kind"), info.get("error_message", "job failed"))
    print(json.dumps(info.get("summary") or {}, indent=2, sort_keys=True))
    return EXIT_OK


def _client(args):
    if args.server:
        import httpx

        return httpx.Client(base_url=args.server, timeout=None)
    from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK

    try:
        payload = _build_payload(args)
    except config.ConfigError as exc:
        return _fail("config", str(exc))
    except OSError as exc:
        return _fail("io", str(exc))

    out_dir = args.out or os.path.join("out", args.command)
    try:
        with _client(args) as client:
            return _run_job(client, payload, out_dir)
    except OSError as exc:
        return _fail("io", str(exc))
    except Exception as exc:  # connection errors from httpx, unexpected failures
        name = type(exc).__name__
        if "Connect" in name or "Timeout" in name or "Network" in name:
            return _fail("io", f"cannot reach server: {exc}")
        raise


if __name__ == "__main__":
    sys.exit(main())
