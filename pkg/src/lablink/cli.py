"""Command-line entry points: `lablink serve` and `labsim run`."""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path

from .errors import BindError, ConfigError, LabLinkError


def _parse_listen(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"listen_address must be host:port, got {address!r}")
    return host, int(port)


def _check_bindable(host: str, port: int) -> None:
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}")
    finally:
        probe.close()


def serve(config_path: str | None, console_dir: str | None = None) -> None:
    """Fail fast on config/bind problems, then hand off to uvicorn."""
    import uvicorn

    from .api import create_app
    from .config import load_config
    from .service import LabLinkService

    config = load_config(config_path)
    host, port = _parse_listen(config.listen_address)
    _check_bindable(host, port)
    service = LabLinkService(config)
    app = create_app(service, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


def lablink_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="lablink", description="living-lab platform service")
    commands = parser.add_subparsers(dest="command", required=True)
    serve_cmd = commands.add_parser("serve", help="run the HTTP gateway")
    serve_cmd.add_argument("--config", help="path to a YAML config file")
    serve_cmd.add_argument("--console", help="directory of built console assets")
    args = parser.parse_args(argv)

    try:
        if args.command == "serve":
            serve(args.config, args.console)
    except LabLinkError as exc:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        return 1
    return 0


def labsim_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="labsim", description="deterministic fleet simulator")
    commands = parser.add_subparsers(dest="command", required=True)
    run_cmd = commands.add_parser("run", help="generate a scenario and drive a target")
    run_cmd.add_argument("--scenario", required=True, help="scenario YAML file")
    run_cmd.add_argument(
        "--target",
        default="inproc",
        help="'inproc' or the base URL of a running gateway",
    )
    run_cmd.add_argument("--out", help="write the report JSON here (default: stdout)")
    run_cmd.add_argument("--token", help="bearer token for HTTP targets")
    run_cmd.add_argument(
        "--realtime",
        action="store_true",
        help="pace emission at wall-clock speed instead of the virtual clock",
    )
    args = parser.parse_args(argv)

    from .sim import HttpTarget, run, scenario_from_file

    try:
        scenario = scenario_from_file(args.scenario)
        target = args.target
        if target != "inproc":
            target = HttpTarget(target, token=args.token)
        report = run(
            scenario,
            target,
            pace_s_per_sim_s=1.0 if args.realtime else 0.0,
        )
    except LabLinkError as exc:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        return 1

    payload = json.dumps(report.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    return 0


if __name__ == "__main__":
    sys.exit(lablink_main())
