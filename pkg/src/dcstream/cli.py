"""Command-line front end.

Every subcommand builds a typed request and runs the matching service
handler in-process; pass --server URL to send the same request to a
running instance instead.  Output files land in --out, falling back to
the DCSTREAM_OUT environment variable, then ./dcstream-out.

Exit codes: 0 success, 2 configuration error, 3 I/O or transport error,
4 verification failure (a built-in check did not hold).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .service import models
from .service import handlers
from .sim import ConfigMismatch, config_from_kv_text, config_to_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VERIFY = 4

ENV_OUT = "DCSTREAM_OUT"


class TransportError(Exception):
    """Wrapper for network failures talking to --server."""


def _out_dir(args) -> Path:
    root = args.out or os.environ.get(ENV_OUT) or "dcstream-out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _call(args, route: str, request, handler) -> dict:
    """Run a handler locally, or POST the request to --server."""
    if not getattr(args, "server", None):
        return handler(request).model_dump()
    import httpx

    url = args.server.rstrip("/") + route
    try:
        response = httpx.post(url, json=request.model_dump(), timeout=600.0)
    except httpx.HTTPError as exc:
        raise TransportError(f"{url}: {exc}") from exc
    if response.status_code == 422:
        detail = response.json().get("detail", response.text)
        raise ValueError(f"server rejected the request: {detail}")
    if response.status_code != 200:
        raise TransportError(f"{url}: HTTP {response.status_code}")
    return response.json()


# --------------------------------------------------------------------------
# subcommands


def cmd_setup(args) -> int:
    request = models.SetupRequest(
        group=args.group,
        n=args.n,
        rounds=args.rounds,
        protocol=args.protocol,
        seed=args.seed,
        correspondent_a=args.correspondent_a,
        correspondent_b=args.correspondent_b,
    )
    body = _call(args, "/setup", request, handlers.handle_setup)
    target = _out_dir(args) / (
        args.name or f"bundle-p{args.protocol}-n{args.n}"
    )
    target.mkdir(parents=True, exist_ok=True)
    for filename, content in body["files"].items():
        (target / filename).write_text(content)
    # reload what was written; a bundle that cannot round-trip is useless
    from .keysched import load_bundle

    reloaded = load_bundle(target)
    if (reloaded.n, reloaded.rounds, reloaded.protocol) != (
        args.n, args.rounds, args.protocol
    ):
        print(f"verification failed: {target} does not match the request",
              file=sys.stderr)
        return EXIT_VERIFY
    print(f"wrote {len(body['files'])} files to {target}")
    return EXIT_OK


def _scenario_config(args):
    if args.config:
        text = Path(args.config).read_text()
        cfg = config_from_kv_text(text)
    else:
        cfg = config_from_kv_text("")
    overrides = {}
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if args.protocol is not None:
        overrides["protocol"] = args.protocol
    if args.variant is not None:
        overrides["variant"] = args.variant
    if args.name is not None:
        overrides["name"] = args.name
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
        cfg.validate()
    return cfg


def cmd_simulate(args) -> int:
    cfg = _scenario_config(args)
    request = models.SimulateRequest(
        config=config_to_json(cfg),
        include_trace=not args.no_trace,
        include_transcript=not args.no_transcript,
    )
    body = _call(args, "/simulate", request, handlers.handle_simulate)
    report = body["report"]
    out = _out_dir(args)
    stem = report["scenario"]
    (out / f"{stem}.report.csv").write_text(body["report_csv"])
    written = [f"{stem}.report.csv"]
    if body.get("trace_jsonl"):
        (out / f"{stem}.trace.jsonl").write_text(body["trace_jsonl"])
        written.append(f"{stem}.trace.jsonl")
    if body.get("transcript_jsonl"):
        (out / f"{stem}.transcript.jsonl").write_text(body["transcript_jsonl"])
        written.append(f"{stem}.transcript.jsonl")

    print(f"scenario {stem}: protocol {report['protocol']} "
          f"({report['variant']}), n={report['n']}, "
          f"{report['rounds']} rounds")
    print(f"  loss-free rounds: {report['lossfree_ratio']:.4f}"
          + (f" (model {report['model_lossfree_ratio']:.4f})"
             if report["model_lossfree_ratio"] is not None else ""))
    print(f"  recoveries: {report['recoveries_correct']}/"
          f"{report['recoveries_graded']} correct")
    if report["rejections"]:
        print(f"  rejections: {report['rejections']}")
    if report["banned"]:
        print(f"  banned players: {report['banned']}")
    if report["mean_round_wait_ms"] is not None:
        line = f"  mean round wait: {report['mean_round_wait_ms']:.1f} ms"
        if report["model_round_wait_ms"] is not None:
            line += f" (model {report['model_round_wait_ms']:.1f} ms)"
        print(line)
    print(f"  relay load: {report['relay_in_pps']:.0f} pkt/s in, "
          f"{report['relay_out_pps']:.0f} pkt/s out")
    print(f"  wrote {', '.join(written)} to {out}")
    return EXIT_OK


def cmd_privacy_test(args) -> int:
    request = models.PrivacyRequest(
        n=args.n,
        trials=args.trials,
        seed=args.seed,
        group=args.group,
        protocol=args.protocol,
        with_keys=args.with_keys,
    )
    body = _call(args, "/privacy-test", request, handlers.handle_privacy)
    out = _out_dir(args)
    suffix = "keys" if args.with_keys else "transcript"
    path = out / f"privacy-n{args.n}-{suffix}.json"
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    print(f"adversary {body['adversary']}: accuracy {body['accuracy']:.4f} "
          f"over {body['trials']} trials "
          f"(chance {body['chance']:.4f}, z={body['z']:+.2f})")
    print(f"  wrote {path}")
    if args.with_keys:
        if body["accuracy"] != 1.0:
            print("verification failed: key-informed adversary should be exact",
                  file=sys.stderr)
            return EXIT_VERIFY
    elif not body["within_3_sigma"]:
        print("verification failed: transcript adversary strayed from chance",
              file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


DEFAULT_NS = {
    "latency": [1, 2, 5, 10, 20, 50, 100],  # n=1 anchors the penalty curve
    "loss": [10, 50, 100],
    "bandwidth": [3, 5, 10, 20, 50, 100],  # a round needs three players
}
DEFAULT_PS = [0.001, 0.01, 0.05]


def cmd_perf(args) -> int:
    kinds = ["latency", "loss", "bandwidth"] if args.kind == "all" else [args.kind]
    out = _out_dir(args)
    for kind in kinds:
        request = models.PerfRequest(
            kind=kind,
            ns=args.ns if args.ns is not None else DEFAULT_NS[kind],
            ps=args.ps if args.ps is not None else DEFAULT_PS,
            u=args.u,
            s=args.s,
            unit_ms=args.unit_ms,
            f=args.f,
            packet_bytes=args.packet_bytes,
            measure_rounds=args.measure_rounds,
            seed=args.seed,
        )
        body = _call(args, "/perf", request, handlers.handle_perf)
        path = out / f"{kind}.csv"
        path.write_text(body["csv"])
        rows = body["csv"].count("\n") - 1
        print(f"wrote {rows} rows to {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcstream",
        description="Anonymous conferencing: setup, simulation, privacy "
                    "experiments, and performance sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, server=True):
        p.add_argument("--out", default=None,
                       help=f"output directory (default ${ENV_OUT} or ./dcstream-out)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        if server:
            p.add_argument("--server", default=None,
                           help="base URL of a running service; default runs in-process")

    p = sub.add_parser("setup", help="deal keys and write a bundle directory")
    p.add_argument("--group", choices=["toy", "standard"], default="standard")
    p.add_argument("--n", type=int, default=5, help="number of players")
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--protocol", type=int, choices=[1, 2, 3, 4], default=4)
    p.add_argument("--correspondent-a", type=int, default=1)
    p.add_argument("--correspondent-b", type=int, default=2)
    p.add_argument("--name", default=None, help="bundle directory name")
    add_common(p)
    p.set_defaults(func=cmd_setup, seed=0)

    p = sub.add_parser("simulate", help="run a scenario and write report plus logs")
    p.add_argument("--config", default=None, help="scenario file (name=value lines)")
    p.add_argument("--protocol", type=int, choices=[1, 2, 3, 4], default=None,
                   help="override the scenario's protocol level")
    p.add_argument("--variant", choices=["list", "no-list", "optimistic"],
                   default=None, help="override the recovery variant")
    p.add_argument("--name", default=None, help="override the scenario name")
    p.add_argument("--no-trace", action="store_true", help="skip the trace log")
    p.add_argument("--no-transcript", action="store_true",
                   help="skip the transcript log")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("privacy-test", help="measure correspondent anonymity")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--group", choices=["toy", "standard"], default="toy")
    p.add_argument("--protocol", type=int, choices=[3, 4], default=3)
    p.add_argument("--with-keys", action="store_true",
                   help="give the adversary the dealt key schedule")
    add_common(p)
    p.set_defaults(func=cmd_privacy_test, seed=0)

    p = sub.add_parser("perf", help="emit model sweep CSVs")
    p.add_argument("--kind", choices=["latency", "loss", "bandwidth", "all"],
                   default="all")
    p.add_argument("--ns", type=_int_list, default=None,
                   help="comma-separated group sizes (default per sweep)")
    p.add_argument("--ps", type=_float_list, default=None,
                   help="comma-separated loss probabilities")
    p.add_argument("--u", type=float, default=0.97)
    p.add_argument("--s", type=float, default=0.06)
    p.add_argument("--unit-ms", type=float, default=100.0)
    p.add_argument("--f", type=float, default=50.0)
    p.add_argument("--packet-bytes", type=int, default=100)
    p.add_argument("--measure-rounds", type=int, default=0,
                   help="also measure bandwidth from a simulated run")
    add_common(p)
    p.set_defaults(func=cmd_perf, seed=0)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ConfigMismatch, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
