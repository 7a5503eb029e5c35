"""Route bodies, importable directly so clients can skip HTTP entirely."""

from __future__ import annotations

import tempfile
from dataclasses import asdict
from pathlib import Path

from ..groups import SPECS
from ..keysched import dealer_setup, save_bundle
from ..privacy import run_privacy_experiment
from ..reports import (
    bandwidth_sweep_csv,
    build_report,
    latency_sweep_csv,
    loss_sweep_csv,
    report_to_csv,
    traces_to_jsonl,
    transcript_to_jsonl,
)
from ..sim import config_from_json, config_from_kv_text, run_simulation
from .models import (
    PerfRequest,
    PerfResponse,
    PrivacyRequest,
    PrivacyResponse,
    RunReportModel,
    SetupRequest,
    SetupResponse,
    SimulateRequest,
    SimulateResponse,
)


def handle_setup(request: SetupRequest) -> SetupResponse:
    bundle = dealer_setup(
        SPECS[request.group],
        request.n,
        rounds=request.rounds,
        protocol=request.protocol,
        rng_seed=request.seed,
        correspondent_a=request.correspondent_a,
        correspondent_b=request.correspondent_b,
    )
    with tempfile.TemporaryDirectory() as tmp:
        save_bundle(bundle, tmp)
        files = {
            path.name: path.read_text()
            for path in sorted(Path(tmp).iterdir())
        }
    return SetupResponse(
        group=request.group,
        n=request.n,
        rounds=request.rounds,
        protocol=request.protocol,
        correspondent_a=request.correspondent_a,
        correspondent_b=request.correspondent_b,
        files=files,
    )


def handle_simulate(request: SimulateRequest) -> SimulateResponse:
    if request.config_kv is not None:
        cfg = config_from_kv_text(request.config_kv)
    else:
        cfg = config_from_json(request.config)
    traces = run_simulation(cfg)
    report = build_report(cfg, traces)
    return SimulateResponse(
        report=RunReportModel(**asdict(report)),
        report_csv=report_to_csv(report),
        trace_jsonl=traces_to_jsonl(cfg, traces) if request.include_trace else None,
        transcript_jsonl=(
            transcript_to_jsonl(traces) if request.include_transcript else None
        ),
    )


def handle_privacy(request: PrivacyRequest) -> PrivacyResponse:
    report = run_privacy_experiment(
        request.n,
        request.trials,
        seed=request.seed,
        group=SPECS[request.group],
        protocol=request.protocol,
        with_keys=request.with_keys,
    )
    return PrivacyResponse(
        **asdict(report), within_3_sigma=report.within_3_sigma
    )


def handle_perf(request: PerfRequest) -> PerfResponse:
    if request.kind == "latency":
        csv = latency_sweep_csv(request.ns, request.u, request.s, request.unit_ms)
    elif request.kind == "loss":
        csv = loss_sweep_csv(request.ps, request.ns)
    else:
        csv = bandwidth_sweep_csv(
            request.ns,
            request.f,
            request.packet_bytes,
            request.measure_rounds,
            request.seed,
        )
    return PerfResponse(kind=request.kind, csv=csv)
