"""Stateless HTTP service exposing setup, simulation, privacy, and perf."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..sim import ConfigMismatch
from . import handlers
from .models import (
    PerfRequest,
    PerfResponse,
    PrivacyRequest,
    PrivacyResponse,
    SetupRequest,
    SetupResponse,
    SimulateRequest,
    SimulateResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="dcstream",
        version=__version__,
        description=(
            "Anonymous-conferencing toolkit: key-schedule setup, network "
            "simulation, anonymity experiments, and performance sweeps. "
            "Every endpoint is a pure function of its request body."
        ),
    )

    def run(handler, request):
        try:
            return handler(request)
        except (ValueError, ConfigMismatch, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/setup", response_model=SetupResponse)
    def setup(request: SetupRequest) -> SetupResponse:
        return run(handlers.handle_setup, request)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(request: SimulateRequest) -> SimulateResponse:
        return run(handlers.handle_simulate, request)

    @app.post("/privacy-test", response_model=PrivacyResponse)
    def privacy_test(request: PrivacyRequest) -> PrivacyResponse:
        return run(handlers.handle_privacy, request)

    @app.post("/perf", response_model=PerfResponse)
    def perf(request: PerfRequest) -> PerfResponse:
        return run(handlers.handle_perf, request)

    return app
