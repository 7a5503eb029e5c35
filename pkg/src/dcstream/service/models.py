"""Request and response shapes for the HTTP service.

The service is stateless: every call carries its full configuration and
returns complete artifacts (reports, CSVs, log text), so responses can
be written straight to disk by thin clients.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class SetupRequest(BaseModel):
    group: Literal["toy", "standard"] = "standard"
    n: int = Field(default=5, ge=3)
    rounds: int = Field(default=10, ge=1)
    protocol: int = Field(default=4, ge=1, le=4)
    seed: int = 0
    correspondent_a: int = Field(default=1, ge=1)
    correspondent_b: int = Field(default=2, ge=1)

    @model_validator(mode="after")
    def _distinct_endpoints(self):
        if self.correspondent_a == self.correspondent_b:
            raise ValueError("correspondents must be two distinct players")
        if max(self.correspondent_a, self.correspondent_b) > self.n:
            raise ValueError("correspondent index outside the player set")
        return self


class SetupResponse(BaseModel):
    group: str
    n: int
    rounds: int
    protocol: int
    correspondent_a: int
    correspondent_b: int
    files: dict[str, str]  # bundle filename -> file content


class SimulateRequest(BaseModel):
    """Exactly one of config_kv (text scenario file) or config (JSON)."""

    config_kv: str | None = None
    config: dict | None = None
    include_trace: bool = False
    include_transcript: bool = False

    @model_validator(mode="after")
    def _exactly_one_config(self):
        if (self.config_kv is None) == (self.config is None):
            raise ValueError("provide exactly one of config_kv or config")
        return self


class RunReportModel(BaseModel):
    scenario: str
    n: int
    rounds: int
    protocol: int
    variant: str
    rotation: str
    recoveries_graded: int
    recoveries_correct: int
    recoveries_failed: int
    recovery_outcomes: dict[str, int]
    rejections: dict[str, int]
    audits_triggered: int
    banned: list[int]
    rounds_complete: int
    lossfree_ratio: float
    model_lossfree_ratio: float | None
    lossfree_delta: float | None
    measured_loss_rate: float
    model_loss_rate: float
    mean_round_wait_ms: float | None
    max_round_wait_ms: float | None
    model_round_wait_ms: float | None
    wait_delta_ms: float | None
    relay_in_pps: float
    relay_out_pps: float
    relay_in_bps: float
    relay_out_bps: float
    per_player_pps: float
    per_player_bps: float
    model_per_player_bps: float | None


class SimulateResponse(BaseModel):
    report: RunReportModel
    report_csv: str
    trace_jsonl: str | None = None
    transcript_jsonl: str | None = None


class PrivacyRequest(BaseModel):
    n: int = Field(default=5, ge=3)
    trials: int = Field(default=1000, ge=1)
    seed: int = 0
    group: Literal["toy", "standard"] = "toy"
    protocol: int = Field(default=3, ge=3, le=4)
    with_keys: bool = False


class PrivacyResponse(BaseModel):
    n: int
    trials: int
    hits: int
    accuracy: float
    chance: float
    sigma: float
    z: float
    adversary: str
    within_3_sigma: bool


class PerfRequest(BaseModel):
    """One sweep family per call; unused knobs are ignored by the others."""

    kind: Literal["latency", "loss", "bandwidth"]
    ns: list[int] = Field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100])
    ps: list[float] = Field(default_factory=lambda: [0.001, 0.01, 0.05])
    u: float = 0.97
    s: float = 0.06
    unit_ms: float = 100.0
    f: float = 50.0
    packet_bytes: int = Field(default=100, ge=1)
    measure_rounds: int = Field(default=0, ge=0)
    seed: int = 0


class PerfResponse(BaseModel):
    kind: str
    csv: str
