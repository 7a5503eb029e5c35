"""Trace-derived reporting: run summaries, JSONL logs, sweep CSVs.

Everything here is a pure function of trace data, so any number in a
report or CSV can be recomputed from the emitted trace file.  Traffic
rates count each packet once network-wide at the configured round rate;
relay-side rates count what actually reached or left the relay.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Iterator, Sequence

from .perf import (
    bandwidth_per_player,
    expected_max_latency,
    lossfree_round_ratio,
)
from .sim import (
    AuditRecord,
    PlayerRoundEvent,
    RecoveryRecord,
    RoundTrace,
    SimConfig,
    config_from_json,
    config_to_json,
    stationary_loss,
)


@dataclass(frozen=True)
class RunReport:
    """One simulated stream, summarized; derived solely from traces."""

    scenario: str
    n: int
    rounds: int
    protocol: int
    variant: str
    rotation: str
    # recovery bookkeeping
    recoveries_graded: int
    recoveries_correct: int
    recoveries_failed: int
    recovery_outcomes: dict[str, int]
    rejections: dict[str, int]
    audits_triggered: int
    banned: tuple[int, ...]
    # loss statistics
    rounds_complete: int
    lossfree_ratio: float
    model_lossfree_ratio: float | None
    lossfree_delta: float | None
    measured_loss_rate: float
    model_loss_rate: float
    # latency statistics (complete rounds only, so the max is over a
    # fixed number of arrivals and comparable to the model)
    mean_round_wait_ms: float | None
    max_round_wait_ms: float | None
    model_round_wait_ms: float | None
    wait_delta_ms: float | None
    # traffic statistics
    relay_in_pps: float
    relay_out_pps: float
    relay_in_bps: float
    relay_out_bps: float
    per_player_pps: float
    per_player_bps: float
    model_per_player_bps: float | None


def build_report(cfg: SimConfig, traces: Sequence[RoundTrace]) -> RunReport:
    rounds = len(traces)
    if rounds == 0:
        raise ValueError("cannot report on an empty trace")

    graded = correct = 0
    outcomes: dict[str, int] = {}
    rejections: dict[str, int] = {}
    audits = 0
    banned: set[int] = set()
    complete = 0
    waits: list[float] = []
    arrived_packets = 0  # reached the relay, on time or late
    arrived_octets = 0.0
    sent_packets = lost_packets = 0
    out_packets = 0
    bytes_up = bytes_down = 0

    for trace in traces:
        for rec in trace.recoveries:
            outcomes[rec.outcome] = outcomes.get(rec.outcome, 0) + 1
            if rec.graded:
                graded += 1
                if rec.correct:
                    correct += 1
        for reason, count in trace.up_rejected.items():
            rejections[reason] = rejections.get(reason, 0) + count
        if trace.audit is not None and trace.audit.triggered:
            audits += 1
            banned.update(trace.audit.flagged)
        if trace.up_sent and len(trace.received) == trace.up_sent:
            complete += 1
            if trace.max_arrival_ms is not None:
                waits.append(trace.max_arrival_ms)
        sent_packets += trace.up_sent
        lost_packets += trace.up_lost
        arrived = trace.up_delivered + trace.up_late
        arrived_packets += arrived
        if trace.up_sent:
            arrived_octets += arrived * (trace.bytes_up / trace.up_sent)
        out_packets += trace.down_sent
        bytes_up += trace.bytes_up
        bytes_down += trace.bytes_down

    senders = cfg.n - 1 if cfg.rotation == "round_robin" else cfg.n
    model_lossfree = None
    if cfg.loss.kind in ("none", "bernoulli") and not cfg.adversaries:
        model_lossfree = lossfree_round_ratio(stationary_loss(cfg.loss), senders)
    lossfree = complete / rounds

    model_wait = None
    if cfg.latency.kind == "lognormal":
        model_wait = (
            expected_max_latency(senders, cfg.latency.u, cfg.latency.s)
            * cfg.latency.unit_ms
        )
    mean_wait = sum(waits) / len(waits) if waits else None

    per_second = cfg.f / rounds  # converts run totals into rates
    model_player_bps = None
    if cfg.rotation == "round_robin" and cfg.packet_bytes:
        model_player_bps = bandwidth_per_player(
            cfg.n, cfg.f, cfg.packet_bytes
        ).model_per_player_bps

    return RunReport(
        scenario=cfg.name or "run",
        n=cfg.n,
        rounds=rounds,
        protocol=cfg.protocol,
        variant=cfg.variant,
        rotation=cfg.rotation,
        recoveries_graded=graded,
        recoveries_correct=correct,
        recoveries_failed=graded - correct,
        recovery_outcomes=outcomes,
        rejections=rejections,
        audits_triggered=audits,
        banned=tuple(sorted(banned)),
        rounds_complete=complete,
        lossfree_ratio=lossfree,
        model_lossfree_ratio=model_lossfree,
        lossfree_delta=(lossfree - model_lossfree) if model_lossfree is not None else None,
        measured_loss_rate=lost_packets / sent_packets if sent_packets else 0.0,
        model_loss_rate=stationary_loss(cfg.loss),
        mean_round_wait_ms=mean_wait,
        max_round_wait_ms=max(waits) if waits else None,
        model_round_wait_ms=model_wait,
        wait_delta_ms=(mean_wait - model_wait)
        if mean_wait is not None and model_wait is not None
        else None,
        relay_in_pps=arrived_packets * per_second,
        relay_out_pps=out_packets * per_second,
        relay_in_bps=arrived_octets * 8 * per_second,
        relay_out_bps=bytes_down * 8 * per_second,
        per_player_pps=(sent_packets + out_packets) * per_second / cfg.n,
        per_player_bps=(bytes_up + bytes_down) * 8 * per_second / cfg.n,
        model_per_player_bps=model_player_bps,
    )


# --------------------------------------------------------------------------
# trace and transcript logs


def _dump_line(body: dict) -> str:
    return json.dumps(body, separators=(",", ":"), sort_keys=True)


def traces_to_jsonl(cfg: SimConfig, traces: Iterable[RoundTrace]) -> str:
    """Header line with the config, then one line per round."""
    lines = [_dump_line({"type": "config", "config": config_to_json(cfg)})]
    for trace in traces:
        lines.append(_dump_line({"type": "round", **asdict(trace)}))
    return "\n".join(lines) + "\n"


def traces_from_jsonl(text: str) -> tuple[SimConfig, list[RoundTrace]]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty trace log")
    header = json.loads(lines[0])
    if header.get("type") != "config":
        raise ValueError("trace log must start with a config line")
    cfg = config_from_json(header["config"])
    traces = []
    for line in lines[1:]:
        body = json.loads(line)
        if body.get("type") != "round":
            raise ValueError(f"unexpected line type {body.get('type')!r}")
        body.pop("type")
        body["received"] = tuple(body["received"])
        body["events"] = tuple(
            PlayerRoundEvent(**event) for event in body["events"]
        )
        body["recoveries"] = tuple(
            RecoveryRecord(
                **{
                    **rec,
                    "missing": tuple(rec["missing"])
                    if rec.get("missing") is not None
                    else None,
                }
            )
            for rec in body["recoveries"]
        )
        audit = body.get("audit")
        body["audit"] = (
            AuditRecord(audit["triggered"], tuple(audit["flagged"]))
            if audit is not None
            else None
        )
        traces.append(RoundTrace(**body))
    return cfg, traces


def transcript_events(traces: Iterable[RoundTrace]) -> Iterator[dict]:
    """Flatten traces into send/receive/accept/reject/broadcast/recover events."""
    for trace in traces:
        j = trace.round_no
        for event in trace.events:
            if event.status in ("delivered", "late", "lost"):
                yield {"event": "send", "round": j, "player": event.player,
                       "role": event.role, "sent_ms": event.sent_ms}
            if event.status in ("delivered", "late"):
                yield {"event": "receive", "round": j, "player": event.player,
                       "arrival_ms": event.arrival_ms}
                if event.accepted:
                    yield {"event": "accept", "round": j, "player": event.player}
                else:
                    yield {"event": "reject", "round": j, "player": event.player,
                           "reason": event.reason}
        yield {"event": "broadcast", "round": j, "aggregator": trace.aggregator,
               "received": list(trace.received), "total": trace.total}
        for rec in trace.recoveries:
            yield {"event": "recover", "round": j, "player": rec.player,
                   "outcome": rec.outcome, "graded": rec.graded,
                   "correct": rec.correct}
        if trace.audit is not None and trace.audit.triggered:
            yield {"event": "audit", "round": j,
                   "flagged": list(trace.audit.flagged)}


def transcript_to_jsonl(traces: Iterable[RoundTrace]) -> str:
    return "\n".join(_dump_line(event) for event in transcript_events(traces)) + "\n"


# --------------------------------------------------------------------------
# CSV emission


def _tally(cells: dict[str, int]) -> str:
    return ";".join(f"{key}={cells[key]}" for key in sorted(cells)) or "-"


def _num(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


REPORT_COLUMNS = (
    "scenario", "n", "rounds", "protocol", "variant", "rotation",
    "recoveries_graded", "recoveries_correct", "recoveries_failed",
    "recovery_outcomes", "rejections", "audits_triggered", "banned",
    "rounds_complete", "lossfree_ratio", "model_lossfree_ratio",
    "lossfree_delta", "measured_loss_rate", "model_loss_rate",
    "mean_round_wait_ms", "max_round_wait_ms", "model_round_wait_ms",
    "wait_delta_ms", "relay_in_pps", "relay_out_pps", "relay_in_bps",
    "relay_out_bps", "per_player_pps", "per_player_bps",
    "model_per_player_bps",
)


def report_to_csv(report: RunReport) -> str:
    """Fixed-schema one-row summary (header + data line)."""
    row = []
    for column in REPORT_COLUMNS:
        value = getattr(report, column)
        if column in ("recovery_outcomes", "rejections"):
            row.append(_tally(value))
        elif column == "banned":
            row.append(";".join(map(str, value)) or "-")
        else:
            row.append(_num(value))
    return ",".join(REPORT_COLUMNS) + "\n" + ",".join(row) + "\n"


def latency_sweep_csv(
    ns: Sequence[int], u: float = 0.97, s: float = 0.06, unit_ms: float = 100.0
) -> str:
    """Expected relay wait versus group size, in units and milliseconds."""
    base = expected_max_latency(1, u, s)
    lines = ["n,expected_max_units,expected_max_ms,penalty_ms"]
    for n in ns:
        value = expected_max_latency(n, u, s)
        lines.append(
            f"{n},{value:.9g},{value * unit_ms:.9g},{(value - base) * unit_ms:.9g}"
        )
    return "\n".join(lines) + "\n"


def loss_sweep_csv(ps: Sequence[float], ns: Sequence[int]) -> str:
    """Loss-free round probability (1-p)^n over a (p, n) grid."""
    lines = ["p,n,lossfree_model"]
    for p in ps:
        for n in ns:
            lines.append(f"{p:.9g},{n},{lossfree_round_ratio(p, n):.9g}")
    return "\n".join(lines) + "\n"


def bandwidth_sweep_csv(
    ns: Sequence[int],
    f: float = 50.0,
    packet_bytes: int = 100,
    measure_rounds: int = 0,
    seed: int = 0,
) -> str:
    """Rotation-mode per-player traffic versus group size."""
    lines = [
        "n,f,packet_bytes,formula_per_round,model_total_pps,"
        "model_per_player_pps,model_per_player_bps,measured_total_pps,"
        "measured_per_player_pps,measured_per_player_bps"
    ]
    for n in ns:
        r = bandwidth_per_player(n, f, packet_bytes, measure_rounds, seed)
        lines.append(
            ",".join(
                _num(value)
                for value in (
                    r.n, r.f, r.packet_bytes, r.formula_per_round,
                    r.model_total_pps, r.model_per_player_pps,
                    r.model_per_player_bps, r.measured_total_pps,
                    r.measured_per_player_pps, r.measured_per_player_bps,
                )
            )
        )
    return "\n".join(lines) + "\n"
