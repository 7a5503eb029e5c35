"""Report building, log round-trips, and sweep CSV output."""

from __future__ import annotations

import json
import math

import pytest

from dcstream.perf import expected_max_latency
from dcstream.reports import (
    REPORT_COLUMNS,
    bandwidth_sweep_csv,
    build_report,
    latency_sweep_csv,
    loss_sweep_csv,
    report_to_csv,
    traces_from_jsonl,
    traces_to_jsonl,
    transcript_events,
    transcript_to_jsonl,
)
from dcstream.sim import (
    AdversarySpec,
    LatencySpec,
    LossSpec,
    SimConfig,
    run_simulation,
)


def lossless_cfg(**overrides) -> SimConfig:
    base = dict(
        n=4, rounds=20, protocol=3, group="toy", loss=LossSpec(kind="none"),
        rng_seed=7, name="unit",
    )
    base.update(overrides)
    return SimConfig(**base)


class TestBuildReport:
    def test_lossless_run_is_fully_complete_and_correct(self):
        cfg = lossless_cfg()
        traces = run_simulation(cfg)
        report = build_report(cfg, traces)
        assert report.scenario == "unit"
        assert report.rounds == 20
        assert report.rounds_complete == 20
        assert report.lossfree_ratio == 1.0
        assert report.model_lossfree_ratio == 1.0
        assert report.lossfree_delta == 0.0
        assert report.recoveries_graded == 40
        assert report.recoveries_correct == 40
        assert report.recoveries_failed == 0
        assert report.rejections == {}
        assert report.banned == ()

    def test_relay_rates_for_fixed_aggregator(self):
        # n packets in and n copies out per round, at f rounds per second
        cfg = lossless_cfg(n=5, f=50.0)
        traces = run_simulation(cfg)
        report = build_report(cfg, traces)
        assert report.relay_in_pps == pytest.approx(5 * 50.0)
        assert report.relay_out_pps == pytest.approx(5 * 50.0)
        assert report.relay_in_bps > 0
        assert report.relay_out_bps > 0

    def test_wait_statistics_track_the_latency_model(self):
        cfg = lossless_cfg(rounds=300)
        traces = run_simulation(cfg)
        report = build_report(cfg, traces)
        model = expected_max_latency(4, 0.97, 0.06) * 100.0
        assert report.model_round_wait_ms == pytest.approx(model)
        assert report.mean_round_wait_ms == pytest.approx(model, rel=0.05)
        assert report.wait_delta_ms == pytest.approx(
            report.mean_round_wait_ms - model
        )
        assert report.max_round_wait_ms >= report.mean_round_wait_ms

    def test_bernoulli_ratio_near_model(self):
        cfg = lossless_cfg(
            rounds=1000, loss=LossSpec(kind="bernoulli", p=0.01), rng_seed=3
        )
        traces = run_simulation(cfg)
        report = build_report(cfg, traces)
        assert report.model_lossfree_ratio == pytest.approx(0.99**4)
        assert abs(report.lossfree_delta) < 0.05
        assert 0.0 < report.measured_loss_rate < 0.05
        assert report.model_loss_rate == pytest.approx(0.01)

    def test_burst_loss_has_no_independence_model(self):
        cfg = lossless_cfg(
            rounds=50,
            loss=LossSpec(kind="gilbert_elliott", p_gb=0.1, p_bg=0.5),
        )
        traces = run_simulation(cfg)
        report = build_report(cfg, traces)
        assert report.model_lossfree_ratio is None
        assert report.lossfree_delta is None
        assert report.model_loss_rate == pytest.approx(0.1 / 0.6)

    def test_adversary_rejections_and_bans_are_tallied(self):
        cfg = SimConfig(
            n=5, rounds=15, protocol=3, group="standard", rng_seed=11,
            adversaries=(AdversarySpec(4, "random_opening"),),
        )
        traces = run_simulation(cfg)
        report = build_report(cfg, traces)
        assert report.rejections.get("bad_opening", 0) > 0
        assert report.model_lossfree_ratio is None  # not modeled with adversaries
        assert report.recoveries_correct == report.recoveries_graded

    def test_rotation_reports_model_player_bandwidth(self):
        cfg = lossless_cfg(
            n=4, rotation="round_robin", protocol=2, packet_bytes=100
        )
        traces = run_simulation(cfg)
        report = build_report(cfg, traces)
        expected = 2 * 3 * 50.0 / 4 * 100 * 8
        assert report.model_per_player_bps == pytest.approx(expected)
        # a lossless rotation run transmits exactly the modeled volume
        assert report.per_player_bps == pytest.approx(expected)

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            build_report(lossless_cfg(), [])


class TestLogs:
    def test_trace_log_round_trips_exactly(self):
        cfg = lossless_cfg(
            rounds=8, loss=LossSpec(kind="bernoulli", p=0.2), rng_seed=5
        )
        traces = run_simulation(cfg)
        text = traces_to_jsonl(cfg, traces)
        cfg2, traces2 = traces_from_jsonl(text)
        assert cfg2 == cfg
        assert traces2 == list(traces)

    def test_trace_log_is_byte_identical_across_runs(self):
        cfg = lossless_cfg(rounds=12, loss=LossSpec(kind="bernoulli", p=0.1))
        first = traces_to_jsonl(cfg, run_simulation(cfg))
        second = traces_to_jsonl(cfg, run_simulation(cfg))
        assert first == second

    def test_trace_log_rejects_bad_header(self):
        with pytest.raises(ValueError):
            traces_from_jsonl('{"type":"round"}\n')
        with pytest.raises(ValueError):
            traces_from_jsonl("")

    def test_transcript_covers_every_stage(self):
        cfg = lossless_cfg(rounds=4)
        traces = run_simulation(cfg)
        events = list(transcript_events(traces))
        kinds = {event["event"] for event in events}
        assert kinds == {"send", "receive", "accept", "broadcast", "recover"}
        sends = [e for e in events if e["event"] == "send"]
        assert len(sends) == 4 * 4  # every player, every round
        accepts = [e for e in events if e["event"] == "accept"]
        assert len(accepts) == 4 * 4
        recovers = [e for e in events if e["event"] == "recover"]
        assert len(recovers) == 2 * 4
        assert all(e["correct"] for e in recovers)

    def test_transcript_shows_rejections(self):
        cfg = SimConfig(
            n=5, rounds=10, protocol=3, group="standard", rng_seed=2,
            adversaries=(AdversarySpec(5, "random_opening"),),
        )
        traces = run_simulation(cfg)
        rejects = [
            e for e in transcript_events(traces) if e["event"] == "reject"
        ]
        assert rejects
        assert all(e["reason"] == "bad_opening" for e in rejects)
        assert all(e["player"] == 5 for e in rejects)

    def test_transcript_jsonl_parses_line_by_line(self):
        cfg = lossless_cfg(rounds=3)
        text = transcript_to_jsonl(run_simulation(cfg))
        lines = text.strip().split("\n")
        assert all(json.loads(line)["event"] for line in lines)


class TestCsv:
    def test_report_csv_shape(self):
        cfg = lossless_cfg()
        report = build_report(cfg, run_simulation(cfg))
        text = report_to_csv(report)
        header, row = text.strip().split("\n")
        assert header.split(",") == list(REPORT_COLUMNS)
        cells = row.split(",")
        assert len(cells) == len(REPORT_COLUMNS)
        assert cells[REPORT_COLUMNS.index("lossfree_ratio")] == "1"

    def test_latency_sweep_is_monotone_and_exceeds_threshold(self):
        text = latency_sweep_csv([1, 2, 5, 10, 50, 100])
        rows = [line.split(",") for line in text.strip().split("\n")[1:]]
        ms = [float(r[2]) for r in rows]
        assert ms == sorted(ms)
        assert all(b > a for a, b in zip(ms, ms[1:]))
        penalty_100 = float(rows[-1][3])
        assert penalty_100 > 30.0

    def test_loss_sweep_matches_closed_form(self):
        text = loss_sweep_csv([0.01], [10, 50])
        rows = [line.split(",") for line in text.strip().split("\n")[1:]]
        assert float(rows[0][2]) == pytest.approx(0.99**10)
        assert float(rows[1][2]) == pytest.approx(0.99**50)

    def test_bandwidth_sweep_model_row(self):
        text = bandwidth_sweep_csv([10, 100])
        rows = [line.split(",") for line in text.strip().split("\n")[1:]]
        n100 = rows[1]
        assert float(n100[5]) == pytest.approx(99.0)  # per-player pps
        assert float(n100[6]) == pytest.approx(79200.0)  # per-player bps
        assert n100[7] == ""  # no measurement requested

    def test_bandwidth_sweep_with_measurement(self):
        text = bandwidth_sweep_csv([4], measure_rounds=40)
        row = text.strip().split("\n")[1].split(",")
        assert float(row[7]) == pytest.approx(float(row[4]))
