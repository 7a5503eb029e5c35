"""Closed-form performance models: latency tails, loss ratios, bandwidth.

These serve two masters: standalone sweeps for figure data, and oracles
the simulator's measured statistics are checked against.  The log-normal
density here is the standard one, exp(-(ln x - u)^2 / (2 s^2)) divided
by x*s*sqrt(2*pi); delays are dimensionless model units scaled by an
explicit unit_scale (default 100 ms per unit).

Two bandwidth readings are reported side by side: the per-round formula
2(n-1)/f as written, and packet counters multiplied by the round rate.
The measured counters are authoritative; neither value is silently
corrected into the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate


class DomainError(ValueError):
    """Argument outside the model's domain."""


@dataclass(frozen=True)
class LatencyModel:
    """Log-normal one-way delay in scaled units."""

    u: float = 0.97
    s: float = 0.06
    unit_scale: float = 100.0  # milliseconds per model unit

    def __post_init__(self):
        if self.s <= 0:
            raise DomainError("log-normal shape must be positive")
        if self.unit_scale <= 0:
            raise DomainError("unit scale must be positive")


def lognormal_pdf(x: float, u: float, s: float) -> float:
    if x <= 0:
        raise DomainError("log-normal support is x > 0")
    z = (math.log(x) - u) / s
    return math.exp(-0.5 * z * z) / (x * s * math.sqrt(2 * math.pi))


def lognormal_cdf(x: float, u: float, s: float) -> float:
    """Pr(delay < x) via the error function."""
    if x <= 0:
        raise DomainError("log-normal support is x > 0")
    return 0.5 * math.erfc(-(math.log(x) - u) / (s * math.sqrt(2)))


def expected_max_latency(n: int, u: float = 0.97, s: float = 0.06) -> float:
    """E[max of n iid log-normal delays], in model units.

    Computed as the integral of 1 - F(x)^n by adaptive quadrature; the
    upper cutoff sits many shape-widths past where the max of n draws
    concentrates, so the truncated tail is far below the tolerance.
    """
    if n < 1:
        raise DomainError("need at least one delay")
    spread = math.sqrt(2 * math.log(n)) if n > 1 else 0.0
    upper = math.exp(u + s * (spread + 10.0))

    def integrand(x: float) -> float:
        return 1.0 - lognormal_cdf(x, u, s) ** n if x > 0 else 1.0

    value, _ = integrate.quad(integrand, 0.0, upper, limit=200)
    return value


def expected_max_latency_ms(n: int, model: LatencyModel) -> float:
    return expected_max_latency(n, model.u, model.s) * model.unit_scale


def monte_carlo_max_latency(
    n: int, u: float = 0.97, s: float = 0.06, trials: int = 10**5, seed: int = 0
) -> float:
    """Monte-Carlo oracle for expected_max_latency, in model units."""
    if n < 1 or trials < 1:
        raise DomainError("need at least one delay and one trial")
    rng = np.random.default_rng(seed)
    chunk = max(1, 2_000_000 // n)  # bound the working set, not the trial count
    remaining, total = trials, 0.0
    while remaining:
        take = min(chunk, remaining)
        total += float(rng.lognormal(u, s, size=(take, n)).max(axis=1).sum())
        remaining -= take
    return total / trials


def lossfree_round_ratio(p: float, n: int) -> float:
    """Probability that all n independent packets survive: (1-p)^n."""
    if not 0.0 <= p <= 1.0:
        raise DomainError("loss probability must be in [0, 1]")
    if n < 0:
        raise DomainError("packet count cannot be negative")
    return (1.0 - p) ** n


@dataclass(frozen=True)
class BandwidthReport:
    """Rotation-mode per-player traffic: formula readings and measurement.

    formula_per_round keeps the published 2(n-1)/f expression verbatim;
    model_* multiply packet counts by the round rate instead.  The
    measured_* fields are filled from a short simulated stream and are
    the authoritative numbers.
    """

    n: int
    f: float
    packet_bytes: int
    formula_per_round: float  # 2(n-1)/f, as published
    formula_per_player_per_round: float  # (n-1)/n * 2/f
    model_total_pps: float  # 2(n-1) * f packets/s across the network
    model_per_player_pps: float
    model_per_player_bps: float
    measured_total_pps: float | None = None
    measured_per_player_pps: float | None = None
    measured_per_player_bps: float | None = None


def bandwidth_per_player(
    n: int,
    f: float = 50.0,
    packet_bytes: int = 100,
    measure_rounds: int = 0,
    seed: int = 0,
) -> BandwidthReport:
    """Rotation-mode per-player bandwidth, modeled and optionally measured.

    With measure_rounds > 0 a lossless rotation stream is simulated and
    its packet counters (each packet counted once network-wide) are
    folded into per-second rates.
    """
    if n < 2:
        raise DomainError("need at least two players")
    if f <= 0:
        raise DomainError("round rate must be positive")
    total_pps = 2 * (n - 1) * f
    report = BandwidthReport(
        n=n,
        f=f,
        packet_bytes=packet_bytes,
        formula_per_round=2 * (n - 1) / f,
        formula_per_player_per_round=(n - 1) / n * 2 / f,
        model_total_pps=total_pps,
        model_per_player_pps=total_pps / n,
        model_per_player_bps=total_pps / n * packet_bytes * 8,
    )
    if measure_rounds > 0:
        from .sim import LatencySpec, SimConfig, run_simulation

        cfg = SimConfig(
            n=n,
            rounds=measure_rounds,
            protocol=2,
            group="standard",
            f=f,
            rotation="round_robin",
            packet_bytes=packet_bytes,
            latency=LatencySpec(kind="fixed", fixed_ms=1.0),
            record_events=False,
            rng_seed=seed,
        )
        traces = run_simulation(cfg)
        packets = sum(t.up_sent + t.down_sent for t in traces)
        octets = sum(t.bytes_up + t.bytes_down for t in traces)
        measured_total = packets * f / measure_rounds
        report = BandwidthReport(
            **{
                **report.__dict__,
                "measured_total_pps": measured_total,
                "measured_per_player_pps": measured_total / n,
                "measured_per_player_bps": octets * 8 * f / measure_rounds / n,
            }
        )
    return report


@dataclass(frozen=True)
class RelayLoad:
    """Fixed-relay traffic model: n senders at f rounds per second."""

    in_pps: float
    out_pps: float
    in_bps: float
    out_bps: float
    player_up_bps: float  # one player's uplink
    player_down_bps: float


def fixed_relay_load(n: int, f: float = 50.0, packet_bytes: int = 100) -> RelayLoad:
    if n < 1 or f <= 0:
        raise DomainError("need players and a positive round rate")
    pps = n * f
    return RelayLoad(
        in_pps=pps,
        out_pps=pps,
        in_bps=pps * packet_bytes * 8,
        out_bps=pps * packet_bytes * 8,
        player_up_bps=f * packet_bytes * 8,
        player_down_bps=f * packet_bytes * 8,
    )
