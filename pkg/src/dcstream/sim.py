"""Deterministic discrete-event simulator for streaming rounds.

One call to :func:`run_simulation` plays a whole stream: per round it
samples channel loss and latency for every packet, delivers what
survives to the acting relay, closes the round at the deadline,
distributes the broadcast (also subject to loss), and runs recovery at
both endpoints against ground truth.  Everything is a pure function of
the config and its seed: every random stream is derived from the master
seed plus a stable label, so toggling one feature never shifts the
draws of another.

Adversary strategies model disruptive bystanders: players that send
random openings, replay old ones, attach proofs for the wrong slot, or
silently drop out.  In optimistic mode (no per-packet verification) a
garbled round triggers an audit and flagged players are banned from
later rounds.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

from .groups import SPECS
from .kvconf import parse_bool, parse_int, parse_kv_text
from .protocol import (
    REJECT_LATE,
    AggregatorState,
    CollectionPacket,
    PlayerState,
    audit_round,
    broadcast_packet_size,
    collection_packet_size,
    frame_payload,
    unframe_payload,
)
from .keysched import SetupBundle, dealer_setup


class ConfigMismatch(Exception):
    """Setup bundle and scenario disagree on shape or roles."""


ADVERSARY_STRATEGIES = (
    "random_opening",
    "replayed_opening",
    "wrong_round_proof",
    "drop_silently",
)

VARIANTS = ("list", "no-list", "optimistic")
ROTATIONS = ("fixed_aggregator", "round_robin")


@dataclass(frozen=True)
class LatencySpec:
    """Per-packet one-way delay model."""

    kind: str = "lognormal"  # lognormal | fixed
    u: float = 0.97
    s: float = 0.06
    unit_ms: float = 100.0  # milliseconds per log-normal unit
    fixed_ms: float = 10.0


@dataclass(frozen=True)
class LossSpec:
    """Per-link packet loss model."""

    kind: str = "none"  # none | bernoulli | gilbert_elliott
    p: float = 0.0
    p_gb: float = 0.0  # good -> bad transition probability
    p_bg: float = 0.0  # bad -> good transition probability
    e_good: float = 0.0  # loss probability in the good state
    e_bad: float = 1.0  # loss probability in the bad state


@dataclass(frozen=True)
class AdversarySpec:
    player: int
    strategy: str


@dataclass(frozen=True)
class SimConfig:
    n: int = 5
    rounds: int = 10
    protocol: int = 4
    variant: str = "list"
    group: str = "standard"
    f: float = 50.0  # rounds (voice packets) per second
    latency: LatencySpec = field(default_factory=LatencySpec)
    loss: LossSpec = field(default_factory=LossSpec)
    broadcast_loss: bool = True
    deadline_ms: float | None = None
    rotation: str = "fixed_aggregator"
    correspondent_a: int = 1
    correspondent_b: int = 2
    adversaries: tuple[AdversarySpec, ...] = ()
    payload_bytes: int = 0  # 0 = raw random scalar payloads
    packet_bytes: int = 0  # 0 = actual wire sizes
    max_missing: int = 1
    record_events: bool = True
    name: str = ""
    rng_seed: int = 0
    setup_seed: int | None = None

    def validate(self) -> None:
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if self.rounds < 1:
            raise ValueError("rounds must be positive")
        if self.protocol not in (1, 2, 3, 4):
            raise ValueError(f"unknown protocol level {self.protocol}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.group not in SPECS:
            raise ValueError(f"group must be one of {sorted(SPECS)}")
        if self.f <= 0:
            raise ValueError("round rate must be positive")
        if self.rotation not in ROTATIONS:
            raise ValueError(f"rotation must be one of {ROTATIONS}")
        if self.latency.kind not in ("lognormal", "fixed"):
            raise ValueError(f"unknown latency model {self.latency.kind}")
        if self.latency.kind == "lognormal" and self.latency.s <= 0:
            raise ValueError("log-normal shape must be positive")
        if self.latency.unit_ms <= 0 or self.latency.fixed_ms < 0:
            raise ValueError("latency scales must be positive")
        if self.loss.kind not in ("none", "bernoulli", "gilbert_elliott"):
            raise ValueError(f"unknown loss model {self.loss.kind}")
        for name in ("p", "p_gb", "p_bg", "e_good", "e_bad"):
            value = getattr(self.loss, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"loss.{name} must be a probability, got {value}")
        if self.deadline_ms is not None and self.deadline_ms <= 0:
            raise ValueError("deadline must be positive when set")
        a, b = self.correspondent_a, self.correspondent_b
        if not (1 <= a <= self.n and 1 <= b <= self.n) or a == b:
            raise ValueError("endpoints must be two distinct players")
        seen = set()
        for adv in self.adversaries:
            if not 1 <= adv.player <= self.n:
                raise ValueError(f"adversary player {adv.player} out of range")
            if adv.player in (a, b):
                raise ValueError("adversaries must be bystanders")
            if adv.player in seen:
                raise ValueError(f"duplicate adversary for player {adv.player}")
            if adv.strategy not in ADVERSARY_STRATEGIES:
                raise ValueError(f"unknown adversary strategy {adv.strategy}")
            if adv.strategy == "wrong_round_proof" and self.protocol != 4:
                raise ValueError("wrong_round_proof needs the proof-carrying level 4")
            seen.add(adv.player)
        if not 0 <= self.max_missing <= 2:
            raise ValueError("max_missing bounded to 0..2")
        if self.payload_bytes < 0 or self.packet_bytes < 0:
            raise ValueError("byte sizes cannot be negative")
        if self.variant == "no-list":
            if self.payload_bytes < 1:
                raise ValueError("no-list decoding needs framed payloads")
            if self.group == "toy":
                raise ValueError("toy group scalars are too narrow to frame")
        if self.variant == "optimistic" and self.protocol != 2:
            raise ValueError("optimistic mode runs on the unverified level 2")
        if self.payload_bytes:
            spec = SPECS[self.group]
            cap = spec.scalar_bytes - 4
            if self.payload_bytes > cap:
                raise ValueError(f"payload exceeds frame capacity of {cap} bytes")


# --------------------------------------------------------------------------
# channels


def _sub_rng(master: int, label: str) -> random.Random:
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def gilbert_elliott_step(
    state: str, spec: LossSpec, rng: random.Random
) -> tuple[bool, str]:
    """One burst-channel step: draw loss by current state, then move."""
    lost = rng.random() < (spec.e_bad if state == "bad" else spec.e_good)
    if state == "good":
        state = "bad" if rng.random() < spec.p_gb else "good"
    else:
        state = "good" if rng.random() < spec.p_bg else "bad"
    return lost, state


class LossChannel:
    """Stateful per-link loss process with its own random stream."""

    def __init__(self, spec: LossSpec, rng: random.Random):
        self.spec = spec
        self.rng = rng
        self.state = "good"

    def step(self) -> bool:
        if self.spec.kind == "none":
            return False
        if self.spec.kind == "bernoulli":
            return self.rng.random() < self.spec.p
        lost, self.state = gilbert_elliott_step(self.state, self.spec, self.rng)
        return lost


def stationary_loss(spec: LossSpec) -> float:
    """Long-run loss probability of the channel."""
    if spec.kind == "none":
        return 0.0
    if spec.kind == "bernoulli":
        return spec.p
    total = spec.p_gb + spec.p_bg
    if total == 0:
        return spec.e_good  # chain never leaves the good state
    pi_bad = spec.p_gb / total
    return (1 - pi_bad) * spec.e_good + pi_bad * spec.e_bad


class LatencyChannel:
    def __init__(self, spec: LatencySpec, rng: random.Random):
        self.spec = spec
        self.rng = rng

    def sample_ms(self) -> float:
        if self.spec.kind == "fixed":
            return self.spec.fixed_ms
        return self.rng.lognormvariate(self.spec.u, self.spec.s) * self.spec.unit_ms


def rotate_aggregator(round_no: int, n: int) -> int:
    """Round-robin relay duty: rounds 1..n map to players 1..n, then wrap."""
    return (round_no - 1) % n + 1


# --------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class PlayerRoundEvent:
    player: int
    role: str  # bystander | correspondent_a | correspondent_b | adversary
    status: str  # delivered | lost | late | silent | banned | aggregator
    accepted: bool
    reason: str | None = None
    sent_ms: float | None = None
    arrival_ms: float | None = None


@dataclass(frozen=True)
class RecoveryRecord:
    player: int
    outcome: str  # ok | peer_absent | undecodable | no_broadcast
    value: int | None
    expected: int | None
    graded: bool  # both-delivered-and-verified condition held
    correct: bool | None
    missing: tuple[int, ...] | None = None


@dataclass(frozen=True)
class AuditRecord:
    triggered: bool
    flagged: tuple[int, ...]


@dataclass(frozen=True)
class RoundTrace:
    round_no: int
    aggregator: int  # 0 = dedicated relay outside the player set
    received: tuple[int, ...]
    total: int
    up_sent: int
    up_delivered: int
    up_lost: int
    up_late: int
    up_rejected: dict[str, int]
    down_sent: int
    down_delivered: int
    down_lost: int
    bytes_up: int
    bytes_down: int
    max_arrival_ms: float | None
    events: tuple[PlayerRoundEvent, ...]
    recoveries: tuple[RecoveryRecord, ...]
    audit: AuditRecord | None


# --------------------------------------------------------------------------
# simulation


def _check_bundle(cfg: SimConfig, bundle: SetupBundle) -> None:
    if bundle.n != cfg.n:
        raise ConfigMismatch(f"bundle is for n={bundle.n}, scenario wants {cfg.n}")
    if bundle.protocol != cfg.protocol:
        raise ConfigMismatch(
            f"bundle is level {bundle.protocol}, scenario wants {cfg.protocol}"
        )
    if bundle.rounds < cfg.rounds:
        raise ConfigMismatch(
            f"bundle covers {bundle.rounds} rounds, scenario wants {cfg.rounds}"
        )
    if {bundle.correspondent_a, bundle.correspondent_b} != {
        cfg.correspondent_a,
        cfg.correspondent_b,
    }:
        raise ConfigMismatch("bundle endpoints differ from scenario endpoints")
    if bundle.group.spec != SPECS[cfg.group]:
        raise ConfigMismatch("bundle group differs from scenario group")


def run_simulation(
    cfg: SimConfig, bundle: SetupBundle | None = None
) -> list[RoundTrace]:
    """Play cfg.rounds rounds and return one trace per round.

    A bundle may be passed to reuse dealer output across runs; it must
    match the scenario shape.  Fully deterministic per (cfg, seeds).
    """
    cfg.validate()
    if bundle is None:
        setup_seed = cfg.setup_seed if cfg.setup_seed is not None else cfg.rng_seed
        bundle = dealer_setup(
            SPECS[cfg.group],
            cfg.n,
            cfg.rounds,
            cfg.protocol,
            rng_seed=setup_seed,
            correspondent_a=cfg.correspondent_a,
            correspondent_b=cfg.correspondent_b,
        )
    else:
        _check_bundle(cfg, bundle)

    params = bundle.group.public()
    a, b = cfg.correspondent_a, cfg.correspondent_b
    players: dict[int, PlayerState] = {}
    for view in bundle.players:
        corr = bundle.correspondent_for(view.index) if view.index in (a, b) else None
        players[view.index] = PlayerState(view, corr)
    relay = AggregatorState(bundle.aggregator, deadline=cfg.deadline_ms)

    up_loss = {
        i: LossChannel(cfg.loss, _sub_rng(cfg.rng_seed, f"up-loss-{i}"))
        for i in range(1, cfg.n + 1)
    }
    down_loss = {
        i: LossChannel(cfg.loss, _sub_rng(cfg.rng_seed, f"down-loss-{i}"))
        for i in range(1, cfg.n + 1)
    }
    up_lat = {
        i: LatencyChannel(cfg.latency, _sub_rng(cfg.rng_seed, f"up-lat-{i}"))
        for i in range(1, cfg.n + 1)
    }
    msg_rng = _sub_rng(cfg.rng_seed, "messages")
    adv_rng = _sub_rng(cfg.rng_seed, "adversary")

    rotation = cfg.rotation == "round_robin"
    strategies = {adv.player: adv.strategy for adv in cfg.adversaries}
    up_size = cfg.packet_bytes or collection_packet_size(
        params, cfg.protocol, bundle.padded_rounds
    )
    q = params.q
    banned: set[int] = set()
    last_sent: dict[int, CollectionPacket] = {}
    traces: list[RoundTrace] = []

    for j in range(1, cfg.rounds + 1):
        agg_id = rotate_aggregator(j, cfg.n) if rotation else 0
        events: list[PlayerRoundEvent] = []
        expected: dict[int, int] = {}

        def role_of(i: int) -> str:
            if i in strategies:
                return "adversary"
            if i == a:
                return "correspondent_a"
            if i == b:
                return "correspondent_b"
            return "bystander"

        # endpoints queue this round's payload
        for c in (a, b):
            if c == agg_id or c in banned:
                continue
            if cfg.payload_bytes:
                m = frame_payload(msg_rng.randbytes(cfg.payload_bytes), q)
            else:
                m = msg_rng.randrange(q)
            players[c].queue_message(m)
            expected[c] = m

        # collection phase
        arrivals: list[tuple[float, int, CollectionPacket]] = []
        up_sent = up_lost_count = 0
        for i in range(1, cfg.n + 1):
            state = players[i]
            if i == agg_id:
                if cfg.record_events:
                    events.append(
                        PlayerRoundEvent(i, role_of(i), "aggregator", False)
                    )
                continue
            if i in banned:
                if cfg.record_events:
                    events.append(PlayerRoundEvent(i, role_of(i), "banned", False))
                continue
            strategy = strategies.get(i)
            if strategy == "drop_silently":
                state.emit(j)  # burns the slot; nothing leaves the host
                if cfg.record_events:
                    events.append(PlayerRoundEvent(i, role_of(i), "silent", False))
                continue
            packet = state.emit(j)
            if strategy == "random_opening":
                packet = replace(packet, opened=adv_rng.randrange(q))
            elif strategy == "replayed_opening":
                prev = last_sent.get(i)
                if prev is not None:
                    packet = replace(
                        prev, round_no=j
                    )  # stale opening under a fresh round number
            elif strategy == "wrong_round_proof":
                wrong = j + 1 if j < bundle.padded_rounds else 1
                packet = replace(packet, proof=state.position_proof(wrong))
            if strategy is not None:
                last_sent[i] = packet
            up_sent += 1
            if up_loss[i].step():
                up_lost_count += 1
                if cfg.record_events:
                    events.append(
                        PlayerRoundEvent(i, role_of(i), "lost", False, sent_ms=0.0)
                    )
                continue
            arrivals.append((up_lat[i].sample_ms(), i, packet))

        up_delivered = up_late = 0
        up_rejected: dict[str, int] = {}
        max_arrival: float | None = None
        accepted_packets: list[CollectionPacket] = []
        for arrival, i, packet in sorted(arrivals, key=lambda t: (t[0], t[1])):
            result = relay.ingest(packet, arrival_time=arrival)
            if result.reason == REJECT_LATE:
                up_late += 1
                status = "late"
            else:
                up_delivered += 1
                status = "delivered"
            if result.accepted:
                accepted_packets.append(packet)
                if max_arrival is None or arrival > max_arrival:
                    max_arrival = arrival
            else:
                up_rejected[result.reason] = up_rejected.get(result.reason, 0) + 1
            if cfg.record_events:
                events.append(
                    PlayerRoundEvent(
                        i,
                        role_of(i),
                        status,
                        result.accepted,
                        reason=result.reason,
                        sent_ms=0.0,
                        arrival_ms=arrival,
                    )
                )
        broadcast = relay.finalize()

        # broadcast phase
        recipients = [
            i for i in range(1, cfg.n + 1) if i != agg_id and i not in banned
        ]
        down_size = cfg.packet_bytes or broadcast_packet_size(
            params, len(broadcast.received), include_received=cfg.variant != "no-list"
        )
        has_broadcast: dict[int, bool] = {}
        if agg_id:
            has_broadcast[agg_id] = True  # the acting relay holds it already
        down_delivered = down_lost = 0
        for i in recipients:
            lost = cfg.broadcast_loss and down_loss[i].step()
            has_broadcast[i] = not lost
            if lost:
                down_lost += 1
            else:
                down_delivered += 1

        # recovery at both endpoints
        recoveries: list[RecoveryRecord] = []
        missing_true = frozenset(range(1, cfg.n + 1)) - broadcast.received
        for c, peer in ((a, b), (b, a)):
            if c in banned:
                continue
            if not has_broadcast.get(c, False):
                recoveries.append(
                    RecoveryRecord(c, "no_broadcast", None, None, False, None)
                )
                continue
            if cfg.variant == "no-list":
                decode = players[c].recover_without_list(
                    j, broadcast.total, cfg.max_missing
                )
                graded = len(missing_true) <= cfg.max_missing
                exp = expected.get(peer, 0) if peer in broadcast.received else 0
                recoveries.append(
                    RecoveryRecord(
                        c,
                        "ok" if decode.ok else "undecodable",
                        decode.message,
                        exp if graded else None,
                        graded,
                        (decode.ok and decode.message == exp) if graded else None,
                        tuple(sorted(decode.missing)) if decode.missing is not None else None,
                    )
                )
            else:
                value = players[c].recover(broadcast)
                graded = peer in broadcast.received
                exp = expected.get(peer) if graded else None
                recoveries.append(
                    RecoveryRecord(
                        c,
                        "ok" if value is not None else "peer_absent",
                        value,
                        exp,
                        graded,
                        (value == exp) if graded else None,
                    )
                )

        # optimistic mode: garble triggers an audit and bans the flagged
        audit: AuditRecord | None = None
        if cfg.variant == "optimistic":
            garbled = False
            for rec in recoveries:
                if rec.outcome != "ok" or rec.value is None:
                    continue
                if cfg.payload_bytes:
                    if unframe_payload(rec.value, q) is None:
                        garbled = True
                elif rec.graded and rec.correct is False:
                    # stand-in for the out-of-band "that is not what I
                    # sent" signal when payloads are raw scalars
                    garbled = True
            flagged: frozenset[int] = frozenset()
            if garbled:
                flagged = audit_round(
                    accepted_packets, bundle.correspondent_for(a), j
                )
                banned |= flagged
            audit = AuditRecord(garbled, tuple(sorted(flagged)))

        traces.append(
            RoundTrace(
                round_no=j,
                aggregator=agg_id,
                received=tuple(sorted(broadcast.received)),
                total=broadcast.total,
                up_sent=up_sent,
                up_delivered=up_delivered,
                up_lost=up_lost_count,
                up_late=up_late,
                up_rejected=up_rejected,
                down_sent=len(recipients),
                down_delivered=down_delivered,
                down_lost=down_lost,
                bytes_up=up_sent * up_size,
                bytes_down=len(recipients) * down_size,
                max_arrival_ms=max_arrival,
                events=tuple(events),
                recoveries=tuple(recoveries),
                audit=audit,
            )
        )
        for state in players.values():
            state.finish_round()
    return traces


# --------------------------------------------------------------------------
# config serialization


def config_to_json(cfg: SimConfig) -> dict:
    body = asdict(cfg)
    body["adversaries"] = [asdict(adv) for adv in cfg.adversaries]
    return body


def config_from_json(body: Mapping) -> SimConfig:
    data = dict(body)
    if "latency" in data:
        data["latency"] = LatencySpec(**data["latency"])
    if "loss" in data:
        data["loss"] = LossSpec(**data["loss"])
    data["adversaries"] = tuple(
        AdversarySpec(**adv) for adv in data.get("adversaries", ())
    )
    cfg = SimConfig(**data)
    cfg.validate()
    return cfg


_SCENARIO_KEYS = {
    "name",
    "n",
    "rounds",
    "protocol",
    "variant",
    "group",
    "f",
    "rotation",
    "latency",
    "latency_u",
    "latency_s",
    "latency_unit_ms",
    "latency_fixed_ms",
    "loss",
    "loss_p",
    "loss_p_gb",
    "loss_p_bg",
    "loss_e_good",
    "loss_e_bad",
    "broadcast_loss",
    "deadline_ms",
    "correspondent_a",
    "correspondent_b",
    "adversaries",
    "payload_bytes",
    "packet_bytes",
    "max_missing",
    "record_events",
    "seed",
    "setup_seed",
}


def config_from_kv(pairs: Mapping[str, str]) -> SimConfig:
    """Build a validated SimConfig from scenario-file pairs.

    Every key is optional; unknown keys are an error so typos never
    silently fall back to defaults.
    """
    unknown = set(pairs) - _SCENARIO_KEYS
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    defaults = SimConfig()

    def get_int(key: str, fallback: int) -> int:
        return parse_int(pairs[key]) if key in pairs else fallback

    def get_float(key: str, fallback: float) -> float:
        return float(pairs[key]) if key in pairs else fallback

    latency = LatencySpec(
        kind=pairs.get("latency", defaults.latency.kind),
        u=get_float("latency_u", defaults.latency.u),
        s=get_float("latency_s", defaults.latency.s),
        unit_ms=get_float("latency_unit_ms", defaults.latency.unit_ms),
        fixed_ms=get_float("latency_fixed_ms", defaults.latency.fixed_ms),
    )
    loss = LossSpec(
        kind=pairs.get("loss", defaults.loss.kind),
        p=get_float("loss_p", defaults.loss.p),
        p_gb=get_float("loss_p_gb", defaults.loss.p_gb),
        p_bg=get_float("loss_p_bg", defaults.loss.p_bg),
        e_good=get_float("loss_e_good", defaults.loss.e_good),
        e_bad=get_float("loss_e_bad", defaults.loss.e_bad),
    )
    adversaries = []
    if "adversaries" in pairs:
        for part in pairs["adversaries"].split(","):
            part = part.strip()
            if not part:
                continue
            try:
                player, strategy = part.split(":")
                adversaries.append(AdversarySpec(int(player), strategy.strip()))
            except ValueError as exc:
                raise ValueError(
                    f"adversary entries look like '3:random_opening', got {part!r}"
                ) from exc
    deadline: float | None = defaults.deadline_ms
    if "deadline_ms" in pairs:
        raw = pairs["deadline_ms"].lower()
        deadline = None if raw in ("none", "off") else float(pairs["deadline_ms"])
    setup_seed = defaults.setup_seed
    if "setup_seed" in pairs:
        setup_seed = parse_int(pairs["setup_seed"])

    cfg = SimConfig(
        n=get_int("n", defaults.n),
        rounds=get_int("rounds", defaults.rounds),
        protocol=get_int("protocol", defaults.protocol),
        variant=pairs.get("variant", defaults.variant),
        group=pairs.get("group", defaults.group),
        f=get_float("f", defaults.f),
        latency=latency,
        loss=loss,
        broadcast_loss=parse_bool(pairs["broadcast_loss"])
        if "broadcast_loss" in pairs
        else defaults.broadcast_loss,
        deadline_ms=deadline,
        rotation=pairs.get("rotation", defaults.rotation),
        correspondent_a=get_int("correspondent_a", defaults.correspondent_a),
        correspondent_b=get_int("correspondent_b", defaults.correspondent_b),
        adversaries=tuple(adversaries),
        payload_bytes=get_int("payload_bytes", defaults.payload_bytes),
        packet_bytes=get_int("packet_bytes", defaults.packet_bytes),
        max_missing=get_int("max_missing", defaults.max_missing),
        record_events=parse_bool(pairs["record_events"])
        if "record_events" in pairs
        else defaults.record_events,
        name=pairs.get("name", defaults.name),
        rng_seed=get_int("seed", defaults.rng_seed),
        setup_seed=setup_seed,
    )
    cfg.validate()
    return cfg


def config_from_kv_text(text: str) -> SimConfig:
    """Parse scenario-file text (name=value lines) into a config."""
    return config_from_kv(parse_kv_text(text))
