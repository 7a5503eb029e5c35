"""Correspondent-anonymity experiment.

Each trial deals a fresh group, picks a uniformly random unordered pair
of correspondents, runs one lossless verified round, and hands the full
public transcript (commitments, collection packets, broadcast) to an
adversary who must accuse a pair.  Equivocated openings are distributed
identically to honest ones, so any transcript-only adversary is limited
to chance accuracy 2/(n(n-1)); an adversary who additionally holds the
per-player key schedule recovers the pair every time.  The experiment
measures both.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Callable

from .groups import GroupParams, GroupSpec, TOY_SPEC, commit
from .keysched import dealer_setup
from .protocol import (
    AggregatorState,
    BroadcastPacket,
    CollectionPacket,
    PlayerState,
)


@dataclass(frozen=True)
class TrialTranscript:
    """Everything a network observer sees in one round."""

    n: int
    group: GroupParams  # public parameters, no trapdoor
    commitments: tuple[int, ...]  # player i's round-1 commitment at index i-1
    packets: tuple[CollectionPacket, ...]  # sorted by sender
    broadcast: BroadcastPacket


Adversary = Callable[[TrialTranscript], frozenset[int]]


@dataclass(frozen=True)
class PrivacyReport:
    n: int
    trials: int
    hits: int
    accuracy: float
    chance: float  # 2 / (n (n - 1)), uniform guess over unordered pairs
    sigma: float  # std of the accuracy estimator under chance guessing
    z: float
    adversary: str

    @property
    def within_3_sigma(self) -> bool:
        return abs(self.z) <= 3.0


def chance_accuracy(n: int) -> float:
    if n < 2:
        raise ValueError("need at least two players to form a pair")
    return 2.0 / (n * (n - 1))


def run_privacy_trial(
    n: int,
    rng: random.Random,
    group: GroupSpec = TOY_SPEC,
    protocol: int = 3,
) -> tuple[TrialTranscript, frozenset[int], dict[int, int]]:
    """Deal, run one round, return (transcript, true pair, round keys).

    The key table in the third slot is dealer-side knowledge; it is
    never part of the transcript and exists only so a key-informed
    adversary can be evaluated against the same trial.
    """
    if protocol not in (3, 4):
        raise ValueError("the experiment needs verified openings (protocol 3 or 4)")
    a, b = sorted(rng.sample(range(1, n + 1), 2))
    bundle = dealer_setup(
        group, n, rounds=1, protocol=protocol,
        rng_seed=rng.getrandbits(64), correspondent_a=a, correspondent_b=b,
    )
    q = bundle.group.q
    packets = []
    relay = AggregatorState(bundle.aggregator)
    for i in range(1, n + 1):
        corr = bundle.correspondent_for(i) if i in (a, b) else None
        state = PlayerState(bundle.players[i - 1], corr)
        if i in (a, b):
            state.queue_message(rng.randrange(1, q))  # live traffic, never silence
        packet = state.emit(1)
        packets.append(packet)
        result = relay.ingest(packet)
        assert result.accepted, result.reason
    broadcast = relay.finalize()
    packets.sort(key=lambda p: p.sender)
    public = bundle.group.public()
    transcript = TrialTranscript(
        n=n,
        group=public,
        # what each packet opens; identical to the dealt table whenever
        # one is published, and observable for root-committed schedules
        commitments=tuple(
            commit(public, p.opened, p.randomness) for p in packets
        ),
        packets=tuple(packets),
        broadcast=broadcast,
    )
    keys = {i: bundle.correspondents[0].key(i, 1) for i in range(1, n + 1)}
    return transcript, frozenset((a, b)), keys


def transcript_adversary(transcript: TrialTranscript) -> frozenset[int]:
    """Accuse the two players whose packets correlate most with the round.

    Scores every player by a digest keyed on the whole broadcast round,
    which is as good as any other deterministic rule: equivocation makes
    the transcript independent of who the correspondents are.
    """
    w = transcript.group.spec.scalar_bytes
    ctx = hashlib.sha256()
    ctx.update(transcript.broadcast.total.to_bytes(w, "big"))
    for packet in transcript.packets:
        ctx.update(packet.opened.to_bytes(w, "big"))
    key = ctx.digest()
    scores = {}
    for packet in transcript.packets:
        h = hashlib.sha256()
        h.update(key)
        h.update(packet.sender.to_bytes(2, "big"))
        h.update(packet.opened.to_bytes(w, "big"))
        if packet.randomness is not None:
            h.update(packet.randomness.to_bytes(w, "big"))
        scores[packet.sender] = h.digest()
    ranked = sorted(scores, key=lambda i: (scores[i], i), reverse=True)
    return frozenset(ranked[:2])


def key_informed_adversary(
    transcript: TrialTranscript, round_keys: dict[int, int], q: int
) -> frozenset[int]:
    """Given the dealt key schedule, unmask whoever opened key + message."""
    flagged = [
        packet.sender
        for packet in transcript.packets
        if (packet.opened - round_keys[packet.sender]) % q != 0
    ]
    return frozenset(flagged)


def run_privacy_experiment(
    n: int,
    trials: int,
    seed: int = 0,
    group: GroupSpec = TOY_SPEC,
    protocol: int = 3,
    with_keys: bool = False,
    adversary: Adversary | None = None,
) -> PrivacyReport:
    """Measure an adversary's pair-identification accuracy over many trials."""
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = random.Random(
        int.from_bytes(
            hashlib.sha256(f"privacy-{n}-{seed}".encode()).digest()[:8], "big"
        )
    )
    hits = 0
    name = "key_informed" if with_keys else getattr(
        adversary or transcript_adversary, "__name__", "custom"
    )
    for _ in range(trials):
        trial_rng = random.Random(rng.getrandbits(64))
        transcript, pair, keys = run_privacy_trial(n, trial_rng, group, protocol)
        if with_keys:
            guess = key_informed_adversary(
                transcript, keys, transcript.group.q
            )
        else:
            guess = (adversary or transcript_adversary)(transcript)
        if guess == pair:
            hits += 1
    chance = chance_accuracy(n)
    sigma = (chance * (1.0 - chance) / trials) ** 0.5
    accuracy = hits / trials
    return PrivacyReport(
        n=n,
        trials=trials,
        hits=hits,
        accuracy=accuracy,
        chance=chance,
        sigma=sigma,
        z=(accuracy - chance) / sigma if sigma > 0 else 0.0,
        adversary=name,
    )
