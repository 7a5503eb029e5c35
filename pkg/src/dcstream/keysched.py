"""Dealer setup: round key schedules and the three per-role views.

The dealer runs once, offline, before a stream starts.  It fixes the
group, draws the trapdoor, and hands out asymmetric material:

* every player gets its own schedule (explicit per-round keys, or a seed
  the schedule is derived from);
* the two endpoints additionally get the trapdoor and every player's
  schedule, since they must subtract the keys of whoever shows up;
* the relay gets verification data only (commitment tables or tree
  roots), never a scalar secret.

Seed-derived schedules use an HMAC-SHA256 PRF with per-lane domain tags
and rejection sampling, so every key and commitment randomness is an
independent uniform scalar.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .groups import (
    GroupParams,
    GroupSpec,
    commit,
    encode_element,
    load_group_file,
    make_params,
    save_group_file,
)
from .merkle import build_tree, next_power_of_two

SEED_BYTES = 32
_BUNDLE_FORMAT = "dcstream-setup-v1"


class GroupTooSmall(Exception):
    """The subgroup order cannot accommodate the requested player count."""


@dataclass(frozen=True)
class SecretPair:
    """One round's key scalar and its commitment randomness."""

    k: int
    r: int


def derive_scalar(seed: bytes, player: int, round_no: int, lane: bytes, q: int) -> int:
    """Uniform scalar in [0, q) from HMAC-SHA256(seed, player||round||lane||ctr).

    Rejection sampling on the top q.bit_length() bits keeps the output
    exactly uniform; the expected try count is below two.
    """
    width = (q.bit_length() + 7) // 8
    if width > hashlib.sha256().digest_size:
        raise ValueError("subgroup order too wide for this PRF")
    mask = (1 << q.bit_length()) - 1
    prefix = player.to_bytes(4, "big") + round_no.to_bytes(8, "big") + lane
    counter = 0
    while True:
        digest = hmac.new(seed, prefix + counter.to_bytes(4, "big"), hashlib.sha256)
        x = int.from_bytes(digest.digest()[:width], "big") & mask
        if x < q:
            return x
        counter += 1


def derive_pair(seed: bytes, player: int, round_no: int, q: int) -> SecretPair:
    """Key and randomness lanes for one player and round."""
    return SecretPair(
        k=derive_scalar(seed, player, round_no, b"k", q),
        r=derive_scalar(seed, player, round_no, b"r", q),
    )


def dealer_setup_zero_sum(
    params: GroupParams, n: int, rng: int | random.Random
) -> list[int]:
    """One round of keys with sum(keys) = 0 mod q.

    The first n-1 keys are uniform; the last is forced so the round sums
    to zero and the relay's total telescopes to just the payloads.
    """
    if n < 3:
        raise ValueError("need at least three players")
    if n > params.q:
        raise GroupTooSmall(f"cannot seat {n} players in a group of order {params.q}")
    if isinstance(rng, int):
        rng = random.Random(rng)
    keys = [rng.randrange(params.q) for _ in range(n - 1)]
    keys.append(-sum(keys) % params.q)
    return keys


@dataclass(frozen=True)
class PlayerView:
    """What one player holds: the public group and its own schedule only."""

    index: int
    group: GroupParams
    n: int
    protocol: int
    rounds: int
    padded_rounds: int
    seed: bytes | None = None
    round_keys: tuple[int, ...] | None = None

    def key(self, round_no: int) -> int:
        if not 1 <= round_no <= self.rounds:
            raise ValueError(f"round {round_no} outside schedule [1, {self.rounds}]")
        if self.round_keys is not None:
            return self.round_keys[round_no - 1]
        return derive_scalar(self.seed, self.index, round_no, b"k", self.group.q)

    def pair(self, round_no: int) -> SecretPair:
        if self.seed is None:
            raise ValueError("explicit-key schedules carry no commitment randomness")
        if not 1 <= round_no <= self.padded_rounds:
            raise ValueError(f"round {round_no} outside padded schedule")
        return derive_pair(self.seed, self.index, round_no, self.group.q)


@dataclass(frozen=True)
class CorrespondentView:
    """Endpoint material: trapdoor group plus every player's schedule."""

    index: int
    peer: int
    group: GroupParams
    n: int
    protocol: int
    rounds: int
    padded_rounds: int
    seeds: tuple[bytes, ...] | None = None
    key_table: tuple[tuple[int, ...], ...] | None = None
    _round_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def pair(self, player: int, round_no: int) -> SecretPair:
        if self.seeds is None:
            raise ValueError("explicit-key schedules carry no commitment randomness")
        return derive_pair(self.seeds[player - 1], player, round_no, self.group.q)

    def key(self, player: int, round_no: int) -> int:
        return self.round_keys(round_no)[player - 1]

    def round_keys(self, round_no: int) -> tuple[int, ...]:
        """All n keys for one round, cached across calls and endpoints."""
        cached = self._round_cache.get(round_no)
        if cached is None:
            if not 1 <= round_no <= self.rounds:
                raise ValueError(f"round {round_no} outside schedule")
            if self.key_table is not None:
                cached = self.key_table[round_no - 1]
            else:
                q = self.group.q
                cached = tuple(
                    derive_scalar(self.seeds[i - 1], i, round_no, b"k", q)
                    for i in range(1, self.n + 1)
                )
            self._round_cache[round_no] = cached
        return cached

    def sum_keys(self, round_no: int, included: Iterable[int]) -> int:
        keys = self.round_keys(round_no)
        return sum(keys[i - 1] for i in included) % self.group.q


@dataclass(frozen=True)
class AggregatorView:
    """Verification-only material; holds no scalar secrets by design."""

    group: GroupParams
    n: int
    protocol: int
    rounds: int
    padded_rounds: int
    commitments: tuple[tuple[int, ...], ...] | None = None
    roots: tuple[bytes, ...] | None = None

    def commitment(self, player: int, round_no: int) -> int:
        if self.commitments is None:
            raise ValueError("this setup carries no commitment table")
        return self.commitments[player - 1][round_no - 1]


@dataclass(frozen=True)
class SetupBundle:
    """Everything the dealer produced, grouped by recipient."""

    protocol: int
    n: int
    rounds: int
    padded_rounds: int
    group: GroupParams
    correspondent_a: int
    correspondent_b: int
    players: tuple[PlayerView, ...]
    correspondents: tuple[CorrespondentView, CorrespondentView]
    aggregator: AggregatorView

    def correspondent_for(self, index: int) -> CorrespondentView:
        for view in self.correspondents:
            if view.index == index:
                return view
        raise ValueError(f"player {index} is not an endpoint")


def leaf_bytes(params: GroupParams, commitment: int) -> bytes:
    """Canonical tree-leaf payload for a commitment: its element encoding."""
    return encode_element(commitment, params.p)


def dealer_setup(
    group: GroupSpec | GroupParams,
    n: int,
    rounds: int,
    protocol: int,
    rng_seed: int | random.Random = 0,
    correspondent_a: int = 1,
    correspondent_b: int = 2,
) -> SetupBundle:
    """Run the dealer for one stream.

    ``group`` may be a bare GroupSpec (the trapdoor is drawn from the
    seeded rng) or full GroupParams that already include it.  Hardening
    levels: 1 = explicit zero-sum key tables, 2 = seed schedules,
    3 = plus a per-round commitment table for the relay, 4 = plus one
    tree root per player instead of the table.
    """
    if protocol not in (1, 2, 3, 4):
        raise ValueError(f"unknown protocol level {protocol}")
    if n < 3:
        raise ValueError("need at least three players")
    if rounds < 1:
        raise ValueError("need at least one round")
    if not (1 <= correspondent_a <= n and 1 <= correspondent_b <= n):
        raise ValueError("endpoint indices out of range")
    if correspondent_a == correspondent_b:
        raise ValueError("endpoints must be distinct players")
    rng = random.Random(rng_seed) if isinstance(rng_seed, int) else rng_seed

    if isinstance(group, GroupParams):
        if group.alpha is None:
            raise ValueError("dealer needs params with the trapdoor scalar")
        params = group
    else:
        params = make_params(group, alpha=rng.randrange(1, group.q))
    public = params.public()
    padded = next_power_of_two(rounds)

    seeds: tuple[bytes, ...] | None = None
    key_table: tuple[tuple[int, ...], ...] | None = None
    if protocol == 1:
        key_table = tuple(
            tuple(dealer_setup_zero_sum(params, n, rng)) for _ in range(rounds)
        )
        players = tuple(
            PlayerView(
                index=i,
                group=public,
                n=n,
                protocol=protocol,
                rounds=rounds,
                padded_rounds=padded,
                round_keys=tuple(row[i - 1] for row in key_table),
            )
            for i in range(1, n + 1)
        )
    else:
        seeds = tuple(rng.randbytes(SEED_BYTES) for _ in range(n))
        players = tuple(
            PlayerView(
                index=i,
                group=public,
                n=n,
                protocol=protocol,
                rounds=rounds,
                padded_rounds=padded,
                seed=seeds[i - 1],
            )
            for i in range(1, n + 1)
        )

    commitments: tuple[tuple[int, ...], ...] | None = None
    roots: tuple[bytes, ...] | None = None
    if protocol == 3:
        commitments = tuple(
            tuple(
                commit(params, *_pair_tuple(seeds[i - 1], i, j, params.q))
                for j in range(1, rounds + 1)
            )
            for i in range(1, n + 1)
        )
    elif protocol == 4:
        roots_list = []
        for i in range(1, n + 1):
            leaves = []
            for j in range(1, padded + 1):
                if j <= rounds:
                    c = commit(params, *_pair_tuple(seeds[i - 1], i, j, params.q))
                else:
                    c = commit(params, 0, 0)  # dummy slot, never provable as real
                leaves.append(leaf_bytes(params, c))
            roots_list.append(build_tree(leaves).root)
        roots = tuple(roots_list)

    corr_a = CorrespondentView(
        index=correspondent_a,
        peer=correspondent_b,
        group=params,
        n=n,
        protocol=protocol,
        rounds=rounds,
        padded_rounds=padded,
        seeds=seeds,
        key_table=key_table,
    )
    # replace() keeps the same round cache dict, so the two endpoints
    # share derived keys instead of deriving everything twice.
    corr_b = replace(corr_a, index=correspondent_b, peer=correspondent_a)

    aggregator = AggregatorView(
        group=public,
        n=n,
        protocol=protocol,
        rounds=rounds,
        padded_rounds=padded,
        commitments=commitments,
        roots=roots,
    )
    return SetupBundle(
        protocol=protocol,
        n=n,
        rounds=rounds,
        padded_rounds=padded,
        group=params,
        correspondent_a=correspondent_a,
        correspondent_b=correspondent_b,
        players=players,
        correspondents=(corr_a, corr_b),
        aggregator=aggregator,
    )


def _pair_tuple(seed: bytes, player: int, round_no: int, q: int) -> tuple[int, int]:
    pair = derive_pair(seed, player, round_no, q)
    return pair.k, pair.r


def dealer_setup_stream(
    group: GroupSpec | GroupParams,
    n: int,
    rounds: int,
    rng_seed: int | random.Random = 0,
    correspondent_a: int = 1,
    correspondent_b: int = 2,
) -> SetupBundle:
    """Full hardening: seed schedules plus per-player tree roots."""
    return dealer_setup(
        group,
        n,
        rounds,
        protocol=4,
        rng_seed=rng_seed,
        correspondent_a=correspondent_a,
        correspondent_b=correspondent_b,
    )


def save_bundle(bundle: SetupBundle, dirpath: str | Path) -> None:
    """Write one file per recipient plus the public group parameters.

    Layout: manifest.json, group.params, aggregator.json,
    correspondent_a.json, correspondent_b.json, player_NNN.json.
    Only the two correspondent files contain the trapdoor.
    """
    root = Path(dirpath)
    root.mkdir(parents=True, exist_ok=True)
    save_group_file(bundle.group, root / "group.params")
    _dump_json(
        root / "manifest.json",
        {
            "format": _BUNDLE_FORMAT,
            "protocol": bundle.protocol,
            "n": bundle.n,
            "rounds": bundle.rounds,
            "padded_rounds": bundle.padded_rounds,
            "correspondent_a": bundle.correspondent_a,
            "correspondent_b": bundle.correspondent_b,
        },
    )
    for view in bundle.players:
        body: dict = {"index": view.index}
        if view.seed is not None:
            body["seed"] = view.seed.hex()
        else:
            body["round_keys"] = [hex(k) for k in view.round_keys]
        _dump_json(root / f"player_{view.index:03d}.json", body)
    for label, view in zip(("a", "b"), bundle.correspondents):
        body = {"index": view.index, "peer": view.peer, "alpha": hex(view.group.alpha)}
        if view.seeds is not None:
            body["seeds"] = [s.hex() for s in view.seeds]
        else:
            body["key_table"] = [[hex(k) for k in row] for row in view.key_table]
        _dump_json(root / f"correspondent_{label}.json", body)
    agg: dict = {}
    if bundle.aggregator.commitments is not None:
        agg["commitments"] = [
            [hex(c) for c in row] for row in bundle.aggregator.commitments
        ]
    if bundle.aggregator.roots is not None:
        agg["roots"] = [r.hex() for r in bundle.aggregator.roots]
    _dump_json(root / "aggregator.json", agg)


def load_bundle(dirpath: str | Path) -> SetupBundle:
    root = Path(dirpath)
    manifest = _load_json(root / "manifest.json")
    if manifest.get("format") != _BUNDLE_FORMAT:
        raise ValueError(f"unrecognised bundle format in {root}")
    public = load_group_file(root / "group.params")
    n = manifest["n"]
    protocol = manifest["protocol"]
    rounds = manifest["rounds"]
    padded = manifest["padded_rounds"]

    corr_bodies = {
        label: _load_json(root / f"correspondent_{label}.json") for label in ("a", "b")
    }
    alpha = int(corr_bodies["a"]["alpha"], 16)
    params = replace(public, alpha=alpha)
    if pow(params.g, alpha, params.p) != params.h:
        raise ValueError("stored trapdoor does not match h")

    players = []
    for i in range(1, n + 1):
        body = _load_json(root / f"player_{i:03d}.json")
        if body["index"] != i:
            raise ValueError(f"player file {i} carries index {body['index']}")
        players.append(
            PlayerView(
                index=i,
                group=public,
                n=n,
                protocol=protocol,
                rounds=rounds,
                padded_rounds=padded,
                seed=bytes.fromhex(body["seed"]) if "seed" in body else None,
                round_keys=tuple(int(k, 16) for k in body["round_keys"])
                if "round_keys" in body
                else None,
            )
        )

    def corr_view(body: dict) -> CorrespondentView:
        return CorrespondentView(
            index=body["index"],
            peer=body["peer"],
            group=params,
            n=n,
            protocol=protocol,
            rounds=rounds,
            padded_rounds=padded,
            seeds=tuple(bytes.fromhex(s) for s in body["seeds"])
            if "seeds" in body
            else None,
            key_table=tuple(
                tuple(int(k, 16) for k in row) for row in body["key_table"]
            )
            if "key_table" in body
            else None,
        )

    agg_body = _load_json(root / "aggregator.json")
    aggregator = AggregatorView(
        group=public,
        n=n,
        protocol=protocol,
        rounds=rounds,
        padded_rounds=padded,
        commitments=tuple(
            tuple(int(c, 16) for c in row) for row in agg_body["commitments"]
        )
        if "commitments" in agg_body
        else None,
        roots=tuple(bytes.fromhex(r) for r in agg_body["roots"])
        if "roots" in agg_body
        else None,
    )
    return SetupBundle(
        protocol=protocol,
        n=n,
        rounds=rounds,
        padded_rounds=padded,
        group=params,
        correspondent_a=manifest["correspondent_a"],
        correspondent_b=manifest["correspondent_b"],
        players=tuple(players),
        correspondents=(corr_view(corr_bodies["a"]), corr_view(corr_bodies["b"])),
        aggregator=aggregator,
    )


def _dump_json(path: Path, body: dict) -> None:
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _load_json(path: Path) -> dict:
    return json.loads(path.read_text())
