"""Round engine: collection, verification, broadcast, recovery.

Each round, every player sends the relay one opened scalar.  Bystanders
open their scheduled key honestly; the two endpoints add their payload
and, at the hardened levels, equivocate the commitment randomness so
the relay's checks still pass.  The relay sums what it accepted and
broadcasts the total together with the list of senders it heard from.
An endpoint subtracts the keys of exactly those senders (and its own
payload) to get the peer's payload back, so losses among bystanders
never garble the stream.

Hardening levels:

1. explicit zero-sum key tables, no verification;
2. seed-derived schedules, still no verification;
3. plus a per-round commitment the relay checks each opening against;
4. plus per-player tree roots, each opening carrying a position proof.

Payloads travel as framed scalars: a length prefix and a 16-bit
checksum make a random scalar decode as garbage with negligible
probability, which is what lets the list-free decoder and the
optimistic audit tell signal from corruption.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .groups import (
    GroupParams,
    commit,
    decode_scalar,
    encode_scalar,
    equivocate,
    verify_opening,
)
from .keysched import (
    AggregatorView,
    CorrespondentView,
    PlayerView,
    leaf_bytes,
)
from .merkle import (
    PositionProof,
    build_tree,
    decode_proof,
    encode_proof,
    encoded_proof_size,
    verify_position,
)

FRAME_OVERHEAD = 4  # 2-byte length prefix + 16-bit checksum

REJECT_WRONG_ROUND = "wrong_round"
REJECT_LATE = "late_arrival"
REJECT_UNKNOWN = "unknown_sender"
REJECT_DUPLICATE = "duplicate_sender"
REJECT_BAD_OPENING = "bad_opening"
REJECT_BAD_PROOF = "bad_proof"


class ScheduleExhausted(Exception):
    """The key schedule has no material left for this round."""


class Role(str, enum.Enum):
    BYSTANDER = "bystander"
    CORRESPONDENT = "correspondent"


# --------------------------------------------------------------------------
# payload framing


def _crc16(data: bytes) -> int:
    # CRC-16/CCITT-FALSE: poly 0x1021, init 0xffff, no reflection.
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021 if crc & 0x8000 else crc << 1) & 0xFFFF
    return crc


def payload_capacity(q: int) -> int:
    """Max payload bytes a frame can carry in a group of order q."""
    return (q.bit_length() + 7) // 8 - FRAME_OVERHEAD


def frame_payload(payload: bytes, q: int) -> int:
    """Pack payload bytes into a nonzero scalar below q.

    Layout, big-endian over the scalar width: length (2) || payload ||
    crc16(length || payload) (2) || zero padding.  The leading length
    byte is always zero, which keeps the value under q.  The zero
    scalar is reserved for silence; empty payloads are not framable.
    """
    cap = payload_capacity(q)
    if cap < 1:
        raise ValueError("group too small to frame payloads")
    if not payload:
        raise ValueError("empty payload; silence is the zero scalar")
    if len(payload) > cap:
        raise ValueError(f"payload exceeds frame capacity of {cap} bytes")
    width = (q.bit_length() + 7) // 8
    body = len(payload).to_bytes(2, "big") + payload
    frame = body + _crc16(body).to_bytes(2, "big")
    frame += bytes(width - len(frame))
    return int.from_bytes(frame, "big")


def unframe_payload(m: int, q: int) -> bytes | None:
    """Payload bytes, b"" for silence (m == 0), or None if invalid."""
    if m == 0:
        return b""
    if not 0 < m < q:
        return None
    width = (q.bit_length() + 7) // 8
    frame = m.to_bytes(width, "big")
    length = int.from_bytes(frame[:2], "big")
    if not 1 <= length <= payload_capacity(q):
        return None
    body = frame[: 2 + length]
    checksum = int.from_bytes(frame[2 + length : 4 + length], "big")
    if _crc16(body) != checksum:
        return None
    if any(frame[4 + length :]):
        return None
    return frame[2 : 2 + length]


def is_valid_payload_scalar(m: int, q: int) -> bool:
    return unframe_payload(m, q) is not None


# --------------------------------------------------------------------------
# packets


@dataclass(frozen=True)
class CollectionPacket:
    """One player's per-round submission to the relay."""

    round_no: int
    sender: int
    opened: int
    randomness: int | None = None  # opening randomness, levels 3-4
    proof: PositionProof | None = None  # tree position proof, level 4


@dataclass(frozen=True)
class BroadcastPacket:
    """The relay's round closure: who was heard, and the sum."""

    round_no: int
    received: frozenset[int]
    total: int


@dataclass(frozen=True)
class ListFreeDecode:
    """Outcome of brute-force recovery without the received list."""

    ok: bool
    message: int | None  # 0 means the peer was silent or absent
    missing: frozenset[int] | None  # inferred loss set when unambiguous
    candidates: int  # surviving (missing-set, message) hypotheses


@dataclass(frozen=True)
class IngestResult:
    accepted: bool
    reason: str | None = None


# --------------------------------------------------------------------------
# player


class PlayerState:
    """Per-player engine state across rounds.

    Bystanders are built from their own view only.  Endpoints also pass
    their correspondent view, which brings the trapdoor for payload
    embedding and the full key table for recovery.
    """

    def __init__(
        self, view: PlayerView, correspondent: CorrespondentView | None = None
    ):
        if correspondent is not None and correspondent.index != view.index:
            raise ValueError("correspondent view belongs to a different player")
        self.view = view
        self.correspondent = correspondent
        self.index = view.index
        self.protocol = view.protocol
        self.role = Role.CORRESPONDENT if correspondent else Role.BYSTANDER
        self.round_no = 1
        self.pending = 0
        self._sent: dict[int, int] = {}
        self._tree = None

    @property
    def peer(self) -> int | None:
        return self.correspondent.peer if self.correspondent else None

    def queue_message(self, m: int) -> None:
        """Queue a payload scalar for the next emit."""
        if self.role is not Role.CORRESPONDENT:
            raise ValueError("bystanders cannot carry payloads")
        if not 0 <= m < self.view.group.q:
            raise ValueError("payload scalar out of range")
        self.pending = m

    def queue_payload(self, payload: bytes) -> None:
        self.queue_message(frame_payload(payload, self.view.group.q))

    def emit(self, round_no: int) -> CollectionPacket:
        """Produce this round's packet, consuming any queued payload."""
        if round_no != self.round_no:
            raise ValueError(f"engine is at round {self.round_no}, not {round_no}")
        if round_no > self.view.rounds:
            raise ScheduleExhausted(f"schedule ends at round {self.view.rounds}")
        m = self.pending
        self.pending = 0
        q = self.view.group.q
        randomness = None
        proof = None
        if self.protocol <= 2:
            opened = (self.view.key(round_no) + m) % q
        else:
            pair = self.view.pair(round_no)
            if m:
                opened, randomness = equivocate(
                    self.correspondent.group, pair.k, pair.r, m
                )
            else:
                opened, randomness = pair.k, pair.r
            if self.protocol == 4:
                proof = self.position_proof(round_no)
        self._sent[round_no] = m
        return CollectionPacket(
            round_no=round_no,
            sender=self.index,
            opened=opened,
            randomness=randomness,
            proof=proof,
        )

    def finish_round(self) -> None:
        self.round_no += 1

    def sent_payload(self, round_no: int) -> int | None:
        """Payload scalar embedded in the given round, if a packet was emitted."""
        return self._sent.get(round_no)

    def position_proof(self, round_no: int) -> PositionProof:
        """Proof for any slot of this player's own schedule tree."""
        if self._tree is None:
            params = self.view.group
            leaves = []
            dummy = commit(params, 0, 0)
            for j in range(1, self.view.padded_rounds + 1):
                if j <= self.view.rounds:
                    pair = self.view.pair(j)
                    c = commit(params, pair.k, pair.r)
                else:
                    c = dummy
                leaves.append(leaf_bytes(params, c))
            self._tree = build_tree(leaves)
        return self._tree.prove(round_no)

    def recover(self, broadcast: BroadcastPacket) -> int | None:
        """Peer payload scalar for this round, or None if the peer is absent.

        Works at every hardening level: the endpoint subtracts the keys
        of exactly the listed senders, plus its own payload if it was
        heard, so bystander losses cancel instead of corrupting.
        """
        corr = self._require_keys()
        if corr.peer not in broadcast.received:
            return None
        q = corr.group.q
        m = (broadcast.total - corr.sum_keys(broadcast.round_no, broadcast.received)) % q
        if self.index in broadcast.received:
            m = (m - self._sent.get(broadcast.round_no, 0)) % q
        return m

    def recover_without_list(
        self,
        round_no: int,
        total: int,
        max_missing: int,
        is_valid: Callable[[int], bool] | None = None,
    ) -> ListFreeDecode:
        """Recover the peer payload from the bare total.

        Tries every loss hypothesis of up to max_missing senders and
        keeps those whose implied payload is zero or passes the frame
        check.  Succeeds when all survivors agree on one payload.
        """
        if not 0 <= max_missing <= 2:
            raise ValueError("max_missing bounded to 0..2; beyond that use the list")
        corr = self._require_keys()
        q = corr.group.q
        if is_valid is None:
            is_valid = lambda m: is_valid_payload_scalar(m, q)
        keys = corr.round_keys(round_no)
        full_sum = sum(keys) % q
        own_sent = self._sent.get(round_no, 0)
        survivors: list[tuple[frozenset[int], int]] = []
        players = range(1, corr.n + 1)
        for size in range(max_missing + 1):
            for missing in itertools.combinations(players, size):
                present_sum = (full_sum - sum(keys[i - 1] for i in missing)) % q
                candidate = (total - present_sum) % q
                if self.index not in missing:
                    candidate = (candidate - own_sent) % q
                if corr.peer in missing:
                    # Peer absent under this hypothesis: only an exact
                    # zero remainder is consistent.
                    if candidate == 0:
                        survivors.append((frozenset(missing), 0))
                elif candidate == 0 or is_valid(candidate):
                    survivors.append((frozenset(missing), candidate))
        messages = {m for _, m in survivors}
        if len(messages) == 1:
            missing = survivors[0][0] if len(survivors) == 1 else None
            return ListFreeDecode(True, messages.pop(), missing, len(survivors))
        return ListFreeDecode(False, None, None, len(survivors))

    def _require_keys(self) -> CorrespondentView:
        if self.correspondent is None:
            raise ValueError("recovery needs the endpoint key view")
        return self.correspondent


# --------------------------------------------------------------------------
# aggregator


class AggregatorState:
    """Collects one round of packets, verifies, and closes the round."""

    def __init__(
        self,
        view: AggregatorView,
        round_no: int = 1,
        deadline: float | None = None,
    ):
        self.view = view
        self.protocol = view.protocol
        self.round_no = round_no
        self.deadline = deadline
        self._accepted: dict[int, int] = {}

    def ingest(self, packet: CollectionPacket, arrival_time: float = 0.0) -> IngestResult:
        """Screen one packet; only accepted ones enter the round total."""
        if packet.round_no != self.round_no:
            return IngestResult(False, REJECT_WRONG_ROUND)
        if self.deadline is not None and arrival_time > self.deadline:
            return IngestResult(False, REJECT_LATE)
        if not 1 <= packet.sender <= self.view.n:
            return IngestResult(False, REJECT_UNKNOWN)
        if packet.sender in self._accepted:
            return IngestResult(False, REJECT_DUPLICATE)
        if self.protocol >= 3:
            if packet.randomness is None:
                return IngestResult(False, REJECT_BAD_OPENING)
            params = self.view.group
            if self.protocol == 3:
                expected = self.view.commitment(packet.sender, self.round_no)
                if not verify_opening(
                    params, expected, packet.opened, packet.randomness
                ):
                    return IngestResult(False, REJECT_BAD_OPENING)
            else:
                if packet.proof is None:
                    return IngestResult(False, REJECT_BAD_PROOF)
                c = commit(params, packet.opened, packet.randomness)
                root = self.view.roots[packet.sender - 1]
                if not verify_position(
                    root, leaf_bytes(params, c), self.round_no, packet.proof
                ):
                    return IngestResult(False, REJECT_BAD_PROOF)
        self._accepted[packet.sender] = packet.opened % self.view.group.q
        return IngestResult(True)

    def finalize(self) -> BroadcastPacket:
        """Close the round: sum the accepted openings and advance."""
        broadcast = BroadcastPacket(
            round_no=self.round_no,
            received=frozenset(self._accepted),
            total=sum(self._accepted.values()) % self.view.group.q,
        )
        self._accepted.clear()
        self.round_no += 1
        return broadcast


def audit_round(
    packets: Iterable[CollectionPacket],
    corr: CorrespondentView,
    round_no: int,
    exempt: Iterable[int] = (),
) -> frozenset[int]:
    """Senders whose opened value is not their scheduled key.

    Endpoint-run forensics for the optimistic mode: the relay
    republishes the packets it accepted and the endpoints, who know
    every schedule, point at mismatches.  The two endpoints are always
    exempt since their openings legitimately differ when carrying a
    payload.
    """
    exempt_set = set(exempt) | {corr.index, corr.peer}
    keys = corr.round_keys(round_no)
    q = corr.group.q
    flagged = set()
    for packet in packets:
        if packet.round_no != round_no or packet.sender in exempt_set:
            continue
        if not 1 <= packet.sender <= corr.n:
            continue
        if packet.opened % q != keys[packet.sender - 1]:
            flagged.add(packet.sender)
    return frozenset(flagged)


# --------------------------------------------------------------------------
# wire encodings


def encode_collection(
    packet: CollectionPacket, params: GroupParams, protocol: int
) -> bytes:
    """round (8 BE) || sender (2 BE) || opened || [randomness] || [proof]."""
    out = bytearray(packet.round_no.to_bytes(8, "big"))
    out += packet.sender.to_bytes(2, "big")
    out += encode_scalar(packet.opened, params.q)
    if protocol >= 3:
        if packet.randomness is None:
            raise ValueError("levels 3-4 require the opening randomness")
        out += encode_scalar(packet.randomness, params.q)
    if protocol == 4:
        if packet.proof is None:
            raise ValueError("level 4 requires a position proof")
        out += encode_proof(packet.proof)
    return bytes(out)


def decode_collection(
    data: bytes, params: GroupParams, protocol: int
) -> CollectionPacket:
    width = params.scalar_bytes
    need = 10 + width * (2 if protocol >= 3 else 1)
    if len(data) < need:
        raise ValueError("collection packet too short")
    round_no = int.from_bytes(data[:8], "big")
    sender = int.from_bytes(data[8:10], "big")
    opened = decode_scalar(data[10 : 10 + width], params.q)
    randomness = None
    proof = None
    offset = 10 + width
    if protocol >= 3:
        randomness = decode_scalar(data[offset : offset + width], params.q)
        offset += width
    if protocol == 4:
        proof = decode_proof(data[offset:])
    elif len(data) != offset:
        raise ValueError("trailing bytes in collection packet")
    return CollectionPacket(round_no, sender, opened, randomness, proof)


def collection_packet_size(
    params: GroupParams, protocol: int, padded_rounds: int = 1
) -> int:
    size = 10 + params.scalar_bytes * (2 if protocol >= 3 else 1)
    if protocol == 4:
        size += encoded_proof_size(padded_rounds)
    return size


def encode_broadcast(
    packet: BroadcastPacket, params: GroupParams, include_received: bool = True
) -> bytes:
    """round (8 BE) || [count (2 BE) || sorted sender ids (2 BE each)] || total."""
    out = bytearray(packet.round_no.to_bytes(8, "big"))
    if include_received:
        senders = sorted(packet.received)
        out += len(senders).to_bytes(2, "big")
        for sender in senders:
            out += sender.to_bytes(2, "big")
    out += encode_scalar(packet.total, params.q)
    return bytes(out)


def decode_broadcast(
    data: bytes, params: GroupParams, include_received: bool = True
) -> BroadcastPacket:
    width = params.scalar_bytes
    if len(data) < 8:
        raise ValueError("broadcast packet too short")
    round_no = int.from_bytes(data[:8], "big")
    offset = 8
    received: frozenset[int] = frozenset()
    if include_received:
        if len(data) < 10:
            raise ValueError("broadcast packet too short")
        count = int.from_bytes(data[8:10], "big")
        offset = 10 + 2 * count
        if len(data) != offset + width:
            raise ValueError("broadcast packet length mismatch")
        received = frozenset(
            int.from_bytes(data[10 + 2 * i : 12 + 2 * i], "big") for i in range(count)
        )
        if len(received) != count:
            raise ValueError("duplicate sender in received list")
    elif len(data) != offset + width:
        raise ValueError("broadcast packet length mismatch")
    total = decode_scalar(data[offset : offset + width], params.q)
    return BroadcastPacket(round_no, received, total)


def broadcast_packet_size(
    params: GroupParams, n_received: int, include_received: bool = True
) -> int:
    size = 8 + params.scalar_bytes
    if include_received:
        size += 2 + 2 * n_received
    return size
