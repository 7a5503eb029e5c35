"""Binary hash trees with position-binding membership proofs.

Leaf and interior digests are domain-separated (0x00 / 0x01 prefixes) so
a leaf payload cannot double as an interior node.  A proof carries the
sibling side sequence explicitly; verification checks that sequence
against the binary digits of position-1, which pins the leaf to one slot
instead of merely proving membership somewhere in the tree.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

HASH_BYTES = 32
_LEAF_PREFIX = b"\x00"
_NODE_PREFIX = b"\x01"


def _leaf_digest(payload: bytes) -> bytes:
    return hashlib.sha256(_LEAF_PREFIX + payload).digest()


def _node_digest(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(_NODE_PREFIX + left + right).digest()


def next_power_of_two(x: int) -> int:
    return 1 if x <= 1 else 1 << (x - 1).bit_length()


@dataclass(frozen=True)
class PositionProof:
    """Bottom-up sibling path for one leaf.

    Each entry is (digest, side) where side says which side the sibling
    occupies: "left" iff the proven node is a right child at that level.
    """

    position: int
    siblings: tuple[tuple[bytes, str], ...]


class MerkleTree:
    """Complete binary hash tree over leaf payloads.

    Payload counts that are not a power of two are padded with empty
    leaves; producers that need a fixed shape should pad explicitly.
    """

    def __init__(self, leaf_payloads: Sequence[bytes]):
        if not leaf_payloads:
            raise ValueError("tree needs at least one leaf")
        padded = next_power_of_two(len(leaf_payloads))
        level = [_leaf_digest(x) for x in leaf_payloads]
        level.extend(_leaf_digest(b"") for _ in range(padded - len(level)))
        self._levels = [level]
        while len(level) > 1:
            level = [
                _node_digest(level[i], level[i + 1]) for i in range(0, len(level), 2)
            ]
            self._levels.append(level)
        self.leaf_count = padded

    @property
    def root(self) -> bytes:
        return self._levels[-1][0]

    @property
    def depth(self) -> int:
        return len(self._levels) - 1

    def prove(self, position: int) -> PositionProof:
        """Proof for the 1-based leaf slot ``position``."""
        if not 1 <= position <= self.leaf_count:
            raise ValueError(f"position out of range [1, {self.leaf_count}]")
        siblings = []
        idx = position - 1
        for level in self._levels[:-1]:
            side = "left" if idx & 1 else "right"
            siblings.append((level[idx ^ 1], side))
            idx >>= 1
        return PositionProof(position=position, siblings=tuple(siblings))


def build_tree(leaf_payloads: Sequence[bytes]) -> MerkleTree:
    return MerkleTree(leaf_payloads)


def prove_position(tree: MerkleTree, position: int) -> PositionProof:
    return tree.prove(position)


def verify_position(
    root: bytes, leaf_payload: bytes, position: int, proof: PositionProof
) -> bool:
    """True iff payload sits at the claimed slot under the given root.

    The side sequence must spell out position-1 in binary (bit i set
    means the sibling at level i is on the left); any deviation fails.
    """
    if proof.position != position or position < 1:
        return False
    idx = position - 1
    if idx >> len(proof.siblings):
        return False
    digest = _leaf_digest(leaf_payload)
    for level, (sibling, side) in enumerate(proof.siblings):
        if len(sibling) != HASH_BYTES or side not in ("left", "right"):
            return False
        bit = (idx >> level) & 1
        if (side == "left") != bool(bit):
            return False
        digest = _node_digest(sibling, digest) if bit else _node_digest(digest, sibling)
    return digest == root


def encode_proof(proof: PositionProof) -> bytes:
    """position (4 BE) || depth (1) || digests || side bitmap.

    Bit i of the bitmap (LSB-first within each byte) is set iff the
    level-i sibling is on the left, i.e. it repeats position-1 in binary.
    """
    depth = len(proof.siblings)
    if depth > 255:
        raise ValueError("proof too deep to encode")
    if not 1 <= proof.position <= 0xFFFFFFFF:
        raise ValueError("position out of encodable range")
    out = bytearray(proof.position.to_bytes(4, "big"))
    out.append(depth)
    bitmap = bytearray((depth + 7) // 8)
    for i, (sibling, side) in enumerate(proof.siblings):
        if len(sibling) != HASH_BYTES:
            raise ValueError("sibling digest has wrong length")
        out += sibling
        if side == "left":
            bitmap[i // 8] |= 1 << (i % 8)
    out += bitmap
    return bytes(out)


def decode_proof(data: bytes) -> PositionProof:
    if len(data) < 5:
        raise ValueError("proof too short")
    position = int.from_bytes(data[:4], "big")
    depth = data[4]
    expected = 5 + depth * HASH_BYTES + (depth + 7) // 8
    if len(data) != expected:
        raise ValueError(f"proof must be {expected} bytes, got {len(data)}")
    body = data[5 : 5 + depth * HASH_BYTES]
    bitmap = data[5 + depth * HASH_BYTES :]
    siblings = []
    for i in range(depth):
        digest = body[i * HASH_BYTES : (i + 1) * HASH_BYTES]
        side = "left" if bitmap[i // 8] >> (i % 8) & 1 else "right"
        siblings.append((digest, side))
    return PositionProof(position=position, siblings=tuple(siblings))


def encoded_proof_size(leaf_count: int) -> int:
    """Wire size of a proof for a tree with this many (padded) leaves."""
    depth = max(0, next_power_of_two(leaf_count).bit_length() - 1)
    return 5 + depth * HASH_BYTES + (depth + 7) // 8
