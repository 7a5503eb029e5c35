"""Schnorr-group arithmetic and trapdoor Pedersen commitments.

A commitment ``c = g^r * h^k mod p`` binds the sender to the scalar ``k``
for anyone who does not know ``alpha = log_g(h)``.  The two stream
endpoints share ``alpha`` and can therefore reopen any of their own
commitments to ``k + m`` while everyone else, the relay included, can
only open honestly.  That asymmetry is the whole trick: a verifying
relay sees perfectly consistent openings whether or not a payload is
embedded.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .kvconf import format_kv, parse_int, parse_kv_text

__all__ = [
    "MissingTrapdoor",
    "GroupSpec",
    "GroupParams",
    "TOY_SPEC",
    "STANDARD_SPEC",
    "SPECS",
    "make_params",
    "validate_params",
    "commit",
    "verify_opening",
    "equivocate",
    "encode_scalar",
    "decode_scalar",
    "encode_element",
    "decode_element",
    "save_group_file",
    "load_group_file",
]


class MissingTrapdoor(Exception):
    """Equivocation needs the discrete log of h, which these params lack."""


@dataclass(frozen=True)
class GroupSpec:
    """A prime-order subgroup of Z_p*: safe-prime modulus, order, generator."""

    p: int
    q: int
    g: int

    @property
    def scalar_bytes(self) -> int:
        return (self.q.bit_length() + 7) // 8

    @property
    def element_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8


# 23 = 2*11 + 1 and 2 generates the order-11 subgroup.  Small enough that
# tests can enumerate every scalar and every opening.
TOY_SPEC = GroupSpec(p=23, q=11, g=2)

# Smallest 256-bit safe prime above 2^255.  4 = 2^2 is a quadratic
# residue, hence a generator of the order-q subgroup.  Deliberately
# desk-scale: the binding only has to outlive a stream, not an archive.
STANDARD_SPEC = GroupSpec(
    p=0x800000000000000000000000000000000000000000000000000000000002FF7F,
    q=0x4000000000000000000000000000000000000000000000000000000000017FBF,
    g=4,
)

SPECS: dict[str, GroupSpec] = {"toy": TOY_SPEC, "standard": STANDARD_SPEC}


@dataclass(frozen=True)
class GroupParams:
    """GroupSpec plus the second generator h.

    ``alpha`` (with ``h = g^alpha mod p``) is present only in the
    parameter sets handed to the two stream endpoints.  Everything that
    leaves an endpoint must go through :meth:`public` first.
    """

    p: int
    q: int
    g: int
    h: int
    alpha: int | None = None

    @property
    def spec(self) -> GroupSpec:
        return GroupSpec(self.p, self.q, self.g)

    @property
    def scalar_bytes(self) -> int:
        return (self.q.bit_length() + 7) // 8

    @property
    def element_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8

    def public(self) -> GroupParams:
        return replace(self, alpha=None)


def make_params(spec: GroupSpec, alpha: int) -> GroupParams:
    """Derive h = g^alpha and return full params including the trapdoor."""
    if not 1 <= alpha < spec.q:
        raise ValueError(f"alpha must be in [1, q), got {alpha}")
    h = pow(spec.g, alpha, spec.p)
    return GroupParams(p=spec.p, q=spec.q, g=spec.g, h=h, alpha=alpha)


def _is_probable_prime(x: int) -> bool:
    # Deterministic Miller-Rabin for x < 3.3e24 with this witness set;
    # beyond that the error probability is < 4^-12, fine for config
    # sanity checks (the shipped groups are vetted constants).
    if x < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for sp in small:
        if x == sp:
            return True
        if x % sp == 0:
            return False
    d, s = x - 1, 0
    while d % 2 == 0:
        d, s = d // 2, s + 1
    for a in small:
        y = pow(a, d, x)
        if y in (1, x - 1):
            continue
        for _ in range(s - 1):
            y = pow(y, 2, x)
            if y == x - 1:
                break
        else:
            return False
    return True


def validate_params(params: GroupParams) -> None:
    """Check group structure; raises ValueError with a reason if unsound."""
    p, q, g, h = params.p, params.q, params.g, params.h
    if p != 2 * q + 1:
        raise ValueError("p != 2q + 1")
    if not _is_probable_prime(p):
        raise ValueError("p is not prime")
    if not _is_probable_prime(q):
        raise ValueError("q is not prime")
    if not 1 < g < p or pow(g, q, p) != 1:
        raise ValueError("g does not generate the order-q subgroup")
    if not 1 < h < p or pow(h, q, p) != 1:
        raise ValueError("h is not in the order-q subgroup")
    if params.alpha is not None and pow(g, params.alpha, p) != h:
        raise ValueError("alpha is not the discrete log of h")


def commit(params: GroupParams, k: int, r: int) -> int:
    """Pedersen commitment g^r * h^k mod p.

    Inputs are reduced mod q, so commit(k, r) == commit(k, r + q).
    """
    p = params.p
    return (pow(params.g, r % params.q, p) * pow(params.h, k % params.q, p)) % p


def verify_opening(params: GroupParams, c: int, value: int, randomness: int) -> bool:
    """True iff (value, randomness) opens the commitment c."""
    return commit(params, value, randomness) == c % params.p


def equivocate(params: GroupParams, k: int, r: int, m: int) -> tuple[int, int]:
    """Reopen commit(k, r) to k + m using the trapdoor.

    Returns (opened, randomness) with opened = k + m and
    randomness = r - m*alpha, both mod q; the pair passes
    verify_opening against the original commitment.
    """
    if params.alpha is None:
        raise MissingTrapdoor("these params carry no trapdoor scalar")
    q = params.q
    return (k + m) % q, (r - m * params.alpha) % q


def encode_scalar(x: int, q: int) -> bytes:
    """Fixed-width big-endian encoding of a scalar in [0, q)."""
    if not 0 <= x < q:
        raise ValueError(f"scalar out of range [0, {q})")
    return x.to_bytes((q.bit_length() + 7) // 8, "big")


def decode_scalar(data: bytes, q: int) -> int:
    width = (q.bit_length() + 7) // 8
    if len(data) != width:
        raise ValueError(f"scalar must be {width} bytes, got {len(data)}")
    x = int.from_bytes(data, "big")
    if x >= q:
        raise ValueError("scalar out of range")
    return x


def encode_element(x: int, p: int) -> bytes:
    """Fixed-width big-endian encoding of a group element in [1, p)."""
    if not 1 <= x < p:
        raise ValueError(f"element out of range [1, {p})")
    return x.to_bytes((p.bit_length() + 7) // 8, "big")


def decode_element(data: bytes, p: int) -> int:
    width = (p.bit_length() + 7) // 8
    if len(data) != width:
        raise ValueError(f"element must be {width} bytes, got {len(data)}")
    x = int.from_bytes(data, "big")
    if not 1 <= x < p:
        raise ValueError("element out of range")
    return x


def save_group_file(params: GroupParams, path: str | Path) -> None:
    """Write the public parameters (never alpha) as a key=value file."""
    text = format_kv(
        {
            "p": hex(params.p),
            "q": hex(params.q),
            "g": hex(params.g),
            "h": hex(params.h),
        }
    )
    Path(path).write_text(text)


def load_group_file(path: str | Path) -> GroupParams:
    """Read a public parameter file and validate the group structure."""
    pairs = parse_kv_text(Path(path).read_text())
    missing = {"p", "q", "g", "h"} - set(pairs)
    if missing:
        raise ValueError(f"group file missing keys: {sorted(missing)}")
    params = GroupParams(
        p=parse_int(pairs["p"]),
        q=parse_int(pairs["q"]),
        g=parse_int(pairs["g"]),
        h=parse_int(pairs["h"]),
    )
    validate_params(params)
    return params
