"""Line-oriented ``name = value`` config files.

Used for group parameter files and simulation scenario files.  One pair
per line, ``#`` starts a comment, blank lines are ignored.  Values keep
their raw string form; callers convert with the helpers below.
"""

from __future__ import annotations

from typing import Mapping


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse config text into an ordered name->value dict.

    Raises ValueError on malformed lines, empty names or values, and
    duplicate keys.  Names are lowercased; values are stripped but
    otherwise untouched.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'name = value', got {raw!r}")
        name, value = line.split("=", 1)
        name = name.strip().lower()
        value = value.strip()
        if not name or not value:
            raise ValueError(f"line {lineno}: empty name or value")
        if name in out:
            raise ValueError(f"line {lineno}: duplicate key {name!r}")
        out[name] = value
    return out


def format_kv(pairs: Mapping[str, object]) -> str:
    return "".join(f"{name} = {value}\n" for name, value in pairs.items())


def parse_int(value: str) -> int:
    """Parse a decimal or 0x-prefixed hex integer."""
    return int(value, 0)


def parse_bool(value: str) -> bool:
    low = value.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")
