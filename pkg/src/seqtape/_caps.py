"""Desk-scale size caps.

``SEQTAPE_CAP`` in the environment overrides every default. Caps are checked
and raise; nothing is ever silently truncated.
"""

from __future__ import annotations

import os

from .errors import CapExceeded

STATEVECTOR_CAP = 2**16
CIRCUIT_CAP = 2**18
WIRE_CAP = 2**18


def cap(default: int) -> int:
    env = os.environ.get("SEQTAPE_CAP")
    if env:
        return int(env)
    return default


def check_cap(size: int, default: int, what: str = "amplitudes") -> None:
    limit = cap(default)
    if size > limit:
        raise CapExceeded(f"{what}: {size} exceeds cap {limit} (set SEQTAPE_CAP to raise it)")
