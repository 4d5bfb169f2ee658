"""Desk-scale guards. ``TAP_CAPS="dp=20,branches=5000"`` overrides the defaults."""
from __future__ import annotations

import os

DEFAULTS = {"dp": 22, "branches": 100_000}


def get_cap(name: str) -> int:
    raw = os.environ.get("TAP_CAPS", "")
    for item in raw.split(","):
        key, sep, value = item.partition("=")
        if sep and key.strip() == name:
            return int(value)
    return DEFAULTS[name]
