"""Small shared helpers: seed derivation, atomic writes, float formatting."""

from __future__ import annotations

import hashlib
import math
import os
import tempfile


def derive_seed(root_seed: int, *parts: object) -> int:
    """Derive a child seed from a root seed and a label path.

    Stable across platforms and processes (no reliance on hash
    randomization), so parallel and sequential runs agree.
    """
    key = "|".join([str(root_seed), *[str(p) for p in parts]])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def ceil_fraction(fraction: float, total: int) -> int:
    """ceil(fraction * total), guarded against float noise like 0.15*20 -> 3.0000000000000004."""
    return math.ceil(round(fraction * total, 9))


def format_float(value: float) -> str:
    """Shortest round-trip decimal form, used for all delimited output."""
    return repr(float(value))


def atomic_write_text(path: str, text: str) -> None:
    """Write .tmp in the target directory, then rename over the destination."""
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
