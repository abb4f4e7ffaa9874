# File: core/utils/fingerprint.py

"""Content hashes used to tag meshes, metrics and configs."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


def sha256(data: bytes) -> str:
    """Return the SHA256 hex digest for *data*."""

    return hashlib.sha256(data).hexdigest()


def hash_file(path: Path) -> str:
    """Return the SHA256 digest of a file, read in chunks."""

    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_array(*arrays: np.ndarray) -> str:
    """Digest of the dtype, shape and bytes of each array, in order."""

    h = hashlib.sha256()
    for arr in arrays:
        a = np.ascontiguousarray(arr)
        h.update(f"{a.dtype.str}{a.shape}".encode("ascii"))
        h.update(a.tobytes())
    return h.hexdigest()


def short(digest: str, length: int = 12) -> str:
    """Abbreviated digest for log lines and file headers."""

    return digest[:length]
