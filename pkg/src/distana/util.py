"""Small shared helpers: worker-count resolution and file hashing."""

import hashlib
import os


def worker_count() -> int:
    """Worker threads to use, capped by the DISTANA_THREADS env variable.

    Defaults to the machine's CPU count. Values below 1 are clamped to 1.
    """
    cap = os.environ.get("DISTANA_THREADS")
    if cap is not None:
        try:
            return max(1, int(cap))
        except ValueError:
            return 1
    return max(1, os.cpu_count() or 1)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
