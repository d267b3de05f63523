import hashlib
import os
import re

import numpy as np


def sanitize_filename(name: str) -> str:
    return re.sub(r'[<>:"/\\|?*\s]', "_", name).strip()


def format_duration(seconds: float) -> str:
    h = int(seconds // 3600)
    m = int((seconds % 3600) // 60)
    s = int(seconds % 60)
    if h > 0:
        return f"{h}:{m:02d}:{s:02d}"
    return f"{m}:{s:02d}"


def file_header(cfg_hash: str, seed: int | None) -> str:
    """First line of every text artifact."""
    return f"# config={cfg_hash} seed={seed}"


def stable_bucket(text: str, buckets: int) -> int:
    """Process-independent hash bucket (the builtin hash() is salted per run)."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


def derive_seeds(seed: int, count: int) -> list[int]:
    """Independent child seeds, fixed by the master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def clean_field(value: str) -> str:
    """Make a value safe for one tab-separated cell."""
    return re.sub(r"[\t\r\n]+", " ", value)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
