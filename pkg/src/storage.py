"""Manifest + flat little-endian float32 block files.

A store is two files: ``<name>.json`` (text manifest: version, free-form meta,
and one entry per block with its shape, dtype and byte offset) and ``<name>.bin``
(the blocks' values back to back).
"""

import json
import os

import numpy as np

from src.errors import CompatibilityError, PipelineOrderError

FORMAT_VERSION = 1
DTYPE = "<f4"


def data_path(manifest_path: str) -> str:
    root, _ = os.path.splitext(manifest_path)
    return root + ".bin"


def write_blocks(manifest_path: str, blocks: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    offset = 0
    with open(data_path(manifest_path), "wb") as f:
        for name, values in blocks.items():
            raw = np.ascontiguousarray(values, dtype=DTYPE).tobytes()
            entries.append(
                {"name": name, "shape": list(np.shape(values)), "dtype": DTYPE, "offset": offset, "nbytes": len(raw)}
            )
            f.write(raw)
            offset += len(raw)
    manifest = {
        "version": FORMAT_VERSION,
        "dtype": DTYPE,
        "data_file": os.path.basename(data_path(manifest_path)),
        "meta": meta,
        "blocks": entries,
    }
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def read_blocks(manifest_path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Load every block as float32. Returns (blocks, meta)."""
    bin_path = data_path(manifest_path)
    for path in (manifest_path, bin_path):
        if not os.path.isfile(path):
            raise PipelineOrderError(path)
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("version") != FORMAT_VERSION or manifest.get("dtype") != DTYPE:
        raise CompatibilityError(
            f"{manifest_path}: unsupported version/dtype {manifest.get('version')}/{manifest.get('dtype')}"
        )
    with open(bin_path, "rb") as f:
        raw = f.read()
    blocks = {}
    for entry in manifest["blocks"]:
        if entry.get("dtype", DTYPE) != DTYPE:
            raise CompatibilityError(
                f"{manifest_path}: block {entry['name']} has dtype {entry['dtype']}, expected {DTYPE}"
            )
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(raw):
            raise CompatibilityError(f"{bin_path}: truncated at block {entry['name']}")
        values = np.frombuffer(raw[start : start + nbytes], dtype=DTYPE)
        blocks[entry["name"]] = values.reshape(entry["shape"]).copy()
    return blocks, manifest.get("meta", {})
