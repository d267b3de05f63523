"""Tests for the manifest + flat float32 block store."""

import json

import numpy as np
import pytest

from src.errors import CompatibilityError, PipelineOrderError
from src.storage import data_path, read_blocks, write_blocks


def test_round_trip(tmp_path):
    path = str(tmp_path / "model.json")
    blocks = {"phi.W1": np.arange(6, dtype=np.float32).reshape(2, 3), "phi.b": np.array([0.5], dtype=np.float32)}
    write_blocks(path, blocks, {"header": "# config=x seed=1"})
    back, meta = read_blocks(path)
    assert meta == {"header": "# config=x seed=1"}
    assert list(back) == ["phi.W1", "phi.b"]
    for name in blocks:
        assert back[name].dtype == np.float32
        assert np.array_equal(back[name], blocks[name])


def test_little_endian_layout(tmp_path):
    path = str(tmp_path / "model.json")
    write_blocks(path, {"x": np.array([1.0, 2.0])}, {})
    with open(data_path(path), "rb") as f:
        assert f.read() == np.array([1.0, 2.0], dtype="<f4").tobytes()
    manifest = json.loads((tmp_path / "model.json").read_text())
    assert manifest["dtype"] == "<f4"
    assert manifest["blocks"][0] == {"name": "x", "shape": [2], "dtype": "<f4", "offset": 0, "nbytes": 8}


def test_missing_files(tmp_path):
    with pytest.raises(PipelineOrderError):
        read_blocks(str(tmp_path / "missing.json"))


def test_unsupported_version(tmp_path):
    path = tmp_path / "model.json"
    write_blocks(str(path), {"x": np.zeros(2)}, {})
    manifest = json.loads(path.read_text())
    manifest["version"] = 99
    path.write_text(json.dumps(manifest))
    with pytest.raises(CompatibilityError):
        read_blocks(str(path))


def test_truncated_data(tmp_path):
    path = tmp_path / "model.json"
    write_blocks(str(path), {"x": np.zeros(4)}, {})
    (tmp_path / "model.bin").write_bytes(b"\x00" * 8)
    with pytest.raises(CompatibilityError, match="truncated"):
        read_blocks(str(path))


def test_block_dtype_mismatch(tmp_path):
    path = tmp_path / "model.json"
    write_blocks(str(path), {"x": np.zeros(2), "y": np.ones(3)}, {})
    manifest = json.loads(path.read_text())
    assert [entry["dtype"] for entry in manifest["blocks"]] == ["<f4", "<f4"]
    manifest["blocks"][1]["dtype"] = "<f8"
    path.write_text(json.dumps(manifest))
    with pytest.raises(CompatibilityError, match="block y has dtype <f8"):
        read_blocks(str(path))
