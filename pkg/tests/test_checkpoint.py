import numpy as np
import pytest

from histocount.checkpoint import CheckpointError, MAGIC, load_checkpoint, save_checkpoint
from histocount.rng import stream


def test_round_trip_bit_exact(tmp_path):
    rng = stream(1)
    arrays = {
        "conv.k": rng.normal(size=(4, 2, 3, 3)),
        "conv.b": rng.normal(size=4),
        "fc.w": rng.normal(size=(5, 7)) * 1e-12,
        "scalarish": rng.normal(size=(1,)),
    }
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, arrays)
    loaded = load_checkpoint(path)
    assert list(loaded.keys()) == list(arrays.keys())
    for name, arr in arrays.items():
        assert loaded[name].dtype == np.float64
        assert loaded[name].shape == arr.shape
        assert loaded[name].tobytes() == arr.astype("<f8").tobytes()


def test_magic_bytes_prefix(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"a": np.zeros(2)})
    assert path.read_bytes().startswith(MAGIC)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE\n\nxxxx")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, {"a": np.zeros(4)})
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_invalid_names_rejected(tmp_path):
    with pytest.raises(ValueError):
        save_checkpoint(tmp_path / "x.ckpt", {"has space": np.zeros(1)})
