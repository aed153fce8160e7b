import numpy as np
import pytest

from msmt import checkpoint


def _records():
    rng = np.random.default_rng(0)
    return {
        "encoder.embedding": rng.normal(size=(17, 16)),
        "stage1.window_w": rng.normal(size=(3, 40, 40)),
        "config.seed": np.asarray(7.0),
        "fuse.bias": np.asarray(0.25),
    }


def test_roundtrip_values_and_order(tmp_path):
    path = tmp_path / "model.msmt"
    records = _records()
    checkpoint.save(path, records)
    loaded = checkpoint.load(path)
    assert list(loaded) == list(records)
    for name, arr in records.items():
        assert loaded[name].shape == np.asarray(arr).shape
        np.testing.assert_array_equal(loaded[name], np.asarray(arr).astype(np.float32))


def test_save_load_save_is_bit_exact(tmp_path):
    first = tmp_path / "a.msmt"
    second = tmp_path / "b.msmt"
    checkpoint.save(first, _records())
    checkpoint.save(second, checkpoint.load(first))
    assert first.read_bytes() == second.read_bytes()


def test_scalar_records_roundtrip(tmp_path):
    path = tmp_path / "s.msmt"
    checkpoint.save(path, {"x": np.asarray(3.5)})
    loaded = checkpoint.load(path)
    assert loaded["x"].shape == ()
    assert float(loaded["x"]) == 3.5


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.msmt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="bad magic"):
        checkpoint.load(path)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "v.msmt"
    checkpoint.save(path, {"x": np.zeros(2)})
    raw = bytearray(path.read_bytes())
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="version"):
        checkpoint.load(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "t.msmt"
    checkpoint.save(path, {"x": np.zeros(2)})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(ValueError, match="trailing"):
        checkpoint.load(path)


def test_empty_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "e.msmt"
    checkpoint.save(path, {})
    assert checkpoint.load(path) == {}
