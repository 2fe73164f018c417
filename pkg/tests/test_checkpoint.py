import numpy as np
import pytest

from lsfanim.checkpoint import read_checkpoint, write_checkpoint
from lsfanim.errors import ConfigError, IntegrityError
from lsfanim.params import init_rng


def test_round_trip_is_bit_exact(tmp_path, rng):
    tensors = {
        "enc.w": rng.standard_normal((5, 3)).astype(np.float32),
        "enc.b": rng.standard_normal(3).astype(np.float32),
        "codebook": rng.standard_normal((7, 4)).astype(np.float32),
        "basis": rng.standard_normal((2, 3, 4)).astype(np.float32),
    }
    path = tmp_path / "t.lsfc"
    write_checkpoint(path, tensors)
    loaded = read_checkpoint(path)
    assert list(loaded) == sorted(tensors)
    for name, arr in tensors.items():
        assert loaded[name].shape == arr.shape
        assert loaded[name].tobytes() == arr.tobytes()


def test_identical_content_produces_identical_bytes(tmp_path, rng):
    tensors = {"a": rng.standard_normal(4).astype(np.float32)}
    p1, p2 = tmp_path / "a.lsfc", tmp_path / "b.lsfc"
    write_checkpoint(p1, tensors)
    write_checkpoint(p2, dict(reversed(list(tensors.items()))))
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_bytes_prefix(tmp_path):
    path = tmp_path / "t.lsfc"
    write_checkpoint(path, {"x": np.zeros(1, dtype=np.float32)})
    assert path.read_bytes()[:4] == b"LSFC"


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.lsfc"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(IntegrityError):
        read_checkpoint(path)


def test_truncated_file_rejected(tmp_path, rng):
    path = tmp_path / "t.lsfc"
    write_checkpoint(path, {"x": rng.standard_normal(8).astype(np.float32)})
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(IntegrityError):
        read_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "t.lsfc"
    write_checkpoint(path, {"x": np.zeros(2, dtype=np.float32)})
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(IntegrityError):
        read_checkpoint(path)


def test_non_float32_rejected(tmp_path):
    with pytest.raises(ConfigError):
        write_checkpoint(tmp_path / "t.lsfc", {"x": np.zeros(2, dtype=np.float64)})


def test_utf8_names_survive(tmp_path):
    name = "layer.0/weight"
    path = tmp_path / "t.lsfc"
    write_checkpoint(path, {name: np.ones(3, dtype=np.float32)})
    assert name in read_checkpoint(path)
