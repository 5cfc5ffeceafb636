"""Checkpoint serialization: byte-exact round trips and format guards."""

import os

import numpy as np
import pytest

from fovea import checkpoint, model, nn
from fovea.errors import FormatError


def make_net(seed=0, c=3):
    cfg = model.ModelConfig(
        filter_sizes=model.FILTER_SIZE_CONFIGS[9], in_channels=c, activation="leaky_relu"
    )
    return model.build_model(cfg, seed=seed)


def test_round_trip_preserves_everything(tmp_path):
    net = make_net(seed=5)
    path = tmp_path / "net.fvnt"
    checkpoint.save_checkpoint(path, net, steps=123, seed=77)
    loaded = checkpoint.load_checkpoint(path)
    assert loaded.model.config == net.config
    assert loaded.steps == 123
    assert loaded.seed == 77
    assert loaded.adam is None
    for la, lb in zip(net.layers, loaded.model.layers):
        np.testing.assert_array_equal(la.weights, lb.weights)
        np.testing.assert_array_equal(la.bias, lb.bias)
        assert lb.weights.dtype == np.float32


def test_save_load_save_is_byte_identical(tmp_path):
    net = make_net(seed=6)
    a, b = tmp_path / "a.fvnt", tmp_path / "b.fvnt"
    checkpoint.save_checkpoint(a, net, steps=9, seed=3)
    loaded = checkpoint.load_checkpoint(a)
    checkpoint.save_checkpoint(b, loaded.model, steps=loaded.steps, seed=loaded.seed)
    assert a.read_bytes() == b.read_bytes()


def test_optimizer_state_round_trip(tmp_path):
    net = make_net(seed=7)
    n = model.params_to_vector(net).size
    rng = np.random.default_rng(0)
    adam = nn.AdamState(
        lr=1e-5, m=rng.random(n).astype(np.float32), v=rng.random(n).astype(np.float32), step=42
    )
    path = tmp_path / "net.fvnt"
    checkpoint.save_checkpoint(path, net, steps=42, seed=1, adam=adam)
    loaded = checkpoint.load_checkpoint(path)
    assert loaded.adam is not None
    assert loaded.adam.lr == adam.lr
    assert loaded.adam.step == 42
    np.testing.assert_array_equal(loaded.adam.m, adam.m)
    np.testing.assert_array_equal(loaded.adam.v, adam.v)


def test_wrong_magic_rejected(tmp_path):
    path = tmp_path / "bogus.fvnt"
    path.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(FormatError, match="magic"):
        checkpoint.load_checkpoint(path)


def test_unknown_version_rejected(tmp_path):
    net = make_net()
    path = tmp_path / "net.fvnt"
    checkpoint.save_checkpoint(path, net, steps=0, seed=0)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="version"):
        checkpoint.load_checkpoint(path)


def test_truncated_file_rejected(tmp_path):
    net = make_net()
    path = tmp_path / "net.fvnt"
    checkpoint.save_checkpoint(path, net, steps=0, seed=0)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(FormatError, match="truncated"):
        checkpoint.load_checkpoint(path)


def test_no_temp_files_left_behind(tmp_path):
    net = make_net()
    checkpoint.save_checkpoint(tmp_path / "net.fvnt", net, steps=0, seed=0)
    assert sorted(os.listdir(tmp_path)) == ["net.fvnt"]


def test_save_overwrites_existing(tmp_path):
    path = tmp_path / "net.fvnt"
    checkpoint.save_checkpoint(path, make_net(seed=1), steps=1, seed=0)
    checkpoint.save_checkpoint(path, make_net(seed=2), steps=2, seed=0)
    assert checkpoint.load_checkpoint(path).steps == 2
