"""Flat key=value config parsing and validation."""

import pytest

from fovea import config
from fovea.errors import ConfigError


def test_parse_and_types():
    mapping = config.parse_mapping([
        "profile=wami_sf02",
        "seed=7",
        "lr=0.001",
        "renders=true",
        "# comment",
        "",
        "N=64",
    ])
    cfg, given = config.from_mapping(mapping)
    assert cfg.profile == "wami_sf02"
    assert cfg.seed == 7
    assert cfg.lr == 0.001
    assert cfg.renders is True
    assert cfg.N == 64
    assert given == {"profile", "seed", "lr", "renders", "N"}


def test_defaults_follow_published_training_setup():
    cfg, _ = config.from_mapping({})
    assert cfg.lr == 1e-5
    assert cfg.batch == 32


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'learning_rate'"):
        config.parse_mapping(["learning_rate=0.1"])


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        config.parse_mapping(["seed=1", "seed=2"])


def test_bad_value_names_key():
    with pytest.raises(ConfigError, match="'seed'"):
        config.from_mapping({"seed": "banana"})


def test_missing_equals_rejected():
    with pytest.raises(ConfigError, match="line 1"):
        config.parse_mapping(["justakey"])


def test_echo_roundtrip():
    cfg, _ = config.from_mapping({"seed": "3", "sf": "0.4", "renders": "true"})
    echoed = config.to_mapping(cfg)
    cfg2, _ = config.from_mapping(config.parse_mapping(
        [f"{k}={v}" for k, v in echoed.items()]))
    assert cfg2 == cfg


def test_require_reports_missing():
    with pytest.raises(ConfigError, match="train: missing.*frames"):
        config.require(frozenset({"seed"}), "train", "frames", "seed")
