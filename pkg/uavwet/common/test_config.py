import json
import os

import pytest

from uavwet.common.config import (DEFAULT_CONFIG_PATH, WorldConfig, dbm_to_watts, load_config, load_env,
                                  save_config)
from uavwet.common.enums import Variant
from uavwet.common.errors import ConfigError
from uavwet.common.seeding import substream


def test_defaults_carry_table_values():
    cfg = WorldConfig()
    assert (cfg.channel.h_fix, cfg.channel.alpha_l, cfg.channel.alpha_n) == (5.0, 3.0, 5.0)
    assert (cfg.channel.a, cfg.channel.b) == (12.08, 0.11)
    assert (cfg.env.p_u, cfg.env.b_u_min, cfg.env.b_u_max) == (1.0, 20000.0, 140000.0)
    assert (cfg.env.xi0, cfg.env.xi1, cfg.env.xi2) == (0.25, 1.0, 1e-5)
    assert (cfg.env.b_thr, cfg.env.d_min, cfg.env.varrho2) == (0.01, 5.0, 100.0)
    assert (cfg.train.gamma, cfg.train.eps, cfg.train.tau) == (0.985, 0.8, 0.999)
    assert (cfg.train.buffer_size, cfg.train.batch_size, cfg.train.alpha_lr) == (2 ** 17, 128, 2e-4)
    assert (cfg.train.lr, cfg.train.policy_lr) == (2e-4, 3e-4)
    assert cfg.harvester.p_sen == pytest.approx(1e-4, rel=1e-12)


def test_shipped_config_matches_defaults():
    assert load_config(DEFAULT_CONFIG_PATH) == WorldConfig()


def test_empty_override_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("{}")
    assert load_config(path) == WorldConfig()


def test_dbm_fields_convert_once(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"harvester": {"p_sen_dbm": -10.0, "p_sat_dbm": 7.0}}))
    cfg = load_config(path)
    assert cfg.harvester.p_sen == dbm_to_watts(-10.0)
    assert cfg.harvester.p_sat == pytest.approx(5.0119e-3, rel=1e-4)


@pytest.mark.parametrize("payload", [
    {"env": {"b_thr": 0.05}},
    {"env": {"unknown_key": 1}},
    {"bogus_section": {}},
    {"harvester": {"p_sen": 1e-4, "p_sen_dbm": -10.0}},
    {"channel": {"alpha_l": 5.0, "alpha_n": 3.0}},
    {"train": {"eps": 0.0}},
    {"scenarios": {"bad": {"width": 10, "length": 10, "n_uavs": 2, "n_devices": 1,
                           "device_positions": [[20, 5]]}}},
])
def test_invalid_configs_are_rejected(tmp_path, payload):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_save_then_load_is_identical(tmp_path):
    cfg = WorldConfig().with_train(variant=Variant.MAGRL_HOE, episodes=12)
    save_config(cfg, tmp_path / "out" / "cfg.json")
    assert load_config(tmp_path / "out" / "cfg.json") == cfg


def test_user_scenarios_extend_shipped_ones(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"scenarios": {"tiny": {"width": 50, "length": 40, "n_uavs": 2, "n_devices": 1}}}))
    cfg = load_config(path)
    assert cfg.scenario("tiny").obs_dim == 5
    assert cfg.scenario("test2x3").n_devices == 3
    with pytest.raises(ConfigError):
        cfg.scenario("missing")


def test_with_train_revalidates():
    with pytest.raises(ConfigError):
        WorldConfig().with_train(gamma=1.5)
    assert WorldConfig().with_train(variant="magrl-g").train.effective_eps == 1.0


def test_load_env_keeps_existing_values(tmp_path, monkeypatch):
    env_file = tmp_path / ".env_uavwet"
    env_file.write_text("# comment\nUAVWET_TEST_A=from_file\nUAVWET_TEST_B='quoted'\n")
    monkeypatch.setenv("UAVWET_TEST_A", "already")
    monkeypatch.delenv("UAVWET_TEST_B", raising=False)
    load_env(env_file)
    assert os.environ["UAVWET_TEST_A"] == "already"
    assert os.environ["UAVWET_TEST_B"] == "quoted"
    monkeypatch.delenv("UAVWET_TEST_B")


def test_named_substreams_are_independent_and_repeatable():
    a1 = substream(1, "env", 0).random(4)
    a2 = substream(1, "env", 0).random(4)
    b = substream(1, "replay").random(4)
    assert a1.tolist() == a2.tolist()
    assert a1.tolist() != b.tolist()
    with pytest.raises(KeyError):
        substream(1, "nope")
