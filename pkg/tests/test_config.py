import json

import pytest

from msmt import config as config_mod
from msmt.config import Config, from_dict, preset


def test_paper_preset_pinned_values():
    cfg = preset("paper")
    assert cfg.n_word == 256
    assert cfg.n_feat == 48
    assert cfg.n_mem == 96
    assert cfg.grid == 8
    assert cfg.head_count == 6
    assert cfg.weight_ca == 1.0
    assert cfg.weight_red == 0.5
    assert cfg.lr == 2e-4
    assert cfg.beta1 == 0.5
    assert cfg.beta2 == 0.999
    assert cfg.batch_size == 20
    assert cfg.resolutions == [64, 128, 256]


def test_desk_preset_values():
    cfg = preset("desk")
    assert cfg.resolutions == [16, 32]
    assert (cfg.n_word, cfg.n_feat, cfg.n_mem, cfg.n_noise) == (16, 8, 16, 8)
    assert (cfg.grid, cfg.head_count, cfg.kernel_size, cfg.batch_size) == (4, 2, 3, 8)


def test_unknown_preset_rejected():
    with pytest.raises(ValueError, match="unknown preset"):
        preset("gigantic")


def test_from_dict_overrides_apply():
    cfg = from_dict({"preset": "desk", "epochs": 3, "seed": 11})
    assert cfg.epochs == 3
    assert cfg.seed == 11
    assert cfg.n_word == 16


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        from_dict({"preset": "desk", "weight_damsm": 5.0})


def test_resolutions_must_double():
    with pytest.raises(ValueError, match="must double"):
        from_dict({"preset": "desk", "resolutions": [16, 48]})


def test_grid_must_divide_stage_resolutions():
    with pytest.raises(ValueError, match="must divide"):
        from_dict({"preset": "desk", "grid": 5})


def test_load_from_json_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"preset": "desk", "epochs": 1}))
    cfg = config_mod.load(path)
    assert isinstance(cfg, Config)
    assert cfg.epochs == 1


def test_to_dict_roundtrip():
    cfg = preset("desk")
    again = from_dict(cfg.to_dict())
    assert again == cfg
