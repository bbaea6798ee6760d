import json

import pytest

from app.core.config import load_run_config
from app.core.errors import ConfigError
from app.models.schemas import ConstraintModeName


def test_defaults():
    config = load_run_config()
    assert config.mode == ConstraintModeName.kitti
    assert config.multibin.bins == 2
    assert config.multibin.overlap == pytest.approx(0.1)
    assert config.iou_thresh == pytest.approx(0.7)
    assert config.toy.sweep == [1, 2, 4, 8]


def test_toml_file_and_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('mode = "upright"\nseed = 7\n\n[multibin]\nbins = 4\nw = 0.5\n', encoding="utf-8")
    config = load_run_config(path)
    assert config.mode == ConstraintModeName.upright
    assert config.multibin.bins == 4
    assert config.multibin.w == pytest.approx(0.5)

    # 命令行覆盖项优先，None 不覆盖
    config = load_run_config(path, {"multibin.bins": 8, "seed": None, "noise.boxes": 10})
    assert config.multibin.bins == 8
    assert config.seed == 7
    assert config.noise.boxes == 10


def test_json_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"category": "Pedestrian", "toy": {"sweep": [2, 4]}}), encoding="utf-8")
    config = load_run_config(path)
    assert config.category == "Pedestrian"
    assert config.toy.sweep == [2, 4]


@pytest.mark.parametrize(
    "name, content",
    [
        ("run.yaml", "mode: kitti\n"),
        ("run.toml", "mode = \n"),
        ("run.toml", "[multibin]\nbins = 0\n"),
        ("run.toml", "unknown_key = 1\n"),
        ("run.json", '{"noise": {"bin_width": 20, "max_distance": 10}}'),
    ],
)
def test_invalid_config_files(tmp_path, name, content):
    path = tmp_path / name
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_missing_file_and_bad_override(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.toml")
    with pytest.raises(ConfigError):
        load_run_config(overrides={"mode": "sideways"})
    assert ConfigError.exit_code == 2
