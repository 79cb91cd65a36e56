import pytest

from boxgraph.config import Config, ConfigError, load_config, parse_config
from boxgraph.skitti_io import STATIC_CLASSES


def test_defaults():
    cfg = Config()
    assert cfg.allowlist == STATIC_CLASSES
    assert cfg.ransac().iterations == 10_000
    assert (cfg.pos_radius, cfg.neg_radius, cfg.frame_gap, cfg.neg_ratio) == (3.0, 20.0, 50, 100)


def test_parse_and_load(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\neps = 0.5\nmin_pts.80 = 3   # poles are thin\n"
                 "allowlist = 50, 80\nransac_early_exit = yes\ntau = 12.5\n")
    cfg = load_config(p)
    assert cfg.eps == 0.5
    assert cfg.class_min_pts == {80: 3}
    assert cfg.clustering().for_class(80) == (0.5, 3)
    assert cfg.allowlist == frozenset({50, 80})
    assert cfg.ransac_early_exit is True
    assert cfg.tau == 12.5


def test_overrides_win(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("eps = 0.5\n")
    assert load_config(p, {"eps": "2"}).eps == 2.0
    assert load_config(None, {"ransac_iterations": "50"}).ransac(seed=3).seed == 3


@pytest.mark.parametrize("text", ["nonsense = 1", "eps", "=3", "colour.50 = 2"])
def test_bad_keys(text):
    with pytest.raises(ConfigError):
        Config().with_values(parse_config(text))


@pytest.mark.parametrize("kv", [{"eps": "abc"}, {"eps": "-1"}, {"min_pts": "1.5"},
                                {"ransac_early_exit": "maybe"}, {"pos_radius": "30"},
                                {"frame_gap": "-1"}])
def test_bad_values(kv):
    with pytest.raises(ConfigError):
        Config().with_values(kv)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")
