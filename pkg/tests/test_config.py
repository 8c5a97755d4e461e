import pytest

from scenetraj.cli import build_parser, resolve_config
from scenetraj.config import ConfigError, RunConfig


def test_defaults():
    cfg = RunConfig()
    assert (cfg.width, cfg.depth, cfg.n_closest) == (6, 2, 3)
    assert (cfg.sigma, cfg.dt, cfg.v_walk, cfg.horizon) == (0.5, 1.0, 1.4, 60.0)
    assert cfg.geodesic and not cfg.squared_ade


def test_file_values_and_relative_paths(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nscenes = a.json, /abs/b.json\nfixture = fx.json\nsigma = 0.8\nbon = 1, 5\n"
                   "geodesic = no\n")
    cfg = RunConfig.from_file(ini)
    assert cfg.scenes == (str(tmp_path / "a.json"), "/abs/b.json")
    assert cfg.fixture == str(tmp_path / "fx.json")
    assert cfg.sigma == 0.8 and cfg.bon == (1, 5) and cfg.geodesic is False


@pytest.mark.parametrize("text", ["[run]\nsigma = -1\n", "[run]\nwidth = six\n", "[run]\ncolour = red\n",
                                  "[run]\ngt_semantic = yes\ngt_instance = yes\n", "not an ini"])
def test_bad_files(tmp_path, text):
    ini = tmp_path / "run.ini"
    ini.write_text(text)
    with pytest.raises(ConfigError):
        RunConfig.from_file(ini)


def test_missing_file():
    with pytest.raises(ConfigError):
        RunConfig.from_file("/nonexistent/run.ini")


def parse(*argv):
    return resolve_config(build_parser().parse_args(["describe", *argv]))


def test_precedence_cli_over_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nsigma = 0.8\ndt = 2\ngt_semantic = yes\n")
    cfg = parse("-c", str(ini), "--sigma", "0.3", "--gt-instance")
    assert cfg.sigma == 0.3  # command line wins
    assert cfg.dt == 2.0  # file beats default
    assert cfg.gt_instance and not cfg.gt_semantic
    assert cfg.effective_granularity == "instance"


def test_set_and_flags():
    cfg = parse("--set", "tv_threshold=0.25", "--euclidean", "--bon", "2,3", "--mode", "sampled")
    assert cfg.tv_threshold == 0.25 and not cfg.geodesic and cfg.bon == (2, 3)
    assert cfg.trajectory_mode == "sampled"
    with pytest.raises(ConfigError):
        parse("--set", "nonsense")


def test_manifest_hash_tracks_values():
    a, b = RunConfig(), RunConfig()
    assert a.manifest_hash() == b.manifest_hash()
    assert a.manifest_hash() != RunConfig(sigma=0.6).manifest_hash()
    assert "prompt_version" in a.manifest()
