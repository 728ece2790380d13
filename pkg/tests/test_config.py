import pytest

from logconcave_lab.config import default_config_path, load_config, parse_config
from logconcave_lab.errors import ConfigInvalid

BASE = """
seed: 1
measures:
  - {name: g, kind: gaussian, dim: 2, shape: [32, 32]}
pairs:
  - {name: p, mu: g, nu: g}
checks:
  - id: transport_entropy
"""


def test_bundled_config_parses():
    cfg = load_config(default_config_path())
    assert len(cfg.pairs) >= 12
    assert cfg.seed is not None


def test_minimal_config():
    cfg = parse_config(BASE)
    assert list(cfg.measures) == ["g"] and cfg.pairs["p"] == ("g", "g")
    assert cfg.formats == ["csv", "json"]


def test_undefined_measure_named():
    text = BASE.replace("nu: g}", "nu: missing}")
    with pytest.raises(ConfigInvalid, match="missing"):
        parse_config(text)


def test_unknown_key_with_line():
    text = BASE.replace("  - id: transport_entropy", "  - id: transport_entropy\n    tolerence: 1e-3")
    with pytest.raises(ConfigInvalid) as exc:
        parse_config(text)
    assert "line 9" in str(exc.value) and "tolerence" in str(exc.value)


def test_unknown_check_id():
    with pytest.raises(ConfigInvalid, match="unknown check id"):
        parse_config(BASE.replace("transport_entropy", "bogus"))


def test_sampled_check_needs_seed():
    text = BASE.replace("seed: 1\n", "") + "  - {id: thin_shell, measure: g}\n"
    with pytest.raises(ConfigInvalid, match="seed"):
        parse_config(text)


def test_bad_yaml():
    with pytest.raises(ConfigInvalid):
        parse_config("measures: [\n")


def test_duplicate_names():
    text = BASE.replace("pairs:", "  - {name: g, kind: laplace, dim: 1, shape: [16]}\npairs:")
    with pytest.raises(ConfigInvalid, match="duplicate"):
        parse_config(text)


def test_empty_config():
    cfg = parse_config("")
    assert cfg.checks == [] and cfg.measures == {}
