import json

import pytest

from depcag.cli.presets import PRESETS, load_preset, preset_document
from depcag.engine.error import ConfigError
from depcag.model.runconfig import load_run_config, parse_run_config


def make_document(**overrides):
    doc = preset_document("scalar-stable")
    for path, value in overrides.items():
        node = doc
        *parents, leaf = path.split("__")
        for key in parents:
            node = node[key]
        node[leaf] = value
    return doc


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_validate(name):
    cfg = load_preset(name)
    assert cfg.system.dim == len(cfg.system.A)


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_document("no-such")


def test_numbers_accepted_as_expressions():
    cfg = parse_run_config(make_document(system__A=[[-1]]))
    assert cfg.system.A == [["-1.0"]]


class TestPointers:
    def test_bad_expression(self):
        doc = make_document(system__A=[["-1", "0"], ["0", "x1 +"]], system__A0=[["0", "0"], ["0", "0"]],
                            system__dim=2)
        with pytest.raises(ConfigError) as exc:
            parse_run_config(doc)
        assert exc.value.pointer == "/system/A/1/1"

    def test_K_below_one(self):
        with pytest.raises(ConfigError, match="K must be >= 1") as exc:
            parse_run_config(make_document(dichotomy__K=0.5))
        assert exc.value.pointer == "/dichotomy"

    @pytest.mark.parametrize("grid", [
        {},
        {"family": "floor", "explicit": {"t": [0, 1], "zeta": [0]}},
    ])
    def test_grid_kind(self, grid):
        with pytest.raises(ConfigError, match="exactly one") as exc:
            parse_run_config(make_document(grid=grid))
        assert exc.value.pointer == "/grid"

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as exc:
            parse_run_config(make_document(engine={"horizon": 3}))
        assert exc.value.pointer == "/engine/horizon"

    def test_negative_alpha(self):
        with pytest.raises(ConfigError) as exc:
            parse_run_config(make_document(dichotomy__alpha=-1.0))
        assert exc.value.pointer == "/dichotomy/alpha"

    def test_unknown_family_at_build(self):
        cfg = parse_run_config(make_document(grid={"family": "ceil"}))
        with pytest.raises(ConfigError) as exc:
            cfg.build_system()
        assert exc.value.pointer == "/grid"


class TestHash:
    def test_stable(self):
        assert load_preset("scalar-stable").config_hash() == load_preset("scalar-stable").config_hash()
        assert len(load_preset("scalar-stable").config_hash()) == 64

    def test_changes_with_seed(self):
        assert parse_run_config(make_document(seed=1)).config_hash() != load_preset("scalar-stable").config_hash()

    def test_number_spelling_does_not_matter(self):
        a = parse_run_config(make_document(system__A=[[-1]]))
        b = parse_run_config(make_document(system__A=[[-1.0]]))
        assert a.config_hash() == b.config_hash()


class TestLoad:
    def test_from_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(preset_document("pure-pca")))
        assert load_run_config(path) == load_preset("pure-pca")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"grid": ')
        with pytest.raises(ConfigError, match="invalid JSON at line 1") as exc:
            load_run_config(path)
        assert exc.value.pointer == ""
