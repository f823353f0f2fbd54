import json

import pytest

from bspinn.config import (
    ConfigError,
    from_dict,
    load_config,
    manifest,
    to_dict,
    write_manifest,
)


def test_empty_dict_gives_defaults():
    cfg = from_dict({})
    plan = cfg.plan
    assert plan.market.kind == "euro_put"
    assert plan.market.strike == 45.0
    assert plan.net.hidden_layers == 4
    assert plan.net.hidden_width == 50
    assert plan.n_interior == 150
    assert plan.n_terminal + plan.n_boundary == 256
    assert plan.stage1_epochs == 50_000
    assert plan.stage2_epochs == 5_000
    assert plan.ensemble_size == 30
    assert plan.weights.anchor == pytest.approx(1e-3)
    assert cfg.evaluation.n_s == 201
    assert cfg.fd.n_s == 800


def test_evaluation_grid_defaults():
    cfg = from_dict({})
    S, slices = cfg.evaluation.grid(cfg.plan.market)
    assert S.shape == (201,)
    assert S[0] == 0.0
    assert S[-1] == pytest.approx(3 * 45.0)
    assert slices == [0.0, 0.25, 0.5]


def test_field_errors_carry_paths():
    with pytest.raises(ConfigError, match="market.kind"):
        from_dict({"market": {"kind": "binary"}})
    with pytest.raises(ConfigError, match="market"):
        from_dict({"market": {"sigma": -1.0}})
    with pytest.raises(ConfigError, match="domain"):
        from_dict({"domain": {"s_min": 10.0, "s_max": 5.0}})
    with pytest.raises(ConfigError, match="input_transform"):
        from_dict({"network": {"input_transform": "chebyshev"}})
    with pytest.raises(ConfigError, match="fd.omega"):
        from_dict({"fd": {"omega": 2.0}})
    with pytest.raises(ConfigError, match="n_s"):
        from_dict({"evaluation": {"n_s": 1}})
    with pytest.raises(ConfigError, match="anchor_mode"):
        from_dict({"train": {"anchor_mode": "drifting"}})


def test_log_moneyness_needs_positive_s_min():
    with pytest.raises(ConfigError, match="log_moneyness"):
        from_dict({"network": {"input_transform": "log_moneyness"}})
    cfg = from_dict({
        "network": {"input_transform": "log_moneyness"},
        "domain": {"s_min": 1.0},
    })
    assert cfg.plan.net.input_transform == "log_moneyness"


def test_network_scales_follow_market():
    cfg = from_dict({"market": {"strike": 80.0, "sigma": 0.3, "maturity": 2.0}})
    assert cfg.plan.net.strike == 80.0
    assert cfg.plan.net.sigma == 0.3
    assert cfg.plan.net.maturity == 2.0
    assert cfg.plan.domain.s_max == pytest.approx(240.0)


def test_roundtrip_through_dict():
    doc = {"market": {"kind": "amer_put", "strike": 50.0}, "seed": 9,
           "train": {"ensemble_size": 5}}
    cfg = from_dict(doc)
    again = from_dict(to_dict(cfg))
    assert to_dict(again) == to_dict(cfg)


def test_load_config_and_bad_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 3}))
    cfg = load_config(path)
    assert cfg.plan.seed == 3
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)


def test_manifest_contents(tmp_path):
    cfg = from_dict({"seed": 7, "train": {"ensemble_size": 3}})
    doc = manifest(cfg)
    assert doc["derived_seeds"]["init"] == 7
    assert doc["derived_seeds"]["collocation"] == 1007
    assert doc["derived_seeds"]["members"] == [2007, 2008, 2009]
    assert len(doc["config_sha256"]) == 64
    # identical configs hash identically, different seeds differently
    assert manifest(from_dict({"seed": 7, "train": {"ensemble_size": 3}}))["config_sha256"] == doc["config_sha256"]
    assert manifest(from_dict({"seed": 8}))["config_sha256"] != doc["config_sha256"]
    path = tmp_path / "manifest.json"
    write_manifest(path, cfg)
    assert json.loads(path.read_text())["config"]["seed"] == 7


def test_output_dir_env_override(tmp_path, monkeypatch):
    cfg = from_dict({"output_dir": "runs/x"})
    assert cfg.resolved_output_dir() == "runs/x"
    monkeypatch.setenv("BSPINN_OUTPUT_DIR", str(tmp_path))
    assert cfg.resolved_output_dir() == str(tmp_path)
