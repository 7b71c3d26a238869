import json

import numpy as np
import pytest

from conftest import small_config
from dualtier import experiment as ex
from dualtier.config import ConfigError, load_config, with_overrides
from dualtier.dataset import ScenarioSpec
from dualtier.synthetic import make_blobs


@pytest.fixture(scope="module")
def blobs():
    return make_blobs({"normal": 200, "a1": 100, "a2": 100, "a3": 100}, seed=11)


def test_prepare_fold_fits_scaling_on_filtered_train(blobs):
    sc = ScenarioSpec(frozenset({"a2", "a3"}), frozenset({"a1"}))
    idx = np.arange(blobs.n_rows)
    train, test = ex.prepare_fold(blobs, idx[::2], idx[1::2], sc)
    assert "a1" not in set(train.labels)
    assert train.values.min() == 0.0 and train.values.max() == 1.0
    assert test.n_rows == len(idx[1::2])


def test_plain_and_dumps():
    doc = {"a": np.float64(1.5), "b": (np.int64(2),), "c": frozenset({"y", "x"}), "d": np.arange(2)}
    assert ex.plain(doc) == {"a": 1.5, "b": [2], "c": ["x", "y"], "d": [0, 1]}
    assert json.loads(ex.dumps(doc))["c"] == ["x", "y"]


def test_run_fold_document(blobs):
    sc = ScenarioSpec(frozenset({"a2", "a3"}), frozenset({"a1"}))
    doc = ex.run_fold(blobs, sc, small_config(bucket_capacity=30), 2, 0, {"dataset": "blobs"})
    assert set(ex.SUMMARY_KEYS) == set(doc["summary"])
    assert doc["meta"]["dataset"] == "blobs" and doc["meta"]["fold"] == 0
    assert doc["tiers"]["tier1"]["accuracy"] > 90
    assert doc["promoted_classes"][:1] == ["a1"]
    assert doc["summary"]["final_attack_accuracy"] >= doc["summary"]["initial_attack_accuracy"]
    json.dumps(doc)  # JSON-ready without conversion


def test_cross_validate_aggregates(blobs):
    sc = ScenarioSpec(frozenset({"a1", "a2"}), frozenset({"a3"}))
    rep = ex.cross_validate(blobs, sc, small_config(bucket_capacity=30), k=2)
    d = rep.as_dict()
    assert len(d["per_fold"]) == 2
    vals = [f["tier1_accuracy"] for f in d["per_fold"]]
    assert d["mean"]["tier1_accuracy"] == pytest.approx(np.mean(vals))
    assert d["std"]["tier1_accuracy"] == pytest.approx(np.std(vals))


def test_load_config(tiny_project):
    cfg = load_config(tiny_project(method="dpc", seed=4))
    assert cfg.data_path == str(tiny_project.csv.resolve())
    assert cfg.pipeline.clustering == "dpc" and cfg.pipeline.dpc.dc is None
    assert cfg.pipeline.bucket_capacity == 15 and cfg.k_folds == 2
    assert cfg.pipeline.tier1.seed == 4 and cfg.pipeline.tier1.n_trees == 30
    o = with_overrides(cfg, seed=9, workers=3, out="x", detector="tier1=lof,tier2=lof")
    assert o.seed == 9 and o.pipeline.seed == 9 and o.pipeline.tier2.seed == 9
    assert o.pipeline.tier1.kind == "lof" and o.workers == 3 and o.out_dir == "x"


def test_config_errors(tmp_path, tiny_project):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment]\nk_folds = 2\n")
    with pytest.raises(ConfigError, match="data"):
        load_config(bad)
    bad.write_text("[data]\npath = x.csv\n[experiment]\nk_folds = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[data]\npath = x.csv\n[tier1]\nkind = ocsvm\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    cfg = load_config(tiny_project())
    with pytest.raises(ConfigError):
        with_overrides(cfg, detector="tier3=lof")
    with pytest.raises(ConfigError):
        with_overrides(cfg, detector="tier1=magic")


def test_explicit_scenarios(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text("[data]\npath = d.csv\n[experiment]\nscenarios = b; c+a\n")
    assert load_config(p).scenarios == (("b",), ("a", "c"))
