import logging

import numpy as np
import pytest

from mhbench import models_classical as mc
from mhbench import syngen
from mhbench.adapters import LayoutError, check_layout, fit_classical, load_forecaster, save_forecaster
from mhbench.checkpoint import read_header
from mhbench.core import split_dataset
from mhbench.evaluation import forecast_eval
from mhbench.features import FeatureConfig

AGG = FeatureConfig("35", "daily", "aggregated")
FLAT = FeatureConfig("5", "weekly", "flattened")


def toy(seed=0, n=80):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = (x[:, 0] > 0).astype(int) + 2 * (x[:, 1] > 0).astype(int)
    return x, y


@pytest.mark.parametrize("kind", mc.KINDS)
def test_contract_shapes_and_probabilities(kind):
    x, y = toy()
    m = mc.fit(mc.ClassicalSpec(kind, seed=1), x, y)
    p = m.predict_proba(x)
    assert p.shape == (len(x), 4)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert np.array_equal(m.predict(x), p.argmax(axis=1))
    again = mc.fit(mc.ClassicalSpec(kind, seed=1), x, y)
    assert np.array_equal(again.predict_proba(x), p)


def test_probabilities_cover_missing_classes():
    x, y = toy()
    keep = y < 3
    m = mc.fit(mc.ClassicalSpec("random_forest"), x[keep], y[keep])
    p = m.predict_proba(x)
    assert p.shape == (len(x), 4) and np.all(p[:, 3] == 0)


def test_decision_tree_shatters_separable_toy():
    x, y = toy()
    m = mc.fit(mc.ClassicalSpec("decision_tree"), x, y)
    assert (m.predict(x) == y).mean() == 1.0


def test_spec_validation():
    with pytest.raises(mc.ModelSpecError):
        mc.ClassicalSpec("knn")
    with pytest.raises(mc.ModelSpecError, match="n_trees"):
        mc.ClassicalSpec("random_forest", {"n_trees": 5})
    x, y = toy()
    with pytest.raises(ValueError):
        mc.fit(mc.ClassicalSpec("svm"), x[:, None, :], y)
    with pytest.raises(ValueError):
        mc.fit(mc.ClassicalSpec("svm"), x, y[:-1])


def test_onehot_block(caplog):
    index = mc.build_user_index(["b", "a", "c", "a"])
    out = mc.attach_user_onehot(np.zeros((3, 2)), ["a", "c", "a"], index)
    assert out.shape == (3, 2 + 3)
    assert out[0, 2:].tolist() == [1, 0, 0] and out[1, 2:].tolist() == [0, 0, 1]
    assert np.array_equal(out[0], out[2])
    with caplog.at_level(logging.WARNING):
        unseen = mc.attach_user_onehot(np.zeros((1, 2)), ["zz"], index)
    assert not unseen[0, 2:].any()
    assert "zz" in caplog.text


def test_onehot_mode_adds_num_users_columns():
    x, y = toy()
    ids = [f"u{i % 5}" for i in range(len(x))]
    m = mc.fit(mc.ClassicalSpec("logistic_regression", personalization="one_hot_id"), x, y, ids)
    assert m.estimator.n_features_in_ == x.shape[1] + 5
    with pytest.raises(ValueError):
        m.predict(x)


def test_inverse_frequency_weights():
    assert np.allclose(mc.inverse_frequency_weights([0] * 6 + [1] * 2 + [2] + [3]), [10 / 24, 10 / 8, 2.5, 2.5])
    w = mc.inverse_frequency_weights([0, 0, 1])
    assert w[2] == 0 and w[3] == 0


def test_weighting_raises_minority_recall():
    gains = []
    for seed in range(5):
        tr, va, te = split_dataset(syngen.generate(syngen.fixture("imbalanced", seed)))
        rec = []
        for weighting in ("none", "inverse_frequency"):
            spec = mc.ClassicalSpec("logistic_regression", {"C": 0.01}, class_weighting=weighting, seed=seed)
            rec.append(forecast_eval(fit_classical(spec, AGG, tr), list(te)).recall["Severe"])
        gains.append(rec)
    none, weighted = np.median(np.array(gains), axis=0)
    assert weighted > none


def test_layout_rules():
    check_layout("classical", "svm", AGG)
    check_layout("classical", "svm", FLAT)
    check_layout("neural", "mlp", AGG)
    check_layout("neural", "tcn", FeatureConfig())
    check_layout("llm", "zero_shot", FeatureConfig())
    for fam, kind, cfg in [("classical", "svm", FeatureConfig()), ("neural", "mlp", FLAT),
                           ("neural", "transformer_encoder", AGG), ("llm", "zero_shot", AGG)]:
        with pytest.raises(LayoutError):
            check_layout(fam, kind, cfg)


def test_flattened_forecast_pads_missing_days(small_split):
    tr, va, te = small_split
    f = fit_classical(mc.ClassicalSpec("logistic_regression"), FLAT, tr)
    assert f.features(list(te), 7).shape == (len(te), 2 * 5)
    assert f.features(list(te), 14).shape == (len(te), 2 * 5)
    assert forecast_eval(f, list(te)).n == len(te)


def test_tuning_selects_on_validation(small_split):
    tr, va, te = small_split
    f = fit_classical(mc.ClassicalSpec("decision_tree"), AGG, tr, va, tune=True)
    assert set(mc.GRIDS["decision_tree"]) <= set(f.model.estimator.get_params())


def test_checkpoint_round_trip(tmp_path, small_split):
    tr, va, te = small_split
    f = fit_classical(mc.ClassicalSpec("random_forest", {"n_estimators": 10}, personalization="one_hot_id"),
                      AGG, tr)
    path = save_forecaster(tmp_path / "rf.ckpt", f, tr.fingerprint())
    header = read_header(path)
    assert header["spec"]["kind"] == "random_forest"
    assert header["train_fingerprint"] == tr.fingerprint()
    assert np.array_equal(load_forecaster(path).predict(list(te)), f.predict(list(te)))
