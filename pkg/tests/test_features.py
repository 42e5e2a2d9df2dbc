import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mhbench.features import (ALL_CONFIGS, Dimension, FeatureConfig, Granularity, Layout, RepresentationTensor,
                              fit_normalizer, represent, represent_window, sequential_flatten,
                              statistical_aggregate, to_5d, to_weekly)
from mhbench.schema import CATEGORIES, CategoryMap, CategoryMapError, load_category_map, load_schema

NAMES = load_schema().names
finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_category_map_is_total_and_nonempty():
    cmap = load_category_map()
    cmap.validate(NAMES)
    assert set(cmap.mapping.values()) == set(CATEGORIES)
    assert cmap.mapping["sleep_duration"] == "sleep"
    assert cmap.mapping["unlock_num"] == "phone_time"


def test_category_map_rejects_unmapped_feature():
    partial = {k: v for k, v in load_category_map().mapping.items() if k != "audio_voice"}
    with pytest.raises(CategoryMapError, match="audio_voice"):
        CategoryMap(partial).validate(NAMES)


def test_to_5d_constant_and_singleton():
    assert np.allclose(to_5d(np.full(35, 1.7)), 1.7)
    mapping = {n: "me_time" for n in NAMES}
    mapping[NAMES[0]], mapping[NAMES[1]], mapping[NAMES[2]], mapping[NAMES[3]] = \
        "sleep", "leisure", "phone_time", "social_time"
    x = np.arange(35.0)
    out = to_5d(x, CategoryMap(mapping))
    assert out[CATEGORIES.index("sleep")] == x[0]


def test_to_5d_matches_bruteforce_mean():
    rng = np.random.default_rng(1)
    x = rng.normal(size=35)
    cmap = load_category_map()
    out = to_5d(x, cmap)
    for j, cat in enumerate(CATEGORIES):
        members = [x[i] for i, n in enumerate(NAMES) if cmap.mapping[n] == cat]
        assert out[j] == pytest.approx(sum(members) / len(members), abs=1e-12)


def test_to_weekly_examples():
    assert np.allclose(to_weekly(np.full((7, 3), 2.0)), 2.0)
    assert to_weekly(np.arange(1.0, 8.0)[:, None]).item() == pytest.approx(4.0)
    assert to_weekly(np.zeros((14, 35))).shape == (2, 35)
    # partial trailing week kept as its own mean
    assert np.allclose(to_weekly(np.arange(1.0, 10.0)[:, None]).ravel(), [4.0, 8.5])
    with pytest.raises(ValueError):
        to_weekly(np.zeros((0, 3)))


def test_aggregate_and_flatten_examples():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(14, 35))
    assert statistical_aggregate(x).shape == (35,)
    assert np.allclose(statistical_aggregate(np.tile(x[0], (14, 1))), x[0])
    oracle = [sum(x[t, j] for t in range(14)) / 14 for j in range(35)]
    assert np.max(np.abs(statistical_aggregate(x) - oracle)) < 1e-12
    a = np.array([[1, 2, 3], [4, 5, 6]], dtype=float)
    assert sequential_flatten(a).tolist() == [1, 2, 3, 4, 5, 6]
    assert sequential_flatten(x[:7]).shape == (245,)
    assert np.array_equal(sequential_flatten(x).reshape(14, 35), x)


def test_normalizer_examples():
    rng = np.random.default_rng(3)
    x = rng.normal(5, 3, size=(50, 14, 35))
    x[..., 4] = 2.5
    norm = fit_normalizer(x)
    z = norm.apply(x).reshape(-1, 35)
    keep = [j for j in range(35) if j != 4]
    assert np.allclose(z[:, keep].mean(axis=0), 0, atol=1e-9)
    assert np.allclose(z[:, keep].std(axis=0), 1, atol=1e-9)
    assert np.all(z[:, 4] == 0)
    assert np.allclose(norm.invert(norm.apply(x)), x)


def test_normalizer_uses_train_statistics_only():
    rng = np.random.default_rng(4)
    train = rng.normal(0, 1, size=(40, 14, 35))
    test = rng.normal(3, 2, size=(10, 14, 35))
    norm = fit_normalizer(train)
    leaky = fit_normalizer(np.concatenate([train, test]))
    z = norm.apply(test)
    assert np.allclose(z, (test - train.reshape(-1, 35).mean(0)) / train.reshape(-1, 35).std(0))
    assert not np.allclose(z, leaky.apply(test))


@settings(max_examples=40, deadline=None)
@given(arrays(float, (14, 35), elements=finite))
def test_weekly_and_5d_commute(days):
    a = to_weekly(to_5d(days))
    b = to_5d(to_weekly(days))
    assert np.allclose(a, b, atol=1e-9)


@pytest.mark.parametrize("config", ALL_CONFIGS)
@pytest.mark.parametrize("layout", list(Layout))
def test_every_config_yields_valid_tensor(config, layout):
    rng = np.random.default_rng(5)
    raw = rng.normal(10, 2, size=(14, 35))
    cfg = FeatureConfig(config.dimension, config.granularity, layout)
    norm = fit_normalizer(rng.normal(10, 2, size=(30, 14, 35)))
    t = represent_window(raw, cfg, norm)
    steps = cfg.time_steps(14)
    expected = {Layout.SEQUENCE: (steps, cfg.dim), Layout.AGGREGATED: (cfg.dim,),
                Layout.FLATTENED: (steps * cfg.dim,)}[layout]
    assert t.values.shape == expected


def test_forecast_truncation_steps():
    assert FeatureConfig("35", "daily").time_steps(7) == 7
    assert FeatureConfig("5", "weekly").time_steps(7) == 1
    assert FeatureConfig("5", "weekly").time_steps(14) == 2
    assert FeatureConfig("5", "weekly").time_steps(10) == 2


def test_representation_tensor_rejects_bad_shapes():
    cfg = FeatureConfig(Dimension.D5, Granularity.DAILY, Layout.AGGREGATED)
    with pytest.raises(ValueError):
        RepresentationTensor(np.zeros(35), cfg)
    with pytest.raises(ValueError):
        RepresentationTensor(np.array([np.nan] * 5), cfg)


def test_config_round_trip():
    for cfg in ALL_CONFIGS:
        assert FeatureConfig.from_dict(cfg.to_dict()) == cfg


def test_aggregated_is_mean_of_daily_sequence():
    rng = np.random.default_rng(6)
    raw = rng.normal(size=(3, 10, 35))
    norm = fit_normalizer(rng.normal(size=(5, 14, 35)))
    agg = represent(raw, FeatureConfig("5", "weekly", "aggregated"), norm)
    seq = represent(raw, FeatureConfig("5", "daily", "sequence"), norm)
    assert np.allclose(agg, seq.mean(axis=1))
