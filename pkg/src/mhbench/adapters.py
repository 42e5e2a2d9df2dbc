"""Forecaster adapters binding a feature configuration to a trained model.

An adapter owns the train-fitted normalizer and turns raw windows into the
model's input layout, so evaluation code only deals with windows and days.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import models_classical as mc
from . import models_neural as mn
from .checkpoint import read_checkpoint, write_checkpoint
from .core import WINDOW_DAYS, Dataset, SampleWindow
from .evaluation import FORECAST_DAYS, observed_inputs
from .features import FeatureConfig, Layout, Normalizer, fit_normalizer, represent
from .schema import CategoryMap, load_category_map


class LayoutError(ValueError):
    pass


def check_layout(family: str, kind: str, config: FeatureConfig) -> None:
    """Aggregated/flattened inputs go to non-sequential models, sequences to the rest."""
    layout = config.layout
    if family == "classical":
        ok = layout in (Layout.AGGREGATED, Layout.FLATTENED)
    elif family == "neural" and kind == "mlp":
        ok = layout is Layout.AGGREGATED
    elif family in ("neural", "llm"):
        ok = layout is Layout.SEQUENCE
    else:
        raise LayoutError(f"unknown model family {family!r}")
    if not ok:
        raise LayoutError(f"{family}/{kind} cannot consume {layout.value} inputs")


def _inputs(values: np.ndarray, config: FeatureConfig, normalizer: Normalizer,
            category_map: CategoryMap | None) -> np.ndarray:
    if config.layout is Layout.FLATTENED and values.shape[1] < WINDOW_DAYS:
        # missing trailing days sit at the train mean, i.e. zero after z-scoring
        pad = np.broadcast_to(normalizer.mean, (values.shape[0], WINDOW_DAYS - values.shape[1], values.shape[2]))
        values = np.concatenate([values, pad], axis=1)
    return represent(values, config, normalizer, category_map)


@dataclass
class ClassicalForecaster:
    model: mc.ClassicalModel
    config: FeatureConfig
    normalizer: Normalizer
    category_map: CategoryMap | None = None
    family = "classical"

    def validate(self) -> None:
        check_layout(self.family, self.model.spec.kind, self.config)

    def features(self, samples: Sequence[SampleWindow], n_days: int) -> np.ndarray:
        return _inputs(observed_inputs(samples, n_days), self.config, self.normalizer, self.category_map)

    def predict_proba(self, samples: Sequence[SampleWindow], n_days: int = FORECAST_DAYS) -> np.ndarray:
        return self.model.predict_proba(self.features(samples, n_days), [s.participant_id for s in samples])

    def predict(self, samples: Sequence[SampleWindow], n_days: int = FORECAST_DAYS) -> np.ndarray:
        return np.argmax(self.predict_proba(samples, n_days), axis=1)


def fit_classical(spec: mc.ClassicalSpec, config: FeatureConfig, train: Dataset,
                  val: Dataset | None = None, tune: bool = False,
                  category_map: CategoryMap | None = None) -> ClassicalForecaster:
    """Fit on full two-week train windows; optionally grid-tune on ``val`` at the forecast horizon."""
    check_layout("classical", spec.kind, config)
    category_map = category_map or load_category_map()
    norm = fit_normalizer(train.values())
    x = represent(train.values(), config, norm, category_map)
    tr = (x, train.labels(), train.participant_ids())
    if tune:
        if val is None:
            raise ValueError("tuning needs a validation split")
        xv = _inputs(observed_inputs(list(val), FORECAST_DAYS), config, norm, category_map)
        model, _ = mc.tune(spec, tr, (xv, val.labels(), val.participant_ids()))
    else:
        model = mc.fit(spec, *tr)
    return ClassicalForecaster(model, config, norm, category_map)


@dataclass
class NeuralForecaster:
    net: "mn.nn.Module"
    spec: mn.NeuralSpec
    config: FeatureConfig
    normalizer: Normalizer
    user_index: dict[str, int]
    category_map: CategoryMap | None = None
    history: mn.History | None = None
    family = "neural"

    def validate(self) -> None:
        check_layout(self.family, self.spec.kind, self.config)

    def batch(self, samples: Sequence[SampleWindow], n_days: int) -> mn.Batchable:
        return make_batch(samples, n_days, self.config, self.normalizer, self.user_index, self.category_map)

    def predict_proba(self, samples: Sequence[SampleWindow], n_days: int = FORECAST_DAYS) -> np.ndarray:
        logits = mn.predict_logits(self.net, self.batch(samples, n_days))
        return mn.torch.softmax(logits, dim=1).numpy()

    def predict(self, samples: Sequence[SampleWindow], n_days: int = FORECAST_DAYS) -> np.ndarray:
        return mn.predict_logits(self.net, self.batch(samples, n_days)).argmax(1).numpy()


def make_batch(samples: Sequence[SampleWindow], n_days: int, config: FeatureConfig, normalizer: Normalizer,
               user_index: dict[str, int], category_map: CategoryMap | None = None) -> mn.Batchable:
    x = _inputs(observed_inputs(samples, n_days), config, normalizer, category_map)
    if x.ndim == 2:  # aggregated vector as a single step
        x = x[:, None, :]
    rows = [user_index.get(s.participant_id, -1) for s in samples]
    return mn.Batchable.from_arrays(x, [int(s.label) for s in samples], rows)


def fit_neural(spec: mn.NeuralSpec, config: FeatureConfig, train: Dataset, val: Dataset,
               val_days: int = FORECAST_DAYS, category_map: CategoryMap | None = None) -> NeuralForecaster:
    """Train on full two-week windows; early-stop on validation windows cut to ``val_days``."""
    check_layout("neural", spec.kind, config)
    category_map = category_map or load_category_map()
    norm = fit_normalizer(train.values())
    user_index = mc.build_user_index(train.participant_ids())
    tr = make_batch(list(train), WINDOW_DAYS, config, norm, user_index, category_map)
    va = make_batch(list(val), val_days, config, norm, user_index, category_map)
    net = mn.build(spec, tr.x.shape[-1], len(user_index))
    net, hist = mn.train(net, tr, va, spec)
    return NeuralForecaster(net, spec, config, norm, user_index, category_map, hist)


# --------------------------------------------------------------- persistence

def save_forecaster(path: str | Path, forecaster, train_fingerprint: str) -> Path:
    """Checkpoint with a JSON header (spec, feature config, train-split fingerprint)."""
    header = {"family": forecaster.family, "config": forecaster.config.to_dict(),
              "train_fingerprint": train_fingerprint, "code_version": __version__}
    if isinstance(forecaster, ClassicalForecaster):
        header["spec"] = forecaster.model.spec.to_dict()
        payload = pickle.dumps(forecaster)
    else:
        header.update(spec=forecaster.spec.to_dict(), user_index=forecaster.user_index,
                      normalizer={"mean": forecaster.normalizer.mean.tolist(),
                                  "std": forecaster.normalizer.std.tolist()},
                      input_dim=forecaster.net.inp.in_features - forecaster.spec.user_dim,
                      category_map=forecaster.category_map.mapping if forecaster.category_map else None)
        payload = mn.state_bytes(forecaster.net)
    return write_checkpoint(path, header, payload)


def load_forecaster(path: str | Path):
    header, payload = read_checkpoint(path)
    if header["family"] == "classical":
        return pickle.loads(payload)
    spec = mn.NeuralSpec.from_dict(header["spec"])
    net = mn.build(spec, header["input_dim"], len(header["user_index"]))
    mn.load_state_bytes(net, payload).eval()
    norm = Normalizer(np.array(header["normalizer"]["mean"]), np.array(header["normalizer"]["std"]))
    cmap = CategoryMap(header["category_map"]) if header["category_map"] else None
    return NeuralForecaster(net, spec, FeatureConfig.from_dict(header["config"]), norm,
                            header["user_index"], cmap)
