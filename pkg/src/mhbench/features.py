"""Feature representations: 35-D/5-D, daily/weekly, sequence/aggregated/flattened."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .schema import CATEGORIES, CategoryMap, FeatureSchema, load_category_map, load_schema


class Dimension(str, Enum):
    D35 = "35"
    D5 = "5"


class Granularity(str, Enum):
    DAILY = "daily"
    WEEKLY = "weekly"


class Layout(str, Enum):
    SEQUENCE = "sequence"
    AGGREGATED = "aggregated"
    FLATTENED = "flattened"


@dataclass(frozen=True)
class FeatureConfig:
    dimension: Dimension = Dimension.D35
    granularity: Granularity = Granularity.DAILY
    layout: Layout = Layout.SEQUENCE

    def __post_init__(self):
        d = self.dimension
        object.__setattr__(self, "dimension", Dimension(d if isinstance(d, str) else str(d)))
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        object.__setattr__(self, "layout", Layout(self.layout))

    @property
    def dim(self) -> int:
        return 35 if self.dimension is Dimension.D35 else len(CATEGORIES)

    def time_steps(self, n_days: int) -> int:
        if self.granularity is Granularity.DAILY:
            return n_days
        return -(-n_days // 7)

    @property
    def tag(self) -> str:
        return f"{self.dimension.value}d-{self.granularity.value}-{self.layout.value}"

    def to_dict(self) -> dict:
        return {"dimension": self.dimension.value, "granularity": self.granularity.value,
                "layout": self.layout.value}

    @classmethod
    def from_dict(cls, d: dict) -> FeatureConfig:
        return cls(**d)


# The four dimension x granularity combinations, as sequences.
ALL_CONFIGS = tuple(FeatureConfig(d, g) for d in Dimension for g in Granularity)


@dataclass(frozen=True)
class RepresentationTensor:
    values: np.ndarray
    config: FeatureConfig

    def __post_init__(self):
        v = self.values
        expected_ndim = 2 if self.config.layout is Layout.SEQUENCE else 1
        if v.ndim != expected_ndim:
            raise ValueError(f"{self.config.layout.value} tensor must be {expected_ndim}-D, got {v.shape}")
        if self.config.layout is not Layout.FLATTENED and v.shape[-1] != self.config.dim:
            raise ValueError(f"last axis {v.shape[-1]} != dim {self.config.dim}")
        if self.config.layout is Layout.FLATTENED and v.shape[0] % self.config.dim:
            raise ValueError(f"flattened length {v.shape[0]} not a multiple of {self.config.dim}")
        if not np.all(np.isfinite(v)):
            raise ValueError("representation contains NaN or Inf")


def to_5d(days: np.ndarray, category_map: CategoryMap | None = None,
          feature_names=None) -> np.ndarray:
    """Average z-normalised features into the five behavioural categories.

    Works on any array whose last axis holds the 35 features in schema order.
    """
    category_map = category_map or load_category_map()
    feature_names = feature_names or load_schema().names
    days = np.asarray(days, dtype=float)
    if days.shape[-1] != len(feature_names):
        raise ValueError(f"expected {len(feature_names)} features on last axis, got {days.shape[-1]}")
    return days @ category_map.membership(feature_names)


def to_weekly(days: np.ndarray) -> np.ndarray:
    """Average consecutive 7-day blocks along axis -2; a trailing partial week is kept."""
    days = np.asarray(days, dtype=float)
    n = days.shape[-2]
    if n == 0:
        raise ValueError("to_weekly needs at least one day")
    return np.stack([days[..., i:i + 7, :].mean(axis=-2) for i in range(0, n, 7)], axis=-2)


def statistical_aggregate(window: np.ndarray) -> np.ndarray:
    """Mean over the time axis (axis -2)."""
    window = np.asarray(window, dtype=float)
    if window.shape[-2] == 0:
        raise ValueError("cannot aggregate an empty sequence")
    return window.mean(axis=-2)


def sequential_flatten(window: np.ndarray) -> np.ndarray:
    """Concatenate time steps in chronological order (day-major, feature-minor)."""
    window = np.asarray(window, dtype=float)
    return window.reshape(*window.shape[:-2], window.shape[-2] * window.shape[-1])


@dataclass(frozen=True)
class Normalizer:
    """Per-feature z-score with statistics from the training split only."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        centered = x - self.mean
        safe = np.where(self.std > 0, self.std, 1.0)
        return centered / safe

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) * np.where(self.std > 0, self.std, 1.0) + self.mean


def fit_normalizer(train_values: np.ndarray) -> Normalizer:
    """Fit on an array of shape (..., D), pooling every leading axis."""
    flat = np.asarray(train_values, dtype=float).reshape(-1, np.shape(train_values)[-1])
    if flat.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on an empty split")
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 0.0)
    return Normalizer(mean, std)


def represent_sequence(values: np.ndarray, config: FeatureConfig, normalizer: Normalizer,
                       category_map: CategoryMap | None = None,
                       schema: FeatureSchema | None = None) -> np.ndarray:
    """Raw daily values (..., T, 35) -> normalised sequence (..., steps, dim)."""
    x = normalizer.apply(values)
    if config.dimension is Dimension.D5:
        x = to_5d(x, category_map, (schema or load_schema()).names)
    if config.granularity is Granularity.WEEKLY:
        x = to_weekly(x)
    return x


def represent(values: np.ndarray, config: FeatureConfig, normalizer: Normalizer,
              category_map: CategoryMap | None = None,
              schema: FeatureSchema | None = None) -> np.ndarray:
    """Full pipeline to the layout in ``config``; batched over leading axes."""
    if config.layout is Layout.AGGREGATED:
        # averaged over days directly so a partial trailing week is not over-weighted
        daily = FeatureConfig(config.dimension, Granularity.DAILY, Layout.SEQUENCE)
        return statistical_aggregate(represent_sequence(values, daily, normalizer, category_map, schema))
    seq = represent_sequence(values, config, normalizer, category_map, schema)
    if config.layout is Layout.FLATTENED:
        return sequential_flatten(seq)
    return seq


def represent_window(values: np.ndarray, config: FeatureConfig, normalizer: Normalizer,
                     category_map: CategoryMap | None = None) -> RepresentationTensor:
    return RepresentationTensor(represent(values, config, normalizer, category_map), config)
