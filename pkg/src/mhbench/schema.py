"""Canonical 35-feature daily schema and the 35 -> 5 category map.

Both live as editable JSON files under ``mhbench/data``; the loaders here
accept an alternative path so experiments can swap them out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

CATEGORIES = ("leisure", "me_time", "phone_time", "sleep", "social_time")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # duration | count | proportion | clock | distance
    unit: str
    display: str
    mean: float
    std: float
    min: float | None
    max: float | None

    @property
    def label(self) -> str:
        """Human-readable column header with its unit, e.g. ``sleep duration (minutes)``."""
        return f"{self.display} ({self.unit})"


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]
    schema_version: int = 1

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def means(self) -> np.ndarray:
        return np.array([f.mean for f in self.features], dtype=float)

    def stds(self) -> np.ndarray:
        return np.array([f.std for f in self.features], dtype=float)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([-np.inf if f.min is None else f.min for f in self.features])
        hi = np.array([np.inf if f.max is None else f.max for f in self.features])
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "features": [dict(vars(f)) for f in self.features],
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureSchema:
        return cls(
            features=tuple(FeatureSpec(**f) for f in d["features"]),
            schema_version=int(d.get("schema_version", 1)),
        )


def _read_json(path: str | Path | None, default_name: str) -> dict:
    if path is None:
        text = resources.files("mhbench.data").joinpath(default_name).read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


@lru_cache(maxsize=None)
def _default_schema() -> FeatureSchema:
    return FeatureSchema.from_dict(_read_json(None, "feature_schema.json"))


def load_schema(path: str | Path | None = None) -> FeatureSchema:
    if path is None:
        return _default_schema()
    return FeatureSchema.from_dict(_read_json(path, ""))


class CategoryMapError(ValueError):
    pass


@dataclass(frozen=True)
class CategoryMap:
    """Assignment of every feature to one of the five behavioural categories."""

    mapping: dict[str, str]

    def __post_init__(self):
        bad = {k: v for k, v in self.mapping.items() if v not in CATEGORIES}
        if bad:
            raise CategoryMapError(f"unknown categories: {bad}")

    def validate(self, feature_names) -> None:
        missing = [n for n in feature_names if n not in self.mapping]
        if missing:
            raise CategoryMapError(f"unmapped features: {missing}")
        used = {self.mapping[n] for n in feature_names}
        empty = [c for c in CATEGORIES if c not in used]
        if empty:
            raise CategoryMapError(f"empty categories: {empty}")

    def membership(self, feature_names) -> np.ndarray:
        """(35, 5) averaging matrix: column c holds 1/|c| on member rows."""
        self.validate(feature_names)
        m = np.zeros((len(feature_names), len(CATEGORIES)))
        for i, n in enumerate(feature_names):
            m[i, CATEGORIES.index(self.mapping[n])] = 1.0
        return m / m.sum(axis=0, keepdims=True)


def load_category_map(path: str | Path | None = None) -> CategoryMap:
    return CategoryMap(dict(_read_json(path, "category_map.json")))
