"""Render sensing windows as markdown tables an LLM can read, and parse them back."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..features import Dimension, FeatureConfig, Granularity, Normalizer, represent_sequence, to_weekly
from ..schema import CATEGORIES, CategoryMap, FeatureSchema, load_schema

PRECISION = 2


class RenameError(KeyError):
    pass


def default_rename(schema: FeatureSchema | None = None) -> dict[str, str]:
    """Feature and category names -> human-readable headers with units."""
    schema = schema or load_schema()
    names = {f.name: f.label for f in schema.features}
    names.update({c: f"{c.replace('_', ' ')} (z-score)" for c in CATEGORIES})
    return names


def column_names(config: FeatureConfig, schema: FeatureSchema | None = None) -> tuple[str, ...]:
    if config.dimension is Dimension.D5:
        return CATEGORIES
    return (schema or load_schema()).names


def table_values(values: np.ndarray, config: FeatureConfig, normalizer: Normalizer | None = None,
                 category_map: CategoryMap | None = None) -> np.ndarray:
    """Numbers shown in the table: raw units for 35-D, category z-scores for 5-D."""
    values = np.asarray(values, dtype=float)
    if config.dimension is Dimension.D5:
        if normalizer is None:
            raise ValueError("5-D serialisation needs the train-fitted normalizer")
        return represent_sequence(values, FeatureConfig(config.dimension, config.granularity),
                                  normalizer, category_map)
    return to_weekly(values) if config.granularity is Granularity.WEEKLY else values


def _fmt(v: float) -> str:
    s = f"{v:.{PRECISION}f}"
    return "0.00" if s == "-0.00" else s


def render_table(rows: np.ndarray, headers: list[str], period: str) -> str:
    lines = ["| " + " | ".join([period, *headers]) + " |",
             "|" + "---|" * (len(headers) + 1)]
    for i, row in enumerate(rows, start=1):
        lines.append("| " + " | ".join([f"{period} {i}", *map(_fmt, row)]) + " |")
    return "\n".join(lines)


def serialize_window(values: np.ndarray, config: FeatureConfig, rename: Mapping[str, str] | None = None,
                     normalizer: Normalizer | None = None, category_map: CategoryMap | None = None,
                     schema: FeatureSchema | None = None) -> str:
    """Markdown table: one row per day (or week) in order, one column per feature."""
    rename = default_rename(schema) if rename is None else rename
    cols = column_names(config, schema)
    missing = [c for c in cols if c not in rename]
    if missing:
        raise RenameError(f"no display name for {missing}")
    rows = table_values(values, config, normalizer, category_map)
    period = "Day" if config.granularity is Granularity.DAILY else "Week"
    return render_table(rows, [rename[c] for c in cols], period)


def row_strings(table: str) -> list[str]:
    """The value cells of each data row, joined; used as content fingerprints."""
    out = []
    for line in table.strip().splitlines()[2:]:
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        out.append(" | ".join(cells[1:]))
    return out


def parse_table(table: str) -> tuple[list[str], list[str], np.ndarray]:
    """Inverse of :func:`render_table`: (period labels, headers, values)."""
    lines = [ln for ln in table.strip().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValueError("not a markdown table")
    split = lambda ln: [c.strip() for c in ln.strip().strip("|").split("|")]
    headers = split(lines[0])[1:]
    periods, rows = [], []
    for ln in lines[2:]:
        cells = split(ln)
        periods.append(cells[0])
        rows.append([float(c) for c in cells[1:]])
    return periods, headers, np.array(rows, dtype=float).reshape(len(rows), len(headers))
