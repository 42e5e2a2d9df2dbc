"""Domain types, PHQ-4 severity mapping, dataset container and the per-user split."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .schema import FeatureSchema, load_schema

log = logging.getLogger(__name__)

WINDOW_DAYS = 14
NUM_CLASSES = 4
SPLIT_RATIOS = (0.7, 0.1, 0.2)
CSV_SCHEMA_VERSION = 1


class ValidationError(ValueError):
    pass


class SplitError(ValueError):
    pass


class SeverityLevel(IntEnum):
    NORMAL = 0
    MILD = 1
    MODERATE = 2
    SEVERE = 3

    @property
    def word(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_word(cls, word: str) -> SeverityLevel:
        return cls[word.strip().upper()]


# inclusive PHQ-4 total brackets
_BRACKETS = ((0, 3, SeverityLevel.NORMAL), (4, 6, SeverityLevel.MILD),
             (7, 9, SeverityLevel.MODERATE), (10, 12, SeverityLevel.SEVERE))


def phq4_to_severity(score: int) -> SeverityLevel:
    """Map a PHQ-4 total (0-12) onto its severity bracket."""
    if isinstance(score, bool) or not float(score).is_integer():
        raise ValidationError(f"PHQ-4 score must be an integer, got {score!r}")
    score = int(score)
    for lo, hi, level in _BRACKETS:
        if lo <= score <= hi:
            return level
    raise ValidationError(f"PHQ-4 score out of range 0-12: {score}")


@dataclass(frozen=True)
class DailySensingRecord:
    participant_id: str
    day_index: int
    features: Mapping[str, float]


@dataclass(frozen=True, eq=False)
class SampleWindow:
    """Fourteen consecutive days of features plus the PHQ-4 score at window end.

    ``values`` has shape (14, n_features) in schema column order; per-day
    records are materialised on demand through :attr:`days`.
    """

    participant_id: str
    start_day: int
    values: np.ndarray
    phq4_score: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != WINDOW_DAYS:
            raise ValidationError(
                f"window {self.participant_id}@{self.start_day}: expected "
                f"({WINDOW_DAYS}, D) values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError(f"window {self.participant_id}@{self.start_day}: non-finite values")
        if self.start_day < 0:
            raise ValidationError(f"negative start_day {self.start_day}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "label", phq4_to_severity(self.phq4_score))

    label: SeverityLevel = field(init=False)

    @property
    def key(self) -> tuple[str, int]:
        return (self.participant_id, self.start_day)

    def days(self, schema: FeatureSchema | None = None) -> list[DailySensingRecord]:
        names = (schema or load_schema()).names
        return [
            DailySensingRecord(self.participant_id, self.start_day + t,
                               dict(zip(names, map(float, row))))
            for t, row in enumerate(self.values)
        ]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleWindow):
            return NotImplemented
        return (self.key == other.key and self.phq4_score == other.phq4_score
                and np.array_equal(self.values, other.values))

    def __hash__(self) -> int:
        return hash(self.key)


def check_record_ranges(values: np.ndarray, schema: FeatureSchema) -> list[str]:
    """Names of features whose values fall outside their valid range."""
    lo, hi = schema.bounds()
    bad = np.any((values < lo) | (values > hi), axis=tuple(range(values.ndim - 1)))
    return [n for n, b in zip(schema.names, bad) if b]


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: tuple[SampleWindow, ...]
    provenance: str = "synthetic"
    schema: FeatureSchema = field(default_factory=load_schema)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.provenance not in ("synthetic", "ces-import"):
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        d = len(self.schema)
        by_user: dict[str, list[SampleWindow]] = defaultdict(list)
        for s in self.samples:
            if s.values.shape[1] != d:
                raise ValidationError(f"window {s.key} has {s.values.shape[1]} features, schema has {d}")
            by_user[s.participant_id].append(s)
        for uid, ws in by_user.items():
            ws.sort(key=lambda s: s.start_day)
            starts = [s.start_day for s in ws]
            if len(set(starts)) != len(starts):
                raise ValidationError(f"user {uid} has duplicate start_day values")
        object.__setattr__(self, "_by_user", {u: tuple(ws) for u, ws in by_user.items()})

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.provenance == other.provenance and self.schema == other.schema
                and len(self) == len(other)
                and all(a == b for a, b in zip(self.samples, other.samples)))

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_user))

    def user_samples(self, participant_id: str) -> tuple[SampleWindow, ...]:
        """Windows of one user ordered by start_day."""
        return self._by_user.get(participant_id, ())

    def values(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, WINDOW_DAYS, len(self.schema)))
        return np.stack([s.values for s in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples], dtype=int)

    def participant_ids(self) -> list[str]:
        return [s.participant_id for s in self.samples]

    def subset(self, samples: Iterable[SampleWindow]) -> Dataset:
        return Dataset(tuple(samples), self.provenance, self.schema)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.schema.to_dict(), sort_keys=True).encode())
        for s in self.samples:
            h.update(f"{s.participant_id}|{s.start_day}|{s.phq4_score}|".encode())
            h.update(np.ascontiguousarray(s.values, dtype="<f8").tobytes())
        return h.hexdigest()


def class_counts(dataset: Dataset | Sequence[SampleWindow]) -> dict[SeverityLevel, int]:
    c = Counter(s.label for s in dataset)
    return {level: c.get(level, 0) for level in SeverityLevel}


# --------------------------------------------------------------------- split

BUCKETS = ("train", "val", "test")


def split_sizes(n: int, ratios: Sequence[float] = SPLIT_RATIOS) -> tuple[int, int, int]:
    """Per-user bucket sizes: floor for train and val, remainder to test.

    When the val floor is zero one sample is moved from train to val so that
    all three buckets stay nonempty.
    """
    if n < 3:
        raise SplitError(f"need at least 3 samples, got {n}")
    r_train, r_val = (Fraction(str(r)) for r in ratios[:2])
    n_train = math.floor(n * r_train)
    n_val = math.floor(n * r_val)
    if n_val == 0:
        n_val, n_train = 1, n_train - 1
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(f"cannot make nonempty buckets for n={n} with ratios {tuple(ratios)}")
    return n_train, n_val, n_test


@dataclass(frozen=True)
class SplitAssignment:
    buckets: Mapping[tuple[str, int], str]

    def bucket_of(self, sample: SampleWindow) -> str:
        return self.buckets[sample.key]

    def select(self, dataset: Dataset, bucket: str) -> Dataset:
        if bucket not in BUCKETS:
            raise ValueError(bucket)
        return dataset.subset(s for s in dataset if self.buckets[s.key] == bucket)

    def counts(self, participant_id: str) -> tuple[int, int, int]:
        c = Counter(b for (u, _), b in self.buckets.items() if u == participant_id)
        return tuple(c.get(b, 0) for b in BUCKETS)


def split_user_temporal(dataset: Dataset, ratios: Sequence[float] = SPLIT_RATIOS) -> SplitAssignment:
    """Split each user's windows chronologically into train/val/test."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must be three values summing to 1, got {ratios}")
    short = [u for u in dataset.users if len(dataset.user_samples(u)) < 3]
    if short:
        raise SplitError(f"users with fewer than 3 samples: {short}")
    out: dict[tuple[str, int], str] = {}
    for u in dataset.users:
        ws = dataset.user_samples(u)
        n_train, n_val, _ = split_sizes(len(ws), ratios)
        for i, s in enumerate(ws):
            out[s.key] = "train" if i < n_train else "val" if i < n_train + n_val else "test"
    return SplitAssignment(out)


def split_dataset(dataset: Dataset, ratios: Sequence[float] = SPLIT_RATIOS) -> tuple[Dataset, Dataset, Dataset]:
    a = split_user_temporal(dataset, ratios)
    return tuple(a.select(dataset, b) for b in BUCKETS)  # type: ignore[return-value]


# ------------------------------------------------------------------- CSV I/O

class DatasetImportError(ValueError):
    """Raised when a dataset file does not match the CSV schema."""


ID_COLUMNS = ("participant_id", "start_day", "day_offset")


def manifest_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def write_dataset(dataset: Dataset, path: str | Path) -> Path:
    """Write the long-format CSV (one row per window-day) and its JSON manifest."""
    path = Path(path)
    names = dataset.schema.names
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ID_COLUMNS, *names, "phq4_score"])
        for s in dataset.samples:
            for t, row in enumerate(s.values):
                w.writerow([s.participant_id, s.start_day, t, *map(repr, map(float, row)), s.phq4_score])
    manifest = {
        "schema_version": CSV_SCHEMA_VERSION,
        "provenance": dataset.provenance,
        "feature_schema": dataset.schema.to_dict(),
    }
    manifest_path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


@dataclass
class SkipReport:
    """Windows rejected during import, keyed by (participant_id, start_day)."""

    skipped: dict[tuple[str, int], str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.skipped)


def read_dataset(path: str | Path, schema: FeatureSchema | None = None,
                 provenance: str | None = None) -> tuple[Dataset, SkipReport]:
    """Parse a long-format dataset CSV.

    Incomplete windows are rejected into the returned :class:`SkipReport`
    rather than imputed. Structural problems raise :class:`DatasetImportError`
    naming the offending column or rows.
    """
    path = Path(path)
    mpath = manifest_path(path)
    manifest = json.loads(mpath.read_text()) if mpath.exists() else {}
    if schema is None:
        schema = (FeatureSchema.from_dict(manifest["feature_schema"])
                  if "feature_schema" in manifest else load_schema())
    if provenance is None:
        provenance = manifest.get("provenance", "ces-import")
    names = schema.names
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetImportError(f"{path}: empty file") from None
        expected = [*ID_COLUMNS, *names, "phq4_score"]
        missing = [c for c in expected if c not in header]
        if missing:
            raise DatasetImportError(f"{path}: missing columns {missing}")
        idx = {c: header.index(c) for c in expected}
        groups: dict[tuple[str, int], dict[int, list[float]]] = {}
        scores: dict[tuple[str, int], set[int]] = defaultdict(set)
        bad_rows: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                bad_rows.append(lineno)
                continue
            try:
                key = (row[idx["participant_id"]], int(row[idx["start_day"]]))
                off = int(row[idx["day_offset"]])
                vals = [float(row[idx[n]]) for n in names]
                scores[key].add(int(row[idx["phq4_score"]]))
            except ValueError:
                bad_rows.append(lineno)
                continue
            groups.setdefault(key, {})[off] = vals
        if bad_rows:
            raise DatasetImportError(f"{path}: malformed rows {bad_rows[:20]}"
                               + (" ..." if len(bad_rows) > 20 else ""))
    report = SkipReport()
    samples = []
    for key, days in groups.items():
        if sorted(days) != list(range(WINDOW_DAYS)):
            report.skipped[key] = f"incomplete window: {len(days)} of {WINDOW_DAYS} days"
        elif len(scores[key]) != 1:
            report.skipped[key] = f"inconsistent phq4_score {sorted(scores[key])}"
        else:
            try:
                samples.append(SampleWindow(key[0], key[1],
                                            np.array([days[t] for t in range(WINDOW_DAYS)]),
                                            scores[key].pop()))
            except ValidationError as exc:
                report.skipped[key] = str(exc)
    for key, why in report.skipped.items():
        log.warning("skipped window %s@%s: %s", key[0], key[1], why)
    return Dataset(tuple(samples), provenance, schema), report
