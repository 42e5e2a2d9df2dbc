"""Class-conditional synthetic data shaped like the CES study, plus the CSV importer.

Each user gets a baseline offset per feature and a class-relevance vector
(shared across users, or user-specific for a ``user_feature_saliency``
fraction of features);
labels follow a sticky 4-state Markov chain and each window's days are
drawn with AR(1) noise around ``baseline + separability * rank * relevance``
(all in units of the feature's canonical std), then clipped to valid ranges.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .core import (NUM_CLASSES, WINDOW_DAYS, Dataset, SampleWindow, SkipReport, ValidationError,
                   read_dataset)
from .schema import FeatureSchema, load_schema

log = logging.getLogger(__name__)

# class counts of the real study: Normal, Mild, Moderate, Severe
CES_CLASS_COUNTS = (15477, 6524, 1795, 982)
CES_PROPORTIONS = tuple(c / sum(CES_CLASS_COUNTS) for c in CES_CLASS_COUNTS)

_PHQ4_RANGES = ((0, 3), (4, 6), (7, 9), (10, 12))


@dataclass(frozen=True)
class GeneratorConfig:
    num_users: int = 30
    samples_per_user: tuple[int, int] = (61, 432)
    class_proportions: tuple[float, ...] = CES_PROPORTIONS
    separability: float = 1.0
    user_heterogeneity: float = 0.5
    user_feature_saliency: float = 0.0
    noise_std: float = 1.0
    seed: int = 0
    stickiness: float = 0.7
    ar_coef: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "samples_per_user", tuple(int(x) for x in self.samples_per_user))
        object.__setattr__(self, "class_proportions", tuple(float(p) for p in self.class_proportions))
        self.validate()

    def validate(self) -> None:
        lo, hi = self.samples_per_user
        problems = []
        if self.num_users < 1:
            problems.append("num_users must be >= 1")
        if lo < 1 or lo > hi:
            problems.append(f"samples_per_user must satisfy 1 <= min <= max, got {self.samples_per_user}")
        p = self.class_proportions
        if len(p) != NUM_CLASSES or any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-9:
            problems.append(f"class_proportions must be {NUM_CLASSES} non-negative values summing to 1")
        scales = (self.separability, self.user_heterogeneity, self.noise_std)
        if not all(np.isfinite(scales)) or self.separability < 0 or self.user_heterogeneity < 0:
            problems.append("separability and user_heterogeneity must be finite and >= 0")
        if not self.noise_std > 0:
            problems.append("noise_std must be > 0")
        if not 0.0 <= self.user_feature_saliency <= 1.0:
            problems.append("user_feature_saliency must lie in [0, 1]")
        if not 0.0 <= self.stickiness < 1.0 or not -1.0 < self.ar_coef < 1.0:
            problems.append("stickiness must lie in [0, 1) and ar_coef in (-1, 1)")
        if problems:
            raise ValidationError("; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["samples_per_user"] = list(d["samples_per_user"])
        d["class_proportions"] = list(d["class_proportions"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorConfig:
        return cls(**d)


BALANCED = (0.25, 0.25, 0.25, 0.25)

# Named regimes used by tests, demos and the experiment runner.
FIXTURES: dict[str, GeneratorConfig] = {
    "default": GeneratorConfig(),
    "separable": GeneratorConfig(num_users=30, samples_per_user=(60, 80), separability=2.0,
                                 user_heterogeneity=0.3),
    "null": GeneratorConfig(num_users=20, samples_per_user=(30, 40), class_proportions=BALANCED,
                            separability=0.0, user_heterogeneity=0.3),
    "imbalanced": GeneratorConfig(num_users=24, samples_per_user=(40, 60), separability=0.6,
                                  user_heterogeneity=0.3),
    "heterogeneity": GeneratorConfig(num_users=20, samples_per_user=(40, 50), class_proportions=BALANCED,
                                     separability=0.5, user_heterogeneity=1.5, user_feature_saliency=0.3),
    "homogeneous": GeneratorConfig(num_users=20, samples_per_user=(40, 50), class_proportions=BALANCED,
                                   separability=0.5, user_heterogeneity=1.5, user_feature_saliency=0.0),
    "persistence": GeneratorConfig(num_users=20, samples_per_user=(30, 40), class_proportions=BALANCED,
                                   separability=0.35, user_heterogeneity=0.1, noise_std=2.0),
}


def fixture(name: str, seed: int = 0, **overrides) -> GeneratorConfig:
    return replace(FIXTURES[name], seed=seed, **overrides)


def _target_counts(n: int, proportions) -> np.ndarray:
    """Largest-remainder apportionment of n samples."""
    raw = np.asarray(proportions) * n
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[: n - counts.sum()]] += 1
    return counts


def _markov_labels(rng: np.random.Generator, n: int, proportions, stickiness: float) -> np.ndarray:
    """Sticky chain whose stationary distribution equals ``proportions``."""
    p = np.asarray(proportions)
    trans = stickiness * np.eye(NUM_CLASSES) + (1 - stickiness) * p[None, :]
    labels = np.empty(n, dtype=int)
    labels[0] = rng.choice(NUM_CLASSES, p=p)
    for t in range(1, n):
        labels[t] = rng.choice(NUM_CLASSES, p=trans[labels[t - 1]])
    return labels


def _match_proportions(rng: np.random.Generator, labels: np.ndarray, user_of: np.ndarray,
                       proportions) -> np.ndarray:
    """Relabel samples until class counts hit their apportioned targets.

    Prefers samples on a run boundary next to the deficit class, which moves a
    boundary by one step instead of breaking a run.
    """
    labels = labels.copy()
    target = _target_counts(len(labels), proportions)
    same_prev = np.r_[False, user_of[1:] == user_of[:-1]]
    same_next = np.r_[user_of[:-1] == user_of[1:], False]
    while True:
        surplus = np.bincount(labels, minlength=NUM_CLASSES) - target
        if not surplus.any():
            return labels
        a, b = int(np.argmax(surplus)), int(np.argmin(surplus))
        prev = np.r_[-1, labels[:-1]]
        nxt = np.r_[labels[1:], -1]
        boundary = (labels == a) & ((same_prev & (prev == b)) | (same_next & (nxt == b)))
        cand = np.flatnonzero(boundary)
        if cand.size == 0:
            cand = np.flatnonzero(labels == a)
        labels[rng.choice(cand)] = b


def _global_directions(seed: int, d: int, saliency: float) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 2**31 - 1])
    directions = rng.choice([-1.0, 1.0], size=d) * rng.uniform(0.5, 1.0, size=d)
    n_user_specific = int(round(saliency * d))
    user_specific = np.zeros(d, dtype=bool)
    user_specific[rng.permutation(d)[:n_user_specific]] = True
    return directions, user_specific


def _user_windows(cfg: GeneratorConfig, schema: FeatureSchema, user_index: int,
                  labels: np.ndarray, directions: np.ndarray, user_specific: np.ndarray) -> np.ndarray:
    """Raw daily values for every window of one user, shape (n, 14, D)."""
    rng = np.random.default_rng([cfg.seed, user_index, 1])
    d = len(schema)
    relevance = directions.copy()
    relevance[user_specific] = rng.normal(0.0, 1.0, size=int(user_specific.sum()))
    # part of each user's baseline lies along their own severity direction, so a
    # user's ordinary week can look like another user's abnormal one
    baseline = cfg.user_heterogeneity * (rng.normal(0.0, 1.0, size=d) + rng.normal() * relevance)
    n = len(labels)
    centre = baseline[None, :] + cfg.separability * labels[:, None] * relevance[None, :]
    innov = rng.normal(0.0, cfg.noise_std, size=(n, WINDOW_DAYS, d))
    noise = np.empty_like(innov)
    noise[:, 0] = innov[:, 0]
    scale = np.sqrt(1.0 - cfg.ar_coef ** 2)
    for t in range(1, WINDOW_DAYS):
        noise[:, t] = cfg.ar_coef * noise[:, t - 1] + scale * innov[:, t]
    z = centre[:, None, :] + noise
    raw = schema.means() + schema.stds() * z
    lo, hi = schema.bounds()
    return np.clip(raw, lo, hi)


def generate(config: GeneratorConfig | None = None, schema: FeatureSchema | None = None) -> Dataset:
    """Build a synthetic :class:`Dataset`; a pure function of ``config``."""
    cfg = config or GeneratorConfig()
    cfg.validate()
    schema = schema or load_schema()
    lo, hi = cfg.samples_per_user

    sizes, chains = [], []
    for u in range(cfg.num_users):
        rng = np.random.default_rng([cfg.seed, u, 0])
        n = int(rng.integers(lo, hi + 1))
        sizes.append(n)
        chains.append(_markov_labels(rng, n, cfg.class_proportions, cfg.stickiness))
    user_of = np.repeat(np.arange(cfg.num_users), sizes)
    labels = _match_proportions(np.random.default_rng([cfg.seed, 2**31 - 2]),
                                np.concatenate(chains), user_of, cfg.class_proportions)

    directions, user_specific = _global_directions(cfg.seed, len(schema), cfg.user_feature_saliency)
    samples = []
    offset = 0
    width = max(3, len(str(cfg.num_users - 1)))
    for u, n in enumerate(sizes):
        lab = labels[offset:offset + n]
        offset += n
        vals = _user_windows(cfg, schema, u, lab, directions, user_specific)
        score_rng = np.random.default_rng([cfg.seed, u, 2])
        pid = f"u{u:0{width}d}"
        for i in range(n):
            lo_s, hi_s = _PHQ4_RANGES[lab[i]]
            score = int(score_rng.integers(lo_s, hi_s + 1))
            samples.append(SampleWindow(pid, i * WINDOW_DAYS, vals[i], score))
    return Dataset(tuple(samples), "synthetic", schema)


def import_ces_csv(path: str | Path, schema: FeatureSchema | None = None,
                   report: SkipReport | None = None) -> Dataset:
    """Load a dataset CSV (core long format).

    Incomplete windows are dropped and recorded in ``report`` when one is
    passed; schema mismatches raise :class:`~mhbench.core.DatasetImportError`.
    """
    dataset, skipped = read_dataset(path, schema=schema)
    if report is not None:
        report.skipped.update(skipped.skipped)
    if len(skipped):
        log.warning("%s: %d incomplete or invalid windows rejected", path, len(skipped))
    return dataset
