"""Dataset analyses: class similarity structure and per-user feature importance."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier

from .core import NUM_CLASSES, Dataset, SeverityLevel
from .features import fit_normalizer, sequential_flatten, statistical_aggregate

log = logging.getLogger(__name__)

CLASS_NAMES = tuple(level.word for level in SeverityLevel)


class DegenerateUserError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityMatrix:
    """Mean pairwise cosine similarity between and within severity classes.

    Windows are z-normalised per feature (over the whole dataset) before
    flattening, since raw units make cosines track the largest-magnitude
    features. ``undefined`` lists entries left as NaN.
    """

    values: np.ndarray
    counts: tuple[int, ...]
    undefined: tuple[tuple[int, int], ...] = ()
    normalization: str = "per-feature z-score over all windows"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", *CLASS_NAMES])
        for name, row in zip(CLASS_NAMES, self.values):
            w.writerow([name, *("" if np.isnan(v) else f"{v:.6f}" for v in row)])
        return buf.getvalue()


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)


def class_similarity_matrix(dataset: Dataset) -> SimilarityMatrix:
    """Entry (a, b): mean cosine over cross pairs (a != b) or distinct pairs (a == b)."""
    if not len(dataset):
        raise ValueError("empty dataset")
    vals = dataset.values()
    z = fit_normalizer(vals).apply(vals)
    vecs = _unit_rows(sequential_flatten(z))
    labels = dataset.labels()
    groups = [vecs[labels == c] for c in range(NUM_CLASSES)]
    sums = [g.sum(axis=0) for g in groups]
    out = np.full((NUM_CLASSES, NUM_CLASSES), np.nan)
    undefined = []
    for a in range(NUM_CLASSES):
        na = len(groups[a])
        for b in range(NUM_CLASSES):
            nb = len(groups[b])
            if a == b:
                if na < 2:
                    undefined.append((a, b))
                    continue
                # sum over ordered distinct pairs = |sum|^2 - sum of self-cosines
                self_sim = float((groups[a] ** 2).sum())
                out[a, a] = (float(sums[a] @ sums[a]) - self_sim) / (na * (na - 1))
            else:
                if na == 0 or nb == 0:
                    undefined.append((a, b))
                    continue
                out[a, b] = float(sums[a] @ sums[b]) / (na * nb)
    for a, b in undefined:
        log.warning("similarity entry (%s, %s) undefined: too few samples", CLASS_NAMES[a], CLASS_NAMES[b])
    return SimilarityMatrix(out, tuple(len(g) for g in groups), tuple(undefined))


def _importance_model(seed: int) -> GradientBoostingClassifier:
    return GradientBoostingClassifier(n_estimators=100, max_depth=3, learning_rate=0.1, random_state=seed)


def per_user_feature_importance(dataset: Dataset, user: str, seed: int = 0) -> dict[str, float]:
    """Gain (impurity-reduction) importances of a boosted ensemble on one user's windows.

    Inputs are each window's mean over its 14 days. Raises
    :class:`DegenerateUserError` when fewer than two classes are present or
    no split reduces impurity.
    """
    samples = dataset.user_samples(user)
    if not samples:
        raise DegenerateUserError(f"unknown user {user!r}")
    y = np.array([int(s.label) for s in samples])
    if len(np.unique(y)) < 2:
        raise DegenerateUserError(f"user {user} has a single severity class")
    x = statistical_aggregate(np.stack([s.values for s in samples]))
    model = _importance_model(seed).fit(x, y)
    imp = np.asarray(model.feature_importances_, dtype=float)
    if not imp.sum() > 0:
        raise DegenerateUserError(f"user {user}: no informative split found")
    imp = imp / imp.sum()
    return dict(zip(dataset.schema.names, map(float, imp)))


@dataclass
class ImportanceDispersion:
    """Per-feature (min, median, max) importance across analysed users."""

    importances: dict[str, dict[str, float]]
    skipped: dict[str, str] = field(default_factory=dict)

    def matrix(self) -> tuple[list[str], list[str], np.ndarray]:
        users = sorted(self.importances)
        feats = list(next(iter(self.importances.values()))) if users else []
        return users, feats, np.array([[self.importances[u][f] for f in feats] for u in users])

    def summary(self) -> dict[str, tuple[float, float, float]]:
        users, feats, m = self.matrix()
        if not users:
            return {}
        return {f: (float(m[:, j].min()), float(np.median(m[:, j])), float(m[:, j].max()))
                for j, f in enumerate(feats)}

    def max_range(self) -> float:
        s = self.summary()
        return max((hi - lo for lo, _, hi in s.values()), default=0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "min", "median", "max"])
        for f, (lo, med, hi) in sorted(self.summary().items(), key=lambda kv: -kv[1][1]):
            w.writerow([f, f"{lo:.6f}", f"{med:.6f}", f"{hi:.6f}"])
        return buf.getvalue()

    def importances_csv(self) -> str:
        users, feats, m = self.matrix()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["participant_id", *feats])
        for u, row in zip(users, m):
            w.writerow([u, *(f"{v:.6f}" for v in row)])
        return buf.getvalue()


def _one_user(args):
    dataset, user, seed = args
    try:
        return user, per_user_feature_importance(dataset, user, seed), None
    except DegenerateUserError as exc:
        return user, None, str(exc)


def importance_dispersion(dataset: Dataset, seed: int = 0, workers: int = 1) -> ImportanceDispersion:
    """Run the per-user importance analysis for every user; degenerate users are skipped."""
    jobs = [(dataset, u, seed) for u in dataset.users]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one_user, jobs))
    else:
        results = [_one_user(j) for j in jobs]
    out = ImportanceDispersion({})
    for user, imp, err in results:
        if imp is None:
            log.info("skipping user %s: %s", user, err)
            out.skipped[user] = err
        else:
            out.importances[user] = imp
    return out
