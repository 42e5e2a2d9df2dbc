"""Metrics, the one-week forecasting protocol and the expanding-window curve."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .core import NUM_CLASSES, SampleWindow, SeverityLevel

UNPARSEABLE = -1
FORECAST_DAYS = 7
EARLY_DAYS = tuple(range(7, 15))

CLASS_NAMES = tuple(level.word for level in SeverityLevel)


@dataclass(frozen=True)
class EvalReport:
    """Per-class precision/recall/F1 plus accuracy and macro-F1.

    Classes with zero gold support are left out of ``macro_f1``; their
    support of 0 stays visible in ``support``.
    """

    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    support: dict[str, int]
    accuracy: float
    macro_f1: float
    n: int
    unparseable: int = 0
    confusion: list[list[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "support": self.support, "accuracy": self.accuracy, "macro_f1": self.macro_f1,
            "n": self.n, "unparseable": self.unparseable, "confusion": self.confusion,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(**d)

    def row(self) -> list[float]:
        cells = []
        for name in CLASS_NAMES:
            cells += [self.precision[name], self.recall[name], self.f1[name]]
        return cells + [self.accuracy, self.macro_f1]


TABLE_COLUMNS = [f"{c}-{m}" for c in CLASS_NAMES for m in ("Pre", "Rec", "F1")] + ["Acc", "Macro-F1"]


def format_table(rows: Sequence[tuple[str, EvalReport]], label_header: str = "Model") -> str:
    """Aligned text table: per-class Pre/Rec/F1, then Acc and Macro-F1."""
    width = max([len(label_header)] + [len(name) for name, _ in rows])
    col = max(len(c) for c in TABLE_COLUMNS)
    lines = [f"{label_header:<{width}}  " + "  ".join(f"{c:>{col}}" for c in TABLE_COLUMNS)]
    for name, rep in rows:
        lines.append(f"{name:<{width}}  " + "  ".join(f"{v:>{col}.4f}" for v in rep.row()))
    return "\n".join(lines)


def score(predictions, gold) -> EvalReport:
    """Score severity predictions; ``UNPARSEABLE`` (-1) counts as wrong for every class."""
    pred = np.asarray(predictions, dtype=int).ravel()
    gold = np.asarray(gold, dtype=int).ravel()
    if pred.shape != gold.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {gold.size} gold labels")
    if gold.size and (gold.min() < 0 or gold.max() >= NUM_CLASSES):
        raise ValueError("gold labels must be severity ranks 0..3")
    if pred.size and (pred.min() < UNPARSEABLE or pred.max() >= NUM_CLASSES):
        raise ValueError("predictions must be severity ranks 0..3 or UNPARSEABLE")
    # extra column collects unparseable outputs
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES + 1), dtype=int)
    np.add.at(cm, (gold, np.where(pred == UNPARSEABLE, NUM_CLASSES, pred)), 1)
    tp = np.diag(cm[:, :NUM_CLASSES]).astype(float)
    predicted = cm[:, :NUM_CLASSES].sum(axis=0).astype(float)
    support = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(predicted > 0, tp / predicted, 0.0)
        rec = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    present = support > 0
    macro = float(f1[present].mean()) if present.any() else 0.0
    acc = float(tp.sum() / gold.size) if gold.size else 0.0
    names = CLASS_NAMES
    return EvalReport(
        precision=dict(zip(names, map(float, prec))),
        recall=dict(zip(names, map(float, rec))),
        f1=dict(zip(names, map(float, f1))),
        support=dict(zip(names, map(int, support))),
        accuracy=acc,
        macro_f1=macro,
        n=int(gold.size),
        unparseable=int((pred == UNPARSEABLE).sum()),
        confusion=cm.tolist(),
    )


class Forecaster(Protocol):
    """Anything that maps the first ``n_days`` of each window to severity ranks."""

    def predict(self, samples: Sequence[SampleWindow], n_days: int) -> np.ndarray: ...


def observed_inputs(samples: Sequence[SampleWindow], n_days: int) -> np.ndarray:
    """Raw values of days 1..n_days for each window, shape (N, n_days, D)."""
    if not 1 <= n_days <= 14:
        raise ValueError(f"n_days must lie in 1..14, got {n_days}")
    return np.stack([s.values[:n_days] for s in samples])


def _validate(adapter) -> None:
    check = getattr(adapter, "validate", None)
    if check is not None:
        check()


def forecast_eval(adapter: Forecaster, test: Sequence[SampleWindow], n_days: int = FORECAST_DAYS) -> EvalReport:
    """Score on the first week only (T=7, horizon 7) against the window-end label."""
    _validate(adapter)
    if not 1 <= n_days <= 14:
        raise ValueError(f"n_days must lie in 1..14, got {n_days}")
    test = list(test)
    pred = adapter.predict(test, n_days)
    return score(pred, [int(s.label) for s in test])


@dataclass(frozen=True)
class EarlyCurve:
    reports: dict[int, EvalReport]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "accuracy", "macro_f1", *(f"f1_{c}" for c in CLASS_NAMES), "unparseable"])
        for t in sorted(self.reports):
            r = self.reports[t]
            w.writerow([t, f"{r.accuracy:.6f}", f"{r.macro_f1:.6f}",
                        *(f"{r.f1[c]:.6f}" for c in CLASS_NAMES), r.unparseable])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {str(t): r.to_dict() for t, r in self.reports.items()}

    @classmethod
    def from_dict(cls, d: dict) -> EarlyCurve:
        return cls({int(t): EvalReport.from_dict(r) for t, r in d.items()})


def early_curve(adapter: Forecaster, test: Sequence[SampleWindow],
                days: Sequence[int] = EARLY_DAYS) -> EarlyCurve:
    """Re-forecast the same window-end label while the observation grows a day at a time."""
    _validate(adapter)
    test = list(test)
    gold = [int(s.label) for s in test]
    return EarlyCurve({t: score(adapter.predict(test, t), gold) for t in days})
