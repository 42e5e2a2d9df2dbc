"""Config-driven experiment grids with a content-hash result cache.

A run expands an :class:`ExperimentConfig` into cells (model x feature
config x personalization x loss x seed). Each finished cell is written
atomically to ``records/<hash>.json`` and listed in ``manifest.json``, so a
re-run only executes cells whose inputs changed or that previously failed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .core import Dataset, split_dataset
from .evaluation import EarlyCurve, EvalReport, early_curve, forecast_eval, format_table
from .features import FeatureConfig

log = logging.getLogger(__name__)

FAMILIES = ("classical", "neural", "llm")
PROTOCOLS = ("forecast", "early_curve")
PERSONALIZATION = ("agnostic", "user_aware")


class ConfigError(ValueError):
    pass


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:20]


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ------------------------------------------------------------------ config

@dataclass
class ExperimentConfig:
    dataset: dict
    features: list[dict]
    models: list[dict]
    seeds: list[int]
    personalization: list[str] = field(default_factory=lambda: ["agnostic"])
    losses: list[str] = field(default_factory=lambda: ["cross_entropy"])
    protocols: list[str] = field(default_factory=lambda: ["forecast"])
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        missing = {"dataset", "features", "models", "seeds"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys {sorted(missing)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def validate(self) -> None:
        from .adapters import LayoutError, check_layout

        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.models or not self.features:
            raise ConfigError("models and features must be nonempty")
        if set(self.dataset) - {"fixture", "generate", "import", "seed", "overrides"} or \
                len({"fixture", "generate", "import"} & set(self.dataset)) != 1:
            raise ConfigError("dataset needs exactly one of fixture / generate / import")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ConfigError(f"unknown protocol {p!r}; expected {PROTOCOLS}")
        for p in self.personalization:
            if p not in PERSONALIZATION:
                raise ConfigError(f"unknown personalization {p!r}; expected {PERSONALIZATION}")
        try:
            feats = [FeatureConfig.from_dict(f) for f in self.features]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad feature config: {exc}") from exc
        for m in self.models:
            fam = m.get("family")
            if fam not in FAMILIES:
                raise ConfigError(f"model family must be one of {FAMILIES}, got {fam!r}")
            kind = m.get("strategy") if fam == "llm" else m.get("kind")
            if not kind:
                raise ConfigError(f"model entry {m} lacks a kind/strategy")
            for f in feats:
                try:
                    check_layout(fam, kind, f)
                except LayoutError as exc:
                    raise ConfigError(str(exc)) from exc
        for cell in self.cells():
            try:
                _spec_for(cell)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid model spec {cell['model']}: {exc}") from exc

    def cells(self) -> list[dict]:
        out = []
        for m in self.models:
            losses = self.losses if m["family"] == "neural" and "loss" not in m else [None]
            for f in self.features:
                for pers in self.personalization:
                    for loss in losses:
                        for seed in self.seeds:
                            out.append({"model": m, "features": f, "personalization": pers,
                                        "loss": loss, "seed": seed, "protocols": sorted(self.protocols)})
        return out


def load_dataset_source(source: dict) -> Dataset:
    from . import syngen
    from .core import read_dataset

    if "import" in source:
        ds, _ = read_dataset(source["import"])
        return ds
    if "fixture" in source:
        cfg = syngen.fixture(source["fixture"], seed=source.get("seed", 0), **source.get("overrides", {}))
    else:
        cfg = syngen.GeneratorConfig.from_dict(source["generate"])
    return syngen.generate(cfg)


# -------------------------------------------------------------------- cells

def cell_label(cell: dict) -> tuple[str, str]:
    m = cell["model"]
    name = m.get("name") or (f"llm:{m['strategy']}" if m["family"] == "llm" else m["kind"])
    if cell["personalization"] == "user_aware":
        name += "+user"
    if cell["loss"]:
        name += f"+{cell['loss']}"
    return name, FeatureConfig.from_dict(cell["features"]).tag


def _spec_for(cell: dict):
    from . import models_classical as mc
    from . import models_neural as mn

    m = {k: v for k, v in cell["model"].items() if k not in ("family", "name", "tune")}
    aware = cell["personalization"] == "user_aware"
    fam = cell["model"]["family"]
    if fam == "classical":
        return mc.ClassicalSpec(personalization="one_hot_id" if aware else "agnostic", seed=cell["seed"], **m)
    if fam == "neural":
        if cell["loss"]:
            m["loss"] = cell["loss"]
        return mn.NeuralSpec(personalization="user_embedding" if aware else "agnostic", seed=cell["seed"], **m)
    from .llm import STRATEGIES
    if m.get("strategy") not in STRATEGIES:
        raise ValueError(f"unknown strategy {m.get('strategy')!r}")
    return m


def execute_cell(cell: dict, dataset: Dataset, checkpoint: Path | None = None) -> dict:
    """Train (or prepare prompts), evaluate, and return the record body."""
    from .adapters import fit_classical, fit_neural, load_forecaster, save_forecaster
    from .checkpoint import read_header

    train, val, test = split_dataset(dataset)
    config = FeatureConfig.from_dict(cell["features"])
    fam = cell["model"]["family"]
    spec = _spec_for(cell)
    reuse = (fam != "llm" and checkpoint is not None and checkpoint.is_file()
             and read_header(checkpoint).get("train_fingerprint") == train.fingerprint())
    if reuse:
        # a cell rerun only for a missing protocol keeps its trained model
        forecaster = load_forecaster(checkpoint)
    elif fam == "classical":
        forecaster = fit_classical(spec, config, train, val, tune=bool(cell["model"].get("tune")))
    elif fam == "neural":
        forecaster = fit_neural(spec, config, train, val)
    else:
        from .llm import fit_llm, make_client
        client = make_client(spec.get("client", "mock"), spec.get("client_config"), spec.get("transcript"))
        forecaster = fit_llm(client, spec["strategy"], config, train, k=spec.get("k", 3),
                             participant_header=cell["personalization"] == "user_aware",
                             workers=spec.get("workers", 1))
    out: dict[str, Any] = {}
    if "forecast" in cell["protocols"]:
        out["forecast"] = forecast_eval(forecaster, list(test)).to_dict()
    if "early_curve" in cell["protocols"]:
        out["early_curve"] = early_curve(forecaster, list(test)).to_dict()
    if fam == "llm":
        out["unparseable_responses"] = list(forecaster.unparseable)
    elif checkpoint is not None and not reuse:
        checkpoint.parent.mkdir(parents=True, exist_ok=True)
        save_forecaster(checkpoint, forecaster, train.fingerprint())
        out["checkpoint"] = checkpoint.name
    return out


_WORKER_DATASET: Dataset | None = None


def _init_worker(dataset: Dataset) -> None:
    global _WORKER_DATASET
    _WORKER_DATASET = dataset


def _run_one(job: tuple[str, dict, str]) -> tuple[str, dict | None, str | None, float]:
    key, cell, artifact_dir = job
    start = time.perf_counter()
    try:
        body = execute_cell(cell, _WORKER_DATASET, Path(artifact_dir) / f"{key}.ckpt")
        return key, body, None, time.perf_counter() - start
    except Exception:  # noqa: BLE001 - a failed cell must not stop the grid
        return key, None, traceback.format_exc(), time.perf_counter() - start


@dataclass
class RunSummary:
    executed: int = 0
    cached: int = 0
    failed: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.executed + self.cached + len(self.failed)


def run_experiment(config: ExperimentConfig, out_dir: str | Path, workers: int = 1,
                   dataset: Dataset | None = None) -> RunSummary:
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    dataset = dataset if dataset is not None else load_dataset_source(config.dataset)
    fingerprint = dataset.fingerprint()
    config_hash = content_hash(config.to_dict())
    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}

    summary = RunSummary()
    jobs, previous = [], {}
    for cell in config.cells():
        # protocols are not part of the key: a cached cell only runs the protocols it lacks
        identity = {k: v for k, v in cell.items() if k != "protocols"}
        key = content_hash({"cell": identity, "dataset": fingerprint, "code_version": __version__})
        record_path = out / "records" / manifest.get(key, "")
        if key in manifest and record_path.is_file():
            prev = json.loads(record_path.read_text())
            missing = sorted(set(cell["protocols"]) - set(prev["results"]))
            if not missing:
                summary.cached += 1
                continue
            previous[key] = prev
            cell = {**cell, "protocols": missing}
        jobs.append((key, cell, str(out / "artifacts")))
    cells = {key: cell for key, cell, _ in jobs}
    log.info("%d cells to run, %d cached", len(jobs), summary.cached)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(dataset,)) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        _init_worker(dataset)
        results = map(_run_one, jobs)

    for key, body, err, elapsed in results:
        cell = cells[key]
        model, feats = cell_label(cell)
        if err is not None:
            log.error("cell %s (%s, %s, seed %s) failed:\n%s", key, model, feats, cell["seed"], err)
            atomic_write_text(out / "failures" / f"{key}.json",
                              json.dumps({"cell": cell, "error": err}, indent=1))
            summary.failed.append(key)
            continue
        record = previous.get(key) or {
            "cell_hash": key, "cell": {k: v for k, v in cell.items() if k != "protocols"},
            "model": model, "features": feats, "dataset_fingerprint": fingerprint,
            "seed": cell["seed"], "code_version": __version__, "results": {}}
        record["config_hash"] = config_hash
        record["elapsed_s"] = round(record.get("elapsed_s", 0.0) + elapsed, 3)
        record["results"].update(body)
        name = f"{key}.json"
        atomic_write_text(out / "records" / name, json.dumps(record, indent=1, sort_keys=True))
        manifest[key] = name
        atomic_write_text(manifest_path, json.dumps(manifest, indent=1, sort_keys=True))
        (out / "failures" / f"{key}.json").unlink(missing_ok=True)
        summary.executed += 1
    return summary


# ------------------------------------------------------------------ reports

def load_records(out_dir: str | Path) -> list[dict]:
    out = Path(out_dir)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        return []
    manifest = json.loads(manifest_path.read_text())
    return [json.loads((out / "records" / name).read_text()) for name in sorted(manifest.values())
            if (out / "records" / name).exists()]


def mean_report(reports: list[EvalReport]) -> EvalReport:
    """Seed-averaged metrics (supports and confusion summed)."""
    k = len(reports)
    avg = lambda attr: {c: sum(getattr(r, attr)[c] for r in reports) / k for c in reports[0].precision}
    return EvalReport(avg("precision"), avg("recall"), avg("f1"),
                      {c: sum(r.support[c] for r in reports) for c in reports[0].support},
                      sum(r.accuracy for r in reports) / k, sum(r.macro_f1 for r in reports) / k,
                      sum(r.n for r in reports), sum(r.unparseable for r in reports))


def report_table(records: list[dict]) -> str:
    """One row per (model, feature config), metrics averaged over seeds."""
    groups: dict[tuple[str, str], list[EvalReport]] = {}
    for rec in records:
        if "forecast" in rec["results"]:
            groups.setdefault((rec["model"], rec["features"]), []).append(
                EvalReport.from_dict(rec["results"]["forecast"]))
    rows = [(f"{m} [{f}]", mean_report(reps)) for (m, f), reps in sorted(groups.items())]
    return format_table(rows) if rows else "(no forecast results)"


def early_table(records: list[dict]) -> str:
    """CSV of seed-averaged accuracy and macro-F1 per observed-day count."""
    lines = ["model,features,T,accuracy,macro_f1,n_seeds"]
    groups: dict[tuple[str, str], list[EarlyCurve]] = {}
    for rec in records:
        if "early_curve" in rec["results"]:
            groups.setdefault((rec["model"], rec["features"]), []).append(
                EarlyCurve.from_dict(rec["results"]["early_curve"]))
    for (m, f), curves in sorted(groups.items()):
        for t in sorted(curves[0].reports):
            acc = sum(c.reports[t].accuracy for c in curves) / len(curves)
            mf1 = sum(c.reports[t].macro_f1 for c in curves) / len(curves)
            lines.append(f"{m},{f},{t},{acc:.6f},{mf1:.6f},{len(curves)}")
    return "\n".join(lines) + "\n"
