"""Command-line entry point: generate, run, early, analyze, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("mhbench")


def _read_json(path: str) -> dict:
    from .experiment import ConfigError
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _dataset_source(raw: dict, seed_override: int | None) -> dict:
    """Accept a bare dataset source, a full experiment config, or a generator config."""
    source = raw.get("dataset", raw)
    if not {"fixture", "generate", "import"} & set(source):
        source = {"generate": source}
    source = json.loads(json.dumps(source))
    if seed_override is not None:
        if "fixture" in source:
            source["seed"] = seed_override
        elif "generate" in source:
            source["generate"]["seed"] = seed_override
    return source


def cmd_generate(args) -> int:
    from .core import write_dataset
    from .experiment import load_dataset_source

    source = _dataset_source(_read_json(args.config), args.seed_override)
    if "import" in source:
        from .experiment import ConfigError
        raise ConfigError("generate needs a fixture or generator config, not an import path")
    try:
        ds = load_dataset_source(source)
    except (TypeError, ValueError) as exc:
        from .experiment import ConfigError
        raise ConfigError(str(exc)) from exc
    out = Path(args.out or "dataset.csv")
    if out.suffix != ".csv":
        out = out / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out)
    print(f"wrote {len(ds)} windows for {len(ds.users)} users to {out} (fingerprint {ds.fingerprint()[:12]})")
    return EXIT_OK


def _experiment(args, early_only: bool = False):
    from .experiment import ExperimentConfig

    raw = _read_json(args.config)
    if args.seed_override is not None:
        raw["seeds"] = [args.seed_override]
    if early_only:
        raw["protocols"] = ["early_curve"]
    cfg = ExperimentConfig.from_dict(raw)
    out = args.out or cfg.output_dir
    if not out:
        from .experiment import ConfigError
        raise ConfigError("no output directory: pass --out or set output_dir")
    return cfg, Path(out)


def _run(args, early_only: bool) -> int:
    from .experiment import early_table, load_records, report_table, run_experiment

    cfg, out = _experiment(args, early_only)
    summary = run_experiment(cfg, out, workers=args.workers)
    records = load_records(out)
    print(f"{summary.executed} executed, {summary.cached} cached, {len(summary.failed)} failed")
    if early_only:
        sys.stdout.write(early_table(records))
    else:
        print(report_table(records))
    return EXIT_PARTIAL if summary.failed else EXIT_OK


def cmd_run(args) -> int:
    return _run(args, early_only=False)


def cmd_early(args) -> int:
    return _run(args, early_only=True)


def cmd_analyze(args) -> int:
    from .analysis import class_similarity_matrix, importance_dispersion
    from .experiment import atomic_write_text, load_dataset_source

    source = _dataset_source(_read_json(args.config), args.seed_override)
    ds = load_dataset_source(source)
    out = Path(args.out or "analysis")
    sim = class_similarity_matrix(ds)
    disp = importance_dispersion(ds, seed=args.seed_override or 0, workers=args.workers)
    atomic_write_text(out / "similarity.csv", sim.to_csv())
    atomic_write_text(out / "importances.csv", disp.importances_csv())
    atomic_write_text(out / "dispersion.csv", disp.to_csv())
    meta = {"dataset_fingerprint": ds.fingerprint(), "similarity_normalization": sim.normalization,
            "undefined_similarity_entries": [list(e) for e in sim.undefined],
            "skipped_users": disp.skipped, "code_version": __version__}
    atomic_write_text(out / "analysis.json", json.dumps(meta, indent=1, sort_keys=True))
    print(sim.to_csv(), end="")
    print(f"importance dispersion: max range {disp.max_range():.3f} over {len(disp.importances)} users "
          f"({len(disp.skipped)} skipped); outputs in {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .experiment import atomic_write_text, early_table, load_records, report_table

    out = Path(args.out or (_experiment(args)[1] if args.config else "results"))
    records = load_records(out)
    if not records:
        print(f"no result records under {out}", file=sys.stderr)
        return EXIT_PARTIAL
    table = report_table(records)
    atomic_write_text(out / "report.txt", table + "\n")
    if any("early_curve" in r["results"] for r in records):
        atomic_write_text(out / "early_curve.csv", early_table(records))
    print(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mhbench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, helptext in (
        ("generate", cmd_generate, "write a synthetic dataset CSV"),
        ("run", cmd_run, "train and evaluate an experiment grid"),
        ("early", cmd_early, "expanding-window evaluation over T=7..14"),
        ("analyze", cmd_analyze, "class similarity and per-user feature importance"),
        ("report", cmd_report, "tabulate stored result records"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=name != "report", help="JSON config file")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed-override", type=int, default=None)
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    from .experiment import ConfigError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
