"""``dualtier`` command line: prep, run, report.

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.
Failures print one ``dualtier: error code=N kind=K: message`` line to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import tables
from .config import ConfigError, ExperimentConfig, load_config, with_overrides
from .dataset import (
    DataError,
    FeatureMatrix,
    ScenarioSpec,
    apply_encoding,
    atomic_write,
    enumerate_scenarios,
    fit_label_encoding,
    fit_minmax,
    load_csv,
    read_cache,
    write_cache,
)
from .experiment import CvReport, dumps, run_fold
from .envelope import EnvelopeError

log = logging.getLogger("dualtier")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def _setup_logging():
    level = os.environ.get("DUALTIER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def prepare_table(csv_path, label_column, drop=(), strict=False):
    table = load_csv(csv_path, label_column, drop)
    enc = fit_label_encoding(table)
    matrix = apply_encoding(table, enc, strict=strict)
    return table, enc, matrix


def load_dataset(cfg: ExperimentConfig) -> FeatureMatrix:
    path = Path(cfg.data_path)
    if path.suffix.lower() == ".csv":
        return prepare_table(path, cfg.label_column, cfg.drop_columns, cfg.strict_encoding)[2]
    return read_cache(path)[0]


def scenarios_for(cfg: ExperimentConfig, data: FeatureMatrix, normal_label: str) -> list[ScenarioSpec]:
    attacks = sorted(c for c in data.class_names if c != normal_label)
    if cfg.scenarios:
        out = []
        for unknown in cfg.scenarios:
            missing = set(unknown) - set(attacks)
            if missing:
                raise ConfigError(f"scenario names unknown attack classes {sorted(missing)}")
            out.append(ScenarioSpec(frozenset(attacks) - set(unknown), frozenset(unknown)))
        return out
    out = []
    for u in cfg.unknown_counts:
        try:
            out.extend(enumerate_scenarios(attacks, u))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return out


def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=+-]", "_", text)


# -- subcommands ------------------------------------------------------------


def cmd_prep(args) -> int:
    drop = tuple(d for d in (args.drop or "").split(",") if d)
    table, enc, matrix = prepare_table(args.csv, args.label, drop, args.strict)
    meta = {
        "source": Path(args.csv).name,
        "label_column": args.label,
        "dropped": list(drop),
        "kinds": {c: table.kinds[c] for c in table.feature_columns},
        "encoding": enc.to_dict(),
        # whole-table range for reference; runs refit on each training split
        "normalization_reference": fit_minmax(matrix).to_dict(),
        "class_histogram": matrix.class_histogram(),
        "n_rows": matrix.n_rows,
        "n_cols": matrix.n_cols,
    }
    out = Path(args.out) if args.out else Path(args.csv).with_suffix(".dtid")
    write_cache(out, matrix, meta)
    print(f"wrote {out} rows={matrix.n_rows} cols={matrix.n_cols}")
    for name, count in meta["class_histogram"].items():
        print(f"  {name}\t{count}")
    return EXIT_OK


def _fold_task(payload):
    data, scenario, pipe, k, fold, meta = payload
    return scenario.scenario_id, fold, run_fold(data, scenario, pipe, k, fold, meta)


def cmd_run(args) -> int:
    cfg = with_overrides(load_config(args.config), args.seed, args.workers, args.out, args.detector)
    data = load_dataset(cfg)
    if data.labels is None:
        raise DataError("dataset has no labels")
    pipe = cfg.pipeline
    scenarios = scenarios_for(cfg, data, pipe.normal_label)
    if args.scenario:
        wanted = set(s.strip() for s in args.scenario.split(","))
        scenarios = [s for s in scenarios if s.scenario_id in wanted]
        if not scenarios:
            raise ConfigError(f"no scenario matches {args.scenario!r}")
    out = Path(cfg.out_dir)
    meta = {"dataset": Path(cfg.data_path).name, "seed": cfg.seed}
    tasks = [(data, s, pipe, cfg.k_folds, f, meta) for s in scenarios for f in range(cfg.k_folds)]
    results = {}
    total = len(tasks)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for i, (sid, fold, doc) in enumerate(pool.map(_fold_task, tasks), 1):
                results[(sid, fold)] = doc
                print(f"[{i}/{total}] {sid} fold {fold + 1}/{cfg.k_folds} done", file=sys.stderr)
    else:
        for i, task in enumerate(tasks, 1):
            sid, fold, doc = _fold_task(task)
            results[(sid, fold)] = doc
            print(f"[{i}/{total}] {sid} fold {fold + 1}/{cfg.k_folds} done", file=sys.stderr)

    for s in scenarios:
        sid = s.scenario_id
        name = safe_name(sid)
        folds = [results[(sid, f)] for f in range(cfg.k_folds)]
        for f, doc in enumerate(folds):
            atomic_write(out / "reports" / name / f"fold{f}.json", dumps(doc).encode())
            lines = "".join(dumps(e).replace("\n", "") + "\n" for e in doc["events"])
            atomic_write(out / "events" / name / f"fold{f}.jsonl", lines.encode())
        cv = CvReport.from_folds(folds, {**meta, "scenario": sid, "k": cfg.k_folds,
                                         "tier1": pipe.tier1.kind, "tier2": pipe.tier2.kind})
        atomic_write(out / "cv" / f"{name}.json", dumps(cv.as_dict()).encode())
    grids = tables.collect(out)
    atomic_write(out / "tables.tsv", tables.flat(grids).encode())
    print(tables.render(grids))
    return EXIT_OK


def cmd_report(args) -> int:
    grids = tables.collect(args.out_dir)
    text = tables.render(grids)
    print(text)
    atomic_write(Path(args.out_dir) / "tables.tsv", tables.flat(grids).encode())
    atomic_write(Path(args.out_dir) / "tables.txt", text.encode())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualtier", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prep", help="encode a CSV into a binary cache")
    prep.add_argument("csv")
    prep.add_argument("--label", default="label", help="class column name")
    prep.add_argument("--drop", help="comma-separated columns to drop")
    prep.add_argument("--strict", action="store_true", help="error on unseen categories")
    prep.add_argument("--out", help="cache path (default: <csv>.dtid)")
    prep.set_defaults(func=cmd_prep)

    run = sub.add_parser("run", help="cross-validate every selected scenario")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    run.add_argument("--scenario", help="comma-separated scenario ids, e.g. U=dos")
    run.add_argument("--detector", help="e.g. tier1=lof,tier2=isolation_forest")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="render summary grids of a run directory")
    rep.add_argument("out_dir")
    rep.set_defaults(func=cmd_report)
    return p


def _fail(code: int, kind: str, exc: Exception) -> int:
    msg = str(exc).replace("\n", " ")
    print(f"dualtier: error code={code} kind={kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (DataError, tables.ReportError, EnvelopeError) as exc:
        return _fail(EXIT_DATA, "data", exc)
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        return _fail(EXIT_RUNTIME, "runtime", exc)


if __name__ == "__main__":
    sys.exit(main())
