"""Experiment configuration read from INI-style ``.cfg`` files."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .clustering import DbscanParams, DpcParams
from .detectors import DetectorSpec
from .pipeline import PipelineConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str
    label_column: str = "label"
    drop_columns: tuple = ()
    strict_encoding: bool = False
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    unknown_counts: tuple = (1,)
    # explicit unknown sets; when given, unknown_counts is ignored
    scenarios: tuple = ()
    k_folds: int = 5
    seed: int = 0
    out_dir: str = "runs/out"
    workers: int = 1


def _opt_float(text: str):
    text = text.strip().lower()
    return None if text in ("", "auto", "none") else float(text)


def _opt_int(text: str):
    text = text.strip().lower()
    return None if text in ("", "auto", "none") else int(text)


def _list(text: str) -> tuple:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _detector(cp, section: str, seed: int) -> DetectorSpec:
    s = cp[section] if cp.has_section(section) else {}
    return DetectorSpec(
        kind=s.get("kind", "isolation_forest").strip(),
        n_trees=int(s.get("n_trees", 100)),
        subsample_size=int(s.get("subsample_size", 256)),
        k_neighbors=int(s.get("k_neighbors", 20)),
        seed=int(s.get("seed", seed)),
        plugin=s.get("plugin") or None,
    )


def load_config(path) -> ExperimentConfig:
    """Parse a config file; ``data.path`` is resolved against the file's directory."""
    path = Path(path)
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config {path}")
        return _build(cp, path.parent)
    except (configparser.Error, KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def _build(cp, base: Path) -> ExperimentConfig:
    if not cp.has_section("data") or "path" not in cp["data"]:
        raise ConfigError("missing [data] path")
    data = cp["data"]
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    seed = int(exp.get("seed", 0))
    forest = cp["forest"] if cp.has_section("forest") else {}
    clus = cp["clustering"] if cp.has_section("clustering") else {}
    retr = cp["retraining"] if cp.has_section("retraining") else {}
    pipe = PipelineConfig(
        tier1=_detector(cp, "tier1", seed),
        tier2=_detector(cp, "tier2", seed),
        forest_trees=int(forest.get("n_trees", 100)),
        forest_mtry=_opt_int(forest.get("mtry", "auto")),
        clustering=clus.get("method", "dbscan").strip(),
        dbscan=DbscanParams(eps=_opt_float(clus.get("eps", "auto")),
                            min_pts=int(clus.get("min_pts", 5))),
        dpc=DpcParams(dc=_opt_float(clus.get("dc", "auto")),
                      n_peaks=_opt_int(clus.get("n_peaks", "3"))),
        bucket_capacity=int(retr.get("bucket_capacity", 1000)),
        max_rounds=int(retr.get("max_rounds", 10)),
        labeling=retr.get("labeling", "ground_truth_oracle").strip(),
        normal_label=data.get("normal_label", "normal").strip(),
        seed=seed,
    )
    scenarios = tuple(
        tuple(sorted(c.strip() for c in group.split("+") if c.strip()))
        for group in exp.get("scenarios", "").split(";") if group.strip()
    )
    k = int(exp.get("k_folds", 5))
    if k < 2:
        raise ConfigError("k_folds must be at least 2")
    return ExperimentConfig(
        data_path=str((base / data["path"].strip()).resolve()),
        label_column=data.get("label_column", "label").strip(),
        drop_columns=_list(data.get("drop_columns", "")),
        strict_encoding=data.getboolean("strict_encoding", fallback=False),
        pipeline=pipe,
        unknown_counts=tuple(int(u) for u in _list(exp.get("unknown_count", "1"))),
        scenarios=scenarios,
        k_folds=k,
        seed=seed,
        out_dir=exp.get("out_dir", "runs/out").strip(),
        workers=int(exp.get("workers", 1)),
    )


def with_overrides(cfg: ExperimentConfig, seed=None, workers=None, out=None,
                   detector=None) -> ExperimentConfig:
    """Apply command-line overrides; ``detector`` looks like ``tier1=lof,tier2=isolation_forest``."""
    pipe = cfg.pipeline
    if seed is not None:
        pipe = replace(pipe, seed=seed, tier1=replace(pipe.tier1, seed=seed),
                       tier2=replace(pipe.tier2, seed=seed))
        cfg = replace(cfg, seed=seed)
    if detector:
        for part in _list(detector):
            tier, sep, kind = part.partition("=")
            if not sep or tier.strip() not in ("tier1", "tier2"):
                raise ConfigError(f"bad --detector entry {part!r}")
            try:
                spec = replace(getattr(pipe, tier.strip()), kind=kind.strip())
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            pipe = replace(pipe, **{tier.strip(): spec})
    cfg = replace(cfg, pipeline=pipe)
    if workers is not None:
        cfg = replace(cfg, workers=workers)
    if out is not None:
        cfg = replace(cfg, out_dir=out)
    return cfg
