"""Stratified cross-validation of the adaptive pipeline and the report
documents it produces."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import pipeline
from .dataset import FeatureMatrix, ScenarioSpec, apply_minmax, fit_minmax, stratified_kfold
from .metrics import binary_metrics, confusion
from .pipeline import PipelineConfig

log = logging.getLogger(__name__)

# final-state quantities aggregated across folds
SUMMARY_KEYS = (
    "tier1_accuracy", "tier1_f1",
    "tier2_accuracy", "tier2_f1",
    "initial_attack_accuracy", "initial_attack_weighted_f1",
    "final_attack_accuracy", "final_attack_weighted_f1",
    "final_overall_accuracy", "final_overall_weighted_f1",
    "rounds",
)


def plain(obj):
    """Recursively turn numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, frozenset):
        return sorted(obj)
    return obj


def dumps(doc) -> str:
    return json.dumps(plain(doc), indent=2, sort_keys=True) + "\n"


def prepare_fold(data: FeatureMatrix, train_idx, test_idx, scenario: ScenarioSpec):
    """Drop unknown-class rows from the training split, fit min-max on what
    remains and scale both splits with it."""
    train = data.subset(train_idx)
    test = data.subset(test_idx)
    keep = np.asarray([lab not in scenario.unknown_classes for lab in train.labels])
    train = train.where(keep)
    params = fit_minmax(train)
    return apply_minmax(train, params), apply_minmax(test, params)


def tier_metrics(state: pipeline.PipelineState, test: FeatureMatrix, scenario: ScenarioSpec,
                 normal_label: str) -> dict:
    """Binary quality of each detector tier at version 0.

    Tier 1: attack vs normal over the whole fold. Tier 2: unknown vs known
    over the true attacks that tier 1 passed on.
    """
    truth = np.asarray([str(t) for t in test.labels], dtype=object)
    flagged = state.tier1.predict(test.values)
    t1_true = np.where(truth == normal_label, "normal", "attack")
    t1_pred = np.where(flagged, "attack", "normal")
    t1 = binary_metrics(confusion(t1_true, t1_pred, ["attack", "normal"]), "attack")
    out = {"tier1": t1.as_dict()}
    sel = flagged & (truth != normal_label)
    if sel.any():
        unknown = state.tier2.predict(test.values[sel])
        t2_true = np.where([t in scenario.unknown_classes for t in truth[sel]], "unknown", "known")
        t2_pred = np.where(unknown, "unknown", "known")
        t2 = binary_metrics(confusion(t2_true, t2_pred, ["known", "unknown"]), "unknown")
        out["tier2"] = t2.as_dict()
    else:
        out["tier2"] = None
    return out


def run_fold(data: FeatureMatrix, scenario: ScenarioSpec, config: PipelineConfig, k: int,
             fold: int, meta: dict | None = None) -> dict:
    plan = stratified_kfold(data.labels, k, config.seed)
    train_idx, test_idx = plan.split(fold)
    train, test = prepare_fold(data, train_idx, test_idx, scenario)
    state = pipeline.train_initial(train, scenario, config)
    tiers = tier_metrics(state, test, scenario, config.normal_label)
    result = pipeline.run_simulation(train, test, scenario, config, state=state)
    t2 = tiers["tier2"] or {"accuracy": 0.0, "weighted_f1": 0.0}
    summary = {
        "tier1_accuracy": tiers["tier1"]["accuracy"],
        "tier1_f1": tiers["tier1"]["weighted_f1"],
        "tier2_accuracy": t2["accuracy"],
        "tier2_f1": t2["weighted_f1"],
        "initial_attack_accuracy": result.initial["attack_accuracy"],
        "initial_attack_weighted_f1": result.initial["attack_weighted_f1"],
        "final_attack_accuracy": result.final["attack_accuracy"],
        "final_attack_weighted_f1": result.final["attack_weighted_f1"],
        "final_overall_accuracy": result.final["overall_accuracy"],
        "final_overall_weighted_f1": result.final["overall_weighted_f1"],
        "rounds": len(result.events),
    }
    return plain({
        "meta": {**(meta or {}), "scenario": scenario.scenario_id,
                 "known_classes": sorted(scenario.known_classes),
                 "unknown_classes": sorted(scenario.unknown_classes),
                 "fold": fold, "k": k, "n_train": train.n_rows, "n_test": test.n_rows,
                 "tier1": config.tier1.kind, "tier2": config.tier2.kind,
                 "clustering": config.clustering, "bucket_capacity": config.bucket_capacity},
        "summary": summary,
        "tiers": tiers,
        "initial": result.initial,
        "final": result.final,
        "timeline": result.timeline,
        "events": [e.as_dict() for e in result.events],
        "promoted_classes": result.promoted_classes,
        "final_known_classes": list(result.state.known_classes),
        "verdict_counts": result.verdict_counts,
    })


@dataclass
class CvReport:
    folds: list[dict]
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_folds(cls, folds: list[dict], meta: dict | None = None) -> "CvReport":
        mean, std = {}, {}
        for key in SUMMARY_KEYS:
            vals = np.asarray([f["summary"][key] for f in folds], dtype=np.float64)
            mean[key] = float(vals.mean())
            std[key] = float(vals.std())
        return cls(folds, mean, std, dict(meta or {}))

    def as_dict(self) -> dict:
        return plain({
            "meta": self.meta,
            "mean": self.mean,
            "std": self.std,
            "per_fold": [f["summary"] for f in self.folds],
        })


def cross_validate(data: FeatureMatrix, scenario: ScenarioSpec, config: PipelineConfig,
                   k: int = 5, meta: dict | None = None) -> CvReport:
    """Train on k-1 folds and stream the held-out fold, for every fold."""
    folds = []
    for i in range(k):
        folds.append(run_fold(data, scenario, config, k, i, meta))
        log.info("%s fold %d/%d done", scenario.scenario_id, i + 1, k)
    meta = {**(meta or {}), "scenario": scenario.scenario_id, "k": k,
            "tier1": config.tier1.kind, "tier2": config.tier2.kind,
            "config": asdict(config)}
    return CvReport.from_folds(folds, meta)
