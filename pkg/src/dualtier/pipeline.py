"""Two-tier adaptive detection: normal/attack detector, known/unknown
detector, family forest, the unknown bucket and the retraining loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import detectors, forest
from .clustering import (
    ClusterQuality,
    DbscanParams,
    DpcParams,
    cluster_quality,
    cluster_report,
    dbscan,
    dpc,
    largest_cluster,
)
from .dataset import FeatureMatrix, ScenarioSpec, atomic_write
from .detectors import DetectorSpec, OccModel
from . import envelope
from .forest import ForestModel
from .metrics import confusion, multiclass_metrics

log = logging.getLogger(__name__)

NORMAL = "Normal"
KNOWN = "KnownAttack"
UNKNOWN = "UnknownAttack"

GROUND_TRUTH = "ground_truth_oracle"
SYNTHETIC = "synthetic_new_class"

# prediction labels used when scoring verdicts against class names
PRED_NORMAL = "normal"
PRED_UNKNOWN = "unknown"


@dataclass(frozen=True)
class PipelineConfig:
    tier1: DetectorSpec = field(default_factory=DetectorSpec)
    tier2: DetectorSpec = field(default_factory=DetectorSpec)
    forest_trees: int = 100
    forest_mtry: int | None = None
    clustering: str = "dbscan"
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    dpc: DpcParams = field(default_factory=DpcParams)
    bucket_capacity: int = 1000
    max_rounds: int = 10
    labeling: str = GROUND_TRUTH
    normal_label: str = "normal"
    seed: int = 0

    def __post_init__(self):
        if self.clustering not in ("dbscan", "dpc"):
            raise ValueError(f"unknown clustering method {self.clustering!r}")
        if self.labeling not in (GROUND_TRUTH, SYNTHETIC):
            raise ValueError(f"unknown labeling mode {self.labeling!r}")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        min_pts = self.dbscan.min_pts if self.clustering == "dbscan" else 2
        if self.bucket_capacity < min_pts:
            raise ValueError("bucket_capacity must be at least the clustering min_pts")


@dataclass
class UnknownBucket:
    capacity: int
    rows: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    row_ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def full(self) -> bool:
        return len(self.rows) >= self.capacity

    def add(self, row, truth=None, row_id=-1) -> None:
        self.rows.append(np.asarray(row, dtype=np.float64))
        self.truth.append(truth)
        self.row_ids.append(int(row_id))

    def values(self) -> np.ndarray:
        return np.vstack(self.rows) if self.rows else np.empty((0, 0))

    def without(self, index, capacity=None) -> "UnknownBucket":
        drop = set(int(i) for i in index)
        keep = [i for i in range(len(self.rows)) if i not in drop]
        return UnknownBucket(
            self.capacity if capacity is None else capacity,
            [self.rows[i] for i in keep],
            [self.truth[i] for i in keep],
            [self.row_ids[i] for i in keep],
        )

    def copy(self) -> "UnknownBucket":
        return UnknownBucket(self.capacity, list(self.rows), list(self.truth), list(self.row_ids))


@dataclass(frozen=True)
class Verdict:
    kind: str
    family: str | None = None
    probability: float | None = None

    @property
    def label(self) -> str:
        if self.kind == NORMAL:
            return PRED_NORMAL
        if self.kind == UNKNOWN:
            return PRED_UNKNOWN
        return self.family


@dataclass
class RetrainEvent:
    round: int
    quality: ClusterQuality | None
    promoted_class: str | None
    promoted_count: int
    new_version: int
    n_clusters: int = 0
    bucket_before: int = 0
    bucket_after: int = 0
    outcome: str = "promoted"  # promoted | no_cluster | dismissed
    clusters: list = field(default_factory=list)
    stream_position: int = -1

    def as_dict(self) -> dict:
        return {
            "round": self.round,
            "outcome": self.outcome,
            "promoted_class": self.promoted_class,
            "promoted_count": self.promoted_count,
            "new_version": self.new_version,
            "n_clusters": self.n_clusters,
            "bucket_before": self.bucket_before,
            "bucket_after": self.bucket_after,
            "stream_position": self.stream_position,
            "quality": None if self.quality is None else self.quality.as_dict(),
            "clusters": self.clusters,
        }


@dataclass
class PipelineState:
    version: int
    tier1: OccModel
    tier2: OccModel
    family_model: ForestModel
    known_classes: tuple
    tier1_train: FeatureMatrix
    attack_train: FeatureMatrix
    bucket: UnknownBucket
    rounds: int = 0

    # tier 2 and the family forest are always fit on the same rows
    @property
    def tier2_train(self) -> FeatureMatrix:
        return self.attack_train

    @property
    def family_train(self) -> FeatureMatrix:
        return self.attack_train

    def fitted_row_ids(self) -> set[int]:
        return set(self.tier1_train.row_ids.tolist()) | set(self.attack_train.row_ids.tolist())


def _fit_second_tier(attack_train: FeatureMatrix, config: PipelineConfig, class_names):
    tier2 = detectors.fit_detector(attack_train, config.tier2)
    family = forest.fit_forest(attack_train, config.forest_trees, config.forest_mtry,
                               config.seed, class_names)
    return tier2, family


def train_initial(train: FeatureMatrix, scenario: ScenarioSpec, config: PipelineConfig) -> PipelineState:
    """Fit tier 1 on normal rows and tier 2 + forest on known-attack rows.

    Rows of the scenario's unknown classes are dropped before anything is fit.
    """
    if train.labels is None:
        raise ValueError("training matrix needs labels")
    present = set(train.labels.tolist())
    absent = sorted(scenario.known_classes - present)
    if absent:
        raise ValueError(f"scenario known classes absent from training data: {absent}")
    stray = sorted(present - scenario.attack_classes - {config.normal_label})
    if stray:
        raise ValueError(f"training labels outside the scenario: {stray}")
    normal = train.where(train.labels == config.normal_label)
    if normal.n_rows == 0:
        raise ValueError(f"no {config.normal_label!r} rows to fit tier 1")
    known = np.asarray([lab in scenario.known_classes for lab in train.labels])
    attack_train = train.where(known)
    tier1 = detectors.fit_detector(normal, config.tier1)
    classes = tuple(sorted(scenario.known_classes))
    tier2, family = _fit_second_tier(attack_train, config, classes)
    return PipelineState(0, tier1, tier2, family, classes, normal, attack_train,
                         UnknownBucket(config.bucket_capacity))


def infer(state: PipelineState, row) -> Verdict:
    row = np.asarray(row, dtype=np.float64)
    if detectors.classify(state.tier1, row) == detectors.INLIER:
        return Verdict(NORMAL)
    if detectors.classify(state.tier2, row) == detectors.OUTLIER:
        return Verdict(UNKNOWN)
    proba = forest.predict_proba(state.family_model, row)
    family = forest.predict(state.family_model, row)
    return Verdict(KNOWN, family, proba[family])


def infer_batch(state: PipelineState, X) -> np.ndarray:
    """Prediction labels (family name, ``normal`` or ``unknown``) for many rows."""
    X = np.asarray(X, dtype=np.float64)
    out = np.full(X.shape[0], PRED_NORMAL, dtype=object)
    attack = state.tier1.predict(X)
    if attack.any():
        idx = np.flatnonzero(attack)
        unknown = state.tier2.predict(X[idx])
        out[idx[unknown]] = PRED_UNKNOWN
        known = idx[~unknown]
        if known.size:
            out[known] = state.family_model.predict(X[known])
    return out


def observe(state: PipelineState, row, truth=None, row_id=-1) -> tuple[Verdict, bool]:
    """Infer one streamed row; unknown verdicts go to the bucket.

    Returns the verdict and whether the bucket has reached capacity.
    """
    verdict = infer(state, row)
    if verdict.kind == UNKNOWN:
        state.bucket.add(row, truth, row_id)
    return verdict, state.bucket.full


def _cluster(X: np.ndarray, config: PipelineConfig):
    if config.clustering == "dpc":
        if X.shape[0] < 2:
            return dbscan(X, DbscanParams(eps=1.0, min_pts=2))
        return dpc(X, config.dpc)
    return dbscan(X, config.dbscan)


def _label_cluster(config: PipelineConfig, member_truth, version: int):
    """Which cluster members to promote, and under what class name.

    The simulation uses ground truth where a deployment would ask an analyst.
    """
    if config.labeling == SYNTHETIC:
        return np.ones(len(member_truth), dtype=bool), f"novel_{version + 1}"
    q = cluster_quality(member_truth, member_truth)
    mask = np.asarray([str(t) == q.dominant for t in member_truth])
    return mask, q.dominant


def retrain_round(state: PipelineState, config: PipelineConfig,
                  stream_position: int = -1) -> tuple[PipelineState, RetrainEvent]:
    """Cluster the bucket, promote the dominant class of the largest cluster
    and refit tier 2 and the family forest on the enlarged training set."""
    bucket = state.bucket
    if len(bucket) == 0:
        raise ValueError("retrain_round on an empty bucket")
    X = bucket.values()
    truth = [str(t) for t in bucket.truth]
    rnd = state.rounds
    assignment = _cluster(X, config)
    base = dict(round=rnd, n_clusters=assignment.n_clusters, bucket_before=len(bucket),
                stream_position=stream_position)
    if assignment.n_clusters == 0:
        raised = math.ceil(bucket.capacity * 1.5)
        log.info("round %d: bucket is all noise, capacity -> %d", rnd, raised)
        new_bucket = bucket.copy()
        new_bucket.capacity = raised
        event = RetrainEvent(quality=None, promoted_class=None, promoted_count=0,
                             new_version=state.version, bucket_after=len(new_bucket),
                             outcome="no_cluster", **base)
        return replace(state, bucket=new_bucket, rounds=rnd + 1), event

    clusters = cluster_report(assignment, truth)
    _, members = largest_cluster(assignment)
    member_truth = [truth[i] for i in members]
    quality = cluster_quality(member_truth, truth)
    mask, name = _label_cluster(config, member_truth, state.version)
    promoted = members[mask]

    if config.labeling == GROUND_TRUTH and name == config.normal_label:
        # tier-1 false alarms: drop them from the bucket, nothing to learn
        new_bucket = bucket.without(promoted)
        event = RetrainEvent(quality=quality, promoted_class=None, promoted_count=0,
                             new_version=state.version, bucket_after=len(new_bucket),
                             outcome="dismissed", clusters=clusters, **base)
        return replace(state, bucket=new_bucket, rounds=rnd + 1), event

    new_rows = FeatureMatrix(
        X[promoted], list(state.attack_train.columns),
        np.asarray([name] * len(promoted), dtype=object),
        np.asarray([bucket.row_ids[i] for i in promoted], dtype=np.int64),
    )
    attack_train = state.attack_train.concat(new_rows)
    known = state.known_classes + ((name,) if name not in state.known_classes else ())
    tier2 = detectors.fit_detector(attack_train, config.tier2)
    family = forest.extend_classes(state.family_model, attack_train)
    new_bucket = bucket.without(promoted, capacity=config.bucket_capacity)
    new_state = replace(state, version=state.version + 1, tier2=tier2, family_model=family,
                        known_classes=known, attack_train=attack_train, bucket=new_bucket,
                        rounds=rnd + 1)
    event = RetrainEvent(quality=quality, promoted_class=name, promoted_count=int(len(promoted)),
                         new_version=new_state.version, bucket_after=len(new_bucket),
                         clusters=clusters, **base)
    log.info("round %d: promoted %d rows as %r (PSLC %.3f)", rnd, len(promoted), name, quality.pslc)
    return new_state, event


# -- simulation -------------------------------------------------------------


def evaluate_state(state: PipelineState, test: FeatureMatrix, normal_label: str) -> dict:
    """Score the whole test fold against the current state.

    ``attack_*`` metrics cover rows whose truth is an attack class; a row of a
    class the state does not know yet can only be right once it is promoted.
    """
    pred = infer_batch(state, test.values)
    truth = np.asarray([str(t) for t in test.labels], dtype=object)
    # all-normal predictions are scored as the normal label
    pred_named = np.where(pred == PRED_NORMAL, normal_label, pred)
    overall = multiclass_metrics(confusion(truth, pred_named))
    attack = truth != normal_label
    snap = {
        "version": state.version,
        "known_classes": list(state.known_classes),
        "overall_accuracy": overall.accuracy,
        "overall_weighted_f1": overall.weighted_f1,
    }
    if attack.any():
        rep = multiclass_metrics(confusion(truth[attack], pred_named[attack]))
        snap["attack_accuracy"] = rep.accuracy
        snap["attack_weighted_f1"] = rep.weighted_f1
        snap["attack_recall"] = {c: rep.recall[c] for c in sorted(set(truth[attack]))}
    else:
        snap.update(attack_accuracy=0.0, attack_weighted_f1=0.0, attack_recall={})
    return snap


@dataclass
class SimulationResult:
    timeline: list[dict]
    events: list[RetrainEvent]
    initial: dict
    final: dict
    state: PipelineState
    verdict_counts: dict

    @property
    def promoted_classes(self) -> list[str]:
        return [e.promoted_class for e in self.events if e.promoted_class is not None]


def run_simulation(train: FeatureMatrix, test: FeatureMatrix, scenario: ScenarioSpec,
                   config: PipelineConfig, state: PipelineState | None = None) -> SimulationResult:
    """Stream the test fold through the pipeline, retraining whenever the
    bucket fills, and snapshot metrics before and after every round."""
    if state is None:
        state = train_initial(train, scenario, config)
    snapshot = evaluate_state(state, test, config.normal_label)
    initial = snapshot
    timeline, events = [], []
    counts = {NORMAL: 0, KNOWN: 0, UNKNOWN: 0}
    for pos in range(test.n_rows):
        verdict, trigger = observe(state, test.values[pos], test.labels[pos], test.row_ids[pos])
        counts[verdict.kind] += 1
        if not trigger or state.rounds >= config.max_rounds:
            continue
        pre = snapshot
        state, event = retrain_round(state, config, stream_position=pos)
        snapshot = evaluate_state(state, test, config.normal_label)
        events.append(event)
        timeline.append({"round": event.round, "stream_position": pos, "pre": pre, "post": snapshot,
                         "event": event.as_dict()})
    return SimulationResult(timeline, events, initial, snapshot, state, counts)


# -- checkpoints and event logs ---------------------------------------------


def _matrix_arrays(prefix: str, m: FeatureMatrix, classes: list[str]) -> dict:
    index = {c: i for i, c in enumerate(classes)}
    return {
        f"{prefix}_values": m.values,
        f"{prefix}_ids": m.row_ids,
        f"{prefix}_labels": np.asarray([index[str(c)] for c in m.labels], dtype=np.int32),
    }


def _matrix_from(prefix: str, a: dict, columns, classes) -> FeatureMatrix:
    labels = np.asarray([classes[i] for i in a[f"{prefix}_labels"]], dtype=object)
    return FeatureMatrix(a[f"{prefix}_values"], list(columns), labels, a[f"{prefix}_ids"])


def save_checkpoint(state: PipelineState, directory) -> None:
    """Detector and forest blobs plus a data blob and a JSON manifest."""
    d = Path(directory)
    atomic_write(d / "tier1.model", detectors.to_bytes(state.tier1))
    atomic_write(d / "tier2.model", detectors.to_bytes(state.tier2))
    atomic_write(d / "family.model", forest.to_bytes(state.family_model))
    classes = sorted({str(c) for c in state.tier1_train.labels}
                     | {str(c) for c in state.attack_train.labels}
                     | {str(t) for t in state.bucket.truth})
    arrays = {}
    arrays.update(_matrix_arrays("tier1", state.tier1_train, classes))
    arrays.update(_matrix_arrays("attack", state.attack_train, classes))
    b = state.bucket
    index = {c: i for i, c in enumerate(classes)}
    arrays["bucket_values"] = b.values() if len(b) else np.empty((0, state.attack_train.n_cols))
    arrays["bucket_ids"] = np.asarray(b.row_ids, dtype=np.int64)
    arrays["bucket_truth"] = np.asarray([index[str(t)] for t in b.truth], dtype=np.int32)
    atomic_write(d / "data.bin", envelope.pack("pipeline-data", {"classes": classes}, arrays))
    manifest = {
        "format": 1,
        "version": state.version,
        "rounds": state.rounds,
        "known_classes": list(state.known_classes),
        "columns": list(state.attack_train.columns),
        "bucket_capacity": b.capacity,
        "files": ["tier1.model", "tier2.model", "family.model", "data.bin"],
    }
    atomic_write(d / "manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


def load_checkpoint(directory) -> PipelineState:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    _, meta, a = envelope.unpack((d / "data.bin").read_bytes())
    classes, columns = meta["classes"], manifest["columns"]
    bucket = UnknownBucket(
        manifest["bucket_capacity"],
        [row for row in a["bucket_values"]],
        [classes[i] for i in a["bucket_truth"]],
        a["bucket_ids"].tolist(),
    )
    return PipelineState(
        manifest["version"],
        detectors.from_bytes((d / "tier1.model").read_bytes()),
        detectors.from_bytes((d / "tier2.model").read_bytes()),
        forest.from_bytes((d / "family.model").read_bytes()),
        tuple(manifest["known_classes"]),
        _matrix_from("tier1", a, columns, classes),
        _matrix_from("attack", a, columns, classes),
        bucket,
        manifest["rounds"],
    )


def append_events(path, events) -> None:
    """Append retraining events as JSON lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        for e in events:
            record = e.as_dict() if isinstance(e, RetrainEvent) else e
            fh.write(json.dumps(record, sort_keys=True) + "\n")
