import numpy as np
import pytest

from dualtier.synthetic import make_blobs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def four_blobs():
    return make_blobs({"normal": 400, "a1": 400, "a2": 400, "a3": 400}, seed=3)


def small_config(**kw):
    from dualtier.detectors import DetectorSpec
    from dualtier.pipeline import PipelineConfig

    base = dict(tier1=DetectorSpec(n_trees=50), tier2=DetectorSpec(n_trees=50),
                forest_trees=20, bucket_capacity=150)
    base.update(kw)
    return PipelineConfig(**base)


@pytest.fixture(scope="session")
def fold_a1(four_blobs):
    """Scaled k=2 fold 0 of the four-blob set with a1 held out."""
    from dualtier.dataset import ScenarioSpec, stratified_kfold
    from dualtier.experiment import prepare_fold

    scenario = ScenarioSpec(frozenset({"a2", "a3"}), frozenset({"a1"}))
    tr, te = stratified_kfold(four_blobs.labels, 2, 0).split(0)
    train, test = prepare_fold(four_blobs, tr, te, scenario)
    return train, test, scenario


def write_csv(path, sizes, seed=0):
    """Blob CSV with a categorical 'svc' column, as a capture export might look."""
    import csv

    data = make_blobs(sizes, n_features=4, spread=0.5, seed=seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f0", "f1", "svc", "f3", "label"])
        for x, y in zip(data.values, data.labels):
            svc = "http" if y == "normal" else f"svc_{y}"
            w.writerow([repr(x[0]), repr(x[1]), svc, repr(x[3]), y])
    return path


TINY_CFG = """
[data]
path = {csv}
normal_label = normal

[tier1]
n_trees = 30

[tier2]
n_trees = 30

[forest]
n_trees = 10

[clustering]
method = {method}
min_pts = 4

[retraining]
bucket_capacity = 15
max_rounds = 3

[experiment]
unknown_count = 1
k_folds = 2
seed = {seed}
out_dir = out
"""


@pytest.fixture
def tiny_project(tmp_path):
    csv_path = write_csv(tmp_path / "tiny.csv", {"normal": 120, "a": 60, "b": 60, "c": 60})

    def make(method="dbscan", seed=0, name="tiny.cfg", data="tiny.csv"):
        cfg = tmp_path / name
        cfg.write_text(TINY_CFG.format(csv=data, method=method, seed=seed))
        return cfg

    make.dir = tmp_path
    make.csv = csv_path
    return make


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
        terminalreporter.write_line(line)
