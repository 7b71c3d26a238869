"""Tier-1 and tier-2 quality of each built-in detector on a synthetic
scenario, averaged over stratified folds."""

import argparse

from dualtier.dataset import ScenarioSpec
from dualtier.detectors import DetectorSpec
from dualtier.experiment import cross_validate
from dualtier.pipeline import PipelineConfig
from dualtier.synthetic import make_blobs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--per-class", type=int, default=300)
    ap.add_argument("--folds", type=int, default=3)
    ap.add_argument("--bucket", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    data = make_blobs({c: args.per_class for c in ("normal", "a1", "a2", "a3")}, seed=args.seed)
    scenario = ScenarioSpec(frozenset({"a2", "a3"}), frozenset({"a1"}))
    keys = ("tier1_accuracy", "tier1_f1", "tier2_accuracy", "tier2_f1",
            "initial_attack_weighted_f1", "final_attack_weighted_f1")
    print("detector          " + "  ".join(f"{k:>26}" for k in keys))
    for kind in ("isolation_forest", "lof"):
        spec = DetectorSpec(kind=kind, seed=args.seed)
        cfg = PipelineConfig(tier1=spec, tier2=spec, bucket_capacity=args.bucket, seed=args.seed)
        rep = cross_validate(data, scenario, cfg, k=args.folds)
        cells = [f"{rep.mean[k]:10.2f} +- {rep.std[k]:5.2f}" for k in keys]
        print(f"{kind:16s}  " + "  ".join(f"{c:>26}" for c in cells))


if __name__ == "__main__":
    main()
