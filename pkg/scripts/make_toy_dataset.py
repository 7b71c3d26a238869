"""Write a small labelled CSV with one categorical column (data/toy.csv)."""

import argparse
import csv
from pathlib import Path

import numpy as np

from dualtier.synthetic import make_blobs

PROTOCOLS = {"normal": "tcp", "dos": "icmp", "probe": "udp", "r2l": "tcp"}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/toy.csv")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    sizes = {"normal": 300, "dos": 120, "probe": 120, "r2l": 90}
    m = make_blobs(sizes, n_features=5, spread=0.6, seed=args.seed)
    rng = np.random.default_rng(args.seed + 1)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["duration", "proto"] + [f"f{j}" for j in range(1, 5)] + ["label"])
        for x, label in zip(m.values, m.labels):
            # mostly class-typical protocol, sometimes random
            proto = PROTOCOLS[label] if rng.random() < 0.9 else rng.choice(["tcp", "udp", "icmp"])
            w.writerow([f"{x[0]:.6f}", proto] + [f"{v:.6f}" for v in x[1:]] + [label])
    print(f"wrote {out} ({m.n_rows} rows)")


if __name__ == "__main__":
    main()
