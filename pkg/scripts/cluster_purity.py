"""Cluster a mixed batch of attack classes with DBSCAN and DPC and print the
PSL1 / PSL2 / PSLC of every cluster, largest first."""

import argparse

import numpy as np

from dualtier.clustering import (DbscanParams, DpcParams, cluster_report, dbscan, dpc,
                                 largest_cluster)
from dualtier.synthetic import make_blobs


def show(name, assignment, truth):
    rows = sorted(cluster_report(assignment, truth), key=lambda r: -r["size"])
    noise = int((assignment.labels < 0).sum())
    print(f"{name}: {assignment.n_clusters} clusters, {noise} noise points")
    for r in rows:
        print(f"  cluster {r['cluster']:2d} size {r['size']:4d} dominant {r['dominant']:4s} "
              f"PSL1 {r['psl1']:.3f} PSL2 {r['psl2']:.3f} PSLC {r['pslc']:.3f}")
    if assignment.n_clusters:
        cid, _ = largest_cluster(assignment)
        print(f"  largest: cluster {cid}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="140,60", help="class sizes in the batch")
    ap.add_argument("--spread", type=float, default=0.8)
    ap.add_argument("--min-pts", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    batch = make_blobs({f"u{i}": n for i, n in enumerate(sizes)}, spread=args.spread,
                       seed=args.seed, min_separation=3)
    truth = batch.labels.tolist()
    X = np.asarray(batch.values)
    show("dbscan", dbscan(X, DbscanParams(min_pts=args.min_pts)), truth)
    show("dpc", dpc(X, DpcParams(n_peaks=len(sizes))), truth)


if __name__ == "__main__":
    main()
