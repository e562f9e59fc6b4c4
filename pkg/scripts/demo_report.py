#!/usr/bin/env python3
"""End-to-end demo: synth -> train -> evaluate -> explain -> HTML report.

Everything lands under --workdir (default ./demo); open index.html from the
report directory when it finishes.

    python3 scripts/demo_report.py --workdir demo --nodes 120 --epochs 400
"""

import argparse
import sys
from pathlib import Path

from misinfogat import cli
from misinfogat.graph import k_hop_neighborhood
from misinfogat.pipeline import load_bundle, tweet_indices


def best_connected_tweets(bundle, count):
    """Labeled tweets sorted by 2-hop neighborhood size (largest first)."""
    g = bundle.graph
    idxs = [i for i in tweet_indices(bundle) if g.labels[i] != -1]
    idxs.sort(key=lambda i: (-len(k_hop_neighborhood(g, i, 2)), i))
    return [g.node_ids[i] for i in idxs[:count]]


def run(argv, label):
    print(f"$ misinfogat {' '.join(argv)}")
    code = cli.main(argv)
    if code != 0:
        raise SystemExit(f"{label} failed with exit code {code}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", type=Path, default=Path("demo"))
    ap.add_argument("--nodes", type=int, default=120)
    ap.add_argument("--signal", choices=("graph", "text", "both"), default="both")
    ap.add_argument("--epochs", type=int, default=400)
    ap.add_argument("--explain", type=int, default=3, help="how many nodes to explain")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    w = args.workdir
    bundle_dir = w / "bundle"
    ckpt = w / "model.gatcp"
    run(["synth", "--nodes", str(args.nodes), "--signal", args.signal,
         "--seed", str(args.seed), "--out", str(bundle_dir)], "synth")
    run(["train", "--bundle", str(bundle_dir), "--checkpoint", str(ckpt),
         "--mode", "multi", "--seed", str(args.seed),
         "--epochs", str(args.epochs)], "train")
    run(["evaluate", "--bundle", str(bundle_dir), "--seeds", "0,1,2",
         "--epochs", str(args.epochs), "--out", str(w / "run_report.json")],
        "evaluate")

    nodes = best_connected_tweets(load_bundle(bundle_dir), args.explain)
    explain = ["explain", "--bundle", str(bundle_dir), "--checkpoint", str(ckpt),
               "--out", str(w / "explanations")]
    for nid in nodes:
        explain += ["--node", nid]
    run(explain, "explain")

    run(["report", "--bundle", str(bundle_dir),
         "--run-report", str(w / "run_report.json"),
         "--explanations", str(w / "explanations"),
         "--out", str(w / "report")], "report")
    print(f"\nopen {w / 'report' / 'index.html'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
