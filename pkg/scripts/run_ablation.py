#!/usr/bin/env python3
"""Modality ablation on the planted-signal benchmark.

Generates (or reuses) a synthetic bundle, trains GraphOnly / TextOnly /
Multimodal models over a seed sweep, and prints the F1 table.  With
--out the aggregated report is also written as JSON.

    python3 scripts/run_ablation.py --nodes 400 --epochs 800 --out run_report.json
"""

import argparse
import json
import sys
import time
from pathlib import Path

from misinfogat import synth, training
from misinfogat.pipeline import load_bundle


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=400)
    ap.add_argument("--signal", choices=("graph", "text", "both"), default="both")
    ap.add_argument("--bundle-seed", type=int, default=0)
    ap.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated model seeds")
    ap.add_argument("--epochs", type=int, default=800)
    ap.add_argument("--lr", type=float, default=0.005)
    ap.add_argument("--bundle", type=Path, default=None,
                    help="reuse an existing bundle instead of generating one")
    ap.add_argument("--out", type=Path, default=None, help="write report JSON here")
    args = ap.parse_args(argv)

    if args.bundle is None:
        args.bundle = Path(f"bench_{args.signal}_{args.nodes}_s{args.bundle_seed}")
        spec = synth.SynthSpec(n_nodes=args.nodes, placement=args.signal, seed=args.bundle_seed)
        synth.synth_generate(spec, args.bundle)
        print(f"bundle: {args.bundle}")

    bundle = load_bundle(args.bundle)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    cfg = training.TrainConfig(learning_rate=args.lr, epochs=args.epochs)

    t0 = time.perf_counter()
    report = training.run_ablation(bundle, seeds=seeds, config=cfg)
    print(report.to_table())
    print(f"({len(seeds)} seeds x 3 modes, {time.perf_counter() - t0:.1f}s)")

    if args.out:
        args.out.write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
