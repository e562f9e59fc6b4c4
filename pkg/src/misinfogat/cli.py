"""Command-line pipeline: ingest, synth, train, evaluate, explain, report.

Every subcommand is a deterministic function of its inputs and seeds.
Usage errors exit 2 (argparse); domain errors print one structured line
`error: <Kind>: <detail>` to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import attribution as at
from . import graphlime as gl
from . import synth as synth_mod
from .config import ConfigError, PipelineConfig, build_config, parse_mode
from .features import encode_shallow, write_embeddings, load_embeddings
from .gat import load_model, save_model
from .graph import Label, NodeKind, load_dataset, load_splits, derive_tweet_labels
from .pipeline import load_bundle
from .report import render_report
from .training import run_ablation, train

DOMAIN_ERRORS = (ValueError, OSError, KeyError, IndexError, gl.ExplainError, at.AttributionError)

_VERDICT_TEXT = {Label.MISINFORMATION: "misinformation", Label.FACTUAL: "factual"}


def _overrides(args) -> dict:
    pairs = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        pairs[key.strip()] = value
    return pairs


def _cfg(args, **flag_values) -> PipelineConfig:
    """defaults < config file < --set pairs < dedicated flags."""
    merged = _overrides(args)
    merged.update({k: str(v) for k, v in flag_values.items() if v is not None})
    return build_config(getattr(args, "config", None), merged)


def _write_json(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    cfg = _cfg(args)
    hetero = load_dataset(args.nodes, args.edges)
    labels = derive_tweet_labels(hetero, cfg.conflict_policy)
    splits = load_splits(args.splits) if args.splits else {}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def payload_json(kind, payload):
        if kind in (NodeKind.TWEET, NodeKind.REPLY):
            doc = {
                "text": payload.text,
                "reply_count": payload.reply_count,
                "quote_count": payload.quote_count,
                "retweet_count": payload.retweet_count,
                "language": payload.language,
            }
        elif kind == NodeKind.CLAIM:
            doc = {"verdict": _VERDICT_TEXT[payload.verdict]}
        else:
            doc = payload if isinstance(payload, dict) else {}
        return json.dumps(doc, sort_keys=True, ensure_ascii=False)

    with open(out / "nodes.tsv", "w", encoding="utf-8") as fh:
        fh.write("id\tkind\tpayload_json\n")
        for nid in sorted(hetero.nodes):
            kind, payload = hetero.nodes[nid]
            fh.write(f"{nid}\t{kind.value}\t{payload_json(kind, payload)}\n")
    with open(out / "edges.tsv", "w", encoding="utf-8") as fh:
        fh.write("src\trelation\tdst\n")
        for src, rel, dst in sorted(hetero.edges, key=lambda e: (e[0], e[1].value, e[2])):
            fh.write(f"{src}\t{rel.value}\t{dst}\n")
    with open(out / "splits.tsv", "w", encoding="utf-8") as fh:
        fh.write("id\tsplit\n")
        for nid in sorted(splits):
            fh.write(f"{nid}\t{splits[nid]}\n")
    if args.embeddings:
        records = load_embeddings(args.embeddings)
        ordered = [records[rid] for rid in sorted(records)]
        write_embeddings(out / "embeddings.mmeb", ordered)
    print(
        f"ingested {len(hetero.nodes)} nodes, {len(hetero.edges)} edges, "
        f"{len(labels)} labeled tweets -> {out}"
    )
    return 0


def cmd_synth(args) -> int:
    spec = synth_mod.SynthSpec(
        n_nodes=args.nodes,
        density=args.density,
        placement=args.signal,
        balance=args.balance,
        seed=args.seed,
    )
    manifest = synth_mod.synth_generate(spec, args.out)
    for key in ("nodes", "edges", "splits", "embeddings"):
        print(manifest[key])
    return 0


def cmd_train(args) -> int:
    cfg = _cfg(args, mode=args.mode, seed=args.seed, epochs=args.epochs,
               learning_rate=args.lr)
    bundle = load_bundle(
        args.bundle,
        transform=cfg.transform,
        couser_cap=cfg.couser_cap,
        conflict_policy=cfg.conflict_policy,
        use_fallback=cfg.use_fallback,
    )
    tc = cfg.train_config()
    model, history = train(
        bundle.graph, bundle.features, bundle.graph.labels, bundle.graph.splits, tc
    )
    ckpt = args.checkpoint or cfg.checkpoint
    Path(ckpt).parent.mkdir(parents=True, exist_ok=True)
    save_model(ckpt, model, bundle.stats)
    _write_json(
        str(ckpt) + ".history.json",
        json.dumps(
            {"loss": history.loss, "val_f1": history.val_f1},
            sort_keys=True, indent=2,
        ),
    )
    print(f"trained {tc.mode.value} seed={tc.seed}: "
          f"loss {history.loss[0]:.4f} -> {history.loss[-1]:.4f}, checkpoint {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _cfg(args, epochs=args.epochs)
    modes = [parse_mode(tok) for tok in args.modes.split(",") if tok.strip()]
    seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip() != "")
    bundle = load_bundle(
        args.bundle,
        transform=cfg.transform,
        couser_cap=cfg.couser_cap,
        conflict_policy=cfg.conflict_policy,
        use_fallback=cfg.use_fallback,
    )
    report = run_ablation(bundle, modes=modes, seeds=seeds, config=cfg.train_config())
    _write_json(args.out, report.to_json())
    print(report.to_table())
    return 0


def _rebuild_shallow(bundle, stats) -> None:
    if stats is None:
        return
    for i, nid in enumerate(bundle.graph.node_ids):
        bundle.features.shallow[i] = encode_shallow(
            bundle.hetero.payload(nid), stats.kind, stats
        )


def cmd_explain(args) -> int:
    cfg = _cfg(args, hops=args.hops, steps=args.steps)
    bundle = load_bundle(
        args.bundle,
        transform=cfg.transform,
        couser_cap=cfg.couser_cap,
        conflict_policy=cfg.conflict_policy,
        use_fallback=cfg.use_fallback,
    )
    model, ckpt_stats = load_model(args.checkpoint)
    _rebuild_shallow(bundle, ckpt_stats)  # checkpoint stats win over refit ones
    out = Path(args.out)
    for nid in args.node:
        index = bundle.graph.index_of.get(nid)
        if index is None:
            raise gl.ExplainError(f"node id {nid!r} not found in bundle")
        ecfg = cfg.explainer_config()
        explanation = None
        for extra in range(4):  # widen the neighborhood if it is too small
            try:
                explanation = gl.explain_node(
                    model, bundle.graph, bundle.features, index,
                    gl.ExplainerConfig(
                        hops=ecfg.hops + extra, sigma_x=ecfg.sigma_x,
                        sigma_y=ecfg.sigma_y, rho=ecfg.rho,
                        min_samples=ecfg.min_samples,
                    ),
                )
                break
            except gl.NeighborhoodTooSmall:
                if extra == 3:
                    raise
        try:
            token_attr = at.attribute_node(
                model, bundle.graph, bundle.features, index, steps=cfg.steps
            ).to_json()
        except at.NoTokenEmbeddings:
            token_attr = None
        doc = {
            "node_id": nid,
            "explanation": explanation.to_json(),
            "attribution": token_attr,
        }
        _write_json(out / f"{nid}.json", json.dumps(doc, sort_keys=True, indent=2))
        print(f"explained {nid} -> {out / (nid + '.json')}")
    return 0


def cmd_report(args) -> int:
    bundle = load_bundle(args.bundle) if args.bundle else None
    run_report = json.loads(Path(args.run_report).read_text(encoding="utf-8"))
    explanations, attributions = [], []
    for path in sorted(Path(args.explanations).glob("*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        explanations.append(doc["explanation"])
        if doc.get("attribution"):
            attributions.append(doc["attribution"])
    metadata = {}
    if bundle is not None:
        for nid in bundle.graph.node_ids:
            rec = bundle.hetero.payload(nid)
            metadata[nid] = {
                "text": rec.text,
                "reply_count": rec.reply_count,
                "quote_count": rec.quote_count,
                "retweet_count": rec.retweet_count,
            }
    written = render_report(explanations, attributions, run_report, args.out, metadata)
    for path in written:
        print(path)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="misinfogat",
        description="Explainable misinformation detection on tweet graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    p = sub.add_parser("ingest", help="validate raw TSV inputs, write a normalized bundle")
    p.add_argument("--nodes", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--splits")
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a planted-signal synthetic bundle")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--signal", default="both", choices=["graph", "text", "both"])
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--balance", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model, write checkpoint + history")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--mode", choices=["graph", "text", "multi", "graph_only", "text_only", "multimodal"])
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run the modes × seeds ablation, write run_report.json")
    p.add_argument("--bundle", required=True)
    p.add_argument("--modes", default="graph,text,multi")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", default="run_report.json")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="write explanation + attribution JSON per node")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--node", action="append", required=True,
                   help="node id to explain (repeatable)")
    p.add_argument("--hops", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", default="explanations")
    common(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("report", help="render HTML report from JSON artifacts")
    p.add_argument("--bundle", help="bundle dir for tweet text/counts on node pages")
    p.add_argument("--run-report", required=True, dest="run_report")
    p.add_argument("--explanations", required=True)
    p.add_argument("--out", default="report")
    common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DOMAIN_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
