"""Bundle loading: TSVs + MMEB1 file → interaction graph + aligned features."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .features import (
    FeatureSet,
    HashedEncoder,
    ShallowStats,
    assemble_features,
    encode_shallow,
    fit_shallow_stats,
    load_embeddings,
)
from .graph import (
    HeteroGraph,
    InteractionGraph,
    NodeKind,
    SplitTag,
    build_interaction_graph,
    derive_tweet_labels,
    load_dataset,
    load_splits,
)


@dataclass
class DatasetBundle:
    hetero: HeteroGraph
    graph: InteractionGraph
    features: FeatureSet
    stats: ShallowStats


def load_bundle(
    bundle_dir,
    transform: str = "log1p_zscore",
    couser_cap: int = 10,
    conflict_policy: str = "drop",
    use_fallback: bool = True,
) -> DatasetBundle:
    """Load nodes/edges/splits(.tsv) and embeddings.mmeb from one directory.

    Shallow-transform statistics are fit on train-split nodes only; nodes
    without a file embedding fall back to the hashed encoder when enabled.
    """
    d = Path(bundle_dir)
    hetero = load_dataset(d / "nodes.tsv", d / "edges.tsv")
    labels = derive_tweet_labels(hetero, conflict_policy)
    splits_path = d / "splits.tsv"
    splits = load_splits(splits_path) if splits_path.exists() else {}
    graph = build_interaction_graph(hetero, labels, splits, couser_cap)

    records = {nid: hetero.payload(nid) for nid in graph.node_ids}
    train_ids = [
        nid for i, nid in enumerate(graph.node_ids) if graph.splits[i] == int(SplitTag.TRAIN)
    ]
    fit_ids = train_ids if train_ids else list(graph.node_ids)
    stats = fit_shallow_stats([records[nid] for nid in fit_ids], transform)
    shallow = {nid: encode_shallow(records[nid], transform, stats) for nid in graph.node_ids}

    emb_path = d / "embeddings.mmeb"
    embeddings = load_embeddings(emb_path) if emb_path.exists() else {}
    texts = {nid: records[nid].text for nid in graph.node_ids}
    features = assemble_features(
        graph,
        shallow,
        embeddings,
        fallback_encoder=HashedEncoder() if use_fallback else None,
        texts=texts,
        stats=stats,
    )
    return DatasetBundle(hetero=hetero, graph=graph, features=features, stats=stats)


def tweet_indices(bundle: DatasetBundle) -> list[int]:
    """Indices of Tweet-kind interaction nodes (the labelable population)."""
    return [
        i for i, nid in enumerate(bundle.graph.node_ids)
        if bundle.hetero.kind_of(nid) == NodeKind.TWEET
    ]
