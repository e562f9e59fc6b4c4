"""Heterogeneous social-graph ingestion and the homogeneous interaction graph.

The heterogeneous graph carries four node kinds (Claim, Tweet, Reply, User)
and six directed relation kinds, loaded from TSV files and validated against
the relation schema. For message passing it is projected onto Tweet∪Reply
nodes with reply/quote edges, capped user-co-engagement edges, and one
mandatory self-loop per node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np


class GraphError(ValueError):
    pass


class MalformedRow(GraphError):
    def __init__(self, path, line: int, reason: str):
        self.path, self.line, self.reason = str(path), line, reason
        super().__init__(f"{path}:{line}: {reason}")


class DanglingEdge(GraphError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"edge references absent node id(s): {', '.join(self.ids)}")


class DuplicateNode(GraphError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"duplicate node id: {node_id}")


class IndexOutOfRange(IndexError):
    pass


class NodeKind(Enum):
    CLAIM = "Claim"
    TWEET = "Tweet"
    REPLY = "Reply"
    USER = "User"


class RelationKind(Enum):
    POSTED = "Posted"
    MENTIONS = "Mentions"
    RETWEETED = "Retweeted"
    QUOTE_OF = "QuoteOf"
    REPLY_TO = "ReplyTo"
    DISCUSSES = "Discusses"


_RELATION_ALIASES = {
    "Posted": RelationKind.POSTED,
    "Mentions": RelationKind.MENTIONS,
    "Retweeted": RelationKind.RETWEETED,
    "QuoteOf": RelationKind.QUOTE_OF,
    "Quote_Of": RelationKind.QUOTE_OF,
    "ReplyTo": RelationKind.REPLY_TO,
    "Reply_To": RelationKind.REPLY_TO,
    "Discusses": RelationKind.DISCUSSES,
}

# (allowed source kinds, allowed target kinds) per relation
_RELATION_SCHEMA: dict[RelationKind, tuple[set[NodeKind], set[NodeKind]]] = {
    RelationKind.POSTED: ({NodeKind.USER}, {NodeKind.TWEET, NodeKind.REPLY}),
    RelationKind.MENTIONS: ({NodeKind.TWEET}, {NodeKind.USER}),
    RelationKind.RETWEETED: ({NodeKind.USER}, {NodeKind.TWEET}),
    RelationKind.QUOTE_OF: ({NodeKind.REPLY}, {NodeKind.TWEET}),
    RelationKind.REPLY_TO: ({NodeKind.REPLY}, {NodeKind.TWEET}),
    RelationKind.DISCUSSES: ({NodeKind.TWEET}, {NodeKind.CLAIM}),
}


class Label(IntEnum):
    MISINFORMATION = 0
    FACTUAL = 1


def parse_label(text: str) -> Label:
    key = text.strip().lower()
    if key in ("misinformation", "misinfo", "0"):
        return Label.MISINFORMATION
    if key in ("factual", "fact", "1"):
        return Label.FACTUAL
    raise ValueError(f"unknown label {text!r}")


@dataclass(frozen=True)
class TweetRecord:
    id: str
    text: str
    reply_count: int
    quote_count: int
    retweet_count: int
    language: str = "en"

    def __post_init__(self):
        for name in ("reply_count", "quote_count", "retweet_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0 for node {self.id}")


@dataclass(frozen=True)
class ClaimRecord:
    id: str
    verdict: Label


@dataclass
class HeteroGraph:
    """Validated typed graph: every edge endpoint exists and obeys the schema."""

    nodes: dict[str, tuple[NodeKind, object]] = field(default_factory=dict)
    edges: list[tuple[str, RelationKind, str]] = field(default_factory=list)
    by_kind: dict[NodeKind, list[str]] = field(default_factory=dict)
    _edge_set: set[tuple[str, RelationKind, str]] = field(default_factory=set, repr=False)

    def add_node(self, node_id: str, kind: NodeKind, payload) -> None:
        if node_id in self.nodes:
            raise DuplicateNode(node_id)
        self.nodes[node_id] = (kind, payload)
        self.by_kind.setdefault(kind, []).append(node_id)

    def add_edge(self, src: str, rel: RelationKind, dst: str) -> None:
        missing = [i for i in (src, dst) if i not in self.nodes]
        if missing:
            raise DanglingEdge(missing)
        src_kinds, dst_kinds = _RELATION_SCHEMA[rel]
        sk, dk = self.nodes[src][0], self.nodes[dst][0]
        if sk not in src_kinds or dk not in dst_kinds:
            raise GraphError(
                f"relation {rel.value} does not allow {sk.value} -> {dk.value} ({src} -> {dst})"
            )
        triple = (src, rel, dst)
        if triple in self._edge_set:
            raise GraphError(f"duplicate edge {src} {rel.value} {dst}")
        self._edge_set.add(triple)
        self.edges.append(triple)

    def kind_of(self, node_id: str) -> NodeKind:
        return self.nodes[node_id][0]

    def payload(self, node_id: str):
        return self.nodes[node_id][1]

    def ids_of_kind(self, kind: NodeKind) -> list[str]:
        return self.by_kind.get(kind, [])


def _parse_payload(node_id: str, kind: NodeKind, payload_json: str):
    data = json.loads(payload_json) if payload_json.strip() else {}
    if kind in (NodeKind.TWEET, NodeKind.REPLY):
        return TweetRecord(
            id=node_id,
            text=str(data.get("text", "")),
            reply_count=int(data.get("reply_count", 0)),
            quote_count=int(data.get("quote_count", 0)),
            retweet_count=int(data.get("retweet_count", 0)),
            language=str(data.get("language", "en")),
        )
    if kind == NodeKind.CLAIM:
        if "verdict" not in data:
            raise ValueError("claim payload missing verdict")
        return ClaimRecord(id=node_id, verdict=parse_label(str(data["verdict"])))
    return data


def load_dataset(node_file, edge_file) -> HeteroGraph:
    """Parse nodes.tsv / edges.tsv (header rows required) into a HeteroGraph."""
    graph = HeteroGraph()
    with open(node_file, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if lineno == 1 or not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedRow(node_file, lineno, f"expected 3 tab-separated columns, got {len(parts)}")
            node_id, kind_text, payload_json = parts
            try:
                kind = NodeKind(kind_text)
            except ValueError:
                raise MalformedRow(node_file, lineno, f"unknown node kind {kind_text!r}") from None
            try:
                payload = _parse_payload(node_id, kind, payload_json)
            except ValueError as exc:
                raise MalformedRow(node_file, lineno, f"bad payload: {exc}") from None
            graph.add_node(node_id, kind, payload)

    with open(edge_file, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if lineno == 1 or not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedRow(edge_file, lineno, f"expected 3 tab-separated columns, got {len(parts)}")
            src, rel_text, dst = parts
            rel = _RELATION_ALIASES.get(rel_text)
            if rel is None:
                raise MalformedRow(edge_file, lineno, f"unknown relation {rel_text!r}")
            try:
                graph.add_edge(src, rel, dst)
            except GraphError as exc:
                if isinstance(exc, DanglingEdge):
                    raise
                raise MalformedRow(edge_file, lineno, str(exc)) from None
    return graph


def load_splits(path) -> dict[str, str]:
    """Parse splits.tsv: id<TAB>split with split in {train,val,test}."""
    splits: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if lineno == 1 or not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("train", "val", "test"):
                raise MalformedRow(path, lineno, f"expected id<TAB>train|val|test, got {line!r}")
            splits[parts[0]] = parts[1]
    return splits


def derive_tweet_labels(graph: HeteroGraph, conflict_policy: str = "drop") -> dict[str, Label]:
    """Propagate claim verdicts to tweets along Discusses edges.

    A tweet discussing claims with conflicting verdicts is dropped under the
    "drop" policy; "majority" keeps the modal verdict and drops exact ties.
    Tweets with no Discusses edge are simply absent from the result.
    """
    if conflict_policy not in ("drop", "majority"):
        raise ValueError(f"conflict_policy must be 'drop' or 'majority', got {conflict_policy!r}")
    verdicts: dict[str, list[Label]] = {}
    for src, rel, dst in graph.edges:
        if rel == RelationKind.DISCUSSES:
            claim = graph.payload(dst)
            verdicts.setdefault(src, []).append(claim.verdict)
    labels: dict[str, Label] = {}
    for tweet_id, vs in verdicts.items():
        n_mis = sum(1 for v in vs if v == Label.MISINFORMATION)
        n_fact = len(vs) - n_mis
        if n_mis and n_fact:
            if conflict_policy == "drop" or n_mis == n_fact:
                continue
            labels[tweet_id] = Label.MISINFORMATION if n_mis > n_fact else Label.FACTUAL
        else:
            labels[tweet_id] = vs[0]
    return labels


class SplitTag(IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2
    UNLABELED = 3


_SPLIT_NAMES = {"train": SplitTag.TRAIN, "val": SplitTag.VAL, "test": SplitTag.TEST}


class EdgeTag(IntEnum):
    REPLY_TO = 0
    QUOTE_OF = 1
    CO_USER = 2
    SELF_LOOP = 3


@dataclass
class InteractionGraph:
    """Homogeneous Tweet∪Reply graph with edges sorted by (dst, src)."""

    node_ids: list[str]
    src: np.ndarray  # int64 (m,)
    dst: np.ndarray  # int64 (m,)
    tag: np.ndarray  # int8 (m,), EdgeTag values
    labels: np.ndarray  # int8 (n,), Label value or -1
    splits: np.ndarray  # int8 (n,), SplitTag values
    index_of: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index_of:
            self.index_of = {nid: i for i, nid in enumerate(self.node_ids)}

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])


def build_interaction_graph(
    graph: HeteroGraph,
    labels: dict[str, Label],
    splits: dict[str, str],
    couser_cap: int = 10,
) -> InteractionGraph:
    """Project the typed graph onto Tweet∪Reply nodes.

    Edges: ReplyTo and QuoteOf mapped in both directions, capped bidirectional
    co-engagement edges per user (pairs in sorted-id order), and one self-loop
    per node. Deduplicated by (src, dst) with first-wins priority in that order.
    """
    node_ids = sorted(graph.ids_of_kind(NodeKind.TWEET) + graph.ids_of_kind(NodeKind.REPLY))
    index = {nid: i for i, nid in enumerate(node_ids)}

    chosen: dict[tuple[int, int], EdgeTag] = {}

    def offer(a: int, b: int, tag: EdgeTag) -> None:
        if (a, b) not in chosen:
            chosen[(a, b)] = tag

    for rel, tag in ((RelationKind.REPLY_TO, EdgeTag.REPLY_TO), (RelationKind.QUOTE_OF, EdgeTag.QUOTE_OF)):
        for s, r, d in graph.edges:
            if r == rel:
                a, b = index[s], index[d]
                offer(a, b, tag)
                offer(b, a, tag)

    engaged: dict[str, set[str]] = {}
    for s, r, d in graph.edges:
        if r in (RelationKind.POSTED, RelationKind.RETWEETED) and d in index:
            engaged.setdefault(s, set()).add(d)
    for user in sorted(engaged):
        items = sorted(engaged[user])
        taken = 0
        for i in range(len(items)):
            if taken >= couser_cap:
                break
            for j in range(i + 1, len(items)):
                if taken >= couser_cap:
                    break
                a, b = index[items[i]], index[items[j]]
                offer(a, b, EdgeTag.CO_USER)
                offer(b, a, EdgeTag.CO_USER)
                taken += 1

    for i in range(len(node_ids)):
        offer(i, i, EdgeTag.SELF_LOOP)

    order = sorted(chosen, key=lambda e: (e[1], e[0]))
    src = np.fromiter((e[0] for e in order), dtype=np.int64, count=len(order))
    dst = np.fromiter((e[1] for e in order), dtype=np.int64, count=len(order))
    tag = np.fromiter((chosen[e] for e in order), dtype=np.int8, count=len(order))

    label_arr = np.full(len(node_ids), -1, dtype=np.int8)
    for nid, lab in labels.items():
        if nid not in index:
            raise GraphError(f"label references unknown interaction node {nid!r}")
        if graph.kind_of(nid) != NodeKind.TWEET:
            raise GraphError(f"labeled node {nid!r} is not Tweet-kind")
        label_arr[index[nid]] = int(lab)

    split_arr = np.full(len(node_ids), int(SplitTag.UNLABELED), dtype=np.int8)
    for nid, name in splits.items():
        if nid in index:
            split_arr[index[nid]] = int(_SPLIT_NAMES[name])

    return InteractionGraph(
        node_ids=node_ids, src=src, dst=dst, tag=tag, labels=label_arr, splits=split_arr, index_of=index
    )


def k_hop_neighborhood(g: InteractionGraph, node: int, k: int) -> set[int]:
    """Nodes reachable within k undirected hops, including the node itself."""
    if not 0 <= node < g.n_nodes:
        raise IndexOutOfRange(f"node index {node} out of range [0, {g.n_nodes})")
    adj: dict[int, set[int]] = {}
    for s, d in zip(g.src.tolist(), g.dst.tolist()):
        if s != d:
            adj.setdefault(s, set()).add(d)
            adj.setdefault(d, set()).add(s)
    seen = {node}
    frontier = {node}
    for _ in range(k):
        nxt = set()
        for u in frontier:
            nxt |= adj.get(u, set()) - seen
        if not nxt:
            break
        seen |= nxt
        frontier = nxt
    return seen
