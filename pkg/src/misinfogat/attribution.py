"""Integrated-gradients word importance through pooling, projection and GAT.

Attribution for one node's prediction with respect to its own token
embeddings.  The path runs from an all-zero token matrix to the real one;
at each step the node's pooled row is rebuilt as the mean of the scaled
tokens so gradients flow token → pooling → projection → both GAT layers,
while every other node's features stay fixed.  Scores are signed relative
to the *predicted* class: positive pushes toward the shown label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .gat import GatModel, model_forward, predict
from .graph import IndexOutOfRange, InteractionGraph

BASELINES = ("zero",)


class AttributionError(Exception):
    pass


class NoTokenEmbeddings(AttributionError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"node {node} has no token-level embeddings")


class LengthMismatch(AttributionError):
    pass


@dataclass
class TokenAttribution:
    node_id: str
    tokens: list[str]
    scores: np.ndarray       # per-token sum over embedding dims
    normalized: np.ndarray   # scores / max|score|, in [-1, 1]
    completeness_gap: float
    steps: int

    def to_json(self) -> dict:
        return {
            "node_id": self.node_id,
            "tokens": list(self.tokens),
            "scores": [float(s) for s in self.scores],
            "normalized": [float(s) for s in self.normalized],
            "steps": int(self.steps),
            "completeness_gap": float(self.completeness_gap),
        }


def _check_baseline(baseline: str) -> None:
    if baseline not in BASELINES:
        raise ValueError(f"unknown baseline {baseline!r}; supported: {BASELINES}")


def _token_matrix(features, node: int) -> tuple[list[str], np.ndarray]:
    toks = features.text_tokens
    entry = toks[node] if toks is not None else None
    if not entry:
        raise NoTokenEmbeddings(node)
    texts = [t for t, _ in entry]
    mat = np.stack([np.asarray(v, dtype=np.float64) for _, v in entry])
    return texts, mat


def _path_probability(model, graph, features, node, token_mat, rest, tape):
    """P(Misinformation) at `node` with its pooled row = mean of token_mat."""
    T = ad.Tensor(token_mat, requires_grad=True)
    pooled = ad.mean_rows(T, tape)
    full = ad.add(ad.embed_row(pooled, node, features.n_nodes, tape), rest, tape)
    p, _ = model_forward(model, graph, features, tape, pooled_tensor=full)
    return T, ad.select(p, node, tape)


def _predicted_class(model, graph, features, node) -> int:
    p, _ = model_forward(model, graph, features)
    return int(predict(p.data)[node])


def integrated_gradients(
    model: GatModel,
    graph: InteractionGraph,
    features,
    node: int,
    baseline: str = "zero",
    steps: int = 50,
) -> np.ndarray:
    """Right-Riemann path integral of ∂F/∂tokens; returns (t, d) matrix.

    F is the probability of the class the frozen model predicts for `node`
    at the real input, held fixed along the whole path.
    """
    _check_baseline(baseline)
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if not 0 <= node < graph.n_nodes:
        raise IndexOutOfRange(f"node index {node} out of range [0, {graph.n_nodes})")
    _, x = _token_matrix(features, node)
    rest_data = np.asarray(features.text_pooled, dtype=np.float64).copy()
    rest_data[node] = 0.0
    predicted = _predicted_class(model, graph, features, node)
    total = np.zeros_like(x)
    for k in range(1, steps + 1):
        tape = ad.Tape()
        T, p_node = _path_probability(
            model, graph, features, node, (k / steps) * x, ad.Tensor(rest_data), tape
        )
        F = p_node if predicted == 0 else ad.one_minus(p_node, tape)
        grads = ad.backward(tape, F)
        g = grads.get(T)
        if g is not None:
            total += g
    return x * (total / steps)


def completeness_gap(
    model: GatModel,
    graph: InteractionGraph,
    features,
    node: int,
    attributions: np.ndarray,
    baseline: str = "zero",
) -> float:
    """|Σ attributions − (F(x) − F(baseline))| for the node's fixed class."""
    _check_baseline(baseline)
    _, x = _token_matrix(features, node)
    if attributions.shape != x.shape:
        raise LengthMismatch(
            f"attributions {attributions.shape} vs token matrix {x.shape}"
        )
    rest_data = np.asarray(features.text_pooled, dtype=np.float64).copy()
    rest_data[node] = 0.0
    predicted = _predicted_class(model, graph, features, node)

    def f_at(mat):
        _, p_node = _path_probability(
            model, graph, features, node, mat, ad.Tensor(rest_data), tape=None
        )
        value = float(p_node.data)
        return value if predicted == 0 else 1.0 - value

    delta = f_at(x) - f_at(np.zeros_like(x))
    return abs(float(attributions.sum()) - delta)


def word_importance(
    attributions: np.ndarray,
    tokens: list[str],
    node_id: str = "",
    steps: int = 0,
    completeness_gap: float = 0.0,
) -> TokenAttribution:
    attr = np.asarray(attributions, dtype=np.float64)
    if attr.ndim != 2 or attr.shape[0] != len(tokens):
        raise LengthMismatch(
            f"attribution rows {attr.shape} must match {len(tokens)} token(s)"
        )
    scores = attr.sum(axis=1)
    peak = float(np.max(np.abs(scores))) if scores.size else 0.0
    normalized = scores / peak if peak > 0.0 else np.zeros_like(scores)
    return TokenAttribution(
        node_id=node_id,
        tokens=list(tokens),
        scores=scores,
        normalized=normalized,
        completeness_gap=float(completeness_gap),
        steps=steps,
    )


def attribute_node(
    model: GatModel,
    graph: InteractionGraph,
    features,
    node: int,
    steps: int = 50,
    baseline: str = "zero",
) -> TokenAttribution:
    """Full per-node pipeline: IG matrix → completeness check → token scores."""
    tokens, _ = _token_matrix(features, node)
    attr = integrated_gradients(model, graph, features, node, baseline, steps)
    gap = completeness_gap(model, graph, features, node, attr, baseline)
    return word_importance(
        attr, tokens, node_id=graph.node_ids[node], steps=steps, completeness_gap=gap
    )
