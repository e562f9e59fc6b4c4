"""Two-layer graph-attention classifier over fused shallow+text node features.

Per edge s→d the attention logit is LeakyReLU(a_src·(Wh)_s + a_dst·(Wh)_d),
normalized with a segment softmax over each destination's incoming edges
(self-loop included), so attention rows sum to one. Layer 1 maps the fused
input to a 16-dim hidden state under ELU; layer 2 maps to a single logit and
sigmoid gives P(Misinformation).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .features import EMBED_DIM, FeatureSet, ShallowStats

HIDDEN_DIM = 16
PROJ_DIM = 3
LEAKY_SLOPE = 0.2


class ModeFeatureMismatch(ValueError):
    pass


class MissingSelfLoop(ValueError):
    def __init__(self, node: int):
        self.node = node
        super().__init__(f"node {node} has no self-loop edge")


class CheckpointError(ValueError):
    pass


class Mode(Enum):
    GRAPH_ONLY = "graph_only"
    TEXT_ONLY = "text_only"
    MULTIMODAL = "multimodal"

    @property
    def in_dim(self) -> int:
        return 6 if self is Mode.MULTIMODAL else 3


@dataclass
class GatLayerParams:
    W: ad.Tensor  # (in_dim, out_dim)
    a_src: ad.Tensor  # (out_dim,)
    a_dst: ad.Tensor  # (out_dim,)


@dataclass
class GatModel:
    mode: Mode
    proj_W: ad.Tensor  # (768, 3)
    proj_b: ad.Tensor  # (3,)
    layer1: GatLayerParams
    layer2: GatLayerParams

    def parameters(self) -> dict[str, ad.Tensor]:
        """All parameters by canonical name (checkpoint order)."""
        return {
            "proj_W": self.proj_W,
            "proj_b": self.proj_b,
            "l1_W": self.layer1.W,
            "l1_a_src": self.layer1.a_src,
            "l1_a_dst": self.layer1.a_dst,
            "l2_W": self.layer2.W,
            "l2_a_src": self.layer2.a_src,
            "l2_a_dst": self.layer2.a_dst,
        }

    def trainable_parameters(self) -> dict[str, ad.Tensor]:
        """Parameters the optimizer may touch; the text projection is frozen
        out of graph-only training so unused weights stay bitwise intact."""
        params = self.parameters()
        if self.mode is Mode.GRAPH_ONLY:
            del params["proj_W"], params["proj_b"]
        return params


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> ad.Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return ad.Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def init_model(mode: Mode, seed: int) -> GatModel:
    """Glorot-uniform weights, zero biases; fully determined by (mode, seed)."""
    rng = np.random.default_rng(seed)
    proj_W = _glorot(rng, EMBED_DIM, PROJ_DIM, (EMBED_DIM, PROJ_DIM))
    proj_b = ad.Tensor(np.zeros(PROJ_DIM), requires_grad=True)
    d_in = mode.in_dim

    def layer(n_in, n_out):
        return GatLayerParams(
            W=_glorot(rng, n_in, n_out, (n_in, n_out)),
            a_src=_glorot(rng, n_out, 1, (n_out,)),
            a_dst=_glorot(rng, n_out, 1, (n_out,)),
        )

    return GatModel(
        mode=mode, proj_W=proj_W, proj_b=proj_b,
        layer1=layer(d_in, HIDDEN_DIM), layer2=layer(HIDDEN_DIM, 1),
    )


def project_and_fuse(
    model: GatModel,
    features: FeatureSet,
    tape: ad.Tape | None = None,
    pooled_tensor: ad.Tensor | None = None,
) -> ad.Tensor:
    """Build the per-node model input: [shallow ‖ proj(text)], mode-dependent.

    `pooled_tensor` substitutes the constant pooled-text matrix (used by the
    attribution path to differentiate w.r.t. one node's embedding).
    """
    n = features.n_nodes
    if features.shallow.shape != (n, 3):
        raise ModeFeatureMismatch(f"shallow features must be (n,3); got {features.shallow.shape}")
    shallow = ad.Tensor(features.shallow)
    if model.mode is Mode.GRAPH_ONLY:
        return shallow
    if pooled_tensor is None:
        if features.text_pooled.shape != (n, EMBED_DIM):
            raise ModeFeatureMismatch(
                f"text features must be (n,{EMBED_DIM}); got {features.text_pooled.shape}"
            )
        pooled_tensor = ad.Tensor(features.text_pooled)
    elif pooled_tensor.shape != (n, EMBED_DIM):
        raise ModeFeatureMismatch(
            f"pooled override must be (n,{EMBED_DIM}); got {pooled_tensor.shape}"
        )
    projected = ad.add(ad.matmul(pooled_tensor, model.proj_W, tape), model.proj_b, tape)
    if model.mode is Mode.TEXT_ONLY:
        return projected
    return ad.concat([shallow, projected], axis=1, tape=tape)


def _check_self_loops(graph) -> None:
    loops = np.zeros(graph.n_nodes, dtype=bool)
    loops[graph.src[graph.src == graph.dst]] = True
    if not loops.all():
        raise MissingSelfLoop(int(np.flatnonzero(~loops)[0]))


def gat_layer_forward(
    params: GatLayerParams,
    graph,
    h: ad.Tensor,
    activation: str = "elu",
    tape: ad.Tape | None = None,
) -> tuple[ad.Tensor, ad.Tensor]:
    """One attention layer; returns (node outputs, per-edge attention)."""
    if h.shape[0] != graph.n_nodes:
        raise ad.ShapeMismatch(f"h has {h.shape[0]} rows for {graph.n_nodes} nodes")
    _check_self_loops(graph)
    wh = ad.matmul(h, params.W, tape)  # (n, out)
    s_src = ad.matmul(wh, params.a_src, tape)  # (n,)
    s_dst = ad.matmul(wh, params.a_dst, tape)
    logits = ad.add(
        ad.gather_rows(s_src, graph.src, tape), ad.gather_rows(s_dst, graph.dst, tape), tape
    )
    alpha = ad.segment_softmax(ad.leaky_relu(logits, LEAKY_SLOPE, tape), graph.dst, tape)
    messages = ad.scale_rows(ad.gather_rows(wh, graph.src, tape), alpha, tape)
    out = ad.segment_sum(messages, graph.dst, graph.n_nodes, tape)
    if activation == "elu":
        out = ad.elu(out, tape)
    elif activation != "none":
        raise ValueError(f"unknown activation {activation!r}")
    return out, alpha


def model_forward(
    model: GatModel,
    graph,
    features: FeatureSet,
    tape: ad.Tape | None = None,
    pooled_tensor: ad.Tensor | None = None,
) -> tuple[ad.Tensor, list[ad.Tensor]]:
    """Per-node P(Misinformation) plus both layers' attention vectors."""
    x = project_and_fuse(model, features, tape, pooled_tensor)
    h1, a1 = gat_layer_forward(model.layer1, graph, x, "elu", tape)
    h2, a2 = gat_layer_forward(model.layer2, graph, h1, "none", tape)
    p = ad.sigmoid(ad.flatten(h2, tape), tape)
    return p, [a1, a2]


def predict(probabilities: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """p > threshold → Misinformation (0); ties and below → Factual (1)."""
    p = np.asarray(probabilities, dtype=np.float64)
    return np.where(p > threshold, 0, 1).astype(np.int8)


def compute_multimodal(model: GatModel, features: FeatureSet) -> np.ndarray:
    """Fill features.multimodal with [shallow(3) ‖ projected text(3)]."""
    projected = features.text_pooled @ model.proj_W.data + model.proj_b.data
    mm = np.concatenate([features.shallow, projected], axis=1)
    features.multimodal = mm
    return mm


# ---------------------------------------------------------------------------
# checkpoint container (GATCP1)

_CP_MAGIC = b"GATCP1"
_MODE_CODE = {Mode.GRAPH_ONLY: 0, Mode.TEXT_ONLY: 1, Mode.MULTIMODAL: 2}
_MODE_FROM = {v: k for k, v in _MODE_CODE.items()}
_KIND_CODE = {None: 0, "raw": 1, "log1p_zscore": 2}
_KIND_FROM = {v: k for k, v in _KIND_CODE.items()}


def save_model(path, model: GatModel, stats: ShallowStats | None = None) -> None:
    """Versioned binary checkpoint; bitwise round-trip including the shallow
    transform so evaluation never refits statistics."""
    params = model.parameters()
    with open(path, "wb") as fh:
        fh.write(_CP_MAGIC)
        kind = stats.kind if stats is not None else None
        fh.write(struct.pack("<BBB", 1, _MODE_CODE[model.mode], _KIND_CODE[kind]))
        mu = stats.mu if stats is not None else np.zeros(3)
        sigma = stats.sigma if stats is not None else np.ones(3)
        fh.write(np.asarray(mu, dtype="<f8").tobytes())
        fh.write(np.asarray(sigma, dtype="<f8").tobytes())
        fh.write(struct.pack("<H", len(params)))
        for name, tensor in params.items():
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            data = np.asarray(tensor.data, dtype="<f8")
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def _read(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: wanted {n} bytes, got {len(buf)}")
    return buf


def load_model(path) -> tuple[GatModel, ShallowStats | None]:
    with open(path, "rb") as fh:
        if fh.read(6) != _CP_MAGIC:
            raise CheckpointError(f"{path} is not a GATCP1 checkpoint")
        version, mode_code, kind_code = struct.unpack("<BBB", _read(fh, 3))
        if version != 1:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        if mode_code not in _MODE_FROM or kind_code not in _KIND_FROM:
            raise CheckpointError("unknown mode or transform tag")
        mode = _MODE_FROM[mode_code]
        mu = np.frombuffer(_read(fh, 24), dtype="<f8").copy()
        sigma = np.frombuffer(_read(fh, 24), dtype="<f8").copy()
        kind = _KIND_FROM[kind_code]
        stats = ShallowStats(kind, mu, sigma) if kind is not None else None
        (n_params,) = struct.unpack("<H", _read(fh, 2))
        blobs: dict[str, np.ndarray] = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<H", _read(fh, 2))
            name = _read(fh, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(fh, 1))
            shape = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            blobs[name] = np.frombuffer(_read(fh, 8 * count), dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after final parameter")

    model = init_model(mode, seed=0)
    params = model.parameters()
    if set(blobs) != set(params):
        raise CheckpointError(
            f"parameter names {sorted(blobs)} do not match expected {sorted(params)}"
        )
    for name, tensor in params.items():
        if blobs[name].shape != tensor.data.shape:
            raise CheckpointError(
                f"{name}: shape {blobs[name].shape} does not match expected {tensor.data.shape}"
            )
        tensor.data = blobs[name]
    return model, stats
