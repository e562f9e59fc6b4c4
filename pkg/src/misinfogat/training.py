"""Full-batch Adam training, F1 evaluation, and multi-seed ablation runs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .gat import GatModel, Mode, init_model, model_forward, predict
from .graph import SplitTag

MODE_DISPLAY = {
    Mode.GRAPH_ONLY: "Graph-based features only",
    Mode.TEXT_ONLY: "Text-based features only",
    Mode.MULTIMODAL: "Multimodal features",
}


class EmptyTrainSplit(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    epochs: int = 800
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    mode: Mode = Mode.MULTIMODAL

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, ad.Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    config: TrainConfig,
) -> AdamState:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    b1, b2 = config.beta1, config.beta2
    for name, tensor in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(tensor.data)
        if g.shape != tensor.data.shape:
            raise ad.ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {tensor.data.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / (1.0 - b1**t)
        v_hat = state.v[name] / (1.0 - b2**t)
        tensor.data = tensor.data - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return state


def f1_score(predictions, labels, positive_class: int = 0):
    """(precision, recall, f1, macro_f1) with zero-division → 0 convention."""
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.size == 0:
        raise EmptyInput("cannot score zero examples")
    if pred.shape != lab.shape:
        raise ad.ShapeMismatch(f"predictions {pred.shape} vs labels {lab.shape}")

    def binary_f1(pos):
        tp = int(((pred == pos) & (lab == pos)).sum())
        fp = int(((pred == pos) & (lab != pos)).sum())
        fn = int(((pred != pos) & (lab == pos)).sum())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return p, r, f

    p, r, f = binary_f1(positive_class)
    classes = sorted({int(positive_class), *np.unique(lab).tolist()})
    macro = float(np.mean([binary_f1(c)[2] for c in classes]))
    return p, r, f, macro


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)


def _bce_targets(labels: np.ndarray) -> np.ndarray:
    # the model outputs P(Misinformation) and Misinformation is encoded 0,
    # so the BCE target is 1 exactly where the label is 0
    return np.where(labels == 0, 1.0, 0.0)


def train(graph, features, labels, splits, config: TrainConfig):
    """Exactly config.epochs full-batch epochs; returns (model, history)."""
    labels = np.asarray(labels)
    splits = np.asarray(splits)
    labeled = labels >= 0
    train_mask = labeled & (splits == int(SplitTag.TRAIN))
    val_mask = labeled & (splits == int(SplitTag.VAL))
    if not train_mask.any():
        raise EmptyTrainSplit("no labeled nodes in the train split")

    model = init_model(config.mode, config.seed)
    params = model.trainable_parameters()
    state = AdamState()
    targets = _bce_targets(labels)
    history = TrainHistory()

    for epoch in range(1, config.epochs + 1):
        tape = ad.Tape()
        p, _ = model_forward(model, graph, features, tape)
        loss = ad.bce_loss(p, targets, train_mask, tape)
        grads = ad.backward(tape, loss)
        named = {name: grads[t] for name, t in params.items() if t in grads}
        adam_step(params, named, state, epoch, config)
        history.loss.append(float(loss.data))
        if val_mask.any():
            preds = predict(p.data[val_mask])
            history.val_f1.append(f1_score(preds, labels[val_mask])[2])
        else:
            history.val_f1.append(0.0)
    return model, history


def evaluate_split(model, graph, features, labels, splits, split_tag=SplitTag.TEST):
    """Metrics over the labeled nodes of one split."""
    labels = np.asarray(labels)
    splits = np.asarray(splits)
    mask = (labels >= 0) & (splits == int(split_tag))
    if not mask.any():
        raise EmptyInput(f"no labeled nodes in split {split_tag}")
    p, _ = model_forward(model, graph, features)
    preds = predict(p.data[mask])
    precision, recall, f1, macro = f1_score(preds, labels[mask])
    return {
        "n": int(mask.sum()),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "macro_f1": macro,
    }


# ---------------------------------------------------------------------------
# ablation harness


@dataclass
class RunReport:
    """Per-mode, per-seed test F1 table (Table-1-shaped aggregation)."""

    cells: dict[Mode, dict]  # mode -> {seeds, f1, macro_f1, mean, std, n}

    def to_json(self) -> str:
        payload = {
            mode.value: {
                "seeds": cell["seeds"],
                "f1": cell["f1"],
                "macro_f1": cell["macro_f1"],
                "mean": cell["mean"],
                "std": cell["std"],
                "n": cell["n"],
            }
            for mode, cell in self.cells.items()
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_table(self) -> str:
        width = max(len(v) for v in MODE_DISPLAY.values())
        lines = [f"{'Modality':<{width}}  F1 (mean ± std)"]
        for mode, cell in self.cells.items():
            lines.append(
                f"{MODE_DISPLAY[mode]:<{width}}  {cell['mean']:.4f} ± {cell['std']:.4f}"
            )
        return "\n".join(lines)


def aggregate_cell(seeds, f1s, macros) -> dict:
    f1s = [float(x) for x in f1s]
    n = len(f1s)
    mean = float(np.mean(f1s))
    std = float(np.std(f1s, ddof=1)) if n > 1 else 0.0
    return {
        "seeds": list(seeds),
        "f1": f1s,
        "macro_f1": [float(x) for x in macros],
        "mean": mean,
        "std": std,
        "n": n,
    }


def run_ablation(bundle, modes=None, seeds=(0, 1, 2, 3, 4), config: TrainConfig | None = None) -> RunReport:
    """Train per (mode, seed) on the bundle; aggregate test-split F1."""
    modes = list(modes) if modes is not None else [Mode.GRAPH_ONLY, Mode.TEXT_ONLY, Mode.MULTIMODAL]
    base = config or TrainConfig()
    cells: dict[Mode, dict] = {}
    for mode in modes:
        f1s, macros = [], []
        for seed in seeds:
            cfg = TrainConfig(
                learning_rate=base.learning_rate, epochs=base.epochs,
                beta1=base.beta1, beta2=base.beta2, eps=base.eps,
                seed=seed, mode=mode,
            )
            model, _ = train(bundle.graph, bundle.features, bundle.graph.labels, bundle.graph.splits, cfg)
            metrics = evaluate_split(model, bundle.graph, bundle.features, bundle.graph.labels, bundle.graph.splits)
            f1s.append(metrics["f1"])
            macros.append(metrics["macro_f1"])
        cells[mode] = aggregate_cell(seeds, f1s, macros)
    return RunReport(cells=cells)
